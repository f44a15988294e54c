#include "chaosld/ensembles.hpp"

#include <atomic>
#include <cmath>
#include <nlohmann/json.hpp>

#include "chaosld/parallel.hpp"
#include "chaosld/rng.hpp"

namespace chaosld {

namespace {

constexpr int kMaxDrawsPerSample = 10000;

nlohmann::json section_to_json(const SectionSpec& sec) {
    return nlohmann::json{{"slice_q", sec.slice_q},
                          {"slice_p", sec.slice_p},
                          {"fixed", sec.fixed},
                          {"fixed_value", sec.fixed_value},
                          {"constrained", sec.constrained},
                          {"sign", sec.sign}};
}

SectionSpec section_from_json(const nlohmann::json& j) {
    SectionSpec sec;
    sec.slice_q = j.at("slice_q").get<int>();
    sec.slice_p = j.at("slice_p").get<int>();
    sec.fixed = j.at("fixed").get<int>();
    sec.fixed_value = j.at("fixed_value").get<double>();
    sec.constrained = j.at("constrained").get<int>();
    sec.sign = j.at("sign").get<double>();
    for (int idx : {sec.slice_q, sec.slice_p, sec.fixed, sec.constrained})
        if (idx < 0 || idx > 3)
            throw ConfigError("section indices must lie in [0, 3]");
    if (sec.sign != 1.0 && sec.sign != -1.0)
        throw ConfigError("section sign must be +1 or -1");
    return sec;
}

} // namespace

void EnsembleSpec::validate() const {
    if (cases.empty()) throw ConfigError("ensemble needs at least one case");
    for (double c : cases)
        if (!std::isfinite(c)) throw ConfigError("ensemble case is not finite");
    if (is_map(system.kind))
        for (double c : cases)
            if (c < 0.0) throw ConfigError("map stochasticity K must be >= 0");
    if (n_per_case < 1) throw ConfigError("n_per_case must be >= 1");
    if (!(stencil_sigma > 0.0))
        throw ConfigError("stencil sigma must be positive");
    if (tau_ld < 0.0 || t_sali < 0.0)
        throw ConfigError("horizons must be nonnegative");
    integrator.validate();
}

double EnsembleSpec::resolved_tau() const {
    if (tau_ld > 0.0) return tau_ld;
    switch (system.kind) {
    case SystemKind::HenonHeiles: return 1000.0;
    case SystemKind::StandardMap: return 5000.0;
    default: return 700.0;
    }
}

double EnsembleSpec::resolved_t_sali() const {
    return t_sali > 0.0 ? t_sali : 1e5;
}

double EnsembleSpec::resolved_threshold() const {
    return std::isnan(sali_threshold) ? default_sali_threshold(system.kind)
                                      : sali_threshold;
}

SystemSpec EnsembleSpec::case_system(std::size_t case_index) const {
    if (case_index >= cases.size())
        throw ConfigError("case index out of range");
    if (!is_map(system.kind)) return system;
    return SystemSpec::standard_map(cases[case_index]);
}

std::string EnsembleSpec::to_json() const {
    nlohmann::json j;
    j["system"] = nlohmann::json::parse(system.to_json());
    j["cases"] = cases;
    j["n_per_case"] = n_per_case;
    if (!is_map(system.kind)) j["section"] = section_to_json(section);
    j["rng_seed"] = rng_seed;
    j["tau_ld"] = tau_ld;
    j["t_sali"] = t_sali;
    if (!std::isnan(sali_threshold)) j["sali_threshold"] = sali_threshold;
    j["stencil_sigma"] = stencil_sigma;
    j["integrator"] = {{"abs_tol", integrator.abs_tol},
                       {"rel_tol", integrator.rel_tol}};
    return j.dump(2);
}

EnsembleSpec EnsembleSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ConfigError("ensemble spec is not a JSON object");

    EnsembleSpec spec;
    if (!j.contains("system"))
        throw ConfigError("ensemble spec needs a 'system'");
    spec.system = SystemSpec::from_json(j["system"].dump());
    j.erase("system");

    if (!j.contains("cases") || !j["cases"].is_array() || j["cases"].empty())
        throw ConfigError("ensemble spec needs a non-empty 'cases' array");
    for (const auto& c : j["cases"]) {
        if (!c.is_number()) throw ConfigError("ensemble cases must be numbers");
        spec.cases.push_back(c.get<double>());
    }
    j.erase("cases");

    auto take_num = [&j](const char* name, double fallback) {
        if (!j.contains(name)) return fallback;
        if (!j[name].is_number())
            throw ConfigError(std::string("'") + name + "' must be a number");
        double v = j[name].get<double>();
        j.erase(name);
        return v;
    };

    spec.n_per_case = static_cast<std::size_t>(take_num("n_per_case", 500.0));
    if (j.contains("rng_seed")) {
        // seeds use the full 64-bit range; a double round trip would clip
        // them to 53 bits and silently change every derived stream
        const auto& js = j["rng_seed"];
        if (!js.is_number_unsigned() &&
            !(js.is_number_integer() && js.get<std::int64_t>() >= 0))
            throw ConfigError("'rng_seed' must be a non-negative integer");
        spec.rng_seed = js.get<std::uint64_t>();
        j.erase("rng_seed");
    }
    spec.tau_ld = take_num("tau_ld", 0.0);
    spec.t_sali = take_num("t_sali", 0.0);
    spec.sali_threshold = take_num(
        "sali_threshold", std::numeric_limits<double>::quiet_NaN());
    spec.stencil_sigma = take_num("stencil_sigma", 1e-4);

    if (j.contains("integrator")) {
        const auto& ji = j["integrator"];
        if (!ji.is_object()) throw ConfigError("'integrator' must be an object");
        spec.integrator.abs_tol = ji.value("abs_tol", 1e-12);
        spec.integrator.rel_tol = ji.value("rel_tol", 1e-12);
        j.erase("integrator");
    }
    if (j.contains("section")) {
        spec.section = section_from_json(j["section"]);
        j.erase("section");
    } else if (!is_map(spec.system.kind)) {
        spec.section = default_section(spec.system);
    }
    if (!j.empty())
        throw ConfigError("unknown ensemble spec key '" + j.begin().key() +
                          "'");
    spec.validate();
    return spec;
}

namespace {

Vec2 draw_in_box(SplitMix64& g, const SliceBounds& box) {
    double q = g.next_double(box.q_lo, box.q_hi);
    double p = g.next_double(box.p_lo, box.p_hi);
    return Vec2(q, p);
}

/// first feasible slice point of this sample's stream; flows reject points
/// outside the allowed region of the energy shell
SamplePoint draw_feasible(const EnsembleSpec& spec, const SystemSpec& sys,
                          const SliceBounds& box, std::size_t case_index,
                          SplitMix64& g, int& draws_left) {
    bool map = is_map(sys.kind);
    double e = map ? 0.0 : spec.cases[case_index];
    while (draws_left-- > 0) {
        Vec2 pt = draw_in_box(g, box);
        if (map) {
            Vec4 s = Vec4::Zero();
            s.head<2>() = pt;
            return SamplePoint{case_index, pt, s};
        }
        auto s = solve_constrained_momentum(sys, spec.section, pt, e);
        if (s) return SamplePoint{case_index, pt, *s};
    }
    throw DataError(
        "degenerate case: slice-point feasibility rate below 1e-4");
}

} // namespace

std::vector<SamplePoint> sample_ensemble(const EnsembleSpec& spec) {
    spec.validate();
    std::vector<SamplePoint> out;
    out.reserve(spec.cases.size() * spec.n_per_case);
    for (std::size_t c = 0; c < spec.cases.size(); ++c) {
        SystemSpec sys = spec.case_system(c);
        SliceBounds box =
            is_map(sys.kind)
                ? slice_bounds(sys, spec.section, 0.0)
                : slice_bounds(sys, spec.section, spec.cases[c]);
        for (std::size_t i = 0; i < spec.n_per_case; ++i) {
            SplitMix64 g(derive_stream(spec.rng_seed, c + 1, i));
            int draws_left = kMaxDrawsPerSample;
            out.push_back(draw_feasible(spec, sys, box, c, g, draws_left));
        }
    }
    return out;
}

namespace {

IndicatorRecord compute_record(const EnsembleSpec& spec, const SystemSpec& sys,
                               const SamplePoint& sample) {
    bool map = is_map(sys.kind);
    double tau = spec.resolved_tau();
    double threshold = spec.resolved_threshold();

    IndicatorRecord rec;
    rec.system = sys;
    rec.energy = map ? std::numeric_limits<double>::quiet_NaN()
                     : spec.cases[sample.case_index];
    rec.slice = sample.slice;
    rec.horizon = tau;

    NeighborStencil st = make_stencil(sample.slice, spec.stencil_sigma);
    if (map) {
        auto n_ld = static_cast<std::size_t>(std::llround(tau));
        auto n_sali =
            static_cast<std::size_t>(std::llround(spec.resolved_t_sali()));
        rec.ld_center =
            iterate_map_ld(sys, st.points[0], n_ld, TimeDirection::Forward).ld;
        for (int i = 0; i < 4; ++i)
            rec.ld_neighbors[i] =
                iterate_map_ld(sys, st.points[i + 1], n_ld,
                               TimeDirection::Forward)
                    .ld;
        rec.sali_log10 =
            iterate_map_sali(sys, st.points[0], n_sali).final_log10();
    } else {
        auto states = embed_stencil(sys, spec.section, st,
                                    spec.cases[sample.case_index]);
        rec.ld_center = propagate_ld(sys, states[0], tau,
                                     TimeDirection::Forward, spec.integrator)
                            .ld;
        for (int i = 0; i < 4; ++i)
            rec.ld_neighbors[i] =
                propagate_ld(sys, states[i + 1], tau, TimeDirection::Forward,
                             spec.integrator)
                    .ld;
        rec.sali_log10 = propagate_sali(sys, states[0],
                                        spec.resolved_t_sali(), 1.2,
                                        spec.integrator)
                             .final_log10();
    }
    rec.indicators =
        compute_indicators(rec.ld_center, rec.ld_neighbors, spec.stencil_sigma);
    rec.log10_s = rec.indicators.s > 0.0
                      ? std::log10(rec.indicators.s)
                      : std::numeric_limits<double>::quiet_NaN();
    rec.label = label_by_sali(rec.sali_log10, threshold);
    return rec;
}

} // namespace

LabeledDataset generate_dataset(const EnsembleSpec& spec, int threads) {
    spec.validate();
    std::size_t total = spec.cases.size() * spec.n_per_case;

    LabeledDataset out;
    out.spec = spec;
    out.records.resize(total);
    std::atomic<std::size_t> discarded{0};

    // per-case boxes resolved up front (slice_bounds may throw on bad energy)
    std::vector<SystemSpec> case_sys;
    std::vector<SliceBounds> case_box;
    for (std::size_t c = 0; c < spec.cases.size(); ++c) {
        case_sys.push_back(spec.case_system(c));
        case_box.push_back(is_map(spec.system.kind)
                               ? slice_bounds(case_sys[c], spec.section, 0.0)
                               : slice_bounds(case_sys[c], spec.section,
                                              spec.cases[c]));
    }

    parallel_for(total, threads, [&](std::size_t idx) {
        std::size_t c = idx / spec.n_per_case;
        std::size_t i = idx % spec.n_per_case;
        SplitMix64 g(derive_stream(spec.rng_seed, c + 1, i));
        int draws_left = kMaxDrawsPerSample;
        for (;;) {
            SamplePoint sample =
                draw_feasible(spec, case_sys[c], case_box[c], c, g, draws_left);
            try {
                out.records[idx] = compute_record(spec, case_sys[c], sample);
                return;
            } catch (const StencilInfeasible&) {
                discarded.fetch_add(1, std::memory_order_relaxed);
            } catch (const IntegrationFailure&) {
                discarded.fetch_add(1, std::memory_order_relaxed);
            }
            if (draws_left <= 0)
                throw DataError(
                    "degenerate case: stencil feasibility rate below 1e-4");
        }
    });

    out.discarded_count = discarded.load();
    return out;
}

ThresholdResult find_threshold(const std::vector<double>& values, int bins,
                               int smooth_window) {
    if (bins < 10) throw ConfigError("need at least 10 bins");
    if (smooth_window < 1 || smooth_window % 2 == 0)
        throw ConfigError("smoothing window must be odd and positive");

    std::vector<double> v;
    v.reserve(values.size());
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    if (v.size() < 200)
        throw DataError("need at least 200 finite values for a threshold");

    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (!(hi > lo)) throw DataError("all values identical: no threshold");
    const double range = hi - lo;

    auto histogram = [&](double a, double b, int nb) {
        std::vector<std::size_t> counts(nb, 0);
        double width = (b - a) / nb;
        for (double x : v) {
            if (x < a || x > b) continue;
            int k = std::min(nb - 1, static_cast<int>((x - a) / width));
            ++counts[k];
        }
        return counts;
    };
    auto smooth = [&](const std::vector<std::size_t>& counts) {
        int nb = static_cast<int>(counts.size());
        int half = smooth_window / 2;
        std::vector<double> s(nb, 0.0);
        for (int i = 0; i < nb; ++i) {
            int a = std::max(0, i - half), b = std::min(nb - 1, i + half);
            double acc = 0.0;
            for (int k = a; k <= b; ++k)
                acc += static_cast<double>(counts[k]);
            s[i] = acc / (b - a + 1);
        }
        return s;
    };
    // median index of the minimum-count run between the peaks: stable under
    // long empty valleys
    auto valley_index = [](const std::vector<double>& s, int a, int b) {
        double best = s[a];
        for (int i = a; i <= b; ++i) best = std::min(best, s[i]);
        std::vector<int> ties;
        for (int i = a; i <= b; ++i)
            if (s[i] == best) ties.push_back(i);
        return ties[ties.size() / 2];
    };

    // first pass: full range, locate the two dominant smoothed peaks
    ThresholdResult res;
    res.counts = histogram(lo, hi, bins);
    res.bin_edges.resize(bins + 1);
    double width0 = range / bins;
    for (int i = 0; i <= bins; ++i) res.bin_edges[i] = lo + i * width0;

    std::vector<double> s = smooth(res.counts);
    std::vector<std::pair<double, int>> maxima; // (height, index)
    for (int i = 0; i < bins; ++i) {
        double left = i > 0 ? s[i - 1] : -1.0;
        double right = i < bins - 1 ? s[i + 1] : -1.0;
        if (s[i] > left && s[i] >= right && s[i] > 0.0)
            maxima.emplace_back(s[i], i);
    }
    std::sort(maxima.begin(), maxima.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    int p1 = -1, p2 = -1;
    if (!maxima.empty()) {
        p1 = maxima[0].second;
        for (std::size_t m = 1; m < maxima.size(); ++m) {
            if (std::abs(maxima[m].second - p1) >= 5 &&
                maxima[m].first >= 0.05 * maxima[0].first) {
                p2 = maxima[m].second;
                break;
            }
        }
    }
    if (p1 < 0 || p2 < 0)
        throw DataError("histogram has no second peak: nothing to separate");
    if (p2 < p1) std::swap(p1, p2);

    auto center = [&](int i) { return lo + (i + 0.5) * width0; };
    res.peak_low = center(p1);
    res.peak_high = center(p2);

    int vi = valley_index(s, p1 + 1, p2 - 1);
    res.threshold = center(vi);
    res.iterations = 1;
    res.converged = false;

    // refinement: re-bin the inter-peak window at doubling resolution until
    // the valley position settles
    double width = width0;
    for (int pass = 2; pass <= 10; ++pass) {
        width /= 2.0;
        double a = res.peak_low, b = res.peak_high;
        int nb = std::max(10, static_cast<int>(std::ceil((b - a) / width)));
        std::vector<std::size_t> counts = histogram(a, b, nb);
        std::vector<double> sm = smooth(counts);
        int idx = valley_index(sm, 1, nb - 2);
        double next = a + (idx + 0.5) * ((b - a) / nb);
        double moved = std::abs(next - res.threshold);
        res.threshold = next;
        res.iterations = pass;
        if (moved < 0.01 * range) {
            res.converged = true;
            break;
        }
    }
    return res;
}

// ---- desk-scale transfer experiment -----------------------------------------

std::vector<double> pendulum_energy_grid(const SystemSpec& sys) {
    // Five levels spread uniformly from the potential minimum to the upright
    // (index-2) saddle, then fifteen more climbing past it in unit steps.
    // The band above the saddle matters: rotor orbits there split into
    // weakly chaotic layers and regular islands whose indicator values
    // stretch both class distributions, and skipping it leaves the
    // classifier trained on the librational regime only.
    const double vmin = potential(sys, 0.0, 0.0);
    const double vsad2 = potential(sys, M_PI, M_PI);
    std::vector<double> grid;
    for (int k = 1; k <= 5; ++k)
        grid.push_back(vmin + k * (vsad2 - vmin) / 5.0);
    for (int k = 1; k <= 15; ++k)
        grid.push_back(vsad2 + k);
    return grid;
}

std::vector<EnsembleSpec> pendulum_training_campaign(std::size_t n_per_energy,
                                                     std::uint64_t seed) {
    const std::pair<double, double> cases[] = {
        {1.0, 1.0}, {2.0, 1.0}, {1.0, 2.0}, {0.5, 0.5}};
    std::vector<EnsembleSpec> specs;
    for (std::size_t c = 0; c < 4; ++c) {
        EnsembleSpec spec;
        spec.system =
            SystemSpec::double_pendulum(cases[c].first, cases[c].second);
        spec.section = default_section(spec.system);
        spec.cases = pendulum_energy_grid(spec.system);
        spec.n_per_case = n_per_energy;
        spec.rng_seed = derive_stream(seed, 100 + c);
        spec.tau_ld = 700.0;
        spec.t_sali = 2000.0;
        specs.push_back(std::move(spec));
    }
    return specs;
}

EnsembleSpec henon_heiles_transfer_spec(std::size_t n_per_case,
                                        std::uint64_t seed) {
    EnsembleSpec spec;
    spec.system = SystemSpec::henon_heiles();
    spec.section = default_section(spec.system);
    spec.cases = {1.0 / 20, 1.0 / 15, 1.0 / 12, 1.0 / 10, 1.0 / 8};
    spec.n_per_case = n_per_case;
    spec.rng_seed = derive_stream(seed, 200);
    spec.tau_ld = 1000.0;
    spec.t_sali = 1e4;
    return spec;
}

EnsembleSpec standard_map_transfer_spec(std::size_t n_per_case,
                                        std::uint64_t seed) {
    EnsembleSpec spec;
    spec.system = SystemSpec::standard_map(1.5);
    spec.cases = {0.5, 0.971635, 1.5};
    spec.n_per_case = n_per_case;
    spec.rng_seed = derive_stream(seed, 201);
    spec.tau_ld = 5000.0;
    spec.t_sali = 1e5;
    return spec;
}

} // namespace chaosld
