// chaosld: generate labeled chaos datasets, find decision thresholds, train
// and evaluate the linear classifier, and export section / SALI plot data.
//
// Every subcommand accepts --config <json> whose keys mirror the flag names;
// explicit flags override config values, and the effective configuration is
// echoed into the output directory so any run can be replayed exactly.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chaosld/dataset_io.hpp>
#include <chaosld/ensembles.hpp>
#include <chaosld/indicators.hpp>
#include <chaosld/parallel.hpp>
#include <chaosld/propagation.hpp>
#include <chaosld/rng.hpp>
#include <chaosld/svm.hpp>
#include <chaosld/systems.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chaosld;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt17(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
}

/// Removes files written by a failed run; disarmed once the command succeeds.
class Cleanup {
  public:
    ~Cleanup() {
        if (!armed_) return;
        for (const auto& p : files_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
    void track(const std::string& path) { files_.push_back(path); }
    void disarm() { armed_ = false; }

  private:
    std::vector<std::string> files_;
    bool armed_ = true;
};

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ConfigError("'" + path + "' is not a JSON object");
    return j;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
    if (!f.flush()) throw IoError("failed writing '" + path + "'");
}

std::string prepare_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec)
        throw IoError("cannot create output directory '" + out +
                      "': " + ec.message());
    return out;
}

void echo_config(const std::string& out, const std::string& cmd,
                 const json& effective) {
    write_text_file(out + "/" + cmd + ".config.json", effective.dump(2) + "\n");
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& what) {
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw ConfigError("unknown key '" + item.key() + "' in " + what);
    }
}

/// Pull the --config value out of argv before CLI11 runs, so config values
/// can seed the bound variables and explicit flags still win.
std::string prescan_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return {};
}

Vec2 parse_pair(const std::string& text, const char* what) {
    std::istringstream in(text);
    double a, b;
    char comma;
    if (!(in >> a >> comma >> b) || comma != ',' || !(in >> std::ws).eof())
        throw ConfigError(std::string(what) + " must look like 'v1,v2', got '" +
                          text + "'");
    return Vec2(a, b);
}

// ---- shared system flags ----------------------------------------------------

struct SystemFlags {
    std::string system; // kind name; empty keeps the config/default system
    double alpha = kNan, sigma = kNan, beta = kNan, delta = kNan;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--system", system,
                        "double-pendulum | four-well | henon-heiles | "
                        "standard-map");
        cmd->add_option("--alpha", alpha, "pendulum length ratio / well depth");
        cmd->add_option("--sigma", sigma, "pendulum mass ratio");
        cmd->add_option("--beta", beta, "four-well coupling");
        cmd->add_option("--delta", delta, "four-well tilt");
    }

    /// Overrides `sys` in place; a --system flag resets to that kind's
    /// default parameters first.
    void apply(SystemSpec& sys) const {
        if (!system.empty()) {
            switch (kind_from_name(system)) {
            case SystemKind::DoublePendulum:
                sys = SystemSpec::double_pendulum(1.0, 1.0);
                break;
            case SystemKind::FourWell:
                sys = SystemSpec::four_well(1.0, 1.0, 0.0);
                break;
            case SystemKind::HenonHeiles:
                sys = SystemSpec::henon_heiles();
                break;
            case SystemKind::StandardMap:
                sys = SystemSpec::standard_map(1.0);
                break;
            }
        }
        if (!std::isnan(alpha)) sys.alpha = alpha;
        if (!std::isnan(sigma)) sys.sigma = sigma;
        if (!std::isnan(beta)) sys.beta = beta;
        if (!std::isnan(delta)) sys.delta = delta;
    }
};

std::vector<IndicatorRecord> read_pooled(const std::vector<std::string>& paths,
                                         EnsembleSpec* first_spec = nullptr) {
    std::vector<IndicatorRecord> records;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        auto ds = read_dataset(paths[i]);
        if (first_spec && i == 0) *first_spec = ds.spec;
        records.insert(records.end(), ds.records.begin(), ds.records.end());
    }
    return records;
}

// ---- generate ---------------------------------------------------------------

int cmd_generate(const EnsembleSpec& spec, const std::string& out,
                 const std::string& csv, int threads) {
    auto t0 = std::chrono::steady_clock::now();
    prepare_out_dir(out);
    json effective{{"command", "generate"},
                   {"spec", json::parse(spec.to_json())},
                   {"out", out},
                   {"csv", csv},
                   {"threads", threads}};
    echo_config(out, "generate", effective);

    Cleanup cleanup;
    const std::string path = out + "/" + csv;
    cleanup.track(path);
    cleanup.track(path + ".meta.json");

    auto ds = generate_dataset(spec, threads);
    write_dataset(ds, path);
    cleanup.disarm();

    std::size_t chaotic = 0;
    for (const auto& r : ds.records)
        if (r.label == Label::Chaotic) ++chaotic;
    std::printf("wrote %s: %zu records (%zu regular, %zu chaotic), "
                "%zu discarded, %.1f s\n",
                path.c_str(), ds.records.size(),
                ds.records.size() - chaotic, chaotic, ds.discarded_count,
                elapsed_s(t0));
    return 0;
}

// ---- threshold --------------------------------------------------------------

int cmd_threshold(const std::string& data, const std::string& column,
                  int bins, int smooth_window, const std::string& out) {
    if (column != "log10_S" && column != "sali_log10")
        throw ConfigError("column must be log10_S or sali_log10, got '" +
                          column + "'");
    prepare_out_dir(out);
    json effective{{"command", "threshold"}, {"data", data},
                   {"column", column},      {"bins", bins},
                   {"smooth_window", smooth_window},
                   {"out", out}};
    echo_config(out, "threshold", effective);

    auto ds = read_dataset(data);
    std::vector<double> values;
    values.reserve(ds.records.size());
    for (const auto& r : ds.records)
        values.push_back(column == "log10_S" ? r.log10_s : r.sali_log10);

    auto res = find_threshold(values, bins, smooth_window);

    Cleanup cleanup;
    const std::string jpath = out + "/threshold.json";
    const std::string hpath = out + "/histogram.csv";
    cleanup.track(jpath);
    cleanup.track(hpath);

    json rep{{"column", column},
             {"records", ds.records.size()},
             {"threshold", res.threshold},
             {"peak_low", res.peak_low},
             {"peak_high", res.peak_high},
             {"converged", res.converged},
             {"iterations", res.iterations}};
    write_text_file(jpath, rep.dump(2) + "\n");

    std::ostringstream h;
    h << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < res.counts.size(); ++i)
        h << fmt17(res.bin_edges[i]) << ',' << fmt17(res.bin_edges[i + 1])
          << ',' << res.counts[i] << '\n';
    write_text_file(hpath, h.str());
    cleanup.disarm();

    std::printf("threshold(%s) = %.6g  peaks %.6g / %.6g  %s after %d pass"
                "es\n",
                column.c_str(), res.threshold, res.peak_low, res.peak_high,
                res.converged ? "converged" : "not converged",
                res.iterations);
    return 0;
}

// ---- train ------------------------------------------------------------------

FeatureMatrix subsample(const FeatureMatrix& full, double fraction,
                        std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw ConfigError("train fraction must lie in (0, 1]");
    if (fraction == 1.0) return full;
    const std::size_t n = static_cast<std::size_t>(full.x.rows());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    SplitMix64 g(derive_stream(seed, 1));
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(idx[i], idx[g.next_below(i + 1)]);
    std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * n)));
    idx.resize(std::min(k, n));
    std::sort(idx.begin(), idx.end());

    FeatureMatrix sub;
    sub.x.resize(static_cast<long>(idx.size()), full.x.cols());
    sub.y.resize(static_cast<long>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        sub.x.row(static_cast<long>(i)) = full.x.row(static_cast<long>(idx[i]));
        sub.y[static_cast<long>(i)] = full.y[static_cast<long>(idx[i])];
        sub.source_rows.push_back(full.source_rows[idx[i]]);
    }
    return sub;
}

int cmd_train(const std::vector<std::string>& data, const std::string& recipe,
              const TrainOptions& base_opts, double fraction,
              const std::string& out, std::string model_name) {
    auto t0 = std::chrono::steady_clock::now();
    const FeatureSet set = feature_set_from_name(recipe);
    prepare_out_dir(out);
    if (model_name.empty()) model_name = "model_" + recipe + ".json";
    const std::string curve_name = "curve_" + recipe + ".csv";

    json effective{{"command", "train"},
                   {"data", data},
                   {"recipe", recipe},
                   {"epochs", base_opts.epochs},
                   {"lr0", base_opts.lr0},
                   {"batch", base_opts.batch},
                   {"seed", base_opts.seed},
                   {"train_fraction", fraction},
                   {"out", out},
                   {"model_name", model_name}};
    echo_config(out, "train", effective);

    auto records = read_pooled(data);
    auto features = extract_features(records, set);
    auto used = subsample(features, fraction, base_opts.seed);

    TrainOptions opts = base_opts;
    std::string sha;
    for (const auto& p : data) {
        if (!sha.empty()) sha += ",";
        sha += sha256_file(p);
    }
    opts.dataset_sha = sha;

    auto res = fit(used, set, opts);

    Cleanup cleanup;
    const std::string mpath = out + "/" + model_name;
    const std::string cpath = out + "/" + curve_name;
    cleanup.track(mpath);
    cleanup.track(cpath);
    save_model(res.model, mpath);
    std::ostringstream curve;
    curve << "epoch,mean_hinge_loss\n";
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
        curve << e << ',' << fmt17(res.epoch_loss[e]) << '\n';
    write_text_file(cpath, curve.str());
    cleanup.disarm();

    std::printf("trained %s on %ld/%ld rows: final loss %.3e, %.1f s -> %s\n",
                recipe.c_str(), static_cast<long>(used.x.rows()),
                static_cast<long>(features.x.rows()), res.epoch_loss.back(),
                elapsed_s(t0), mpath.c_str());
    return 0;
}

// ---- evaluate ---------------------------------------------------------------

int cmd_evaluate(const std::string& model_path,
                 const std::vector<std::string>& data,
                 const std::string& out) {
    prepare_out_dir(out);
    json effective{{"command", "evaluate"},
                   {"model", model_path},
                   {"data", data},
                   {"out", out}};
    echo_config(out, "evaluate", effective);

    auto model = load_model(model_path);
    auto records = read_pooled(data);
    auto rep = evaluate(model, records);

    Cleanup cleanup;
    const std::string rpath = out + "/report.json";
    const std::string mpath = out + "/misclassified.csv";
    cleanup.track(rpath);
    cleanup.track(mpath);

    json j = json::parse(rep.to_json());
    j["model"] = model_path;
    j["recipe"] = feature_set_name(model.features);
    j["data"] = data;
    write_text_file(rpath, j.dump(2) + "\n");

    std::ostringstream mis;
    mis << "q1,q2,margin,true_label\n";
    for (const auto& m : rep.misclassified)
        mis << fmt17(m.slice[0]) << ',' << fmt17(m.slice[1]) << ','
            << fmt17(m.margin) << ',' << (m.truth == Label::Chaotic ? 1 : 0)
            << '\n';
    write_text_file(mpath, mis.str());
    cleanup.disarm();

    std::printf("accuracy %.4f  (tp %zu tn %zu fp %zu fn %zu, skipped %zu)\n",
                rep.accuracy, rep.tp, rep.tn, rep.fp, rep.fn, rep.skipped);
    for (const auto& c : rep.per_case)
        std::printf("  case %-12.6g %zu/%zu = %.4f\n", c.case_value,
                    c.correct, c.total,
                    static_cast<double>(c.correct) /
                        static_cast<double>(c.total));
    return 0;
}

// ---- poincare ---------------------------------------------------------------

int cmd_poincare(const SystemSpec& sys, double energy,
                 const std::vector<std::string>& ic_flags,
                 std::size_t n_orbits, std::size_t crossings, double t_max,
                 std::uint64_t seed, int threads, const IntegratorConfig& icfg,
                 const std::string& out, const std::string& csv) {
    prepare_out_dir(out);
    json effective{{"command", "poincare"},
                   {"system", json::parse(sys.to_json())},
                   {"energy", energy},
                   {"ic", ic_flags},
                   {"n_orbits", n_orbits},
                   {"crossings", crossings},
                   {"t_max", t_max},
                   {"seed", seed},
                   {"threads", threads},
                   {"abs_tol", icfg.abs_tol},
                   {"rel_tol", icfg.rel_tol},
                   {"out", out},
                   {"csv", csv}};
    echo_config(out, "poincare", effective);

    const bool map = is_map(sys.kind);
    if (!map && std::isnan(energy))
        throw ConfigError("--energy is required for a continuous system");
    if (!ic_flags.empty() && n_orbits > 0)
        throw ConfigError("give either --ic values or --n-orbits, not both");
    if (ic_flags.empty() && n_orbits == 0)
        throw ConfigError("need --ic values or --n-orbits");

    const SectionSpec sec = map ? SectionSpec{} : default_section(sys);

    std::vector<Vec2> starts;
    if (!ic_flags.empty()) {
        for (const auto& s : ic_flags) starts.push_back(parse_pair(s, "--ic"));
    } else {
        EnsembleSpec sampler;
        sampler.system = sys;
        sampler.cases = {map ? sys.K : energy};
        sampler.n_per_case = n_orbits;
        if (!map) sampler.section = sec;
        sampler.rng_seed = seed;
        for (const auto& p : sample_ensemble(sampler))
            starts.push_back(p.slice);
    }

    std::vector<std::vector<Vec2>> rows(starts.size());
    std::vector<std::string> failures(starts.size());
    parallel_for(starts.size(), threads, [&](std::size_t i) {
        try {
            if (map) {
                Vec2 s(wrap_unit(starts[i][0]), wrap_unit(starts[i][1]));
                rows[i].reserve(crossings);
                for (std::size_t n = 0; n < crossings; ++n) {
                    rows[i].push_back(s);
                    s = map_step(sys, s);
                }
            } else {
                auto state =
                    solve_constrained_momentum(sys, sec, starts[i], energy);
                if (!state)
                    throw DataError("initial condition outside the allowed "
                                    "region");
                rows[i] =
                    poincare_section(sys, *state, sec, crossings, t_max, icfg);
            }
        } catch (const std::exception& e) {
            failures[i] = e.what(); // logged below; the run continues
        }
    });

    Cleanup cleanup;
    const std::string path = out + "/" + csv;
    cleanup.track(path);
    std::ostringstream body;
    body << "orbit_id,q1,q2\n";
    std::size_t points = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& p : rows[i]) {
            body << i << ',' << fmt17(p[0]) << ',' << fmt17(p[1]) << '\n';
            ++points;
        }
    }
    write_text_file(path, body.str());
    cleanup.disarm();

    std::size_t failed = 0;
    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (failures[i].empty()) continue;
        ++failed;
        std::fprintf(stderr, "orbit %zu failed: %s\n", i, failures[i].c_str());
    }
    std::printf("wrote %s: %zu points from %zu orbits (%zu failed)\n",
                path.c_str(), points, starts.size(), failed);
    return 0;
}

// ---- sali-trace -------------------------------------------------------------

json guarded_fit(const SaliSeries& series, AsymptoteKind kind) {
    try {
        return fit_sali_asymptote(series, kind);
    } catch (const DataError&) {
        return nullptr;
    }
}

int cmd_sali_trace(const SystemSpec& sys, double energy,
                   const std::string& ic_flag, double t_max, double stride,
                   const IntegratorConfig& icfg, const std::string& out) {
    prepare_out_dir(out);
    json effective{{"command", "sali-trace"},
                   {"system", json::parse(sys.to_json())},
                   {"energy", energy},
                   {"ic", ic_flag},
                   {"t_max", t_max},
                   {"stride", stride},
                   {"abs_tol", icfg.abs_tol},
                   {"rel_tol", icfg.rel_tol},
                   {"out", out}};
    echo_config(out, "sali-trace", effective);

    const Vec2 ic = parse_pair(ic_flag, "--ic");
    SaliSeries series;
    if (is_map(sys.kind)) {
        series = iterate_map_sali(
            sys, Vec2(wrap_unit(ic[0]), wrap_unit(ic[1])),
            static_cast<std::size_t>(std::llround(t_max)), stride);
    } else {
        if (std::isnan(energy))
            throw ConfigError("--energy is required for a continuous system");
        const SectionSpec sec = default_section(sys);
        auto state = solve_constrained_momentum(sys, sec, ic, energy);
        if (!state)
            throw DataError("initial condition outside the allowed region");
        series = propagate_sali(sys, *state, t_max, stride, icfg);
    }

    Cleanup cleanup;
    const std::string cpath = out + "/sali_trace.csv";
    const std::string jpath = out + "/asymptote.json";
    cleanup.track(cpath);
    cleanup.track(jpath);

    std::ostringstream body;
    body << "t,log10_sali\n";
    for (std::size_t i = 0; i < series.t.size(); ++i)
        body << fmt17(series.t[i]) << ',' << fmt17(series.log10_sali[i])
             << '\n';
    write_text_file(cpath, body.str());

    const double threshold = default_sali_threshold(sys.kind);
    json crossing = nullptr;
    for (std::size_t i = 0; i < series.t.size(); ++i) {
        if (series.log10_sali[i] < threshold) {
            crossing = series.t[i];
            break;
        }
    }
    json rep{{"kind", kind_name(sys.kind)},
             {"final_log10_sali", series.final_log10()},
             {"floored", series.floor_hit},
             {"threshold", threshold},
             {"crossed_threshold", !crossing.is_null()},
             {"crossing_time", crossing},
             {"exp_rate", guarded_fit(series, AsymptoteKind::Exponential)}};
    if (is_map(sys.kind))
        rep["power_slope"] = guarded_fit(series, AsymptoteKind::PowerLaw);
    else
        rep["plateau"] = guarded_fit(series, AsymptoteKind::Plateau);
    write_text_file(jpath, rep.dump(2) + "\n");
    cleanup.disarm();

    std::printf("final log10 SALI %.3f after %s %.6g%s\n",
                series.final_log10(),
                is_map(sys.kind) ? "iteration" : "t =",
                series.t.back(), series.floor_hit ? " (floored)" : "");
    return 0;
}

// ---- reproduce --------------------------------------------------------------

/// Training-campaign energy grid: 20 levels from just above the potential
/// minimum to 25% past the index-2 saddle (a scaled echo of the full sweep,
/// which runs uniformly to the saddle and then above it).
/// generate_or_load with a progress line either way
LabeledDataset cached_dataset(const EnsembleSpec& spec, const std::string& dir,
                              const std::string& name, int threads,
                              bool fresh) {
    const std::string path = dir + "/" + name + ".csv";
    auto res = generate_or_load(spec, path, threads, fresh);
    if (res.from_cache)
        std::printf("  cached %s (%zu records)\n", path.c_str(),
                    res.dataset.records.size());
    else
        std::printf("  generated %s (%zu records, %.1f s)\n", path.c_str(),
                    res.dataset.records.size(), res.seconds);
    return std::move(res.dataset);
}

int cmd_reproduce(const std::string& out, int threads, std::size_t n_train,
                  std::size_t n_eval, std::uint64_t seed, std::size_t epochs,
                  bool fresh) {
    auto t0 = std::chrono::steady_clock::now();
    prepare_out_dir(out);
    json effective{{"command", "reproduce"}, {"out", out},
                   {"threads", threads},     {"n_train", n_train},
                   {"n_eval", n_eval},       {"seed", seed},
                   {"epochs", epochs},       {"fresh", fresh}};
    echo_config(out, "reproduce", effective);
    const std::string dsdir = prepare_out_dir(out + "/datasets");
    prepare_out_dir(out + "/models");

    // 1. double-pendulum training campaign: 4 parameter cases x 20 energies
    std::vector<std::string> train_csvs;
    std::vector<IndicatorRecord> train_records;
    std::printf("[1/4] double-pendulum training campaign (%zu ICs per "
                "energy)\n",
                n_train);
    for (const auto& spec : pendulum_training_campaign(n_train, seed)) {
        char name[64];
        std::snprintf(name, sizeof name, "dp_a%g_s%g", spec.system.alpha,
                      spec.system.sigma);
        auto ds = cached_dataset(spec, dsdir, name, threads, fresh);
        train_csvs.push_back(dsdir + "/" + name + ".csv");
        train_records.insert(train_records.end(), ds.records.begin(),
                             ds.records.end());
    }

    // 2. one model per feature recipe (log S and raw S)
    std::printf("[2/4] training\n");
    std::string sha;
    for (const auto& p : train_csvs) {
        if (!sha.empty()) sha += ",";
        sha += sha256_file(p);
    }
    TrainOptions topts;
    topts.epochs = epochs;
    topts.seed = seed;
    topts.dataset_sha = sha;
    std::map<std::string, LinearSvmModel> models;
    for (FeatureSet set : {FeatureSet::LogSOnly, FeatureSet::SOnly}) {
        auto feats = extract_features(train_records, set);
        auto res = fit(feats, set, topts);
        const std::string name = feature_set_name(set);
        save_model(res.model, out + "/models/model_" + name + ".json");
        std::ostringstream curve;
        curve << "epoch,mean_hinge_loss\n";
        for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
            curve << e << ',' << fmt17(res.epoch_loss[e]) << '\n';
        write_text_file(out + "/models/curve_" + name + ".csv", curve.str());
        std::printf("  %s: %ld rows, final loss %.3e\n", name.c_str(),
                    static_cast<long>(feats.x.rows()), res.epoch_loss.back());
        models.emplace(name, std::move(res.model));
    }

    // 3. evaluation ensembles
    std::printf("[3/4] evaluation ensembles (%zu ICs per case)\n", n_eval);
    auto hh_ds = cached_dataset(henon_heiles_transfer_spec(n_eval, seed),
                                dsdir, "hh_eval", threads, fresh);
    auto sm_ds = cached_dataset(standard_map_transfer_spec(n_eval, seed),
                                dsdir, "sm_eval", threads, fresh);

    // 4. accuracy tables
    std::printf("[4/4] evaluation\n");
    json tables{{"table1", json::array()}, {"table2", json::array()}};
    for (const auto& [name, model] : models) {
        auto hh_rep = evaluate(model, hh_ds.records);
        auto sm_rep = evaluate(model, sm_ds.records);
        const std::string rdir = prepare_out_dir(out + "/reports");
        write_text_file(rdir + "/hh_" + name + ".json",
                        hh_rep.to_json() + "\n");
        write_text_file(rdir + "/sm_" + name + ".json",
                        sm_rep.to_json() + "\n");
        for (const auto& c : hh_rep.per_case) {
            json row{{"energy", c.case_value},
                     {"n", c.total},
                     {"recipe", name},
                     {"accuracy", static_cast<double>(c.correct) /
                                      static_cast<double>(c.total)}};
            tables["table1"].push_back(row);
        }
        for (const auto& c : sm_rep.per_case) {
            json row{{"K", c.case_value},
                     {"n", c.total},
                     {"recipe", name},
                     {"accuracy", static_cast<double>(c.correct) /
                                      static_cast<double>(c.total)}};
            tables["table2"].push_back(row);
        }
        std::printf("  %s: Henon-Heiles ", name.c_str());
        for (const auto& c : hh_rep.per_case)
            std::printf("%.3f ", static_cast<double>(c.correct) /
                                     static_cast<double>(c.total));
        std::printf(" | standard map ");
        for (const auto& c : sm_rep.per_case)
            std::printf("%.3f ", static_cast<double>(c.correct) /
                                     static_cast<double>(c.total));
        std::printf("\n");
    }
    write_text_file(out + "/tables.json", tables.dump(2) + "\n");
    std::printf("done in %.1f s -> %s/tables.json\n", elapsed_s(t0),
                out.c_str());
    return 0;
}

// ---- option wiring ----------------------------------------------------------

template <typename T>
void from_cfg(const json& cfg, const char* key, T& value) {
    if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

int dispatch(int argc, char** argv) {
    CLI::App app{"trajectory chaos classification toolkit"};
    app.require_subcommand(1);

    const std::string config_path = prescan_config(argc, argv);
    json cfg;
    std::string cfg_command;
    if (!config_path.empty()) {
        cfg = load_json_file(config_path);
        cfg_command = cfg.value("command", "");
        cfg.erase("command");
        // a bare ensemble-spec config is a generate config
        if (cfg_command.empty() && cfg.contains("spec"))
            cfg_command = "generate";
    }
    std::string config_echo; // bound so --config shows up in --help
    auto add_config_flag = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_echo,
                        "JSON file with defaults for the flags below");
    };
    auto check_cfg_for = [&](const char* name,
                             const std::vector<std::string>& known) {
        if (config_path.empty()) return;
        if (!cfg_command.empty() && cfg_command != name)
            throw ConfigError("config file was written by '" + cfg_command +
                              "', not '" + name + "'");
        reject_unknown_keys(cfg, known, "config file");
    };

    // generate ---------------------------------------------------------------
    auto* gen = app.add_subcommand("generate",
                                   "sample an ensemble and write the labeled "
                                   "indicator dataset");
    SystemFlags gsys;
    std::vector<double> g_cases, g_energy, g_K;
    std::size_t g_n = 0;
    std::uint64_t g_seed = std::uint64_t(-1);
    double g_tau = kNan, g_tsali = kNan, g_ssigma = kNan, g_thr = kNan;
    double g_abs = kNan, g_rel = kNan;
    std::string g_out = "out", g_csv = "dataset.csv";
    int g_threads = 0;
    add_config_flag(gen);
    gsys.add_to(gen);
    gen->add_option("--cases", g_cases,
                    "case list: energies (flows) or K values (map)");
    gen->add_option("--energy", g_energy, "energy case(s), flows only");
    gen->add_option("--K", g_K, "kick strength case(s), standard map only");
    gen->add_option("--n", g_n, "initial conditions per case");
    gen->add_option("--seed", g_seed, "RNG seed");
    gen->add_option("--tau,--iters", g_tau,
                    "descriptor horizon (time units, or iterations for maps)");
    gen->add_option("--t-sali", g_tsali,
                    "alignment-index horizon (time units or iterations)");
    gen->add_option("--stencil-sigma", g_ssigma, "neighbor offset");
    gen->add_option("--sali-threshold", g_thr, "log10 SALI label threshold");
    gen->add_option("--abs-tol", g_abs, "integrator absolute tolerance");
    gen->add_option("--rel-tol", g_rel, "integrator relative tolerance");
    gen->add_option("--out", g_out, "output directory");
    gen->add_option("--csv", g_csv, "dataset file name");
    gen->add_option("--threads", g_threads,
                    "worker count (0: CHAOS_LD_THREADS or hardware)");

    // threshold ---------------------------------------------------------------
    auto* thr = app.add_subcommand("threshold",
                                   "locate the valley between the two modes "
                                   "of an indicator histogram");
    std::string t_data, t_column = "log10_S", t_out = "out";
    int t_bins = 100, t_smooth = 5;
    add_config_flag(thr);
    thr->add_option("--data", t_data, "dataset CSV");
    thr->add_option("--column", t_column, "log10_S or sali_log10");
    thr->add_option("--bins", t_bins, "histogram bins");
    thr->add_option("--smooth-window", t_smooth, "moving-average width (odd)");
    thr->add_option("--out", t_out, "output directory");

    // train --------------------------------------------------------------
    auto* trn = app.add_subcommand("train",
                                   "fit the linear hinge-loss classifier");
    std::vector<std::string> n_data;
    std::string n_recipe = "logS_only", n_out = "out", n_model;
    TrainOptions n_opts;
    n_opts.epochs = 5000; // desk-scale default; the library default is 5e5
    double n_fraction = 1.0;
    add_config_flag(trn);
    trn->add_option("--data", n_data, "training dataset CSV(s)");
    trn->add_option("--recipe", n_recipe,
                    "S_only | logS_only | S_and_energy | logS_and_energy");
    trn->add_option("--epochs", n_opts.epochs, "full passes over the data");
    trn->add_option("--lr0", n_opts.lr0, "initial step size");
    trn->add_option("--batch", n_opts.batch, "mini-batch size");
    trn->add_option("--seed", n_opts.seed, "shuffle / subsample seed");
    trn->add_option("--train-fraction", n_fraction,
                    "seeded subsample fraction in (0, 1]");
    trn->add_option("--out", n_out, "output directory");
    trn->add_option("--model-name", n_model,
                    "model file name (default model_<recipe>.json)");

    // evaluate -----------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate",
                                  "score a model against labeled datasets");
    std::string e_model, e_out = "out";
    std::vector<std::string> e_data;
    add_config_flag(ev);
    ev->add_option("--model", e_model, "model JSON");
    ev->add_option("--data", e_data, "dataset CSV(s)");
    ev->add_option("--out", e_out, "output directory");

    // poincare -----------------------------------------------------------
    auto* poi = app.add_subcommand("poincare",
                                   "export surface-of-section crossings (or "
                                   "map iterates)");
    SystemFlags psys;
    std::vector<double> p_K;
    std::vector<std::string> p_ic;
    double p_energy = kNan, p_tmax = 1e5, p_abs = kNan, p_rel = kNan;
    std::size_t p_orbits = 0, p_crossings = 200;
    std::uint64_t p_seed = 1;
    int p_threads = 0;
    std::string p_out = "out", p_csv = "section.csv";
    add_config_flag(poi);
    psys.add_to(poi);
    poi->add_option("--K", p_K, "kick strength, standard map only");
    poi->add_option("--energy", p_energy, "energy shell, flows only");
    poi->add_option("--ic", p_ic, "explicit slice start(s) 'q1,q2'");
    poi->add_option("--n-orbits", p_orbits, "seeded random orbit count");
    poi->add_option("--crossings", p_crossings,
                    "crossings per orbit (iterates for maps)");
    poi->add_option("--t-max", p_tmax, "integration cap per orbit, flows");
    poi->add_option("--seed", p_seed, "RNG seed for --n-orbits");
    poi->add_option("--abs-tol", p_abs, "integrator absolute tolerance");
    poi->add_option("--rel-tol", p_rel, "integrator relative tolerance");
    poi->add_option("--threads", p_threads, "worker count");
    poi->add_option("--out", p_out, "output directory");
    poi->add_option("--csv", p_csv, "section file name");

    // sali-trace ----------------------------------------------------------
    auto* tr = app.add_subcommand("sali-trace",
                                  "time series of log10 SALI for one orbit "
                                  "plus fitted asymptotes");
    SystemFlags ssys;
    std::vector<double> s_K;
    std::string s_ic, s_out = "out";
    double s_energy = kNan, s_tmax = kNan, s_stride = 1.2;
    double s_abs = kNan, s_rel = kNan;
    add_config_flag(tr);
    ssys.add_to(tr);
    tr->add_option("--K", s_K, "kick strength, standard map only");
    tr->add_option("--energy", s_energy, "energy shell, flows only");
    tr->add_option("--ic", s_ic, "slice start 'q1,q2'");
    tr->add_option("--t-max", s_tmax,
                   "horizon (time units, or iterations for maps; default "
                   "1e4 / 1e5)");
    tr->add_option("--stride", s_stride, "geometric sampling stride");
    tr->add_option("--abs-tol", s_abs, "integrator absolute tolerance");
    tr->add_option("--rel-tol", s_rel, "integrator relative tolerance");
    tr->add_option("--out", s_out, "output directory");

    // reproduce -----------------------------------------------------------
    auto* rep = app.add_subcommand("reproduce",
                                   "desk-scale pipeline: pendulum campaign, "
                                   "training, transfer tables");
    std::string r_out = "out/reproduce";
    int r_threads = 0;
    std::size_t r_ntrain = 30, r_neval = 1000, r_epochs = 5000;
    std::uint64_t r_seed = 1;
    bool r_fresh = false;
    add_config_flag(rep);
    rep->add_option("--out", r_out, "output directory");
    rep->add_option("--threads", r_threads, "worker count");
    rep->add_option("--n-train", r_ntrain,
                    "pendulum ICs per (case, energy) cell");
    rep->add_option("--n-eval", r_neval, "evaluation ICs per case");
    rep->add_option("--seed", r_seed, "campaign seed");
    rep->add_option("--epochs", r_epochs, "training epochs");
    rep->add_flag("--fresh", r_fresh, "ignore cached datasets");

    // config defaults (flags parsed afterwards override them) --------------
    if (!config_path.empty()) {
        if (cfg_command == "generate") {
            check_cfg_for("generate",
                          {"spec", "out", "csv", "threads", "config"});
            from_cfg(cfg, "out", g_out);
            from_cfg(cfg, "csv", g_csv);
            from_cfg(cfg, "threads", g_threads);
        } else if (cfg_command == "threshold") {
            check_cfg_for("threshold", {"data", "column", "bins",
                                        "smooth_window", "out", "config"});
            from_cfg(cfg, "data", t_data);
            from_cfg(cfg, "column", t_column);
            from_cfg(cfg, "bins", t_bins);
            from_cfg(cfg, "smooth_window", t_smooth);
            from_cfg(cfg, "out", t_out);
        } else if (cfg_command == "train") {
            check_cfg_for("train",
                          {"data", "recipe", "epochs", "lr0", "batch", "seed",
                           "train_fraction", "out", "model_name", "config"});
            from_cfg(cfg, "data", n_data);
            from_cfg(cfg, "recipe", n_recipe);
            from_cfg(cfg, "epochs", n_opts.epochs);
            from_cfg(cfg, "lr0", n_opts.lr0);
            from_cfg(cfg, "batch", n_opts.batch);
            from_cfg(cfg, "seed", n_opts.seed);
            from_cfg(cfg, "train_fraction", n_fraction);
            from_cfg(cfg, "out", n_out);
            from_cfg(cfg, "model_name", n_model);
        } else if (cfg_command == "evaluate") {
            check_cfg_for("evaluate", {"model", "data", "out", "config"});
            from_cfg(cfg, "model", e_model);
            from_cfg(cfg, "data", e_data);
            from_cfg(cfg, "out", e_out);
        } else if (cfg_command == "poincare") {
            check_cfg_for("poincare",
                          {"system", "energy", "ic", "n_orbits", "crossings",
                           "t_max", "seed", "threads", "abs_tol", "rel_tol",
                           "out", "csv", "config"});
            from_cfg(cfg, "energy", p_energy);
            from_cfg(cfg, "ic", p_ic);
            from_cfg(cfg, "n_orbits", p_orbits);
            from_cfg(cfg, "crossings", p_crossings);
            from_cfg(cfg, "t_max", p_tmax);
            from_cfg(cfg, "seed", p_seed);
            from_cfg(cfg, "threads", p_threads);
            from_cfg(cfg, "abs_tol", p_abs);
            from_cfg(cfg, "rel_tol", p_rel);
            from_cfg(cfg, "out", p_out);
            from_cfg(cfg, "csv", p_csv);
        } else if (cfg_command == "sali-trace") {
            check_cfg_for("sali-trace",
                          {"system", "energy", "ic", "t_max", "stride",
                           "abs_tol", "rel_tol", "out", "config"});
            from_cfg(cfg, "energy", s_energy);
            from_cfg(cfg, "ic", s_ic);
            from_cfg(cfg, "t_max", s_tmax);
            from_cfg(cfg, "stride", s_stride);
            from_cfg(cfg, "abs_tol", s_abs);
            from_cfg(cfg, "rel_tol", s_rel);
            from_cfg(cfg, "out", s_out);
        } else if (cfg_command == "reproduce") {
            check_cfg_for("reproduce",
                          {"out", "threads", "n_train", "n_eval", "seed",
                           "epochs", "fresh", "config"});
            from_cfg(cfg, "out", r_out);
            from_cfg(cfg, "threads", r_threads);
            from_cfg(cfg, "n_train", r_ntrain);
            from_cfg(cfg, "n_eval", r_neval);
            from_cfg(cfg, "seed", r_seed);
            from_cfg(cfg, "epochs", r_epochs);
            from_cfg(cfg, "fresh", r_fresh);
        } else {
            throw ConfigError("config file does not name a known command");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (!cfg_command.empty()) {
        const std::string invoked = app.get_subcommands().front()->get_name();
        if (cfg_command != invoked)
            throw ConfigError("config file was written for '" + cfg_command +
                              "', but '" + invoked + "' was invoked");
    }

    if (*gen) {
        EnsembleSpec spec;
        bool have_spec = false;
        if (cfg.contains("spec")) {
            spec = EnsembleSpec::from_json(cfg["spec"].dump());
            have_spec = true;
        }
        gsys.apply(spec.system);
        if (!gsys.system.empty() && !is_map(spec.system.kind))
            spec.section = default_section(spec.system);

        int sugar = (!g_cases.empty()) + (!g_energy.empty()) + (!g_K.empty());
        if (sugar > 1)
            throw ConfigError("give cases through exactly one of --cases, "
                              "--energy or --K");
        if (!g_energy.empty()) {
            if (is_map(spec.system.kind))
                throw ConfigError("--energy applies to continuous systems; "
                                  "use --K for the map");
            spec.cases = g_energy;
        } else if (!g_K.empty()) {
            if (!is_map(spec.system.kind))
                throw ConfigError("--K applies to the standard map; use "
                                  "--energy for flows");
            spec.cases = g_K;
            spec.system.K = g_K.front();
        } else if (!g_cases.empty()) {
            spec.cases = g_cases;
        }
        if (!have_spec || g_n > 0) spec.n_per_case = g_n > 0 ? g_n : 500;
        if (g_seed != std::uint64_t(-1)) spec.rng_seed = g_seed;
        if (!std::isnan(g_tau)) spec.tau_ld = g_tau;
        if (!std::isnan(g_tsali)) spec.t_sali = g_tsali;
        if (!std::isnan(g_ssigma)) spec.stencil_sigma = g_ssigma;
        if (!std::isnan(g_thr)) spec.sali_threshold = g_thr;
        if (!std::isnan(g_abs)) spec.integrator.abs_tol = g_abs;
        if (!std::isnan(g_rel)) spec.integrator.rel_tol = g_rel;
        spec.validate();
        return cmd_generate(spec, g_out, g_csv, g_threads);
    }
    if (*thr) {
        if (t_data.empty()) throw ConfigError("--data is required");
        return cmd_threshold(t_data, t_column, t_bins, t_smooth, t_out);
    }
    if (*trn) {
        if (n_data.empty()) throw ConfigError("--data is required");
        return cmd_train(n_data, n_recipe, n_opts, n_fraction, n_out,
                         n_model);
    }
    if (*ev) {
        if (e_model.empty()) throw ConfigError("--model is required");
        if (e_data.empty()) throw ConfigError("--data is required");
        return cmd_evaluate(e_model, e_data, e_out);
    }
    if (*poi) {
        SystemSpec sys = SystemSpec::henon_heiles();
        if (cfg.contains("system"))
            sys = SystemSpec::from_json(cfg["system"].dump());
        else if (psys.system.empty())
            throw ConfigError("--system is required");
        psys.apply(sys);
        if (!p_K.empty()) {
            if (!is_map(sys.kind))
                throw ConfigError("--K applies to the standard map");
            sys.K = p_K.front();
        }
        IntegratorConfig icfg;
        if (!std::isnan(p_abs)) icfg.abs_tol = p_abs;
        if (!std::isnan(p_rel)) icfg.rel_tol = p_rel;
        return cmd_poincare(sys, p_energy, p_ic, p_orbits, p_crossings,
                            p_tmax, p_seed, p_threads, icfg, p_out, p_csv);
    }
    if (*tr) {
        SystemSpec sys = SystemSpec::henon_heiles();
        if (cfg.contains("system"))
            sys = SystemSpec::from_json(cfg["system"].dump());
        else if (ssys.system.empty())
            throw ConfigError("--system is required");
        ssys.apply(sys);
        if (!s_K.empty()) {
            if (!is_map(sys.kind))
                throw ConfigError("--K applies to the standard map");
            sys.K = s_K.front();
        }
        if (s_ic.empty()) throw ConfigError("--ic is required");
        if (std::isnan(s_tmax)) s_tmax = is_map(sys.kind) ? 1e5 : 1e4;
        IntegratorConfig icfg;
        if (!std::isnan(s_abs)) icfg.abs_tol = s_abs;
        if (!std::isnan(s_rel)) icfg.rel_tol = s_rel;
        return cmd_sali_trace(sys, s_energy, s_ic, s_tmax, s_stride, icfg,
                              s_out);
    }
    if (*rep)
        return cmd_reproduce(r_out, r_threads, r_ntrain, r_neval, r_seed,
                             r_epochs, r_fresh);
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const UnsupportedOperation& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const IntegrationFailure& e) {
        std::fprintf(stderr, "propagation error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
