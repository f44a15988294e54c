#include "chaosld/propagation.hpp"

#include <cmath>

namespace chaosld {

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;

constexpr double kSaliFloor = 1e-14;

void require_flow(const SystemSpec& sys, const char* op) {
    if (is_map(sys.kind))
        throw UnsupportedOperation(std::string(op) + " needs a continuous system");
}

void require_map(const SystemSpec& sys, const char* op) {
    if (!is_map(sys.kind))
        throw UnsupportedOperation(std::string(op) + " needs a map system");
}

/// geometric sample times 1, r, r^2, ... (strictly increasing, capped)
std::vector<double> sample_times(double t_max, double stride) {
    if (!(stride > 1.0))
        throw ConfigError("sample stride must be > 1");
    if (!(t_max > 0.0))
        throw ConfigError("t_max must be positive");
    std::vector<double> out;
    for (double t = 1.0; t < t_max; t *= stride) out.push_back(t);
    out.push_back(t_max);
    return out;
}

std::vector<std::size_t> sample_iterations(std::size_t n_max, double stride) {
    if (!(stride > 1.0))
        throw ConfigError("sample stride must be > 1");
    if (n_max == 0)
        throw ConfigError("iteration count must be positive");
    std::vector<std::size_t> out;
    for (double t = 1.0; t < static_cast<double>(n_max); t *= stride) {
        auto n = static_cast<std::size_t>(std::llround(t));
        if (n >= n_max) break;
        if (out.empty() || n > out.back()) out.push_back(n);
    }
    out.push_back(n_max);
    return out;
}

double sali_of(const Vec4& w1, const Vec4& w2) {
    double dplus = (w1 - w2).norm();
    double dminus = (w1 + w2).norm();
    return std::min(dplus, dminus);
}

} // namespace

Vec4 propagate_state(const SystemSpec& sys, const Vec4& s0, double t_end,
                     const IntegratorConfig& cfg) {
    require_flow(sys, "propagate_state");
    if (t_end == 0.0) return s0;
    double span = std::abs(t_end);
    double dir = t_end > 0.0 ? 1.0 : -1.0;
    auto rhs = [&](const Vec4& y, Vec4& dy) { dy = dir * vector_field(sys, y); };
    Dopri5<4> stepper(cfg);
    stepper.start(rhs, s0);
    while (!stepper.step(rhs, span)) {}
    return stepper.y();
}

LdResult propagate_ld(const SystemSpec& sys, const Vec4& s0, double tau,
                      TimeDirection dir, const IntegratorConfig& cfg) {
    require_flow(sys, "propagate_ld");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    double sgn = dir == TimeDirection::Forward ? 1.0 : -1.0;
    auto rhs = [&](const Vec5& y, Vec5& dy) {
        Vec4 f = vector_field(sys, y.head<4>());
        dy.head<4>() = sgn * f;
        dy[4] = std::sqrt(std::abs(f[0])) + std::sqrt(std::abs(f[1])) +
                std::sqrt(std::abs(f[2])) + std::sqrt(std::abs(f[3]));
    };
    Vec5 y;
    y.head<4>() = s0;
    y[4] = 0.0;
    Dopri5<5> stepper(cfg);
    stepper.start(rhs, y);
    while (!stepper.step(rhs, tau)) {}
    return LdResult{stepper.y().head<4>(), stepper.y()[4]};
}

SaliSeries propagate_sali(const SystemSpec& sys, const Vec4& s0, double t_max,
                          double sample_stride, const IntegratorConfig& cfg) {
    require_flow(sys, "propagate_sali");
    std::vector<double> targets = sample_times(t_max, sample_stride);

    auto rhs = [&](const Vec12& y, Vec12& dy) {
        Vec4 f;
        Mat4 J;
        vector_field_and_jacobian(sys, y.head<4>(), f, J);
        dy.head<4>() = f;
        dy.segment<4>(4) = J * y.segment<4>(4);
        dy.segment<4>(8) = J * y.segment<4>(8);
    };

    Vec12 y = Vec12::Zero();
    y.head<4>() = s0;
    y[4] = 1.0; // w1 = e1
    y[9] = 1.0; // w2 = e2

    SaliSeries series;
    series.floor = kSaliFloor;
    series.t.push_back(0.0);
    series.log10_sali.push_back(std::log10(std::sqrt(2.0)));

    Dopri5<12> stepper(cfg);
    stepper.start(rhs, y);

    double current_sali = std::sqrt(2.0);
    for (double target : targets) {
        bool reached = false;
        while (!reached) {
            reached = stepper.step(rhs, target);
            // renormalize both deviation vectors after every accepted step;
            // the stored derivative is linear in w, so rescale it in place
            Vec12 state = stepper.y();
            double n1 = state.segment<4>(4).norm();
            double n2 = state.segment<4>(8).norm();
            if (!(n1 > 0.0) || !(n2 > 0.0))
                throw IntegrationFailure("deviation vector collapsed",
                                         stepper.t());
            state.segment<4>(4) /= n1;
            state.segment<4>(8) /= n2;
            stepper.set_y(state, true);
            stepper.k1().segment<4>(4) /= n1;
            stepper.k1().segment<4>(8) /= n2;
            current_sali = sali_of(state.segment<4>(4), state.segment<4>(8));
            if (current_sali < kSaliFloor) {
                series.t.push_back(stepper.t());
                series.log10_sali.push_back(std::log10(current_sali));
                series.floor_hit = true;
                return series;
            }
        }
        series.t.push_back(target);
        series.log10_sali.push_back(std::log10(current_sali));
    }
    return series;
}

MapLdResult iterate_map_ld(const SystemSpec& sys, const Vec2& s0,
                           std::size_t n_iter, TimeDirection dir) {
    require_map(sys, "iterate_map_ld");
    if (n_iter == 0) throw ConfigError("iteration count must be positive");
    Vec2 x(wrap_unit(s0[0]), wrap_unit(s0[1]));
    double ld = 0.0;
    for (std::size_t n = 0; n < n_iter; ++n) {
        Vec2 next = dir == TimeDirection::Forward ? map_step(sys, x)
                                                  : map_step_inverse(sys, x);
        ld += std::sqrt(torus_distance(next[0], x[0])) +
              std::sqrt(torus_distance(next[1], x[1]));
        x = next;
    }
    return MapLdResult{x, ld};
}

SaliSeries iterate_map_sali(const SystemSpec& sys, const Vec2& s0,
                            std::size_t n_iter, double sample_stride) {
    require_map(sys, "iterate_map_sali");
    std::vector<std::size_t> targets = sample_iterations(n_iter, sample_stride);

    Vec2 x(wrap_unit(s0[0]), wrap_unit(s0[1]));
    Vec2 w1(1.0, 0.0), w2(0.0, 1.0);

    SaliSeries series;
    series.floor = kSaliFloor;
    series.t.push_back(0.0);
    series.log10_sali.push_back(std::log10(std::sqrt(2.0)));

    std::size_t next_target = 0;
    for (std::size_t n = 1; n <= n_iter; ++n) {
        Mat2 T = map_tangent(sys, x);
        x = map_step(sys, x);
        w1 = (T * w1).normalized();
        w2 = (T * w2).normalized();
        double dplus = (w1 - w2).norm();
        double dminus = (w1 + w2).norm();
        double sali = std::min(dplus, dminus);
        if (sali < kSaliFloor) {
            series.t.push_back(static_cast<double>(n));
            series.log10_sali.push_back(std::log10(std::max(sali, 1e-300)));
            series.floor_hit = true;
            return series;
        }
        if (next_target < targets.size() && n == targets[next_target]) {
            series.t.push_back(static_cast<double>(n));
            series.log10_sali.push_back(std::log10(sali));
            ++next_target;
        }
    }
    return series;
}

std::vector<Vec2> poincare_section(const SystemSpec& sys, const Vec4& s0,
                                   const SectionSpec& sec,
                                   std::size_t n_crossings, double t_max,
                                   const IntegratorConfig& cfg) {
    require_flow(sys, "poincare_section");
    if (!(t_max > 0.0)) throw ConfigError("t_max must be positive");

    auto rhs = [&](const Vec4& y, Vec4& dy) { dy = vector_field(sys, y); };
    auto g = [&](const Vec4& y) { return y[sec.fixed] - sec.fixed_value; };
    auto admissible = [&](const Vec4& y) {
        return y[sec.constrained] * sec.sign >= 0.0;
    };

    std::vector<Vec2> out;
    out.reserve(n_crossings);
    if (n_crossings == 0) return out;

    if (std::abs(g(s0)) < 1e-12 && admissible(s0))
        out.emplace_back(s0[sec.slice_q], s0[sec.slice_p]);

    Dopri5<4> stepper(cfg);
    stepper.start(rhs, s0);
    double g_prev = g(s0);
    while (out.size() < n_crossings) {
        bool reached_end = stepper.step(rhs, t_max);
        double g_new = g(stepper.y());
        if ((g_prev < 0.0 && g_new > 0.0) || (g_prev > 0.0 && g_new < 0.0)) {
            stepper.prepare_dense();
            double lo = stepper.t_prev(), hi = stepper.t();
            Vec4 candidate = stepper.y();
            double glo = g_prev;
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                candidate = stepper.dense_eval(mid);
                double gm = g(candidate);
                if (std::abs(gm) < 1e-10) break;
                if ((glo < 0.0) == (gm < 0.0)) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            if (std::abs(g(candidate)) < 1e-10 && admissible(candidate))
                out.emplace_back(candidate[sec.slice_q], candidate[sec.slice_p]);
        }
        g_prev = g_new;
        if (reached_end) break;
    }
    return out;
}

} // namespace chaosld
