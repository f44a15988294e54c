#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "chaosld/types.hpp"

namespace chaosld {

struct IntegratorConfig {
    double abs_tol = 1e-12;
    double rel_tol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    double initial_step = 0.0; // 0: pick automatically

    void validate() const {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
            throw ConfigError("integrator tolerances must be positive");
        if (!(max_step > 0.0))
            throw ConfigError("integrator max_step must be positive");
        if (initial_step < 0.0)
            throw ConfigError("integrator initial_step must be >= 0");
    }
};

namespace detail {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0,
                 c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                 a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                 a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0,
                 a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
// embedded error coefficients (5th minus 4th order weights)
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0,
                 e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// dense-output coefficients
constexpr double d1 = -12715105075.0 / 11282082432.0,
                 d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0,
                 d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0,
                 d7 = 69997945.0 / 29380423.0;

} // namespace detail

/// Embedded Dormand-Prince RK5(4) with PI step-size control and FSAL.
/// One instance integrates one trajectory; step() advances by exactly one
/// accepted step, never past the supplied cap.
template <int N>
class Dopri5 {
public:
    using Vec = Eigen::Matrix<double, N, 1>;

    explicit Dopri5(const IntegratorConfig& cfg = {}) : cfg_(cfg) {
        cfg_.validate();
    }

    template <class Rhs>
    void start(const Rhs& rhs, const Vec& y0, double t0 = 0.0) {
        t_ = t0;
        y_ = y0;
        rhs(y_, k_[0]);
        fsal_valid_ = true;
        facold_ = 1e-4;
        rejected_ = false;
        h_ = cfg_.initial_step > 0.0 ? cfg_.initial_step : guess_h0(rhs);
        h_ = std::min(h_, cfg_.max_step);
    }

    double t() const { return t_; }
    const Vec& y() const { return y_; }

    /// Overwrite the current state (e.g. deviation-vector renormalization).
    /// When the caller knows how the stored derivative transforms it can
    /// fix it up through k1() instead of paying a re-evaluation.
    void set_y(const Vec& y, bool derivative_still_valid = false) {
        y_ = y;
        fsal_valid_ = derivative_still_valid;
    }
    Vec& k1() { return k_[0]; }

    /// Advance by one accepted step, capped so t never exceeds t_cap.
    /// Returns true when t == t_cap after the step.
    template <class Rhs>
    bool step(const Rhs& rhs, double t_cap) {
        if (!(t_cap > t_)) return true;
        if (!fsal_valid_) {
            rhs(y_, k_[0]);
            fsal_valid_ = true;
        }
        const double uround = std::numeric_limits<double>::epsilon();
        for (int attempt = 0;; ++attempt) {
            if (attempt > 1000)
                throw IntegrationFailure("step acceptance stalled", t_);
            double h = std::min(h_, cfg_.max_step);
            bool last = false;
            if (t_ + h >= t_cap) {
                h = t_cap - t_;
                last = true;
            }
            if (std::abs(h) <= std::abs(t_) * uround * 10.0)
                throw IntegrationFailure("step size underflow", t_);

            const Vec& y0 = y_;
            Vec tmp;
            using namespace detail;
            tmp = y0 + h * (a21 * k_[0]);
            rhs(tmp, k_[1]);
            tmp = y0 + h * (a31 * k_[0] + a32 * k_[1]);
            rhs(tmp, k_[2]);
            tmp = y0 + h * (a41 * k_[0] + a42 * k_[1] + a43 * k_[2]);
            rhs(tmp, k_[3]);
            tmp = y0 + h * (a51 * k_[0] + a52 * k_[1] + a53 * k_[2] + a54 * k_[3]);
            rhs(tmp, k_[4]);
            tmp = y0 + h * (a61 * k_[0] + a62 * k_[1] + a63 * k_[2] +
                            a64 * k_[3] + a65 * k_[4]);
            rhs(tmp, k_[5]);
            Vec ynew = y0 + h * (a71 * k_[0] + a73 * k_[2] + a74 * k_[3] +
                                 a75 * k_[4] + a76 * k_[5]);
            rhs(ynew, k_[6]);

            Vec errv = h * (e1 * k_[0] + e3 * k_[2] + e4 * k_[3] +
                            e5 * k_[4] + e6 * k_[5] + e7 * k_[6]);
            double err = 0.0;
            for (int i = 0; i < N; ++i) {
                double sc = cfg_.abs_tol +
                            cfg_.rel_tol * std::max(std::abs(y0[i]),
                                                    std::abs(ynew[i]));
                double r = errv[i] / sc;
                err += r * r;
            }
            err = std::sqrt(err / N);

            // PI controller (beta = 0.04) with growth/shrink clamps 10x / 5x
            const double safe = 0.9, beta = 0.04, expo1 = 0.2 - beta * 0.75;
            const double facc1 = 1.0 / 0.2, facc2 = 1.0 / 10.0;
            double fac11 = std::pow(std::max(err, 1e-30), expo1);
            if (err <= 1.0) {
                double fac = fac11 / std::pow(facold_, beta);
                fac = std::max(facc2, std::min(facc1, fac / safe));
                double hnew = h / fac;
                facold_ = std::max(err, 1e-4);
                h_prev_ = h;
                t_prev_ = t_;
                y_prev_ = y0;
                y_ = ynew;
                // FSAL: k7 becomes the next k1; the old k1 stays in k_[6]
                // for the dense output of the step just taken
                std::swap(k_[0], k_[6]);
                if (rejected_) hnew = std::min(hnew, h);
                rejected_ = false;
                h_ = hnew;
                if (last) {
                    t_ = t_cap;
                    return true;
                }
                t_ = t_prev_ + h_prev_;
                return false;
            }
            h_ = h / std::min(facc1, fac11 / safe);
            rejected_ = true;
        }
    }

    /// 4th-order continuous extension over the last accepted step.
    /// Call prepare_dense() once after that step, then eval freely.
    void prepare_dense() {
        using namespace detail;
        double h = h_prev_;
        Vec ydiff = y_ - y_prev_;
        Vec bspl = h * k_[6] - ydiff; // k_[6] holds k1 of the completed step
        rcont_[0] = y_prev_;
        rcont_[1] = ydiff;
        rcont_[2] = bspl;
        rcont_[3] = ydiff - h * k_[0] - bspl; // k_[0] is k7 == f(y_new)
        rcont_[4] = h * (d1 * k_[6] + d3 * k_[2] + d4 * k_[3] + d5 * k_[4] +
                         d6 * k_[5] + d7 * k_[0]);
    }

    Vec dense_eval(double t) const {
        double th = (t - t_prev_) / h_prev_;
        double th1 = 1.0 - th;
        return rcont_[0] +
               th * (rcont_[1] + th1 * (rcont_[2] +
                                        th * (rcont_[3] + th1 * rcont_[4])));
    }

    double t_prev() const { return t_prev_; }

private:
    template <class Rhs>
    double guess_h0(const Rhs& rhs) const {
        double dnf = 0.0, dny = 0.0;
        for (int i = 0; i < N; ++i) {
            double sc = cfg_.abs_tol + cfg_.rel_tol * std::abs(y_[i]);
            dnf += (k_[0][i] / sc) * (k_[0][i] / sc);
            dny += (y_[i] / sc) * (y_[i] / sc);
        }
        double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6
                                                  : 0.01 * std::sqrt(dny / dnf);
        h = std::min(h, cfg_.max_step);
        Vec y1 = y_ + h * k_[0];
        Vec f1;
        rhs(y1, f1);
        double der2 = 0.0;
        for (int i = 0; i < N; ++i) {
            double sc = cfg_.abs_tol + cfg_.rel_tol * std::abs(y_[i]);
            double d = (f1[i] - k_[0][i]) / sc;
            der2 += d * d;
        }
        der2 = std::sqrt(der2) / h;
        double der12 = std::max(der2, std::sqrt(dnf));
        double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3)
                                   : std::pow(0.01 / der12, 0.2);
        return std::min({100.0 * h, h1, cfg_.max_step});
    }

    IntegratorConfig cfg_;
    double t_ = 0.0, h_ = 0.0;
    double t_prev_ = 0.0, h_prev_ = 0.0;
    double facold_ = 1e-4;
    bool rejected_ = false;
    bool fsal_valid_ = false;
    Vec y_, y_prev_;
    Vec k_[7];
    Vec rcont_[5];
};

} // namespace chaosld
