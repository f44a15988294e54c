#pragma once

// Independent derivative oracles used by the test suites. These are kept
// deliberately dumb: central differences of the public operations only,
// never calling the analytic derivative code they are checking.

#include <chaosld/systems.hpp>

#include <cmath>
#include <functional>

namespace oracles {

inline chaosld::Mat4 fd_jacobian(const chaosld::SystemSpec& sys,
                                 const chaosld::Vec4& s, double h = 1e-6) {
    chaosld::Mat4 J;
    for (int j = 0; j < 4; ++j) {
        chaosld::Vec4 sp = s, sm = s;
        sp[j] += h;
        sm[j] -= h;
        J.col(j) = (chaosld::vector_field(sys, sp) -
                    chaosld::vector_field(sys, sm)) / (2.0 * h);
    }
    return J;
}

inline chaosld::Mat2 fd_map_tangent(const chaosld::SystemSpec& sys,
                                    const chaosld::Vec2& s, double h = 1e-6) {
    // differences evaluated before wrapping can straddle the seam, so map
    // whole displaced points and undo the wrap via the minimal image
    chaosld::Mat2 T;
    chaosld::Vec2 f0 = chaosld::map_step(sys, s);
    for (int j = 0; j < 2; ++j) {
        chaosld::Vec2 sp = s, sm = s;
        sp[j] += h;
        sm[j] -= h;
        chaosld::Vec2 fp = chaosld::map_step(sys, sp);
        chaosld::Vec2 fm = chaosld::map_step(sys, sm);
        for (int i = 0; i < 2; ++i) {
            double dp = fp[i] - f0[i];
            double dm = fm[i] - f0[i];
            dp -= std::round(dp);
            dm -= std::round(dm);
            T(i, j) = (dp - dm) / (2.0 * h);
        }
    }
    return T;
}

inline double fd_gradient_component(const std::function<double(double)>& f,
                                    double x, double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

} // namespace oracles
