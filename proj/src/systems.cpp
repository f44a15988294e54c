#include "chaosld/systems.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

namespace chaosld {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

[[noreturn]] void not_a_flow(const SystemSpec& sys, const char* op) {
    throw UnsupportedOperation(std::string(op) + " is undefined for " +
                               kind_name(sys.kind));
}

[[noreturn]] void not_a_map(const SystemSpec& sys, const char* op) {
    throw UnsupportedOperation(std::string(op) + " is undefined for " +
                               kind_name(sys.kind));
}

/// inverse mass matrix of the reduced double pendulum and its first two
/// derivatives with respect to x = cos(theta2 - theta1)
struct DpKinetic {
    Mat2 A, Ap, App;
};

DpKinetic dp_kinetic(double alpha, double sigma, double x) {
    double d = 1.0 + sigma - x * x;
    double d2 = d * d;
    Mat2 B, Bp;
    B << 1.0 / (alpha * alpha), -x / alpha,
        -x / alpha, 1.0 + sigma;
    Bp << 0.0, -1.0 / alpha,
        -1.0 / alpha, 0.0;
    DpKinetic k;
    k.A = B / d;
    k.Ap = Bp / d + (2.0 * x / d2) * B;
    k.App = (2.0 / d2) * B + (4.0 * x / d2) * Bp + (8.0 * x * x / (d2 * d)) * B;
    return k;
}

void grad_potential(const SystemSpec& sys, double q1, double q2, double& g1,
                    double& g2) {
    switch (sys.kind) {
    case SystemKind::DoublePendulum:
        g1 = sys.alpha * (1.0 + sys.sigma) * std::sin(q1);
        g2 = std::sin(q2);
        return;
    case SystemKind::FourWell:
        g1 = 4.0 * q1 * q1 * q1 - 2.0 * sys.alpha * q1 - sys.delta +
             2.0 * sys.beta * q1 * q2 * q2;
        g2 = 4.0 * q2 * q2 * q2 - 2.0 * q2 + 2.0 * sys.beta * q1 * q1 * q2;
        return;
    case SystemKind::HenonHeiles:
        g1 = q1 + 2.0 * q1 * q2;
        g2 = q2 + q1 * q1 - q2 * q2;
        return;
    default:
        not_a_flow(sys, "potential gradient");
    }
}

void hess_potential(const SystemSpec& sys, double q1, double q2, double& vxx,
                    double& vxy, double& vyy) {
    switch (sys.kind) {
    case SystemKind::FourWell:
        vxx = 12.0 * q1 * q1 - 2.0 * sys.alpha + 2.0 * sys.beta * q2 * q2;
        vxy = 4.0 * sys.beta * q1 * q2;
        vyy = 12.0 * q2 * q2 - 2.0 + 2.0 * sys.beta * q1 * q1;
        return;
    case SystemKind::HenonHeiles:
        vxx = 1.0 + 2.0 * q2;
        vxy = 2.0 * q1;
        vyy = 1.0 - 2.0 * q2;
        return;
    default:
        not_a_flow(sys, "potential hessian");
    }
}

double require_finite(double v, const char* what) {
    if (!std::isfinite(v))
        throw ConfigError(std::string(what) + " must be finite");
    return v;
}

} // namespace

bool is_map(SystemKind kind) { return kind == SystemKind::StandardMap; }

std::string kind_name(SystemKind kind) {
    switch (kind) {
    case SystemKind::DoublePendulum: return "double-pendulum";
    case SystemKind::FourWell: return "four-well";
    case SystemKind::HenonHeiles: return "henon-heiles";
    case SystemKind::StandardMap: return "standard-map";
    }
    throw ConfigError("unknown system kind");
}

SystemKind kind_from_name(const std::string& name) {
    if (name == "double-pendulum") return SystemKind::DoublePendulum;
    if (name == "four-well") return SystemKind::FourWell;
    if (name == "henon-heiles") return SystemKind::HenonHeiles;
    if (name == "standard-map") return SystemKind::StandardMap;
    throw ConfigError("unknown system kind '" + name + "'");
}

SystemSpec SystemSpec::double_pendulum(double alpha, double sigma) {
    if (!(require_finite(alpha, "alpha") > 0.0))
        throw ConfigError("double-pendulum needs alpha > 0");
    if (!(require_finite(sigma, "sigma") > 0.0))
        throw ConfigError("double-pendulum needs sigma > 0");
    SystemSpec s;
    s.kind = SystemKind::DoublePendulum;
    s.alpha = alpha;
    s.sigma = sigma;
    return s;
}

SystemSpec SystemSpec::four_well(double alpha, double beta, double delta) {
    if (!(require_finite(alpha, "alpha") >= 0.0) ||
        !(require_finite(beta, "beta") >= 0.0) ||
        !(require_finite(delta, "delta") >= 0.0))
        throw ConfigError("four-well needs alpha, beta, delta >= 0");
    SystemSpec s;
    s.kind = SystemKind::FourWell;
    s.alpha = alpha;
    s.beta = beta;
    s.delta = delta;
    return s;
}

SystemSpec SystemSpec::henon_heiles() {
    SystemSpec s;
    s.kind = SystemKind::HenonHeiles;
    return s;
}

SystemSpec SystemSpec::standard_map(double K) {
    if (!(require_finite(K, "K") >= 0.0))
        throw ConfigError("standard map needs K >= 0");
    SystemSpec s;
    s.kind = SystemKind::StandardMap;
    s.K = K;
    return s;
}

std::string SystemSpec::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    switch (kind) {
    case SystemKind::DoublePendulum:
        params["alpha"] = alpha;
        params["sigma"] = sigma;
        break;
    case SystemKind::FourWell:
        params["alpha"] = alpha;
        params["beta"] = beta;
        params["delta"] = delta;
        break;
    case SystemKind::HenonHeiles:
        break;
    case SystemKind::StandardMap:
        params["K"] = K;
        break;
    }
    nlohmann::json j{{"kind", kind_name(kind)}, {"params", params}};
    return j.dump();
}

SystemSpec SystemSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ConfigError("system spec is not a JSON object");
    if (!j.contains("kind") || !j["kind"].is_string())
        throw ConfigError("system spec needs a string 'kind'");
    SystemKind kind = kind_from_name(j["kind"].get<std::string>());
    nlohmann::json params = j.value("params", nlohmann::json::object());
    if (!params.is_object())
        throw ConfigError("system spec 'params' must be an object");

    auto take = [&params](const char* name, double fallback,
                          bool required) -> double {
        if (!params.contains(name)) {
            if (required)
                throw ConfigError(std::string("missing parameter '") + name + "'");
            return fallback;
        }
        if (!params[name].is_number())
            throw ConfigError(std::string("parameter '") + name +
                              "' must be a number");
        double v = params[name].get<double>();
        params.erase(name);
        return v;
    };

    SystemSpec out;
    switch (kind) {
    case SystemKind::DoublePendulum:
        out = double_pendulum(take("alpha", 1.0, true), take("sigma", 1.0, true));
        break;
    case SystemKind::FourWell:
        out = four_well(take("alpha", 0.0, true), take("beta", 0.0, true),
                        take("delta", 0.0, true));
        break;
    case SystemKind::HenonHeiles:
        out = henon_heiles();
        break;
    case SystemKind::StandardMap:
        out = standard_map(take("K", 0.0, true));
        break;
    }
    if (!params.empty())
        throw ConfigError("unknown parameter '" + params.begin().key() +
                          "' for " + kind_name(kind));
    return out;
}

SectionSpec default_section(const SystemSpec& sys) {
    switch (sys.kind) {
    case SystemKind::HenonHeiles:
        return SectionSpec{1, 3, 0, 0.0, 2, +1.0}; // x = 0, p_x >= 0, slice (y, p_y)
    case SystemKind::FourWell:
        return SectionSpec{0, 2, 1, 0.0, 3, +1.0}; // y = 0, p_y >= 0, slice (x, p_x)
    case SystemKind::DoublePendulum:
        return SectionSpec{1, 3, 0, 0.0, 2, +1.0}; // theta1 = 0, p1 >= 0
    default:
        not_a_flow(sys, "default_section");
    }
}

Vec4 vector_field(const SystemSpec& sys, const Vec4& s) {
    if (sys.kind == SystemKind::DoublePendulum) {
        double dth = s[1] - s[0];
        double x = std::cos(dth), sn = std::sin(dth);
        DpKinetic k = dp_kinetic(sys.alpha, sys.sigma, x);
        Vec2 p(s[2], s[3]);
        Vec2 thdot = k.A * p;
        double Q = 0.5 * p.dot(k.Ap * p);
        return Vec4(thdot[0], thdot[1],
                    -(sn * Q + sys.alpha * (1.0 + sys.sigma) * std::sin(s[0])),
                    -(-sn * Q + std::sin(s[1])));
    }
    double g1, g2;
    grad_potential(sys, s[0], s[1], g1, g2);
    return Vec4(s[2], s[3], -g1, -g2);
}

Mat4 jacobian(const SystemSpec& sys, const Vec4& s) {
    Mat4 J = Mat4::Zero();
    if (sys.kind == SystemKind::DoublePendulum) {
        double dth = s[1] - s[0];
        double x = std::cos(dth), sn = std::sin(dth);
        DpKinetic k = dp_kinetic(sys.alpha, sys.sigma, x);
        Vec2 p(s[2], s[3]);
        Vec2 u = k.Ap * p;
        double Q = 0.5 * p.dot(u);
        double Qp = 0.5 * p.dot(k.App * p);
        double sn2 = sn * sn;
        double h11 = -x * Q + sn2 * Qp +
                     sys.alpha * (1.0 + sys.sigma) * std::cos(s[0]);
        double h12 = x * Q - sn2 * Qp;
        double h22 = -x * Q + sn2 * Qp + std::cos(s[1]);
        J(0, 0) = sn * u[0];  J(0, 1) = -sn * u[0];
        J(1, 0) = sn * u[1];  J(1, 1) = -sn * u[1];
        J.block<2, 2>(0, 2) = k.A;
        J(2, 0) = -h11; J(2, 1) = -h12; J(2, 2) = -sn * u[0]; J(2, 3) = -sn * u[1];
        J(3, 0) = -h12; J(3, 1) = -h22; J(3, 2) = sn * u[0];  J(3, 3) = sn * u[1];
        return J;
    }
    double vxx, vxy, vyy;
    hess_potential(sys, s[0], s[1], vxx, vxy, vyy);
    J(0, 2) = 1.0;
    J(1, 3) = 1.0;
    J(2, 0) = -vxx; J(2, 1) = -vxy;
    J(3, 0) = -vxy; J(3, 1) = -vyy;
    return J;
}

void vector_field_and_jacobian(const SystemSpec& sys, const Vec4& s, Vec4& f,
                               Mat4& J) {
    if (sys.kind != SystemKind::DoublePendulum) {
        f = vector_field(sys, s);
        J = jacobian(sys, s);
        return;
    }
    double dth = s[1] - s[0];
    double x = std::cos(dth), sn = std::sin(dth);
    double s1 = std::sin(s[0]), c1 = std::cos(s[0]);
    double s2 = std::sin(s[1]), c2 = std::cos(s[1]);
    double ms = sys.alpha * (1.0 + sys.sigma);
    DpKinetic k = dp_kinetic(sys.alpha, sys.sigma, x);
    Vec2 p(s[2], s[3]);
    Vec2 thdot = k.A * p;
    Vec2 u = k.Ap * p;
    double Q = 0.5 * p.dot(u);
    double Qp = 0.5 * p.dot(k.App * p);
    double sn2 = sn * sn;
    f = Vec4(thdot[0], thdot[1], -(sn * Q + ms * s1), -(-sn * Q + s2));
    double h11 = -x * Q + sn2 * Qp + ms * c1;
    double h12 = x * Q - sn2 * Qp;
    double h22 = -x * Q + sn2 * Qp + c2;
    J.setZero();
    J(0, 0) = sn * u[0];  J(0, 1) = -sn * u[0];
    J(1, 0) = sn * u[1];  J(1, 1) = -sn * u[1];
    J.block<2, 2>(0, 2) = k.A;
    J(2, 0) = -h11; J(2, 1) = -h12; J(2, 2) = -sn * u[0]; J(2, 3) = -sn * u[1];
    J(3, 0) = -h12; J(3, 1) = -h22; J(3, 2) = sn * u[0];  J(3, 3) = sn * u[1];
}

double potential(const SystemSpec& sys, double q1, double q2) {
    switch (sys.kind) {
    case SystemKind::DoublePendulum:
        return -sys.alpha * (1.0 + sys.sigma) * std::cos(q1) - std::cos(q2);
    case SystemKind::FourWell: {
        double x2 = q1 * q1, y2 = q2 * q2;
        return x2 * x2 - sys.alpha * x2 - sys.delta * q1 + y2 * y2 - y2 +
               sys.beta * x2 * y2;
    }
    case SystemKind::HenonHeiles:
        return 0.5 * (q1 * q1 + q2 * q2) + q1 * q1 * q2 -
               q2 * q2 * q2 / 3.0;
    default:
        not_a_flow(sys, "potential");
    }
}

double energy(const SystemSpec& sys, const Vec4& s) {
    if (sys.kind == SystemKind::DoublePendulum) {
        double x = std::cos(s[1] - s[0]);
        DpKinetic k = dp_kinetic(sys.alpha, sys.sigma, x);
        Vec2 p(s[2], s[3]);
        return 0.5 * p.dot(k.A * p) + potential(sys, s[0], s[1]);
    }
    if (is_map(sys.kind)) not_a_flow(sys, "energy");
    return 0.5 * (s[2] * s[2] + s[3] * s[3]) + potential(sys, s[0], s[1]);
}

std::optional<Vec4> solve_constrained_momentum(const SystemSpec& sys,
                                               const SectionSpec& sec,
                                               const Vec2& slice_point,
                                               double E) {
    if (is_map(sys.kind)) not_a_flow(sys, "solve_constrained_momentum");
    if (!std::isfinite(E)) throw ConfigError("energy must be finite");

    Vec4 s = Vec4::Zero();
    s[sec.fixed] = sec.fixed_value;
    s[sec.slice_q] = slice_point[0];
    s[sec.slice_p] = slice_point[1];

    if (sys.kind == SystemKind::DoublePendulum) {
        if (sec.fixed != 0 || sec.constrained != 2)
            throw ConfigError("double pendulum supports only the theta1 section");
        double x = std::cos(s[1] - s[0]);
        DpKinetic k = dp_kinetic(sys.alpha, sys.sigma, x);
        double V = potential(sys, s[0], s[1]);
        double p2 = s[3];
        // (1/2)A11 p1^2 + A12 p2 p1 + (1/2)A22 p2^2 + V - E = 0
        double a = k.A(0, 0);
        double b = k.A(0, 1) * p2;
        double c = 0.5 * k.A(1, 1) * p2 * p2 + V - E;
        double disc = b * b - 2.0 * a * c;
        if (disc < 0.0) return std::nullopt;
        double root = (-b + sec.sign * std::sqrt(disc)) / a;
        if (root * sec.sign < 0.0) return std::nullopt;
        s[2] = root;
        return s;
    }

    int other = sec.constrained == 2 ? 3 : 2;
    double radicand = 2.0 * (E - potential(sys, s[0], s[1])) -
                      s[other] * s[other];
    if (radicand < 0.0) return std::nullopt;
    s[sec.constrained] = sec.sign * std::sqrt(radicand);
    return s;
}

namespace {

double slice_potential(const SystemSpec& sys, const SectionSpec& sec, double q) {
    double q1 = sec.slice_q == 0 ? q : sec.fixed_value;
    double q2 = sec.slice_q == 1 ? q : sec.fixed_value;
    return potential(sys, q1, q2);
}

/// bisect V(q) = E between a feasible and an infeasible point
double bisect_boundary(const SystemSpec& sys, const SectionSpec& sec, double E,
                       double feasible, double infeasible) {
    for (int i = 0; i < 80; ++i) {
        double mid = 0.5 * (feasible + infeasible);
        if (slice_potential(sys, sec, mid) <= E) feasible = mid;
        else infeasible = mid;
    }
    return infeasible;
}

} // namespace

SliceBounds slice_bounds(const SystemSpec& sys, const SectionSpec& sec,
                         double E) {
    if (is_map(sys.kind)) return SliceBounds{0.0, 1.0, 0.0, 1.0};

    if (sys.kind == SystemKind::DoublePendulum) {
        double vmin = -sys.alpha * (1.0 + sys.sigma) - 1.0;
        if (E <= vmin)
            throw DataError("energy below the potential floor on the section");
        double pmax = std::sqrt(2.0 * (E - vmin));
        return SliceBounds{-M_PI, M_PI, -pmax, pmax};
    }

    if (sys.kind == SystemKind::HenonHeiles) {
        if (E < 0.0)
            throw DataError("energy below the potential floor on the section");
        if (E >= 1.0 / 6.0)
            throw DataError("Hill region is unbounded at this energy");
        double hi = 0.0;
        while (slice_potential(sys, sec, hi + 1e-3) <= E) hi += 1e-3;
        double q_hi = bisect_boundary(sys, sec, E, hi, hi + 1e-3);
        double lo = 0.0;
        while (slice_potential(sys, sec, lo - 1e-3) <= E) lo -= 1e-3;
        double q_lo = bisect_boundary(sys, sec, E, lo, lo - 1e-3);
        double pmax = std::sqrt(2.0 * E); // slice potential floor is V(0,0) = 0
        return SliceBounds{q_lo, q_hi, -pmax, pmax};
    }

    // four-well: the slice potential is confining; take global extremes so a
    // two-interval Hill set (both wells) stays inside the box
    double reach = 2.0;
    while (slice_potential(sys, sec, reach) <= E + 1.0 ||
           slice_potential(sys, sec, -reach) <= E + 1.0)
        reach *= 2.0;
    const int n = 8000;
    double vmin = std::numeric_limits<double>::infinity();
    double first = std::numeric_limits<double>::quiet_NaN(), last = first;
    for (int i = 0; i <= n; ++i) {
        double q = -reach + 2.0 * reach * i / n;
        double v = slice_potential(sys, sec, q);
        vmin = std::min(vmin, v);
        if (v <= E) {
            if (std::isnan(first)) first = q;
            last = q;
        }
    }
    if (std::isnan(first))
        throw DataError("energy below the potential floor on the section");
    double step = 2.0 * reach / n;
    double q_lo = bisect_boundary(sys, sec, E, first, first - step);
    double q_hi = bisect_boundary(sys, sec, E, last, last + step);
    double pmax = std::sqrt(2.0 * std::max(0.0, E - vmin));
    return SliceBounds{q_lo, q_hi, -pmax, pmax};
}

double wrap_unit(double v) {
    double r = v - std::floor(v);
    if (r >= 1.0) r = 0.0;
    return r;
}

double torus_distance(double a, double b) {
    double d = std::abs(wrap_unit(a) - wrap_unit(b));
    return std::min(d, 1.0 - d);
}

Vec2 map_step(const SystemSpec& sys, const Vec2& s) {
    if (!is_map(sys.kind)) not_a_map(sys, "map_step");
    double y1 = wrap_unit(s[1] + sys.K / kTwoPi * std::sin(kTwoPi * s[0]));
    double x1 = wrap_unit(s[0] + y1);
    return Vec2(x1, y1);
}

Vec2 map_step_inverse(const SystemSpec& sys, const Vec2& s) {
    if (!is_map(sys.kind)) not_a_map(sys, "map_step_inverse");
    double x0 = wrap_unit(s[0] - s[1]);
    double y0 = wrap_unit(s[1] - sys.K / kTwoPi * std::sin(kTwoPi * x0));
    return Vec2(x0, y0);
}

Mat2 map_tangent(const SystemSpec& sys, const Vec2& s) {
    if (!is_map(sys.kind)) not_a_map(sys, "map_tangent");
    double c = sys.K * std::cos(kTwoPi * s[0]);
    Mat2 T;
    T << 1.0 + c, 1.0,
         c, 1.0;
    return T;
}

} // namespace chaosld
