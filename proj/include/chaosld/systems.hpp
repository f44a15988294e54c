#pragma once

#include <array>
#include <optional>
#include <string>

#include "chaosld/types.hpp"

namespace chaosld {

enum class SystemKind { DoublePendulum, FourWell, HenonHeiles, StandardMap };

bool is_map(SystemKind kind);
std::string kind_name(SystemKind kind);
SystemKind kind_from_name(const std::string& name);

/// A concrete dynamical system: one of the three 2-dof Hamiltonian flows
/// or the standard map on the unit torus.
///
/// Continuous state ordering is (q1, q2, p1, p2); the double pendulum reads
/// (theta1, theta2, p1, p2), the wells (x, y, p_x, p_y). Map state is (x, y).
struct SystemSpec {
    SystemKind kind = SystemKind::HenonHeiles;
    double alpha = 0.0; // double pendulum l1/l2, four-well x^2 coefficient
    double sigma = 0.0; // double pendulum m1/m2
    double beta = 0.0;  // four-well coupling
    double delta = 0.0; // four-well tilt
    double K = 0.0;     // standard map kick strength

    static SystemSpec double_pendulum(double alpha, double sigma);
    static SystemSpec four_well(double alpha, double beta, double delta);
    static SystemSpec henon_heiles();
    static SystemSpec standard_map(double K);

    std::string to_json() const;
    static SystemSpec from_json(const std::string& text);
};

/// Poincare-style sampling plane: two slice coordinates, one coordinate
/// pinned to a value, and the remaining momentum solved from the energy.
struct SectionSpec {
    int slice_q;     // state index reported as q1
    int slice_p;     // state index reported as q2
    int fixed;       // state index held at fixed_value
    double fixed_value;
    int constrained; // state index solved from the energy
    double sign;     // sign convention for the constrained momentum (+1/-1)
};

/// Per-system convention: Henon-Heiles x = 0 (p_x >= 0, slice y/p_y),
/// four-well y = 0 (p_y >= 0, slice x/p_x), double pendulum theta1 = 0
/// (p1 >= 0, slice theta2/p2).
SectionSpec default_section(const SystemSpec& sys);

/// Axis-aligned bounding box of the energetically allowed set in the
/// slice plane, used for rejection sampling.
struct SliceBounds {
    double q_lo, q_hi;
    double p_lo, p_hi;
};
SliceBounds slice_bounds(const SystemSpec& sys, const SectionSpec& sec, double energy);

// ---- continuous-flow operations (StandardMap throws UnsupportedOperation) --

Vec4 vector_field(const SystemSpec& sys, const Vec4& s);
Mat4 jacobian(const SystemSpec& sys, const Vec4& s);

/// Field and Jacobian in one pass (shares the trigonometry for the
/// double pendulum; the hot path of variational integration).
void vector_field_and_jacobian(const SystemSpec& sys, const Vec4& s, Vec4& f,
                               Mat4& J);
double potential(const SystemSpec& sys, double q1, double q2);
double energy(const SystemSpec& sys, const Vec4& s);

/// Embed a slice point into the full phase space at the given energy.
/// Returns nullopt when the point is outside the allowed region (negative
/// radicand, or no root obeying the section's sign convention).
std::optional<Vec4> solve_constrained_momentum(const SystemSpec& sys,
                                               const SectionSpec& sec,
                                               const Vec2& slice_point,
                                               double energy);

// ---- map operations (continuous kinds throw UnsupportedOperation) ----------

Vec2 map_step(const SystemSpec& sys, const Vec2& s);
Vec2 map_step_inverse(const SystemSpec& sys, const Vec2& s);
Mat2 map_tangent(const SystemSpec& sys, const Vec2& s);

/// wrap a coordinate to the fundamental domain [0, 1)
double wrap_unit(double v);

/// minimal-image distance between two coordinates on the unit circle
double torus_distance(double a, double b);

} // namespace chaosld
