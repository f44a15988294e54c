#pragma once

#include <vector>

#include "chaosld/integrator.hpp"
#include "chaosld/systems.hpp"

namespace chaosld {

enum class TimeDirection { Forward, Backward };

/// Trajectory with the p = 1/2 arc-measure accumulator attached.
struct LdResult {
    Vec4 final_state;
    double ld;
};

struct MapLdResult {
    Vec2 final_state;
    double ld;
};

/// Alignment-index history sampled at geometrically spaced times.
/// `t` holds continuous times or iteration counts; the series ends early
/// (floor_hit) once the index drops below `floor`.
struct SaliSeries {
    std::vector<double> t;
    std::vector<double> log10_sali;
    bool floor_hit = false;
    double floor = 1e-14;

    double final_log10() const { return log10_sali.back(); }
};

/// Integrate the flow over [0, t_end]; plain state, no accumulators.
Vec4 propagate_state(const SystemSpec& sys, const Vec4& s0, double t_end,
                     const IntegratorConfig& cfg = {});

/// Accumulate the Lagrangian descriptor sum_i |f_i|^(1/2) dt over tau time
/// units. Backward runs integrate the time-reversed field; the integrand is
/// nonnegative either way, so both descriptors are positive.
LdResult propagate_ld(const SystemSpec& sys, const Vec4& s0, double tau,
                      TimeDirection dir, const IntegratorConfig& cfg = {});

/// Track two deviation vectors (started at the canonical e1, e2, renormalized
/// after every accepted step) and sample the smaller alignment index at times
/// 1, stride, stride^2, ... capped by t_max.
SaliSeries propagate_sali(const SystemSpec& sys, const Vec4& s0, double t_max,
                          double sample_stride = 1.2,
                          const IntegratorConfig& cfg = {});

/// Discrete analogue of propagate_ld: sum of per-iterate minimal-image
/// displacements raised to the 1/2 power. Backward uses the inverse map.
MapLdResult iterate_map_ld(const SystemSpec& sys, const Vec2& s0,
                           std::size_t n_iter, TimeDirection dir);

/// Discrete analogue of propagate_sali via the tangent map.
SaliSeries iterate_map_sali(const SystemSpec& sys, const Vec2& s0,
                            std::size_t n_iter, double sample_stride = 1.2);

/// Directed intersections of a flow trajectory with the section plane,
/// refined on the integrator's dense output until the fixed coordinate is
/// below 1e-10 in magnitude. Points whose constrained momentum violates the
/// section sign are skipped. Returns slice coordinates (slice_q, slice_p).
std::vector<Vec2> poincare_section(const SystemSpec& sys, const Vec4& s0,
                                   const SectionSpec& sec,
                                   std::size_t n_crossings, double t_max,
                                   const IntegratorConfig& cfg = {});

} // namespace chaosld
