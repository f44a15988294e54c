#pragma once

#include <array>

#include "chaosld/propagation.hpp"
#include "chaosld/systems.hpp"

namespace chaosld {

/// Cross-shaped stencil on the 2D slice plane: the center plus one neighbor
/// at +/- sigma along each axis. Points hold exact (unwrapped) coordinates;
/// torus topology is applied downstream when a map consumes them.
struct NeighborStencil {
    Vec2 center;
    double sigma;
    /// order: center, q+, q-, p+, p-
    std::array<Vec2, 5> points;
};

NeighborStencil make_stencil(const Vec2& center, double sigma = 1e-4);

/// Embed the five stencil points on one energy shell of a continuous system.
/// The constrained momentum is re-solved per point, so all returned states
/// share the energy exactly. Throws StencilInfeasible when a point falls
/// outside the allowed region (the caller may discard and resample).
std::array<Vec4, 5> embed_stencil(const SystemSpec& sys, const SectionSpec& sec,
                                  const NeighborStencil& stencil, double energy);

struct Indicators {
    double d; // mean absolute deviation from the center, relative
    double r; // deviation of the neighbor mean from the center, relative
    double c; // mean central first difference, per unit sigma
    double s; // mean second difference, per unit sigma^2
};

/// Neighbor-difference indicators from five forward descriptor values.
/// `ld_neighbors` order matches NeighborStencil::points[1..4].
Indicators compute_indicators(double ld_center,
                              const std::array<double, 4>& ld_neighbors,
                              double sigma);

/// Ground-truth decision: chaotic iff the final log10 alignment index fell
/// below the threshold. A floored series is below any usable threshold.
Label label_by_sali(double sali_log10_final, double threshold);

/// Default thresholds on final log10 SALI: -13 for maps (1e5 iterations),
/// -8 for flows (1e5 time units).
double default_sali_threshold(SystemKind kind);

enum class AsymptoteKind {
    PowerLaw,    // slope of log10 SALI vs log10 t over the last two decades
    Exponential, // slope of log10 SALI vs t over the later pre-floor samples
    Plateau,     // mean log10 SALI over the second half of the samples
};

/// Least-squares asymptote of an alignment-index series. Floored series are
/// fitted over the pre-floor window only; fewer than 10 usable samples
/// raise DataError.
double fit_sali_asymptote(const SaliSeries& series, AsymptoteKind kind);

/// One labeled sample: a stencil's descriptor values, the derived
/// indicators, and the alignment-index ground truth.
struct IndicatorRecord {
    SystemSpec system;
    double energy; // NaN for maps
    Vec2 slice;    // stencil center (slice plane or torus coordinates)
    double ld_center;
    std::array<double, 4> ld_neighbors;
    Indicators indicators;
    double log10_s; // NaN sentinel when s == 0
    double sali_log10;
    Label label;
    double horizon; // descriptor time tau, or iteration count for maps
};

} // namespace chaosld
