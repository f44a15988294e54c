#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chaosld/indicators.hpp"
#include "chaosld/systems.hpp"

namespace chaosld {

/// Recipe for one labeled ensemble: a system, its case list (energies for
/// flows, K values for maps), per-case sample count, horizons, and the seed.
/// Zero horizons resolve to the per-kind defaults; a NaN threshold resolves
/// to the per-kind ground-truth threshold.
struct EnsembleSpec {
    SystemSpec system;
    std::vector<double> cases;
    std::size_t n_per_case = 500;
    SectionSpec section;
    std::uint64_t rng_seed = 1;
    double tau_ld = 0.0;
    double t_sali = 0.0;
    double sali_threshold = std::numeric_limits<double>::quiet_NaN();
    double stencil_sigma = 1e-4;
    IntegratorConfig integrator;

    void validate() const;
    double resolved_tau() const;    // 700 / 700 / 1000 flows, 5000 map
    double resolved_t_sali() const; // 1e5 time units or iterations
    double resolved_threshold() const;
    /// the system of one case (maps get their K substituted)
    SystemSpec case_system(std::size_t case_index) const;

    std::string to_json() const;
    static EnsembleSpec from_json(const std::string& text);
};

struct SamplePoint {
    std::size_t case_index;
    Vec2 slice;
    Vec4 state; // embedded phase state; (x, y, 0, 0) for maps
};

/// Uniform rejection sampling over the slice-plane bounding box of the
/// allowed region (maps: uniform on [0,1)^2), case-major order. Each sample
/// owns a counter-derived RNG stream, so the list is reproducible and
/// order-independent. Persistent infeasibility (rate < 1e-4) raises
/// DataError.
std::vector<SamplePoint> sample_ensemble(const EnsembleSpec& spec);

struct LabeledDataset {
    std::vector<IndicatorRecord> records;
    EnsembleSpec spec;
    std::size_t discarded_count = 0;
};

/// Full pipeline per sample: stencil, five forward descriptors, alignment
/// index to t_sali, indicators, threshold label. Stencil-infeasible or
/// non-integrable candidates are discarded (counted) and redrawn from the
/// same stream. Bit-identical output for any thread count.
LabeledDataset generate_dataset(const EnsembleSpec& spec, int threads = 0);

struct ThresholdResult {
    double threshold;
    std::vector<double> bin_edges; // first-pass histogram, size counts + 1
    std::vector<std::size_t> counts;
    double peak_low, peak_high; // the two dominant peak centers
    bool converged;
    int iterations;
};

/// Valley of the smoothed histogram between its two dominant peaks,
/// iteratively refined at doubling resolution until the position settles
/// within 1% of the data range (at most 10 passes). Requires >= 200 finite
/// values; a histogram without a second peak at >= 5% of the first raises
/// DataError.
ThresholdResult find_threshold(const std::vector<double>& values,
                               int bins = 100, int smooth_window = 5);

// ---- desk-scale transfer experiment -----------------------------------------
// The ensemble defaults behind the `reproduce` command and the acceptance
// suite: train on the double pendulum, evaluate on the other systems.

/// Twenty pendulum energies between the potential minimum and 25% past the
/// upright saddle: twelve up to the lower one-arm saddle (the mixed
/// order-chaos band), eight beyond it.
std::vector<double> pendulum_energy_grid(const SystemSpec& sys);

/// Training side: four (alpha, sigma) parameter cases, each over its
/// 20-energy grid. Case c draws from the derived stream (seed, 100 + c).
std::vector<EnsembleSpec> pendulum_training_campaign(std::size_t n_per_energy,
                                                     std::uint64_t seed);

/// Evaluation sides: five Henon-Heiles energies (1/20 .. 1/8) and three
/// standard-map kick strengths (0.5, 0.971635, 1.5).
EnsembleSpec henon_heiles_transfer_spec(std::size_t n_per_case,
                                        std::uint64_t seed);
EnsembleSpec standard_map_transfer_spec(std::size_t n_per_case,
                                        std::uint64_t seed);

} // namespace chaosld
