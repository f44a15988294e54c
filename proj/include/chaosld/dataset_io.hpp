#pragma once

#include <string>

#include "chaosld/ensembles.hpp"

namespace chaosld {

/// Persist a labeled dataset: CSV with the fixed 17-column header at 17
/// significant digits, plus a sidecar `<path>.meta.json` holding the
/// ensemble spec and the discarded-candidate count. No timestamps; a rerun
/// of the same spec writes identical bytes.
void write_dataset(const LabeledDataset& dataset, const std::string& csv_path);

/// Read a dataset back. The header must match the writer's exactly. The
/// sidecar is optional: without it the spec is left default-constructed.
/// Columns not persisted (neighbor descriptors, horizon) read back as NaN.
LabeledDataset read_dataset(const std::string& csv_path);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

struct CachedDataset {
    LabeledDataset dataset;
    bool from_cache = false;
    double seconds = 0.0; // generation wall time; 0 on a cache hit
};

/// Reuse `csv_path` when its sidecar records an identical spec; otherwise
/// generate (creating parent directories) and persist. `force_fresh`
/// regenerates unconditionally.
CachedDataset generate_or_load(const EnsembleSpec& spec,
                               const std::string& csv_path, int threads = 0,
                               bool force_fresh = false);

} // namespace chaosld
