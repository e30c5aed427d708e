#pragma once

#include "pcad/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pcad {

struct Record {
    PointCloud cloud;
    std::string label;
    std::string id;
};

/// Labeled, normalized point clouds with unique ids and >= 2 samples per
/// class.
struct LabeledDataset {
    std::vector<Record> records;

    /// Distinct class labels, sorted.
    std::vector<std::string> class_names() const;
    int size() const { return static_cast<int>(records.size()); }
};

/// Names accepted by synth_generate.
const std::vector<std::string>& synthetic_classes();

/// Deterministic synthetic shape families: uniform surface samples with a
/// random rotation, a scale in [0.8, 1.2], Gaussian jitter, then
/// normalization.
LabeledDataset synth_generate(const std::vector<std::string>& classes, int per_class,
                              int n_points, double noise_sigma, std::uint64_t seed);

/// JSON manifest {class: [cloud paths]} relative to the manifest directory.
/// Each file is loaded, sampled to n_points, and normalized.
LabeledDataset load_manifest(const std::string& path, int n_points, std::uint64_t seed);

/// Writes one xyz file per record plus manifest.json into dir.
/// Returns the manifest path.
std::string export_dataset(const std::string& dir, const LabeledDataset& dataset);

struct CategorySplit {
    LabeledDataset train;               // anomaly-free by construction
    LabeledDataset test;                // held-out normals + all anomalies
    std::vector<char> test_is_anomaly;  // parallel to test.records
};

/// Category-out split: every non-anomaly class keeps (1 - holdout_fraction)
/// of its shuffled samples for training; the rest plus the whole anomaly
/// class form the test set.
CategorySplit category_out_split(const LabeledDataset& dataset, const std::string& anomaly_class,
                                 double holdout_fraction, std::uint64_t seed);

} // namespace pcad
