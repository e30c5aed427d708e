#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace pcad {

/// An unordered set of 3D points. Point order carries no meaning; every
/// consumer is either permutation-invariant or documents its order use.
struct PointCloud {
    std::vector<Eigen::Vector3d> pts;

    int size() const { return static_cast<int>(pts.size()); }
    bool empty() const { return pts.empty(); }
};

/// k nearest neighbors per point, self excluded. Row i is sorted by
/// (distance to point i, index), so iteration order is tie-stable.
struct NeighborGraph {
    int n = 0;
    int k = 0;
    std::vector<std::int32_t> idx; // n*k, row-major

    std::int32_t at(int i, int j) const { return idx[static_cast<std::size_t>(i) * k + j]; }
};

/// m points on the unit sphere (Fibonacci lattice).
struct SphereGrid {
    std::vector<Eigen::Vector3d> pts;

    int size() const { return static_cast<int>(pts.size()); }
};

/// Translate to zero centroid and scale so the farthest point has norm 1.
/// An all-equal cloud maps to all zeros.
PointCloud normalize(const PointCloud& cloud);

/// n points drawn without replacement; deterministic given seed.
PointCloud random_sample(const PointCloud& cloud, int n, std::uint64_t seed);

/// Brute-force k-NN, ties broken by lower index. Requires cloud.size() > k.
NeighborGraph knn_graph(const PointCloud& cloud, int k);

/// Per-point 3x3 covariance of the k neighbor coordinates (divisor k),
/// flattened row-major into 9 columns.
Eigen::MatrixXd local_covariance(const PointCloud& cloud, const NeighborGraph& graph);

/// Fibonacci sphere lattice: z_i = 1 - 2(i+0.5)/m, azimuth 2*pi*i/phi.
SphereGrid fibonacci_sphere(int m);

// ASCII point-cloud files: one "x y z" per line, '#' starts a comment.
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud);

} // namespace pcad
