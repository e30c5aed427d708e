#pragma once

#include "pcad/geometry.hpp"

#include <vector>

namespace pcad {

/// A point-set distance plus the pairing that produced it.
/// Chamfer: forward[i] = nearest T index for S[i], backward[j] = nearest S
/// index for T[j]. EMD: forward is the optimal bijection S->T, backward its
/// inverse.
struct DistanceReport {
    double value = 0.0;
    std::vector<int> forward;
    std::vector<int> backward;
};

/// Chamfer distance with unsquared Euclidean norms:
/// (1/|S|) sum_x min_t ||x-t|| + (1/|T|) sum_t min_x ||t-x||.
/// Equidistant neighbors resolve to the lower index.
DistanceReport chamfer(const PointCloud& S, const PointCloud& T);

/// Gradient of chamfer(S, T) with respect to T's coordinates, holding both
/// nearest-neighbor assignments fixed. A T point coincident with its match
/// contributes zero (subgradient at the norm kink).
std::vector<Eigen::Vector3d> chamfer_grad(const PointCloud& S, const PointCloud& T);

/// Exact minimum-cost bijection (shortest augmenting path assignment solver).
/// Requires |S| == |T| <= 1024; larger inputs are directed to emd_approx.
DistanceReport emd_exact(const PointCloud& S, const PointCloud& T);

/// Auction algorithm with epsilon scaling. The returned value is the true
/// cost of the found bijection, so it never undercuts the optimum and is at
/// most n*epsilon above it.
DistanceReport emd_approx(const PointCloud& S, const PointCloud& T, double epsilon);

} // namespace pcad
