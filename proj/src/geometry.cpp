#include "pcad/geometry.hpp"

#include "pcad/common.hpp"
#include "pcad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pcad {

PointCloud normalize(const PointCloud& cloud) {
    if (cloud.empty()) throw std::invalid_argument("normalize: empty cloud");
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : cloud.pts) centroid += p;
    centroid /= static_cast<double>(cloud.size());

    PointCloud out;
    out.pts.reserve(cloud.pts.size());
    double max_norm = 0.0;
    for (const auto& p : cloud.pts) {
        Eigen::Vector3d q = p - centroid;
        max_norm = std::max(max_norm, q.norm());
        out.pts.push_back(q);
    }
    if (max_norm == 0.0) return out; // degenerate: all points equal
    for (auto& q : out.pts) q /= max_norm;
    return out;
}

PointCloud random_sample(const PointCloud& cloud, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("random_sample: n must be >= 1");
    if (cloud.size() < n)
        throw std::invalid_argument("random_sample: cloud has " + std::to_string(cloud.size()) +
                                    " points, need " + std::to_string(n));
    std::vector<int> order(cloud.pts.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    // partial Fisher-Yates: the first n slots are a uniform sample
    for (int i = 0; i < n; ++i) {
        std::size_t j = i + rng.below(order.size() - i);
        std::swap(order[i], order[j]);
    }
    PointCloud out;
    out.pts.reserve(n);
    for (int i = 0; i < n; ++i) out.pts.push_back(cloud.pts[order[i]]);
    return out;
}

NeighborGraph knn_graph(const PointCloud& cloud, int k) {
    const int n = cloud.size();
    if (k < 1) throw std::invalid_argument("knn_graph: k must be >= 1");
    if (n <= k)
        throw std::invalid_argument("knn_graph: need more than k=" + std::to_string(k) +
                                    " points, got " + std::to_string(n));
    NeighborGraph g;
    g.n = n;
    g.k = k;
    g.idx.resize(static_cast<std::size_t>(n) * k);

    // squared distances via the Gram matrix: d2(i,j) = |xi|^2 + |xj|^2 - 2<xi,xj>
    Eigen::MatrixXd x(n, 3);
    for (int i = 0; i < n; ++i) x.row(i) = cloud.pts[i].transpose();
    Eigen::MatrixXd gram = x * x.transpose();
    Eigen::VectorXd sq = gram.diagonal();

    std::vector<std::pair<double, int>> cand(n - 1);
    for (int i = 0; i < n; ++i) {
        const double* gcol = gram.col(i).data();
        int c = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            cand[c++] = {(sq[i] + sq[j]) - 2.0 * gcol[j], j};
        }
        // (distance, index) order makes ties deterministic
        std::nth_element(cand.begin(), cand.begin() + k - 1, cand.end());
        std::sort(cand.begin(), cand.begin() + k);
        for (int j = 0; j < k; ++j) g.idx[static_cast<std::size_t>(i) * k + j] = cand[j].second;
    }
    return g;
}

Eigen::MatrixXd local_covariance(const PointCloud& cloud, const NeighborGraph& graph) {
    if (graph.n != cloud.size())
        throw std::invalid_argument("local_covariance: graph does not match cloud");
    const int n = graph.n;
    const int k = graph.k;
    Eigen::MatrixXd out(n, 9);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (int j = 0; j < k; ++j) mean += cloud.pts[graph.at(i, j)];
        mean /= static_cast<double>(k);
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j = 0; j < k; ++j) {
            Eigen::Vector3d d = cloud.pts[graph.at(i, j)] - mean;
            for (int r = 0; r < 3; ++r)
                for (int c = r; c < 3; ++c) cov(r, c) += d[r] * d[c];
        }
        cov /= static_cast<double>(k);
        // mirror the upper triangle so symmetry is exact
        cov(1, 0) = cov(0, 1);
        cov(2, 0) = cov(0, 2);
        cov(2, 1) = cov(1, 2);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out(i, 3 * r + c) = cov(r, c);
    }
    return out;
}

SphereGrid fibonacci_sphere(int m) {
    if (m < 1) throw std::invalid_argument("fibonacci_sphere: m must be >= 1");
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    SphereGrid grid;
    grid.pts.reserve(m);
    for (int i = 0; i < m; ++i) {
        double z = 1.0 - 2.0 * (i + 0.5) / static_cast<double>(m);
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double az = 2.0 * M_PI * static_cast<double>(i) / golden;
        grid.pts.emplace_back(r * std::cos(az), r * std::sin(az), z);
    }
    return grid;
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open point-cloud file: " + path);
    PointCloud cloud;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        double x, y, z;
        if (!(ss >> x)) continue; // blank or comment-only line
        if (!(ss >> y >> z))
            throw io_error(path + ":" + std::to_string(lineno) + ": expected three coordinates");
        std::string rest;
        if (ss >> rest)
            throw io_error(path + ":" + std::to_string(lineno) + ": trailing token '" + rest + "'");
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
            throw io_error(path + ":" + std::to_string(lineno) + ": non-finite coordinate");
        cloud.pts.emplace_back(x, y, z);
    }
    if (cloud.empty()) throw io_error(path + ": no points");
    return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write point-cloud file: " + path);
    for (const auto& p : cloud.pts)
        std::fprintf(f, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    std::fclose(f);
}

} // namespace pcad
