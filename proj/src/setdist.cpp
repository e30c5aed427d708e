#include "pcad/setdist.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>

namespace pcad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SoA {
    std::vector<double> x, y, z, sq;
    explicit SoA(const PointCloud& c) {
        const int n = c.size();
        x.resize(n);
        y.resize(n);
        z.resize(n);
        sq.resize(n);
        for (int i = 0; i < n; ++i) {
            x[i] = c.pts[i].x();
            y[i] = c.pts[i].y();
            z[i] = c.pts[i].z();
            sq[i] = x[i] * x[i] + y[i] * y[i] + z[i] * z[i];
        }
    }
};

// Index of the nearest point of T for every point of S; ties go to the
// lower index (strict < while scanning ascending). Every arithmetic step
// of the distance is commutative under the S/T swap, so the selected
// pairs and the chamfer value are exactly symmetric.
std::vector<int> nearest_indices_soa(const SoA& s, const SoA& t) {
    const int ns = static_cast<int>(s.x.size());
    const int nt = static_cast<int>(t.x.size());
    std::vector<int> nn(ns);
    for (int i = 0; i < ns; ++i) {
        const double xi = s.x[i], yi = s.y[i], zi = s.z[i], sqi = s.sq[i];
        double best = kInf;
        int arg = 0;
        for (int j = 0; j < nt; ++j) {
            double d = (sqi + t.sq[j]) - 2.0 * (xi * t.x[j] + yi * t.y[j] + zi * t.z[j]);
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        nn[i] = arg;
    }
    return nn;
}

std::vector<int> nearest_indices(const PointCloud& S, const PointCloud& T) {
    return nearest_indices_soa(SoA(S), SoA(T));
}

double directed_mean(const PointCloud& S, const PointCloud& T, const std::vector<int>& nn) {
    double sum = 0.0;
    for (int i = 0; i < S.size(); ++i) sum += (S.pts[i] - T.pts[nn[i]]).norm();
    return sum / static_cast<double>(S.size());
}

Eigen::MatrixXd pairwise_cost(const PointCloud& S, const PointCloud& T) {
    Eigen::MatrixXd c(S.size(), T.size());
    for (int i = 0; i < S.size(); ++i)
        for (int j = 0; j < T.size(); ++j) c(i, j) = (S.pts[i] - T.pts[j]).norm();
    return c;
}

double matching_cost(const Eigen::MatrixXd& cost, const std::vector<int>& forward) {
    double sum = 0.0;
    for (int i = 0; i < static_cast<int>(forward.size()); ++i) sum += cost(i, forward[i]);
    return sum;
}

void require_same_size(const PointCloud& S, const PointCloud& T, const char* op) {
    if (S.size() != T.size())
        throw std::invalid_argument(std::string(op) + ": size mismatch (" +
                                    std::to_string(S.size()) + " vs " + std::to_string(T.size()) +
                                    "), a bijection needs equal sizes");
    if (S.empty()) throw std::invalid_argument(std::string(op) + ": empty cloud");
}

} // namespace

DistanceReport chamfer(const PointCloud& S, const PointCloud& T) {
    if (S.empty() || T.empty()) throw std::invalid_argument("chamfer: empty cloud");
    SoA s(S), t(T);
    DistanceReport r;
    r.forward = nearest_indices_soa(s, t);
    r.backward = nearest_indices_soa(t, s);
    r.value = directed_mean(S, T, r.forward) + directed_mean(T, S, r.backward);
    return r;
}

std::vector<Eigen::Vector3d> chamfer_grad(const PointCloud& S, const PointCloud& T) {
    if (S.empty() || T.empty()) throw std::invalid_argument("chamfer_grad: empty cloud");
    SoA s(S), t(T);
    std::vector<int> s_to_t = nearest_indices_soa(s, t);
    std::vector<int> t_to_s = nearest_indices_soa(t, s);
    std::vector<Eigen::Vector3d> grad(T.size(), Eigen::Vector3d::Zero());
    const double ws = 1.0 / static_cast<double>(S.size());
    const double wt = 1.0 / static_cast<double>(T.size());
    for (int i = 0; i < S.size(); ++i) {
        int j = s_to_t[i];
        Eigen::Vector3d d = T.pts[j] - S.pts[i];
        double norm = d.norm();
        if (norm > 0.0) grad[j] += (ws / norm) * d;
    }
    for (int j = 0; j < T.size(); ++j) {
        int i = t_to_s[j];
        Eigen::Vector3d d = T.pts[j] - S.pts[i];
        double norm = d.norm();
        if (norm > 0.0) grad[j] += (wt / norm) * d;
    }
    return grad;
}

DistanceReport emd_exact(const PointCloud& S, const PointCloud& T) {
    require_same_size(S, T, "emd_exact");
    const int n = S.size();
    if (n > 1024)
        throw std::invalid_argument(
            "emd_exact: n=" + std::to_string(n) +
            " exceeds the 1024-point guard for the cubic solver; use emd_approx");

    Eigen::MatrixXd cost = pairwise_cost(S, T);

    // Shortest augmenting path with dual potentials. Column n is the
    // virtual start of each augmentation.
    std::vector<double> u(n, 0.0), v(n + 1, 0.0);
    std::vector<int> owner(n + 1, -1); // owner[j] = row matched to column j
    std::vector<int> way(n, 0);
    for (int i = 0; i < n; ++i) {
        owner[n] = i;
        int j0 = n;
        std::vector<double> minv(n, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = owner[j0];
            double delta = kInf;
            int j1 = -1;
            for (int j = 0; j < n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    if (owner[j] >= 0) u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != -1);
        // unwind the augmenting path
        do {
            int j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != n);
    }

    DistanceReport r;
    r.forward.assign(n, -1);
    r.backward.assign(n, -1);
    for (int j = 0; j < n; ++j) {
        r.forward[owner[j]] = j;
        r.backward[j] = owner[j];
    }
    r.value = matching_cost(cost, r.forward);
    return r;
}

DistanceReport emd_approx(const PointCloud& S, const PointCloud& T, double epsilon) {
    require_same_size(S, T, "emd_approx");
    if (!(epsilon > 0.0)) throw std::invalid_argument("emd_approx: epsilon must be positive");
    const int n = S.size();

    Eigen::MatrixXd cost = pairwise_cost(S, T);
    double range = cost.maxCoeff() - cost.minCoeff();

    std::vector<double> price(n, 0.0);
    std::vector<int> owner(n, -1);   // object -> person
    std::vector<int> object(n, -1);  // person -> object

    // One auction round at a fixed eps. Persons bid best-value increments,
    // so every contested price rises by at least eps and the phase ends
    // with a complete assignment satisfying eps-complementary slackness.
    auto run_phase = [&](double eps) {
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(object.begin(), object.end(), -1);
        std::deque<int> unassigned;
        for (int i = 0; i < n; ++i) unassigned.push_back(i);
        while (!unassigned.empty()) {
            int i = unassigned.front();
            unassigned.pop_front();
            double best = -kInf, second = -kInf;
            int jbest = 0;
            for (int j = 0; j < n; ++j) {
                double value = -cost(i, j) - price[j];
                if (value > best) {
                    second = best;
                    best = value;
                    jbest = j;
                } else if (value > second) {
                    second = value;
                }
            }
            if (n == 1) second = best;
            price[jbest] += (best - second) + eps;
            if (owner[jbest] != -1) {
                object[owner[jbest]] = -1;
                unassigned.push_back(owner[jbest]);
            }
            owner[jbest] = i;
            object[i] = jbest;
        }
    };

    // Epsilon scaling: coarse phases position the prices, the final phase
    // runs at the requested epsilon and yields the n*epsilon bound.
    double eps = range / 5.0;
    while (eps > epsilon) {
        run_phase(eps);
        eps /= 5.0;
    }
    run_phase(epsilon);

    DistanceReport r;
    r.forward = object;
    r.backward = owner;
    r.value = matching_cost(cost, r.forward);
    return r;
}

} // namespace pcad
