#include "wicklab/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "wicklab/gauss_calc.hpp"

namespace wicklab {

namespace {

int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

// Enumerates multi-indices n in N^K with 1 <= |n| <= cap.
void for_each_multi_index(int K, int cap,
                          const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> n(K, 0);
    while (true) {
        int total = std::accumulate(n.begin(), n.end(), 0);
        if (total >= 1 && total <= cap) fn(n);
        int j = 0;
        while (j < K) {
            if (++n[j] <= cap) break;
            n[j] = 0;
            ++j;
        }
        if (j == K) break;
    }
}

} // namespace

std::vector<int> Clustering::singleton_vertices() const {
    std::vector<int> out;
    for (const auto& b : blocks)
        if (b.size() == 1) out.push_back(b.front());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> Clustering::multi_blocks() const {
    std::vector<int> out;
    for (int b = 0; b < static_cast<int>(blocks.size()); ++b)
        if (blocks[b].size() >= 2) out.push_back(b);
    return out;
}

bool Clustering::has_singleton() const {
    for (const auto& b : blocks)
        if (b.size() == 1) return true;
    return false;
}

Clustering build_clusters(const std::vector<Point>& points, double L, double eps,
                          const Scaling& s) {
    if (L <= 0.0) throw std::invalid_argument("build_clusters: L must be positive");
    if (eps <= 0.0 || eps >= 1.0)
        throw std::invalid_argument("build_clusters: eps must lie in (0,1)");
    int K = static_cast<int>(points.size());
    std::vector<int> parent(K);
    std::iota(parent.begin(), parent.end(), 0);
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j)
            if (aniso_dist(points[i], points[j], s) <= L * eps) {
                int ri = find_root(parent, i), rj = find_root(parent, j);
                if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
            }

    Clustering c;
    c.L = L;
    c.eps = eps;
    c.block_of.assign(K, -1);
    for (int i = 0; i < K; ++i) {
        int r = find_root(parent, i);
        if (r == i) {
            c.block_of[i] = static_cast<int>(c.blocks.size());
            c.blocks.push_back({i});
        } else {
            c.block_of[i] = c.block_of[r];
            c.blocks[c.block_of[r]].push_back(i);
        }
    }
    return c;
}

double choose_L(double lambda, double c0, double alpha) {
    if (lambda < 1.0) throw std::invalid_argument("choose_L: lambda must be >= 1");
    if (c0 <= 0.0) throw std::invalid_argument("choose_L: c0 must be positive");
    if (alpha <= 0.0) throw std::invalid_argument("choose_L: alpha must be positive");
    double L = 1.0;
    while (std::pow(L, alpha) <= 4.0 * c0 * lambda) {
        L *= 2.0;
        if (L > 1e300) throw std::overflow_error("choose_L: no representable L");
    }
    return L;
}

CalibrationReport calibrate_c0(const std::vector<GaussianVector>& fixtures, int m,
                               int r, const std::vector<double>& thetas,
                               int degree_cap) {
    if (fixtures.empty()) throw std::invalid_argument("calibrate_c0: no fixtures");
    if (thetas.empty()) throw std::invalid_argument("calibrate_c0: no theta grid");
    if (degree_cap < 1) throw std::invalid_argument("calibrate_c0: degree_cap < 1");

    CalibrationReport rep;
    rep.m = m;
    rep.r = r;
    rep.alpha = fixtures.front().alpha;
    rep.lambda = 1.0;
    for (const auto& gv : fixtures) rep.lambda = std::max(rep.lambda, gv.lambda);

    double c_lem = 0.0;
    for (const auto& gv : fixtures) {
        int K = static_cast<int>(gv.cov.rows());
        for_each_multi_index(K, degree_cap, [&](const std::vector<int>& n) {
            double log_nfact = 0.0;
            int total = 0;
            for (int nj : n) {
                total += nj;
                log_nfact += std::lgamma(double(nj) + 1.0);
            }
            for (double theta : thetas) {
                double mag = std::abs(cluster_coefficient(gv.cov, n, m, r, theta));
                if (mag == 0.0) continue;
                // Smallest c with mag <= (c<theta>)^{|n|} / n!.
                double logc = (std::log(mag) + log_nfact) / double(total) -
                              std::log1p(std::abs(theta));
                c_lem = std::max(c_lem, std::exp(logc));
            }
        });
    }
    rep.c_lem = c_lem;
    rep.c0 = 0.5 * c_lem * c_lem * std::pow(2.0, rep.alpha) * std::pow(rep.lambda, 3);
    rep.chosen_L = choose_L(rep.lambda, rep.c0, rep.alpha);

    double sup = 0.0;
    for (double theta : thetas) {
        double bracket = 1.0 + std::abs(theta);
        double expo = -theta * theta / (2.0 * rep.lambda) +
                      rep.c0 * bracket * bracket / std::pow(rep.chosen_L, rep.alpha);
        sup = std::max(sup, std::exp(expo));
    }
    rep.theta_sup = sup;
    return rep;
}

} // namespace wicklab
