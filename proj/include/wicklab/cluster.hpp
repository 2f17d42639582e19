#pragma once

#include <vector>

#include "wicklab/covariance.hpp"
#include "wicklab/scaling.hpp"

namespace wicklab {

// Partition of point indices [K] at clustering distance L*eps: two indices
// share a block iff they are connected by a chain of jumps, each of metric
// length <= L*eps (transitive closure).  Blocks are sorted ascending and
// listed by their smallest element; the representative of a block is that
// smallest element.
struct Clustering {
    std::vector<std::vector<int>> blocks;
    std::vector<int> block_of; // vertex -> block index
    double L = 0.0;
    double eps = 0.0;

    int size() const { return static_cast<int>(block_of.size()); }
    int representative(int block) const { return blocks[block].front(); }
    bool is_singleton(int vertex) const {
        return blocks[block_of[vertex]].size() == 1;
    }
    bool is_representative(int vertex) const {
        return representative(block_of[vertex]) == vertex;
    }

    // Vertex indices forming singleton blocks, ascending.
    std::vector<int> singleton_vertices() const;
    // Block indices of blocks with at least two vertices, ascending.
    std::vector<int> multi_blocks() const;
    bool has_singleton() const;
};

Clustering build_clusters(const std::vector<Point>& points, double L, double eps,
                          const Scaling& s);

// Smallest power of 2 with L^alpha > 4 * c0 * lambda.
double choose_L(double lambda, double c0, double alpha);

// Empirical calibration of the constant in the clustering-distance rule.
//
// c_lem is the smallest c such that, across the supplied fixtures, every
// cluster chaos coefficient obeys |C_n(theta, X)| <= (c (1+|theta|))^{|n|} / n!
// over the theta grid and all multi-indices 1 <= |n| <= degree_cap.  The
// reported c0 = c_lem^2 * 2^alpha * lambda^3 / 2 is the growth constant of
// the summed coefficient-times-pairing series; choose_L(lambda, c0, alpha)
// then makes exp(-theta^2/(2 lambda) + c0 (1+|theta|)^2 / L^alpha) bounded
// uniformly in theta.
struct CalibrationReport {
    double c_lem = 0.0;
    double c0 = 0.0;
    double lambda = 0.0;
    double alpha = 0.0;
    int m = 0;
    int r = 0;
    double chosen_L = 0.0;
    // sup over the theta grid of the exponential factor; finite and reached
    // inside the grid when the calibration succeeded.
    double theta_sup = 0.0;
};

CalibrationReport calibrate_c0(const std::vector<GaussianVector>& fixtures, int m,
                               int r, const std::vector<double>& thetas,
                               int degree_cap = 4);

} // namespace wicklab
