#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wicklab/cluster.hpp"
#include "wicklab/covariance.hpp"

namespace wicklab {

// Multigraph on the K points of a GaussianVector: symmetric multiplicity
// matrix, zero diagonal (no self-loops).  Edge values are the pairwise
// covariances R(i,j) = E[X_i X_j] of the accompanying GaussianVector.
struct ClusterGraph {
    Eigen::MatrixXi mult;

    int K() const { return static_cast<int>(mult.rows()); }
    int degree(int v) const { return mult.row(v).sum(); }
    int total_degree() const { return mult.sum(); }
    std::vector<int> degrees() const;
};

ClusterGraph empty_graph(int K);

// |Gamma| = prod_{i<j} R(i,j)^{mult(i,j)}; empty product is 1.
double graph_value(const ClusterGraph& g, const Eigen::MatrixXd& R);
// log |Gamma|; requires every touched R(i,j) > 0.
double log_graph_value(const ClusterGraph& g, const Eigen::MatrixXd& R);

// One rewrite step together with its numeric inequality
//   value_before <= factor * value_after  (relative tolerance 1e-12),
// verified at emission.  `factor` uses the actual pairwise distances;
// `worst_factor` is the distance-free bound depending on L alone.
struct RewriteCertificate {
    std::string kind; // reduce-case-1 | reduce-case-2 | reduce-a | reduce-b |
                      // enhance-case-1 | enhance-case-2 | enhance-case-3
    double factor = 1.0;
    double worst_factor = 1.0;
    double value_before = 0.0;
    double value_after = 0.0;
    std::vector<int> degrees_before;
    std::vector<int> degrees_after;
};

struct OmegaStarReport {
    bool member = false;
    // Human-readable violations: "support: ...", "condition 1: ...",
    // "condition 2: ...".
    std::vector<std::string> violations;
};

// Degree profile admissible for the rewrite system: positive degree only on
// singleton vertices (>= m there) and on representatives of multi-blocks.
bool admissible_support(const ClusterGraph& g, const Clustering& c, int m,
                        std::string* why = nullptr);

// Minimal graphs: singleton degrees in {m, m+1}, representative degrees
// <= m+1 with all edges to one single singleton vertex, all other degrees 0.
OmegaStarReport omega_star_member(const ClusterGraph& g, const Clustering& c, int m);

struct RewriteResult {
    ClusterGraph graph;
    std::vector<RewriteCertificate> certificates;
    // Product of claimed factors, also in log form.
    double total_factor = 1.0;
    double log_total_factor = 0.0;
};

// Rewrites an admissible graph to a minimal one.  Every step strictly
// decreases the total degree and emits a verified certificate; throws
// std::invalid_argument on an inadmissible input and std::logic_error if a
// certificate inequality fails numerically.
RewriteResult reduce_graph(const ClusterGraph& g, const Clustering& c, int m,
                           const GaussianVector& gv);

// Raises every vertex of a minimal graph to degree m or m+1 by moving and
// adding edges inside multi-blocks, keeping singleton degrees unchanged.
// Requires at least one singleton.
RewriteResult enhance_graph(const ClusterGraph& g, const Clustering& c, int m,
                            const GaussianVector& gv);

// Cyclic-product lower bound for a clustering without singletons:
//   prod_{blocks} (prod_{consecutive pairs} R)^{floor((m+1)/2)}.
// Verifies numerically that E prod_j (X_j^{wick m} + X_j^{wick m+1}) is at
// least the returned value and throws std::logic_error otherwise.
double no_singleton_bound(const GaussianVector& gv, const Clustering& c, int m,
                          int leg_cap = 0);

// Text round-trip for a graph instance: header lines (k, m, alpha, eps,
// lambda, l, scaling), then `point i x...`, `cov i j v`, `edge i j mult`.
struct GraphBundle {
    GaussianVector gv;
    Clustering clustering;
    ClusterGraph graph;
    int m = 0;
};

std::string serialize_graph(const GraphBundle& b);
GraphBundle parse_graph(const std::string& text);
void write_graph_file(const std::string& path, const GraphBundle& b);
GraphBundle read_graph_file(const std::string& path);

} // namespace wicklab
