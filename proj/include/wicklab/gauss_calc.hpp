#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "wicklab/theta_expr.hpp"
#include "wicklab/wick.hpp"

namespace wicklab {

// Coefficient of X^{wick n} in the chaos expansion of the m-truncated
// exponential:  C_n(theta) = (i^n / n!) d^r/dtheta^r [theta^n e^{-sigma2
// theta^2 / 2}] for n >= m, and identically zero for n < m.
ThetaExpr chaos_coefficient_expr(double sigma2, int n, int r, int m);
Complex chaos_coefficient(double theta, double sigma2, int n, int r, int m);

// E[ prod_{j in A} e^{i theta X_j} * prod_j He_{n_j}(X_j; C_jj) ].
// Computed exactly: the exponential contributes e^{-theta^2 Var(S_A)/2} and
// shifts every Hermite argument by mu_j = i theta sum_{a in A} C_{j a}, which
// is expanded through He_n(x + mu) = sum_k binom(n,k) mu^k He_{n-k}(x).
// A lists point indices; n may overlap A.  signs, when given, replace
// e^{i theta X_j} by e^{i theta signs[j] X_j}.
Complex exp_wick_expectation(const Eigen::MatrixXd& cov, const std::vector<int>& A,
                             const std::vector<int>& n, double theta,
                             const std::vector<int>& signs = {});

// Symbolic assembly of  E prod_j d^r/dtheta^r H_m(e^{i theta signs_j X_j})
// where H_m removes the chaos components of order < m.  Each factor expands
// as (i s_j X_j)^r e^{i theta s_j X_j} minus its subtracted coefficients, the
// product distributes over per-point branches, and every branch reduces to
// polynomial-times-Gaussian terms in theta, so the result is exact and can
// be evaluated on arbitrary theta grids.
ThetaExpr subtracted_product_expr(const Eigen::MatrixXd& cov, int m, int r,
                                  const std::vector<int>& signs = {});

Complex subtracted_product(const Eigen::MatrixXd& cov, int m, int r, double theta);

// E prod_j (X_j^{wick m} + X_j^{wick (m+1)}), the moment that dominates the
// subtracted product uniformly in theta.
double rhs_moment(const Eigen::MatrixXd& cov, int m, int leg_cap = 0);

// Joint chaos coefficient of a multi-point cluster:
//   C_n(theta, X) = (i^{|n|} / n!) d^r_b [ b^n E prod_j H_{m - n_j}(e^{i b_j X_j}) ]
// evaluated on the diagonal b_j = theta, with d^r_b meaning r derivatives in
// each variable.  For a single point this reduces to chaos_coefficient.
Complex cluster_coefficient(const Eigen::MatrixXd& cov, const std::vector<int>& n,
                            int m, int r, double theta);

} // namespace wicklab
