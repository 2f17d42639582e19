#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wicklab/scaling.hpp"
#include "wicklab/test_function.hpp"

namespace wicklab {

// Stationary covariance kernel with the metadata needed by the sandwich
// checks:  eps^alpha / (Lambda (|x-y|_s + eps)^alpha)  <=  C(x-y)  <=
// Lambda eps^alpha / (|x-y|_s + eps)^alpha.
struct CovarianceModel {
    std::string kind;
    Scaling scaling{std::vector<double>{1.0}};
    double alpha = 0.5;
    double eps = 0.0;             // 0 for an unmollified kernel
    double declared_lambda = 0.0; // 0 when not yet fitted
    std::string mollifier_name;
    int grid_resolution = 0;

    std::function<double(const Point&)> kernel;

    // Limit kernel g with eps^alpha G(eps^s x) -> g(x); null when unknown.
    std::function<double(const Point&)> limit_kernel;

    // When set, kernel(u) - singular_coeff * |u|_s^{-alpha} stays continuous
    // at the origin; lets the mollifier convolution peel the singular part
    // off analytically.
    double singular_coeff = 0.0;

    // Amplitude of the raw kernel convolution at unit norm before
    // normalisation (informational).
    double raw_constant = 1.0;

    double operator()(const Point& diff) const { return kernel(diff); }

    // Kernel at metric separation r along the first axis.
    double at_separation(double r) const;

    std::string to_stanza() const;
};

// G(x) = int K(x+y) K(y) dy for the homogeneous kernel K(u) = |u|_s^{beta -
// |s|}, beta = (|s| - alpha)/2, evaluated numerically and normalised so that
// G = 1 at unit metric norm.  Requires 0 < alpha < |s|.
CovarianceModel fractional_covariance(double alpha, const Scaling& s);

// Covariance of Phi_eps = eps^{alpha/2} (rho_eps * Psi) where Psi has the
// base kernel:  C_eps(z) = eps^alpha int q_eps(w) G(z + w) dw with q_eps the
// autocorrelation of the rescaled mollifier.
CovarianceModel mollified_covariance(const CovarianceModel& base,
                                     const TestFunction& rho, double eps);

// Same covariance scaled by a constant factor (e.g. eps^{-alpha} to recover
// the unscaled mollified field).
CovarianceModel scaled_model(const CovarianceModel& m, double factor);

struct SandwichReport {
    double lambda_fit = 1.0;
    double worst_separation = 0.0;
    bool pass = true; // lambda_fit <= declared_lambda when one was declared
    std::vector<double> separations;
};

// Fits the smallest Lambda >= 1 satisfying the sandwich on the probe grid
// (default: 0 plus 63 log-spaced separations in [1e-3, 10]).  Report-only.
SandwichReport sandwich_check(const CovarianceModel& m,
                              std::vector<double> separations = {});

// Finite-dimensional restriction of a model to a point set.
struct GaussianVector {
    std::vector<Point> points;
    Eigen::MatrixXd cov;
    Scaling scaling{std::vector<double>{1.0}};
    double alpha = 0.5;
    double eps = 0.0;
    double lambda = 1.0;       // sandwich constant valid at the pairwise separations
    double min_eigenvalue = 0; // smallest Gram eigenvalue found at validation
};

// Evaluates the Gram matrix, validates symmetry and positive
// semidefiniteness (min eigenvalue >= -1e-9 * trace), and refines the
// model's sandwich constant over the exact pairwise separations so
// downstream certificate factors are sound at the separations used.
GaussianVector gram_matrix(const CovarianceModel& m, const std::vector<Point>& pts);

// Wraps an explicit PSD matrix (validated like gram_matrix).
GaussianVector gaussian_from_matrix(Eigen::MatrixXd cov, std::vector<Point> pts,
                                    const Scaling& s, double alpha, double eps,
                                    double lambda);

// Exact-in-law samples via eigenfactorization; eigenvalues in
// [-1e-9 trace, 0) are clipped to zero.  Returns an n-by-K matrix of draws.
Eigen::MatrixXd sample_gaussian(const GaussianVector& gv, int n, std::uint64_t seed);

} // namespace wicklab
