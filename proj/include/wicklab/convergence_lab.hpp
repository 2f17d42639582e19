#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wicklab/covariance.hpp"
#include "wicklab/field_sim.hpp"
#include "wicklab/test_function.hpp"
#include "wicklab/theta_expr.hpp"

namespace wicklab {

// Scalar nonlinearity with a declared polynomial growth envelope
// |F(x)| <= growth_scale * (1 + |x|)^growth.  Kink positions drive the
// split quadrature in a_m_coefficient; they are required exactly when the
// smoothness tag is "lipschitz-kink".
struct NonlinearityF {
    std::string name;
    std::function<double(double)> f;
    double growth = 2.0;
    double growth_scale = 4.0;
    std::string smoothness = "smooth"; // or "lipschitz-kink"
    std::vector<double> kinks;

    double operator()(double x) const { return f(x); }

    // Checks the growth envelope on a log-spaced probe grid up to |x| = 64
    // and the tag/kink consistency.  Throws std::invalid_argument.
    void validate() const;
};

NonlinearityF power_nonlinearity(int p);            // x^p
NonlinearityF abs_nonlinearity();                   // |x|, kink at 0
NonlinearityF constant_nonlinearity(double c);
NonlinearityF hermite_nonlinearity(int m, double sigma2);

// sigma^2 = int int g(x - y) f(x) f(y) dx dy over the support of f (d = 1).
// The difference variable is integrated on dyadic shells refined toward 0,
// so integrable singularities g ~ |w|^{-a}, a < 1, converge; a kernel whose
// shell contributions keep growing toward 0 is rejected as non-integrable.
double sigma2_limit(const std::function<double(const Point&)>& g,
                    const TestFunction& rho);

// sigma_eps^2 = eps^alpha int int G(x-y) rho_eps(x) rho_eps(y) dx dy for the
// base model's kernel G, by the substitution x = eps^s u (d = 1).
double sigma2_eps_quadrature(const CovarianceModel& base,
                             const TestFunction& rho, double eps);

// m-th chaos coefficient  a_m = E[F(X) He_m(X; sigma2)] / (m! sigma^{2m}),
// X ~ N(0, sigma2).  Computed without differentiating F: 512-node
// Gauss-Hermite quadrature, switching to composite Gauss-Legendre panels
// split at the declared kinks (window |x| <= 12 sigma) when F has any.
// Throws std::runtime_error when the quadrature tail does not converge
// (super-exponential F).
double a_m_coefficient(const NonlinearityF& F, double sigma2, int m);

// Pointwise  eps^{-m alpha/2} [F(v) - sum_{n<m} a_n He_n(v; sigma2_eps)]
// with a_n = a_m_coefficient(F, sigma2_eps, n): F minus its chaos below m,
// evaluated on a field whose values are Phi_eps.  The field's sigma2 slot is
// cleared.
LatticeField renormalized_functional(const LatticeField& field,
                                     const NonlinearityF& F, int m, double eps,
                                     double alpha, double sigma2_eps);

// Least-squares slope of log2(y) against log2(x) with its standard error
// and a 95% interval (t-based for exact fits, bootstrap percentile for
// Monte-Carlo fits).
struct SlopeFit {
    double slope = 0.0;
    double stderr_ = 0.0;
    double lo95 = 0.0;
    double hi95 = 0.0;
};

struct ConvergenceConfig {
    NonlinearityF F;
    int m = 2;
    double kappa = 0.05;       // rate slack; pass threshold is kappa/2
    int n = 1;                 // moment order: 2n-th moments
    std::vector<double> eps_list;  // at least two levels, each in [2h, 1]
    std::vector<double> lambdas;
    int replicates = 400;
    std::uint64_t seed = 20260816;
    int jobs = 1;

    CovarianceModel base;      // unmollified model of Psi; carries alpha
    TestFunction rho;          // mollifier
    TestFunction phi;          // pairing test function
    GridSpec grid;             // reference lattice; eps_ref = 2 max_j h_j
    Point center{0.0};         // pairing centre

    // Throws std::invalid_argument unless m < |s|/alpha, m*alpha + kappa <
    // |s|, every eps sits in [2h, 1], every lambda in (0, 1] with its test
    // support inside the grid, and F passes its growth validation.
    void validate() const;
};

// d = 1 desk regime: fractional base with the given alpha, bump mollifier
// and bump test function, 1024-site grid of spacing 2^-9 on [-1, 1),
// eps in {2^-3..2^-7}, lambda in {2^-1, 2^-2, 2^-3}, 400 replicates.
ConvergenceConfig default_convergence_config(NonlinearityF F, double alpha = 0.4,
                                             int m = 2);

// One (eps, lambda) cell.  Moments are roots (E|.|^{2n})^{1/2n} of the
// pairing against phi^lambda, scaled by lambda^{m alpha/2 + kappa}; the
// three components t1/t2/t3 follow the error split
//   total = [renorm - a_m^eps Psi_eps^{om}] + a_m^eps [Psi_eps^{om} -
//           Psi^{om}] + [a_m^eps - a_m] Psi^{om}
// against the reference-grid field Psi.
struct ConvergenceCell {
    double eps = 0.0;
    double lambda = 0.0;
    double moment = 0.0;  // scaled total error moment root
    double stderr_ = 0.0; // delta-method stderr of the root
    double t1 = 0.0;
    double t2 = 0.0;
    double t3 = 0.0;
};

struct ConvergenceReport {
    std::string f_name;
    int m = 0;
    double alpha = 0.0;
    double kappa = 0.0;
    int n = 1;
    int replicates = 0;

    std::vector<double> eps_list;
    std::vector<double> lambdas;
    std::vector<ConvergenceCell> cells; // eps-major, lambda fastest

    std::vector<SlopeFit> eps_slopes;    // one per lambda, bootstrap CI
    std::vector<SlopeFit> lambda_slopes; // one per eps; empty for a single lambda

    double sigma2 = 0.0;               // limit pairing variance
    double sigma2_ref = 0.0;           // reference-grid field variance
    std::vector<double> sigma2_eps;    // exact discrete variance per eps
    double a_m = 0.0;                  // coefficient at sigma2
    std::vector<double> a_m_eps;       // coefficient at sigma2_eps[i]

    // Every per-lambda eps-slope clears kappa/2 at the 95% level.
    bool pass = false;
};

// Monte-Carlo estimate of
//   lambda^{m alpha/2 + kappa} (E |< eps^{-m alpha/2} Hhat_m(F(eps^{alpha/2}
//   Psi_eps)) - a_m Psi^{om}, phi^lambda >|^{2n})^{1/2n}
// over the eps x lambda grid.  Psi is sampled once per replicate on the
// reference grid (model mollified at eps_ref = 2h) and further mollified for
// each eps, so the cells are coupled by common random numbers; slope
// intervals come from a 200-resample bootstrap over replicates.
ConvergenceReport convergence_error(const ConvergenceConfig& config);

struct ChaosScalingCell {
    double eps = 0.0;
    double lambda = 0.0;
    double moment = 0.0; // exact second moment (m+ell)! int C_eps^{m+ell} ...
};

struct ChaosScalingReport {
    int m = 0;
    int ell = 0;
    std::vector<double> eps_list;
    std::vector<double> lambdas;
    std::vector<ChaosScalingCell> cells; // eps-major, lambda fastest
    std::vector<SlopeFit> eps_slopes;    // per lambda; empty for a single eps
    std::vector<SlopeFit> lambda_slopes; // per eps; empty for a single lambda
};

// Exact  (m+ell)! int int C_eps(x-y)^{m+ell} phi^lambda(x) phi^lambda(y)
// by shell quadrature against the autocorrelation of phi^lambda (d = 1,
// no sampling).  model_for_eps(eps) must return the covariance of Phi_eps.
// Rejects m * alpha >= |s|.
ChaosScalingReport higher_chaos_scaling(
    int m, int ell, const std::vector<double>& eps_list,
    const std::vector<double>& lambdas,
    const std::function<CovarianceModel(double)>& model_for_eps,
    const TestFunction& phi, const Point& center);

// Diagnostic profile  A(theta) = sum_i h phi^lambda(x_i) *
// [ (i v_i)^r e^{i theta v_i} - sum_{n<m+1} c_n^{(r)}(theta) He_n(v_i;
// sigma2) ]:  the r-th theta-derivative of the chaos-(m+1) remainder of
// e^{i theta Phi} paired with the test function.  Not on the main
// convergence path.
std::vector<Complex> operator_a_profile(const LatticeField& field,
                                        double sigma2, int m, int r,
                                        const TestFunction& phi, const Point& x,
                                        double lambda,
                                        const std::vector<double>& thetas);

// CSV rows "F,m,alpha,eps,lambda,n,error_moment,stderr" (scaled moments).
void write_convergence_csv(const ConvergenceReport& report,
                           const std::string& path);

// JSON summary: per-lambda slopes with intervals, per-eps lambda slopes,
// a_m, sigma2 values, pass flag.
void write_convergence_summary_json(const ConvergenceReport& report,
                                    const std::string& path);

} // namespace wicklab
