#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wicklab/covariance.hpp"
#include "wicklab/gauss_calc.hpp"

namespace wicklab {

// Point geometry plus its Gram restriction under one covariance model.
struct GaussianFixture {
    std::string family;
    GaussianVector gv;
};

// d = 1 geometry families, all scaled by eps:
//   coincident          K copies of the origin
//   two-clusters-D      tight cluster at 0 and one at D*eps, D in {10,100,1000}
//   singleton-pair      pair {0, 0.1 eps}, remaining points isolated (K >= 3)
//   ball                uniform in [-1000 eps, 1000 eps], seeded
std::vector<Point> make_geometry(const std::string& family, int K, double eps,
                                 std::uint64_t seed);
std::vector<std::string> default_families();

GaussianFixture make_fixture(const CovarianceModel& model, const std::string& family,
                             int K, double eps, std::uint64_t seed);

// |E prod_j d^r/dtheta^r H_m(e^{i theta X_j})| evaluated exactly.
double lhs_exact(const GaussianFixture& fixture, double theta, int m, int r);

struct BoundSweepConfig {
    std::function<CovarianceModel(double)> model_for_eps;
    std::vector<std::string> families; // empty = default_families()
    int K = 2;
    int m = 1;
    int r = 0;
    std::vector<double> thetas;
    std::vector<double> eps_list;
    std::uint64_t seed = 1;
    int leg_cap = 0; // 0 derives K*(m+2)

    void validate() const; // throws std::invalid_argument
};

struct BoundCell {
    std::string family;
    int K = 0, m = 0, r = 0;
    double eps = 0.0, theta = 0.0;
    double lhs = 0.0, rhs = 0.0, ratio = 0.0;
};

struct BoundReport {
    std::vector<BoundCell> cells;
    double sup_ratio = 0.0;
    double sup_ratio_near = 0.0;   // over |theta| <= 5
    double sup_ratio_far = 0.0;    // over |theta| >= 20
    double fitted_constant = 0.0;  // = sup_ratio; reported, never asserted
    bool falsified = false;        // rhs ~ 0 with lhs > 1e-12 somewhere
    std::vector<std::string> notes; // one summary line per (eps, family)
};

// Exact lhs/rhs over the (family, eps, theta) grid.  Each fixture's
// subtracted product is assembled once symbolically and evaluated on the
// whole theta grid; the rhs moment is theta-free.  Every eps model must pass
// sandwich_check (throws std::invalid_argument otherwise).
BoundReport ratio_sweep(const BoundSweepConfig& config);

// Monte-Carlo estimate of E prod_j d^r H_m(e^{i theta X_j}) from exact
// Gaussian draws, with the low chaos removed via Hermite evaluation:
//   factor_j = (i x)^r e^{i theta x} - sum_{n<m} C_n(theta) He_n(x; C_jj).
struct McCheck {
    Complex estimate{0.0, 0.0};
    double stderr_ = 0.0; // combined re/im standard error
    Complex exact{0.0, 0.0};
    bool pass = false; // |estimate - exact| <= 4 stderr + 1e-12
    long samples = 0;
};

McCheck mc_cross_check(const GaussianFixture& fixture, double theta, int m, int r,
                       long samples, std::uint64_t seed);

// CSV columns: family,K,m,r,eps,theta,lhs,rhs,ratio.  Byte-deterministic for
// a fixed report.
void write_bound_csv(const BoundReport& report, const std::string& path);

// Summary with sup ratios, fitted constant, cell count, and notes.
void write_bound_summary_json(const BoundReport& report, const std::string& path);

} // namespace wicklab
