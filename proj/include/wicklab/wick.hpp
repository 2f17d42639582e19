#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace wicklab {

// He_n(x; sigma2), the Hermite polynomial orthogonal for N(0, sigma2):
// He_0 = 1, He_1 = x, He_n = x He_{n-1} - (n-1) sigma2 He_{n-2}.
double hermite(int n, double x, double sigma2);

// Monomial coefficients of He_n(x; sigma2): result[k] multiplies x^k.
std::vector<double> hermite_monomial_coeffs(int n, double sigma2);

// Inverse change of basis: x^r = sum_k result[k] He_k(x; sigma2), with
// result[r-2j] = r! / (j! (r-2j)!) * (sigma2/2)^j.
std::vector<double> power_in_hermite_basis(int r, double sigma2);

// Moment calculator for a fixed joint-Gaussian covariance matrix.  Both
// moments are evaluated by the pairing recursion with memoization on the
// remaining multiplicity vector, so cost is polynomial in the state count
// rather than in the number of pairings.
class WickEngine {
public:
    static constexpr int kDefaultLegCap = 16;
    static constexpr int kMaxPoints = 8;

    explicit WickEngine(Eigen::MatrixXd cov, int leg_cap = kDefaultLegCap);

    // E prod_j He_{n_j}(X_j; C_jj): sum over complete pairings with no
    // same-vertex pair of the product of pair covariances.  Zero when the
    // total leg count is odd.
    double wick_moment(const std::vector<int>& n);

    // E prod_j X_j^{n_j}: same recursion with same-vertex pairings allowed.
    double isserlis_moment(const std::vector<int>& n);

    const Eigen::MatrixXd& cov() const { return cov_; }
    int leg_cap() const { return leg_cap_; }
    int points() const { return static_cast<int>(cov_.rows()); }

private:
    void validate(const std::vector<int>& n) const;
    std::uint64_t pack(const std::vector<int>& n) const;
    double wick_rec(std::vector<int>& n, int total);
    double isserlis_rec(std::vector<int>& n, int total);

    Eigen::MatrixXd cov_;
    int leg_cap_;
    std::unordered_map<std::uint64_t, double> wick_memo_;
    std::unordered_map<std::uint64_t, double> isserlis_memo_;
};

} // namespace wicklab
