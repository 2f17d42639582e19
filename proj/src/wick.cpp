#include "wicklab/wick.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wicklab {

double hermite(int n, double x, double sigma2) {
    if (n < 0) throw std::invalid_argument("hermite: negative order");
    double h0 = 1.0, h1 = x;
    if (n == 0) return h0;
    for (int k = 2; k <= n; ++k) {
        double h2 = x * h1 - (k - 1) * sigma2 * h0;
        h0 = h1;
        h1 = h2;
    }
    return h1;
}

std::vector<double> hermite_monomial_coeffs(int n, double sigma2) {
    std::vector<double> prev{1.0};
    if (n == 0) return prev;
    std::vector<double> cur{0.0, 1.0};
    for (int k = 2; k <= n; ++k) {
        std::vector<double> next(k + 1, 0.0);
        for (size_t j = 0; j < cur.size(); ++j) next[j + 1] += cur[j];
        for (size_t j = 0; j < prev.size(); ++j) next[j] -= (k - 1) * sigma2 * prev[j];
        prev = std::move(cur);
        cur = std::move(next);
    }
    return cur;
}

std::vector<double> power_in_hermite_basis(int r, double sigma2) {
    std::vector<double> out(r + 1, 0.0);
    double fact_r = 1.0;
    for (int k = 2; k <= r; ++k) fact_r *= k;
    for (int j = 0; 2 * j <= r; ++j) {
        double fj = 1.0, fr2j = 1.0;
        for (int k = 2; k <= j; ++k) fj *= k;
        for (int k = 2; k <= r - 2 * j; ++k) fr2j *= k;
        out[r - 2 * j] = fact_r / (fj * fr2j) * std::pow(sigma2 / 2.0, j);
    }
    return out;
}

WickEngine::WickEngine(Eigen::MatrixXd cov, int leg_cap)
    : cov_(std::move(cov)), leg_cap_(leg_cap) {
    if (cov_.rows() != cov_.cols())
        throw std::invalid_argument("wick: covariance must be square");
    if (cov_.rows() < 1 || cov_.rows() > kMaxPoints)
        throw std::invalid_argument("wick: point count out of range");
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + cov_.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("wick: covariance must be symmetric");
}

void WickEngine::validate(const std::vector<int>& n) const {
    if (static_cast<int>(n.size()) != points())
        throw std::invalid_argument("wick: multiplicity vector size mismatch");
    int total = 0;
    for (int v : n) {
        if (v < 0) throw std::invalid_argument("wick: negative multiplicity");
        total += v;
    }
    if (total > leg_cap_)
        throw std::length_error("wick: total leg count exceeds cap");
}

std::uint64_t WickEngine::pack(const std::vector<int>& n) const {
    std::uint64_t key = 0;
    for (int v : n) key = (key << 7) | static_cast<std::uint64_t>(v);
    return key;
}

double WickEngine::wick_moment(const std::vector<int>& n) {
    validate(n);
    std::vector<int> state = n;
    int total = std::accumulate(state.begin(), state.end(), 0);
    return wick_rec(state, total);
}

double WickEngine::isserlis_moment(const std::vector<int>& n) {
    validate(n);
    std::vector<int> state = n;
    int total = std::accumulate(state.begin(), state.end(), 0);
    return isserlis_rec(state, total);
}

double WickEngine::wick_rec(std::vector<int>& n, int total) {
    if (total == 0) return 1.0;
    if (total % 2) return 0.0;
    std::uint64_t key = pack(n);
    if (auto it = wick_memo_.find(key); it != wick_memo_.end()) return it->second;

    int i = 0;
    while (n[i] == 0) ++i;
    double acc = 0.0;
    n[i] -= 1;
    for (int j = 0; j < points(); ++j) {
        if (j == i || n[j] == 0) continue;
        double mult = n[j];
        n[j] -= 1;
        acc += mult * cov_(i, j) * wick_rec(n, total - 2);
        n[j] += 1;
    }
    n[i] += 1;
    wick_memo_.emplace(key, acc);
    return acc;
}

double WickEngine::isserlis_rec(std::vector<int>& n, int total) {
    if (total == 0) return 1.0;
    if (total % 2) return 0.0;
    std::uint64_t key = pack(n);
    if (auto it = isserlis_memo_.find(key); it != isserlis_memo_.end()) return it->second;

    int i = 0;
    while (n[i] == 0) ++i;
    double acc = 0.0;
    n[i] -= 1;
    for (int j = 0; j < points(); ++j) {
        if (n[j] == 0) continue;
        double mult = n[j];
        n[j] -= 1;
        acc += mult * cov_(i, j) * isserlis_rec(n, total - 2);
        n[j] += 1;
    }
    n[i] += 1;
    isserlis_memo_.emplace(key, acc);
    return acc;
}

} // namespace wicklab
