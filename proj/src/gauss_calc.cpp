#include "wicklab/gauss_calc.hpp"

#include <cmath>
#include <stdexcept>

#include "wicklab/multi_gauss.hpp"

namespace wicklab {

namespace {

constexpr Complex kI{0.0, 1.0};

Complex ipow(int n) {
    switch (((n % 4) + 4) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, -1.0};
    }
}

double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

double binom(int n, int k) {
    double b = 1.0;
    for (int j = 1; j <= k; ++j) b *= double(n - k + j) / j;
    return b;
}

std::vector<int> resolve_signs(const std::vector<int>& signs, int K) {
    if (signs.empty()) return std::vector<int>(K, 1);
    if (static_cast<int>(signs.size()) != K)
        throw std::invalid_argument("gauss_calc: signs size mismatch");
    for (int s : signs)
        if (s != 1 && s != -1)
            throw std::invalid_argument("gauss_calc: signs must be +-1");
    return signs;
}

// Odometer over 0..hi[j] inclusive, invoking f per combination.
template <typename F>
void for_each_combo(const std::vector<int>& hi, F&& f) {
    std::vector<int> idx(hi.size(), 0);
    while (true) {
        f(idx);
        size_t j = 0;
        for (; j < hi.size(); ++j) {
            if (++idx[j] <= hi[j]) break;
            idx[j] = 0;
        }
        if (j == hi.size()) return;
    }
}

} // namespace

ThetaExpr chaos_coefficient_expr(double sigma2, int n, int r, int m) {
    if (n < 0 || r < 0 || m < 0)
        throw std::invalid_argument("chaos_coefficient: negative argument");
    if (n < m) return ThetaExpr::zero();
    ThetaExpr base = ThetaExpr::monomial_gauss(Complex(1.0), n, sigma2);
    return base.derivative(r) * (ipow(n) / factorial(n));
}

Complex chaos_coefficient(double theta, double sigma2, int n, int r, int m) {
    return chaos_coefficient_expr(sigma2, n, r, m).eval(theta);
}

Complex exp_wick_expectation(const Eigen::MatrixXd& cov, const std::vector<int>& A,
                             const std::vector<int>& n, double theta,
                             const std::vector<int>& signs) {
    const int K = static_cast<int>(cov.rows());
    auto sg = resolve_signs(signs, K);
    std::vector<char> inA(K, 0);
    for (int a : A) {
        if (a < 0 || a >= K) throw std::invalid_argument("exp_wick: index out of range");
        inA[a] = 1;
    }
    if (static_cast<int>(n.size()) != K)
        throw std::invalid_argument("exp_wick: multiplicity size mismatch");

    WickEngine eng(cov);
    double varS = 0.0;
    for (int a : A)
        for (int b : A) varS += sg[a] * sg[b] * cov(a, b);
    std::vector<Complex> mu(K, Complex(0.0));
    for (int j = 0; j < K; ++j) {
        double c = 0.0;
        for (int a : A) c += sg[a] * cov(j, a);
        mu[j] = kI * theta * c;
    }

    Complex acc(0.0);
    std::vector<int> rem(K);
    for_each_combo(n, [&](const std::vector<int>& l) {
        Complex coef(1.0);
        for (int j = 0; j < K; ++j) {
            coef *= binom(n[j], l[j]);
            for (int k = 0; k < l[j]; ++k) coef *= mu[j];
            rem[j] = n[j] - l[j];
        }
        acc += coef * eng.wick_moment(rem);
    });
    return std::exp(-theta * theta * varS / 2.0) * acc;
}

ThetaExpr subtracted_product_expr(const Eigen::MatrixXd& cov, int m, int r,
                                  const std::vector<int>& signs) {
    const int K = static_cast<int>(cov.rows());
    if (m < 0 || r < 0)
        throw std::invalid_argument("subtracted_product: negative order");
    auto sg = resolve_signs(signs, K);
    WickEngine eng(cov, std::max(WickEngine::kDefaultLegCap,
                                 K * (r + std::max(m - 1, 0))));

    // Per-point subtracted coefficients -C_{j,n}(theta), n < m, with the
    // factor derivative already applied.
    std::vector<std::vector<ThetaExpr>> sub(K);
    for (int j = 0; j < K; ++j) {
        sub[j].reserve(m);
        for (int nn = 0; nn < m; ++nn) {
            ThetaExpr c = ThetaExpr::monomial_gauss(Complex(1.0), nn, cov(j, j))
                              .derivative(r) *
                          (ipow(nn) * std::pow(double(sg[j]), nn) / factorial(nn));
            sub[j].push_back(c * Complex(-1.0));
        }
    }

    // Plain power X^r in the Hermite basis, per point.
    std::vector<std::vector<double>> pw(K);
    for (int j = 0; j < K; ++j) pw[j] = power_in_hermite_basis(r, cov(j, j));

    ThetaExpr result;
    // Branch choice per point: m means the exponential factor, 0..m-1 a
    // subtracted chaos order.
    std::vector<int> hi(K, m);
    for_each_combo(hi, [&](const std::vector<int>& choice) {
        std::vector<int> A;
        for (int j = 0; j < K; ++j)
            if (choice[j] == m) A.push_back(j);

        ThetaExpr coef = ThetaExpr::constant(Complex(1.0));
        for (int j = 0; j < K; ++j)
            if (choice[j] < m) coef = coef * sub[j][choice[j]];

        double varS = 0.0;
        for (int a : A)
            for (int b : A) varS += sg[a] * sg[b] * cov(a, b);
        std::vector<double> shift(K, 0.0); // mu_j = i theta shift_j
        for (int j = 0; j < K; ++j)
            for (int a : A) shift[j] += sg[a] * cov(j, a);

        Complex pref(1.0);
        for (int a : A) pref *= ipow(r) * std::pow(double(sg[a]), r);

        // Expand prod_{a in A} X_a^r over the Hermite basis, then apply the
        // complex shift expansion; everything else is a Wick moment.
        std::vector<int> tcap(K, 0);
        for (int a : A) tcap[a] = r;
        ThetaExpr exp_part;
        for_each_combo(tcap, [&](const std::vector<int>& t) {
            double basis_coef = 1.0;
            std::vector<int> kvec(K);
            for (int j = 0; j < K; ++j) {
                if (choice[j] == m) {
                    basis_coef *= pw[j][t[j]];
                    kvec[j] = t[j];
                } else {
                    kvec[j] = choice[j];
                }
            }
            if (basis_coef == 0.0) return;
            for_each_combo(kvec, [&](const std::vector<int>& l) {
                Complex c(basis_coef);
                int ltot = 0;
                std::vector<int> rem(K);
                for (int j = 0; j < K; ++j) {
                    c *= binom(kvec[j], l[j]);
                    for (int q = 0; q < l[j]; ++q) c *= kI * shift[j];
                    ltot += l[j];
                    rem[j] = kvec[j] - l[j];
                }
                double w = eng.wick_moment(rem);
                if (w == 0.0 || std::abs(c) == 0.0) return;
                exp_part += ThetaExpr::monomial_gauss(c * w, ltot, varS);
            });
        });

        result += coef * exp_part * pref;
    });
    return result;
}

Complex subtracted_product(const Eigen::MatrixXd& cov, int m, int r, double theta) {
    return subtracted_product_expr(cov, m, r).eval(theta);
}

double rhs_moment(const Eigen::MatrixXd& cov, int m, int leg_cap) {
    const int K = static_cast<int>(cov.rows());
    if (m < 0) throw std::invalid_argument("rhs_moment: negative order");
    if (leg_cap <= 0) leg_cap = std::max(WickEngine::kDefaultLegCap, K * (m + 1));
    WickEngine eng(cov, leg_cap);
    double acc = 0.0;
    std::vector<int> hi(K, 1);
    for_each_combo(hi, [&](const std::vector<int>& pick) {
        std::vector<int> n(K);
        for (int j = 0; j < K; ++j) n[j] = m + pick[j];
        acc += eng.wick_moment(n);
    });
    return acc;
}

Complex cluster_coefficient(const Eigen::MatrixXd& cov, const std::vector<int>& n,
                            int m, int r, double theta) {
    const int K = static_cast<int>(cov.rows());
    if (static_cast<int>(n.size()) != K)
        throw std::invalid_argument("cluster_coefficient: multiplicity size mismatch");
    if (m < 0 || r < 0)
        throw std::invalid_argument("cluster_coefficient: negative order");
    for (int v : n)
        if (v < 0) throw std::invalid_argument("cluster_coefficient: negative multiplicity");

    // Truncation order per point after the n_j X-derivatives.
    std::vector<int> mj(K);
    for (int j = 0; j < K; ++j) mj[j] = std::max(m - n[j], 0);

    WickEngine eng(cov, std::max(WickEngine::kDefaultLegCap, K * std::max(m - 1, 0)));

    MultiGaussExpr gen(K);
    std::vector<int> hi(K);
    for (int j = 0; j < K; ++j) hi[j] = mj[j]; // mj[j] encodes the exponential branch
    for_each_combo(hi, [&](const std::vector<int>& choice) {
        std::vector<int> A;
        for (int j = 0; j < K; ++j)
            if (choice[j] == mj[j]) A.push_back(j);

        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(K, K);
        for (int a : A)
            for (int b : A) Q(a, b) = cov(a, b);
        MultiPoly coef = MultiPoly::constant(K, Complex(1.0));
        std::vector<int> kvec(K, 0);
        for (int j = 0; j < K; ++j) {
            if (choice[j] == mj[j]) continue;
            int kk = choice[j];
            kvec[j] = kk;
            Q(j, j) += cov(j, j);
            std::vector<int> e(K, 0);
            e[j] = kk;
            coef = coef * MultiPoly::monomial(K, e, -ipow(kk) / factorial(kk));
        }

        // E[prod_{a in A} e^{i b_a X_a} prod_{j notin A} X_j^{wick k_j}]
        // = exp(-b_A^T C b_A / 2) sum_l prod binom(k,l) mu_j^{l_j} W(k-l),
        // with mu_j = i sum_{a in A} b_a C_{j a} a linear form in b.
        std::vector<MultiPoly> mu(K, MultiPoly(K));
        for (int j = 0; j < K; ++j) {
            MultiPoly lin(K);
            for (int a : A) {
                std::vector<int> e(K, 0);
                e[a] = 1;
                lin += MultiPoly::monomial(K, e, kI * cov(j, a));
            }
            mu[j] = lin;
        }

        MultiPoly expect(K);
        for_each_combo(kvec, [&](const std::vector<int>& l) {
            std::vector<int> rem(K);
            double b = 1.0;
            for (int j = 0; j < K; ++j) {
                b *= binom(kvec[j], l[j]);
                rem[j] = kvec[j] - l[j];
            }
            double w = eng.wick_moment(rem);
            if (w == 0.0) return;
            MultiPoly t = MultiPoly::constant(K, Complex(b * w));
            for (int j = 0; j < K; ++j)
                for (int q = 0; q < l[j]; ++q) t = t * mu[j];
            expect += t;
        });

        gen.add_term(coef * expect, Q);
    });

    // Multiply by b^n, take r derivatives in every variable, restrict to the
    // diagonal.
    MultiPoly bn = MultiPoly::monomial(K, n, Complex(1.0));
    MultiGaussExpr expr = gen.mul_poly(bn);
    for (int j = 0; j < K; ++j)
        for (int q = 0; q < r; ++q) expr = expr.derivative(j);

    int ntot = 0;
    double nfact = 1.0;
    for (int v : n) {
        ntot += v;
        nfact *= factorial(v);
    }
    return expr.eval_diag(theta) * (ipow(ntot) / nfact);
}

} // namespace wicklab
