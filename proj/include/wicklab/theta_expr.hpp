#pragma once

#include <complex>
#include <vector>

namespace wicklab {

using Complex = std::complex<double>;

// Finite sum  sum_t p_t(theta) * exp(-q_t theta^2 / 2)  with complex
// polynomial coefficients and rates q_t >= 0.  The family is closed under
// addition, multiplication and d/dtheta, so products of chaos-subtracted
// exponentials stay representable exactly.
class ThetaExpr {
public:
    struct Term {
        std::vector<Complex> poly; // poly[k] multiplies theta^k
        double rate = 0.0;
    };

    ThetaExpr() = default;

    static ThetaExpr zero() { return ThetaExpr(); }
    static ThetaExpr constant(Complex c);
    // c * theta^n * exp(-q theta^2 / 2)
    static ThetaExpr monomial_gauss(Complex c, int n, double q);

    ThetaExpr operator+(const ThetaExpr& o) const;
    ThetaExpr operator*(const ThetaExpr& o) const;
    ThetaExpr operator*(Complex c) const;
    ThetaExpr& operator+=(const ThetaExpr& o) { return *this = *this + o; }

    ThetaExpr derivative() const;
    ThetaExpr derivative(int order) const;

    Complex eval(double theta) const;

    int degree() const;       // max polynomial degree across terms
    size_t term_count() const { return terms_.size(); }
    const std::vector<Term>& terms() const { return terms_; }

    // Polynomial degrees above this throw; guards runaway symbolic growth.
    static constexpr int kDegreeCap = 64;

private:
    void add_term(std::vector<Complex> poly, double rate);
    static void check_degree(size_t poly_size);

    std::vector<Term> terms_; // distinct rates, ascending
};

} // namespace wicklab
