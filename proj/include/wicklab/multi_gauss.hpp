#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "wicklab/theta_expr.hpp"

namespace wicklab {

// Sparse complex polynomial in a fixed number of variables.
class MultiPoly {
public:
    explicit MultiPoly(int nvars) : nvars_(nvars) {}

    static MultiPoly constant(int nvars, Complex c);
    static MultiPoly monomial(int nvars, const std::vector<int>& exponents, Complex c);

    int nvars() const { return nvars_; }
    bool empty() const { return terms_.empty(); }

    MultiPoly operator+(const MultiPoly& o) const;
    MultiPoly operator*(const MultiPoly& o) const;
    MultiPoly operator*(Complex c) const;
    MultiPoly& operator+=(const MultiPoly& o);

    MultiPoly derivative(int var) const;
    Complex eval(const std::vector<double>& x) const;

    const std::map<std::vector<int>, Complex>& terms() const { return terms_; }

private:
    void add(const std::vector<int>& e, Complex c);

    int nvars_;
    std::map<std::vector<int>, Complex> terms_;
};

// Finite sum  sum_t p_t(b) * exp(-(1/2) b^T Q_t b)  over variables
// b = (b_1, ..., b_p); closed under per-variable differentiation.  Used to
// evaluate joint chaos coefficients where each cluster point carries its
// own frequency variable before the diagonal restriction b_j = theta.
class MultiGaussExpr {
public:
    struct Term {
        MultiPoly poly;
        Eigen::MatrixXd quad; // symmetric; exponent is -(1/2) b^T quad b
        Term(MultiPoly p, Eigen::MatrixXd q) : poly(std::move(p)), quad(std::move(q)) {}
    };

    explicit MultiGaussExpr(int nvars) : nvars_(nvars) {}

    int nvars() const { return nvars_; }
    void add_term(MultiPoly poly, Eigen::MatrixXd quad);
    MultiGaussExpr& operator+=(const MultiGaussExpr& o);
    MultiGaussExpr mul_poly(const MultiPoly& p) const;
    MultiGaussExpr derivative(int var) const;

    // Value at the diagonal point b_j = theta for every j.
    Complex eval_diag(double theta) const;

    size_t term_count() const { return terms_.size(); }

private:
    int nvars_;
    std::vector<Term> terms_;
};

} // namespace wicklab
