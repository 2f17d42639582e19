#include "wicklab/multi_gauss.hpp"

#include <cmath>
#include <stdexcept>

namespace wicklab {

void MultiPoly::add(const std::vector<int>& e, Complex c) {
    if (std::abs(c) == 0.0) return;
    auto [it, inserted] = terms_.emplace(e, c);
    if (!inserted) {
        it->second += c;
        if (std::abs(it->second) == 0.0) terms_.erase(it);
    }
}

MultiPoly MultiPoly::constant(int nvars, Complex c) {
    MultiPoly p(nvars);
    p.add(std::vector<int>(nvars, 0), c);
    return p;
}

MultiPoly MultiPoly::monomial(int nvars, const std::vector<int>& exponents, Complex c) {
    if (static_cast<int>(exponents.size()) != nvars)
        throw std::invalid_argument("multi_poly: exponent size mismatch");
    MultiPoly p(nvars);
    p.add(exponents, c);
    return p;
}

MultiPoly MultiPoly::operator+(const MultiPoly& o) const {
    MultiPoly out = *this;
    out += o;
    return out;
}

MultiPoly& MultiPoly::operator+=(const MultiPoly& o) {
    if (o.nvars_ != nvars_) throw std::invalid_argument("multi_poly: nvars mismatch");
    for (const auto& [e, c] : o.terms_) add(e, c);
    return *this;
}

MultiPoly MultiPoly::operator*(const MultiPoly& o) const {
    if (o.nvars_ != nvars_) throw std::invalid_argument("multi_poly: nvars mismatch");
    MultiPoly out(nvars_);
    std::vector<int> e(nvars_);
    for (const auto& [ea, ca] : terms_) {
        for (const auto& [eb, cb] : o.terms_) {
            for (int j = 0; j < nvars_; ++j) e[j] = ea[j] + eb[j];
            out.add(e, ca * cb);
        }
    }
    return out;
}

MultiPoly MultiPoly::operator*(Complex c) const {
    MultiPoly out(nvars_);
    for (const auto& [e, v] : terms_) out.add(e, v * c);
    return out;
}

MultiPoly MultiPoly::derivative(int var) const {
    MultiPoly out(nvars_);
    std::vector<int> e(nvars_);
    for (const auto& [ea, c] : terms_) {
        if (ea[var] == 0) continue;
        e = ea;
        e[var] -= 1;
        out.add(e, c * double(ea[var]));
    }
    return out;
}

Complex MultiPoly::eval(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != nvars_)
        throw std::invalid_argument("multi_poly: eval size mismatch");
    Complex acc(0.0);
    for (const auto& [e, c] : terms_) {
        double m = 1.0;
        for (int j = 0; j < nvars_; ++j)
            for (int k = 0; k < e[j]; ++k) m *= x[j];
        acc += c * m;
    }
    return acc;
}

void MultiGaussExpr::add_term(MultiPoly poly, Eigen::MatrixXd quad) {
    if (poly.nvars() != nvars_ || quad.rows() != nvars_ || quad.cols() != nvars_)
        throw std::invalid_argument("multi_gauss: size mismatch");
    if (poly.empty()) return;
    terms_.emplace_back(std::move(poly), std::move(quad));
}

MultiGaussExpr& MultiGaussExpr::operator+=(const MultiGaussExpr& o) {
    if (o.nvars_ != nvars_) throw std::invalid_argument("multi_gauss: nvars mismatch");
    for (const auto& t : o.terms_) terms_.push_back(t);
    return *this;
}

MultiGaussExpr MultiGaussExpr::mul_poly(const MultiPoly& p) const {
    MultiGaussExpr out(nvars_);
    for (const auto& t : terms_) out.add_term(t.poly * p, t.quad);
    return out;
}

MultiGaussExpr MultiGaussExpr::derivative(int var) const {
    // d/db_v [p exp(-b^T Q b / 2)] = (p_v' - p * (Q b)_v) exp(-b^T Q b / 2)
    MultiGaussExpr out(nvars_);
    for (const auto& t : terms_) {
        MultiPoly dp = t.poly.derivative(var);
        MultiPoly qb(nvars_);
        for (int k = 0; k < nvars_; ++k) {
            if (t.quad(var, k) == 0.0) continue;
            std::vector<int> e(nvars_, 0);
            e[k] = 1;
            qb += MultiPoly::monomial(nvars_, e, Complex(t.quad(var, k)));
        }
        MultiPoly res = dp + t.poly * qb * Complex(-1.0);
        out.add_term(std::move(res), t.quad);
    }
    return out;
}

Complex MultiGaussExpr::eval_diag(double theta) const {
    std::vector<double> x(nvars_, theta);
    Complex acc(0.0);
    for (const auto& t : terms_) {
        double q = t.quad.sum();
        acc += t.poly.eval(x) * std::exp(-q * theta * theta / 2.0);
    }
    return acc;
}

} // namespace wicklab
