#include "wicklab/theta_expr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wicklab {

namespace {

bool rate_equal(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

void trim(std::vector<Complex>& p) {
    while (!p.empty() && std::abs(p.back()) == 0.0) p.pop_back();
}

} // namespace

void ThetaExpr::check_degree(size_t poly_size) {
    if (poly_size > static_cast<size_t>(kDegreeCap) + 1)
        throw std::length_error("theta_expr: polynomial degree cap exceeded");
}

void ThetaExpr::add_term(std::vector<Complex> poly, double rate) {
    trim(poly);
    if (poly.empty()) return;
    check_degree(poly.size());
    for (auto& t : terms_) {
        if (rate_equal(t.rate, rate)) {
            if (t.poly.size() < poly.size()) t.poly.resize(poly.size());
            for (size_t k = 0; k < poly.size(); ++k) t.poly[k] += poly[k];
            trim(t.poly);
            return;
        }
    }
    Term t;
    t.poly = std::move(poly);
    t.rate = rate;
    auto pos = std::upper_bound(terms_.begin(), terms_.end(), rate,
                                [](double r, const Term& x) { return r < x.rate; });
    terms_.insert(pos, std::move(t));
}

ThetaExpr ThetaExpr::constant(Complex c) { return monomial_gauss(c, 0, 0.0); }

ThetaExpr ThetaExpr::monomial_gauss(Complex c, int n, double q) {
    if (n < 0) throw std::invalid_argument("theta_expr: negative power");
    ThetaExpr e;
    std::vector<Complex> p(n + 1, Complex(0.0));
    p[n] = c;
    e.add_term(std::move(p), q);
    return e;
}

ThetaExpr ThetaExpr::operator+(const ThetaExpr& o) const {
    ThetaExpr out = *this;
    for (const auto& t : o.terms_) out.add_term(t.poly, t.rate);
    return out;
}

ThetaExpr ThetaExpr::operator*(const ThetaExpr& o) const {
    ThetaExpr out;
    for (const auto& a : terms_) {
        for (const auto& b : o.terms_) {
            std::vector<Complex> p(a.poly.size() + b.poly.size() - 1, Complex(0.0));
            check_degree(p.size());
            for (size_t i = 0; i < a.poly.size(); ++i)
                for (size_t j = 0; j < b.poly.size(); ++j)
                    p[i + j] += a.poly[i] * b.poly[j];
            out.add_term(std::move(p), a.rate + b.rate);
        }
    }
    return out;
}

ThetaExpr ThetaExpr::operator*(Complex c) const {
    ThetaExpr out;
    for (const auto& t : terms_) {
        auto p = t.poly;
        for (auto& v : p) v *= c;
        out.add_term(std::move(p), t.rate);
    }
    return out;
}

ThetaExpr ThetaExpr::derivative() const {
    // (p e^{-q t^2/2})' = (p' - q t p) e^{-q t^2/2}
    ThetaExpr out;
    for (const auto& t : terms_) {
        std::vector<Complex> p(t.poly.size() + 1, Complex(0.0));
        for (size_t k = 1; k < t.poly.size(); ++k) p[k - 1] += double(k) * t.poly[k];
        for (size_t k = 0; k < t.poly.size(); ++k) p[k + 1] -= t.rate * t.poly[k];
        out.add_term(std::move(p), t.rate);
    }
    return out;
}

ThetaExpr ThetaExpr::derivative(int order) const {
    if (order < 0) throw std::invalid_argument("theta_expr: negative derivative order");
    ThetaExpr e = *this;
    for (int k = 0; k < order; ++k) e = e.derivative();
    return e;
}

Complex ThetaExpr::eval(double theta) const {
    Complex acc(0.0);
    for (const auto& t : terms_) {
        Complex p(0.0);
        for (size_t k = t.poly.size(); k-- > 0;) p = p * theta + t.poly[k];
        acc += p * std::exp(-t.rate * theta * theta / 2.0);
    }
    return acc;
}

int ThetaExpr::degree() const {
    int deg = 0;
    for (const auto& t : terms_)
        deg = std::max(deg, static_cast<int>(t.poly.size()) - 1);
    return deg;
}

} // namespace wicklab
