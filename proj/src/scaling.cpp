#include "wicklab/scaling.hpp"

#include <algorithm>
#include <cmath>

namespace wicklab {

Scaling::Scaling(std::vector<double> exponents) : s_(std::move(exponents)) {
    if (s_.empty())
        throw std::invalid_argument("scaling: empty exponent list");
    total_ = 0.0;
    for (double v : s_) {
        if (!(v > 0.0))
            throw std::invalid_argument("scaling: exponents must be positive");
        total_ += v;
    }
}

double Scaling::quasi_triangle_constant() const {
    // Per coordinate, t -> t^{1/s_j} is subadditive when 1/s_j <= 1 and
    // satisfies (a+b)^p <= 2^{p-1}(a^p + b^p) when p = 1/s_j >= 1.
    double pmax = 0.0;
    for (double v : s_) pmax = std::max(pmax, 1.0 / v);
    return std::max(1.0, std::exp2(pmax - 1.0));
}

double aniso_norm(const Point& x, const Scaling& s) {
    if (static_cast<int>(x.size()) != s.dim())
        throw std::invalid_argument("aniso_norm: dimension mismatch");
    double acc = 0.0;
    for (int j = 0; j < s.dim(); ++j)
        acc += std::pow(std::abs(x[j]), 1.0 / s.exponent(j));
    return acc;
}

double aniso_dist(const Point& x, const Point& y, const Scaling& s) {
    if (x.size() != y.size())
        throw std::invalid_argument("aniso_dist: dimension mismatch");
    Point d(x.size());
    for (size_t j = 0; j < x.size(); ++j) d[j] = x[j] - y[j];
    return aniso_norm(d, s);
}

} // namespace wicklab
