#pragma once

#include <stdexcept>
#include <vector>

namespace wicklab {

using Point = std::vector<double>;

// Anisotropic scaling s = (s_1, ..., s_d), all s_j > 0.  The induced
// quasi-metric is |x|_s = sum_j |x_j|^{1/s_j}; dilations act by
// x_j -> lambda^{s_j} x_j and multiply |x|_s by lambda.
class Scaling {
public:
    explicit Scaling(std::vector<double> exponents);

    int dim() const { return static_cast<int>(s_.size()); }
    double exponent(int j) const { return s_.at(j); }
    const std::vector<double>& exponents() const { return s_; }

    // |s| = sum_j s_j, the effective homogeneous dimension.
    double total() const { return total_; }

    // Smallest c with |x+y|_s <= c (|x|_s + |y|_s) for all x, y.
    double quasi_triangle_constant() const;

private:
    std::vector<double> s_;
    double total_;
};

inline Scaling euclidean_scaling(int d) {
    return Scaling(std::vector<double>(d, 1.0));
}

// |x|_s for a vector of the scaling's dimension.
double aniso_norm(const Point& x, const Scaling& s);

// |x - y|_s.
double aniso_dist(const Point& x, const Point& y, const Scaling& s);

} // namespace wicklab
