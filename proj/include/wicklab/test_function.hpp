#pragma once

#include <functional>
#include <string>
#include <utility>

#include "wicklab/scaling.hpp"

namespace wicklab {

enum class Smoothness { Smooth, Lipschitz, PiecewiseSmooth };

// Compactly supported function with declared support metadata.
// eval vanishes outside { y : |y - center|_s <= support_radius }.
struct TestFunction {
    std::function<double(const Point&)> eval;
    Scaling scaling{std::vector<double>{1.0}};
    Point center{0.0};
    double support_radius = 1.0;
    Smoothness smoothness = Smoothness::Smooth;
    std::string name;

    double operator()(const Point& y) const { return eval(y); }

    // Axis-aligned bounding box of the support: center_j +- radius^{s_j}.
    std::vector<std::pair<double, double>> support_box() const;
};

// phi_x^lambda(y) = lambda^{-|s|} phi((y_j - x_j) / lambda^{s_j}), recentred
// at x with support radius lambda * phi.support_radius.
TestFunction rescale_test(const TestFunction& phi, const Point& x, double lambda);

// rho_eps(y) = eps^{-|s|} rho(y_j / eps^{s_j}) for eps in (0, 1].  Requires
// rho to be an origin-centred unit-mass kernel (checked to 1e-6); total mass
// is preserved by the change of variables.
TestFunction rescale_mollifier(const TestFunction& rho, double eps);

// c * exp(-1/(1 - |x|_s^2)) on |x|_s < 1, normalised to unit mass.
TestFunction bump_mollifier(const Scaling& s);

// c * (1 - |x|_s)_+ normalised to unit mass.
TestFunction triangle_mollifier(const Scaling& s);

// Default midpoint resolution per axis: 2^10 in d=1, 2^7 in d >= 2.
int default_points_per_axis(int dim);

// Tensor-product midpoint rule over an axis-aligned box.
double integrate_box(const std::vector<std::pair<double, double>>& box,
                     const std::function<double(const Point&)>& f,
                     int points_per_axis);

// Midpoint integral of f over its declared support box.
double integrate(const TestFunction& f, int points_per_axis = 0);

} // namespace wicklab
