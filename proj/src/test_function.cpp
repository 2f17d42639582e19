#include "wicklab/test_function.hpp"

#include <cmath>
#include <stdexcept>

namespace wicklab {

std::vector<std::pair<double, double>> TestFunction::support_box() const {
    std::vector<std::pair<double, double>> box(scaling.dim());
    for (int j = 0; j < scaling.dim(); ++j) {
        double half = std::pow(support_radius, scaling.exponent(j));
        box[j] = {center[j] - half, center[j] + half};
    }
    return box;
}

int default_points_per_axis(int dim) {
    return dim <= 1 ? 1024 : 128;
}

double integrate_box(const std::vector<std::pair<double, double>>& box,
                     const std::function<double(const Point&)>& f,
                     int points_per_axis) {
    const int d = static_cast<int>(box.size());
    std::vector<double> h(d);
    double cell = 1.0;
    for (int j = 0; j < d; ++j) {
        h[j] = (box[j].second - box[j].first) / points_per_axis;
        cell *= h[j];
    }
    if (cell == 0.0) return 0.0;

    Point x(d);
    std::vector<int> idx(d, 0);
    double acc = 0.0;
    while (true) {
        for (int j = 0; j < d; ++j)
            x[j] = box[j].first + (idx[j] + 0.5) * h[j];
        acc += f(x);
        int j = 0;
        for (; j < d; ++j) {
            if (++idx[j] < points_per_axis) break;
            idx[j] = 0;
        }
        if (j == d) break;
    }
    return acc * cell;
}

double integrate(const TestFunction& f, int points_per_axis) {
    if (points_per_axis <= 0)
        points_per_axis = default_points_per_axis(f.scaling.dim());
    return integrate_box(f.support_box(), f.eval, points_per_axis);
}

TestFunction rescale_test(const TestFunction& phi, const Point& x, double lambda) {
    if (!(lambda > 0.0))
        throw std::invalid_argument("rescale_test: lambda must be positive");
    if (static_cast<int>(x.size()) != phi.scaling.dim())
        throw std::invalid_argument("rescale_test: center dimension mismatch");

    const Scaling s = phi.scaling;
    const Point base_center = phi.center;
    const auto base = phi.eval;
    double amp = std::pow(lambda, -s.total());

    TestFunction out = phi;
    out.center = x;
    out.support_radius = lambda * phi.support_radius;
    out.eval = [base, base_center, s, x, lambda, amp](const Point& y) {
        Point z(y.size());
        for (size_t j = 0; j < y.size(); ++j)
            z[j] = base_center[j] + (y[j] - x[j]) / std::pow(lambda, s.exponent(j));
        return amp * base(z);
    };
    return out;
}

TestFunction rescale_mollifier(const TestFunction& rho, double eps) {
    if (!(eps > 0.0) || eps > 1.0)
        throw std::invalid_argument("rescale_mollifier: eps must lie in (0, 1]");
    double mass = integrate(rho);
    if (std::abs(mass - 1.0) > 1e-6)
        throw std::invalid_argument("rescale_mollifier: kernel mass differs from 1");
    Point origin(rho.scaling.dim(), 0.0);
    return rescale_test(rho, origin, eps);
}

namespace {

TestFunction normalized_radial(const Scaling& s,
                               std::function<double(double)> profile,
                               Smoothness smoothness) {
    TestFunction raw;
    raw.scaling = s;
    raw.center = Point(s.dim(), 0.0);
    raw.support_radius = 1.0;
    raw.smoothness = smoothness;
    raw.eval = [s, profile](const Point& y) { return profile(aniso_norm(y, s)); };
    double mass = integrate(raw);
    if (!(mass > 0.0))
        throw std::runtime_error("mollifier: degenerate mass");
    auto base = raw.eval;
    raw.eval = [base, mass](const Point& y) { return base(y) / mass; };
    return raw;
}

} // namespace

TestFunction bump_mollifier(const Scaling& s) {
    TestFunction f = normalized_radial(
        s,
        [](double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; },
        Smoothness::Smooth);
    f.name = "bump";
    return f;
}

TestFunction triangle_mollifier(const Scaling& s) {
    TestFunction f = normalized_radial(
        s, [](double r) { return r < 1.0 ? 1.0 - r : 0.0; },
        Smoothness::Lipschitz);
    f.name = "triangle";
    return f;
}

} // namespace wicklab
