#include "wicklab/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fftw3.h>

namespace wicklab {

namespace {

// Cubic interpolation on a uniform table with clamped ends; values outside
// [lo, hi] evaluate to zero (autocorrelations are compactly supported).
struct Table1D {
    double lo = 0, h = 1;
    std::vector<double> v;

    double eval(double x) const {
        double t = (x - lo) / h;
        auto n = static_cast<long>(v.size());
        if (t <= 0.0 || t >= double(n - 1)) return 0.0;
        long i = static_cast<long>(t);
        i = std::min(i, n - 2);
        double f = t - double(i);
        double ym = (i > 0) ? v[i - 1] : v[i];
        double y0 = v[i];
        double y1 = v[i + 1];
        double yp = (i + 2 < n) ? v[i + 2] : v[i + 1];
        // Catmull-Rom tangents keep the interpolant C1 for the Taylor
        // subtraction below.
        double m0 = 0.5 * (y1 - ym);
        double m1 = 0.5 * (yp - y0);
        double f2 = f * f, f3 = f2 * f;
        return (2 * f3 - 3 * f2 + 1) * y0 + (f3 - 2 * f2 + f) * m0 +
               (-2 * f3 + 3 * f2) * y1 + (f3 - f2) * m1;
    }

    double deriv(double x) const { return (eval(x + h) - eval(x - h)) / (2.0 * h); }
};

struct Table2D {
    double lo0 = 0, lo1 = 0, h0 = 1, h1 = 1;
    long n0 = 0, n1 = 0;
    std::vector<double> v; // row-major, v[i0 * n1 + i1]

    double eval(double x0, double x1) const {
        double t0 = (x0 - lo0) / h0, t1 = (x1 - lo1) / h1;
        if (t0 <= 0 || t1 <= 0 || t0 >= double(n0 - 1) || t1 >= double(n1 - 1)) return 0.0;
        long i0 = std::min(static_cast<long>(t0), n0 - 2);
        long i1 = std::min(static_cast<long>(t1), n1 - 2);
        double f0 = t0 - double(i0), f1 = t1 - double(i1);
        double a = v[i0 * n1 + i1], b = v[i0 * n1 + i1 + 1];
        double c = v[(i0 + 1) * n1 + i1], d = v[(i0 + 1) * n1 + i1 + 1];
        return (1 - f0) * ((1 - f1) * a + f1 * b) + f0 * ((1 - f1) * c + f1 * d);
    }
};

// Linear autocorrelation q(w) = int f(u) f(u + w) du of a function supported
// in [-rc, rc], via zero-padded FFT of midpoint samples.
Table1D autocorr_1d(const std::function<double(double)>& f, double rc, long m) {
    long n2 = 1;
    while (n2 < 2 * m) n2 <<= 1;
    double h = 2.0 * rc / double(m);
    std::vector<double> in(n2, 0.0);
    for (long i = 0; i < m; ++i) in[i] = f(-rc + (double(i) + 0.5) * h);

    std::vector<fftw_complex> freq(n2 / 2 + 1);
    fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n2), in.data(), freq.data(), FFTW_ESTIMATE);
    fftw_execute(fwd);
    fftw_destroy_plan(fwd);
    for (auto& c : freq) {
        c[0] = c[0] * c[0] + c[1] * c[1];
        c[1] = 0.0;
    }
    std::vector<double> corr(n2);
    fftw_plan bwd = fftw_plan_dft_c2r_1d(static_cast<int>(n2), freq.data(), corr.data(), FFTW_ESTIMATE);
    fftw_execute(bwd);
    fftw_destroy_plan(bwd);

    // corr[k] / n2 = sum_i in[i] in[i+k]; lags beyond m-1 are zero by padding.
    Table1D q;
    q.lo = -double(m) * h;
    q.h = h;
    q.v.assign(2 * m + 1, 0.0);
    for (long k = -m; k <= m; ++k) {
        long kk = (k % n2 + n2) % n2;
        double c = (std::labs(k) < m) ? corr[kk] / double(n2) : 0.0;
        q.v[k + m] = h * c;
    }
    return q;
}

Table2D autocorr_2d(const std::function<double(double, double)>& f, double rc0, double rc1, long m) {
    long n2 = 1;
    while (n2 < 2 * m) n2 <<= 1;
    double h0 = 2.0 * rc0 / double(m), h1 = 2.0 * rc1 / double(m);
    std::vector<double> in(n2 * n2, 0.0);
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < m; ++j)
            in[i * n2 + j] = f(-rc0 + (double(i) + 0.5) * h0, -rc1 + (double(j) + 0.5) * h1);

    std::vector<fftw_complex> freq(n2 * (n2 / 2 + 1));
    fftw_plan fwd = fftw_plan_dft_r2c_2d(static_cast<int>(n2), static_cast<int>(n2), in.data(), freq.data(), FFTW_ESTIMATE);
    fftw_execute(fwd);
    fftw_destroy_plan(fwd);
    for (auto& c : freq) {
        c[0] = c[0] * c[0] + c[1] * c[1];
        c[1] = 0.0;
    }
    std::vector<double> corr(n2 * n2);
    fftw_plan bwd = fftw_plan_dft_c2r_2d(static_cast<int>(n2), static_cast<int>(n2), freq.data(), corr.data(), FFTW_ESTIMATE);
    fftw_execute(bwd);
    fftw_destroy_plan(bwd);

    Table2D q;
    q.n0 = q.n1 = 2 * m + 1;
    q.lo0 = -double(m) * h0;
    q.lo1 = -double(m) * h1;
    q.h0 = h0;
    q.h1 = h1;
    q.v.assign(q.n0 * q.n1, 0.0);
    double norm = h0 * h1 / double(n2 * n2);
    for (long k0 = -m; k0 <= m; ++k0)
        for (long k1 = -m; k1 <= m; ++k1) {
            if (std::labs(k0) >= m || std::labs(k1) >= m) continue;
            long a = (k0 % n2 + n2) % n2, b = (k1 % n2 + n2) % n2;
            q.v[(k0 + m) * q.n1 + (k1 + m)] = norm * corr[a * n2 + b];
        }
    return q;
}

// Midpoint rule over an anisotropic annulus r_in < |y|_s <= r_out, with
// cells near listed singular points subsampled on a finer offset grid.  The
// integrand must be integrable at those points.
double integrate_annulus(const std::function<double(const Point&)>& f, const Scaling& s,
                         double r_in, double r_out, long n_axis,
                         const std::vector<Point>& singular) {
    int d = s.dim();
    std::vector<double> half(d), h(d);
    for (int j = 0; j < d; ++j) {
        half[j] = std::pow(r_out, s.exponents()[j]);
        h[j] = 2.0 * half[j] / double(n_axis);
    }
    const long sub = 24;
    std::vector<long> idx(d, 0);
    Point y(d);
    double total = 0.0;
    double cell_vol = 1.0;
    for (int j = 0; j < d; ++j) cell_vol *= h[j];

    auto near_singular = [&](const Point& c) {
        for (const auto& p : singular) {
            bool close = true;
            for (int j = 0; j < d; ++j)
                if (std::abs(c[j] - p[j]) > 2.5 * h[j]) { close = false; break; }
            if (close) return true;
        }
        return false;
    };

    while (true) {
        for (int j = 0; j < d; ++j) y[j] = -half[j] + (double(idx[j]) + 0.5) * h[j];
        double r = aniso_norm(y, s);
        if (r > r_in && r <= r_out) {
            if (near_singular(y)) {
                double acc = 0.0;
                std::vector<long> sidx(d, 0);
                Point z(d);
                while (true) {
                    for (int j = 0; j < d; ++j)
                        z[j] = y[j] - 0.5 * h[j] + (double(sidx[j]) + 0.5 + 1e-4) * h[j] / double(sub);
                    double rz = aniso_norm(z, s);
                    if (rz > r_in && rz <= r_out) acc += f(z);
                    int k = 0;
                    while (k < d && ++sidx[k] == sub) sidx[k++] = 0;
                    if (k == d) break;
                }
                total += acc * cell_vol / std::pow(double(sub), d);
            } else {
                total += f(y) * cell_vol;
            }
        }
        int k = 0;
        while (k < d && ++idx[k] == n_axis) idx[k++] = 0;
        if (k == d) break;
    }
    return total;
}

// Volume of the unit ball {|y|_s <= 1}.
double unit_ball_volume(const Scaling& s) {
    return integrate_annulus([](const Point&) { return 1.0; }, s, 0.0, 1.0, 400, {});
}

// int_R |1+y|^{a-1} |y|^{a-1} dy for a in (0, 1/2).  The substitution
// t = y^a flattens each power singularity, so plain midpoint converges at
// second order everywhere; tails are expanded analytically.
double line_convolution_constant(double a) {
    const double delta = 0.25, T = 64.0;
    const long n = 1 << 15;

    auto mid = [&](double lo, double hi, const std::function<double(double)>& f) {
        double h = (hi - lo) / double(n), acc = 0.0;
        for (long i = 0; i < n; ++i) acc += f(lo + (double(i) + 0.5) * h);
        return acc * h;
    };

    // |y| < delta: y = t^{1/a}, both signs folded.
    double part0 = (1.0 / a) * mid(0.0, std::pow(delta, a), [&](double t) {
        double y = std::pow(t, 1.0 / a);
        return std::pow(1.0 + y, a - 1.0) + std::pow(1.0 - y, a - 1.0);
    });
    // |y + 1| < delta: w = |y+1| = t^{1/a}, both sides folded.
    double part1 = (1.0 / a) * mid(0.0, std::pow(delta, a), [&](double t) {
        double w = std::pow(t, 1.0 / a);
        return std::pow(1.0 + w, a - 1.0) + std::pow(1.0 - w, a - 1.0);
    });
    // Smooth remainder away from both singularities, on exact intervals.
    auto f = [&](double y) {
        return std::pow(std::abs(1.0 + y), a - 1.0) * std::pow(std::abs(y), a - 1.0);
    };
    double part2 = mid(-T, -1.0 - delta, f) + mid(-1.0 + delta, -delta, f) + mid(delta, T, f);

    // Both tails at third order; the T^{2a-2} terms cancel between sides.
    double c2 = (a - 1.0) * (a - 2.0) / 2.0;
    double tails = 2.0 * std::pow(T, 2.0 * a - 1.0) / (1.0 - 2.0 * a) +
                   2.0 * c2 * std::pow(T, 2.0 * a - 3.0) / (3.0 - 2.0 * a);
    return part0 + part1 + part2 + tails;
}

// G(x) = int K(x+y) K(y) dy for K(u) = |u|_s^{beta-|s|} at |x|_s = 1, by
// dyadic annuli plus the analytic power tail (d = 2 only).
double convolution_at_direction(const Point& xhat, double alpha, const Scaling& s,
                                double ball_vol) {
    double total_s = s.total();
    double beta = (total_s - alpha) / 2.0;
    double kexp = beta - total_s;
    auto K = [&](const Point& u) { return std::pow(aniso_norm(u, s), kexp); };
    int d = s.dim();
    Point neg(d);
    for (int j = 0; j < d; ++j) neg[j] = -xhat[j];

    auto f = [&](const Point& y) {
        Point u(d);
        for (int j = 0; j < d; ++j) u[j] = xhat[j] + y[j];
        return K(u) * K(y);
    };

    double acc = integrate_annulus(f, s, 0.0, 2.0, 480, {Point(d, 0.0), neg});
    double r = 2.0;
    while (r < 32.0) {
        acc += integrate_annulus(f, s, r, 2.0 * r, 200, {});
        r *= 2.0;
    }
    // Beyond r the product is K(y)^2 (1 + O(1/r)) = |y|_s^{-|s|-alpha} (...).
    acc += ball_vol * total_s * std::pow(r, -alpha) / alpha;
    return acc;
}

Point unit_direction(const Point& x, const Scaling& s) {
    double r = aniso_norm(x, s);
    Point u(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) u[j] = x[j] / std::pow(r, s.exponents()[j]);
    return u;
}

// Signed antiderivatives of |t|^{-g} and t |t|^{-g}.
double power_anti0(double t, double g) {
    return (t >= 0 ? 1.0 : -1.0) * std::pow(std::abs(t), 1.0 - g) / (1.0 - g);
}
double power_anti1(double t, double g) { return std::pow(std::abs(t), 2.0 - g) / (2.0 - g); }

} // namespace

double CovarianceModel::at_separation(double r) const {
    Point diff(scaling.dim(), 0.0);
    diff[0] = std::pow(r, scaling.exponents()[0]);
    return kernel(diff);
}

std::string CovarianceModel::to_stanza() const {
    std::ostringstream os;
    os.precision(17);
    os << "kind=" << kind << "\n";
    os << "alpha=" << alpha << "\n";
    os << "eps=" << eps << "\n";
    os << "lambda=" << declared_lambda << "\n";
    if (!mollifier_name.empty()) os << "mollifier=" << mollifier_name << "\n";
    if (grid_resolution > 0) os << "resolution=" << grid_resolution << "\n";
    os << "scaling=";
    for (int j = 0; j < scaling.dim(); ++j)
        os << (j ? " " : "") << scaling.exponents()[j];
    os << "\n";
    return os.str();
}

CovarianceModel fractional_covariance(double alpha, const Scaling& s) {
    int d = s.dim();
    if (d > 2)
        throw std::invalid_argument("fractional_covariance: dimensions above 2 take explicit kernels");
    if (!(alpha > 0.0) || !(alpha < s.total()))
        throw std::invalid_argument("fractional_covariance: need 0 < alpha < |s|");

    CovarianceModel m;
    m.kind = "fractional";
    m.scaling = s;
    m.alpha = alpha;
    m.eps = 0.0;
    m.singular_coeff = 1.0;

    if (d == 1) {
        // G(x) = I(a) |x|_s^{-alpha} exactly, by homogeneity and symmetry.
        double a = (s.exponents()[0] - alpha) / (2.0 * s.exponents()[0]);
        m.raw_constant = line_convolution_constant(a);
        double g = alpha;
        Scaling sc = s;
        m.kernel = [sc, g](const Point& x) { return std::pow(aniso_norm(x, sc), -g); };
    } else {
        // Direction-dependent amplitude on nodes phi_k = 2 pi k / M,
        // normalised by the first-axis node so G = 1 there exactly.
        const int n_dir = 48;
        auto amps = std::make_shared<std::vector<double>>(n_dir);
        double vol = unit_ball_volume(s);
        for (int k = 0; k < n_dir; ++k) {
            double phi = double(k) * 2.0 * M_PI / double(n_dir);
            Point v{std::cos(phi), std::sin(phi)};
            (*amps)[k] = convolution_at_direction(unit_direction(v, s), alpha, s, vol);
        }
        m.raw_constant = (*amps)[0];
        for (auto& a : *amps) a /= m.raw_constant;

        Scaling sc = s;
        m.kernel = [sc, alpha, amps, n_dir](const Point& x) {
            double r = aniso_norm(x, sc);
            if (r == 0.0) return std::numeric_limits<double>::infinity();
            double phi = std::atan2(x[1], x[0]);
            if (phi < 0) phi += 2.0 * M_PI;
            double t = phi / (2.0 * M_PI) * double(n_dir);
            long i = static_cast<long>(std::floor(t));
            double f = t - double(i);
            auto at = [&](long k) { return (*amps)[((k % n_dir) + n_dir) % n_dir]; };
            // Periodic Catmull-Rom in the angle.
            double ym = at(i - 1), y0 = at(i), y1 = at(i + 1), yp = at(i + 2);
            double m0 = 0.5 * (y1 - ym), m1 = 0.5 * (yp - y0);
            double f2 = f * f, f3 = f2 * f;
            double amp = (2 * f3 - 3 * f2 + 1) * y0 + (f3 - 2 * f2 + f) * m0 +
                         (-2 * f3 + 3 * f2) * y1 + (f3 - f2) * m1;
            return amp * std::pow(r, -alpha);
        };
    }
    m.limit_kernel = m.kernel;
    return m;
}

CovarianceModel mollified_covariance(const CovarianceModel& base, const TestFunction& rho, double eps) {
    int d = base.scaling.dim();
    if (rho.scaling.dim() != d)
        throw std::invalid_argument("mollified_covariance: mollifier dimension mismatch");
    if (!(eps > 0.0) || eps > 1.0)
        throw std::invalid_argument("mollified_covariance: need eps in (0, 1]");
    if (d > 2) throw std::invalid_argument("mollified_covariance: supports d <= 2");

    CovarianceModel m;
    m.kind = "mollified-" + base.kind;
    m.scaling = base.scaling;
    m.alpha = base.alpha;
    m.eps = eps;
    m.mollifier_name = rho.name;
    m.raw_constant = base.raw_constant;
    m.limit_kernel = base.kernel;

    const auto& se = base.scaling.exponents();
    double alpha = base.alpha;

    if (d == 1) {
        double rc = std::pow(rho.support_radius, se[0]);
        auto rho_eval = [&rho](double u) { return rho.eval(Point{u}); };
        auto q = std::make_shared<Table1D>(autocorr_1d(rho_eval, rc, 1 << 17));
        m.grid_resolution = 8192;

        double s1 = se[0];
        double g = alpha / s1; // |z|_s^{-alpha} = |z|^{-g} in the coordinate
        double A = base.singular_coeff;
        bool exact_power = (base.kind == "fractional");
        auto base_kernel = base.kernel;

        m.kernel = [q, rc, s1, g, A, alpha, eps, exact_power, base_kernel](const Point& x) {
            double z = x[0];
            double es = std::pow(eps, s1);
            double vstar = -z / es;
            long n = 8192;
            double h = 4.0 * rc / double(n);

            // Smooth remainder of the base kernel, zero when it is the pure
            // power.
            double srem = 0.0;
            if (!exact_power) {
                for (long i = 0; i < n; ++i) {
                    double v = -2.0 * rc + (double(i) + 0.5) * h;
                    double u = z + es * v;
                    double rem = base_kernel(Point{u});
                    if (A != 0.0 && u != 0.0) rem -= A * std::pow(std::abs(u), -g);
                    if (u == 0.0) rem = 0.0; // remainder is continuous with limit folded into A
                    srem += q->eval(v) * rem;
                }
                srem *= h;
            }

            double spow = 0.0;
            if (A != 0.0) {
                double q0 = q->eval(vstar), q1 = q->deriv(vstar);
                double acc = 0.0;
                for (long i = 0; i < n; ++i) {
                    double v = -2.0 * rc + (double(i) + 0.5) * h;
                    double t = v - vstar;
                    if (t == 0.0) continue;
                    acc += (q->eval(v) - q0 - q1 * t) * std::pow(std::abs(t), -g);
                }
                acc *= h;
                double a = -2.0 * rc - vstar, b = 2.0 * rc - vstar;
                acc += q0 * (power_anti0(b, g) - power_anti0(a, g));
                acc += q1 * (power_anti1(b, g) - power_anti1(a, g));
                spow = A * acc;
            }
            return std::pow(eps, alpha) * srem + spow;
        };
    } else {
        double rc0 = std::pow(rho.support_radius, se[0]);
        double rc1 = std::pow(rho.support_radius, se[1]);
        auto rho_eval = [&rho](double u0, double u1) { return rho.eval(Point{u0, u1}); };
        auto q = std::make_shared<Table2D>(autocorr_2d(rho_eval, rc0, rc1, 512));
        m.grid_resolution = 256;

        double s0 = se[0], s1 = se[1];
        auto base_kernel = base.kernel;
        m.kernel = [q, rc0, rc1, s0, s1, alpha, eps, base_kernel](const Point& xin) {
            // The covariance is even; canonicalise the sign so the quadrature
            // grid (whose subsample offsets are not mirror-symmetric) cannot
            // break that exactly.
            Point x = xin;
            if (x[0] < 0.0 || (x[0] == 0.0 && x[1] < 0.0)) {
                x[0] = -x[0];
                x[1] = -x[1];
            }
            double e0 = std::pow(eps, s0), e1 = std::pow(eps, s1);
            double v0s = -x[0] / e0, v1s = -x[1] / e1;
            long n = 256;
            double h0 = 4.0 * rc0 / double(n), h1 = 4.0 * rc1 / double(n);
            double acc = 0.0;
            for (long i = 0; i < n; ++i) {
                double v0 = -2.0 * rc0 + (double(i) + 0.5) * h0;
                for (long j = 0; j < n; ++j) {
                    double v1 = -2.0 * rc1 + (double(j) + 0.5) * h1;
                    double w = q->eval(v0, v1);
                    if (w == 0.0) continue;
                    bool close = std::abs(v0 - v0s) <= 2.5 * h0 && std::abs(v1 - v1s) <= 2.5 * h1;
                    if (close) {
                        // Integrable singularity inside the cell: subsample.
                        const long sub = 16;
                        double cacc = 0.0;
                        for (long a = 0; a < sub; ++a)
                            for (long b = 0; b < sub; ++b) {
                                double w0 = v0 - 0.5 * h0 + (double(a) + 0.5 + 1e-4) * h0 / double(sub);
                                double w1 = v1 - 0.5 * h1 + (double(b) + 0.5 + 1e-4) * h1 / double(sub);
                                double val = base_kernel(Point{x[0] + e0 * w0, x[1] + e1 * w1});
                                if (std::isfinite(val)) cacc += q->eval(w0, w1) * val;
                            }
                        acc += cacc / double(sub * sub);
                    } else {
                        double val = base_kernel(Point{x[0] + e0 * v0, x[1] + e1 * v1});
                        if (std::isfinite(val)) acc += w * val;
                    }
                }
            }
            return std::pow(eps, alpha) * acc * h0 * h1;
        };
    }
    return m;
}

CovarianceModel scaled_model(const CovarianceModel& m, double factor) {
    CovarianceModel out = m;
    out.kind = m.kind + "-scaled";
    out.declared_lambda = 0.0;
    out.singular_coeff = m.singular_coeff * factor;
    auto k = m.kernel;
    out.kernel = [k, factor](const Point& x) { return factor * k(x); };
    return out;
}

SandwichReport sandwich_check(const CovarianceModel& m, std::vector<double> separations) {
    if (!(m.eps > 0.0))
        throw std::invalid_argument("sandwich_check: model carries no eps scale");
    if (separations.empty()) {
        separations.push_back(0.0);
        for (int k = 0; k < 63; ++k)
            separations.push_back(std::pow(10.0, -3.0 + 4.0 * double(k) / 62.0));
    }
    SandwichReport rep;
    rep.separations = separations;
    double worst = 1.0;
    for (double r : separations) {
        double mid = std::pow(m.eps, m.alpha) / std::pow(r + m.eps, m.alpha);
        double c = m.at_separation(r);
        if (!(c > 0.0) || !std::isfinite(c)) {
            rep.lambda_fit = std::numeric_limits<double>::infinity();
            rep.worst_separation = r;
            rep.pass = false;
            return rep;
        }
        double ratio = std::max(c / mid, mid / c);
        if (ratio > worst) {
            worst = ratio;
            rep.worst_separation = r;
        }
    }
    rep.lambda_fit = worst;
    rep.pass = m.declared_lambda <= 0.0 || worst <= m.declared_lambda * (1.0 + 1e-12);
    return rep;
}

namespace {

GaussianVector validate_vector(GaussianVector gv) {
    auto K = gv.cov.rows();
    if (gv.cov.cols() != K || static_cast<long>(gv.points.size()) != K)
        throw std::invalid_argument("gaussian vector: shape mismatch");
    double asym = (gv.cov - gv.cov.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * (1.0 + gv.cov.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("gaussian vector: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gv.cov);
    double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -1e-9 * gv.cov.trace()) {
        std::ostringstream os;
        os << "gaussian vector: covariance not PSD, min eigenvalue " << min_eig;
        throw std::runtime_error(os.str());
    }
    gv.min_eigenvalue = min_eig;
    return gv;
}

} // namespace

GaussianVector gram_matrix(const CovarianceModel& m, const std::vector<Point>& pts) {
    auto K = static_cast<long>(pts.size());
    if (K == 0) throw std::invalid_argument("gram_matrix: empty point set");
    int d = m.scaling.dim();
    for (const auto& p : pts)
        if (static_cast<int>(p.size()) != d)
            throw std::invalid_argument("gram_matrix: point dimension mismatch");

    GaussianVector gv;
    gv.points = pts;
    gv.scaling = m.scaling;
    gv.alpha = m.alpha;
    gv.eps = m.eps;
    gv.cov.resize(K, K);
    double lambda = m.declared_lambda;
    for (long i = 0; i < K; ++i)
        for (long j = i; j < K; ++j) {
            Point diff(d);
            for (int a = 0; a < d; ++a) diff[a] = pts[i][a] - pts[j][a];
            double c = m.kernel(diff);
            gv.cov(i, j) = gv.cov(j, i) = c;
            // Refine the sandwich constant at the separations actually used
            // so downstream bound certificates stay sound.
            if (m.eps > 0.0 && i != j) {
                double r = aniso_dist(pts[i], pts[j], m.scaling);
                double mid = std::pow(m.eps, m.alpha) / std::pow(r + m.eps, m.alpha);
                if (c > 0.0) lambda = std::max({lambda, c / mid, mid / c});
            }
        }
    if (m.eps > 0.0 && lambda < 1.0) lambda = 1.0;
    gv.lambda = (m.eps > 0.0) ? lambda : 0.0;
    return validate_vector(std::move(gv));
}

GaussianVector gaussian_from_matrix(Eigen::MatrixXd cov, std::vector<Point> pts,
                                    const Scaling& s, double alpha, double eps, double lambda) {
    GaussianVector gv;
    gv.cov = std::move(cov);
    gv.points = std::move(pts);
    gv.scaling = s;
    gv.alpha = alpha;
    gv.eps = eps;
    gv.lambda = lambda;
    return validate_vector(std::move(gv));
}

Eigen::MatrixXd sample_gaussian(const GaussianVector& gv, int n, std::uint64_t seed) {
    auto K = gv.cov.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gv.cov);
    Eigen::VectorXd lam = es.eigenvalues();
    for (long i = 0; i < K; ++i) lam(i) = std::max(lam(i), 0.0);
    Eigen::MatrixXd root = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd z(K, n);
    for (long j = 0; j < n; ++j)
        for (long i = 0; i < K; ++i) z(i, j) = gauss(rng);
    return (root * z).transpose();
}

} // namespace wicklab
