#include "wicklab/convergence_lab.hpp"

#include "wicklab/gauss_calc.hpp"
#include "wicklab/wick.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>

#include "json.hpp"

namespace wicklab {

namespace {

struct Quad {
    std::vector<double> x, w;
};

// Gauss-Legendre nodes on [-1, 1], Newton iteration on P_n.
Quad gauss_legendre(int n) {
    Quad q;
    q.x.resize(n);
    q.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 64; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15)
                break;
        }
        q.x[i] = -x;
        q.x[n - 1 - i] = x;
        q.w[i] = q.w[n - 1 - i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
    return q;
}

const Quad& gl16() {
    static const Quad q = gauss_legendre(16);
    return q;
}
const Quad& gl32() {
    static const Quad q = gauss_legendre(32);
    return q;
}

// Gauss-Hermite nodes for weight e^{-t^2}: Golub-Welsch on the Jacobi
// matrix with off-diagonal sqrt(k/2), weights sqrt(pi) * v_0^2.
Quad gauss_hermite(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k)
        J(k - 1, k) = J(k, k - 1) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Quad q;
    q.x.resize(n);
    q.w.resize(n);
    for (int i = 0; i < n; ++i) {
        q.x[i] = es.eigenvalues()(i);
        double v0 = es.eigenvectors()(0, i);
        q.w[i] = std::sqrt(M_PI) * v0 * v0;
    }
    return q;
}

const Quad& gh512() {
    static const Quad q = gauss_hermite(512);
    return q;
}

double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k)
        f *= k;
    return f;
}

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// One-dimensional compactly supported factor tabulated on composite
// Gauss-Legendre panels; q(w) = int f(v + w) f(v) dv re-evaluates f at the
// shifted nodes, so q is exact up to the panel rule on the smooth factor.
struct Autocorr1D {
    std::function<double(const Point&)> eval;
    std::vector<double> node;
    std::vector<double> wf; // panel weight times f(node)
    double width = 0.0;     // support box width; q vanishes beyond it

    double q(double w) const {
        double acc = 0.0;
        Point p(1);
        for (std::size_t i = 0; i < node.size(); ++i) {
            p[0] = node[i] + w;
            acc += wf[i] * eval(p);
        }
        return acc;
    }
};

Autocorr1D make_autocorr(const TestFunction& f) {
    if (f.scaling.dim() != 1)
        throw std::invalid_argument("pair quadrature supports d = 1 only");
    auto box = f.support_box();
    const double a = box[0].first, b = box[0].second;
    const int panels = 8;
    const Quad& gq = gl32();

    Autocorr1D ac;
    ac.eval = f.eval;
    ac.width = b - a;
    ac.node.reserve(panels * gq.x.size());
    ac.wf.reserve(panels * gq.x.size());
    Point p(1);
    for (int s = 0; s < panels; ++s) {
        double lo = a + (b - a) * s / panels;
        double hi = a + (b - a) * (s + 1) / panels;
        for (std::size_t i = 0; i < gq.x.size(); ++i) {
            double v = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gq.x[i];
            p[0] = v;
            ac.node.push_back(v);
            ac.wf.push_back(0.5 * (hi - lo) * gq.w[i] * f.eval(p));
        }
    }
    return ac;
}

// int_{-W}^{W} g(w) q(w) dw on dyadic shells [W 2^{-k-1}, W 2^{-k}] refined
// toward 0.  Integrable singularities g ~ |w|^{-a}, a < 1, give shell
// contributions that decay geometrically; a sustained growth toward 0 or a
// failure to decay within the shell budget is rejected as non-integrable.
double shell_pair_integral(const std::function<double(double)>& g,
                           const Autocorr1D& ac) {
    const double W = ac.width;
    const Quad& gq = gl16();
    double acc = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    int growing = 0;
    double last_mag = 0.0;
    for (int k = 0; k < 1200; ++k) {
        double hi = W * std::ldexp(1.0, -k);
        double lo = 0.5 * hi;
        if (lo < 1e-300)
            break;
        double c = 0.0;
        for (std::size_t i = 0; i < gq.x.size(); ++i) {
            double w = 0.5 * (hi + lo) + 0.5 * (hi - lo) * gq.x[i];
            double qv = ac.q(w);
            c += 0.5 * (hi - lo) * gq.w[i] * (g(w) + g(-w)) * qv;
        }
        if (!std::isfinite(c))
            throw std::invalid_argument(
                "pair quadrature: kernel not finite on the window");
        acc += c;
        last_mag = std::abs(c);
        double floor_mag = 1e-12 * std::max(std::abs(acc), 1e-30);
        if (last_mag > prev * (1.0 + 1e-12) && last_mag > floor_mag)
            ++growing;
        else
            growing = 0;
        if (growing >= 6)
            throw std::invalid_argument(
                "pair quadrature: kernel is not integrable near 0");
        prev = last_mag;
        if (k >= 8 && last_mag <= 1e-14 * std::max(std::abs(acc), 1e-30))
            return acc;
    }
    if (last_mag > 1e-10 * std::max(std::abs(acc), 1e-30))
        throw std::invalid_argument(
            "pair quadrature: shell contributions did not converge "
            "(kernel not integrable near 0)");
    return acc;
}

Complex ipow_i(int r) {
    switch (r & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
    }
}

// Critical values of Student's t at 95% two-sided, by residual dof.
double t975(int dof) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571,
                                   2.447,  2.365, 2.306, 2.262, 2.228,
                                   2.201,  2.179, 2.160, 2.145, 2.131};
    if (dof < 1)
        return 0.0;
    if (dof <= 15)
        return table[dof - 1];
    return 1.96 + 12.0 / (dof * dof);
}

SlopeFit ols_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    if (n < 2 || y.size() != x.size())
        throw std::invalid_argument("slope fit needs at least two points");
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("slope fit needs positive data");
        lx[i] = std::log2(x[i]);
        ly[i] = std::log2(y[i]);
    }
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("slope fit needs at least two distinct x");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    double ssr = 0.0;
    for (int i = 0; i < n; ++i) {
        double res = ly[i] - my - fit.slope * (lx[i] - mx);
        ssr += res * res;
    }
    if (n > 2) {
        fit.stderr_ = std::sqrt(ssr / (n - 2) / sxx);
        double t = t975(n - 2);
        fit.lo95 = fit.slope - t * fit.stderr_;
        fit.hi95 = fit.slope + t * fit.stderr_;
    } else {
        fit.stderr_ = 0.0;
        fit.lo95 = fit.hi95 = fit.slope;
    }
    return fit;
}

} // namespace

void NonlinearityF::validate() const {
    if (!f)
        throw std::invalid_argument("nonlinearity: missing evaluator");
    if (name.empty())
        throw std::invalid_argument("nonlinearity: missing name");
    if (smoothness != "smooth" && smoothness != "lipschitz-kink")
        throw std::invalid_argument("nonlinearity: unknown smoothness tag " +
                                    smoothness);
    if (smoothness == "lipschitz-kink" && kinks.empty())
        throw std::invalid_argument(
            "nonlinearity: kink tag requires kink locations");
    if (smoothness == "smooth" && !kinks.empty())
        throw std::invalid_argument(
            "nonlinearity: kinks declared on a smooth evaluator");
    if (!(growth >= 0.0) || !(growth_scale > 0.0))
        throw std::invalid_argument("nonlinearity: bad growth envelope");

    // Probe grid: 0 and 48 log-spaced magnitudes up to 64, both signs.
    for (int i = -1; i < 48; ++i) {
        double mag = i < 0 ? 0.0 : std::pow(10.0, -3.0 + 4.81 * i / 47.0);
        if (mag > 64.0)
            mag = 64.0;
        for (double x : {mag, -mag}) {
            double bound = growth_scale * std::pow(1.0 + std::abs(x), growth);
            double v = f(x);
            if (!std::isfinite(v) || std::abs(v) > bound * (1.0 + 1e-9))
                throw std::invalid_argument(
                    "nonlinearity: growth envelope violated at x = " +
                    std::to_string(x));
        }
    }
}

NonlinearityF power_nonlinearity(int p) {
    if (p < 0)
        throw std::invalid_argument("power_nonlinearity: exponent must be >= 0");
    NonlinearityF F;
    F.name = "x^" + std::to_string(p);
    F.f = [p](double x) { return std::pow(x, p); };
    F.growth = p;
    F.growth_scale = 1.0;
    return F;
}

NonlinearityF abs_nonlinearity() {
    NonlinearityF F;
    F.name = "abs";
    F.f = [](double x) { return std::abs(x); };
    F.growth = 1.0;
    F.growth_scale = 1.0;
    F.smoothness = "lipschitz-kink";
    F.kinks = {0.0};
    return F;
}

NonlinearityF constant_nonlinearity(double c) {
    NonlinearityF F;
    std::ostringstream name;
    name << "const " << c;
    F.name = name.str();
    F.f = [c](double) { return c; };
    F.growth = 0.0;
    F.growth_scale = std::max(std::abs(c), 1e-12);
    return F;
}

NonlinearityF hermite_nonlinearity(int m, double sigma2) {
    if (m < 0 || !(sigma2 > 0.0))
        throw std::invalid_argument("hermite_nonlinearity: need m >= 0, sigma2 > 0");
    NonlinearityF F;
    std::ostringstream name;
    name << "He" << m << "(s2=" << sigma2 << ")";
    F.name = name.str();
    F.f = [m, sigma2](double x) { return hermite(m, x, sigma2); };
    F.growth = m;
    double scale = 0.0;
    for (double c : hermite_monomial_coeffs(m, sigma2))
        scale += std::abs(c);
    F.growth_scale = std::max(scale, 1e-12);
    return F;
}

double sigma2_limit(const std::function<double(const Point&)>& g,
                    const TestFunction& rho) {
    if (!g)
        throw std::invalid_argument("sigma2_limit: missing kernel");
    Autocorr1D ac = make_autocorr(rho);
    auto g1 = [&g](double w) { return g(Point{w}); };
    return shell_pair_integral(g1, ac);
}

double sigma2_eps_quadrature(const CovarianceModel& base,
                             const TestFunction& rho, double eps) {
    if (!base.kernel)
        throw std::invalid_argument("sigma2_eps_quadrature: model has no kernel");
    if (base.scaling.dim() != 1)
        throw std::invalid_argument("sigma2_eps_quadrature: d = 1 only");
    if (!(eps > 0.0) || eps > 1.0)
        throw std::invalid_argument("sigma2_eps_quadrature: need eps in (0, 1]");
    Autocorr1D ac = make_autocorr(rho);
    const double s0 = base.scaling.exponents()[0];
    const double pre = std::pow(eps, base.alpha);
    const double scale = std::pow(eps, s0);
    auto g1 = [&](double w) { return pre * base.kernel(Point{scale * w}); };
    return shell_pair_integral(g1, ac);
}

double a_m_coefficient(const NonlinearityF& F, double sigma2, int m) {
    if (m < 0)
        throw std::invalid_argument("a_m_coefficient: order must be >= 0");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw std::invalid_argument("a_m_coefficient: variance must be positive");
    if (!F.f)
        throw std::invalid_argument("a_m_coefficient: missing evaluator");

    const double sigma = std::sqrt(sigma2);

    // Gaussian-damped envelope probe.  Quadrature weights at the far nodes
    // underflow, so growth near e^{x^2/2 sigma^2} would otherwise pass the
    // node sums silently with the far mass dropped.
    double env_mid = 0.0, env_far = 0.0;
    for (int k = 4; k <= 7; ++k) {
        double x = k * sigma;
        env_mid = std::max(env_mid, (std::abs(F.f(x)) + std::abs(F.f(-x))) *
                                        std::exp(-0.5 * k * k));
    }
    for (int k = 11; k <= 12; ++k) {
        double x = k * sigma;
        env_far = std::max(env_far, (std::abs(F.f(x)) + std::abs(F.f(-x))) *
                                        std::exp(-0.5 * k * k));
    }
    if (!std::isfinite(env_mid) || !std::isfinite(env_far) ||
        env_far > 1e-6 * env_mid + 1e-290)
        throw std::runtime_error(
            "a_m_coefficient: growth too close to the Gaussian envelope");

    double total = 0.0;

    if (F.kinks.empty()) {
        // E[h(X)] = (1/sqrt(pi)) sum w_i h(sqrt(2) sigma t_i).
        const Quad& q = gh512();
        const int n = static_cast<int>(q.x.size());
        double abs_sum = 0.0, tail = 0.0;
        for (int i = 0; i < n; ++i) {
            double x = std::sqrt(2.0) * sigma * q.x[i];
            double term = q.w[i] * F.f(x) * hermite(m, x, sigma2);
            if (!std::isfinite(term))
                throw std::runtime_error(
                    "a_m_coefficient: integrand not finite (growth too fast)");
            total += term;
            abs_sum += std::abs(term);
            if (i < 8 || i >= n - 8)
                tail += std::abs(term);
        }
        if (tail > 1e-8 * std::max(abs_sum, 1e-300))
            throw std::runtime_error(
                "a_m_coefficient: Gauss-Hermite tail did not converge "
                "(super-exponential growth)");
        total /= std::sqrt(M_PI);
    } else {
        // Composite Gauss-Legendre split at the kinks on |x| <= 12 sigma.
        std::vector<double> cuts{-12.0 * sigma, 12.0 * sigma};
        for (double k : F.kinks)
            if (std::abs(k) < 12.0 * sigma)
                cuts.push_back(k);
        std::sort(cuts.begin(), cuts.end());
        const Quad& q = gl16();
        const double inv_norm = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            double a = cuts[s], b = cuts[s + 1];
            int panels = std::max(1, static_cast<int>(std::ceil((b - a) / (0.5 * sigma))));
            for (int pnl = 0; pnl < panels; ++pnl) {
                double lo = a + (b - a) * pnl / panels;
                double hi = a + (b - a) * (pnl + 1) / panels;
                for (std::size_t i = 0; i < q.x.size(); ++i) {
                    double x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * q.x[i];
                    double dens = inv_norm * std::exp(-x * x / (2.0 * sigma2));
                    double term = 0.5 * (hi - lo) * q.w[i] * F.f(x) *
                                  hermite(m, x, sigma2) * dens;
                    if (!std::isfinite(term))
                        throw std::runtime_error(
                            "a_m_coefficient: integrand not finite");
                    total += term;
                }
            }
        }
    }
    return total / (factorial(m) * std::pow(sigma2, m));
}

LatticeField renormalized_functional(const LatticeField& field,
                                     const NonlinearityF& F, int m, double eps,
                                     double alpha, double sigma2_eps) {
    if (m < 0)
        throw std::invalid_argument("renormalized_functional: order must be >= 0");
    if (!(eps > 0.0) || eps > 1.0)
        throw std::invalid_argument("renormalized_functional: need eps in (0, 1]");
    if (!(sigma2_eps > 0.0) || !std::isfinite(sigma2_eps))
        throw std::invalid_argument(
            "renormalized_functional: variance must be positive");
    if (!F.f)
        throw std::invalid_argument("renormalized_functional: missing evaluator");

    std::vector<double> a(m);
    for (int n = 0; n < m; ++n)
        a[n] = a_m_coefficient(F, sigma2_eps, n);

    const double pref = std::pow(eps, -0.5 * m * alpha);
    LatticeField out = field;
    out.sigma2 = 0.0;
    for (double& v : out.values) {
        double acc = F.f(v);
        for (int n = 0; n < m; ++n)
            acc -= a[n] * hermite(n, v, sigma2_eps);
        v = pref * acc;
    }
    return out;
}

void ConvergenceConfig::validate() const {
    F.validate();
    if (m < 0)
        throw std::invalid_argument("convergence config: order must be >= 0");
    if (n < 1 || n > 4)
        throw std::invalid_argument("convergence config: moment order n in [1, 4]");
    if (!(kappa > 0.0))
        throw std::invalid_argument("convergence config: kappa must be positive");
    if (!base.kernel)
        throw std::invalid_argument("convergence config: base model has no kernel");
    if (!base.limit_kernel)
        throw std::invalid_argument(
            "convergence config: base model has no local limit kernel");
    if (base.scaling.dim() != 1 || rho.scaling.dim() != 1 ||
        phi.scaling.dim() != 1 || grid.dim() != 1)
        throw std::invalid_argument("convergence config: d = 1 only");
    const double stot = base.scaling.total();
    if (!(m < stot / base.alpha))
        throw std::invalid_argument(
            "convergence config: m >= |s|/alpha, the Wick limit diverges");
    if (!(m * base.alpha + kappa < stot))
        throw std::invalid_argument(
            "convergence config: kappa too large, m alpha + kappa >= |s|");
    grid.validate();
    if (eps_list.size() < 2)
        throw std::invalid_argument(
            "convergence config: need at least two mollification levels");
    if (lambdas.empty())
        throw std::invalid_argument("convergence config: empty lambda grid");
    const double h = grid.spacing[0];
    for (double e : eps_list)
        if (!(e >= 2.0 * h) || e > 1.0)
            throw std::invalid_argument(
                "convergence config: eps must sit in [2h, 1]");
    const double lo = grid.origin[0] - 0.5 * h;
    const double hi = grid.origin[0] + (grid.extent[0] - 1 + 0.5) * h;
    for (double l : lambdas) {
        if (!(l > 0.0) || l > 1.0)
            throw std::invalid_argument(
                "convergence config: lambda must sit in (0, 1]");
        auto box = rescale_test(phi, center, l).support_box();
        if (box[0].first < lo || box[0].second > hi)
            throw std::invalid_argument(
                "convergence config: test support exceeds the grid");
    }
    if (replicates < 8)
        throw std::invalid_argument("convergence config: need at least 8 replicates");
    if (jobs < 1)
        throw std::invalid_argument("convergence config: jobs must be >= 1");
    mollifier_taps(grid, rho, *std::max_element(eps_list.begin(), eps_list.end()));
}

ConvergenceConfig default_convergence_config(NonlinearityF F, double alpha,
                                             int m) {
    Scaling s1(std::vector<double>{1.0});
    ConvergenceConfig cfg;
    cfg.F = std::move(F);
    cfg.m = m;
    cfg.base = fractional_covariance(alpha, s1);
    cfg.rho = bump_mollifier(s1);
    cfg.phi = bump_mollifier(s1);
    cfg.grid.origin = {-1.0};
    cfg.grid.spacing = {1.0 / 512.0};
    cfg.grid.extent = {1024};
    cfg.center = {0.0};
    cfg.eps_list = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
    cfg.lambdas = {0.5, 0.25, 0.125};
    return cfg;
}

namespace {

double moment_root(const std::vector<double>& vals, int n2) {
    double acc = 0.0;
    for (double v : vals)
        acc += std::pow(std::abs(v), n2);
    acc /= static_cast<double>(vals.size());
    return std::pow(acc, 1.0 / n2);
}

} // namespace

ConvergenceReport convergence_error(const ConvergenceConfig& cfg) {
    cfg.validate();
    const double alpha = cfg.base.alpha;
    const double h = cfg.grid.spacing[0];
    const int E = static_cast<int>(cfg.eps_list.size());
    const int L = static_cast<int>(cfg.lambdas.size());
    const int R = cfg.replicates;
    const int n2 = 2 * cfg.n;

    const double eps_ref = 2.0 * h;
    CovarianceModel model_ref = mollified_covariance(cfg.base, cfg.rho, eps_ref);
    FieldSampler sampler(model_ref, cfg.grid);
    const double sigma2_ref = model_ref.kernel(Point{0.0});

    ConvergenceReport rep;
    rep.f_name = cfg.F.name;
    rep.m = cfg.m;
    rep.alpha = alpha;
    rep.kappa = cfg.kappa;
    rep.n = cfg.n;
    rep.replicates = R;
    rep.eps_list = cfg.eps_list;
    rep.lambdas = cfg.lambdas;
    rep.sigma2_ref = sigma2_ref;
    rep.sigma2 = sigma2_limit(cfg.base.limit_kernel, cfg.rho);
    rep.a_m = a_m_coefficient(cfg.F, rep.sigma2, cfg.m);

    // The reference draw is Phi_{eps_ref} = eps_ref^{alpha/2} (rho_eps_ref *
    // Psi), so Phi_eps is rebuilt as (eps/eps_ref)^{alpha/2} (rho_eps * psi).
    // Its exact lattice variance is the tap double sum against the reference
    // kernel at lattice lags; no quadrature enters.
    rep.sigma2_eps.resize(E);
    rep.a_m_eps.resize(E);
    std::vector<std::vector<double>> a_below(E); // a_n for n < m
    for (int e = 0; e < E; ++e) {
        MollifierTaps taps = mollifier_taps(cfg.grid, cfg.rho, cfg.eps_list[e]);
        const int reach = taps.reach[0];
        std::vector<double> ker(2 * reach + 1);
        for (int k = 0; k <= 2 * reach; ++k)
            ker[k] = model_ref.kernel(Point{k * h});
        double var = 0.0;
        for (std::size_t t = 0; t < taps.weights.size(); ++t)
            for (std::size_t u = 0; u < taps.weights.size(); ++u)
                var += taps.weights[t] * taps.weights[u] *
                       ker[std::abs(taps.offsets[t][0] - taps.offsets[u][0])];
        rep.sigma2_eps[e] = std::pow(cfg.eps_list[e] / eps_ref, alpha) * var;
        rep.a_m_eps[e] = a_m_coefficient(cfg.F, rep.sigma2_eps[e], cfg.m);
        a_below[e].resize(cfg.m);
        for (int n = 0; n < cfg.m; ++n)
            a_below[e][n] = a_m_coefficient(cfg.F, rep.sigma2_eps[e], n);
    }

    // Per (eps, lambda, replicate) pairings of the three split components.
    std::vector<double> c1(static_cast<std::size_t>(E) * L * R),
        c2(c1.size()), c3(c1.size());
    auto at = [L, R](int e, int l, int r) {
        return (static_cast<std::size_t>(e) * L + l) * R + r;
    };

    const double pref_ref = std::pow(eps_ref, -0.5 * cfg.m * alpha);
    auto run_replicates = [&](int r_begin, int r_end) {
        for (int r = r_begin; r < r_end; ++r) {
            LatticeField psi = sampler.draw(splitmix64(cfg.seed + r));
            LatticeField wick_ref = wick_power_field(psi, cfg.m, sigma2_ref);
            for (double& w : wick_ref.values)
                w *= pref_ref;
            for (int e = 0; e < E; ++e) {
                const double eps = cfg.eps_list[e];
                const double se2 = rep.sigma2_eps[e];
                const double am_eps = rep.a_m_eps[e];
                const double pref_in = std::pow(eps / eps_ref, 0.5 * alpha);
                const double pref_out = std::pow(eps, -0.5 * cfg.m * alpha);
                LatticeField psi_eps = mollify_field(psi, cfg.rho, eps);
                LatticeField t1 = psi_eps, t2 = psi_eps, t3 = psi_eps;
                const long nsites = cfg.grid.size();
                for (long i = 0; i < nsites; ++i) {
                    double v = pref_in * psi_eps.values[i];
                    double acc = cfg.F.f(v);
                    for (int n = 0; n < cfg.m; ++n)
                        acc -= a_below[e][n] * hermite(n, v, se2);
                    double renorm = pref_out * acc;
                    double wick_eps = pref_out * hermite(cfg.m, v, se2);
                    double wm = wick_ref.values[i];
                    t1.values[i] = renorm - am_eps * wick_eps;
                    t2.values[i] = am_eps * (wick_eps - wm);
                    t3.values[i] = (am_eps - rep.a_m) * wm;
                }
                for (int l = 0; l < L; ++l) {
                    double lam = cfg.lambdas[l];
                    c1[at(e, l, r)] = pair_with_test(t1, cfg.phi, cfg.center, lam);
                    c2[at(e, l, r)] = pair_with_test(t2, cfg.phi, cfg.center, lam);
                    c3[at(e, l, r)] = pair_with_test(t3, cfg.phi, cfg.center, lam);
                }
            }
        }
    };

    if (cfg.jobs <= 1 || R < 2 * cfg.jobs) {
        run_replicates(0, R);
    } else {
        std::vector<std::thread> pool;
        int chunk = (R + cfg.jobs - 1) / cfg.jobs;
        for (int j = 0; j < cfg.jobs; ++j) {
            int lo = j * chunk, hi = std::min(R, lo + chunk);
            if (lo >= hi)
                break;
            pool.emplace_back(run_replicates, lo, hi);
        }
        for (auto& t : pool)
            t.join();
    }

    rep.cells.resize(static_cast<std::size_t>(E) * L);
    for (int e = 0; e < E; ++e) {
        for (int l = 0; l < L; ++l) {
            const double scale =
                std::pow(cfg.lambdas[l], 0.5 * cfg.m * alpha + cfg.kappa);
            std::vector<double> tot(R), v1(R), v2(R), v3(R);
            double mean_pow = 0.0;
            for (int r = 0; r < R; ++r) {
                v1[r] = c1[at(e, l, r)];
                v2[r] = c2[at(e, l, r)];
                v3[r] = c3[at(e, l, r)];
                tot[r] = v1[r] + v2[r] + v3[r];
                mean_pow += std::pow(std::abs(tot[r]), n2);
            }
            mean_pow /= R;
            double var_pow = 0.0;
            for (int r = 0; r < R; ++r) {
                double d = std::pow(std::abs(tot[r]), n2) - mean_pow;
                var_pow += d * d;
            }
            var_pow /= R > 1 ? R - 1 : 1;
            double root = std::pow(mean_pow, 1.0 / n2);
            double se_root = mean_pow > 0.0
                                 ? root * std::sqrt(var_pow / R) / (n2 * mean_pow)
                                 : 0.0;
            ConvergenceCell& cell = rep.cells[static_cast<std::size_t>(e) * L + l];
            cell.eps = cfg.eps_list[e];
            cell.lambda = cfg.lambdas[l];
            cell.moment = scale * root;
            cell.stderr_ = scale * se_root;
            cell.t1 = scale * moment_root(v1, n2);
            cell.t2 = scale * moment_root(v2, n2);
            cell.t3 = scale * moment_root(v3, n2);
        }
    }

    // Bootstrap over replicates; resamples shared across the grid so the
    // common-random-number coupling carries into the slope intervals.
    const int B = 200;
    std::vector<std::vector<double>> boot_eps(L), boot_lam(E);
    std::mt19937_64 brng(splitmix64(cfg.seed ^ 0xb007u));
    std::uniform_int_distribution<int> pick(0, R - 1);
    std::vector<int> idx(R);
    std::vector<double> roots(static_cast<std::size_t>(E) * L);
    std::vector<double> ys;
    for (int b = 0; b < B; ++b) {
        for (int r = 0; r < R; ++r)
            idx[r] = pick(brng);
        for (int e = 0; e < E; ++e) {
            for (int l = 0; l < L; ++l) {
                double acc = 0.0;
                for (int r : idx) {
                    double t = c1[at(e, l, r)] + c2[at(e, l, r)] + c3[at(e, l, r)];
                    acc += std::pow(std::abs(t), n2);
                }
                roots[static_cast<std::size_t>(e) * L + l] =
                    std::pow(acc / R, 1.0 / n2) *
                    std::pow(cfg.lambdas[l], 0.5 * cfg.m * alpha + cfg.kappa);
            }
        }
        for (int l = 0; l < L; ++l) {
            ys.assign(E, 0.0);
            for (int e = 0; e < E; ++e)
                ys[e] = roots[static_cast<std::size_t>(e) * L + l];
            boot_eps[l].push_back(ols_loglog(cfg.eps_list, ys).slope);
        }
        if (L >= 2)
            for (int e = 0; e < E; ++e) {
                ys.assign(L, 0.0);
                for (int l = 0; l < L; ++l)
                    ys[l] = roots[static_cast<std::size_t>(e) * L + l];
                boot_lam[e].push_back(ols_loglog(cfg.lambdas, ys).slope);
            }
    }

    auto summarize = [B](std::vector<double>& slopes, double point) {
        std::sort(slopes.begin(), slopes.end());
        SlopeFit fit;
        fit.slope = point;
        double mean = 0.0;
        for (double s : slopes)
            mean += s;
        mean /= B;
        double var = 0.0;
        for (double s : slopes)
            var += (s - mean) * (s - mean);
        fit.stderr_ = std::sqrt(var / (B - 1));
        fit.lo95 = slopes[static_cast<int>(std::floor(0.025 * (B - 1)))];
        fit.hi95 = slopes[static_cast<int>(std::ceil(0.975 * (B - 1)))];
        return fit;
    };

    rep.eps_slopes.resize(L);
    // lambda slopes need a second localization level; skipped otherwise
    rep.lambda_slopes.resize(L >= 2 ? E : 0);
    rep.pass = true;
    for (int l = 0; l < L; ++l) {
        ys.assign(E, 0.0);
        for (int e = 0; e < E; ++e)
            ys[e] = rep.cells[static_cast<std::size_t>(e) * L + l].moment;
        double point = ols_loglog(cfg.eps_list, ys).slope;
        rep.eps_slopes[l] = summarize(boot_eps[l], point);
        if (!(rep.eps_slopes[l].lo95 >= 0.5 * cfg.kappa))
            rep.pass = false;
    }
    if (L >= 2)
        for (int e = 0; e < E; ++e) {
            ys.assign(L, 0.0);
            for (int l = 0; l < L; ++l)
                ys[l] = rep.cells[static_cast<std::size_t>(e) * L + l].moment;
            double point = ols_loglog(cfg.lambdas, ys).slope;
            rep.lambda_slopes[e] = summarize(boot_lam[e], point);
        }
    return rep;
}

ChaosScalingReport higher_chaos_scaling(
    int m, int ell, const std::vector<double>& eps_list,
    const std::vector<double>& lambdas,
    const std::function<CovarianceModel(double)>& model_for_eps,
    const TestFunction& phi, const Point& center) {
    if (m < 0 || ell < 0 || m + ell < 1)
        throw std::invalid_argument("higher_chaos_scaling: need m, ell >= 0, m+ell >= 1");
    if (!model_for_eps)
        throw std::invalid_argument("higher_chaos_scaling: missing model factory");
    if (eps_list.empty() || lambdas.empty())
        throw std::invalid_argument("higher_chaos_scaling: empty grid");
    for (double e : eps_list)
        if (!(e > 0.0) || e > 1.0)
            throw std::invalid_argument("higher_chaos_scaling: eps in (0, 1]");
    for (double l : lambdas)
        if (!(l > 0.0) || l > 1.0)
            throw std::invalid_argument("higher_chaos_scaling: lambda in (0, 1]");
    if (phi.scaling.dim() != 1)
        throw std::invalid_argument("higher_chaos_scaling: d = 1 only");

    const int k = m + ell;
    ChaosScalingReport rep;
    rep.m = m;
    rep.ell = ell;
    rep.eps_list = eps_list;
    rep.lambdas = lambdas;

    const int E = static_cast<int>(eps_list.size());
    const int L = static_cast<int>(lambdas.size());
    rep.cells.resize(static_cast<std::size_t>(E) * L);

    std::vector<Autocorr1D> acs;
    acs.reserve(L);
    for (double lam : lambdas)
        acs.push_back(make_autocorr(rescale_test(phi, center, lam)));

    const double fact_k = factorial(k);
    for (int e = 0; e < E; ++e) {
        CovarianceModel model = model_for_eps(eps_list[e]);
        if (!model.kernel)
            throw std::invalid_argument("higher_chaos_scaling: model has no kernel");
        if (e == 0 && !(m * model.alpha < model.scaling.total()))
            throw std::invalid_argument(
                "higher_chaos_scaling: m alpha >= |s|, the chaos-m limit diverges");
        auto gk = [&model, k](double w) {
            double c = model.kernel(Point{w});
            double p = 1.0;
            for (int i = 0; i < k; ++i)
                p *= c;
            return p;
        };
        for (int l = 0; l < L; ++l) {
            ChaosScalingCell& cell = rep.cells[static_cast<std::size_t>(e) * L + l];
            cell.eps = eps_list[e];
            cell.lambda = lambdas[l];
            cell.moment = fact_k * shell_pair_integral(gk, acs[l]);
        }
    }

    // a slope family needs two points on its axis; skipped otherwise
    rep.eps_slopes.resize(E >= 2 ? L : 0);
    rep.lambda_slopes.resize(L >= 2 ? E : 0);
    std::vector<double> ys;
    if (E >= 2)
        for (int l = 0; l < L; ++l) {
            ys.assign(E, 0.0);
            for (int e = 0; e < E; ++e)
                ys[e] = rep.cells[static_cast<std::size_t>(e) * L + l].moment;
            rep.eps_slopes[l] = ols_loglog(eps_list, ys);
        }
    if (L >= 2)
        for (int e = 0; e < E; ++e) {
            ys.assign(L, 0.0);
            for (int l = 0; l < L; ++l)
                ys[l] = rep.cells[static_cast<std::size_t>(e) * L + l].moment;
            rep.lambda_slopes[e] = ols_loglog(lambdas, ys);
        }
    return rep;
}

std::vector<Complex> operator_a_profile(const LatticeField& field,
                                        double sigma2, int m, int r,
                                        const TestFunction& phi, const Point& x,
                                        double lambda,
                                        const std::vector<double>& thetas) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw std::invalid_argument("operator_a_profile: variance must be positive");
    if (m < 0 || r < 0)
        throw std::invalid_argument("operator_a_profile: need m, r >= 0");
    field.grid.validate();
    if (field.values.size() != static_cast<std::size_t>(field.grid.size()))
        throw std::invalid_argument("operator_a_profile: field size mismatch");

    TestFunction g = rescale_test(phi, x, lambda);
    double cell = 1.0;
    for (double hj : field.grid.spacing)
        cell *= hj;

    // Site weights of the pairing; zero-weight sites drop out.
    std::vector<std::pair<long, double>> sites;
    const long n = field.grid.size();
    for (long i = 0; i < n; ++i) {
        double w = g.eval(field.grid.site(i)) * cell;
        if (w != 0.0)
            sites.emplace_back(i, w);
    }

    const Complex ir = ipow_i(r);
    std::vector<Complex> out;
    out.reserve(thetas.size());
    for (double theta : thetas) {
        std::vector<Complex> coeff(m + 1);
        for (int nn = 0; nn <= m; ++nn)
            coeff[nn] = chaos_coefficient(theta, sigma2, nn, r, 0);
        Complex acc{0.0, 0.0};
        for (auto& [i, w] : sites) {
            double v = field.values[i];
            Complex z = ir * std::pow(v, r) *
                        Complex{std::cos(theta * v), std::sin(theta * v)};
            for (int nn = 0; nn <= m; ++nn)
                z -= coeff[nn] * hermite(nn, v, sigma2);
            acc += w * z;
        }
        out.push_back(acc);
    }
    return out;
}

void write_convergence_csv(const ConvergenceReport& report,
                           const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("write_convergence_csv: cannot open " + path);
    os.precision(17);
    os << "F,m,alpha,eps,lambda,n,error_moment,stderr\n";
    for (const auto& cell : report.cells)
        os << report.f_name << "," << report.m << "," << report.alpha << ","
           << cell.eps << "," << cell.lambda << "," << report.n << ","
           << cell.moment << "," << cell.stderr_ << "\n";
    if (!os)
        throw std::runtime_error("write_convergence_csv: write failed");
}

void write_convergence_summary_json(const ConvergenceReport& report,
                                    const std::string& path) {
    nlohmann::json j;
    j["f"] = report.f_name;
    j["m"] = report.m;
    j["alpha"] = report.alpha;
    j["kappa"] = report.kappa;
    j["n"] = report.n;
    j["replicates"] = report.replicates;
    j["sigma2"] = report.sigma2;
    j["sigma2_ref"] = report.sigma2_ref;
    j["sigma2_eps"] = report.sigma2_eps;
    j["a_m"] = report.a_m;
    j["a_m_eps"] = report.a_m_eps;
    j["eps"] = report.eps_list;
    j["lambda"] = report.lambdas;
    j["pass"] = report.pass;
    auto slopes = nlohmann::json::array();
    for (std::size_t l = 0; l < report.eps_slopes.size(); ++l) {
        const SlopeFit& f = report.eps_slopes[l];
        slopes.push_back({{"lambda", report.lambdas[l]},
                          {"slope", f.slope},
                          {"stderr", f.stderr_},
                          {"lo95", f.lo95},
                          {"hi95", f.hi95}});
    }
    j["eps_slopes"] = slopes;
    auto lslopes = nlohmann::json::array();
    for (std::size_t e = 0; e < report.lambda_slopes.size(); ++e) {
        const SlopeFit& f = report.lambda_slopes[e];
        lslopes.push_back({{"eps", report.eps_list[e]},
                           {"slope", f.slope},
                           {"stderr", f.stderr_},
                           {"lo95", f.lo95},
                           {"hi95", f.hi95}});
    }
    j["lambda_slopes"] = lslopes;
    auto cells = nlohmann::json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"eps", c.eps},
                         {"lambda", c.lambda},
                         {"moment", c.moment},
                         {"stderr", c.stderr_},
                         {"t1", c.t1},
                         {"t2", c.t2},
                         {"t3", c.t3}});
    j["cells"] = cells;
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("write_convergence_summary_json: cannot open " +
                                 path);
    os << j.dump(2) << "\n";
    if (!os)
        throw std::runtime_error("write_convergence_summary_json: write failed");
}

} // namespace wicklab
