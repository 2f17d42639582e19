#include "wicklab/bound_lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "wicklab/theta_expr.hpp"
#include "wicklab/wick.hpp"

namespace wicklab {

std::vector<std::string> default_families() {
    return {"coincident",     "two-clusters-10", "two-clusters-100",
            "two-clusters-1000", "singleton-pair", "ball"};
}

std::vector<Point> make_geometry(const std::string& family, int K, double eps,
                                 std::uint64_t seed) {
    if (K < 1)
        throw std::invalid_argument("make_geometry: K must be >= 1");
    if (!(eps > 0.0))
        throw std::invalid_argument("make_geometry: eps must be positive");

    std::vector<Point> pts;
    pts.reserve(K);
    if (family == "coincident") {
        for (int j = 0; j < K; ++j) pts.push_back({0.0});
        return pts;
    }
    if (family.rfind("two-clusters-", 0) == 0) {
        double D = std::stod(family.substr(13));
        int left = (K + 1) / 2;
        for (int j = 0; j < left; ++j) pts.push_back({0.1 * j * eps});
        for (int j = left; j < K; ++j) pts.push_back({D * eps + 0.1 * (j - left) * eps});
        return pts;
    }
    if (family == "singleton-pair") {
        if (K < 3)
            throw std::invalid_argument("make_geometry: singleton-pair needs K >= 3");
        pts.push_back({0.0});
        pts.push_back({0.1 * eps});
        for (int j = 2; j < K; ++j) pts.push_back({(j - 1) * 1000.0 * eps});
        return pts;
    }
    if (family == "ball") {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1000.0 * eps, 1000.0 * eps);
        for (int j = 0; j < K; ++j) pts.push_back({u(rng)});
        return pts;
    }
    throw std::invalid_argument("make_geometry: unknown family " + family);
}

GaussianFixture make_fixture(const CovarianceModel& model, const std::string& family,
                             int K, double eps, std::uint64_t seed) {
    GaussianFixture f;
    f.family = family;
    f.gv = gram_matrix(model, make_geometry(family, K, eps, seed));
    return f;
}

double lhs_exact(const GaussianFixture& fixture, double theta, int m, int r) {
    return std::abs(subtracted_product(fixture.gv.cov, m, r, theta));
}

void BoundSweepConfig::validate() const {
    if (!model_for_eps)
        throw std::invalid_argument("BoundSweepConfig: model_for_eps not set");
    if (thetas.empty() || eps_list.empty())
        throw std::invalid_argument("BoundSweepConfig: theta and eps grids must be nonempty");
    if (K < 1 || K > WickEngine::kMaxPoints)
        throw std::invalid_argument("BoundSweepConfig: K out of range");
    if (m < 0 || r < 0)
        throw std::invalid_argument("BoundSweepConfig: m and r must be >= 0");
    int legs = leg_cap > 0 ? leg_cap : K * (m + 2);
    if (legs > 24)
        throw std::invalid_argument("BoundSweepConfig: leg budget K*(m+2) too large");
    for (double e : eps_list)
        if (!(e > 0.0) || !(e < 1.0))
            throw std::invalid_argument("BoundSweepConfig: eps must lie in (0,1)");
}

BoundReport ratio_sweep(const BoundSweepConfig& config) {
    config.validate();
    std::vector<std::string> fams =
        config.families.empty() ? default_families() : config.families;
    int cap = config.leg_cap > 0 ? config.leg_cap : config.K * (config.m + 2);

    BoundReport rep;
    for (double eps : config.eps_list) {
        CovarianceModel model = config.model_for_eps(eps);
        SandwichReport sw = sandwich_check(model);
        if (!sw.pass) {
            std::ostringstream msg;
            msg << "ratio_sweep: model at eps=" << eps
                << " fails its sandwich (lambda_fit=" << sw.lambda_fit << ")";
            throw std::invalid_argument(msg.str());
        }

        for (const auto& fam : fams) {
            GaussianFixture fx = make_fixture(model, fam, config.K, eps, config.seed);
            ThetaExpr expr =
                subtracted_product_expr(fx.gv.cov, config.m, config.r);
            double rhs = rhs_moment(fx.gv.cov, config.m, cap);

            double fam_sup = 0.0;
            for (double theta : config.thetas) {
                BoundCell cell;
                cell.family = fam;
                cell.K = config.K;
                cell.m = config.m;
                cell.r = config.r;
                cell.eps = eps;
                cell.theta = theta;
                cell.lhs = std::abs(expr.eval(theta));
                cell.rhs = rhs;
                if (rhs > 0.0) {
                    cell.ratio = cell.lhs / rhs;
                } else if (cell.lhs > 1e-12) {
                    rep.falsified = true; // bound cannot hold with a zero rhs
                    cell.ratio = std::numeric_limits<double>::infinity();
                } else {
                    cell.ratio = 0.0;
                }
                rep.sup_ratio = std::max(rep.sup_ratio, cell.ratio);
                if (std::abs(theta) <= 5.0)
                    rep.sup_ratio_near = std::max(rep.sup_ratio_near, cell.ratio);
                if (std::abs(theta) >= 20.0)
                    rep.sup_ratio_far = std::max(rep.sup_ratio_far, cell.ratio);
                fam_sup = std::max(fam_sup, cell.ratio);
                rep.cells.push_back(std::move(cell));
            }

            std::ostringstream note;
            note.precision(12);
            note << fam << " eps=" << eps << ": lambda_fit=" << sw.lambda_fit
                 << " rhs=" << rhs << " sup_ratio=" << fam_sup;
            rep.notes.push_back(note.str());
        }
    }
    rep.fitted_constant = rep.sup_ratio;
    return rep;
}

namespace {

Complex ipow(int r) {
    switch (r & 3) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
    }
}

} // namespace

McCheck mc_cross_check(const GaussianFixture& fixture, double theta, int m, int r,
                       long samples, std::uint64_t seed) {
    if (samples < 1)
        throw std::invalid_argument("mc_cross_check: need at least one sample");
    if (m < 0 || r < 0)
        throw std::invalid_argument("mc_cross_check: m and r must be >= 0");
    const auto& cov = fixture.gv.cov;
    const int K = static_cast<int>(cov.rows());

    // Per-point subtracted coefficients d^r/dtheta^r C_n(theta), n < m.
    std::vector<std::vector<Complex>> coeff(K);
    for (int j = 0; j < K; ++j)
        for (int n = 0; n < m; ++n)
            coeff[j].push_back(chaos_coefficient(theta, cov(j, j), n, r, 0));

    Eigen::MatrixXd draws = sample_gaussian(fixture.gv, static_cast<int>(samples), seed);

    const Complex ir = ipow(r);
    Complex sum{0.0, 0.0};
    double sum_re2 = 0.0, sum_im2 = 0.0;
    for (long t = 0; t < samples; ++t) {
        Complex prod{1.0, 0.0};
        for (int j = 0; j < K; ++j) {
            double x = draws(t, j);
            double xr = 1.0;
            for (int q = 0; q < r; ++q) xr *= x;
            Complex factor = ir * xr * Complex{std::cos(theta * x), std::sin(theta * x)};
            for (int n = 0; n < m; ++n)
                factor -= coeff[j][n] * hermite(n, x, cov(j, j));
            prod *= factor;
        }
        sum += prod;
        sum_re2 += prod.real() * prod.real();
        sum_im2 += prod.imag() * prod.imag();
    }

    McCheck out;
    out.samples = samples;
    out.estimate = sum / double(samples);
    double var_re = sum_re2 / double(samples) - out.estimate.real() * out.estimate.real();
    double var_im = sum_im2 / double(samples) - out.estimate.imag() * out.estimate.imag();
    out.stderr_ = std::sqrt(std::max(var_re + var_im, 0.0) / double(samples));
    out.exact = subtracted_product(cov, m, r, theta);
    out.pass = std::abs(out.estimate - out.exact) <= 4.0 * out.stderr_ + 1e-12;
    return out;
}

void write_bound_csv(const BoundReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("write_bound_csv: cannot open " + path);
    os.precision(17);
    os << "family,K,m,r,eps,theta,lhs,rhs,ratio\n";
    for (const auto& c : report.cells)
        os << c.family << "," << c.K << "," << c.m << "," << c.r << "," << c.eps
           << "," << c.theta << "," << c.lhs << "," << c.rhs << "," << c.ratio << "\n";
    if (!os)
        throw std::runtime_error("write_bound_csv: write failed");
}

void write_bound_summary_json(const BoundReport& report, const std::string& path) {
    nlohmann::json j;
    j["cells"] = report.cells.size();
    j["sup_ratio"] = report.sup_ratio;
    j["sup_ratio_near"] = report.sup_ratio_near;
    j["sup_ratio_far"] = report.sup_ratio_far;
    j["fitted_constant"] = report.fitted_constant;
    j["falsified"] = report.falsified;
    j["notes"] = report.notes;
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("write_bound_summary_json: cannot open " + path);
    os << j.dump(2) << "\n";
    if (!os)
        throw std::runtime_error("write_bound_summary_json: write failed");
}

} // namespace wicklab
