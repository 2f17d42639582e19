// Acceptance gate: one line per criterion, [PASS]/[FAIL], pinned tolerances.
// Returns the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <Eigen/Dense>

#include "wicklab/bound_lab.hpp"
#include "wicklab/cluster.hpp"
#include "wicklab/cluster_graph.hpp"
#include "wicklab/convergence_lab.hpp"
#include "wicklab/covariance.hpp"
#include "wicklab/field_sim.hpp"
#include "wicklab/gauss_calc.hpp"
#include "wicklab/test_function.hpp"
#include "wicklab/wick.hpp"

using namespace wicklab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Scaling line() { return Scaling(std::vector<double>{1.0}); }

const CovarianceModel& cluster_model() {
    static CovarianceModel m = mollified_covariance(
        fractional_covariance(0.5, line()), bump_mollifier(line()), 0.05);
    return m;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

int run_cli_binary(const std::string& args) {
    std::string cmd = std::string(CLI_BIN) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// 1. wick_moment against the Hermite-expansion + isserlis_moment route on
//    random PSD fixtures.
bool criterion_pairing_oracle(std::string& detail) {
    const double tol = 1e-10;
    const int fixtures = 500;
    std::mt19937_64 rng(123);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int t = 0; t < fixtures; ++t) {
        int K = 2 + static_cast<int>(rng() % 7); // 2..8
        Eigen::MatrixXd A(K, K);
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j)
                A(i, j) = nd(rng);
        Eigen::MatrixXd cov = A * A.transpose();
        cov /= cov.diagonal().maxCoeff();

        std::vector<int> n(K, 0);
        int budget = 8;
        for (int j = 0; j < K && budget > 0; ++j) {
            n[j] = static_cast<int>(rng() % (budget + 1));
            budget -= n[j];
        }

        WickEngine eng(cov, 16);
        double lhs = eng.wick_moment(n);

        std::vector<std::vector<double>> coeffs(K);
        for (int j = 0; j < K; ++j)
            coeffs[j] = hermite_monomial_coeffs(n[j], cov(j, j));
        std::vector<int> k(K, 0);
        double rhs = 0.0;
        while (true) {
            double c = 1.0;
            for (int j = 0; j < K; ++j)
                c *= coeffs[j][k[j]];
            if (c != 0.0)
                rhs += c * eng.isserlis_moment(k);
            int j = 0;
            while (j < K && ++k[j] > n[j])
                k[j++] = 0;
            if (j == K)
                break;
        }

        double dev = std::abs(lhs - rhs) /
                     std::max({1.0, std::abs(lhs), std::abs(rhs)});
        worst = std::max(worst, dev);
        if (dev > tol) {
            std::ostringstream os;
            os << "fixture " << t << " deviates " << dev;
            detail = os.str();
            return false;
        }
    }
    std::ostringstream os;
    os << fixtures << " fixtures, max deviation " << worst;
    detail = os.str();
    return true;
}

// 2. Two-point subtracted product: closed form on a theta grid, then a
//    10^6-sample Monte-Carlo cross-check.
bool criterion_closed_form(std::string& detail) {
    const double tol = 1e-10;
    Eigen::MatrixXd cov(2, 2);
    cov << 1.3, 0.55, 0.55, 0.9;
    double worst = 0.0;
    for (int i = -100; i <= 100; ++i) {
        double theta = 0.1 * i;
        Complex got = subtracted_product(cov, 1, 0, theta);
        double t2 = theta * theta;
        double exact = std::exp(-0.5 * t2 * (cov(0, 0) + cov(1, 1))) *
                       (std::exp(-t2 * cov(0, 1)) - 1.0);
        worst = std::max(worst, std::abs(got.real() - exact));
        worst = std::max(worst, std::abs(got.imag()));
        if (worst > tol) {
            std::ostringstream os;
            os << "theta " << theta << " deviates " << worst;
            detail = os.str();
            return false;
        }
    }

    GaussianFixture fx;
    fx.family = "explicit";
    fx.gv = gaussian_from_matrix(cov, {{0.0}, {10.0}}, line(), 0.5, 0.1, 2.0);
    McCheck mc = mc_cross_check(fx, 0.8, 1, 0, 1000000, 4242);
    std::ostringstream os;
    os << "grid max deviation " << worst << ", mc |err| "
       << std::abs(mc.estimate - mc.exact) << " vs 4se "
       << 4.0 * mc.stderr_;
    detail = os.str();
    return mc.pass;
}

// 3. Ratio sweep over every (K, m, r) fixture family: finite sup, and the
//    fitted constant from theta <= 5 equals the one from theta <= 50.
bool criterion_ratio_sweep(std::string& detail) {
    const double rel_tol = 1e-6;
    CovarianceModel base = fractional_covariance(0.5, line());
    TestFunction rho = bump_mollifier(line());
    double worst_shift = 0.0;
    double global_sup = 0.0;
    for (int K = 2; K <= 4; ++K)
        for (int m = 1; m <= 3; ++m)
            for (int r = 0; r <= 2; ++r) {
                BoundSweepConfig bc;
                bc.model_for_eps = [&](double e) {
                    return mollified_covariance(base, rho, e);
                };
                bc.K = K;
                bc.m = m;
                bc.r = r;
                bc.seed = 7;
                if (K < 3) // the singleton-pair family needs three points
                    bc.families = {"coincident", "two-clusters-10",
                                   "two-clusters-100", "ball"};
                for (double t = 0.0; t <= 50.0 + 1e-12; t += 0.25)
                    bc.thetas.push_back(t);
                for (int k = 2; k <= 8; ++k)
                    bc.eps_list.push_back(std::pow(2.0, -k));

                BoundReport rep = ratio_sweep(bc);
                if (rep.falsified || !std::isfinite(rep.sup_ratio)) {
                    std::ostringstream os;
                    os << "K " << K << " m " << m << " r " << r
                       << ": unbounded ratio";
                    detail = os.str();
                    return false;
                }
                double shift =
                    rep.sup_ratio_near > 0.0
                        ? (rep.sup_ratio - rep.sup_ratio_near) /
                              rep.sup_ratio_near
                        : rep.sup_ratio;
                worst_shift = std::max(worst_shift, shift);
                global_sup = std::max(global_sup, rep.sup_ratio);
                if (shift > rel_tol) {
                    std::ostringstream os;
                    os << "K " << K << " m " << m << " r " << r
                       << ": theta extension moved the constant by " << shift;
                    detail = os.str();
                    return false;
                }
            }
    std::ostringstream os;
    os << "27 sweeps, sup ratio " << global_sup
       << ", max constant shift " << worst_shift;
    detail = os.str();
    return true;
}

void add_edge(ClusterGraph& g, int i, int j, int mult = 1) {
    g.mult(i, j) += mult;
    g.mult(j, i) += mult;
}

// 4. Randomized admissible graphs: reduction terminates with valid
//    certificates, lands in the minimal class, enhancement reaches degrees
//    {m, m+1}, and the certified factor dominates the original value.
bool criterion_rewrites(std::string& detail) {
    const double cert_tol = 1e-12;
    const int graphs = 1000;
    std::mt19937_64 rng(20260816);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    int done = 0;
    double worst_cert = 0.0;
    while (done < graphs) {
        int K = 2 + static_cast<int>(rng() % 5);  // 2..6
        int m = 1 + static_cast<int>(rng() % 3);  // 1..3
        std::vector<Point> pts{{0.0}};
        for (int i = 1; i < K; ++i) {
            double gap = (rng() % 2 == 0) ? 2.0 + 30.0 * ud(rng)
                                          : 0.02 + 0.3 * ud(rng);
            pts.push_back({pts.back()[0] + gap});
        }
        GaussianVector gv = gram_matrix(cluster_model(), pts);
        Clustering c = build_clusters(pts, 8.0, gv.eps, gv.scaling);

        std::vector<int> eligible;
        for (int v = 0; v < K; ++v)
            if (c.is_singleton(v) || c.is_representative(v))
                eligible.push_back(v);
        // enhancement needs a singleton to anchor representative edges
        if (eligible.size() < 2 || !c.has_singleton())
            continue;

        ClusterGraph g = empty_graph(K);
        auto pick_other = [&](int v) {
            int u = v;
            while (u == v)
                u = eligible[rng() % eligible.size()];
            return u;
        };
        for (int v : eligible)
            if (c.is_singleton(v))
                for (int t = 0; t < m; ++t)
                    add_edge(g, v, pick_other(v));
        int extra = static_cast<int>(rng() % 6);
        for (int t = 0; t < extra; ++t) {
            int v = eligible[rng() % eligible.size()];
            add_edge(g, v, pick_other(v));
        }

        RewriteResult red = reduce_graph(g, c, m, gv);
        OmegaStarReport star = omega_star_member(red.graph, c, m);
        if (!star.member) {
            detail = "reduced graph left the minimal class";
            return false;
        }
        RewriteResult enh = enhance_graph(red.graph, c, m, gv);

        for (const std::vector<RewriteCertificate>* certs :
             {&red.certificates, &enh.certificates})
            for (const RewriteCertificate& cert : *certs) {
                double rel =
                    (cert.value_before - cert.factor * cert.value_after) /
                    std::max(1e-300, std::abs(cert.value_before));
                worst_cert = std::max(worst_cert, rel);
                if (rel > cert_tol) {
                    detail = "certificate inequality violated by " +
                             std::to_string(rel);
                    return false;
                }
            }

        for (int v = 0; v < K; ++v) {
            int d = enh.graph.degree(v);
            if (d != m && d != m + 1) {
                detail = "enhanced degree " + std::to_string(d) +
                         " outside {m, m+1}";
                return false;
            }
        }

        double rhs = rhs_moment(gv.cov, m, (m + 1) * K);
        double lhs = graph_value(g, gv.cov);
        double cap = red.total_factor * enh.total_factor * rhs;
        if (lhs > cap * (1.0 + 1e-9)) {
            detail = "certified factor fails to dominate: " +
                     std::to_string(lhs) + " > " + std::to_string(cap);
            return false;
        }
        ++done;
    }
    std::ostringstream os;
    os << graphs << " graphs, worst certificate slack " << worst_cert;
    detail = os.str();
    return true;
}

// 5. Exact quadrature of the order-(m+ell) pair moment: log-log eps-slope
//    at least m*alpha, uniformly over the localization scales.
bool criterion_chaos_scaling(std::string& detail) {
    const double min_slope = 0.6; // = m * alpha
    TestFunction rho = bump_mollifier(line());
    TestFunction phi = bump_mollifier(line());
    CovarianceModel base = fractional_covariance(0.3, line());
    std::vector<double> eps_list;
    for (int k = 2; k <= 6; ++k)
        eps_list.push_back(std::pow(2.0, -k));
    ChaosScalingReport rep = higher_chaos_scaling(
        2, 1, eps_list, {0.5, 0.25, 0.125},
        [&](double e) { return mollified_covariance(base, rho, e); }, phi,
        {0.0});
    std::ostringstream os;
    os << "slopes";
    bool ok = true;
    for (const SlopeFit& f : rep.eps_slopes) {
        os << " " << f.slope << " (se " << f.stderr_ << ")";
        if (!(f.slope >= min_slope))
            ok = false;
    }
    detail = os.str();
    return ok;
}

// 6. Sampled renormalized-error convergence for x^2, x^4, |x| with the
//    rate slack at 0.1, plus the top-coefficient regression for x^2.
bool criterion_convergence(std::string& detail) {
    std::ostringstream os;
    for (int which = 0; which < 3; ++which) {
        NonlinearityF F = which == 0   ? power_nonlinearity(2)
                          : which == 1 ? power_nonlinearity(4)
                                       : abs_nonlinearity();
        ConvergenceConfig cfg = default_convergence_config(std::move(F));
        cfg.kappa = 0.1;
        cfg.jobs = 4;
        ConvergenceReport rep = convergence_error(cfg);
        double min_lo = 1e300;
        for (const SlopeFit& f : rep.eps_slopes)
            min_lo = std::min(min_lo, f.lo95);
        os << rep.f_name << " lo95 " << min_lo << "; ";
        if (!(min_lo > 0.0)) {
            detail = os.str() + "slope interval touches zero";
            return false;
        }
    }

    // Regression of the renormalized quadratic against the scaled degree-2
    // Wick power of the same draws; the top coefficient is the slope.
    const double slope_tol = 0.05;
    CovarianceModel base = fractional_covariance(0.4, line());
    TestFunction rho = bump_mollifier(line());
    TestFunction phi = bump_mollifier(line());
    NonlinearityF sq = power_nonlinearity(2);
    double sxy = 0.0, sxx = 0.0;
    for (double eps : {1.0 / 8, 1.0 / 16, 1.0 / 32}) {
        CovarianceModel model = mollified_covariance(base, rho, eps);
        GridSpec grid;
        grid.origin = {-1.0};
        grid.spacing = {eps / 2.0};
        grid.extent = {static_cast<int>(std::lround(4.0 / eps))};
        double s2 = model.kernel(Point{0.0});
        double scale = std::pow(eps, -0.4);
        FieldSampler sampler(model, grid);
        for (int r = 0; r < 400; ++r) {
            LatticeField f = sampler.draw(800000 + r);
            LatticeField w2 = wick_power_field(f, 2, s2);
            double x =
                scale * pair_with_test(w2, phi, {0.0}, 0.25);
            LatticeField out =
                renormalized_functional(f, sq, 2, eps, 0.4, s2);
            double y = pair_with_test(out, phi, {0.0}, 0.25);
            sxy += x * y;
            sxx += x * x;
        }
    }
    double slope = sxy / sxx;
    os << "a_2 regression slope " << slope;
    detail = os.str();
    return std::abs(slope - 1.0) <= slope_tol;
}

// 7. Chaos-coefficient oracle values.
bool criterion_coefficient_oracle(std::string& detail) {
    const double kink_tol = 1e-6;
    const double poly_tol = 1e-10;
    double a2 = a_m_coefficient(abs_nonlinearity(), 1.0, 2);
    double exact = 1.0 / std::sqrt(2.0 * M_PI);
    double dev_abs = std::abs(a2 - exact);

    double dev_poly = 0.0;
    for (double s2 : {1.0, 0.49})
        for (int p = 0; p <= 6; ++p) {
            std::vector<double> want = power_in_hermite_basis(p, s2);
            for (int m = 0; m <= p; ++m) {
                double got =
                    a_m_coefficient(power_nonlinearity(p), s2, m);
                dev_poly = std::max(
                    dev_poly, std::abs(got - want[m]) /
                                  std::max(1.0, std::abs(want[m])));
            }
        }
    std::ostringstream os;
    os << "|x| coefficient off by " << dev_abs << ", polynomials off by "
       << dev_poly;
    detail = os.str();
    return dev_abs <= kink_tol && dev_poly <= poly_tol;
}

// 8. Repeated CLI invocations with a fixed seed emit byte-identical files.
bool criterion_cli_determinism(std::string& detail) {
    const std::string cfg = std::string(CONFIG_DIR);
    struct Job {
        std::string args;
        std::vector<std::string> files;
    };
    const std::vector<Job> jobs = {
        {"bound-sweep --config " + cfg + "/bound_default.ini",
         {"bound_cells.csv", "bound_summary.json"}},
        {"converge --config " + cfg + "/converge_default.ini",
         {"converge_abs.csv", "converge_abs.json"}},
        {"sandwich-check --config " + cfg + "/sandwich_default.ini",
         {"sandwich.json"}},
    };
    for (const Job& job : jobs) {
        for (const char* dir : {"acc_cli_a", "acc_cli_b"}) {
            int rc = run_cli_binary(job.args + " --out " + dir);
            if (rc != 0) {
                detail = job.args + ": exit " + std::to_string(rc);
                return false;
            }
        }
        for (const std::string& f : job.files) {
            std::string a = slurp("acc_cli_a/" + f);
            if (a.empty() || a != slurp("acc_cli_b/" + f)) {
                detail = f + ": outputs differ between runs";
                return false;
            }
        }
    }
    detail = "3 subcommands, 5 artifacts, byte-identical";
    return true;
}

struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
};

} // namespace

int main() {
    const Criterion criteria[] = {
        {"pairing-engine oracle equivalence", criterion_pairing_oracle},
        {"two-point closed form and Monte-Carlo", criterion_closed_form},
        {"ratio sweep finite and theta-uniform", criterion_ratio_sweep},
        {"rewrite soundness on random graphs", criterion_rewrites},
        {"exact higher-chaos scaling slope", criterion_chaos_scaling},
        {"renormalized-error convergence", criterion_convergence},
        {"chaos-coefficient oracle", criterion_coefficient_oracle},
        {"CLI byte determinism", criterion_cli_determinism},
    };

    int failures = 0;
    int idx = 0;
    for (const Criterion& c : criteria) {
        ++idx;
        Clock::time_point t0 = Clock::now();
        bool ok = false;
        std::string detail;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %d %s: %s (%.1fs)\n", ok ? "PASS" : "FAIL", idx,
                    c.name, detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
        if (!ok)
            ++failures;
    }
    std::printf("acceptance: %d/8 criteria passed\n", 8 - failures);
    return failures;
}
