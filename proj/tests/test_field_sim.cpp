#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "wicklab/covariance.hpp"
#include "wicklab/field_sim.hpp"
#include "wicklab/test_function.hpp"
#include "wicklab/wick.hpp"

using namespace wicklab;

namespace {

const CovarianceModel& model1() {
    static CovarianceModel m = [] {
        CovarianceModel g = fractional_covariance(0.5, Scaling({1.0}));
        return mollified_covariance(g, bump_mollifier(Scaling({1.0})), 0.1);
    }();
    return m;
}

// Mollified at a finer scale: grids with h <= eps/2 keep the circulant
// embedding PSD, so fine-spacing tests pair with a fine mollification.
const CovarianceModel& model_fine() {
    static CovarianceModel m = [] {
        CovarianceModel g = fractional_covariance(0.5, Scaling({1.0}));
        return mollified_covariance(g, bump_mollifier(Scaling({1.0})), 0.02);
    }();
    return m;
}

// c(0) = 1, c(h) = offdiag, 0 beyond: offdiag = 0 is lattice white noise;
// offdiag > 1/2 has no PSD circulant extension at any size.
CovarianceModel near_diag_model(double h, double offdiag) {
    CovarianceModel m;
    m.kind = "near-diagonal";
    m.scaling = Scaling({1.0});
    m.kernel = [h, offdiag](const Point& p) {
        double r = std::abs(p[0]);
        if (r < 0.5 * h) return 1.0;
        if (r < 1.5 * h) return offdiag;
        return 0.0;
    };
    return m;
}

// Separable Ornstein-Uhlenbeck covariance; its circulant spectrum is the
// outer product of two PSD one-axis spectra.
CovarianceModel expprod_model() {
    CovarianceModel m;
    m.kind = "exp-product";
    m.scaling = Scaling({1.0, 1.0});
    m.kernel = [](const Point& p) {
        return std::exp(-std::abs(p[0]) / 0.3 - std::abs(p[1]) / 0.15);
    };
    return m;
}

struct Stat {
    double mean = 0.0;
    double se = 0.0;
};

Stat summarize(const std::vector<double>& xs) {
    Stat s;
    for (double x : xs) s.mean += x;
    s.mean /= double(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    var /= double(xs.size() - 1);
    s.se = std::sqrt(var / double(xs.size()));
    return s;
}

double lag_stat(const LatticeField& f, int lag) {
    long n = f.grid.size();
    double acc = 0.0;
    for (long i = 0; i + lag < n; ++i) acc += f.values[i] * f.values[i + lag];
    return acc / double(n - lag);
}

GridSpec grid1d(double origin, double h, int n) {
    GridSpec g;
    g.origin = {origin};
    g.spacing = {h};
    g.extent = {n};
    return g;
}

} // namespace

TEST_CASE("grid spec indexing round-trips") {
    GridSpec g;
    g.origin = {-1.0, 2.0};
    g.spacing = {0.5, 0.25};
    g.extent = {4, 6};
    g.validate();
    CHECK(g.size() == 24);

    for (long flat = 0; flat < g.size(); ++flat) {
        Point p = g.site(flat);
        std::vector<int> idx = {int(std::lround((p[0] + 1.0) / 0.5)),
                                int(std::lround((p[1] - 2.0) / 0.25))};
        CHECK(g.index(idx) == flat);
    }
    CHECK(g.site(0)[0] == doctest::Approx(-1.0));
    CHECK(g.site(g.size() - 1)[1] == doctest::Approx(2.0 + 5 * 0.25));

    GridSpec bad = g;
    bad.spacing = {0.5, 0.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.origin = {0.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.extent = {4, -2};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(g.index({4, 0}), std::invalid_argument);
}

TEST_CASE("sampler matches the model covariance at probe lags") {
    const int n = 96, reps = 200;
    const double h = 0.05;
    GridSpec g = grid1d(0.0, h, n);

    std::vector<std::vector<double>> stats(10);
    for (int t = 0; t < reps; ++t) {
        LatticeField f = sample_field(model1(), g, 100 + t);
        REQUIRE(f.values.size() == std::size_t(n));
        CHECK_FALSE(f.dense_fallback);
        CHECK(f.embedding_min_eig_rel >= -1e-9);
        for (int lag = 0; lag < 10; ++lag) stats[lag].push_back(lag_stat(f, lag));
    }

    for (int lag = 0; lag < 10; ++lag) {
        Stat s = summarize(stats[lag]);
        double truth = model1().kernel(Point{lag * h});
        INFO("lag ", lag, ": ", s.mean, " vs ", truth, " se ", s.se);
        CHECK(std::abs(s.mean - truth) < 5.0 * s.se);
    }
}

TEST_CASE("sampling is reproducible and seed-sensitive") {
    GridSpec g = grid1d(0.0, 0.05, 64);
    LatticeField a = sample_field(model1(), g, 42);
    LatticeField b = sample_field(model1(), g, 42);
    LatticeField c = sample_field(model1(), g, 43);

    CHECK(a.values == b.values); // bit-identical
    CHECK(a.sigma2 == doctest::Approx(model1().kernel(Point{0.0})));
    CHECK(a.seed == 42);
    CHECK_FALSE(a.model_stanza.empty());

    double sup = 0.0;
    for (int i = 0; i < 64; ++i) sup = std::max(sup, std::abs(a.values[i] - c.values[i]));
    CHECK(sup > 0.0);

    CHECK_THROWS_AS(sample_field(model1(), grid1d(0.0, -0.1, 8), 1), std::invalid_argument);
    CovarianceModel wrong_dim = expprod_model();
    CHECK_THROWS_AS(sample_field(wrong_dim, g, 1), std::invalid_argument);
    // Unmollified kernel blows up at lag 0.
    CovarianceModel raw = fractional_covariance(0.5, Scaling({1.0}));
    CHECK_THROWS_AS(sample_field(raw, g, 1), std::invalid_argument);
}

TEST_CASE("white noise model gives independent gaussian sites") {
    const int n = 128, reps = 100;
    const double h = 0.05;
    CovarianceModel white = near_diag_model(h, 0.0);
    GridSpec g = grid1d(0.0, h, n);

    std::vector<double> lag0, lag1, pooled;
    for (int t = 0; t < reps; ++t) {
        LatticeField f = sample_field(white, g, 500 + t);
        lag0.push_back(lag_stat(f, 0));
        lag1.push_back(lag_stat(f, 1));
        pooled.insert(pooled.end(), f.values.begin(), f.values.end());
    }

    Stat s0 = summarize(lag0), s1 = summarize(lag1);
    CHECK(std::abs(s0.mean - 1.0) < 5.0 * s0.se);
    CHECK(std::abs(s1.mean) < 5.0 * s1.se);

    // Pooled standardized moments over 12800 sites: |skew| and |excess
    // kurtosis| sit at ~4.5 sigma under the thresholds.
    REQUIRE(pooled.size() >= 10000);
    double mean = 0.0;
    for (double x : pooled) mean += x;
    mean /= double(pooled.size());
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : pooled) {
        double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= double(pooled.size());
    m3 /= double(pooled.size());
    m4 /= double(pooled.size());
    double skew = m3 / std::pow(m2, 1.5);
    double exkurt = m4 / (m2 * m2) - 3.0;
    INFO("skew ", skew, " exkurt ", exkurt);
    CHECK(std::abs(skew) < 0.1);
    CHECK(std::abs(exkurt) < 0.2);
}

TEST_CASE("dense fallback covers non-PSD embeddings") {
    const double h = 0.1;

    SUBCASE("grid-PSD kernel without a PSD circulant extension") {
        // Tridiagonal covariance with offdiagonal 0.6: every circulant
        // spectrum dips to 1 - 1.2 < 0, but the 3-site restriction is PSD.
        CovarianceModel m = near_diag_model(h, 0.6);
        GridSpec g = grid1d(0.0, h, 3);

        LatticeField f = sample_field(m, g, 7);
        CHECK(f.dense_fallback);
        CHECK(f.embedding_doublings == 3);
        CHECK(f.embedding_min_eig_rel < -1e-9);
        CHECK(sample_field(m, g, 7).values == f.values);

        std::vector<double> v0;
        for (int t = 0; t < 400; ++t)
            v0.push_back(std::pow(sample_field(m, g, 900 + t).values[0], 2));
        Stat s = summarize(v0);
        CHECK(std::abs(s.mean - 1.0) < 5.0 * s.se);
    }

    SUBCASE("too large for the dense path") {
        CovarianceModel m = near_diag_model(h, 0.6);
        CHECK_THROWS_AS(sample_field(m, grid1d(0.0, h, 5000), 1), std::runtime_error);
    }

    SUBCASE("kernel that is not PSD on the grid at all") {
        CovarianceModel m = near_diag_model(h, 0.9);
        CHECK_THROWS_AS(sample_field(m, grid1d(0.0, h, 3), 1), std::runtime_error);
    }
}

TEST_CASE("mollification fixes constants and linear profiles") {
    const double h = 0.01;
    GridSpec g = grid1d(0.0, h, 64);
    TestFunction rho = bump_mollifier(Scaling({1.0}));

    SUBCASE("constant field is fixed exactly") {
        LatticeField f;
        f.grid = g;
        f.values.assign(64, 3.7);
        LatticeField out = mollify_field(f, rho, 0.05);
        for (double v : out.values) CHECK(v == doctest::Approx(3.7).epsilon(1e-10));
        CHECK(out.sigma2 == 0.0);
    }

    SUBCASE("linear field is fixed away from the wrap seam") {
        LatticeField f;
        f.grid = g;
        f.values.resize(64);
        for (int i = 0; i < 64; ++i) f.values[i] = 1.0 + 2.5 * (i * h);
        LatticeField out = mollify_field(f, rho, 0.05);
        int reach = int(std::floor(0.05 / h));
        for (int i = reach; i < 64 - reach; ++i)
            CHECK(out.values[i] == doctest::Approx(f.values[i]).epsilon(1e-10));
    }

    SUBCASE("under-resolved and oversized mollifiers are rejected") {
        LatticeField f;
        f.grid = g;
        f.values.assign(64, 0.0);
        CHECK_THROWS_AS(mollify_field(f, rho, 0.015), std::invalid_argument);
        LatticeField tiny;
        tiny.grid = grid1d(0.0, h, 5);
        tiny.values.assign(5, 0.0);
        CHECK_THROWS_AS(mollify_field(tiny, rho, 0.05), std::invalid_argument);
        CHECK_THROWS_AS(mollify_field(f, bump_mollifier(Scaling({1.0, 1.0})), 0.05),
                        std::invalid_argument);
    }
}

TEST_CASE("mollification reduces variance") {
    const int n = 128, reps = 60;
    const double h = 0.05, eps = 0.1;
    GridSpec g = grid1d(0.0, h, n);
    TestFunction rho = bump_mollifier(Scaling({1.0}));

    // Quadrature oracle for the discrete mollified variance:
    // sum_{t,u} w_t w_u C((t-u) h) with the same normalised taps.
    TestFunction r = rescale_mollifier(rho, eps);
    int reach = int(std::floor(r.support_box()[0].second / h + 1e-12));
    std::vector<double> w;
    double mass = 0.0;
    for (int k = -reach; k <= reach; ++k) {
        w.push_back(r.eval(Point{k * h}));
        mass += w.back();
    }
    for (double& x : w) x /= mass;
    double oracle = 0.0;
    for (int t = 0; t <= 2 * reach; ++t)
        for (int u = 0; u <= 2 * reach; ++u)
            oracle += w[t] * w[u] * model1().kernel(Point{(t - u) * h});
    double c0 = model1().kernel(Point{0.0});
    CHECK(oracle < c0);

    std::vector<double> raw_var, moll_var;
    for (int t = 0; t < reps; ++t) {
        LatticeField f = sample_field(model1(), g, 3000 + t);
        CHECK_FALSE(f.dense_fallback);
        LatticeField fm = mollify_field(f, rho, eps);
        double a = 0.0, b = 0.0;
        int cnt = 0;
        for (int i = reach; i < n - reach; ++i) {
            a += f.values[i] * f.values[i];
            b += fm.values[i] * fm.values[i];
            ++cnt;
        }
        raw_var.push_back(a / cnt);
        moll_var.push_back(b / cnt);
    }
    Stat sr = summarize(raw_var), sm = summarize(moll_var);
    INFO("raw ", sr.mean, " mollified ", sm.mean, " oracle ", oracle);
    CHECK(sm.mean < sr.mean);
    CHECK(std::abs(sm.mean - oracle) < 5.0 * sm.se);
    CHECK(std::abs(sr.mean - c0) < 5.0 * sr.se);
}

TEST_CASE("wick powers recenter by the model variance") {
    GridSpec g = grid1d(0.0, 0.05, 128);

    SUBCASE("hand identities") {
        LatticeField f = sample_field(model1(), g, 11);
        double s2 = f.sigma2;
        LatticeField he0 = wick_power_field(f, 0);
        LatticeField he1 = wick_power_field(f, 1);
        LatticeField he2 = wick_power_field(f, 2);
        LatticeField he3 = wick_power_field(f, 3);
        for (int i = 0; i < 128; ++i) {
            double x = f.values[i];
            CHECK(he0.values[i] == 1.0);
            CHECK(he1.values[i] == x);
            CHECK(he2.values[i] == doctest::Approx(x * x - s2).epsilon(1e-12));
            CHECK(he3.values[i] == doctest::Approx(x * x * x - 3.0 * s2 * x).epsilon(1e-12));
        }
        CHECK(he2.sigma2 == 0.0);
        CHECK_THROWS_AS(wick_power_field(f, -1), std::invalid_argument);
        CHECK_THROWS_AS(wick_power_field(f, 2, 0.0), std::invalid_argument);
        LatticeField fm = mollify_field(f, bump_mollifier(Scaling({1.0})), 0.15);
        CHECK_THROWS_AS(wick_power_field(fm, 2), std::invalid_argument);
        CHECK_NOTHROW(wick_power_field(fm, 2, 0.5));
    }

    SUBCASE("second wick power is centred and orders decorrelate") {
        std::vector<double> he2_mean, cross_23;
        for (int t = 0; t < 100; ++t) {
            LatticeField f = sample_field(model1(), g, 4000 + t);
            LatticeField he2 = wick_power_field(f, 2);
            LatticeField he3 = wick_power_field(f, 3);
            double a = 0.0, b = 0.0;
            for (int i = 0; i < 128; ++i) {
                a += he2.values[i];
                b += he2.values[i] * he3.values[i];
            }
            he2_mean.push_back(a / 128.0);
            cross_23.push_back(b / 128.0);
        }
        Stat s2 = summarize(he2_mean), s23 = summarize(cross_23);
        INFO("he2 mean ", s2.mean, " se ", s2.se);
        CHECK(std::abs(s2.mean) < 5.0 * s2.se);
        INFO("he2*he3 mean ", s23.mean, " se ", s23.se);
        CHECK(std::abs(s23.mean) < 5.0 * s23.se);
    }
}

TEST_CASE("pairing integrates against rescaled tests") {
    TestFunction phi = bump_mollifier(Scaling({1.0}));

    SUBCASE("unit mass against the all-ones field") {
        GridSpec g = grid1d(-3.0, 0.01, 601);
        LatticeField ones;
        ones.grid = g;
        ones.values.assign(601, 1.0);
        CHECK(pair_with_test(ones, phi, Point{0.0}, 1.0) == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(pair_with_test(ones, phi, Point{0.0}, 0.5) == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(pair_with_test(ones, phi, Point{1.2}, 0.75) == doctest::Approx(1.0).epsilon(1e-3));
        CHECK_THROWS_AS(pair_with_test(ones, phi, Point{2.8}, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(pair_with_test(ones, bump_mollifier(Scaling({1.0, 1.0})),
                                       Point{0.0, 0.0}, 1.0),
                        std::invalid_argument);
    }

    SUBCASE("second moment of the paired field matches the double integral") {
        const int n = 101, reps = 200;
        const double h = 0.008, lambda = 0.25;
        GridSpec g = grid1d(-0.4, h, n);

        // E[pair^2] = h^2 sum_{ij} phi^lam(x_i) phi^lam(x_j) C(x_i - x_j).
        TestFunction resc = rescale_test(phi, Point{0.0}, lambda);
        std::vector<double> tap(n);
        for (int i = 0; i < n; ++i) tap[i] = resc.eval(Point{-0.4 + i * h});
        double oracle = 0.0;
        for (int i = 0; i < n; ++i) {
            if (tap[i] == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                if (tap[j] == 0.0) continue;
                oracle += tap[i] * tap[j] * model_fine().kernel(Point{(i - j) * h});
            }
        }
        oracle *= h * h;

        std::vector<double> sq;
        for (int t = 0; t < reps; ++t) {
            LatticeField f = sample_field(model_fine(), g, 2000 + t);
            CHECK_FALSE(f.dense_fallback);
            double p = pair_with_test(f, phi, Point{0.0}, lambda);
            sq.push_back(p * p);
        }
        Stat s = summarize(sq);
        INFO("pair^2 ", s.mean, " oracle ", oracle, " se ", s.se);
        CHECK(std::abs(s.mean - oracle) < 5.0 * s.se);
    }
}

TEST_CASE("two dimensional grids sample at reduced resolution") {
    SUBCASE("separable exponential lags") {
        CovarianceModel m = expprod_model();
        GridSpec g;
        g.origin = {0.0, 0.0};
        g.spacing = {0.2, 0.1};
        g.extent = {16, 16};

        auto lag2 = [&](const LatticeField& f, int la, int lb) {
            double acc = 0.0;
            int cnt = 0;
            for (int i = 0; i + la < 16; ++i)
                for (int j = 0; j + lb < 16; ++j) {
                    acc += f.values[i * 16 + j] * f.values[(i + la) * 16 + (j + lb)];
                    ++cnt;
                }
            return acc / cnt;
        };

        std::vector<std::vector<double>> stats(4);
        const int lags[4][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 1}};
        for (int t = 0; t < 100; ++t) {
            LatticeField f = sample_field(m, g, 6000 + t);
            CHECK_FALSE(f.dense_fallback);
            for (int q = 0; q < 4; ++q)
                stats[q].push_back(lag2(f, lags[q][0], lags[q][1]));
        }
        for (int q = 0; q < 4; ++q) {
            Stat s = summarize(stats[q]);
            double truth = m.kernel(Point{lags[q][0] * 0.2, lags[q][1] * 0.1});
            INFO("lag (", lags[q][0], ",", lags[q][1], "): ", s.mean, " vs ", truth);
            CHECK(std::abs(s.mean - truth) < 5.0 * s.se);
        }
    }

    SUBCASE("mollified fractional model smoke test") {
        Scaling s2({1.0, 1.0});
        CovarianceModel m =
            mollified_covariance(fractional_covariance(0.5, s2), bump_mollifier(s2), 0.15);
        GridSpec g;
        g.origin = {0.0, 0.0};
        g.spacing = {0.2, 0.2};
        g.extent = {6, 6};

        LatticeField f = sample_field(m, g, 77);
        CHECK_FALSE(f.dense_fallback);
        for (double v : f.values) CHECK(std::isfinite(v));
        CHECK(sample_field(m, g, 77).values == f.values);
    }
}

TEST_CASE("fields export to binary and csv") {
    GridSpec g = grid1d(-1.0, 0.05, 32);
    LatticeField f = sample_field(model1(), g, 321);

    SUBCASE("binary round-trip is bit-exact") {
        const char* path = "field_roundtrip.bin";
        write_field_binary(f, path);
        LatticeField back = read_field_binary(path);
        CHECK(back.values == f.values);
        CHECK(back.seed == f.seed);
        CHECK(back.grid.extent == f.grid.extent);
        CHECK(back.grid.origin == f.grid.origin);
        CHECK(back.grid.spacing == f.grid.spacing);
        std::remove(path);
    }

    SUBCASE("binary reader rejects junk") {
        const char* path = "field_junk.bin";
        {
            std::ofstream os(path, std::ios::binary);
            os << "not a field";
        }
        CHECK_THROWS_AS(read_field_binary(path), std::runtime_error);
        write_field_binary(f, path);
        // Truncate the payload.
        {
            std::ifstream is(path, std::ios::binary);
            std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
            bytes.resize(bytes.size() - 8);
            std::ofstream os(path, std::ios::binary);
            os.write(bytes.data(), std::streamsize(bytes.size()));
        }
        CHECK_THROWS_AS(read_field_binary(path), std::runtime_error);
        std::remove(path);
    }

    SUBCASE("csv has one row per site and guards large grids") {
        const char* path = "field_export.csv";
        write_field_csv(f, path);
        std::ifstream is(path);
        int lines = 0;
        std::string line;
        while (std::getline(is, line)) ++lines;
        CHECK(lines == 32 + 2); // seed comment + column header
        std::remove(path);

        LatticeField big;
        big.grid = grid1d(0.0, 0.01, 70000);
        big.values.assign(70000, 0.0);
        CHECK_THROWS_AS(write_field_csv(big, "nope.csv"), std::invalid_argument);
    }
}
