#include "wicklab/field_sim.hpp"

#include "wicklab/wick.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <fftw3.h>

namespace wicklab {

namespace {

// FFTW's planner is not thread-safe; execution on distinct plans is.
std::mutex g_planner_mutex;

long checked_size(const std::vector<int>& extent) {
    long n = 1;
    for (int e : extent) {
        if (e < 1)
            throw std::invalid_argument("GridSpec: extent must be >= 1 per axis");
        if (n > std::numeric_limits<long>::max() / e)
            throw std::invalid_argument("GridSpec: grid too large");
        n *= e;
    }
    return n;
}

} // namespace

long GridSpec::size() const { return checked_size(extent); }

Point GridSpec::site(long flat) const {
    const int d = dim();
    Point p(d, 0.0);
    for (int j = d - 1; j >= 0; --j) {
        long e = extent[j];
        p[j] = origin[j] + static_cast<double>(flat % e) * spacing[j];
        flat /= e;
    }
    return p;
}

long GridSpec::index(const std::vector<int>& idx) const {
    if (static_cast<int>(idx.size()) != dim())
        throw std::invalid_argument("GridSpec::index: dimension mismatch");
    long flat = 0;
    for (int j = 0; j < dim(); ++j) {
        if (idx[j] < 0 || idx[j] >= extent[j])
            throw std::invalid_argument("GridSpec::index: site out of range");
        flat = flat * extent[j] + idx[j];
    }
    return flat;
}

void GridSpec::validate() const {
    const int d = dim();
    if (d < 1)
        throw std::invalid_argument("GridSpec: empty extent");
    if (static_cast<int>(origin.size()) != d ||
        static_cast<int>(spacing.size()) != d)
        throw std::invalid_argument("GridSpec: origin/spacing/extent sizes disagree");
    for (double h : spacing)
        if (!(h > 0.0) || !std::isfinite(h))
            throw std::invalid_argument("GridSpec: spacing must be positive");
    for (double o : origin)
        if (!std::isfinite(o))
            throw std::invalid_argument("GridSpec: origin must be finite");
    checked_size(extent);
}

namespace {

struct Embedding {
    std::vector<int> n;           // per-axis circulant size
    long total = 0;
    std::vector<double> eigs;     // circulant spectrum
    double min_eig = 0.0;
    double trace = 0.0;
};

// Spectrum of the circulant extension c((k mod N) h), lag folded to
// [-N/2, N/2].  Row-major layout matching fftw_plan_dft_{1,2}d.
Embedding build_embedding(const CovarianceModel& model, const GridSpec& grid,
                          int factor) {
    const int d = grid.dim();
    Embedding emb;
    emb.n.resize(d);
    emb.total = 1;
    for (int j = 0; j < d; ++j) {
        emb.n[j] = std::max(2, factor * grid.extent[j]);
        emb.total *= emb.n[j];
    }

    std::vector<std::complex<double>> buf(emb.total);
    Point diff(d, 0.0);
    for (long flat = 0; flat < emb.total; ++flat) {
        long rem = flat;
        for (int j = d - 1; j >= 0; --j) {
            long k = rem % emb.n[j];
            rem /= emb.n[j];
            long lag = k <= emb.n[j] / 2 ? k : k - emb.n[j];
            diff[j] = static_cast<double>(lag) * grid.spacing[j];
        }
        double c = model.kernel(diff);
        if (!std::isfinite(c))
            throw std::invalid_argument("sample_field: covariance not finite on the grid");
        buf[flat] = c;
    }

    {
        std::lock_guard<std::mutex> lock(g_planner_mutex);
        auto* raw = reinterpret_cast<fftw_complex*>(buf.data());
        fftw_plan plan =
            d == 1 ? fftw_plan_dft_1d(emb.n[0], raw, raw, FFTW_FORWARD, FFTW_ESTIMATE)
                   : fftw_plan_dft_2d(emb.n[0], emb.n[1], raw, raw, FFTW_FORWARD,
                                      FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }

    emb.eigs.resize(emb.total);
    emb.min_eig = std::numeric_limits<double>::infinity();
    for (long k = 0; k < emb.total; ++k) {
        emb.eigs[k] = buf[k].real(); // imag vanishes for an even sequence
        emb.min_eig = std::min(emb.min_eig, emb.eigs[k]);
        emb.trace += emb.eigs[k];
    }
    return emb;
}

} // namespace

struct FieldSampler::Impl {
    GridSpec grid;
    std::string stanza;
    double sigma2 = 0.0;
    double min_eig_rel = 0.0;
    int doublings = 0;
    bool dense = false;
    Embedding emb;        // spectral path
    Eigen::MatrixXd root; // dense path: cov = root * root^T
};

FieldSampler::FieldSampler(const CovarianceModel& model, const GridSpec& grid)
    : impl_(std::make_unique<Impl>()) {
    grid.validate();
    const int d = grid.dim();
    if (d != 1 && d != 2)
        throw std::invalid_argument("sample_field: only d = 1 and d = 2 grids");
    if (model.scaling.dim() != d)
        throw std::invalid_argument("sample_field: model dimension mismatch");
    if (!model.kernel)
        throw std::invalid_argument("sample_field: model has no kernel");

    impl_->grid = grid;
    impl_->stanza = model.to_stanza();
    impl_->sigma2 = model.kernel(Point(d, 0.0));
    if (!(impl_->sigma2 > 0.0) || !std::isfinite(impl_->sigma2))
        throw std::invalid_argument("sample_field: model variance must be finite and positive");

    // Minimal even embedding, then up to 3 domain doublings.
    bool psd = false;
    for (int doublings = 0; doublings <= 3; ++doublings) {
        impl_->emb = build_embedding(model, grid, 2 << doublings);
        impl_->doublings = doublings;
        impl_->min_eig_rel = impl_->emb.min_eig / impl_->emb.trace;
        if (impl_->emb.min_eig >= -1e-9 * impl_->emb.trace) {
            psd = true;
            break;
        }
    }
    if (psd)
        return;

    impl_->dense = true;
    const long n = grid.size();
    if (n > 4096)
        throw std::runtime_error(
            "sample_field: circulant embedding not PSD and grid exceeds the "
            "4096-site dense fallback");
    Eigen::MatrixXd cov(n, n);
    for (long i = 0; i < n; ++i) {
        Point xi = grid.site(i);
        for (long j = i; j < n; ++j) {
            Point xj = grid.site(j);
            Point diff(d);
            for (int a = 0; a < d; ++a)
                diff[a] = xi[a] - xj[a];
            cov(i, j) = cov(j, i) = model.kernel(diff);
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
        impl_->root = llt.matrixL();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        const double floor_eig = -1e-9 * cov.trace();
        if (es.eigenvalues().minCoeff() < floor_eig)
            throw std::runtime_error(
                "sample_field: grid covariance is not positive semidefinite");
        Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        impl_->root = es.eigenvectors() * lam.asDiagonal();
    }
}

FieldSampler::~FieldSampler() = default;
FieldSampler::FieldSampler(FieldSampler&&) noexcept = default;
FieldSampler& FieldSampler::operator=(FieldSampler&&) noexcept = default;

bool FieldSampler::dense_fallback() const { return impl_->dense; }
double FieldSampler::embedding_min_eig_rel() const { return impl_->min_eig_rel; }
const GridSpec& FieldSampler::grid() const { return impl_->grid; }

LatticeField FieldSampler::draw(std::uint64_t seed) const {
    const Impl& im = *impl_;
    const int d = im.grid.dim();

    LatticeField f;
    f.grid = im.grid;
    f.model_stanza = im.stanza;
    f.seed = seed;
    f.sigma2 = im.sigma2;
    f.embedding_min_eig_rel = im.min_eig_rel;
    f.embedding_doublings = im.doublings;
    f.dense_fallback = im.dense;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const long nsites = im.grid.size();

    if (im.dense) {
        Eigen::VectorXd z(nsites);
        for (long i = 0; i < nsites; ++i)
            z(i) = gauss(rng);
        Eigen::VectorXd x = im.root * z;
        f.values.resize(nsites);
        for (long i = 0; i < nsites; ++i)
            f.values[i] = x(i);
        return f;
    }

    // X_j = Re[ (1/sqrt(N)) sum_k sqrt(lam_k) (a_k + i b_k) e^{+2 pi i jk/N} ]
    // has exactly the circulant covariance; the first extent-window of a
    // >= 2x embedding therefore carries the model covariance at every
    // in-window lag.
    const Embedding& emb = im.emb;
    std::vector<std::complex<double>> buf(emb.total);
    for (long k = 0; k < emb.total; ++k) {
        double a = gauss(rng);
        double b = gauss(rng);
        buf[k] = std::sqrt(std::max(emb.eigs[k], 0.0)) * std::complex<double>(a, b);
    }

    {
        std::lock_guard<std::mutex> lock(g_planner_mutex);
        auto* raw = reinterpret_cast<fftw_complex*>(buf.data());
        fftw_plan plan =
            d == 1 ? fftw_plan_dft_1d(emb.n[0], raw, raw, FFTW_BACKWARD, FFTW_ESTIMATE)
                   : fftw_plan_dft_2d(emb.n[0], emb.n[1], raw, raw, FFTW_BACKWARD,
                                      FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(emb.total));
    f.values.resize(nsites);
    for (long i = 0; i < nsites; ++i) {
        long rem = i, emb_flat = 0;
        for (int j = 0; j < d; ++j) {
            long stride = 1;
            for (int a = j + 1; a < d; ++a)
                stride *= im.grid.extent[a];
            long ij = rem / stride;
            rem %= stride;
            emb_flat = emb_flat * emb.n[j] + ij;
        }
        f.values[i] = buf[emb_flat].real() * scale;
    }
    return f;
}

LatticeField sample_field(const CovarianceModel& model, const GridSpec& grid,
                          std::uint64_t seed) {
    return FieldSampler(model, grid).draw(seed);
}

MollifierTaps mollifier_taps(const GridSpec& grid, const TestFunction& rho,
                             double eps) {
    grid.validate();
    const int d = grid.dim();
    if (rho.scaling.dim() != d)
        throw std::invalid_argument("mollify_field: mollifier dimension mismatch");
    double hmax = *std::max_element(grid.spacing.begin(), grid.spacing.end());
    if (!(eps >= 2.0 * hmax))
        throw std::invalid_argument("mollify_field: eps < 2h, mollifier under-resolved");

    TestFunction r = rescale_mollifier(rho, eps);
    auto box = r.support_box();

    MollifierTaps taps;
    taps.reach.resize(d);
    long ntaps = 1;
    for (int j = 0; j < d; ++j) {
        taps.reach[j] =
            static_cast<int>(std::floor(box[j].second / grid.spacing[j] + 1e-12));
        if (2 * taps.reach[j] + 1 > grid.extent[j])
            throw std::invalid_argument("mollify_field: mollifier wider than the grid");
        ntaps *= 2 * taps.reach[j] + 1;
    }

    taps.offsets.reserve(ntaps);
    taps.weights.reserve(ntaps);
    std::vector<int> k(d);
    for (int j = 0; j < d; ++j)
        k[j] = -taps.reach[j];
    double mass = 0.0;
    while (true) {
        Point y(d);
        for (int j = 0; j < d; ++j)
            y[j] = k[j] * grid.spacing[j];
        double w = r.eval(y);
        if (w != 0.0) {
            taps.offsets.push_back(k);
            taps.weights.push_back(w);
            mass += w;
        }
        int j = d - 1;
        while (j >= 0 && k[j] == taps.reach[j]) {
            k[j] = -taps.reach[j];
            --j;
        }
        if (j < 0)
            break;
        ++k[j];
    }
    if (!(mass > 0.0))
        throw std::invalid_argument("mollify_field: mollifier has no mass on the grid");
    for (double& w : taps.weights)
        w /= mass;
    return taps;
}

LatticeField mollify_field(const LatticeField& field, const TestFunction& rho,
                           double eps) {
    MollifierTaps taps = mollifier_taps(field.grid, rho, eps);
    const auto& offsets = taps.offsets;
    const auto& weights = taps.weights;
    const int d = field.grid.dim();

    LatticeField out = field;
    out.sigma2 = 0.0; // marginal variance changed; supply it explicitly downstream
    const long n = field.grid.size();
    std::vector<int> idx(d);
    for (long i = 0; i < n; ++i) {
        long rem = i;
        for (int j = d - 1; j >= 0; --j) {
            idx[j] = static_cast<int>(rem % field.grid.extent[j]);
            rem /= field.grid.extent[j];
        }
        double acc = 0.0;
        for (std::size_t t = 0; t < weights.size(); ++t) {
            long flat = 0;
            for (int j = 0; j < d; ++j) {
                int e = field.grid.extent[j];
                int m = (idx[j] - offsets[t][j]) % e;
                if (m < 0)
                    m += e;
                flat = flat * e + m;
            }
            acc += weights[t] * field.values[flat];
        }
        out.values[i] = acc;
    }
    return out;
}

LatticeField wick_power_field(const LatticeField& field, int m, double sigma2) {
    if (m < 0)
        throw std::invalid_argument("wick_power_field: order must be >= 0");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw std::invalid_argument("wick_power_field: variance must be positive "
                                    "(take it from the covariance model)");
    LatticeField out = field;
    out.sigma2 = 0.0; // output is no longer Gaussian
    for (double& v : out.values)
        v = hermite(m, v, sigma2);
    return out;
}

LatticeField wick_power_field(const LatticeField& field, int m) {
    if (!(field.sigma2 > 0.0))
        throw std::invalid_argument(
            "wick_power_field: field carries no model variance; pass sigma2");
    return wick_power_field(field, m, field.sigma2);
}

double pair_with_test(const LatticeField& field, const TestFunction& phi,
                      const Point& x, double lambda) {
    field.grid.validate();
    const int d = field.grid.dim();
    if (phi.scaling.dim() != d)
        throw std::invalid_argument("pair_with_test: test dimension mismatch");
    if (field.values.size() != static_cast<std::size_t>(field.grid.size()))
        throw std::invalid_argument("pair_with_test: field size mismatch");

    TestFunction g = rescale_test(phi, x, lambda);
    auto box = g.support_box();

    std::vector<int> lo(d), hi(d);
    for (int j = 0; j < d; ++j) {
        double o = field.grid.origin[j], h = field.grid.spacing[j];
        double end = o + (field.grid.extent[j] - 1) * h;
        if (box[j].first < o - 0.5 * h || box[j].second > end + 0.5 * h)
            throw std::invalid_argument("pair_with_test: test support exceeds the grid");
        lo[j] = std::max(0, static_cast<int>(std::ceil((box[j].first - o) / h - 1e-12)));
        hi[j] = std::min(field.grid.extent[j] - 1,
                         static_cast<int>(std::floor((box[j].second - o) / h + 1e-12)));
        if (lo[j] > hi[j])
            return 0.0;
    }

    double cell = 1.0;
    for (int j = 0; j < d; ++j)
        cell *= field.grid.spacing[j];

    double acc = 0.0;
    std::vector<int> idx = lo;
    Point y(d);
    while (true) {
        long flat = 0;
        for (int j = 0; j < d; ++j) {
            flat = flat * field.grid.extent[j] + idx[j];
            y[j] = field.grid.origin[j] + idx[j] * field.grid.spacing[j];
        }
        acc += field.values[flat] * g.eval(y);
        int j = d - 1;
        while (j >= 0 && idx[j] == hi[j])
            --j;
        if (j < 0)
            break;
        ++idx[j];
        for (int a = j + 1; a < d; ++a)
            idx[a] = lo[a];
    }
    return acc * cell;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "field export assumes a little-endian host");

template <typename T> void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T> T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is)
        throw std::runtime_error("read_field_binary: truncated file");
    return v;
}

} // namespace

void write_field_binary(const LatticeField& field, const std::string& path) {
    field.grid.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("write_field_binary: cannot open " + path);
    os.write("WLF1", 4);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(field.grid.dim()));
    for (int j = 0; j < field.grid.dim(); ++j) {
        put<std::uint64_t>(os, static_cast<std::uint64_t>(field.grid.extent[j]));
        put<double>(os, field.grid.origin[j]);
        put<double>(os, field.grid.spacing[j]);
    }
    put<std::uint64_t>(os, field.seed);
    os.write(reinterpret_cast<const char*>(field.values.data()),
             static_cast<std::streamsize>(field.values.size() * sizeof(double)));
    if (!os)
        throw std::runtime_error("write_field_binary: write failed");
}

LatticeField read_field_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("read_field_binary: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "WLF1", 4) != 0)
        throw std::runtime_error("read_field_binary: bad magic");
    auto dim = get<std::uint32_t>(is);
    if (dim < 1 || dim > 8)
        throw std::runtime_error("read_field_binary: implausible dimension");
    LatticeField f;
    f.grid.extent.resize(dim);
    f.grid.origin.resize(dim);
    f.grid.spacing.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
        f.grid.extent[j] = static_cast<int>(get<std::uint64_t>(is));
        f.grid.origin[j] = get<double>(is);
        f.grid.spacing[j] = get<double>(is);
    }
    f.seed = get<std::uint64_t>(is);
    f.grid.validate();
    f.values.resize(f.grid.size());
    is.read(reinterpret_cast<char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!is)
        throw std::runtime_error("read_field_binary: truncated values");
    return f;
}

void write_field_csv(const LatticeField& field, const std::string& path) {
    field.grid.validate();
    const long n = field.grid.size();
    if (n > 65536)
        throw std::invalid_argument("write_field_csv: grid too large for csv export");
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("write_field_csv: cannot open " + path);
    os.precision(17);
    os << "# seed=" << field.seed << "\n";
    for (int j = 0; j < field.grid.dim(); ++j)
        os << "x" << j << ",";
    os << "value\n";
    for (long i = 0; i < n; ++i) {
        Point p = field.grid.site(i);
        for (double c : p)
            os << c << ",";
        os << field.values[i] << "\n";
    }
    if (!os)
        throw std::runtime_error("write_field_csv: write failed");
}

} // namespace wicklab
