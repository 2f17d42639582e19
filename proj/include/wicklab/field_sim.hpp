#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wicklab/covariance.hpp"
#include "wicklab/test_function.hpp"

namespace wicklab {

// Regular lattice, row-major site order (last axis fastest).
struct GridSpec {
    Point origin{0.0};
    std::vector<double> spacing{0.01}; // h_j > 0
    std::vector<int> extent{256};      // sites per axis, >= 1

    int dim() const { return static_cast<int>(extent.size()); }
    long size() const;
    Point site(long flat) const;
    long index(const std::vector<int>& idx) const;
    void validate() const; // throws std::invalid_argument
};

// One lattice sample of a stationary Gaussian field.  values[i] lives at
// grid.site(i).  sigma2 is the model variance recorded at sampling time
// (zeroed by transforms that change the marginal law, e.g. mollification).
struct LatticeField {
    GridSpec grid;
    std::vector<double> values;
    std::string model_stanza;
    std::uint64_t seed = 0;
    double sigma2 = 0.0;

    // Sampler diagnostics: smallest circulant eigenvalue relative to the
    // trace (accepted when >= -1e-9), embedding doublings used, and whether
    // the dense factorization path produced the sample.
    double embedding_min_eig_rel = 0.0;
    int embedding_doublings = 0;
    bool dense_fallback = false;
};

// Draws one exact-in-law sample of the stationary model on the grid via
// periodic circulant embedding (d = 1 or 2).  The embedding starts at twice
// the extent per axis and doubles up to 3 times until its spectrum clears
// -1e-9 * trace; negative eigenvalues inside that band are clipped to 0.  If
// no embedding is PSD the sample falls back to a dense symmetric
// factorization for grids of at most 4096 sites and throws std::runtime_error
// beyond that.  Identical (model, grid, seed) gives a bit-identical field;
// distinct seeds are independent, so sampling is safe to parallelise across
// seeds.
LatticeField sample_field(const CovarianceModel& model, const GridSpec& grid,
                          std::uint64_t seed);

// Reusable sampler for one (model, grid) pair.  The constructor runs the
// embedding search (or the dense factorization) once; draw(seed) then costs
// one FFT and agrees bit for bit with sample_field(model, grid, seed).
// draw is const and safe to call concurrently with distinct seeds.
class FieldSampler {
  public:
    FieldSampler(const CovarianceModel& model, const GridSpec& grid);
    ~FieldSampler();
    FieldSampler(FieldSampler&&) noexcept;
    FieldSampler& operator=(FieldSampler&&) noexcept;

    LatticeField draw(std::uint64_t seed) const;

    bool dense_fallback() const;
    double embedding_min_eig_rel() const;
    const GridSpec& grid() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Discrete taps of the rescaled mollifier rho_eps on grid offsets: every
// offset inside the support box with a nonzero weight, weights renormalised
// to unit sum.  These are exactly the taps mollify_field applies, so the
// variance of a mollified stationary field is the tap double sum against the
// base covariance at lattice lags.
struct MollifierTaps {
    std::vector<std::vector<int>> offsets;
    std::vector<double> weights;
    std::vector<int> reach; // per-axis tap radius
};
MollifierTaps mollifier_taps(const GridSpec& grid, const TestFunction& rho,
                             double eps);

// Discrete periodic convolution with the rescaled mollifier rho_eps.  Taps
// are rho_eps sampled on grid offsets inside its support box and renormalised
// to unit sum, so a constant field is fixed exactly.  Requires
// eps >= 2 max_j h_j (resolved taps) and eps <= 1.  The result's sigma2 is
// cleared; Wick powers of a mollified field need an explicit variance.
LatticeField mollify_field(const LatticeField& field, const TestFunction& rho,
                           double eps);

// Pointwise He_m(value; sigma2).  The variance must come from the covariance
// model, not from the sample.
LatticeField wick_power_field(const LatticeField& field, int m, double sigma2);

// Same, using the variance recorded at sampling time.  Throws when the field
// does not carry one (sigma2 <= 0).
LatticeField wick_power_field(const LatticeField& field, int m);

// Riemann sum  sum_i field[i] * phi_x^lambda(site_i) * prod_j h_j.  Throws
// std::invalid_argument when the support box of the rescaled test sticks out
// of the grid by more than half a cell.
double pair_with_test(const LatticeField& field, const TestFunction& phi,
                      const Point& x, double lambda);

// Flat little-endian binary snapshot: magic "WLF1", u32 dim, per axis
// {u64 extent, f64 origin, f64 spacing}, u64 seed, then the values as 8-byte
// reals.  The model stanza is not serialized.
void write_field_binary(const LatticeField& field, const std::string& path);
LatticeField read_field_binary(const std::string& path);

// Header line then one "x0[,x1],value" row per site.  Guarded to grids of at
// most 65536 sites.
void write_field_csv(const LatticeField& field, const std::string& path);

} // namespace wicklab
