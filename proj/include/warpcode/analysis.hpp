#pragma once

#include "warpcode/io.hpp"
#include "warpcode/model.hpp"
#include "warpcode/patch.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace warpcode {

struct QuadratureScore {
    double theta_hat = 0.0;
    double fit_r2 = 0.0;  // clipped to [0, 1]
};

// Fits v ~ cos(theta) u - sin(theta) u_h with theta from two inner products
// (exact when u, u_h are orthonormal); the residual is computed directly.
QuadratureScore quadrature_pair_score(const Vector& u, const Vector& u_h, const Vector& v);

// Joint version for a learned pair: (v_r, v_i) ~ rotation by theta of
// (u_r, u_i), i.e. v_r = c u_r - s u_i and v_i = s u_r + c u_i.
QuadratureScore pair_quadrature_score(const Vector& u_r, const Vector& u_i, const Vector& v_r, const Vector& v_i);

// Cosine similarity of DFT magnitude arrays (2-D DFT on the grid).
double spectral_overlap(const Vector& u, const Vector& v, Geometry g);

// Mean spectral overlap of u with rotated copies of itself at 30, 45 and 60
// degrees. Close to 1 for ring-shaped spectra (circular harmonics), small for
// plane waves.
double rotational_spectral_overlap(const Vector& u, Geometry g);

struct PairReport {
    int pair_index = 0;
    double theta_hat = 0.0;
    double fit_r2 = 0.0;
    double spectral_overlap = 0.0;
    double energy = 0.0;
    double rotational_overlap = 0.0;
};

struct QuadratureReport {
    std::vector<PairReport> pairs;  // in pair-index order
    double r2_q25 = 0.0;
    double r2_median = 0.0;
    double r2_q75 = 0.0;

    // Fraction of the top-half-by-energy pairs whose fit_r2 reaches `threshold`.
    double top_half_fraction(double threshold) const;
    CsvTable csv() const;
};

// Mean squared first-level pooled response (P^T ((U^T x) * (V^T y)))_j over
// the given examples.
Vector pooled_energy(const GatedModel& m, const Matrix& X, const Matrix& Y);

// Adjacent columns (2j, 2j+1) of U and V form pair j.
QuadratureReport quadrature_report(const GatedModel& m, Geometry g, const Matrix& X, const Matrix& Y);

struct EigenmovieFit {
    double theta_hat = 0.0;  // in [0, pi]
    double consistency_r2 = 0.0;
};

// Fits f_s ~ cos(theta s) a - sin(theta s) b over frames s = 0..T-1: a dense
// theta grid, golden-section refinement, and (a, b) in closed form.
EigenmovieFit eigenmovie_consistency(std::span<const Vector> frames);

// Splits a concatenated filter into frame-sized pieces.
std::vector<Vector> split_frames(const Vector& filter, int frame_dim);

// max / min of the filter energy inside the two frame ranges [0, split) and
// [split, T). Infinite when one side is exactly zero.
double segment_energy_ratio(const Vector& filter, int frame_dim, int split);

// codes_by_orbit[o] holds one code per column. Per code dimension: mean
// within-orbit variance over the variance of the orbit means (both with 1/n
// normalization); the result is averaged over dimensions whose between-orbit
// variance is nonzero. Dimensions whose total variance is below 1e-20 of the
// largest are treated as constant and skipped. Under random grouping of n
// codes per orbit the value is about n - 1, not 1.
double invariance_ratio(std::span<const Matrix> codes_by_orbit);

// Filters are columns. Each tile is mapped to [0, 255] on its own range
// (constant tiles become 128); tiles sit in a grid of `grid_cols` columns
// with 1-px black separators.
GrayImage filter_grid(const Matrix& filters, Geometry g, int grid_cols);
void export_filter_grid(const Matrix& filters, Geometry g, int grid_cols, const std::filesystem::path& path);

}  // namespace warpcode
