#pragma once

#include "warpcode/patch.hpp"
#include "warpcode/warp.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace warpcode {

struct Projection {
    double re = 0.0;
    std::optional<double> im;

    // Throws AbsentComponent for 1-D blocks.
    double imag() const;
    double norm() const;
};

Projection project(const SubspaceBlock& block, const ImagePatch& x);

inline constexpr double kDefaultApertureFloor = 1e-3;
inline constexpr int kDefaultThetaGridSize = 16;

// Cosine of the relative angle between the projections of x and y, or
// nothing when either projection is shorter than aperture_floor.
std::optional<double> subspace_angle_cos(const SubspaceBlock& block, const ImagePatch& x, const ImagePatch& y,
                                         double aperture_floor = kDefaultApertureFloor);

// Inner-product detector: |p_x| |p_y| cos(phi_y - phi_x - theta).
double rotation_detector_response(const SubspaceBlock& block, double theta, const ImagePatch& x,
                                  const ImagePatch& y);

// Squared response of the concatenated filters; equals 2 * rotation
// response + |p_x|^2 + |p_y|^2.
double energy_detector_response(const SubspaceBlock& block, double theta, const ImagePatch& x,
                                const ImagePatch& y);

struct SequenceTerms {
    double total = 0.0;
    double quadratic = 0.0;  // sum of squared projection norms
    double cross = 0.0;      // total - quadratic
};

/// Energy response over T frames. Frame s is read through the filter
/// rotated by -theta*s, so a sequence whose in-block projection advances by
/// theta per frame adds up in phase; two frames (x, y) reproduce
/// energy_detector_response(theta, x, y).
SequenceTerms sequence_detector_terms(const SubspaceBlock& block, double theta, std::span<const ImagePatch> frames);
double sequence_detector_response(const SubspaceBlock& block, double theta, std::span<const ImagePatch> frames);

struct Detector {
    int block = 0;
    double theta = 0.0;
};

/// Closed-form bank of subspace rotation detectors.
///
/// Detector d owns factor columns 2d (real) and 2d+1 (imaginary):
/// input_filters hold the rotated eigenfeatures applied to x, output_filters
/// the plain eigenfeatures applied to y. within_pool sums each column pair,
/// so its output is the vector of detector responses; across_pool is
/// caller-supplied and defaults to the identity.
struct DetectorBank {
    std::vector<SubspaceBlock> subspaces;
    std::vector<Detector> detectors;
    Matrix input_filters;   // dim x 2D
    Matrix output_filters;  // dim x 2D
    Matrix within_pool;     // 2D x D
    Matrix across_pool;     // D x K

    int dim() const { return static_cast<int>(input_filters.rows()); }
    int size() const { return static_cast<int>(detectors.size()); }
    std::vector<int> detectors_of(int block) const;
};

struct DetectorResponse {
    Vector per_detector;
    Vector pooled;
};

// Uniform grid of n angles on (-pi, pi], containing 0 and pi.
std::vector<double> uniform_theta_grid(int n = kDefaultThetaGridSize);

// One detector per (2-D block, theta); 1-D blocks get theta in {0, pi}.
DetectorBank make_detector_bank(std::vector<SubspaceBlock> subspaces, std::span<const double> theta_grid);

DetectorBank build_bank_from_warp_family(std::span<const SubspaceDecomposition> decomps,
                                         std::span<const double> theta_grid);

DetectorResponse pooled_code(const DetectorBank& bank, const ImagePatch& x, const ImagePatch& y);

// Across-subspace pooling that turns detector responses into one score per
// warp: for every block, the detector whose theta is closest to the warp's
// rotation angle in that block feeds the warp's output.
Matrix family_pooling(const DetectorBank& bank, std::span<const WarpMatrix> warps);

void save_bank(const DetectorBank& bank, const std::filesystem::path& dir);
DetectorBank load_bank(const std::filesystem::path& dir);

}  // namespace warpcode
