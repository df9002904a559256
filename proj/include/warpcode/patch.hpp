#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace warpcode {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Row-major pixel grid. A 1-D signal of length n is {n, 1}.
struct Geometry {
    int width = 0;
    int height = 1;

    int size() const { return width * height; }
    int index(int col, int row) const { return row * width + col; }
    bool operator==(const Geometry&) const = default;
};

/// A flat image or signal vector together with its contrast-normalization state.
///
/// `normalized` is only ever set when the values have zero mean and unit L2
/// norm (to 1e-10). A contrast-normalized constant input becomes the zero
/// patch with `degenerate` set instead.
struct ImagePatch {
    Vector values;
    bool normalized = false;
    bool degenerate = false;

    ImagePatch() = default;
    explicit ImagePatch(Vector v) : values(std::move(v)) {}

    Eigen::Index size() const { return values.size(); }
    // Detector and training preconditions accept normalized or degenerate patches.
    bool contrast_ready() const { return normalized || degenerate; }
};

inline constexpr double kDegenerateNorm = 1e-8;
inline constexpr double kNormalizationTolerance = 1e-10;

ImagePatch contrast_normalize(const Vector& raw);

// Re-derives the flag from the values, e.g. after applying a warp.
bool satisfies_normalization(const Vector& v);

// Stacks patches as columns.
Matrix stack_columns(std::span<const ImagePatch> patches);

// Concatenates frames into one long vector (frame 0 first).
Vector concatenate(std::span<const ImagePatch> frames);

}  // namespace warpcode
