#include "warpcode/patch.hpp"

#include "warpcode/errors.hpp"

#include <cmath>

namespace warpcode {

ImagePatch contrast_normalize(const Vector& raw) {
    if (raw.size() == 0) throw InvalidDimension("contrast_normalize: empty input");
    Vector centered = raw.array() - raw.mean();
    const double norm = centered.norm();
    ImagePatch out;
    if (norm < kDegenerateNorm) {
        out.values = Vector::Zero(raw.size());
        out.degenerate = true;
        return out;
    }
    out.values = centered / norm;
    // Guard against the rare rounding case where the flag would lie.
    out.normalized = satisfies_normalization(out.values);
    if (!out.normalized) {
        out.values.array() -= out.values.mean();
        out.values /= out.values.norm();
        out.normalized = satisfies_normalization(out.values);
    }
    return out;
}

bool satisfies_normalization(const Vector& v) {
    if (v.size() == 0) return false;
    return std::abs(v.mean()) <= kNormalizationTolerance &&
           std::abs(v.norm() - 1.0) <= kNormalizationTolerance;
}

Matrix stack_columns(std::span<const ImagePatch> patches) {
    if (patches.empty()) return Matrix(0, 0);
    const auto rows = patches.front().size();
    Matrix out(rows, static_cast<Eigen::Index>(patches.size()));
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (patches[i].size() != rows) throw DimensionMismatch("stack_columns: ragged patches");
        out.col(static_cast<Eigen::Index>(i)) = patches[i].values;
    }
    return out;
}

Vector concatenate(std::span<const ImagePatch> frames) {
    Eigen::Index total = 0;
    for (const auto& f : frames) total += f.size();
    Vector out(total);
    Eigen::Index at = 0;
    for (const auto& f : frames) {
        out.segment(at, f.size()) = f.values;
        at += f.size();
    }
    return out;
}

}  // namespace warpcode
