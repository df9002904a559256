#pragma once

#include "warpcode/patch.hpp"

#include <optional>
#include <vector>

namespace warpcode {

/// A square pixel-space transformation with its measured deviation from
/// orthogonality, max |L^T L - I|.
class WarpMatrix {
public:
    explicit WarpMatrix(Matrix entries);

    int dim() const { return static_cast<int>(entries_.rows()); }
    const Matrix& entries() const { return entries_; }
    double orthogonality_residual() const { return residual_; }

private:
    Matrix entries_;
    double residual_ = 0.0;
};

/// One invariant subspace of an orthogonal warp.
///
/// A 2-D block is spanned by (basis_r, basis_i) and the warp rotates the
/// projection of any vector inside it counterclockwise by `angle` in those
/// coordinates. A 1-D block has no basis_i and angle 0 or pi.
struct SubspaceBlock {
    Vector basis_r;
    std::optional<Vector> basis_i;
    double angle = 0.0;

    bool is_pair() const { return basis_i.has_value(); }
    int dim() const { return is_pair() ? 2 : 1; }
};

struct SubspaceDecomposition {
    int dim = 0;
    std::vector<SubspaceBlock> blocks;  // ascending |angle|
    // max |L - polar(L)| for decompose_approx, 0 for the exact path.
    double approximation_residual = 0.0;

    // Block-rotation form sum_b B_b R(angle_b) B_b^T.
    Matrix reassemble() const;
    // All basis vectors as columns (pairs contribute basis_r then basis_i).
    Matrix basis() const;
};

struct AlignmentReport {
    std::vector<double> block_leakage;  // one per 2-D block of A
    double max_leakage = 0.0;
};

inline constexpr double kExactOrthogonalityGate = 1e-6;
inline constexpr double kApproximateOrthogonalityGate = 0.2;

// Index i -> (i + s) mod n.
WarpMatrix make_cyclic_shift(int n, int s);

// Wrap-around translation of a width x height grid by (dx, dy).
WarpMatrix make_torus_shift(Geometry g, int dx, int dy);

// Rotation about the grid center, built from three band-limited circular
// shears (exactly orthogonal). Angles beyond +-pi/2 go through an exact
// 180-degree pixel flip first.
WarpMatrix make_rotation_warp(int width, int height, double angle);

// Bilinear-interpolation rotation with wrap-around sampling and unit-norm
// rows. Not orthogonal; kept as the approximate-warp reference.
WarpMatrix make_bilinear_rotation_warp(int width, int height, double angle);

// Applies the same operator as make_rotation_warp without forming the matrix.
Vector rotate_image(const Vector& image, Geometry g, double angle);

// Torus translation applied directly.
Vector shift_image(const Vector& image, Geometry g, int dx, int dy);

SubspaceDecomposition decompose(const WarpMatrix& L);
SubspaceDecomposition decompose_approx(const WarpMatrix& L);

double commutation_residual(const WarpMatrix& A, const WarpMatrix& B);
AlignmentReport shared_subspace_alignment(const WarpMatrix& A, const WarpMatrix& B);

// Out-of-block leakage of an arbitrary operator on one block.
double block_leakage(const SubspaceBlock& block, const Matrix& op);

// Angle by which `op` rotates the block, measured in the block's own
// coordinates (atan2 of the 2x2 compression's rotation part).
double block_rotation_angle(const SubspaceBlock& block, const Matrix& op);

ImagePatch apply_warp(const WarpMatrix& L, const ImagePatch& x);

// Wraps to (-pi, pi].
double wrap_angle(double a);

}  // namespace warpcode
