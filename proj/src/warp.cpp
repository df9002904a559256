#include "warpcode/warp.hpp"

#include "warpcode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace warpcode {

namespace {

constexpr double kPi = std::numbers::pi;

// Eigenvalues of the symmetric part closer than this are treated as one
// invariant subspace (cos of a shared angle).
constexpr double kClusterTolerance = 1e-8;
// Rotation component below this makes a vector a 1-D block.
constexpr double kPairThreshold = 1e-7;

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

int positive_mod(int a, int n) { return ((a % n) + n) % n; }

// Circular shift by a (possibly fractional) amount t, band-limited: the DFT
// phases are rotated and, for even n, the Nyquist bin is left unshifted so
// the operator stays real and orthogonal.
class CircularShift {
public:
    CircularShift(int n, double t) : n_(n) {
        const double nearest = std::round(t);
        if (std::abs(t - nearest) < 1e-12) {
            integer_ = true;
            offset_ = positive_mod(static_cast<int>(nearest), n);
            return;
        }
        kernel_.resize(n);
        const int harmonics = (n % 2 == 1) ? (n - 1) / 2 : n / 2 - 1;
        for (int d = 0; d < n; ++d) {
            const double phi = 2.0 * kPi * (d - t) / n;
            double sum = 1.0;
            const double half = std::sin(0.5 * phi);
            if (std::abs(half) > 1e-9) {
                sum = std::sin((harmonics + 0.5) * phi) / half;
            } else {
                for (int m = 1; m <= harmonics; ++m) sum += 2.0 * std::cos(m * phi);
            }
            if (n % 2 == 0) sum += (d % 2 == 0) ? 1.0 : -1.0;
            kernel_[d] = sum / n;
        }
    }

    // Reads n values at stride from `in`, writes the shifted values to `out`.
    void apply(const double* in, double* out, int stride) const {
        if (integer_) {
            for (int k = 0; k < n_; ++k) out[((k + offset_) % n_) * stride] = in[k * stride];
            return;
        }
        for (int j = 0; j < n_; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n_; ++k) acc += kernel_[positive_mod(j - k, n_)] * in[k * stride];
            out[j * stride] = acc;
        }
    }

private:
    int n_;
    bool integer_ = false;
    int offset_ = 0;
    std::vector<double> kernel_;
};

// Each row r moves horizontally by amount * (r - center).
Vector shear_rows(const Vector& img, Geometry g, double amount) {
    Vector out(img.size());
    const double cy = 0.5 * (g.height - 1);
    for (int r = 0; r < g.height; ++r) {
        const CircularShift shift(g.width, amount * (r - cy));
        shift.apply(img.data() + r * g.width, out.data() + r * g.width, 1);
    }
    return out;
}

// Each column c moves vertically by amount * (c - center).
Vector shear_cols(const Vector& img, Geometry g, double amount) {
    Vector out(img.size());
    const double cx = 0.5 * (g.width - 1);
    for (int c = 0; c < g.width; ++c) {
        const CircularShift shift(g.height, amount * (c - cx));
        shift.apply(img.data() + c, out.data() + c, g.width);
    }
    return out;
}

Matrix block_basis(const SubspaceBlock& b) {
    Matrix q(b.basis_r.size(), b.dim());
    q.col(0) = b.basis_r;
    if (b.is_pair()) q.col(1) = *b.basis_i;
    return q;
}

void require_same_dim(const WarpMatrix& A, const WarpMatrix& B, const char* op) {
    if (A.dim() != B.dim()) {
        std::ostringstream msg;
        msg << op << ": dimension mismatch " << A.dim() << " vs " << B.dim();
        throw DimensionMismatch(msg.str());
    }
}

// Splits one cluster of the symmetric part's eigenspace into 1-D and 2-D
// invariant blocks. `span` holds an orthonormal basis of the cluster.
void split_cluster(const Matrix& L, Matrix span, std::vector<SubspaceBlock>& blocks) {
    while (span.cols() > 0) {
        const Vector v = span.col(0);
        const Vector lv = L * v;
        const double c = v.dot(lv);
        Vector coeff = span.transpose() * lv;
        coeff(0) = 0.0;
        const double s = coeff.norm();
        const Eigen::Index k = span.cols();
        if (s < kPairThreshold || k < 2) {
            blocks.push_back({v, std::nullopt, c >= 0.0 ? 0.0 : kPi});
            span = span.rightCols(k - 1).eval();
            continue;
        }
        coeff /= s;
        const Vector w = span * coeff;
        blocks.push_back({v, w, std::atan2(w.dot(lv), c)});
        // Householder step in coefficient space (entries 1..k-1) sending
        // coeff to e_1, so the remaining columns span the complement of w.
        Vector h = coeff;
        h(1) -= 1.0;
        const double hn = h.norm();
        Matrix rest = span.rightCols(k - 1);
        if (hn > 1e-14) {
            h /= hn;
            const Vector hs = h.tail(k - 1);
            rest -= 2.0 * (rest * hs) * hs.transpose();
        }
        span = rest.rightCols(k - 2).eval();
    }
}

}  // namespace

WarpMatrix::WarpMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
        std::ostringstream msg;
        msg << "warp must be square and nonempty, got " << entries_.rows() << "x" << entries_.cols();
        throw InvalidDimension(msg.str());
    }
    const Matrix gram = entries_.transpose() * entries_;
    residual_ = max_abs(gram - Matrix::Identity(dim(), dim()));
}

Matrix SubspaceDecomposition::reassemble() const {
    Matrix out = Matrix::Zero(dim, dim);
    for (const auto& b : blocks) {
        if (!b.is_pair()) {
            const double sign = std::cos(b.angle) >= 0.0 ? 1.0 : -1.0;
            out += sign * b.basis_r * b.basis_r.transpose();
            continue;
        }
        const double c = std::cos(b.angle), s = std::sin(b.angle);
        const Vector& r = b.basis_r;
        const Vector& i = *b.basis_i;
        // L r = c r + s i, L i = -s r + c i
        out += (c * r + s * i) * r.transpose() + (c * i - s * r) * i.transpose();
    }
    return out;
}

Matrix SubspaceDecomposition::basis() const {
    Eigen::Index cols = 0;
    for (const auto& b : blocks) cols += b.dim();
    Matrix out(dim, cols);
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        out.col(at++) = b.basis_r;
        if (b.is_pair()) out.col(at++) = *b.basis_i;
    }
    return out;
}

double wrap_angle(double a) {
    double r = std::fmod(a + kPi, 2.0 * kPi);
    if (r <= 0.0) r += 2.0 * kPi;
    return r - kPi;
}

WarpMatrix make_cyclic_shift(int n, int s) {
    if (n < 2) throw InvalidDimension("make_cyclic_shift: n must be >= 2, got " + std::to_string(n));
    return make_torus_shift({n, 1}, s, 0);
}

WarpMatrix make_torus_shift(Geometry g, int dx, int dy) {
    if (g.width < 1 || g.height < 1 || g.size() < 2) {
        throw InvalidDimension("make_torus_shift: grid needs at least 2 pixels");
    }
    const int n = g.size();
    Matrix L = Matrix::Zero(n, n);
    for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
            const int to = g.index(positive_mod(c + dx, g.width), positive_mod(r + dy, g.height));
            L(to, g.index(c, r)) = 1.0;
        }
    }
    return WarpMatrix(std::move(L));
}

Vector shift_image(const Vector& image, Geometry g, int dx, int dy) {
    if (image.size() != g.size()) throw DimensionMismatch("shift_image: size does not match geometry");
    Vector out(image.size());
    for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) {
            out(g.index(positive_mod(c + dx, g.width), positive_mod(r + dy, g.height))) = image(g.index(c, r));
        }
    }
    return out;
}

Vector rotate_image(const Vector& image, Geometry g, double angle) {
    if (g.width < 3 || g.height < 3) {
        throw InvalidDimension("rotation warp needs width and height >= 3");
    }
    if (image.size() != g.size()) throw DimensionMismatch("rotate_image: size does not match geometry");
    double theta = wrap_angle(angle);
    if (theta == 0.0) return image;
    Vector img = image;
    if (std::abs(theta) > 0.5 * kPi) {
        // 180 degrees about the center reverses the row-major order.
        img = image.reverse();
        theta = theta > 0.0 ? theta - kPi : theta + kPi;
        if (theta == 0.0) return img;
    }
    const double a = -std::tan(0.5 * theta);
    const double b = std::sin(theta);
    img = shear_rows(img, g, a);
    img = shear_cols(img, g, b);
    return shear_rows(img, g, a);
}

WarpMatrix make_rotation_warp(int width, int height, double angle) {
    const Geometry g{width, height};
    if (width < 3 || height < 3) throw InvalidDimension("make_rotation_warp: width and height must be >= 3");
    const int n = g.size();
    Matrix L(n, n);
    Vector e = Vector::Zero(n);
    for (int k = 0; k < n; ++k) {
        e(k) = 1.0;
        L.col(k) = rotate_image(e, g, angle);
        e(k) = 0.0;
    }
    return WarpMatrix(std::move(L));
}

WarpMatrix make_bilinear_rotation_warp(int width, int height, double angle) {
    if (width < 3 || height < 3) throw InvalidDimension("make_bilinear_rotation_warp: width and height must be >= 3");
    const Geometry g{width, height};
    const int n = g.size();
    Matrix L = Matrix::Zero(n, n);
    const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    const double c = std::cos(angle), s = std::sin(angle);
    const double radius = 0.5 * std::min(width, height);
    const double radius2 = radius * radius;
    for (int r = 0; r < height; ++r) {
        for (int q = 0; q < width; ++q) {
            const double dx = q - cx, dy = r - cy;
            const int row = g.index(q, r);
            if (dx * dx + dy * dy > radius2) {
                L(row, row) = 1.0;
                continue;
            }
            // Output pixel samples the source at the inverse-rotated position.
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const double weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int k = 0; k < 4; ++k) {
                if (weights[k] < 1e-14) continue;
                L(row, g.index(positive_mod(xs[k], width), positive_mod(ys[k], height))) += weights[k];
            }
            L.row(row) /= L.row(row).norm();
        }
    }
    return WarpMatrix(std::move(L));
}

SubspaceDecomposition decompose(const WarpMatrix& L) {
    if (L.orthogonality_residual() >= kExactOrthogonalityGate) {
        std::ostringstream msg;
        msg << "decompose: warp is not orthogonal (residual " << L.orthogonality_residual()
            << " >= " << kExactOrthogonalityGate << "); use decompose_approx";
        throw PreconditionError(msg.str());
    }
    const Matrix& m = L.entries();
    const int n = L.dim();
    // L is normal, so it commutes with its symmetric part; eigenspaces of
    // (L + L^T)/2 (eigenvalue cos angle) are invariant under L.
    const Matrix sym = 0.5 * (m + m.transpose());
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector& values = eig.eigenvalues();
    const Matrix& vectors = eig.eigenvectors();

    SubspaceDecomposition out;
    out.dim = n;
    int start = 0;
    while (start < n) {
        int end = start + 1;
        while (end < n && values(end) - values(end - 1) <= kClusterTolerance) ++end;
        split_cluster(m, vectors.middleCols(start, end - start), out.blocks);
        start = end;
    }
    std::stable_sort(out.blocks.begin(), out.blocks.end(), [](const SubspaceBlock& a, const SubspaceBlock& b) {
        return std::abs(a.angle) < std::abs(b.angle);
    });
    return out;
}

SubspaceDecomposition decompose_approx(const WarpMatrix& L) {
    if (L.dim() < 2) throw InvalidDimension("decompose_approx: dim must be >= 2");
    const Eigen::BDCSVD<Matrix> svd(L.entries(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    if (sv(0) == 0.0 || sv(sv.size() - 1) < 1e-10 * sv(0)) {
        std::ostringstream msg;
        msg << "decompose_approx: warp is rank deficient (smallest singular value " << sv(sv.size() - 1) << ")";
        throw SingularWarp(msg.str());
    }
    Matrix polar = svd.matrixU() * svd.matrixV().transpose();
    const double approx = max_abs(L.entries() - polar);
    auto out = decompose(WarpMatrix(std::move(polar)));
    out.approximation_residual = approx;
    return out;
}

double commutation_residual(const WarpMatrix& A, const WarpMatrix& B) {
    require_same_dim(A, B, "commutation_residual");
    return max_abs(A.entries() * B.entries() - B.entries() * A.entries());
}

double block_leakage(const SubspaceBlock& block, const Matrix& op) {
    const Matrix q = block_basis(block);
    const Matrix image = op * q;
    const Matrix outside = image - q * (q.transpose() * image);
    return outside.colwise().norm().maxCoeff();
}

double block_rotation_angle(const SubspaceBlock& block, const Matrix& op) {
    const Matrix q = block_basis(block);
    const Matrix m = q.transpose() * op * q;
    if (!block.is_pair()) return m(0, 0) >= 0.0 ? 0.0 : kPi;
    return std::atan2(m(1, 0) - m(0, 1), m(0, 0) + m(1, 1));
}

AlignmentReport shared_subspace_alignment(const WarpMatrix& A, const WarpMatrix& B) {
    require_same_dim(A, B, "shared_subspace_alignment");
    if (B.orthogonality_residual() >= kExactOrthogonalityGate) {
        std::ostringstream msg;
        msg << "shared_subspace_alignment: second warp is not orthogonal (residual "
            << B.orthogonality_residual() << ")";
        throw PreconditionError(msg.str());
    }
    const auto dec = decompose(A);
    AlignmentReport report;
    for (const auto& b : dec.blocks) {
        if (!b.is_pair()) continue;
        const double leak = block_leakage(b, B.entries());
        report.block_leakage.push_back(leak);
        report.max_leakage = std::max(report.max_leakage, leak);
    }
    return report;
}

ImagePatch apply_warp(const WarpMatrix& L, const ImagePatch& x) {
    if (x.size() != L.dim()) {
        std::ostringstream msg;
        msg << "apply_warp: warp dim " << L.dim() << " vs patch size " << x.size();
        throw DimensionMismatch(msg.str());
    }
    ImagePatch y(L.entries() * x.values);
    y.normalized = satisfies_normalization(y.values);
    y.degenerate = x.degenerate && y.values.isZero();
    return y;
}

}  // namespace warpcode
