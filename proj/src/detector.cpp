#include "warpcode/detector.hpp"

#include "warpcode/errors.hpp"
#include "warpcode/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace warpcode {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kBasisTolerance = 1e-8;

struct Coords {
    double re = 0.0;
    double im = 0.0;
};

Coords coords(const SubspaceBlock& b, const Vector& x) {
    Coords c{b.basis_r.dot(x), 0.0};
    if (b.is_pair()) c.im = b.basis_i->dot(x);
    return c;
}

// Rotates (re, im) counterclockwise by theta.
Coords rotate(Coords c, double theta) {
    const double cs = std::cos(theta), sn = std::sin(theta);
    return {cs * c.re - sn * c.im, sn * c.re + cs * c.im};
}

void require_dim(const SubspaceBlock& b, const ImagePatch& x, const char* op) {
    if (x.size() != b.basis_r.size()) {
        std::ostringstream msg;
        msg << op << ": patch size " << x.size() << " vs block dim " << b.basis_r.size();
        throw DimensionMismatch(msg.str());
    }
}

void require_normalized(const ImagePatch& x, const char* op) {
    if (!x.contrast_ready()) throw PreconditionError(std::string(op) + ": input patch is not contrast-normalized");
}

void validate_block(const SubspaceBlock& b, Eigen::Index dim) {
    if (b.basis_r.size() != dim || (b.is_pair() && b.basis_i->size() != dim)) {
        throw DimensionMismatch("detector bank: subspaces have different dimensions");
    }
    bool ok = std::abs(b.basis_r.norm() - 1.0) <= kBasisTolerance;
    if (b.is_pair()) {
        ok = ok && std::abs(b.basis_i->norm() - 1.0) <= kBasisTolerance &&
             std::abs(b.basis_r.dot(*b.basis_i)) <= kBasisTolerance;
    }
    if (!ok) throw PreconditionError("detector bank: basis pair is not orthonormal");
}

double circular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

}  // namespace

double Projection::imag() const {
    if (!im) throw AbsentComponent("projection onto a 1-D block has no imaginary component");
    return *im;
}

double Projection::norm() const { return std::hypot(re, im.value_or(0.0)); }

Projection project(const SubspaceBlock& block, const ImagePatch& x) {
    require_dim(block, x, "project");
    Projection p{block.basis_r.dot(x.values), std::nullopt};
    if (block.is_pair()) p.im = block.basis_i->dot(x.values);
    return p;
}

std::optional<double> subspace_angle_cos(const SubspaceBlock& block, const ImagePatch& x, const ImagePatch& y,
                                         double aperture_floor) {
    require_dim(block, x, "subspace_angle_cos");
    require_dim(block, y, "subspace_angle_cos");
    if (!(aperture_floor > 0.0)) throw PreconditionError("subspace_angle_cos: aperture_floor must be positive");
    const Coords px = coords(block, x.values), py = coords(block, y.values);
    const double nx = std::hypot(px.re, px.im), ny = std::hypot(py.re, py.im);
    if (nx < aperture_floor || ny < aperture_floor) return std::nullopt;
    return (px.re * py.re + px.im * py.im) / (nx * ny);
}

double rotation_detector_response(const SubspaceBlock& block, double theta, const ImagePatch& x,
                                  const ImagePatch& y) {
    require_dim(block, x, "rotation_detector_response");
    require_dim(block, y, "rotation_detector_response");
    require_normalized(x, "rotation_detector_response");
    require_normalized(y, "rotation_detector_response");
    const Coords px = rotate(coords(block, x.values), theta);
    const Coords py = coords(block, y.values);
    return py.re * px.re + py.im * px.im;
}

double energy_detector_response(const SubspaceBlock& block, double theta, const ImagePatch& x,
                                const ImagePatch& y) {
    require_dim(block, x, "energy_detector_response");
    require_dim(block, y, "energy_detector_response");
    require_normalized(x, "energy_detector_response");
    require_normalized(y, "energy_detector_response");
    const Coords px = rotate(coords(block, x.values), theta);
    const Coords py = coords(block, y.values);
    const double re = py.re + px.re, im = py.im + px.im;
    return re * re + im * im;
}

SequenceTerms sequence_detector_terms(const SubspaceBlock& block, double theta, std::span<const ImagePatch> frames) {
    if (frames.empty()) throw PreconditionError("sequence_detector_response: empty frame list");
    double re = 0.0, im = 0.0, quadratic = 0.0;
    for (std::size_t s = 0; s < frames.size(); ++s) {
        require_dim(block, frames[s], "sequence_detector_response");
        require_normalized(frames[s], "sequence_detector_response");
        const Coords p = rotate(coords(block, frames[s].values), -theta * static_cast<double>(s));
        re += p.re;
        im += p.im;
        quadratic += p.re * p.re + p.im * p.im;
    }
    SequenceTerms t;
    t.total = re * re + im * im;
    t.quadratic = quadratic;
    t.cross = t.total - quadratic;
    return t;
}

double sequence_detector_response(const SubspaceBlock& block, double theta, std::span<const ImagePatch> frames) {
    return sequence_detector_terms(block, theta, frames).total;
}

std::vector<int> DetectorBank::detectors_of(int block) const {
    std::vector<int> out;
    for (int d = 0; d < size(); ++d) {
        if (detectors[static_cast<std::size_t>(d)].block == block) out.push_back(d);
    }
    return out;
}

std::vector<double> uniform_theta_grid(int n) {
    if (n < 1) throw PreconditionError("uniform_theta_grid: need at least one angle");
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) grid.push_back(wrap_angle(2.0 * kPi * k / n));
    std::sort(grid.begin(), grid.end());
    return grid;
}

DetectorBank make_detector_bank(std::vector<SubspaceBlock> subspaces, std::span<const double> theta_grid) {
    if (theta_grid.empty()) throw PreconditionError("detector bank: empty theta grid");
    if (subspaces.empty()) throw PreconditionError("detector bank: no subspaces");
    const auto dim = subspaces.front().basis_r.size();
    for (const auto& b : subspaces) validate_block(b, dim);

    DetectorBank bank;
    for (int b = 0; b < static_cast<int>(subspaces.size()); ++b) {
        const auto& block = subspaces[static_cast<std::size_t>(b)];
        if (block.is_pair()) {
            for (double theta : theta_grid) bank.detectors.push_back({b, theta});
        } else {
            bank.detectors.push_back({b, 0.0});
            bank.detectors.push_back({b, kPi});
        }
    }
    const auto count = static_cast<Eigen::Index>(bank.detectors.size());
    bank.input_filters = Matrix::Zero(dim, 2 * count);
    bank.output_filters = Matrix::Zero(dim, 2 * count);
    bank.within_pool = Matrix::Zero(2 * count, count);
    for (Eigen::Index d = 0; d < count; ++d) {
        const auto& det = bank.detectors[static_cast<std::size_t>(d)];
        const auto& block = subspaces[static_cast<std::size_t>(det.block)];
        if (block.is_pair()) {
            const double c = std::cos(det.theta), s = std::sin(det.theta);
            const Vector& vr = block.basis_r;
            const Vector& vi = *block.basis_i;
            bank.input_filters.col(2 * d) = c * vr - s * vi;
            bank.input_filters.col(2 * d + 1) = s * vr + c * vi;
            bank.output_filters.col(2 * d) = vr;
            bank.output_filters.col(2 * d + 1) = vi;
        } else {
            bank.input_filters.col(2 * d) = (det.theta == 0.0 ? 1.0 : -1.0) * block.basis_r;
            bank.output_filters.col(2 * d) = block.basis_r;
        }
        bank.within_pool(2 * d, d) = 1.0;
        bank.within_pool(2 * d + 1, d) = 1.0;
    }
    bank.across_pool = Matrix::Identity(count, count);
    bank.subspaces = std::move(subspaces);
    return bank;
}

DetectorBank build_bank_from_warp_family(std::span<const SubspaceDecomposition> decomps,
                                         std::span<const double> theta_grid) {
    if (decomps.empty()) throw PreconditionError("build_bank_from_warp_family: empty family");
    if (theta_grid.empty()) throw PreconditionError("build_bank_from_warp_family: empty theta grid");
    const int dim = decomps.front().dim;
    for (const auto& d : decomps) {
        if (d.dim != dim) throw DimensionMismatch("build_bank_from_warp_family: decompositions differ in dim");
    }
    // Subspaces come from the first member; every other member must keep them invariant.
    const auto& reference = decomps.front();
    double worst = 0.0;
    for (std::size_t k = 1; k < decomps.size(); ++k) {
        const Matrix op = decomps[k].reassemble();
        for (const auto& b : reference.blocks) worst = std::max(worst, block_leakage(b, op));
    }
    if (worst > 1e-6) {
        std::ostringstream msg;
        msg << "build_bank_from_warp_family: family does not share invariant subspaces (leakage " << worst << ")";
        throw SharedSubspaceError(msg.str(), worst);
    }
    return make_detector_bank(reference.blocks, theta_grid);
}

DetectorResponse pooled_code(const DetectorBank& bank, const ImagePatch& x, const ImagePatch& y) {
    if (x.size() != bank.dim() || y.size() != bank.dim()) {
        std::ostringstream msg;
        msg << "pooled_code: bank dim " << bank.dim() << " vs patches " << x.size() << ", " << y.size();
        throw DimensionMismatch(msg.str());
    }
    require_normalized(x, "pooled_code");
    require_normalized(y, "pooled_code");
    const Vector factors = (bank.input_filters.transpose() * x.values)
                               .cwiseProduct(bank.output_filters.transpose() * y.values);
    DetectorResponse r;
    r.per_detector = bank.within_pool.transpose() * factors;
    r.pooled = bank.across_pool.transpose() * r.per_detector;
    return r;
}

Matrix family_pooling(const DetectorBank& bank, std::span<const WarpMatrix> warps) {
    Matrix w = Matrix::Zero(bank.size(), static_cast<Eigen::Index>(warps.size()));
    for (std::size_t k = 0; k < warps.size(); ++k) {
        if (warps[k].dim() != bank.dim()) throw DimensionMismatch("family_pooling: warp dim differs from bank");
        for (int b = 0; b < static_cast<int>(bank.subspaces.size()); ++b) {
            const auto& block = bank.subspaces[static_cast<std::size_t>(b)];
            const double angle = block_rotation_angle(block, warps[k].entries());
            int best = -1;
            double best_dist = 0.0;
            for (int d : bank.detectors_of(b)) {
                const double dist = circular_distance(bank.detectors[static_cast<std::size_t>(d)].theta, angle);
                if (best < 0 || dist < best_dist) {
                    best = d;
                    best_dist = dist;
                }
            }
            w(best, static_cast<Eigen::Index>(k)) = 1.0;
        }
    }
    return w;
}

void save_bank(const DetectorBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto blocks = static_cast<Eigen::Index>(bank.subspaces.size());
    Matrix basis = Matrix::Zero(bank.dim(), 2 * blocks);
    Matrix meta(blocks, 2);
    for (Eigen::Index b = 0; b < blocks; ++b) {
        const auto& s = bank.subspaces[static_cast<std::size_t>(b)];
        basis.col(2 * b) = s.basis_r;
        if (s.is_pair()) basis.col(2 * b + 1) = *s.basis_i;
        meta(b, 0) = s.angle;
        meta(b, 1) = s.is_pair() ? 2.0 : 1.0;
    }
    Matrix dets(bank.size(), 2);
    for (int d = 0; d < bank.size(); ++d) {
        dets(d, 0) = bank.detectors[static_cast<std::size_t>(d)].block;
        dets(d, 1) = bank.detectors[static_cast<std::size_t>(d)].theta;
    }
    save_matrix(dir / "basis.wmat", basis);
    save_matrix(dir / "blocks.wmat", meta);
    save_matrix(dir / "detectors.wmat", dets);
    save_matrix(dir / "within_pool.wmat", bank.within_pool);
    save_matrix(dir / "across_pool.wmat", bank.across_pool);
}

DetectorBank load_bank(const std::filesystem::path& dir) {
    const Matrix basis = load_matrix(dir / "basis.wmat");
    const Matrix meta = load_matrix(dir / "blocks.wmat");
    const Matrix dets = load_matrix(dir / "detectors.wmat");
    if (basis.cols() != 2 * meta.rows() || meta.cols() != 2 || dets.cols() != 2) {
        throw DataError("load_bank: inconsistent bank files in " + dir.string());
    }
    std::vector<SubspaceBlock> subspaces;
    for (Eigen::Index b = 0; b < meta.rows(); ++b) {
        SubspaceBlock s{basis.col(2 * b), std::nullopt, meta(b, 0)};
        if (meta(b, 1) == 2.0) s.basis_i = basis.col(2 * b + 1);
        subspaces.push_back(std::move(s));
    }
    // Rebuild the filters from the stored detector list so they match exactly.
    DetectorBank bank;
    bank.subspaces = std::move(subspaces);
    const Eigen::Index count = dets.rows();
    bank.input_filters = Matrix::Zero(basis.rows(), 2 * count);
    bank.output_filters = Matrix::Zero(basis.rows(), 2 * count);
    for (Eigen::Index d = 0; d < count; ++d) {
        const Detector det{static_cast<int>(dets(d, 0)), dets(d, 1)};
        if (det.block < 0 || det.block >= static_cast<int>(bank.subspaces.size())) {
            throw DataError("load_bank: detector refers to a missing block");
        }
        bank.detectors.push_back(det);
        const auto& block = bank.subspaces[static_cast<std::size_t>(det.block)];
        if (block.is_pair()) {
            const double c = std::cos(det.theta), s = std::sin(det.theta);
            bank.input_filters.col(2 * d) = c * block.basis_r - s * *block.basis_i;
            bank.input_filters.col(2 * d + 1) = s * block.basis_r + c * *block.basis_i;
            bank.output_filters.col(2 * d) = block.basis_r;
            bank.output_filters.col(2 * d + 1) = *block.basis_i;
        } else {
            bank.input_filters.col(2 * d) = (det.theta == 0.0 ? 1.0 : -1.0) * block.basis_r;
            bank.output_filters.col(2 * d) = block.basis_r;
        }
    }
    bank.within_pool = load_matrix(dir / "within_pool.wmat");
    bank.across_pool = load_matrix(dir / "across_pool.wmat");
    if (bank.within_pool.rows() != 2 * count || bank.across_pool.rows() != count) {
        throw DataError("load_bank: pooling matrices do not match the detector list");
    }
    return bank;
}

}  // namespace warpcode
