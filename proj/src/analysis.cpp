#include "warpcode/analysis.hpp"

#include "warpcode/errors.hpp"
#include "warpcode/warp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>

namespace warpcode {

namespace {

constexpr double kPi = std::numbers::pi;

void require_nonzero(const Vector& v, const char* op) {
    if (v.size() == 0 || v.squaredNorm() == 0.0) throw PreconditionError(std::string(op) + ": zero filter");
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

// |DFT| of a row-major grid, computed separably.
Vector dft_magnitude(const Vector& v, Geometry g) {
    using C = std::complex<double>;
    const int w = g.width, h = g.height;
    std::vector<C> rows(static_cast<std::size_t>(w * h));
    for (int r = 0; r < h; ++r) {
        for (int k = 0; k < w; ++k) {
            C acc = 0.0;
            for (int c = 0; c < w; ++c) acc += v(g.index(c, r)) * std::polar(1.0, -2.0 * kPi * k * c / w);
            rows[static_cast<std::size_t>(r * w + k)] = acc;
        }
    }
    Vector mag(w * h);
    for (int k = 0; k < w; ++k) {
        for (int l = 0; l < h; ++l) {
            C acc = 0.0;
            for (int r = 0; r < h; ++r) acc += rows[static_cast<std::size_t>(r * w + k)] * std::polar(1.0, -2.0 * kPi * l * r / h);
            mag(l * w + k) = std::abs(acc);
        }
    }
    return mag;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// Residual sum of squares of the best (a, b) for a given theta, given the
// Gram quantities of the frames.
struct MovieFit {
    std::span<const Vector> frames;
    double total = 0.0;

    double residual(double theta) const {
        const auto T = frames.size();
        double cc = 0.0, ss = 0.0, cs = 0.0;
        Vector rc = Vector::Zero(frames[0].size());
        Vector rs = Vector::Zero(frames[0].size());
        for (std::size_t s = 0; s < T; ++s) {
            const double c = std::cos(theta * static_cast<double>(s));
            const double sn = -std::sin(theta * static_cast<double>(s));
            cc += c * c;
            ss += sn * sn;
            cs += c * sn;
            rc += c * frames[s];
            rs += sn * frames[s];
        }
        // Explained energy = r^T G^+ r per pixel, with G = [[cc, cs], [cs, ss]].
        const double det = cc * ss - cs * cs;
        double explained;
        if (det > 1e-12 * (cc * ss + 1e-300)) {
            explained = (ss * rc.squaredNorm() - 2.0 * cs * rc.dot(rs) + cc * rs.squaredNorm()) / det;
        } else {
            // Rank one: the sine column is (a multiple of) the cosine column or zero.
            const double n = cc + ss;
            const Vector r = (cc >= ss) ? rc : rs;
            explained = n > 0.0 ? r.squaredNorm() / std::max(cc, ss) : 0.0;
        }
        return std::max(0.0, total - explained);
    }
};

}  // namespace

QuadratureScore quadrature_pair_score(const Vector& u, const Vector& u_h, const Vector& v) {
    if (u.size() != v.size() || u_h.size() != v.size()) throw DimensionMismatch("quadrature_pair_score: lengths differ");
    require_nonzero(u, "quadrature_pair_score");
    require_nonzero(u_h, "quadrature_pair_score");
    require_nonzero(v, "quadrature_pair_score");
    QuadratureScore out;
    out.theta_hat = std::atan2(-v.dot(u_h), v.dot(u));
    const Vector fit = std::cos(out.theta_hat) * u - std::sin(out.theta_hat) * u_h;
    out.fit_r2 = clip01(1.0 - (v - fit).squaredNorm() / v.squaredNorm());
    return out;
}

QuadratureScore pair_quadrature_score(const Vector& u_r, const Vector& u_i, const Vector& v_r, const Vector& v_i) {
    const auto n = u_r.size();
    if (u_i.size() != n || v_r.size() != n || v_i.size() != n) throw DimensionMismatch("pair_quadrature_score: lengths differ");
    for (const Vector* f : {&u_r, &u_i, &v_r, &v_i}) require_nonzero(*f, "pair_quadrature_score");
    QuadratureScore out;
    out.theta_hat = std::atan2(v_i.dot(u_r) - v_r.dot(u_i), v_r.dot(u_r) + v_i.dot(u_i));
    const double c = std::cos(out.theta_hat), s = std::sin(out.theta_hat);
    const double residual = (v_r - (c * u_r - s * u_i)).squaredNorm() + (v_i - (s * u_r + c * u_i)).squaredNorm();
    out.fit_r2 = clip01(1.0 - residual / (v_r.squaredNorm() + v_i.squaredNorm()));
    return out;
}

double spectral_overlap(const Vector& u, const Vector& v, Geometry g) {
    if (u.size() != g.size() || v.size() != g.size()) throw DimensionMismatch("spectral_overlap: filter size vs geometry");
    require_nonzero(u, "spectral_overlap");
    require_nonzero(v, "spectral_overlap");
    const Vector a = dft_magnitude(u, g), b = dft_magnitude(v, g);
    return clip01(a.dot(b) / (a.norm() * b.norm()));
}

double rotational_spectral_overlap(const Vector& u, Geometry g) {
    double sum = 0.0;
    for (double deg : {30.0, 45.0, 60.0}) sum += spectral_overlap(u, rotate_image(u, g, deg * kPi / 180.0), g);
    return sum / 3.0;
}

double QuadratureReport::top_half_fraction(double threshold) const {
    if (pairs.empty()) return 0.0;
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [this](std::size_t a, std::size_t b) { return pairs[a].energy > pairs[b].energy; });
    const std::size_t top = std::max<std::size_t>(1, pairs.size() / 2);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < top; ++k) hits += pairs[order[k]].fit_r2 >= threshold ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(top);
}

CsvTable QuadratureReport::csv() const {
    CsvTable t({"pair_index", "theta_hat", "fit_r2", "spectral_overlap"});
    for (const auto& p : pairs) {
        t.add_row({std::to_string(p.pair_index), CsvTable::number(p.theta_hat), CsvTable::number(p.fit_r2),
                   CsvTable::number(p.spectral_overlap)});
    }
    return t;
}

Vector pooled_energy(const GatedModel& m, const Matrix& X, const Matrix& Y) {
    if (X.rows() != m.dim_x() || Y.rows() != m.dim_y() || X.cols() != Y.cols() || X.cols() == 0) {
        throw DimensionMismatch("pooled_energy: data does not match the model");
    }
    const Matrix pooled = m.P.transpose() * (m.U.transpose() * X).cwiseProduct(m.V.transpose() * Y);
    return pooled.array().square().rowwise().mean();
}

QuadratureReport quadrature_report(const GatedModel& m, Geometry g, const Matrix& X, const Matrix& Y) {
    if (m.factors() % 2 != 0) throw InvalidDimension("quadrature_report: odd factor count");
    if (m.dim_x() != g.size() || m.dim_y() != g.size()) throw DimensionMismatch("quadrature_report: model vs geometry");
    // Energy is reported per adjacent pair, so it needs the band layout.
    Vector energy;
    if (m.pooling == PoolingMode::band) {
        energy = pooled_energy(m, X, Y);
    } else {
        GatedModel banded = m;
        banded.P = band_pooling(m.factors());
        energy = pooled_energy(banded, X, Y);
    }
    QuadratureReport report;
    const bool grid2d = g.width >= 3 && g.height >= 3;
    for (int j = 0; j < m.factors() / 2; ++j) {
        const Vector ur = m.U.col(2 * j), ui = m.U.col(2 * j + 1);
        const Vector vr = m.V.col(2 * j), vi = m.V.col(2 * j + 1);
        const QuadratureScore q = pair_quadrature_score(ur, ui, vr, vi);
        PairReport p;
        p.pair_index = j;
        p.theta_hat = q.theta_hat;
        p.fit_r2 = q.fit_r2;
        p.spectral_overlap = spectral_overlap(ur, vr, g);
        p.energy = energy(j);
        p.rotational_overlap = grid2d ? rotational_spectral_overlap(ur, g) : 0.0;
        report.pairs.push_back(p);
    }
    std::vector<double> r2;
    for (const auto& p : report.pairs) r2.push_back(p.fit_r2);
    report.r2_q25 = quantile(r2, 0.25);
    report.r2_median = quantile(r2, 0.5);
    report.r2_q75 = quantile(r2, 0.75);
    return report;
}

EigenmovieFit eigenmovie_consistency(std::span<const Vector> frames) {
    if (frames.size() < 3) throw PreconditionError("eigenmovie_consistency: need at least 3 frames");
    double total = 0.0;
    for (const auto& f : frames) {
        if (f.size() != frames[0].size()) throw DimensionMismatch("eigenmovie_consistency: frames differ in size");
        total += f.squaredNorm();
    }
    if (total == 0.0) throw PreconditionError("eigenmovie_consistency: all-zero sequence");
    const MovieFit fit{frames, total};

    constexpr int kGrid = 720;
    int best = 0;
    double best_res = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= kGrid; ++k) {
        const double r = fit.residual(kPi * k / kGrid);
        if (r < best_res) {
            best_res = r;
            best = k;
        }
    }
    // Golden-section search around the best grid point.
    double lo = kPi * std::max(0, best - 1) / kGrid, hi = kPi * std::min(kGrid, best + 1) / kGrid;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    double fa = fit.residual(a), fb = fit.residual(b);
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        if (fa <= fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = fit.residual(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = fit.residual(b);
        }
    }
    double theta = 0.5 * (lo + hi);
    // Near the optimum the residual is quadratic, so comparing values stalls
    // at ~1e-8; bisect on the sign of a central-difference slope instead.
    {
        const double h = 1e-6;
        auto slope = [&](double t) { return fit.residual(t + h) - fit.residual(t - h); };
        double l = std::max(0.0, theta - 1e-6), r = std::min(kPi, theta + 1e-6);
        if (l > 0.0 && r < kPi && slope(l) < 0.0 && slope(r) > 0.0) {
            for (int it = 0; it < 60 && r - l > 1e-15; ++it) {
                const double mid = 0.5 * (l + r);
                (slope(mid) < 0.0 ? l : r) = mid;
            }
            theta = 0.5 * (l + r);
        }
    }
    double res = fit.residual(theta);
    // The residual is flat to rounding near exact fits; prefer the endpoints then.
    for (double edge : {0.0, kPi}) {
        const double r = fit.residual(edge);
        if (r <= res + 1e-12 * total) {
            theta = edge;
            res = r;
            break;
        }
    }
    return {theta, clip01(1.0 - res / total)};
}

std::vector<Vector> split_frames(const Vector& filter, int frame_dim) {
    if (frame_dim <= 0 || filter.size() % frame_dim != 0) throw DimensionMismatch("split_frames: length is not a multiple of the frame size");
    std::vector<Vector> out;
    for (Eigen::Index s = 0; s < filter.size(); s += frame_dim) out.push_back(filter.segment(s, frame_dim));
    return out;
}

double segment_energy_ratio(const Vector& filter, int frame_dim, int split) {
    const auto frames = split_frames(filter, frame_dim);
    if (split <= 0 || split >= static_cast<int>(frames.size())) throw PreconditionError("segment_energy_ratio: split outside the clip");
    double first = 0.0, second = 0.0;
    for (int s = 0; s < static_cast<int>(frames.size()); ++s) (s < split ? first : second) += frames[static_cast<std::size_t>(s)].squaredNorm();
    const double hi = std::max(first, second), lo = std::min(first, second);
    if (hi == 0.0) return 1.0;
    return lo == 0.0 ? std::numeric_limits<double>::infinity() : hi / lo;
}

double invariance_ratio(std::span<const Matrix> codes_by_orbit) {
    if (codes_by_orbit.size() < 2) throw PreconditionError("invariance_ratio: need at least 2 orbits");
    const auto dim = codes_by_orbit[0].rows();
    for (const auto& o : codes_by_orbit) {
        if (o.rows() != dim) throw DimensionMismatch("invariance_ratio: orbits differ in code size");
        if (o.cols() < 2) throw PreconditionError("invariance_ratio: need at least 2 codes per orbit");
    }
    const auto orbits = static_cast<double>(codes_by_orbit.size());
    Matrix means(dim, static_cast<Eigen::Index>(codes_by_orbit.size()));
    Vector within = Vector::Zero(dim);
    for (std::size_t o = 0; o < codes_by_orbit.size(); ++o) {
        const Matrix& c = codes_by_orbit[o];
        const Vector mu = c.rowwise().mean();
        means.col(static_cast<Eigen::Index>(o)) = mu;
        within += (c.colwise() - mu).array().square().rowwise().mean().matrix();
    }
    within /= orbits;
    const Vector grand = means.rowwise().mean();
    const Vector between = (means.colwise() - grand).array().square().rowwise().mean();
    // Dimensions that are constant up to rounding (e.g. a detector at 90
    // degrees applied to x = y) would contribute noise / noise.
    const Vector total = within + between;
    const double floor = 1e-20 * (dim > 0 ? total.maxCoeff() : 0.0);
    double sum = 0.0;
    int used = 0;
    for (Eigen::Index d = 0; d < dim; ++d) {
        if (between(d) > 0.0 && total(d) > floor) {
            sum += within(d) / between(d);
            ++used;
        }
    }
    if (used == 0) throw PreconditionError("invariance_ratio: orbit means do not vary in any dimension");
    return sum / used;
}

GrayImage filter_grid(const Matrix& filters, Geometry g, int grid_cols) {
    if (filters.rows() != g.size()) throw DimensionMismatch("filter_grid: filter length does not match the geometry");
    if (grid_cols < 1) throw PreconditionError("filter_grid: grid needs at least one column");
    const int count = static_cast<int>(filters.cols());
    const int grid_rows = std::max(1, (count + grid_cols - 1) / grid_cols);
    GrayImage img;
    img.width = grid_cols * (g.width + 1) + 1;
    img.height = grid_rows * (g.height + 1) + 1;
    img.pixels.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), 0);
    for (int f = 0; f < count; ++f) {
        const Vector v = filters.col(f);
        const double lo = v.minCoeff(), hi = v.maxCoeff();
        const int x0 = (f % grid_cols) * (g.width + 1) + 1;
        const int y0 = (f / grid_cols) * (g.height + 1) + 1;
        for (int r = 0; r < g.height; ++r) {
            for (int c = 0; c < g.width; ++c) {
                const double t = hi > lo ? (v(g.index(c, r)) - lo) / (hi - lo) : -1.0;
                const auto value = t < 0.0 ? std::uint8_t{128} : static_cast<std::uint8_t>(std::lround(255.0 * t));
                img.pixels[static_cast<std::size_t>((y0 + r) * img.width + x0 + c)] = value;
            }
        }
    }
    return img;
}

void export_filter_grid(const Matrix& filters, Geometry g, int grid_cols, const std::filesystem::path& path) {
    write_pgm(path, filter_grid(filters, g, grid_cols));
}

}  // namespace warpcode
