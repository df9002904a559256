#include "warpcode/dataset.hpp"

#include "warpcode/errors.hpp"
#include "warpcode/io.hpp"
#include "warpcode/warp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace warpcode {

namespace {

constexpr double kPi = std::numbers::pi;

WarpLabel draw_warp(WarpFamily family, Geometry g, Rng& rng) {
    if (family == WarpFamily::mixed) {
        family = rng.bernoulli(0.5) ? WarpFamily::rotation : WarpFamily::cyclic_shift;
    }
    WarpLabel label;
    label.family = family;
    if (family == WarpFamily::rotation) {
        label.angle = rng.angle();
    } else {
        label.dx = rng.below(g.width);
        label.dy = g.height > 1 ? rng.below(g.height) : 0;
    }
    return label;
}

void check_geometry(Geometry g, WarpFamily family, const char* op) {
    if (g.width < 1 || g.height < 1 || g.size() < 2) {
        throw InvalidDimension(std::string(op) + ": geometry needs at least 2 pixels");
    }
    if (family != WarpFamily::cyclic_shift && (g.width < 3 || g.height < 3)) {
        throw InvalidDimension(std::string(op) + ": rotations need at least a 3x3 grid");
    }
}

// Stroke geometry for the glyph templates, in a frame where x points right,
// y points down and the glyph fits in [-0.5, 0.5] x [-0.75, 0.75].
using Point = std::array<double, 2>;
using Polyline = std::vector<Point>;

Polyline arc(double cx, double cy, double rx, double ry, double from_deg, double to_deg) {
    Polyline out;
    const int steps = std::max(4, static_cast<int>(std::abs(to_deg - from_deg) / 10.0));
    for (int i = 0; i <= steps; ++i) {
        const double t = (from_deg + (to_deg - from_deg) * i / steps) * kPi / 180.0;
        out.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
    return out;
}

Polyline join(Polyline a, const Polyline& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

const std::vector<std::vector<Polyline>>& glyph_templates() {
    // Angles follow the screen convention: 90 degrees points down.
    static const std::vector<std::vector<Polyline>> templates = {
        {arc(0.0, 0.0, 0.42, 0.68, 0.0, 360.0)},
        {{{-0.22, -0.5}, {0.0, -0.7}, {0.0, 0.7}}, {{-0.25, 0.7}, {0.25, 0.7}}},
        {join(arc(0.0, -0.32, 0.36, 0.36, 180.0, 380.0), Polyline{{-0.4, 0.7}, {0.42, 0.7}})},
        {arc(0.0, -0.36, 0.34, 0.32, 200.0, 450.0), arc(0.0, 0.34, 0.38, 0.36, -90.0, 150.0)},
        {{{0.18, 0.72}, {0.18, -0.72}, {-0.45, 0.25}, {0.45, 0.25}}},
        {join(Polyline{{0.4, -0.7}, {-0.32, -0.7}, {-0.36, -0.08}}, arc(0.0, 0.3, 0.38, 0.4, -125.0, 150.0))},
        {arc(0.0, 0.32, 0.36, 0.36, 0.0, 360.0), {{0.3, -0.72}, {-0.08, -0.56}, {-0.3, -0.22}, {-0.36, 0.32}}},
        {{{-0.42, -0.7}, {0.42, -0.7}, {-0.08, 0.72}}},
        {arc(0.0, -0.38, 0.28, 0.3, 0.0, 360.0), arc(0.0, 0.34, 0.36, 0.36, 0.0, 360.0)},
        // A straight stem keeps this from being a rotated copy of the 6.
        {arc(0.0, -0.32, 0.34, 0.34, 0.0, 360.0), {{0.34, -0.32}, {0.28, 0.72}}},
    };
    return templates;
}

double segment_distance(double px, double py, const Point& a, const Point& b) {
    const double vx = b[0] - a[0], vy = b[1] - a[1];
    const double wx = px - a[0], wy = py - a[1];
    const double len2 = vx * vx + vy * vy;
    const double t = len2 > 0.0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
    return std::hypot(wx - t * vx, wy - t * vy);
}

Vector render_glyph(int digit, Geometry g, double thickness, double ox, double oy, double scale, double angle) {
    const auto& strokes = glyph_templates()[static_cast<std::size_t>(digit)];
    const double half_w = 0.5 * g.width, half_h = 0.5 * g.height;
    const double pixel = 1.0 / std::min(half_w, half_h);
    const double c = std::cos(angle), s = std::sin(angle);
    Vector img(g.size());
    for (int r = 0; r < g.height; ++r) {
        for (int col = 0; col < g.width; ++col) {
            const double x = (col + 0.5 - half_w) / half_w;
            const double y = (r + 0.5 - half_h) / half_h;
            // Inverse of "scale, then offset, then rotate" applied to the template.
            const double ux = (c * x + s * y - ox) / scale;
            const double uy = (-s * x + c * y - oy) / scale;
            double d = 1e9;
            for (const auto& line : strokes) {
                for (std::size_t k = 0; k + 1 < line.size(); ++k) d = std::min(d, segment_distance(ux, uy, line[k], line[k + 1]));
            }
            const double edge = (d * scale - 0.5 * thickness) / pixel;
            img(g.index(col, r)) = std::clamp(0.5 - edge, 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace

std::string to_string(WarpFamily f) {
    switch (f) {
        case WarpFamily::cyclic_shift: return "cyclic_shift";
        case WarpFamily::rotation: return "rotation";
        case WarpFamily::mixed: return "mixed";
    }
    return "?";
}

WarpFamily parse_family(const std::string& s) {
    if (s == "cyclic_shift" || s == "shift") return WarpFamily::cyclic_shift;
    if (s == "rotation") return WarpFamily::rotation;
    if (s == "mixed") return WarpFamily::mixed;
    throw ConfigError("unknown warp family '" + s + "' (expected cyclic_shift, rotation or mixed)");
}

Matrix PairDataset::X() const {
    Matrix out(geometry.size(), static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = pairs[i].x.values;
    return out;
}

Matrix PairDataset::Y() const {
    Matrix out(geometry.size(), static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = pairs[i].y.values;
    return out;
}

Vector random_dots(Geometry g, double density, Rng& rng) {
    if (!(density > 0.0 && density < 1.0)) {
        std::ostringstream msg;
        msg << "dot density must lie in (0, 1), got " << density;
        throw PreconditionError(msg.str());
    }
    Vector img(g.size());
    for (;;) {
        for (Eigen::Index i = 0; i < img.size(); ++i) img(i) = rng.bernoulli(density) ? 1.0 : 0.0;
        const double on = img.sum();
        if (on > 0.0 && on < static_cast<double>(img.size())) return img;
    }
}

Vector apply_label(const WarpLabel& label, const Vector& image, Geometry g) {
    switch (label.family) {
        case WarpFamily::cyclic_shift: return shift_image(image, g, label.dx, label.dy);
        case WarpFamily::rotation: return rotate_image(image, g, label.angle);
        case WarpFamily::mixed: break;
    }
    throw PreconditionError("apply_label: a concrete family is required");
}

PairDataset gen_dot_pairs(const DotPairOptions& opts) {
    if (opts.count < 0) throw PreconditionError("gen_dot_pairs: negative count");
    check_geometry(opts.geometry, opts.family, "gen_dot_pairs");
    if (!(opts.density > 0.0 && opts.density < 1.0)) {
        std::ostringstream msg;
        msg << "gen_dot_pairs: density must lie in (0, 1), got " << opts.density;
        throw PreconditionError(msg.str());
    }
    Rng rng(opts.seed);
    PairDataset data;
    data.geometry = opts.geometry;
    data.pairs.reserve(static_cast<std::size_t>(opts.count));
    for (int i = 0; i < opts.count; ++i) {
        const Vector raw = random_dots(opts.geometry, opts.density, rng);
        const WarpLabel label = opts.fixed_warp ? *opts.fixed_warp : draw_warp(opts.family, opts.geometry, rng);
        data.pairs.push_back(
            {contrast_normalize(raw), contrast_normalize(apply_label(label, raw, opts.geometry)), label});
    }
    return data;
}

Matrix VideoDataset::concatenated() const {
    Matrix out(static_cast<Eigen::Index>(geometry.size()) * frames, static_cast<Eigen::Index>(clips.size()));
    for (std::size_t c = 0; c < clips.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = concatenate(clips[c].frames);
    return out;
}

VideoDataset gen_videos(const VideoOptions& opts) {
    if (opts.frames < 1) throw PreconditionError("gen_videos: need at least one frame");
    if (opts.count < 0) throw PreconditionError("gen_videos: negative count");
    std::vector<ScheduleSegment> schedule = opts.schedule;
    if (schedule.empty()) schedule.push_back({WarpFamily::cyclic_shift, 1, opts.frames});
    int expected = 1;
    for (const auto& seg : schedule) {
        if (seg.first != expected || seg.last < seg.first) {
            std::ostringstream msg;
            msg << "gen_videos: schedule segment [" << seg.first << ", " << seg.last << "] leaves a gap or overlap at frame "
                << expected;
            throw PreconditionError(msg.str());
        }
        if (seg.family == WarpFamily::mixed) throw PreconditionError("gen_videos: segments need a concrete family");
        check_geometry(opts.geometry, seg.family, "gen_videos");
        expected = seg.last + 1;
    }
    if (expected != opts.frames + 1) {
        throw PreconditionError("gen_videos: schedule ends at frame " + std::to_string(expected - 1) + ", clips have " +
                                std::to_string(opts.frames));
    }

    Rng rng(opts.seed);
    VideoDataset data;
    data.geometry = opts.geometry;
    data.frames = opts.frames;
    data.schedule = schedule;
    data.clips.reserve(static_cast<std::size_t>(opts.count));
    for (int i = 0; i < opts.count; ++i) {
        VideoClip clip;
        Vector raw = random_dots(opts.geometry, opts.density, rng);
        for (const auto& seg : schedule) {
            WarpLabel w;
            w.family = seg.family;
            if (seg.family == WarpFamily::rotation) {
                w.angle = rng.uniform(-opts.max_angular_speed, opts.max_angular_speed);
            } else {
                const int span = 2 * opts.max_speed + 1;
                w.dx = rng.below(span) - opts.max_speed;
                w.dy = opts.geometry.height > 1 ? rng.below(span) - opts.max_speed : 0;
            }
            clip.segment_warps.push_back(w);
        }
        clip.frames.push_back(contrast_normalize(raw));
        std::size_t seg = 0;
        for (int t = 2; t <= opts.frames; ++t) {
            while (schedule[seg].last < t) ++seg;
            raw = apply_label(clip.segment_warps[seg], raw, opts.geometry);
            clip.frames.push_back(contrast_normalize(raw));
        }
        data.clips.push_back(std::move(clip));
    }
    return data;
}

LabeledImageSet LabeledImageSet::subset(Split split) const {
    LabeledImageSet out;
    out.geometry = geometry;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (splits[i] != split) continue;
        out.images.push_back(images[i]);
        out.labels.push_back(labels[i]);
        out.splits.push_back(split);
    }
    return out;
}

LabeledImageSet LabeledImageSet::head(std::size_t n) const {
    if (n > images.size()) throw PreconditionError("LabeledImageSet::head: not enough images");
    LabeledImageSet out;
    out.geometry = geometry;
    out.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n));
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    out.splits.assign(splits.begin(), splits.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

Matrix LabeledImageSet::features() const { return stack_columns(images); }

LabeledImageSet gen_rotated_glyphs(const GlyphOptions& opts) {
    if (opts.geometry.width < 16 || opts.geometry.height < 16) {
        throw InvalidDimension("gen_rotated_glyphs: geometry must be at least 16x16");
    }
    if (opts.per_class < 0) throw PreconditionError("gen_rotated_glyphs: negative per_class");
    Rng rng(opts.seed);
    LabeledImageSet set;
    set.geometry = opts.geometry;
    for (int i = 0; i < opts.per_class; ++i) {
        for (int digit = 0; digit < 10; ++digit) {
            const double thickness = opts.thickness + rng.uniform(-opts.thickness_jitter, opts.thickness_jitter);
            const double ox = rng.uniform(-opts.offset_jitter, opts.offset_jitter);
            const double oy = rng.uniform(-opts.offset_jitter, opts.offset_jitter);
            const double scale = 1.0 + rng.uniform(-opts.scale_jitter, opts.scale_jitter);
            const double angle = opts.rotate ? rng.angle() : 0.0;
            set.images.push_back(contrast_normalize(render_glyph(digit, opts.geometry, thickness, ox, oy, scale, angle)));
            set.labels.push_back(digit);
            set.splits.push_back(Split::train);
        }
    }
    return set;
}

void assign_splits(LabeledImageSet& set, std::size_t holdout, std::size_t test) {
    if (holdout + test > set.size()) throw PreconditionError("assign_splits: holdout + test exceed the set size");
    const std::size_t n = set.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= n - test) {
            set.splits[i] = Split::test;
        } else if (i >= n - test - holdout) {
            set.splits[i] = Split::holdout;
        } else {
            set.splits[i] = Split::train;
        }
    }
}

LabeledImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const IdxImages raw = read_idx_images(images);
    const auto lab = read_idx_labels(labels);
    if (lab.size() != raw.images.size()) {
        throw DataError("load_idx: " + std::to_string(raw.images.size()) + " images but " + std::to_string(lab.size()) +
                        " labels");
    }
    LabeledImageSet set;
    set.geometry = {raw.cols, raw.rows};
    for (std::size_t i = 0; i < raw.images.size(); ++i) {
        Vector v(static_cast<Eigen::Index>(raw.images[i].size()));
        for (std::size_t k = 0; k < raw.images[i].size(); ++k) v(static_cast<Eigen::Index>(k)) = raw.images[i][k] / 255.0;
        if (lab[i] > 9) throw DataError("load_idx: label " + std::to_string(lab[i]) + " out of range at index " + std::to_string(i));
        set.images.push_back(contrast_normalize(v));
        set.labels.push_back(lab[i]);
        set.splits.push_back(Split::train);
    }
    return set;
}

void save_pairs(const PairDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_matrix(dir / "X.wmat", data.X());
    save_matrix(dir / "Y.wmat", data.Y());
    Matrix labels(static_cast<Eigen::Index>(data.size()), 4);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& l = data.pairs[i].label;
        const auto r = static_cast<Eigen::Index>(i);
        labels(r, 0) = static_cast<double>(l.family);
        labels(r, 1) = l.dx;
        labels(r, 2) = l.dy;
        labels(r, 3) = l.angle;
    }
    save_matrix(dir / "labels.wmat", labels);
    Matrix geom(1, 2);
    geom << data.geometry.width, data.geometry.height;
    save_matrix(dir / "geometry.wmat", geom);
}

PairDataset load_pairs(const std::filesystem::path& dir) {
    const Matrix X = load_matrix(dir / "X.wmat");
    const Matrix Y = load_matrix(dir / "Y.wmat");
    const Matrix labels = load_matrix(dir / "labels.wmat");
    const Matrix geom = load_matrix(dir / "geometry.wmat");
    if (geom.size() != 2 || X.rows() != geom(0, 0) * geom(0, 1) || X.rows() != Y.rows() || X.cols() != Y.cols() ||
        labels.rows() != X.cols() || labels.cols() != 4) {
        throw DataError("load_pairs: inconsistent files in " + dir.string());
    }
    PairDataset data;
    data.geometry = {static_cast<int>(geom(0, 0)), static_cast<int>(geom(0, 1))};
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        PatchPair p{ImagePatch(X.col(i)), ImagePatch(Y.col(i)), {}};
        p.x.normalized = satisfies_normalization(p.x.values);
        p.y.normalized = satisfies_normalization(p.y.values);
        p.x.degenerate = p.x.values.isZero(0.0);
        p.y.degenerate = p.y.values.isZero(0.0);
        p.label.family = static_cast<WarpFamily>(static_cast<int>(labels(i, 0)));
        p.label.dx = static_cast<int>(labels(i, 1));
        p.label.dy = static_cast<int>(labels(i, 2));
        p.label.angle = labels(i, 3);
        data.pairs.push_back(std::move(p));
    }
    return data;
}

}  // namespace warpcode
