#include <doctest.h>

#include "helpers.hpp"
#include "warpcode/classify.hpp"
#include "warpcode/dataset.hpp"
#include "warpcode/errors.hpp"
#include "warpcode/io.hpp"
#include "warpcode/warp.hpp"

#include <cmath>
#include <numbers>

using namespace warpcode;

namespace {

// Circular cross-correlation argmax over all torus offsets; -1 on a tie.
std::pair<int, int> xcorr_offset(const Vector& x, const Vector& y, Geometry g, bool* tie) {
    double best = -1e300;
    std::pair<int, int> arg{0, 0};
    *tie = false;
    for (int dy = 0; dy < g.height; ++dy) {
        for (int dx = 0; dx < g.width; ++dx) {
            const double c = shift_image(x, g, dx, dy).dot(y);
            if (c > best + 1e-9) {
                best = c;
                arg = {dx, dy};
                *tie = false;
            } else if (std::abs(c - best) <= 1e-9) {
                *tie = true;
            }
        }
    }
    return arg;
}

int wrap(int v, int n) { return ((v % n) + n) % n; }

// Angle in [-limit, limit] whose rotation of x best matches y (least squares).
double fit_rotation(const Vector& x, const Vector& y, Geometry g, double limit) {
    double best = 1e300, arg = 0.0;
    for (int k = 0; k <= 800; ++k) {
        const double a = -limit + 2 * limit * k / 800.0;
        const double r = (contrast_normalize(rotate_image(x, g, a)).values - y).squaredNorm();
        if (r < best) {
            best = r;
            arg = a;
        }
    }
    return arg;
}

}  // namespace

TEST_CASE("dot pairs: fixed zero shift and determinism") {
    DotPairOptions opts;
    opts.count = 50;
    opts.family = WarpFamily::cyclic_shift;
    opts.fixed_warp = WarpLabel{WarpFamily::cyclic_shift, 0, 0, 0.0};
    const auto same = gen_dot_pairs(opts);
    for (const auto& p : same.pairs) {
        CHECK(p.x.values == p.y.values);
        CHECK(p.x.normalized);
    }

    opts.fixed_warp.reset();
    opts.family = WarpFamily::mixed;
    opts.seed = 17;
    const auto a = gen_dot_pairs(opts), b = gen_dot_pairs(opts);
    CHECK(a.X() == b.X());
    CHECK(a.Y() == b.Y());
    int rotations = 0;
    for (const auto& p : a.pairs) {
        CHECK(p.label.family != WarpFamily::mixed);
        rotations += p.label.family == WarpFamily::rotation;
        CHECK(p.x.normalized);
        CHECK(p.y.normalized);
    }
    CHECK(rotations > 10);
    CHECK(rotations < 40);

    opts.density = 1.0;
    CHECK_THROWS_AS(gen_dot_pairs(opts), PreconditionError);
}

TEST_CASE("dot pairs: cross-correlation recovers the shift label") {
    // The correlation always attains its maximum at the labeled offset
    // (Cauchy-Schwarz). On tiny grids a sparse dot pattern can be periodic,
    // which creates ties, so uniqueness is only required on the 13x13 grid.
    for (Geometry g : {Geometry{16, 1}, Geometry{4, 4}, Geometry{13, 13}}) {
        DotPairOptions opts;
        opts.count = 2000;
        opts.geometry = g;
        opts.family = WarpFamily::cyclic_shift;
        opts.seed = 5;
        const auto data = gen_dot_pairs(opts);
        int at_label = 0, unique = 0;
        for (const auto& p : data.pairs) {
            bool tie = false;
            const auto [dx, dy] = xcorr_offset(p.x.values, p.y.values, g, &tie);
            const double peak = shift_image(p.x.values, g, dx, dy).dot(p.y.values);
            const double label = shift_image(p.x.values, g, p.label.dx, p.label.dy).dot(p.y.values);
            at_label += std::abs(peak - label) <= 1e-9;
            unique += !tie && dx == wrap(p.label.dx, g.width) && dy == wrap(p.label.dy, g.height);
        }
        INFO("geometry " << g.width << "x" << g.height << " unique " << unique);
        CHECK(at_label >= 0.99 * data.size());
        if (g.height > 4) CHECK(unique >= 0.99 * data.size());
        else CHECK(unique >= 0.9 * data.size());
    }
}

TEST_CASE("dot pairs: rotation labels reproduce y") {
    DotPairOptions opts;
    opts.count = 30;
    opts.family = WarpFamily::rotation;
    opts.seed = 8;
    const auto data = gen_dot_pairs(opts);
    for (const auto& p : data.pairs) {
        CHECK(p.label.angle > -std::numbers::pi);
        CHECK(p.label.angle <= std::numbers::pi);
        const Vector y = contrast_normalize(rotate_image(p.x.values, data.geometry, p.label.angle)).values;
        CHECK((y - p.y.values).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("videos") {
    VideoOptions opts;
    opts.count = 5;
    opts.frames = 1;
    opts.schedule = {{WarpFamily::cyclic_shift, 1, 1}};
    const auto stills = gen_videos(opts);
    for (const auto& c : stills.clips) CHECK(c.frames.size() == 1);

    opts.count = 40;
    opts.frames = 6;
    opts.schedule = {{WarpFamily::cyclic_shift, 1, 6}};
    const auto shifts = gen_videos(opts);
    CHECK(shifts.concatenated().rows() == 6 * 169);
    for (const auto& c : shifts.clips) {
        const auto& w = c.segment_warps.at(0);
        for (int t = 1; t < 6; ++t) {
            const Vector expected = shift_image(c.frames[0].values, opts.geometry, w.dx * t, w.dy * t);
            CHECK((c.frames[t].values - expected).cwiseAbs().maxCoeff() <= 1e-14);
        }
    }

    opts.frames = 10;
    opts.schedule = {{WarpFamily::rotation, 1, 5}, {WarpFamily::cyclic_shift, 6, 10}};
    opts.seed = 3;
    const auto two = gen_videos(opts);
    int rotation_hits = 0, shift_hits = 0, rotation_checks = 0, shift_checks = 0;
    for (const auto& c : two.clips) {
        const auto& rot = c.segment_warps.at(0);
        const auto& sh = c.segment_warps.at(1);
        for (int t = 1; t < 5; ++t) {
            ++rotation_checks;
            const double a = fit_rotation(c.frames[t - 1].values, c.frames[t].values, opts.geometry, opts.max_angular_speed);
            rotation_hits += std::abs(a - rot.angle) <= 2e-3;
        }
        for (int t = 5; t < 10; ++t) {
            ++shift_checks;
            bool tie = false;
            const auto [dx, dy] = xcorr_offset(c.frames[t - 1].values, c.frames[t].values, opts.geometry, &tie);
            shift_hits += !tie && dx == wrap(sh.dx, 13) && dy == wrap(sh.dy, 13);
        }
    }
    CHECK(rotation_hits >= 0.95 * rotation_checks);
    CHECK(shift_hits >= 0.99 * shift_checks);

    opts.schedule = {{WarpFamily::rotation, 1, 4}, {WarpFamily::cyclic_shift, 6, 10}};
    CHECK_THROWS_AS(gen_videos(opts), PreconditionError);
    opts.schedule = {{WarpFamily::rotation, 1, 5}, {WarpFamily::cyclic_shift, 5, 10}};
    CHECK_THROWS_AS(gen_videos(opts), PreconditionError);
    opts.schedule = {{WarpFamily::rotation, 1, 8}};
    CHECK_THROWS_AS(gen_videos(opts), PreconditionError);
}

TEST_CASE("rotated glyphs") {
    GlyphOptions opts;
    opts.per_class = 40;
    opts.seed = 2;
    const auto set = gen_rotated_glyphs(opts);
    REQUIRE(set.size() == 400);
    std::vector<int> counts(10, 0);
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(set.labels[i] == static_cast<int>(i % 10));
        ++counts[set.labels[i]];
        CHECK(set.images[i].normalized);
        CHECK(set.splits[i] == Split::train);
    }
    for (int c : counts) CHECK(c == 40);
    CHECK(gen_rotated_glyphs(opts).features() == set.features());

    // Without rotation the templates are separable by class means.
    opts.rotate = false;
    opts.per_class = 100;
    auto flat = gen_rotated_glyphs(opts);
    assign_splits(flat, 0, 500);
    const auto train = flat.subset(Split::train), test = flat.subset(Split::test);
    CHECK(train.size() == 500);
    const auto pred = nearest_centroid_predict(train.features(), train.labels, test.features());
    CHECK(accuracy(pred, test.labels) >= 0.9);

    CHECK_THROWS(gen_rotated_glyphs(GlyphOptions{10, {8, 8}}));
}

TEST_CASE("splits partition the set") {
    GlyphOptions opts;
    opts.per_class = 10;
    auto set = gen_rotated_glyphs(opts);
    assign_splits(set, 20, 30);
    CHECK(set.subset(Split::train).size() == 50);
    CHECK(set.subset(Split::holdout).size() == 20);
    CHECK(set.subset(Split::test).size() == 30);
    CHECK(set.splits.back() == Split::test);
    CHECK(set.splits[50] == Split::holdout);
    CHECK(set.head(7).size() == 7);
    CHECK_THROWS(assign_splits(set, 60, 60));
}

TEST_CASE("load_idx scales and normalizes") {
    const auto dir = testing::scratch_dir("load_idx");
    IdxImages imgs;
    imgs.rows = 2;
    imgs.cols = 2;
    imgs.images = {{0, 255, 0, 255}, {10, 10, 10, 10}};
    write_idx_images(dir / "i.idx", imgs);
    write_idx_labels(dir / "l.idx", {4, 7});
    const auto set = load_idx(dir / "i.idx", dir / "l.idx");
    REQUIRE(set.size() == 2);
    CHECK(set.geometry == Geometry{2, 2});
    CHECK(set.labels == std::vector<int>{4, 7});
    CHECK(set.images[0].normalized);
    CHECK(set.images[0].values[1] == doctest::Approx(0.5));
    CHECK(set.images[1].degenerate);

    write_idx_labels(dir / "l3.idx", {1, 2, 3});
    CHECK_THROWS(load_idx(dir / "i.idx", dir / "l3.idx"));
}

TEST_CASE("pair datasets round-trip on disk") {
    DotPairOptions opts;
    opts.count = 20;
    opts.family = WarpFamily::mixed;
    opts.seed = 4;
    const auto data = gen_dot_pairs(opts);
    const auto dir = testing::scratch_dir("pairs");
    save_pairs(data, dir / "set");
    const auto back = load_pairs(dir / "set");
    CHECK(back.geometry == data.geometry);
    CHECK(back.X() == data.X());
    CHECK(back.Y() == data.Y());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back.pairs[i].label.family == data.pairs[i].label.family);
        CHECK(back.pairs[i].label.dx == data.pairs[i].label.dx);
        CHECK(back.pairs[i].label.angle == data.pairs[i].label.angle);
        CHECK(back.pairs[i].x.normalized);
    }
}
