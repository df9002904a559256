#pragma once

#include "warpcode/patch.hpp"
#include "warpcode/random.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace warpcode {

enum class WarpFamily { cyclic_shift, rotation, mixed };

std::string to_string(WarpFamily f);
WarpFamily parse_family(const std::string& s);

// The warp that produced an example. `family` is never mixed here.
struct WarpLabel {
    WarpFamily family = WarpFamily::cyclic_shift;
    int dx = 0;
    int dy = 0;
    double angle = 0.0;
};

struct PatchPair {
    ImagePatch x;
    ImagePatch y;
    WarpLabel label;
};

struct PairDataset {
    Geometry geometry;
    std::vector<PatchPair> pairs;

    std::size_t size() const { return pairs.size(); }
    Matrix X() const;  // dim x n
    Matrix Y() const;
};

struct DotPairOptions {
    int count = 1000;
    Geometry geometry{13, 13};
    WarpFamily family = WarpFamily::rotation;
    double density = 0.1;
    std::uint64_t seed = 0;
    std::optional<WarpLabel> fixed_warp;  // overrides the random draw when set
};

/// Random binary dot images and a warped copy.
///
/// Shifts draw (dx, dy) uniformly over the whole torus; rotations draw the
/// angle uniformly from (-pi, pi]; mixed picks either family with
/// probability 1/2. An all-off or all-on draw is redrawn so that x is never
/// degenerate.
PairDataset gen_dot_pairs(const DotPairOptions& opts);

// Raw binary dot image (before normalization), never constant.
Vector random_dots(Geometry g, double density, Rng& rng);

// Applies a label's warp to a raw image.
Vector apply_label(const WarpLabel& label, const Vector& image, Geometry g);

// Frames first..last (1-based, inclusive) share one per-frame warp.
struct ScheduleSegment {
    WarpFamily family = WarpFamily::cyclic_shift;
    int first = 1;
    int last = 1;
};

struct VideoClip {
    std::vector<ImagePatch> frames;
    std::vector<WarpLabel> segment_warps;  // one per schedule segment
};

struct VideoDataset {
    Geometry geometry;
    int frames = 1;
    std::vector<ScheduleSegment> schedule;
    std::vector<VideoClip> clips;

    // Concatenated frames, one clip per column.
    Matrix concatenated() const;
};

struct VideoOptions {
    int count = 1000;
    Geometry geometry{13, 13};
    int frames = 10;
    std::vector<ScheduleSegment> schedule;
    double density = 0.1;
    std::uint64_t seed = 0;
    int max_speed = 2;          // shifts: per-frame offsets uniform in [-max_speed, max_speed]
    double max_angular_speed = 0.4;  // rotations: per-frame angle uniform in [-v, v]
};

/// Frame 1 is a random dot image; frame t > 1 is the warp of the segment
/// containing t applied to raw frame t - 1. Frames are normalized after
/// warping so the raw sequence is exact for permutation warps.
VideoDataset gen_videos(const VideoOptions& opts);

enum class Split { train, holdout, test };

struct LabeledImageSet {
    Geometry geometry;
    std::vector<ImagePatch> images;
    std::vector<int> labels;
    std::vector<Split> splits;

    std::size_t size() const { return images.size(); }
    // Images carrying `split`, in order; the result's split tags are all `split`.
    LabeledImageSet subset(Split split) const;
    LabeledImageSet head(std::size_t n) const;
    Matrix features() const;  // dim x n
};

struct GlyphOptions {
    int per_class = 100;
    Geometry geometry{16, 16};
    std::uint64_t seed = 0;
    bool rotate = true;
    double thickness = 0.2;          // stroke width in units of the half-width
    double thickness_jitter = 0.05;
    double offset_jitter = 0.08;
    double scale_jitter = 0.08;
};

/// Ten digit-like stroke templates, each instance jittered in thickness,
/// offset and scale and then rotated by a uniform angle in (-pi, pi].
/// Instances are interleaved by class (0, 1, ..., 9, 0, 1, ...), so every
/// prefix of length 10k is class-balanced. All split tags are train.
LabeledImageSet gen_rotated_glyphs(const GlyphOptions& opts);

// Tags the last `test` images as test and the `holdout` images before them
// as holdout; the rest stay train.
void assign_splits(LabeledImageSet& set, std::size_t holdout, std::size_t test);

// IDX image + label files; pixels scaled to [0, 1] then contrast-normalized.
LabeledImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Pair datasets on disk: X.wmat, Y.wmat (one example per column) and
// labels.wmat (family, dx, dy, angle per row) plus geometry.wmat.
void save_pairs(const PairDataset& data, const std::filesystem::path& dir);
PairDataset load_pairs(const std::filesystem::path& dir);

}  // namespace warpcode
