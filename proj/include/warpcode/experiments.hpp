#pragma once

#include "warpcode/analysis.hpp"
#include "warpcode/config.hpp"
#include "warpcode/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace warpcode {

// Derives an independent seed for a named sub-stream of an experiment.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream);

/// Output directory of one experiment run. Holds a lockfile while alive and
/// records every artifact so that manifest.json can list checksums.
class RunDirectory {
public:
    explicit RunDirectory(std::filesystem::path root);
    ~RunDirectory();
    RunDirectory(const RunDirectory&) = delete;
    RunDirectory& operator=(const RunDirectory&) = delete;

    const std::filesystem::path& root() const { return root_; }
    // Returns root / relative and remembers it for the manifest.
    std::filesystem::path artifact(const std::filesystem::path& relative);
    void write_manifest(const std::string& experiment, std::uint64_t seed, const Params& params) const;

private:
    std::filesystem::path root_;
    std::filesystem::path lock_;
    std::vector<std::filesystem::path> artifacts_;
};

using Logger = std::function<void(const std::string&)>;

struct RunOptions {
    std::filesystem::path out;
    std::uint64_t seed = 0;
    Params params;
    Logger log;  // progress lines; may be empty
};

// Loss trace as a CSV with columns epoch,loss.
CsvTable loss_table(const std::vector<double>& trace);

struct Fig2Run {
    GatedModel model;
    std::vector<double> trace;
    QuadratureReport report;
    double top_half_fraction = 0.0;         // fit_r2 >= 0.8 among the top half by energy
    std::vector<std::string> family_tags;   // mixed run only: per pair
};

struct Fig2Report {
    Fig2Run rotation;
    std::optional<Fig2Run> mixed;
};

/// Gated model with band pooling trained on rotated dot pairs, and
/// optionally on a mixed rotation + translation set. Writes filter grids,
/// quadrature.csv and loss.csv per run (plus family_tags.csv for the mixed
/// run) and manifest.json.
Fig2Report run_fig2(RunOptions opts);

struct FactorMovieScore {
    int factor = 0;
    double energy = 0.0;
    double theta_hat = 0.0;
    double consistency_r2 = 0.0;
    double segment_ratio = 1.0;  // only meaningful for two-segment clips
};

struct Fig3Run {
    GatedModel model;
    std::vector<double> trace;
    std::vector<FactorMovieScore> factors;  // in factor order
    double top_quartile_median = 0.0;
    double bottom_quartile_median = 0.0;
    double quiet_fraction = 0.0;  // high-energy factors with segment ratio >= 3
};

struct Fig3Report {
    Fig3Run shift;
    std::optional<Fig3Run> rotate_shift;
};

/// Tied models on concatenated movie frames: homogeneous shift movies and
/// rotate-then-shift movies. Writes per-factor frame grids and
/// eigenmovies.csv per run, plus segment energy ratios for the second.
Fig3Report run_fig3(RunOptions opts);

struct Fig4Row {
    int train_size = 0;
    std::string method;
    double accuracy = 0.0;
};

struct Fig4Report {
    double invariance_pooled = 0.0;
    double invariance_raw = 0.0;
    std::vector<Fig4Row> rows;

    double accuracy(int train_size, const std::string& method) const;
};

/// Rotation model on dot pairs, its single-image pooled codes as features,
/// and the classifier sweep on rotated glyphs against raw-pixel and PCA
/// baselines. Also measures the invariance ratio of the codes over rotation
/// orbits of dot images. Writes accuracy.csv and invariance.csv.
Fig4Report run_fig4(RunOptions opts);

struct OracleReport {
    int trials = 0;
    double accuracy_clean = 0.0;
    double accuracy_noisy = 0.0;
    double snr = 0.0;
    // Trials where at least one 2-D subspace was below the aperture floor.
    int aperture_trials = 0;
    double aperture_accuracy = 0.0;
};

/// Analytic detector bank for cyclic shifts; predicts the shift of random
/// signal pairs by the argmax of the pooled code. Writes oracle.csv.
OracleReport run_detector_oracle(RunOptions opts);

}  // namespace warpcode
