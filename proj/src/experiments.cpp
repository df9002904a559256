#include "warpcode/experiments.hpp"

#include "warpcode/classify.hpp"
#include "warpcode/dataset.hpp"
#include "warpcode/detector.hpp"
#include "warpcode/errors.hpp"
#include "warpcode/random.hpp"
#include "warpcode/warp.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

namespace warpcode {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kQuadratureThreshold = 0.8;
constexpr double kQuietRatio = 3.0;

void say(const RunOptions& opts, const std::string& line) {
    if (opts.log) opts.log(line);
}

std::string fmt(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Indices sorted by decreasing key; ties keep index order.
std::vector<std::size_t> order_by_decreasing(const std::vector<double>& key) {
    std::vector<std::size_t> idx(key.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return idx;
}

struct TrainingSettings {
    ModelShape shape;
    TrainConfig train;
};

// Model and optimizer settings shared by the experiments. `prefix` selects a
// namespace inside the flat config (e.g. "shift." for one fig3 run). Only
// fig3 lets the pooling mode vary; the pair experiments need the band layout.
TrainingSettings read_training(Params& p, const std::string& prefix, TrainingSettings defaults,
                               bool pooling_key = false) {
    TrainingSettings s = defaults;
    if (pooling_key) s.shape.pooling = parse_pooling(p.get_string(prefix + "pooling", to_string(defaults.shape.pooling)));
    s.shape.factors = p.get_int(prefix + "factors", defaults.shape.factors);
    s.shape.mappings = p.get_int(prefix + "mappings", defaults.shape.mappings);
    s.shape.nonlinearity = parse_nonlinearity(p.get_string(prefix + "nonlinearity", to_string(defaults.shape.nonlinearity)));
    s.shape.reconstruction =
        parse_reconstruction(p.get_string(prefix + "reconstruction", to_string(defaults.shape.reconstruction)));
    s.train.learning_rate = p.get_double(prefix + "learning_rate", defaults.train.learning_rate);
    s.train.epochs = p.get_int(prefix + "epochs", defaults.train.epochs);
    s.train.batch_size = p.get_int(prefix + "batch_size", defaults.train.batch_size);
    s.train.momentum = p.get_double(prefix + "momentum", defaults.train.momentum);
    s.train.init_scale = p.get_double(prefix + "init_scale", defaults.train.init_scale);
    s.train.data_scale = p.get_double(prefix + "data_scale", defaults.train.data_scale);
    s.train.corruption = p.get_double(prefix + "corruption", defaults.train.corruption);
    if (s.shape.pooling == PoolingMode::band && (s.shape.factors < 2 || s.shape.factors % 2 != 0)) {
        throw ConfigError(prefix + "factors must be even and >= 2");
    }
    if (s.shape.factors < 1) throw ConfigError(prefix + "factors must be positive");
    if (s.shape.mappings < 1) throw ConfigError(prefix + "mappings must be positive");
    validate(s.train);
    return s;
}

Geometry read_geometry(Params& p, const std::string& prefix, Geometry defaults) {
    Geometry g{p.get_int(prefix + "width", defaults.width), p.get_int(prefix + "height", defaults.height)};
    if (g.width < 1 || g.height < 1 || g.size() < 2) throw ConfigError(prefix + "width/height must describe at least 2 pixels");
    return g;
}

void require_positive(int value, const std::string& key) {
    if (value < 1) throw ConfigError(key + " must be positive");
}

Logger epoch_logger(const RunOptions& opts, const std::string& tag) {
    return [&opts, tag](const std::string& line) { say(opts, tag + line); };
}

std::vector<double> train_logged(GatedModel& m, const Matrix& X, const Matrix& Y, const TrainConfig& cfg,
                                 const RunOptions& opts, const std::string& tag) {
    const auto log = epoch_logger(opts, tag);
    return train(m, X, Y, cfg, [&](int epoch, double loss) {
        if (epoch == 0 || epoch == cfg.epochs || epoch % 5 == 0) log(" epoch " + std::to_string(epoch) + " loss " + fmt(loss, 4));
    });
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream) {
    // FNV-1a of the stream name mixed into the seed, finished with splitmix64.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : stream) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RunDirectory::RunDirectory(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw ConfigError("cannot create output directory " + root_.string() + ": " + ec.message());
    lock_ = root_ / ".lock";
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) {
        throw ConfigError("output directory " + root_.string() + " is locked by another run (remove " + lock_.string() +
                          " if stale)");
    }
    std::fclose(f);
}

RunDirectory::~RunDirectory() {
    std::error_code ec;
    std::filesystem::remove(lock_, ec);
}

std::filesystem::path RunDirectory::artifact(const std::filesystem::path& relative) {
    const auto path = root_ / relative;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (std::find(artifacts_.begin(), artifacts_.end(), relative) == artifacts_.end()) artifacts_.push_back(relative);
    return path;
}

void RunDirectory::write_manifest(const std::string& experiment, std::uint64_t seed, const Params& params) const {
    nlohmann::ordered_json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : params.resolved()) cfg[k] = v;
    j["config"] = cfg;
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    auto sorted = artifacts_;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& rel : sorted) {
        const auto path = root_ / rel;
        if (std::filesystem::is_regular_file(path)) {
            files.push_back({{"path", rel.generic_string()}, {"fnv1a64", file_checksum(path)}});
        } else if (std::filesystem::is_directory(path)) {
            std::vector<std::filesystem::path> inner;
            for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
                if (e.is_regular_file()) inner.push_back(e.path());
            }
            std::sort(inner.begin(), inner.end());
            for (const auto& f : inner) {
                files.push_back({{"path", std::filesystem::relative(f, root_).generic_string()}, {"fnv1a64", file_checksum(f)}});
            }
        }
    }
    j["artifacts"] = files;
    // Re-run recipe: the echoed config is a complete key=value file.
    std::ofstream(root_ / "config.resolved") << [&] {
        std::string s;
        for (const auto& [k, v] : params.resolved()) s += k + "=" + v + "\n";
        return s;
    }();
    std::ofstream(root_ / "manifest.json") << j.dump(2) << '\n';
}

CsvTable loss_table(const std::vector<double>& trace) {
    CsvTable t({"epoch", "loss"});
    for (std::size_t e = 0; e < trace.size(); ++e) t.add_row({std::to_string(e), CsvTable::number(trace[e])});
    return t;
}

// ---------------------------------------------------------------- fig2

namespace {

Fig2Run fig2_single(const RunOptions& opts, RunDirectory& dir, const std::string& name, WarpFamily family, Geometry g,
                    int pairs, double density, int energy_examples, const TrainingSettings& settings) {
    DotPairOptions data_opts;
    data_opts.count = pairs;
    data_opts.geometry = g;
    data_opts.family = family;
    data_opts.density = density;
    data_opts.seed = derive_seed(opts.seed, name + ".data");
    say(opts, name + ": generating " + std::to_string(pairs) + " " + to_string(family) + " pairs");
    const PairDataset data = gen_dot_pairs(data_opts);
    const Matrix X = data.X(), Y = data.Y();

    ModelShape shape = settings.shape;
    shape.dim_x = shape.dim_y = g.size();
    shape.pooling = PoolingMode::band;
    TrainConfig cfg = settings.train;
    cfg.seed = derive_seed(opts.seed, name + ".model");

    Fig2Run run;
    run.model = init_gated_model(shape, cfg);
    run.trace = train_logged(run.model, X, Y, cfg, opts, name + ":");

    const Eigen::Index n_energy = std::min<Eigen::Index>(energy_examples, X.cols());
    run.report = quadrature_report(run.model, g, X.leftCols(n_energy), Y.leftCols(n_energy));
    run.top_half_fraction = run.report.top_half_fraction(kQuadratureThreshold);
    say(opts, name + ": top-half quadrature fraction " + fmt(run.top_half_fraction, 2) + ", median fit_r2 " +
                  fmt(run.report.r2_median));

    const int grid_cols = 8;
    export_filter_grid(run.model.U, g, grid_cols, dir.artifact(name + "/filters_U.pgm"));
    export_filter_grid(run.model.V, g, grid_cols, dir.artifact(name + "/filters_V.pgm"));
    run.report.csv().write(dir.artifact(name + "/quadrature.csv"));
    loss_table(run.trace).write(dir.artifact(name + "/loss.csv"));
    save_model(run.model, dir.artifact(name + "/model"));

    if (family == WarpFamily::mixed) {
        // Plane-wave pairs lose their spectrum under rotation; circular
        // harmonics keep a ring-shaped spectrum.
        CsvTable tags({"pair_index", "family", "rotational_overlap", "spectral_overlap", "fit_r2"});
        for (const auto& p : run.report.pairs) {
            const std::string tag = p.rotational_overlap >= 0.5 ? "rotation" : "translation";
            run.family_tags.push_back(tag);
            tags.add_row({std::to_string(p.pair_index), tag, CsvTable::number(p.rotational_overlap),
                          CsvTable::number(p.spectral_overlap), CsvTable::number(p.fit_r2)});
        }
        tags.write(dir.artifact(name + "/family_tags.csv"));
    }
    return run;
}

}  // namespace

Fig2Report run_fig2(RunOptions opts) {
    Params& p = opts.params;
    const Geometry g = read_geometry(p, "", {13, 13});
    if (g.width < 3 || g.height < 3) throw ConfigError("fig2 needs at least a 3x3 patch");
    const int pairs = p.get_int("pairs", 150000);
    const double density = p.get_double("density", 0.1);
    const int energy_examples = p.get_int("energy_examples", 5000);
    const bool mixed = p.get_bool("mixed", true);
    TrainingSettings defaults;
    defaults.shape.factors = 40;
    defaults.shape.mappings = 20;
    defaults.train.learning_rate = 0.005;
    defaults.train.momentum = 0.9;
    defaults.train.batch_size = 200;
    defaults.train.epochs = 30;
    defaults.train.init_scale = 0.01;
    const TrainingSettings settings = read_training(p, "", defaults);
    require_positive(pairs, "pairs");
    require_positive(energy_examples, "energy_examples");
    if (!(density > 0.0 && density < 1.0)) throw ConfigError("density must lie in (0, 1)");
    p.reject_unused();

    RunDirectory dir(opts.out);
    Fig2Report report;
    report.rotation = fig2_single(opts, dir, "rotation", WarpFamily::rotation, g, pairs, density, energy_examples, settings);
    if (mixed) {
        report.mixed = fig2_single(opts, dir, "mixed", WarpFamily::mixed, g, pairs, density, energy_examples, settings);
    }
    dir.write_manifest("fig2", opts.seed, p);
    return report;
}

// ---------------------------------------------------------------- fig3

namespace {

Fig3Run fig3_single(const RunOptions& opts, RunDirectory& dir, const std::string& name, const VideoOptions& video,
                    const TrainingSettings& settings, int split) {
    say(opts, name + ": generating " + std::to_string(video.count) + " clips of " + std::to_string(video.frames) + " frames");
    const VideoDataset data = gen_videos(video);
    const Matrix X = data.concatenated();
    const int frame_dim = video.geometry.size();

    ModelShape shape = settings.shape;
    shape.dim_x = shape.dim_y = static_cast<int>(X.rows());
    shape.tied = true;
    TrainConfig cfg = settings.train;
    cfg.seed = derive_seed(opts.seed, name + ".model");

    Fig3Run run;
    run.model = init_gated_model(shape, cfg);
    run.trace = train_logged(run.model, X, X, cfg, opts, name + ":");

    // A factor's energy is its mean squared gated response (Uᵀx)·(PWz) on the
    // clean clips, at the scale used for training.
    const double scale = cfg.data_scale > 0.0 ? cfg.data_scale : std::sqrt(static_cast<double>(X.rows()));
    Vector energy = Vector::Zero(run.model.factors());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const ImagePatch x(Vector(X.col(j) * scale));
        const Vector g = run.model.P * (run.model.W * infer_mappings(run.model, x, x));
        energy += (run.model.U.transpose() * x.values).cwiseProduct(g).array().square().matrix();
    }
    energy /= static_cast<double>(X.cols());
    for (int f = 0; f < run.model.factors(); ++f) {
        FactorMovieScore s;
        s.factor = f;
        s.energy = energy(f);
        const Vector filter = run.model.U.col(f);
        if (video.frames >= 3) {
            const auto frames = split_frames(filter, frame_dim);
            const EigenmovieFit fit = eigenmovie_consistency(frames);
            s.theta_hat = fit.theta_hat;
            s.consistency_r2 = fit.consistency_r2;
        } else {
            s.consistency_r2 = 1.0;  // a single frame or pair is trivially consistent
        }
        if (split > 0) s.segment_ratio = segment_energy_ratio(filter, frame_dim, split);
        run.factors.push_back(s);
    }

    std::vector<double> energies;
    for (const auto& s : run.factors) energies.push_back(s.energy);
    const auto order = order_by_decreasing(energies);
    const std::size_t quartile = std::max<std::size_t>(1, order.size() / 4);
    std::vector<double> top, bottom;
    std::size_t quiet = 0;
    for (std::size_t k = 0; k < quartile; ++k) {
        const auto& hi = run.factors[order[k]];
        top.push_back(hi.consistency_r2);
        if (hi.segment_ratio >= kQuietRatio) ++quiet;
        bottom.push_back(run.factors[order[order.size() - 1 - k]].consistency_r2);
    }
    run.top_quartile_median = median(top);
    run.bottom_quartile_median = median(bottom);
    run.quiet_fraction = static_cast<double>(quiet) / static_cast<double>(quartile);
    say(opts, name + ": consistency median top quartile " + fmt(run.top_quartile_median) + ", bottom quartile " +
                  fmt(run.bottom_quartile_median) + (split > 0 ? ", quiet fraction " + fmt(run.quiet_fraction, 2) : ""));

    CsvTable t({"factor", "energy", "theta_hat", "consistency_r2", "segment_ratio"});
    for (const auto& s : run.factors) {
        t.add_row({std::to_string(s.factor), CsvTable::number(s.energy), CsvTable::number(s.theta_hat),
                   CsvTable::number(s.consistency_r2), split > 0 ? CsvTable::number(s.segment_ratio) : "1"});
    }
    t.write(dir.artifact(name + "/eigenmovies.csv"));
    loss_table(run.trace).write(dir.artifact(name + "/loss.csv"));

    // One row of frames per factor, strongest factors first.
    const std::size_t shown = std::min<std::size_t>(order.size(), 20);
    Matrix tiles(frame_dim, static_cast<Eigen::Index>(shown) * video.frames);
    for (std::size_t k = 0; k < shown; ++k) {
        const auto frames = split_frames(run.model.U.col(static_cast<Eigen::Index>(order[k])), frame_dim);
        for (int s = 0; s < video.frames; ++s) {
            tiles.col(static_cast<Eigen::Index>(k) * video.frames + s) = frames[static_cast<std::size_t>(s)];
        }
    }
    if (video.geometry.height > 1) export_filter_grid(tiles, video.geometry, video.frames, dir.artifact(name + "/eigenmovies.pgm"));
    save_model(run.model, dir.artifact(name + "/model"));
    return run;
}

}  // namespace

Fig3Report run_fig3(RunOptions opts) {
    Params& p = opts.params;
    const Geometry g = read_geometry(p, "", {6, 6});
    const double density = p.get_double("density", 0.1);

    VideoOptions shift;
    shift.geometry = g;
    shift.density = density;
    shift.count = p.get_int("shift.clips", 10000);
    shift.frames = p.get_int("shift.frames", 6);
    shift.max_speed = p.get_int("shift.max_speed", 1);
    shift.schedule = {{WarpFamily::cyclic_shift, 1, shift.frames}};
    shift.seed = derive_seed(opts.seed, "shift.data");
    // An overcomplete bank trained to fill in masked pixels. Without the
    // masking, x = y is solved by any basis of the data span and the factors
    // never specialize to one motion.
    TrainingSettings defaults;
    defaults.shape.factors = 384;
    defaults.shape.mappings = 64;
    defaults.shape.pooling = PoolingMode::identity;
    defaults.train.learning_rate = 0.003;
    defaults.train.momentum = 0.9;
    defaults.train.batch_size = 100;
    defaults.train.epochs = 30;
    defaults.train.init_scale = 0.3;
    defaults.train.data_scale = 9.0;
    defaults.train.corruption = 0.5;
    const TrainingSettings shift_settings = read_training(p, "shift.", defaults, true);

    const bool two_segment = p.get_bool("rotshift", true);
    VideoOptions rotshift = shift;
    rotshift.count = p.get_int("rotshift.clips", 10000);
    rotshift.frames = p.get_int("rotshift.frames", 10);
    const int split = p.get_int("rotshift.split", 5);
    rotshift.max_speed = p.get_int("rotshift.max_speed", 1);
    rotshift.max_angular_speed = p.get_double("rotshift.max_angular_speed", 0.4);
    rotshift.schedule = {{WarpFamily::rotation, 1, split}, {WarpFamily::cyclic_shift, split + 1, rotshift.frames}};
    rotshift.seed = derive_seed(opts.seed, "rotshift.data");
    const TrainingSettings rot_settings = read_training(p, "rotshift.", defaults, true);

    require_positive(shift.count, "shift.clips");
    require_positive(shift.frames, "shift.frames");
    require_positive(rotshift.count, "rotshift.clips");
    if (two_segment && (split < 1 || split >= rotshift.frames)) throw ConfigError("rotshift.split must lie in [1, frames)");
    if (!(density > 0.0 && density < 1.0)) throw ConfigError("density must lie in (0, 1)");
    p.reject_unused();

    RunDirectory dir(opts.out);
    Fig3Report report;
    report.shift = fig3_single(opts, dir, "shift", shift, shift_settings, 0);
    if (two_segment) report.rotate_shift = fig3_single(opts, dir, "rotshift", rotshift, rot_settings, split);
    dir.write_manifest("fig3", opts.seed, p);
    return report;
}

// ---------------------------------------------------------------- fig4

double Fig4Report::accuracy(int train_size, const std::string& method) const {
    for (const auto& r : rows) {
        if (r.train_size == train_size && r.method == method) return r.accuracy;
    }
    throw PreconditionError("fig4 report has no row for " + method + " at size " + std::to_string(train_size));
}

namespace {

Matrix pooled_codes(const GatedModel& m, const Matrix& X) {
    Matrix out(m.pooled_factors(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) out.col(j) = pooled_single_code(m, X.col(j));
    return out;
}

// Logistic regression with the L2 penalty picked on the holdout set.
double logreg_accuracy(const Matrix& train, const std::vector<int>& train_y, const Matrix& holdout,
                       const std::vector<int>& holdout_y, const Matrix& test, const std::vector<int>& test_y,
                       const std::vector<double>& l2_grid, int iterations) {
    double best_l2 = l2_grid.front(), best_acc = -1.0;
    for (double l2 : l2_grid) {
        const LogRegModel m = fit_logreg(train, train_y, {l2, iterations, true});
        const double acc = accuracy(m.predict(holdout), holdout_y);
        if (acc > best_acc) {
            best_acc = acc;
            best_l2 = l2;
        }
    }
    return accuracy(fit_logreg(train, train_y, {best_l2, iterations, true}).predict(test), test_y);
}

}  // namespace

Fig4Report run_fig4(RunOptions opts) {
    Params& p = opts.params;
    const Geometry g = read_geometry(p, "", {16, 16});
    const std::string model_path = p.get_string("model", "");
    const int pairs = p.get_int("pairs", 100000);
    const double density = p.get_double("density", 0.1);
    TrainingSettings defaults;
    defaults.shape.factors = 100;
    defaults.shape.mappings = 50;
    defaults.train.learning_rate = 0.005;
    defaults.train.momentum = 0.9;
    defaults.train.batch_size = 200;
    defaults.train.epochs = 20;
    defaults.train.init_scale = 0.01;
    const TrainingSettings settings = read_training(p, "", defaults);
    const std::vector<int> sizes = p.get_int_list("train_sizes", {100, 300, 1000, 3000});
    const int test_count = p.get_int("test_size", 1000);
    const int orbits = p.get_int("orbits", 50);
    const int orbit_size = p.get_int("orbit_size", 16);
    const int iterations = p.get_int("logreg_iterations", 300);
    const int knn_k = p.get_int("knn_k", 1);
    const int pca_max = p.get_int("pca_components", 200);
    if (g.width < 16 || g.height < 16) throw ConfigError("fig4 needs glyphs of at least 16x16");
    require_positive(pairs, "pairs");
    require_positive(test_count, "test_size");
    require_positive(iterations, "logreg_iterations");
    require_positive(knn_k, "knn_k");
    require_positive(pca_max, "pca_components");
    if (orbits < 2 || orbit_size < 2) throw ConfigError("orbits and orbit_size must be >= 2");
    for (int s : sizes) {
        if (s < 10 || s % 10 != 0) throw ConfigError("train_sizes must be positive multiples of 10");
    }
    p.reject_unused();

    RunDirectory dir(opts.out);
    GatedModel model;
    if (!model_path.empty()) {
        model = load_model(model_path);
        if (model.dim_x() != g.size() || model.dim_y() != g.size()) throw ConfigError("model does not match the glyph size");
    } else {
        DotPairOptions data_opts;
        data_opts.count = pairs;
        data_opts.geometry = g;
        data_opts.family = WarpFamily::rotation;
        data_opts.density = density;
        data_opts.seed = derive_seed(opts.seed, "fig4.pairs");
        say(opts, "fig4: generating " + std::to_string(pairs) + " rotation pairs");
        const PairDataset data = gen_dot_pairs(data_opts);
        ModelShape shape = settings.shape;
        shape.dim_x = shape.dim_y = g.size();
        shape.pooling = PoolingMode::band;
        TrainConfig cfg = settings.train;
        cfg.seed = derive_seed(opts.seed, "fig4.model");
        model = init_gated_model(shape, cfg);
        const auto trace = train_logged(model, data.X(), data.Y(), cfg, opts, "fig4:");
        loss_table(trace).write(dir.artifact("loss.csv"));
        save_model(model, dir.artifact("model"));
    }

    Fig4Report report;
    {
        // Rotation orbits of dot images: one base image per orbit, evenly spaced angles.
        Rng rng(derive_seed(opts.seed, "fig4.orbits"));
        std::vector<Matrix> pooled, raw;
        for (int o = 0; o < orbits; ++o) {
            const Vector base = random_dots(g, density, rng);
            Matrix codes(model.pooled_factors(), orbit_size), pixels(g.size(), orbit_size);
            for (int k = 0; k < orbit_size; ++k) {
                const ImagePatch img = contrast_normalize(rotate_image(base, g, 2.0 * kPi * k / orbit_size));
                pixels.col(k) = img.values;
                codes.col(k) = pooled_single_code(model, img.values);
            }
            pooled.push_back(std::move(codes));
            raw.push_back(std::move(pixels));
        }
        report.invariance_pooled = invariance_ratio(pooled);
        report.invariance_raw = invariance_ratio(raw);
        say(opts, "fig4: invariance ratio pooled " + fmt(report.invariance_pooled) + ", raw pixels " + fmt(report.invariance_raw));
        CsvTable t({"code", "invariance_ratio"});
        t.add_row({"pooled", CsvTable::number(report.invariance_pooled)});
        t.add_row({"raw_pixels", CsvTable::number(report.invariance_raw)});
        t.write(dir.artifact("invariance.csv"));
    }

    const int max_size = *std::max_element(sizes.begin(), sizes.end());
    const int holdout = std::max(10, max_size / 10 / 10 * 10);
    GlyphOptions glyph_opts;
    glyph_opts.geometry = g;
    glyph_opts.seed = derive_seed(opts.seed, "fig4.glyphs");
    glyph_opts.per_class = (max_size + holdout + test_count + 9) / 10;
    LabeledImageSet glyphs = gen_rotated_glyphs(glyph_opts);
    assign_splits(glyphs, static_cast<std::size_t>(holdout), static_cast<std::size_t>(test_count));
    const LabeledImageSet train_pool = glyphs.subset(Split::train);
    const LabeledImageSet holdout_set = glyphs.subset(Split::holdout);
    const LabeledImageSet test_set = glyphs.subset(Split::test);
    const Matrix holdout_raw = holdout_set.features(), test_raw = test_set.features();
    const Matrix holdout_codes = pooled_codes(model, holdout_raw), test_codes = pooled_codes(model, test_raw);
    const std::vector<double> l2_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};

    CsvTable table({"train_size", "method", "accuracy"});
    for (int size : sizes) {
        const LabeledImageSet train_set = train_pool.head(static_cast<std::size_t>(size));
        const Matrix train_raw = train_set.features();
        const Matrix train_codes = pooled_codes(model, train_raw);
        const auto& y = train_set.labels;
        const Pca pca = fit_pca(train_raw, std::min({pca_max, size - 1, g.size()}));
        const Matrix train_pca = pca.project(train_raw), holdout_pca = pca.project(holdout_raw), test_pca = pca.project(test_raw);

        const std::vector<std::pair<std::string, double>> results = {
            {"pooled_logreg", logreg_accuracy(train_codes, y, holdout_codes, holdout_set.labels, test_codes, test_set.labels,
                                              l2_grid, iterations)},
            {"raw_logreg", logreg_accuracy(train_raw, y, holdout_raw, holdout_set.labels, test_raw, test_set.labels, l2_grid,
                                           iterations)},
            {"raw_knn", accuracy(knn_predict(train_raw, y, test_raw, knn_k), test_set.labels)},
            {"pca_logreg", logreg_accuracy(train_pca, y, holdout_pca, holdout_set.labels, test_pca, test_set.labels, l2_grid,
                                           iterations)},
            {"pca_knn", accuracy(knn_predict(train_pca, y, test_pca, knn_k), test_set.labels)},
        };
        std::string line = "fig4: n=" + std::to_string(size);
        for (const auto& [method, acc] : results) {
            report.rows.push_back({size, method, acc});
            table.add_row({std::to_string(size), method, CsvTable::number(acc)});
            line += " " + method + "=" + fmt(acc);
        }
        say(opts, line);
    }
    table.write(dir.artifact("accuracy.csv"));
    dir.write_manifest("fig4", opts.seed, p);
    return report;
}

// ---------------------------------------------------------------- oracle

OracleReport run_detector_oracle(RunOptions opts) {
    Params& p = opts.params;
    const int dim = p.get_int("dim", 16);
    const int trials = p.get_int("trials", 1000);
    const double snr = p.get_double("snr", 10.0);
    const int grid_size = p.get_int("theta_grid", kDefaultThetaGridSize);
    const double floor = p.get_double("aperture_floor", kDefaultApertureFloor);
    if (dim < 2) throw ConfigError("dim must be >= 2");
    require_positive(trials, "trials");
    require_positive(grid_size, "theta_grid");
    if (!(snr > 0.0)) throw ConfigError("snr must be positive");
    if (!(floor > 0.0)) throw ConfigError("aperture_floor must be positive");
    p.reject_unused();

    RunDirectory dir(opts.out);
    // The generator (shift 1) goes first: its blocks define the bank.
    std::vector<WarpMatrix> warps;
    std::vector<SubspaceDecomposition> decomps;
    for (int s = 0; s < dim; ++s) warps.push_back(make_cyclic_shift(dim, s));
    for (int k = 0; k < dim; ++k) decomps.push_back(decompose(warps[static_cast<std::size_t>((k + 1) % dim)]));
    const auto grid = uniform_theta_grid(grid_size);
    DetectorBank bank = build_bank_from_warp_family(decomps, grid);
    bank.across_pool = family_pooling(bank, warps);

    Rng rng(derive_seed(opts.seed, "oracle.signals"));
    const double noise_sd = 1.0 / std::sqrt(snr * dim);  // unit-norm signal: per-entry power 1/dim
    int clean_hits = 0, noisy_hits = 0, aperture_trials = 0, aperture_hits = 0;
    auto predict = [&](const ImagePatch& x, const ImagePatch& y) {
        Eigen::Index best;
        pooled_code(bank, x, y).pooled.maxCoeff(&best);
        return static_cast<int>(best);
    };
    auto noisy = [&](const Vector& v) {
        Vector out = v;
        for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += noise_sd * rng.normal();
        return contrast_normalize(out);
    };
    for (int t = 0; t < trials; ++t) {
        Vector raw(dim);
        for (int i = 0; i < dim; ++i) raw(i) = rng.normal();
        const ImagePatch x = contrast_normalize(raw);
        bool aperture = false;
        for (const auto& b : bank.subspaces) {
            if (b.is_pair() && project(b, x).norm() < floor) aperture = true;
        }
        for (int s = 0; s < dim; ++s) {
            const ImagePatch y = apply_warp(warps[static_cast<std::size_t>(s)], x);
            const bool hit = predict(x, y) == s;
            clean_hits += hit;
            if (aperture) {
                ++aperture_trials;
                aperture_hits += hit;
            }
            noisy_hits += predict(noisy(x.values), noisy(y.values)) == s;
        }
    }
    OracleReport r;
    r.trials = trials * dim;
    r.snr = snr;
    r.accuracy_clean = static_cast<double>(clean_hits) / r.trials;
    r.accuracy_noisy = static_cast<double>(noisy_hits) / r.trials;
    r.aperture_trials = aperture_trials;
    r.aperture_accuracy = aperture_trials ? static_cast<double>(aperture_hits) / aperture_trials : 1.0;
    say(opts, "oracle: clean " + fmt(r.accuracy_clean, 4) + ", noisy (SNR " + fmt(snr, 1) + ") " + fmt(r.accuracy_noisy, 4));

    CsvTable t({"condition", "trials", "accuracy"});
    t.add_row({"clean", std::to_string(r.trials), CsvTable::number(r.accuracy_clean)});
    t.add_row({"noisy", std::to_string(r.trials), CsvTable::number(r.accuracy_noisy)});
    t.add_row({"clean_aperture_limited", std::to_string(r.aperture_trials), CsvTable::number(r.aperture_accuracy)});
    t.write(dir.artifact("oracle.csv"));
    save_bank(bank, dir.artifact("bank"));
    dir.write_manifest("oracle", opts.seed, p);
    return r;
}

}  // namespace warpcode
