// Command-line entry point: data generation, training, analysis and the
// figure experiments.

#include "warpcode/analysis.hpp"
#include "warpcode/dataset.hpp"
#include "warpcode/errors.hpp"
#include "warpcode/experiments.hpp"
#include "warpcode/io.hpp"
#include "warpcode/model.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

using namespace warpcode;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::vector<std::string> sets;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "key=value settings file");
    cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--set", c.sets, "extra key=value setting, repeatable (overrides the config)");
    cmd->add_flag("--quiet", c.quiet, "suppress progress output");
}

RunOptions resolve(const Common& c) {
    RunOptions opts;
    if (!c.config.empty()) opts.params = Params::load(c.config);
    for (const auto& s : c.sets) opts.params.set(s);
    const std::uint64_t config_seed = opts.params.get_u64("seed", 0);
    opts.seed = c.seed.value_or(config_seed);
    opts.params.set("seed", std::to_string(opts.seed));
    opts.params.get_u64("seed", 0);
    opts.out = c.out;
    if (!c.quiet) opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
    return opts;
}

std::vector<ScheduleSegment> parse_schedule(const std::string& text, int frames) {
    // "rotation:1-5,cyclic_shift:6-10"
    std::vector<ScheduleSegment> out;
    if (text.empty()) return {{WarpFamily::cyclic_shift, 1, frames}};
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        const auto dash = item.find('-', colon == std::string::npos ? 0 : colon);
        if (colon == std::string::npos || dash == std::string::npos) {
            throw ConfigError("schedule segment '" + item + "' must look like family:first-last");
        }
        try {
            out.push_back({parse_family(item.substr(0, colon)), std::stoi(item.substr(colon + 1, dash - colon - 1)),
                           std::stoi(item.substr(dash + 1))});
        } catch (const std::logic_error&) {
            throw ConfigError("schedule segment '" + item + "' has a bad frame range");
        }
    }
    return out;
}

void cmd_gen(RunOptions opts) {
    Params& p = opts.params;
    const std::string kind = p.get_string("kind", "pairs");
    const Geometry g{p.get_int("width", 13), p.get_int("height", 13)};
    const double density = p.get_double("density", 0.1);
    RunDirectory dir(opts.out);
    if (kind == "pairs") {
        DotPairOptions o;
        o.count = p.get_int("count", 1000);
        o.geometry = g;
        o.family = parse_family(p.get_string("family", "rotation"));
        o.density = density;
        o.seed = derive_seed(opts.seed, "gen.pairs");
        p.reject_unused();
        save_pairs(gen_dot_pairs(o), dir.artifact("pairs"));
    } else if (kind == "videos") {
        VideoOptions o;
        o.count = p.get_int("count", 1000);
        o.geometry = g;
        o.frames = p.get_int("frames", 10);
        o.schedule = parse_schedule(p.get_string("schedule", ""), o.frames);
        o.density = density;
        o.max_speed = p.get_int("max_speed", 2);
        o.max_angular_speed = p.get_double("max_angular_speed", 0.4);
        o.seed = derive_seed(opts.seed, "gen.videos");
        p.reject_unused();
        save_matrix(dir.artifact("clips.wmat"), gen_videos(o).concatenated());
    } else if (kind == "glyphs") {
        GlyphOptions o;
        o.per_class = p.get_int("per_class", 100);
        o.geometry = {p.get_int("width", 16), p.get_int("height", 16)};
        o.rotate = p.get_bool("rotate", true);
        o.seed = derive_seed(opts.seed, "gen.glyphs");
        p.reject_unused();
        const LabeledImageSet set = gen_rotated_glyphs(o);
        IdxImages idx;
        idx.rows = o.geometry.height;
        idx.cols = o.geometry.width;
        std::vector<std::uint8_t> labels;
        for (std::size_t i = 0; i < set.size(); ++i) {
            const Vector& v = set.images[i].values;
            const double lo = v.minCoeff(), hi = v.maxCoeff();
            std::vector<std::uint8_t> px(static_cast<std::size_t>(v.size()));
            for (Eigen::Index k = 0; k < v.size(); ++k) {
                px[static_cast<std::size_t>(k)] = hi > lo ? static_cast<std::uint8_t>(std::lround(255.0 * (v(k) - lo) / (hi - lo))) : 128;
            }
            idx.images.push_back(std::move(px));
            labels.push_back(static_cast<std::uint8_t>(set.labels[i]));
        }
        write_idx_images(dir.artifact("glyphs-images.idx3-ubyte"), idx);
        write_idx_labels(dir.artifact("glyphs-labels.idx1-ubyte"), labels);
        const auto preview = std::min<std::size_t>(set.size(), 100);
        export_filter_grid(set.head(preview).features(), o.geometry, 10, dir.artifact("preview.pgm"));
    } else {
        throw ConfigError("unknown kind '" + kind + "' (expected pairs, videos or glyphs)");
    }
    dir.write_manifest("gen", opts.seed, p);
}

void cmd_train(RunOptions opts, const std::string& data_dir) {
    Params& p = opts.params;
    ModelShape shape;
    shape.factors = p.get_int("factors", 40);
    shape.mappings = p.get_int("mappings", 20);
    shape.pooling = parse_pooling(p.get_string("pooling", "band"));
    shape.nonlinearity = parse_nonlinearity(p.get_string("nonlinearity", "sigmoid"));
    shape.reconstruction = parse_reconstruction(p.get_string("reconstruction", "one_sided"));
    TrainConfig cfg;
    cfg.learning_rate = p.get_double("learning_rate", 0.005);
    cfg.epochs = p.get_int("epochs", 30);
    cfg.batch_size = p.get_int("batch_size", 200);
    cfg.momentum = p.get_double("momentum", 0.9);
    cfg.init_scale = p.get_double("init_scale", 0.01);
    cfg.data_scale = p.get_double("data_scale", 0.0);
    cfg.corruption = p.get_double("corruption", 0.0);
    cfg.seed = derive_seed(opts.seed, "train.model");
    PairDataset data;
    if (!data_dir.empty()) {
        p.reject_unused();
        data = load_pairs(data_dir);
    } else {
        DotPairOptions o;
        o.count = p.get_int("count", 20000);
        o.geometry = {p.get_int("width", 13), p.get_int("height", 13)};
        o.family = parse_family(p.get_string("family", "rotation"));
        o.density = p.get_double("density", 0.1);
        o.seed = derive_seed(opts.seed, "train.data");
        p.reject_unused();
        data = gen_dot_pairs(o);
    }
    shape.dim_x = shape.dim_y = data.geometry.size();
    RunDirectory dir(opts.out);
    GatedModel m = init_gated_model(shape, cfg);
    const auto trace = train(m, data.X(), data.Y(), cfg, [&](int epoch, double loss) {
        if (opts.log) opts.log("epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
    });
    loss_table(trace).write(dir.artifact("loss.csv"));
    save_model(m, dir.artifact("model"));
    dir.write_manifest("train", opts.seed, p);
}

void cmd_analyze(RunOptions opts, const std::string& model_dir, const std::string& data_dir) {
    Params& p = opts.params;
    const Geometry g{p.get_int("width", 13), p.get_int("height", 13)};
    const int grid_cols = p.get_int("grid_cols", 8);
    p.reject_unused();
    const GatedModel m = load_model(model_dir);
    if (m.dim_x() != g.size()) throw ConfigError("model dimension does not match width x height");
    RunDirectory dir(opts.out);
    Matrix X, Y;
    if (!data_dir.empty()) {
        const PairDataset data = load_pairs(data_dir);
        X = data.X();
        Y = data.Y();
    } else {
        // Energies from rotated dot pairs when no data are given.
        DotPairOptions o;
        o.count = 5000;
        o.geometry = g;
        o.seed = derive_seed(opts.seed, "analyze.data");
        const PairDataset data = gen_dot_pairs(o);
        X = data.X();
        Y = data.Y();
    }
    const QuadratureReport report = quadrature_report(m, g, X, Y);
    report.csv().write(dir.artifact("quadrature.csv"));
    export_filter_grid(m.U, g, grid_cols, dir.artifact("filters_U.pgm"));
    export_filter_grid(m.V, g, grid_cols, dir.artifact("filters_V.pgm"));
    std::cout << "top-half quadrature fraction " << report.top_half_fraction(0.8) << ", median fit_r2 " << report.r2_median
              << '\n';
    dir.write_manifest("analyze", opts.seed, p);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"warpcode: transformation detectors, gated models and their experiments"};
    app.require_subcommand(1);
    Common common;
    std::string data_dir, model_dir;

    auto* gen = app.add_subcommand("gen", "generate a dataset (kind=pairs|videos|glyphs)");
    auto* trn = app.add_subcommand("train", "train a gated model on dot pairs");
    trn->add_option("--data", data_dir, "pair dataset directory written by gen");
    auto* ana = app.add_subcommand("analyze", "quadrature report and filter grids of a trained model");
    ana->add_option("--model", model_dir, "model directory")->required();
    ana->add_option("--data", data_dir, "pair dataset directory for the pair energies");
    auto* cls = app.add_subcommand("classify", "glyph classification sweep with a trained model");
    cls->add_option("--model", model_dir, "model directory")->required();
    auto* fig2 = app.add_subcommand("fig2", "learned quadrature pairs from rotated dot pairs");
    auto* fig3 = app.add_subcommand("fig3", "eigenmovies from shift and rotate-then-shift movies");
    auto* fig4 = app.add_subcommand("fig4", "classification with pooled codes vs baselines");
    auto* oracle = app.add_subcommand("oracle", "analytic shift detectors on random signals");
    for (auto* cmd : {gen, trn, ana, cls, fig2, fig3, fig4, oracle}) add_common(cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        RunOptions opts = resolve(common);
        if (gen->parsed()) {
            cmd_gen(opts);
        } else if (trn->parsed()) {
            cmd_train(opts, data_dir);
        } else if (ana->parsed()) {
            cmd_analyze(opts, model_dir, data_dir);
        } else if (cls->parsed()) {
            opts.params.set("model", model_dir);
            const Fig4Report r = run_fig4(opts);
            std::cout << "invariance ratio pooled " << r.invariance_pooled << ", raw " << r.invariance_raw << '\n';
        } else if (fig2->parsed()) {
            const Fig2Report r = run_fig2(opts);
            std::cout << "rotation: top-half quadrature fraction " << r.rotation.top_half_fraction << '\n';
            if (r.mixed) std::cout << "mixed: top-half quadrature fraction " << r.mixed->top_half_fraction << '\n';
        } else if (fig3->parsed()) {
            const Fig3Report r = run_fig3(opts);
            std::cout << "shift: consistency median top " << r.shift.top_quartile_median << ", bottom "
                      << r.shift.bottom_quartile_median << '\n';
            if (r.rotate_shift) std::cout << "rotate-then-shift: quiet fraction " << r.rotate_shift->quiet_fraction << '\n';
        } else if (fig4->parsed()) {
            const Fig4Report r = run_fig4(opts);
            std::cout << "invariance ratio pooled " << r.invariance_pooled << ", raw " << r.invariance_raw << '\n';
        } else if (oracle->parsed()) {
            const OracleReport r = run_detector_oracle(opts);
            std::cout << "accuracy clean " << r.accuracy_clean << ", noisy " << r.accuracy_noisy << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
