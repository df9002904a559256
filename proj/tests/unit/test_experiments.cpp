#include <doctest.h>

#include "helpers.hpp"
#include "warpcode/errors.hpp"
#include "warpcode/experiments.hpp"
#include "warpcode/io.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

using namespace warpcode;

namespace {

RunOptions options(const std::filesystem::path& out, std::uint64_t seed, const std::string& settings) {
    RunOptions o;
    o.out = out;
    o.seed = seed;
    o.params = Params::parse(settings);
    return o;
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    return nlohmann::json::parse(in);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(WARPCODE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("derived seeds are stable and separate streams") {
    CHECK(derive_seed(7, "fig2.data") == derive_seed(7, "fig2.data"));
    CHECK(derive_seed(7, "fig2.data") != derive_seed(7, "fig2.model"));
    CHECK(derive_seed(7, "fig2.data") != derive_seed(8, "fig2.data"));
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(derive_seed(s, "x"));
    CHECK(seen.size() == 1000);
}

TEST_CASE("run directory lock and manifest") {
    const auto root = testing::scratch_dir("rundir");
    {
        RunDirectory dir(root);
        CHECK(std::filesystem::exists(root / ".lock"));
        CHECK_THROWS_AS(RunDirectory{root}, ConfigError);
        std::ofstream(dir.artifact("a/b.txt")) << "hello";
        std::ofstream(dir.artifact("c.txt")) << "world";
        Params p = Params::parse("alpha=1\n");
        p.get_int("alpha", 0);
        p.get_double("beta", 0.5);
        dir.write_manifest("unit", 42, p);
    }
    CHECK_FALSE(std::filesystem::exists(root / ".lock"));
    RunDirectory again(root);  // the lock was released

    const auto j = read_json(root / "manifest.json");
    CHECK(j["experiment"] == "unit");
    CHECK(j["seed"] == 42);
    CHECK(j["config"]["alpha"] == "1");
    CHECK(j["config"]["beta"] == "0.5");
    REQUIRE(j["artifacts"].size() == 2);
    CHECK(j["artifacts"][0]["path"] == "a/b.txt");
    CHECK(j["artifacts"][0]["fnv1a64"] == file_checksum(root / "a/b.txt"));

    const Params resolved = Params::load(root / "config.resolved");
    CHECK(resolved.values().at("beta") == "0.5");
}

TEST_CASE("loss table") {
    const CsvTable t = loss_table({3.0, 2.0, 1.5});
    CHECK(t.header() == std::vector<std::string>{"epoch", "loss"});
    REQUIRE(t.rows().size() == 3);
    CHECK(t.rows()[0][0] == "0");
    CHECK(std::stod(t.rows()[2][1]) == 1.5);
}

TEST_CASE("detector oracle recovers every shift") {
    const auto root = testing::scratch_dir("oracle");
    const OracleReport r = run_detector_oracle(options(root, 3, "trials=50\n"));
    CHECK(r.trials == 50 * 16);
    CHECK(r.accuracy_clean == 1.0);
    CHECK(r.accuracy_noisy >= 0.9);
    const CsvTable t = CsvTable::read(root / "oracle.csv");
    CHECK(t.rows().size() == 3);
    CHECK(std::filesystem::exists(root / "bank"));
    CHECK_THROWS_AS(run_detector_oracle(options(testing::scratch_dir("oracle_bad"), 3, "dim=1\n")), ConfigError);
}

TEST_CASE("fig2 smoke run writes parseable outputs") {
    const auto root = testing::scratch_dir("fig2");
    const Fig2Report r =
        run_fig2(options(root, 1, "pairs=2000\nepochs=2\nfactors=8\nmappings=4\nenergy_examples=500\n"));
    REQUIRE(r.mixed.has_value());
    CHECK(r.rotation.trace.size() == 3);
    CHECK(r.mixed->family_tags.size() == 4);
    for (const char* run : {"rotation", "mixed"}) {
        const auto dir = root / run;
        const CsvTable q = CsvTable::read(dir / "quadrature.csv");
        CHECK(q.header() == std::vector<std::string>{"pair_index", "theta_hat", "fit_r2", "spectral_overlap"});
        CHECK(q.rows().size() == 4);
        CHECK(CsvTable::read(dir / "loss.csv").rows().size() == 3);
        const GrayImage pgm = read_pgm(dir / "filters_U.pgm");
        CHECK(pgm.width > 0);
    }
    CHECK(CsvTable::read(root / "mixed/family_tags.csv").rows().size() == 4);
    CHECK(read_json(root / "manifest.json")["experiment"] == "fig2");
}

TEST_CASE("fig2 negative control: no learning leaves the init statistics") {
    const std::string base = "pairs=1000\nepochs=2\nfactors=8\nmappings=4\nenergy_examples=500\nmixed=false\n";
    const Fig2Report frozen = run_fig2(options(testing::scratch_dir("fig2_lr0"), 5, base + "learning_rate=0\n"));
    ModelShape shape;
    shape.dim_x = shape.dim_y = 169;
    shape.factors = 8;
    shape.mappings = 4;
    TrainConfig cfg;
    cfg.init_scale = 0.01;
    cfg.seed = derive_seed(5, "rotation.model");
    const GatedModel init = init_gated_model(shape, cfg);
    CHECK(frozen.rotation.model.U == init.U);
    CHECK(frozen.rotation.model.V == init.V);
    CHECK(frozen.rotation.trace.front() == frozen.rotation.trace.back());
}

TEST_CASE("fig3 smoke run and the single-frame control") {
    const auto root = testing::scratch_dir("fig3");
    const std::string small = "shift.clips=300\nrotshift.clips=300\nshift.epochs=2\nrotshift.epochs=2\n"
                              "shift.factors=12\nrotshift.factors=12\nshift.mappings=4\nrotshift.mappings=4\n";
    const Fig3Report r = run_fig3(options(root, 2, small));
    REQUIRE(r.rotate_shift.has_value());
    CHECK(r.shift.factors.size() == 12);
    const CsvTable shift = CsvTable::read(root / "shift/eigenmovies.csv");
    CHECK(shift.header() == std::vector<std::string>{"factor", "energy", "theta_hat", "consistency_r2", "segment_ratio"});
    CHECK(shift.rows().size() == 12);
    const CsvTable rot = CsvTable::read(root / "rotshift/eigenmovies.csv");
    for (const auto& row : rot.rows()) CHECK(std::stod(row[4]) >= 1.0);
    CHECK(std::filesystem::exists(root / "shift/eigenmovies.pgm"));

    const Fig3Report single = run_fig3(options(testing::scratch_dir("fig3_single"), 2,
                                               "shift.clips=100\nshift.frames=1\nshift.epochs=1\nshift.factors=8\n"
                                               "shift.mappings=4\nrotshift=false\n"));
    CHECK_FALSE(single.rotate_shift.has_value());
    for (const auto& f : single.shift.factors) CHECK(f.consistency_r2 == 1.0);

    CHECK_THROWS_AS(run_fig3(options(testing::scratch_dir("fig3_bad"), 2, "rotshift.split=10\n")), ConfigError);
}

TEST_CASE("fig4 smoke run") {
    const auto root = testing::scratch_dir("fig4");
    const Fig4Report r = run_fig4(options(root, 4,
                                          "pairs=1000\nepochs=2\nfactors=8\nmappings=4\ntrain_sizes=20,40\n"
                                          "test_size=50\norbits=4\norbit_size=4\nlogreg_iterations=20\n"));
    CHECK(r.rows.size() == 10);
    CHECK(r.invariance_raw > 0.0);
    const CsvTable acc = CsvTable::read(root / "accuracy.csv");
    CHECK(acc.rows().size() == 10);
    for (const auto& row : acc.rows()) {
        const double a = std::stod(row[2]);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
    CHECK(CsvTable::read(root / "invariance.csv").rows().size() == 2);
    CHECK_NOTHROW(r.accuracy(20, "raw_knn"));
    CHECK_THROWS_AS(r.accuracy(30, "raw_knn"), PreconditionError);

    // A saved model can be reused.
    const Fig4Report reuse = run_fig4(options(testing::scratch_dir("fig4_reuse"), 4,
                                              "model=" + (root / "model").string() +
                                                  "\ntrain_sizes=20\ntest_size=50\norbits=4\norbit_size=4\n"
                                                  "logreg_iterations=20\n"));
    CHECK(reuse.invariance_pooled == r.invariance_pooled);
}

TEST_CASE("unknown keys are rejected before any work") {
    const auto root = testing::scratch_dir("typo");
    CHECK_THROWS_WITH_AS(run_fig2(options(root / "run", 1, "factorz=8\n")), doctest::Contains("factorz"), ConfigError);
    CHECK_FALSE(std::filesystem::exists(root / "run"));
}

TEST_CASE("command line exit codes") {
    const auto root = testing::scratch_dir("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("fig2 --out " + (root / "a").string() + " --set typo=1") == 2);
    CHECK(run_cli("fig2 --out " + (root / "b").string() + " --set epochs=abc") == 2);
    CHECK(run_cli("nosuchcommand") == 2);
    CHECK(run_cli("train --out " + (root / "c").string() +
                  " --set count=200 --set width=5 --set height=5 --set factors=4 --set mappings=2 --set epochs=1 "
                  "--set learning_rate=1e9") == 3);
    CHECK(run_cli("oracle --quiet --out " + (root / "d").string() + " --set trials=5") == 0);
    CHECK(std::filesystem::exists(root / "d/oracle.csv"));
}
