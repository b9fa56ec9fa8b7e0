#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "inflow/checkpoint.hpp"
#include "inflow/run.hpp"

using namespace inflow;
using namespace inflow::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "inflow_test_cli" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

RunConfig tiny(const fs::path& out, Variant v = Variant::inflow) {
    RunConfig c;
    c.dataset.synthetic.total_length = 600;
    c.dataset.synthetic.num_series = 2;
    c.model.variant = v;
    c.model.blocks = 2;
    c.model.flow.coupling_width = 8;
    c.model.backbone.kind = BackboneKind::mlp;
    c.model.backbone.lookback = 8;
    c.model.backbone.horizon = 8;
    c.model.backbone.hidden_width = 16;
    c.model.backbone.depth = 2;
    c.train.max_epochs = 2;
    c.train.batch_size = 64;
    c.train.mode = c.resolved_mode();
    c.output_dir = out;
    c.seeds = {1, 2};
    return c;
}

}  // namespace

TEST_CASE("git blob hash") {
    CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("config roundtrip and precedence of defaults") {
    RunConfig c = tiny("somewhere");
    c.dataset.columns = {"a", "b"};
    c.dataset.ratios = {7, 1, 2};
    c.seeds = {3, 9};
    const RunConfig back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.content_hash() == c.content_hash());

    RunConfig moved = c;
    moved.output_dir = "elsewhere";
    CHECK(moved.content_hash() == c.content_hash());
    moved.train.inner_lr = 5e-4;
    CHECK(moved.content_hash() != c.content_hash());

    const RunConfig defaults = RunConfig::from_json(nlohmann::json::object());
    CHECK(defaults.model.variant == Variant::inflow);
    CHECK(defaults.train.mode == TrainMode::bilevel);
    CHECK(defaults.train.patience == 5);
    CHECK(defaults.train.outer_lr == 1e-4);
    CHECK(defaults.model.flow.coupling_width == 128);
    CHECK(defaults.dataset.synthetic.tau == 24);

    const RunConfig preset = RunConfig::from_json({{"dataset", {{"preset", "synthetic-3"}}}});
    CHECK(preset.dataset.synthetic.tau == 48);
}

TEST_CASE("variant and mode consistency") {
    auto mode_of = [](const std::string& v) {
        return RunConfig::from_json({{"model", {{"variant", v}}}}).train.mode;
    };
    CHECK(mode_of("inflow") == TrainMode::bilevel);
    CHECK(mode_of("inflow_t") == TrainMode::bilevel);
    CHECK(mode_of("realnvp") == TrainMode::bilevel);
    CHECK(mode_of("realnvp_c") == TrainMode::bilevel);
    CHECK(mode_of("inflow_j") == TrainMode::joint);
    CHECK(mode_of("revin") == TrainMode::joint);
    CHECK(mode_of("none") == TrainMode::backbone_only);
    CHECK(RunConfig::from_json({{"model", {{"variant", "revin"}, {"revin_bilevel", true}}}}).train.mode ==
          TrainMode::bilevel);

    const RunConfig bad = RunConfig::from_json({{"model", {{"variant", "inflow_j"}}}, {"train", {{"mode", "bilevel"}}}});
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"model", {{"variant", "glow"}}}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"train", {{"mode", "sideways"}}}}), ConfigError);
}

TEST_CASE("checkpoint roundtrip is bit-identical") {
    const fs::path dir = scratch("ckpt");
    Rng rng(1);
    Parameter a{"theta/a", random_tensor({3, 4}, rng)};
    Parameter b{"phi/b", random_tensor({5}, rng)};
    a.value[0] = -0.0;
    a.value[1] = 1e-310;
    save_checkpoint(dir / "c.bin", {&a, &b}, {{"note", "x"}});
    Parameter a2{"theta/a", Tensor({3, 4})};
    Parameter b2{"phi/b", Tensor({5})};
    const auto meta = load_checkpoint(dir / "c.bin", {&b2, &a2});
    CHECK(meta["note"] == "x");
    CHECK(std::memcmp(a2.value.data().data(), a.value.data().data(), 12 * sizeof(double)) == 0);
    CHECK(b2.value == b.value);

    save_checkpoint(dir / "d.bin", {&a2, &b2}, {{"note", "x"}});
    CHECK(slurp(dir / "c.bin") == slurp(dir / "d.bin"));
    CHECK(slurp(dir / "c.bin").substr(0, 8) == "INFLOWCK");

    const auto header = read_checkpoint_header(dir / "c.bin");
    CHECK(header["params"][1]["offset"] == 96);

    Parameter wrong{"phi/b", Tensor({6})};
    try {
        load_checkpoint(dir / "c.bin", {&wrong});
        FAIL("expected an error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("phi/b") != std::string::npos);
    }
    Parameter missing{"phi/zzz", Tensor({1})};
    CHECK_THROWS_AS(load_checkpoint(dir / "c.bin", {&missing}), DataError);
    std::ofstream(dir / "junk.bin") << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin", {&a2}), DataError);
}

TEST_CASE("synth writes deterministic files with the preset tau") {
    const fs::path a = scratch("synth_a"), b = scratch("synth_b");
    SyntheticConfig cfg = SyntheticConfig::preset("synthetic-2");
    cfg.total_length = 500;
    cmd_synth(cfg, a);
    cmd_synth(cfg, b);
    CHECK(slurp(a / "series.csv") == slurp(b / "series.csv"));
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(m["provenance"]["config"]["tau"] == 12);
}

TEST_CASE("train and eval round trip") {
    const fs::path dir = scratch("train");
    RunConfig c = tiny(dir);
    c.seeds = {1, 2, 3, 4};
    const TrainOutcome out = cmd_train(c);
    REQUIRE(out.seeds.size() == 4);
    for (auto s : c.seeds) {
        const fs::path sd = dir / ("seed-" + std::to_string(s));
        CHECK(fs::exists(sd / "checkpoint.bin"));
        CHECK(fs::exists(sd / "report.json"));
        CHECK(fs::exists(sd / "loss.csv"));
    }
    CHECK(fs::exists(dir / "config.json"));
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["config_hash"] == c.content_hash());
    CHECK(manifest["train_end"] == 360);

    std::set<std::string> prefixes;
    const auto header = read_checkpoint_header(dir / "seed-1" / "checkpoint.bin");
    for (const auto& p : header["params"])
        prefixes.insert(p["name"].get<std::string>().substr(0, 4));
    CHECK(prefixes == std::set<std::string>{"thet", "phi/"});

    EvalRequest req;
    req.run_dir = dir;
    req.trace_windows = {0, 5};
    const EvalOutcome ev = cmd_eval(c, req);
    for (const auto& s : out.seeds) {
        CHECK(std::abs(ev.val_loss.at(s.seed) - s.report.best_val_loss) < 1e-9);
    }
    CHECK(ev.test.per_seed.size() == 4);
    CHECK(ev.test.mse_mean == doctest::Approx(out.test.mse_mean).epsilon(1e-12));
    CHECK(ev.traces.size() == 8);
    CHECK(fs::exists(ev.traces.front()));

    RunConfig other = c;
    other.model.backbone.hidden_width = 17;
    try {
        (void)cmd_eval(other, req);
        FAIL("expected an error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("theta/mlp/layer0/weight") != std::string::npos);
    }
}

TEST_CASE("plain backbone learns a noiseless linear series") {
    const fs::path dir = scratch("linear");
    RunConfig c = tiny(dir, Variant::none);
    c.dataset.source = "csv";
    {
        std::ofstream csv(dir / "lin.csv");
        csv << "v\n";
        for (int t = 0; t < 800; ++t) csv << std::sin(2.0 * M_PI * t / 20.0) + 0.5 * std::sin(2.0 * M_PI * t / 9.0) << "\n";
    }
    c.dataset.csv_path = (dir / "lin.csv").string();
    c.model.backbone.kind = BackboneKind::linear;
    c.train.max_epochs = 150;
    c.train.patience = 150;
    c.train.batch_size = 32;
    c.train.inner_lr = 3e-3;
    c.seeds = {1};
    const TrainOutcome out = cmd_train(c);
    CHECK(out.seeds.front().report.loss_history.back().train_loss < 1e-3);
}

TEST_CASE("ablation roster shares windows") {
    const fs::path dir = scratch("ablate");
    RunConfig c = tiny(dir);
    c.train.max_epochs = 1;
    c.seeds = {7};
    const AblationTable t = cmd_ablate(c, 2);
    REQUIRE(t.cells.size() == 7);
    std::set<std::uint64_t> hashes;
    std::set<std::string> names;
    for (const auto& cell : t.cells) {
        CHECK(cell.ok);
        names.insert(to_string(cell.variant));
        for (const auto& s : cell.outcome.seeds) hashes.insert(s.anchor_hash);
    }
    CHECK(names == std::set<std::string>{"inflow", "inflow_t", "inflow_j", "realnvp", "realnvp_c", "revin", "none"});
    CHECK(hashes.size() == 1);
    CHECK(fs::exists(dir / "ablation.csv"));
    CHECK(fs::exists(dir / "inflow_j" / "seed-7" / "checkpoint.bin"));

    RunConfig broken = c;
    broken.model.backbone.lookback = 400;  // longer than the validation region
    const AblationTable failed = cmd_ablate(broken, 1);
    for (const auto& cell : failed.cells) {
        CHECK_FALSE(cell.ok);
        CHECK(cell.error.find("region") != std::string::npos);
    }
    CHECK(failed.to_csv().find("failed") != std::string::npos);
}

TEST_CASE("command line") {
    const fs::path dir = scratch("cli");
    const std::string exe = INFLOW_CLI_PATH;
    auto run = [&](const std::string& args) { return std::system((exe + " " + args + " > " + (dir / "log.txt").string() + " 2>&1").c_str()); };

    CHECK(run("synth --preset synthetic-3 --seed 4 --out " + (dir / "data").string()) == 0);
    const auto m = nlohmann::json::parse(slurp(dir / "data" / "manifest.json"));
    CHECK(m["provenance"]["config"]["tau"] == 48);
    CHECK(m["provenance"]["config"]["seed"] == 4);

    RunConfig c = tiny(dir / "ignored");
    c.seeds = {1};
    std::ofstream(dir / "cfg.json") << c.to_json().dump(2);
    const std::string common = "--config " + (dir / "cfg.json").string() + " --out " + (dir / "run").string();
    CHECK(run("train " + common + " --variant revin --seed 2 --seed 3 --lookback 6 --horizon 4") == 0);
    const auto written = nlohmann::json::parse(slurp(dir / "run" / "config.json"));
    CHECK(written["model"]["variant"] == "revin");
    CHECK(written["model"]["lookback"] == 6);
    CHECK(written["seeds"] == nlohmann::json::array({2, 3}));
    CHECK(fs::exists(dir / "run" / "seed-3" / "checkpoint.bin"));

    CHECK(run("eval " + common + " --variant revin --seed 2 --seed 3 --lookback 6 --horizon 4 --trace") == 0);
    CHECK(fs::exists(dir / "run" / "eval.json"));
    CHECK(slurp(dir / "log.txt").find("trace ") != std::string::npos);

    CHECK(run("train " + common + " --variant nope") != 0);
    CHECK(slurp(dir / "log.txt").find("unknown variant") != std::string::npos);
    CHECK(run("frobnicate") != 0);
}
