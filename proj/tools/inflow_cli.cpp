#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inflow/run.hpp"

using namespace inflow;

namespace {

struct Flags {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::string preset;
    std::string variant;
    std::string backbone;
    std::optional<std::size_t> lookback;
    std::optional<std::size_t> horizon;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seeds, "Seed; repeat for several")->take_all();
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--preset", f.preset, "Synthetic preset")
        ->check(CLI::IsMember({"synthetic-1", "synthetic-2", "synthetic-3"}));
}

void add_model(CLI::App* cmd, Flags& f) {
    cmd->add_option("--variant", f.variant, "inflow, inflow_t, inflow_j, realnvp, realnvp_c, revin, none");
    cmd->add_option("--backbone", f.backbone, "linear, mlp, nbeats_lite");
    cmd->add_option("--lookback", f.lookback, "Lookback length L")->check(CLI::PositiveNumber);
    cmd->add_option("--horizon", f.horizon, "Horizon length H")->check(CLI::PositiveNumber);
}

// Flags override config keys, which override defaults.
RunConfig resolve(const Flags& f) {
    RunConfig c = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
    if (!f.preset.empty()) {
        c.dataset.source = "synthetic";
        c.dataset.preset = f.preset;
        const auto seed = c.dataset.synthetic.seed;
        c.dataset.synthetic = SyntheticConfig::preset(f.preset);
        c.dataset.synthetic.seed = seed;
    }
    if (!f.variant.empty()) {
        c.model.variant = variant_from_string(f.variant);
        if (!c.requested_mode) c.train.mode = c.resolved_mode();
    }
    if (!f.backbone.empty()) c.model.backbone.kind = backbone_from_string(f.backbone);
    if (f.lookback) c.model.backbone.lookback = *f.lookback;
    if (f.horizon) c.model.backbone.horizon = *f.horizon;
    if (!f.seeds.empty()) c.seeds = f.seeds;
    if (!f.out.empty()) c.output_dir = f.out;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invertible normalization-flow forecasting pipeline"};
    app.require_subcommand(1);

    Flags flags;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    add_common(synth, flags);

    auto* train_cmd = app.add_subcommand("train", "Train one variant for each seed");
    add_common(train_cmd, flags);
    add_model(train_cmd, flags);

    bool trace = false;
    std::vector<std::size_t> trace_windows;
    std::string checkpoint;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate trained checkpoints on the test region");
    add_common(eval_cmd, flags);
    add_model(eval_cmd, flags);
    eval_cmd->add_flag("--trace", trace, "Dump forecast traces");
    eval_cmd->add_option("--trace-window", trace_windows, "Test window index to trace (default 0)")->take_all();
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (default: <out>/seed-N/checkpoint.bin)")
        ->check(CLI::ExistingFile);

    auto* ablate = app.add_subcommand("ablate", "Run every variant under shared seeds and data");
    add_common(ablate, flags);
    add_model(ablate, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            RunConfig c = resolve(flags);
            SyntheticConfig s = c.dataset.synthetic;
            if (!flags.seeds.empty()) s.seed = flags.seeds.front();
            cmd_synth(s, c.output_dir);
            std::cout << "wrote " << (c.output_dir / "series.csv").string() << " (tau " << s.tau << ")\n";
        } else if (train_cmd->parsed()) {
            const RunConfig c = resolve(flags);
            const TrainOutcome out = cmd_train(c);
            for (const auto& s : out.seeds)
                std::cout << "seed " << s.seed << ": best epoch " << s.report.best_epoch << ", val "
                          << s.report.best_val_loss << ", test mse " << s.test.mse << ", mae " << s.test.mae << '\n';
            std::cout << "test mse " << out.test.mse_mean << " +- " << out.test.mse_std << ", mae "
                      << out.test.mae_mean << " +- " << out.test.mae_std << '\n';
        } else if (eval_cmd->parsed()) {
            const RunConfig c = resolve(flags);
            EvalRequest req;
            req.run_dir = c.output_dir;
            if (!checkpoint.empty()) req.checkpoint = checkpoint;
            if (trace) req.trace_windows = trace_windows.empty() ? std::vector<std::size_t>{0} : trace_windows;
            const EvalOutcome out = cmd_eval(c, req);
            for (const auto& s : out.test.per_seed)
                std::cout << "seed " << s.seed << ": val " << out.val_loss.at(s.seed) << ", test mse " << s.mse
                          << ", mae " << s.mae << '\n';
            std::cout << "test mse " << out.test.mse_mean << " +- " << out.test.mse_std << ", mae "
                      << out.test.mae_mean << " +- " << out.test.mae_std << '\n';
            for (const auto& p : out.traces) std::cout << "trace " << p.string() << '\n';
        } else if (ablate->parsed()) {
            const RunConfig c = resolve(flags);
            const AblationTable table = cmd_ablate(c, threads_from_env());
            std::cout << table.to_csv();
            for (const auto& cell : table.cells)
                if (!cell.ok) std::cerr << to_string(cell.variant) << " failed: " << cell.error << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
