#include "inflow/run.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "inflow/baselines.hpp"
#include "inflow/checkpoint.hpp"
#include "inflow/rng.hpp"

namespace inflow {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path seed_dir(const fs::path& run_dir, std::uint64_t seed) { return run_dir / ("seed-" + std::to_string(seed)); }

EvalOptions eval_options(const PreparedData& data) {
    EvalOptions opt;
    opt.zscored = data.dataset.zscored;
    opt.stats = data.stats ? &*data.stats : nullptr;
    return opt;
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
    PreparedData out;
    if (config.dataset.source == "synthetic") {
        out.dataset = generate_synthetic(config.dataset.synthetic);
        out.dataset.provenance["preset"] = config.dataset.preset;
    } else {
        out.dataset = load_csv(config.dataset.csv_path, config.dataset.columns, config.dataset.ratios);
    }
    if (config.dataset.zscore) {
        auto [ds, stats] = zscore_fit_apply(out.dataset);
        out.dataset = std::move(ds);
        out.stats = std::move(stats);
    }
    out.manifest = dataset_manifest(out.dataset);
    if (out.stats) out.manifest["zscore"] = out.stats->to_json();
    return out;
}

WindowSet build_windows(const PreparedData& data, const RunConfig& config) {
    WindowOptions opt;
    opt.lookback = config.model.backbone.lookback;
    opt.horizon = config.model.backbone.horizon;
    opt.use_bilevel = config.train.mode == TrainMode::bilevel;
    opt.stride = config.stride;
    return make_windows(data.dataset, opt);
}

std::unique_ptr<Transform> make_transform(const ModelSection& model, std::size_t variates, Rng& rng) {
    switch (model.variant) {
        case Variant::inflow:
        case Variant::inflow_j:
            return make_flow_stack(FlowVariant::pre_norm, model.blocks, variates, model.flow, rng);
        case Variant::inflow_t:
            return make_flow_stack(FlowVariant::post_norm, model.blocks, variates, model.flow, rng);
        case Variant::realnvp:
            return make_flow_stack(FlowVariant::batch_norm, model.blocks, variates, model.flow, rng);
        case Variant::realnvp_c:
            return make_flow_stack(FlowVariant::coupling_only, model.blocks, variates, model.flow, rng);
        case Variant::revin: return std::make_unique<RevInTransform>(variates, true, model.flow.eps);
        case Variant::none: return std::make_unique<IdentityTransform>();
    }
    throw ConfigError("unhandled variant");
}

std::unique_ptr<Pipeline> build_pipeline(const ModelSection& model, std::size_t variates, std::uint64_t seed) {
    ForecasterConfig fc = model.backbone;
    fc.variates = variates;
    Rng forecaster_rng(derive_seed(seed, 1));
    Rng transform_rng(derive_seed(seed, 2));
    auto forecaster = make_forecaster(fc, forecaster_rng);
    auto transform = make_transform(model, variates, transform_rng);
    return std::make_unique<Pipeline>(std::move(transform), std::move(forecaster));
}

void write_run_header(const RunConfig& config, const PreparedData& data, const fs::path& run_dir) {
    fs::create_directories(run_dir);
    write_json(run_dir / "config.json", config.to_json());
    nlohmann::json manifest = data.manifest;
    manifest["config_hash"] = config.content_hash();
    manifest["variant"] = to_string(config.model.variant);
    manifest["mode"] = to_string(config.train.mode);
    manifest["seeds"] = config.seeds;
    write_json(run_dir / "manifest.json", manifest);
}

SeedOutcome run_seed(const RunConfig& config, const PreparedData& data, const WindowSet& windows, std::uint64_t seed,
                     const std::optional<fs::path>& run_dir) {
    auto pipeline = build_pipeline(config.model, data.dataset.variates(), seed);
    TrainConfig tc = config.train;
    tc.seed = seed;

    SeedOutcome out;
    out.seed = seed;
    out.anchor_hash = windows.anchor_hash();
    out.report = train(*pipeline, windows, tc);
    out.report.config_hash = config.content_hash();
    out.test = evaluate(*pipeline, windows.test, eval_options(data));
    out.test.per_seed = {{seed, out.test.mse, out.test.mae}};

    if (run_dir) {
        const fs::path dir = seed_dir(*run_dir, seed);
        fs::create_directories(dir);
        const nlohmann::json meta = {{"variant", to_string(config.model.variant)},
                                     {"backbone", to_string(config.model.backbone.kind)},
                                     {"seed", seed},
                                     {"config_hash", out.report.config_hash},
                                     {"best_epoch", out.report.best_epoch},
                                     {"theta", pipeline->theta().size()},
                                     {"phi", pipeline->phi().size()}};
        save_checkpoint(dir / "checkpoint.bin", pipeline->state(), meta);
        nlohmann::json report = out.report.to_json();
        report["anchor_hash"] = out.anchor_hash;
        write_json(dir / "report.json", report);
        write_text(dir / "loss.csv", out.report.loss_csv());
        write_json(dir / "metrics.json", out.test.to_json());
    }
    return out;
}

void cmd_synth(const SyntheticConfig& cfg, const fs::path& out_dir) {
    const SeriesDataset ds = generate_synthetic(cfg);
    fs::create_directories(out_dir);
    write_csv(ds, out_dir / "series.csv");
    write_json(out_dir / "manifest.json", dataset_manifest(ds));
}

TrainOutcome cmd_train(const RunConfig& config) {
    config.validate();
    const PreparedData data = prepare_data(config);
    const WindowSet windows = build_windows(data, config);
    write_run_header(config, data, config.output_dir);
    TrainOutcome out;
    std::vector<SeedMetrics> per_seed;
    for (auto seed : config.seeds) {
        out.seeds.push_back(run_seed(config, data, windows, seed, config.output_dir));
        per_seed.push_back(out.seeds.back().test.per_seed.front());
    }
    out.test = aggregate_seeds(per_seed);
    write_json(config.output_dir / "metrics.json", out.test.to_json());
    return out;
}

EvalOutcome cmd_eval(const RunConfig& config, const EvalRequest& request) {
    config.validate();
    const PreparedData data = prepare_data(config);
    const WindowSet windows = build_windows(data, config);
    EvalOutcome out;
    std::vector<SeedMetrics> per_seed;
    for (auto seed : config.seeds) {
        auto pipeline = build_pipeline(config.model, data.dataset.variates(), seed);
        const fs::path ckpt = request.checkpoint.value_or(seed_dir(request.run_dir, seed) / "checkpoint.bin");
        load_checkpoint(ckpt, pipeline->state());
        out.val_loss[seed] = mean_loss(*pipeline, windows.validation, config.train.eval_batch);
        MetricReport m = evaluate(*pipeline, windows.test, eval_options(data));
        per_seed.push_back({seed, m.mse, m.mae});

        const fs::path dir = seed_dir(request.run_dir, seed);
        fs::create_directories(dir);
        for (auto idx : request.trace_windows) {
            if (idx >= windows.test.size())
                throw ConfigError("trace window " + std::to_string(idx) + " is out of range (" +
                                  std::to_string(windows.test.size()) + " test windows)");
            const TraceRecord trace = dump_forecast_trace(*pipeline, windows.test[idx]);
            const fs::path path = dir / ("trace-" + std::to_string(trace.anchor) + ".csv");
            write_text(path, trace.to_csv());
            out.traces.push_back(path);
        }
        nlohmann::json seed_metrics = m.to_json();
        seed_metrics["val_loss"] = out.val_loss[seed];
        write_json(dir / "eval.json", seed_metrics);
    }
    out.test = aggregate_seeds(per_seed);
    fs::create_directories(request.run_dir);
    write_json(request.run_dir / "eval.json", out.test.to_json());
    return out;
}

nlohmann::json AblationTable::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json row = {{"variant", to_string(c.variant)}, {"ok", c.ok}};
        if (c.ok) {
            const auto& t = c.outcome.test;
            row["mse_mean"] = t.mse_mean;
            row["mse_std"] = t.mse_std;
            row["mae_mean"] = t.mae_mean;
            row["mae_std"] = t.mae_std;
            row["per_seed"] = t.to_json()["per_seed"];
        } else {
            row["error"] = c.error;
        }
        rows.push_back(row);
    }
    return {{"rows", rows}};
}

std::string AblationTable::to_csv() const {
    std::ostringstream out;
    out << "variant,mse_mean,mse_std,mae_mean,mae_std,status\n" << std::setprecision(10);
    for (const auto& c : cells) {
        out << to_string(c.variant) << ',';
        if (c.ok) {
            const auto& t = c.outcome.test;
            out << t.mse_mean << ',' << t.mse_std << ',' << t.mae_mean << ',' << t.mae_std << ",ok\n";
        } else {
            out << ",,,,failed\n";
        }
    }
    return out.str();
}

AblationTable cmd_ablate(const RunConfig& config, std::size_t threads) {
    config.validate();
    const PreparedData data = prepare_data(config);

    AblationTable table;
    for (Variant v : ablation_roster()) table.cells.push_back({v, false, {}, {}});

    auto run_cell = [&](AblationCell& cell) {
        try {
            RunConfig rc = config;
            rc.model.variant = cell.variant;
            rc.requested_mode.reset();
            rc.train.mode = rc.resolved_mode();
            rc.output_dir = config.output_dir / to_string(cell.variant);
            const WindowSet windows = build_windows(data, rc);
            write_run_header(rc, data, rc.output_dir);
            std::vector<SeedMetrics> per_seed;
            for (auto seed : rc.seeds) {
                cell.outcome.seeds.push_back(run_seed(rc, data, windows, seed, rc.output_dir));
                per_seed.push_back(cell.outcome.seeds.back().test.per_seed.front());
            }
            cell.outcome.test = aggregate_seeds(per_seed);
            write_json(rc.output_dir / "metrics.json", cell.outcome.test.to_json());
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < table.cells.size(); i = next++) run_cell(table.cells[i]);
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, table.cells.size()));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    fs::create_directories(config.output_dir);
    write_json(config.output_dir / "ablation.json", table.to_json());
    write_text(config.output_dir / "ablation.csv", table.to_csv());
    return table;
}

std::size_t threads_from_env() {
    const char* v = std::getenv("INFLOW_THREADS");
    if (v == nullptr || *v == '\0') return 1;
    try {
        const long n = std::stol(v);
        return n < 1 ? 1 : static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError(std::string("INFLOW_THREADS must be a positive integer, got '") + v + "'");
    }
}

}  // namespace inflow
