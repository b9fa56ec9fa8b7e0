#include "inflow/eval.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "inflow/training.hpp"

namespace inflow {

namespace {

void check_same(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("metric shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace

double mean_squared_error(const Tensor& pred, const Tensor& truth) {
    check_same(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

double mean_absolute_error(const Tensor& pred, const Tensor& truth) {
    check_same(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : per_seed) seeds.push_back({{"seed", s.seed}, {"mse", s.mse}, {"mae", s.mae}});
    nlohmann::json j = {{"mse", mse},           {"mae", mae},           {"per_seed", seeds},
                        {"mse_mean", mse_mean}, {"mse_std", mse_std},   {"mae_mean", mae_mean},
                        {"mae_std", mae_std},   {"reported_mse", reported_mse()}, {"reported_mae", reported_mae()}};
    j["mse_scale"] = mse_scale ? nlohmann::json(*mse_scale) : nlohmann::json(nullptr);
    j["mae_scale"] = mae_scale ? nlohmann::json(*mae_scale) : nlohmann::json(nullptr);
    return j;
}

MetricReport evaluate(Pipeline& pipeline, const std::vector<WindowPair>& windows, const EvalOptions& options) {
    if (options.zscored && options.stats == nullptr)
        throw ContractError("windows are z-scored but no z-score statistics were provided");
    if (windows.empty()) throw ContractError("evaluate over zero windows");
    pipeline.set_training(false);
    double se = 0.0, ae = 0.0;
    std::size_t count = 0;
    for (std::size_t begin = 0; begin < windows.size(); begin += options.chunk) {
        const Batch b = make_batch(windows, begin, std::min(begin + options.chunk, windows.size()));
        Tensor pred = pipeline.predict(b.x);
        Tensor truth = b.y;
        if (options.zscored) {
            pred = options.stats->invert(pred);
            truth = options.stats->invert(truth);
        }
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - truth[i];
            se += d * d;
            ae += std::abs(d);
        }
        count += pred.size();
    }
    pipeline.set_training(true);
    MetricReport r;
    r.mse = se / static_cast<double>(count);
    r.mae = ae / static_cast<double>(count);
    r.mse_scale = options.mse_scale;
    r.mae_scale = options.mae_scale;
    r.mse_mean = r.mse;
    r.mae_mean = r.mae;
    return r;
}

MetricReport aggregate_seeds(const std::vector<SeedMetrics>& seeds, std::optional<double> mse_scale,
                             std::optional<double> mae_scale) {
    if (seeds.empty()) throw ContractError("aggregation needs at least one seed");
    std::vector<double> mse, mae;
    for (const auto& s : seeds) {
        mse.push_back(s.mse);
        mae.push_back(s.mae);
    }
    MetricReport r;
    r.per_seed = seeds;
    std::tie(r.mse_mean, r.mse_std) = mean_std(mse);
    std::tie(r.mae_mean, r.mae_std) = mean_std(mae);
    r.mse = r.mse_mean;
    r.mae = r.mae_mean;
    r.mse_scale = mse_scale;
    r.mae_scale = mae_scale;
    return r;
}

std::string TraceRecord::to_csv() const {
    std::ostringstream out;
    out << "step_index,stage,variate,value\n" << std::setprecision(17);
    auto emit = [&](const Tensor& t, const char* stage, std::size_t offset) {
        for (std::size_t s = 0; s < t.dim(0); ++s)
            for (std::size_t d = 0; d < t.dim(1); ++d)
                out << offset + s << ',' << stage << ',' << d << ',' << t.at(s, d) << '\n';
    };
    emit(x, "x", 0);
    emit(x_tilde, "x_tilde", 0);
    emit(y_tilde, "y_tilde", lookback);
    emit(y_hat, "y_hat", lookback);
    emit(y, "y", lookback);
    return out.str();
}

TraceRecord dump_forecast_trace(Pipeline& pipeline, const WindowPair& window) {
    const std::size_t L = window.x.dim(0), H = window.y.dim(0), D = window.x.dim(1);
    pipeline.set_training(false);
    ad::Tape tape(false);
    auto stages = pipeline.predict_stages(tape, tape.constant(window.x.reshaped({1, L, D})));
    pipeline.set_training(true);
    TraceRecord r;
    r.anchor = window.anchor;
    r.lookback = L;
    r.horizon = H;
    r.variates = D;
    r.x = window.x;
    r.x_tilde = stages.x_tilde.value().reshaped({L, D});
    r.y_tilde = stages.y_tilde.value().reshaped({H, D});
    r.y_hat = stages.y_hat.value().reshaped({H, D});
    r.y = window.y;
    return r;
}

}  // namespace inflow
