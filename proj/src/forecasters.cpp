#include "inflow/forecasters.hpp"

namespace inflow {

using ad::Tape;
using ad::Var;

std::string to_string(BackboneKind k) {
    switch (k) {
        case BackboneKind::linear: return "linear";
        case BackboneKind::mlp: return "mlp";
        case BackboneKind::nbeats_lite: return "nbeats_lite";
    }
    return "unknown";
}

BackboneKind backbone_from_string(const std::string& s) {
    if (s == "linear") return BackboneKind::linear;
    if (s == "mlp") return BackboneKind::mlp;
    if (s == "nbeats_lite" || s == "nbeats") return BackboneKind::nbeats_lite;
    throw ConfigError("unknown backbone '" + s + "'");
}

void ForecasterConfig::validate() const {
    if (lookback < 1 || horizon < 1 || variates < 1)
        throw ConfigError("forecaster needs lookback, horizon and variates >= 1");
    if (hidden_width < 1 || depth < 1 || nbeats_depth < 1 || nbeats_blocks < 1)
        throw ConfigError("forecaster hidden_width, depth, nbeats_depth and nbeats_blocks must be >= 1");
}

Var Forecaster::forecast(Tape& tape, Var x) {
    const auto& c = config_;
    const Shape& s = x.shape();
    if (s.size() != 3 || s[1] != c.lookback || s[2] != c.variates)
        throw DimensionError("forecaster expects [batch, " + std::to_string(c.lookback) + ", " +
                             std::to_string(c.variates) + "], got " + shape_string(s));
    const std::size_t batch = s[0];
    if (c.per_variate) {
        // [B, L, D] -> [B, D, L] -> [B*D, L]: every variate is its own sample.
        Var rows = ad::reshape(ad::transpose_last2(x), {batch * c.variates, c.lookback});
        Var out = forward_rows(tape, rows);
        return ad::transpose_last2(ad::reshape(out, {batch, c.variates, c.horizon}));
    }
    Var rows = ad::reshape(x, {batch, c.lookback * c.variates});
    return ad::reshape(forward_rows(tape, rows), {batch, c.horizon, c.variates});
}

// ---------------------------------------------------------------------------

LinearForecaster::LinearForecaster(const ForecasterConfig& config, Rng& rng) : Forecaster(config) {
    config.validate();
    const std::size_t n = config.per_variate ? 1 : config.variates;
    maps_.reserve(n);
    for (std::size_t d = 0; d < n; ++d) {
        const std::string name = config.per_variate ? "theta/linear" : "theta/linear/variate" + std::to_string(d);
        maps_.emplace_back(name, config.lookback, config.horizon, rng);
    }
}

Var LinearForecaster::forecast(Tape& tape, Var x) {
    if (config_.per_variate) return Forecaster::forecast(tape, x);
    const Shape& s = x.shape();
    if (s.size() != 3 || s[1] != config_.lookback || s[2] != config_.variates)
        throw DimensionError("forecaster expects [batch, " + std::to_string(config_.lookback) + ", " +
                             std::to_string(config_.variates) + "], got " + shape_string(s));
    std::vector<Var> outs;
    for (std::size_t d = 0; d < config_.variates; ++d) {
        Var col = ad::reshape(ad::slice(x, 2, d, d + 1), {s[0], config_.lookback});
        outs.push_back(ad::reshape(maps_[d](tape, col), {s[0], config_.horizon, 1}));
    }
    return ad::concat(outs, 2);
}

Var LinearForecaster::forward_rows(Tape& tape, Var rows) { return maps_.front()(tape, rows); }

std::vector<Parameter*> LinearForecaster::parameters() {
    std::vector<Parameter*> out;
    for (auto& m : maps_) m.collect(out);
    return out;
}

// ---------------------------------------------------------------------------

MlpForecaster::MlpForecaster(const ForecasterConfig& config, Rng& rng) : Forecaster(config) {
    config.validate();
    const std::size_t in = config.per_variate ? config.lookback : config.lookback * config.variates;
    const std::size_t out = config.per_variate ? config.horizon : config.horizon * config.variates;
    std::vector<std::size_t> widths{in};
    for (std::size_t i = 0; i < config.depth; ++i) widths.push_back(config.hidden_width);
    widths.push_back(out);
    net_ = std::make_unique<Mlp>("theta/mlp", widths, Activation::relu, rng);
}

Var MlpForecaster::forward_rows(Tape& tape, Var rows) { return (*net_)(tape, rows); }

std::vector<Parameter*> MlpForecaster::parameters() {
    std::vector<Parameter*> out;
    net_->collect(out);
    return out;
}

// ---------------------------------------------------------------------------

NBeatsLiteForecaster::NBeatsLiteForecaster(const ForecasterConfig& config, Rng& rng) : Forecaster(config) {
    config.validate();
    const std::size_t in = config.per_variate ? config.lookback : config.lookback * config.variates;
    const std::size_t out = config.per_variate ? config.horizon : config.horizon * config.variates;
    for (std::size_t b = 0; b < config.nbeats_blocks; ++b) {
        const std::string prefix = "theta/nbeats/block" + std::to_string(b);
        std::vector<std::size_t> widths{in};
        for (std::size_t i = 0; i < config.nbeats_depth; ++i) widths.push_back(config.hidden_width);
        Block block;
        // Mlp leaves its last layer linear; forward_rows applies the trunk's final relu.
        block.trunk = std::make_unique<Mlp>(prefix + "/trunk", widths, Activation::relu, rng);
        block.backcast = std::make_unique<Dense>(prefix + "/backcast", config.hidden_width, in, rng);
        block.forecast = std::make_unique<Dense>(prefix + "/forecast", config.hidden_width, out, rng);
        blocks_.push_back(std::move(block));
    }
}

Var NBeatsLiteForecaster::forward_rows(Tape& tape, Var rows) {
    Var residual = rows;
    Var total;
    for (auto& block : blocks_) {
        Var hidden = ad::relu((*block.trunk)(tape, residual));
        residual = residual - (*block.backcast)(tape, hidden);
        Var f = (*block.forecast)(tape, hidden);
        total = total.valid() ? total + f : f;
    }
    last_residual_ = residual.value();
    return total;
}

std::vector<Parameter*> NBeatsLiteForecaster::parameters() {
    std::vector<Parameter*> out;
    for (auto& block : blocks_) {
        block.trunk->collect(out);
        block.backcast->collect(out);
        block.forecast->collect(out);
    }
    return out;
}

std::unique_ptr<Forecaster> make_forecaster(const ForecasterConfig& config, Rng& rng) {
    switch (config.kind) {
        case BackboneKind::linear: return std::make_unique<LinearForecaster>(config, rng);
        case BackboneKind::mlp: return std::make_unique<MlpForecaster>(config, rng);
        case BackboneKind::nbeats_lite: return std::make_unique<NBeatsLiteForecaster>(config, rng);
    }
    throw ConfigError("unknown backbone kind");
}

}  // namespace inflow
