#pragma once

#include <memory>
#include <string>
#include <vector>

#include "inflow/nn.hpp"

namespace inflow {

enum class BackboneKind { linear, mlp, nbeats_lite };

std::string to_string(BackboneKind k);
BackboneKind backbone_from_string(const std::string& s);

struct ForecasterConfig {
    BackboneKind kind = BackboneKind::mlp;
    std::size_t lookback = 48;
    std::size_t horizon = 48;
    std::size_t variates = 1;
    std::size_t hidden_width = 256;
    /// Hidden layers of the mlp backbone.
    std::size_t depth = 3;
    /// Fully-connected layers per nbeats_lite block.
    std::size_t nbeats_depth = 4;
    std::size_t nbeats_blocks = 3;
    /// Process each variate as an independent univariate series with shared weights.
    bool per_variate = true;

    void validate() const;
};

/// Backbone f: [batch, L, D] -> [batch, H, D] operating in the transformed space.
class Forecaster {
public:
    explicit Forecaster(ForecasterConfig config) : config_(config) {}
    virtual ~Forecaster() = default;

    virtual ad::Var forecast(ad::Tape& tape, ad::Var x);
    virtual std::vector<Parameter*> parameters() = 0;

    const ForecasterConfig& config() const { return config_; }

protected:
    /// rows: [n, in] -> [n, out]; in/out are L/H per variate or L*D/H*D flattened.
    virtual ad::Var forward_rows(ad::Tape& tape, ad::Var rows) = 0;

    ForecasterConfig config_;
};

/// One affine map L -> H per variate.
class LinearForecaster final : public Forecaster {
public:
    LinearForecaster(const ForecasterConfig& config, Rng& rng);
    ad::Var forecast(ad::Tape& tape, ad::Var x) override;
    std::vector<Parameter*> parameters() override;
    /// Non-shared mode keeps a separate map per variate.
    Dense& map(std::size_t variate = 0) { return maps_.at(variate); }

protected:
    ad::Var forward_rows(ad::Tape& tape, ad::Var rows) override;

private:
    std::vector<Dense> maps_;
};

class MlpForecaster final : public Forecaster {
public:
    MlpForecaster(const ForecasterConfig& config, Rng& rng);
    std::vector<Parameter*> parameters() override;

protected:
    ad::Var forward_rows(ad::Tape& tape, ad::Var rows) override;

private:
    std::unique_ptr<Mlp> net_;
};

/// Generic N-BEATS: fully-connected blocks with backcast/forecast heads,
/// doubly residual (input minus backcast feeds the next block, forecasts sum).
class NBeatsLiteForecaster final : public Forecaster {
public:
    struct Block {
        std::unique_ptr<Mlp> trunk;
        std::unique_ptr<Dense> backcast;
        std::unique_ptr<Dense> forecast;
    };

    NBeatsLiteForecaster(const ForecasterConfig& config, Rng& rng);
    std::vector<Parameter*> parameters() override;
    std::vector<Block>& blocks() { return blocks_; }

    /// Residual left after the last block for the most recent forecast() call.
    const Tensor& last_residual() const { return last_residual_; }

protected:
    ad::Var forward_rows(ad::Tape& tape, ad::Var rows) override;

private:
    std::vector<Block> blocks_;
    Tensor last_residual_;
};

std::unique_ptr<Forecaster> make_forecaster(const ForecasterConfig& config, Rng& rng);

}  // namespace inflow
