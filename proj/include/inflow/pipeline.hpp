#pragma once

#include <memory>
#include <vector>

#include "inflow/forecasters.hpp"
#include "inflow/transform.hpp"

namespace inflow {

/// Transform -> forecast -> inverse transform.
class Pipeline {
public:
    struct Stages {
        ad::Var x_tilde;
        ad::Var y_tilde;
        ad::Var y_hat;
    };

    Pipeline(std::unique_ptr<Transform> transform, std::unique_ptr<Forecaster> forecaster);

    ad::Var predict(ad::Tape& tape, ad::Var x);
    Stages predict_stages(ad::Tape& tape, ad::Var x);
    /// Gradient-free prediction of a [batch, L, D] tensor.
    Tensor predict(const Tensor& x);

    Transform& transform() { return *transform_; }
    Forecaster& forecaster() { return *forecaster_; }

    std::vector<Parameter*> theta() { return forecaster_->parameters(); }
    std::vector<Parameter*> phi() { return transform_->parameters(); }
    std::vector<Parameter*> buffers() { return transform_->buffers(); }
    /// theta, then phi, then buffers; the order used for snapshots and checkpoints.
    std::vector<Parameter*> state();

    void set_training(bool training) { transform_->set_training(training); }

private:
    std::unique_ptr<Transform> transform_;
    std::unique_ptr<Forecaster> forecaster_;
};

}  // namespace inflow
