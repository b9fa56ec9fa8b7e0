#include "inflow/pipeline.hpp"

namespace inflow {

Pipeline::Pipeline(std::unique_ptr<Transform> transform, std::unique_ptr<Forecaster> forecaster)
    : transform_(std::move(transform)), forecaster_(std::move(forecaster)) {
    if (!transform_ || !forecaster_) throw ContractError("pipeline needs a transform and a forecaster");
}

ad::Var Pipeline::predict(ad::Tape& tape, ad::Var x) { return predict_stages(tape, x).y_hat; }

Pipeline::Stages Pipeline::predict_stages(ad::Tape& tape, ad::Var x) {
    Stages s;
    s.x_tilde = transform_->forward(tape, x);
    s.y_tilde = forecaster_->forecast(tape, s.x_tilde);
    s.y_hat = transform_->inverse(tape, s.y_tilde);
    return s;
}

Tensor Pipeline::predict(const Tensor& x) {
    ad::Tape tape(false);
    return predict(tape, tape.constant(x)).value();
}

std::vector<Parameter*> Pipeline::state() {
    auto out = theta();
    for (auto* p : phi()) out.push_back(p);
    for (auto* p : buffers()) out.push_back(p);
    return out;
}

}  // namespace inflow
