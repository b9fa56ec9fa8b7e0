#include "inflow/training.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "inflow/rng.hpp"

namespace inflow {

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::bilevel: return "bilevel";
        case TrainMode::joint: return "joint";
        case TrainMode::backbone_only: return "backbone_only";
    }
    return "unknown";
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "bilevel") return TrainMode::bilevel;
    if (s == "joint") return TrainMode::joint;
    if (s == "backbone_only") return TrainMode::backbone_only;
    throw ConfigError("unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
    if (!(inner_lr > 0.0) || !(outer_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1 || eval_batch < 1) throw ConfigError("batch sizes must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"inner_lr", inner_lr},     {"outer_lr", outer_lr}, {"batch_size", batch_size},
            {"patience", patience},     {"max_epochs", max_epochs}, {"seed", seed},
            {"mode", to_string(mode)},  {"grad_clip", grad_clip},   {"eval_batch", eval_batch}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.inner_lr = j.value("inner_lr", c.inner_lr);
    c.outer_lr = j.value("outer_lr", c.outer_lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    return c;
}

double loss_l2(const Tensor& y_hat, const Tensor& y) {
    if (y_hat.shape() != y.shape())
        throw DimensionError("loss shapes " + shape_string(y_hat.shape()) + " and " + shape_string(y.shape()) + " differ");
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y_hat[i] - y[i];
        total += d * d;
    }
    return total / static_cast<double>(y.size());
}

ad::Var loss_l2(ad::Var y_hat, ad::Var y) {
    if (y_hat.shape() != y.shape())
        throw DimensionError("loss shapes " + shape_string(y_hat.shape()) + " and " + shape_string(y.shape()) + " differ");
    return ad::mean_all(ad::square(y_hat - y));
}

Batch make_batch(const std::vector<WindowPair>& windows, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("empty batch");
    const WindowPair& first = windows.at(indices.front());
    const std::size_t L = first.x.dim(0), H = first.y.dim(0), D = first.x.dim(1);
    Batch b;
    b.role = first.role;
    b.first_anchor = b.last_anchor = first.anchor;
    std::vector<double> xs, ys;
    xs.reserve(indices.size() * L * D);
    ys.reserve(indices.size() * H * D);
    for (auto i : indices) {
        const WindowPair& w = windows.at(i);
        if (w.role != b.role) throw ContractError("batch mixes windows from different splits");
        xs.insert(xs.end(), w.x.data().begin(), w.x.data().end());
        ys.insert(ys.end(), w.y.data().begin(), w.y.data().end());
        b.first_anchor = std::min(b.first_anchor, w.anchor);
        b.last_anchor = std::max(b.last_anchor, w.anchor);
    }
    b.x = Tensor({indices.size(), L, D}, std::move(xs));
    b.y = Tensor({indices.size(), H, D}, std::move(ys));
    return b;
}

Batch make_batch(const std::vector<WindowPair>& windows, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return make_batch(windows, idx);
}

BiLevelState::BiLevelState(Pipeline& pipeline, const TrainConfig& cfg)
    : config(cfg), theta(pipeline.theta()), phi(pipeline.phi()) {
    config.validate();
    for (auto* p : theta) theta_adam.emplace_back(p->value.shape(), AdamConfig{cfg.inner_lr});
    for (auto* p : phi) phi_adam.emplace_back(p->value.shape(), AdamConfig{cfg.outer_lr});
}

namespace {

std::string anchor_range(const Batch& b) {
    return "anchors [" + std::to_string(b.first_anchor) + ", " + std::to_string(b.last_anchor) + "]";
}

// Returns true when the gradients were rescaled.
bool clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    if (max_norm <= 0.0) return false;
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (!(norm > max_norm)) return false;
    const double factor = max_norm / norm;
    for (auto& g : grads)
        for (double& v : g.data()) v *= factor;
    return true;
}

// Computes grads for `group`; on failure nothing is updated.
void apply_updates(BiLevelState& state, const ad::Tape& tape, std::vector<Parameter*>& group,
                   std::vector<AdamState>& adam) {
    std::vector<Tensor> grads;
    grads.reserve(group.size());
    for (auto* p : group) grads.push_back(tape.grad(*p));
    for (const auto& g : grads)
        if (!g.all_finite()) throw NumericError("non-finite gradient");
    if (clip_global_norm(grads, state.config.grad_clip)) ++state.clipped_updates;
    for (std::size_t i = 0; i < group.size(); ++i) adam_step(adam[i], group[i]->value, grads[i]);
}

double loss_and_backward(ad::Tape& tape, Pipeline& pipeline, const Batch& batch) {
    ad::Var pred = pipeline.predict(tape, tape.constant(batch.x));
    ad::Var loss = loss_l2(pred, tape.constant(batch.y));
    const double value = loss.value().item();
    if (!std::isfinite(value)) throw NumericError("non-finite loss");
    tape.backward(loss);
    return value;
}

}  // namespace

StepLosses bilevel_step(BiLevelState& state, Pipeline& pipeline, const Batch& inner, const Batch& outer) {
    if (inner.role != WindowRole::inner_train)
        throw ContractError("theta update must use inner_train windows, got " + to_string(inner.role));
    if (outer.role != WindowRole::outer_val)
        throw ContractError("phi update must use outer_val windows, got " + to_string(outer.role));
    StepLosses losses;
    {
        ad::Tape tape;
        tape.freeze(state.phi);
        try {
            losses.inner = loss_and_backward(tape, pipeline, inner);
            apply_updates(state, tape, state.theta, state.theta_adam);
        } catch (const NumericError& e) {
            throw NumericError(std::string("theta sub-step, inner_train ") + anchor_range(inner) + ": " + e.what());
        }
        state.updates.push_back({ParamGroup::theta, inner.role, inner.first_anchor, inner.last_anchor});
    }
    if (state.phi.empty()) return losses;
    {
        ad::Tape tape;
        tape.freeze(state.theta);
        try {
            losses.outer = loss_and_backward(tape, pipeline, outer);
            apply_updates(state, tape, state.phi, state.phi_adam);
        } catch (const NumericError& e) {
            throw NumericError(std::string("phi sub-step, outer_val ") + anchor_range(outer) + ": " + e.what());
        }
        state.updates.push_back({ParamGroup::phi, outer.role, outer.first_anchor, outer.last_anchor});
    }
    return losses;
}

double joint_step(BiLevelState& state, Pipeline& pipeline, const Batch& inner) {
    if (inner.role != WindowRole::inner_train)
        throw ContractError("joint update must use inner_train windows, got " + to_string(inner.role));
    ad::Tape tape;
    if (state.config.mode == TrainMode::backbone_only) tape.freeze(state.phi);
    double loss = 0.0;
    try {
        loss = loss_and_backward(tape, pipeline, inner);
        // Check both groups before touching either.
        for (auto* p : state.theta)
            if (!tape.grad(*p).all_finite()) throw NumericError("non-finite gradient");
        for (auto* p : state.phi)
            if (!tape.grad(*p).all_finite()) throw NumericError("non-finite gradient");
        apply_updates(state, tape, state.theta, state.theta_adam);
        if (state.config.mode != TrainMode::backbone_only) apply_updates(state, tape, state.phi, state.phi_adam);
    } catch (const NumericError& e) {
        throw NumericError(std::string("joint step, inner_train ") + anchor_range(inner) + ": " + e.what());
    }
    state.updates.push_back({ParamGroup::theta, inner.role, inner.first_anchor, inner.last_anchor});
    if (state.config.mode != TrainMode::backbone_only && !state.phi.empty())
        state.updates.push_back({ParamGroup::phi, inner.role, inner.first_anchor, inner.last_anchor});
    return loss;
}

double mean_loss(Pipeline& pipeline, const std::vector<WindowPair>& windows, std::size_t chunk) {
    if (windows.empty()) throw ContractError("mean_loss over zero windows");
    pipeline.set_training(false);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t begin = 0; begin < windows.size(); begin += chunk) {
        const Batch b = make_batch(windows, begin, std::min(begin + chunk, windows.size()));
        const Tensor pred = pipeline.predict(b.x);
        total += loss_l2(pred, b.y) * static_cast<double>(b.y.size());
        count += b.y.size();
    }
    pipeline.set_training(true);
    return total / static_cast<double>(count);
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& e : loss_history)
        history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    nlohmann::json j = {{"loss_history", history},
                        {"best_epoch", best_epoch},
                        {"seed", seed},
                        {"config_hash", config_hash},
                        {"mode", to_string(mode)},
                        {"grad_clip", grad_clip},
                        {"clipped_updates", clipped_updates},
                        {"theta_updates", theta_updates},
                        {"phi_updates", phi_updates},
                        {"diagnostics", diagnostics}};
    j["best_val_loss"] = std::isfinite(best_val_loss) ? nlohmann::json(best_val_loss) : nlohmann::json(nullptr);
    return j;
}

std::string RunReport::loss_csv() const {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n" << std::setprecision(17);
    for (const auto& e : loss_history) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
    return out.str();
}

RunReport train(Pipeline& pipeline, const WindowSet& windows, const TrainConfig& config) {
    config.validate();
    if (windows.inner_train.empty()) throw ConfigError("no inner_train windows");
    if (windows.validation.empty()) throw ConfigError("no validation windows for early stopping");
    if (config.mode == TrainMode::bilevel && windows.outer_val.empty())
        throw ConfigError("bilevel training needs outer_val windows");

    BiLevelState state(pipeline, config);
    RunReport report;
    report.seed = config.seed;
    report.mode = config.mode;
    report.grad_clip = config.grad_clip;

    auto params = pipeline.state();
    std::vector<Tensor> best;
    for (auto* p : params) best.push_back(p->value);

    Rng loader(derive_seed(config.seed, 3));
    std::vector<std::size_t> inner_order(windows.inner_train.size());
    std::vector<std::size_t> outer_order(windows.outer_val.size());
    for (std::size_t i = 0; i < inner_order.size(); ++i) inner_order[i] = i;
    for (std::size_t i = 0; i < outer_order.size(); ++i) outer_order[i] = i;
    loader.shuffle(outer_order);

    pipeline.set_training(true);
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        loader.shuffle(inner_order);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        try {
            for (state.inner_batch_cursor = 0; state.inner_batch_cursor < inner_order.size();) {
                const std::size_t end = std::min(state.inner_batch_cursor + config.batch_size, inner_order.size());
                const std::span<const std::size_t> idx(inner_order.data() + state.inner_batch_cursor,
                                                       end - state.inner_batch_cursor);
                state.inner_batch_cursor = end;
                const Batch inner = make_batch(windows.inner_train, idx);
                double loss = 0.0;
                if (config.mode == TrainMode::bilevel) {
                    // The outer loader cycles independently and reshuffles on wrap.
                    std::vector<std::size_t> outer_idx;
                    const std::size_t n = std::min(config.batch_size, outer_order.size());
                    while (outer_idx.size() < n) {
                        if (state.outer_batch_cursor == outer_order.size()) {
                            state.outer_batch_cursor = 0;
                            loader.shuffle(outer_order);
                        }
                        outer_idx.push_back(outer_order[state.outer_batch_cursor++]);
                    }
                    loss = bilevel_step(state, pipeline, inner, make_batch(windows.outer_val, outer_idx)).inner;
                } else {
                    loss = joint_step(state, pipeline, inner);
                }
                loss_sum += loss * static_cast<double>(idx.size());
                loss_count += idx.size();
            }
        } catch (const NumericError& e) {
            report.diagnostics.push_back("epoch " + std::to_string(epoch) + " aborted: " + e.what());
        }
        const double train_loss =
            loss_count ? loss_sum / static_cast<double>(loss_count) : std::numeric_limits<double>::quiet_NaN();
        const double val_loss = mean_loss(pipeline, windows.validation, config.eval_batch);
        state.loss_history.push_back({epoch, train_loss, val_loss});

        if (val_loss < state.best_val_loss) {
            state.best_val_loss = val_loss;
            state.epochs_since_improve = 0;
            report.best_epoch = epoch;
            for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
        } else if (++state.epochs_since_improve >= config.patience) {
            break;
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];

    report.loss_history = state.loss_history;
    if (report.best_epoch > 0) report.best_val_loss = state.best_val_loss;
    report.clipped_updates = state.clipped_updates;
    report.updates = state.updates;
    for (const auto& u : state.updates) (u.group == ParamGroup::theta ? report.theta_updates : report.phi_updates)++;
    return report;
}

}  // namespace inflow
