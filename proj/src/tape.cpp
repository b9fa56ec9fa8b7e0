#include "inflow/tape.hpp"

#include <atomic>

namespace inflow::ad {

namespace {
std::atomic<std::uint64_t> next_serial{1};
}

const Tensor& Var::value() const {
    if (!tape_) throw ContractError("use of an unbound Var");
    return tape_->value(*this);
}

Tape::Tape(bool grad_enabled) : grad_enabled_(grad_enabled), serial_(next_serial.fetch_add(1)) {}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("constant contains non-finite values");
    nodes_.push_back(Node{std::move(value), {}, {}, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
    if (!value.all_finite()) throw NumericError("variable contains non-finite values");
    nodes_.push_back(Node{std::move(value), {}, {}, grad_enabled_});
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
    if (auto it = param_leaf_.find(&p); it != param_leaf_.end()) return Var(this, it->second);
    if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' contains non-finite values");
    Var v = frozen_.contains(&p) ? constant(p.value) : variable(p.value);
    param_leaf_.emplace(&p, v.id());
    return v;
}

void Tape::freeze(const Parameter& p) { frozen_.insert(&p); }

void Tape::freeze(const std::vector<Parameter*>& ps) {
    for (auto* p : ps) frozen_.insert(p);
}

void Tape::check_owner(Var v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) throw ContractError("Var does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
    check_owner(v);
    return nodes_[v.id()].value;
}

bool Tape::requires_grad(Var v) const {
    check_owner(v);
    return nodes_[v.id()].requires_grad;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
    if (!value.all_finite()) throw NumericError("operation produced non-finite values");
    Node node{std::move(value), {}, {}, false};
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        check_owner(in);
        node.inputs.push_back(in.id());
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad && grad_enabled_) node.backward = std::move(fn);
    else node.requires_grad = false;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
    if (!has_grad_[id]) {
        grads_[id] = Tensor(nodes_[id].value.shape(), 0.0);
        has_grad_[id] = true;
    }
    return grads_[id];
}

void Tape::backward(Var loss) {
    check_owner(loss);
    if (!grad_enabled_) throw ContractError("backward() on a tape with gradients disabled");
    if (backward_done_) throw ContractError("backward() already ran on this tape");
    if (nodes_[loss.id()].value.size() != 1)
        throw ContractError("backward() needs a scalar loss, got shape " +
                            shape_string(nodes_[loss.id()].value.shape()));
    backward_done_ = true;
    grads_.assign(nodes_.size(), Tensor());
    has_grad_.assign(nodes_.size(), false);
    grad_buffer(loss.id()).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!has_grad_[i] || !node.backward) continue;
        // Callbacks only write into input slots, which precede i.
        Tensor out_grad = std::move(grads_[i]);
        node.backward(*this, out_grad);
        grads_[i] = std::move(out_grad);
    }
}

Tensor Tape::grad(Var v) const {
    check_owner(v);
    if (v.id() < has_grad_.size() && has_grad_[v.id()]) return grads_[v.id()];
    return Tensor(nodes_[v.id()].value.shape(), 0.0);
}

Tensor Tape::grad(const Parameter& p) const {
    auto it = param_leaf_.find(&p);
    if (it == param_leaf_.end()) return Tensor(p.value.shape(), 0.0);
    return grad(Var(const_cast<Tape*>(this), it->second));
}

}  // namespace inflow::ad
