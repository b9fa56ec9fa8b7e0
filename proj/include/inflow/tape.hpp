#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "inflow/tensor.hpp"

namespace inflow {

/// A named learnable (or buffered) tensor owned by a layer.
struct Parameter {
    std::string name;
    Tensor value;
};

namespace ad {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    /// By value: recording further nodes may move the underlying storage.
    Shape shape() const { return value().shape(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/**
 * Append-only record of operations for reverse-mode differentiation.
 *
 * A tape lives for one training step. Nodes are recorded in evaluation
 * order, so every node's inputs precede it; backward() walks the record
 * once in reverse.
 */
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    explicit Tape(bool grad_enabled = true);
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }
    std::uint64_t serial() const noexcept { return serial_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Tensor value);
    /// Leaf that receives a gradient.
    Var variable(Tensor value);
    /// Leaf bound to a parameter. Repeated calls return the same leaf so
    /// gradients from every use accumulate. Frozen parameters become constants.
    Var parameter(Parameter& p);

    void freeze(const Parameter& p);
    void freeze(const std::vector<Parameter*>& ps);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;

    /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
    void backward(Var loss);

    /// Gradient of the last backward() target with respect to v (zeros if unreachable).
    Tensor grad(Var v) const;
    Tensor grad(const Parameter& p) const;

    // Used by operation implementations.
    Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);
    Tensor& grad_buffer(std::size_t id);
    void check_owner(Var v) const;

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    bool grad_enabled_;
    bool backward_done_ = false;
    std::uint64_t serial_;
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<bool> has_grad_;
    std::unordered_map<const Parameter*, std::size_t> param_leaf_;
    std::unordered_set<const Parameter*> frozen_;
};

}  // namespace ad
}  // namespace inflow
