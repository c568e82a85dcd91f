#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "odekws/errors.hpp"
#include "odekws/tensor.hpp"

namespace odekws {

/// A named weight tensor with its gradient accumulator.
template <class Real>
struct Parameter {
    std::string name;
    Tensor<Real> tensor;
    Tensor<Real> gradient;

    Parameter() = default;
    Parameter(std::string n, Tensor<Real> t)
        : name(std::move(n)), tensor(std::move(t)), gradient(tensor.dims()) {}

    void zero_grad() { gradient.fill(Real(0)); }
};

/// Handle to a node on a Tape.
struct Value {
    int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

/// Record of executed primitive operations, replayable in reverse to
/// produce gradients of a scalar output with respect to every Parameter
/// reached. With recording off the tape still carries values (one code
/// path for training and inference) but stores no backward closures.
template <class Real>
class Tape {
public:
    // backward closure: receives the tape and the upstream gradient of
    // this node's output, and accumulates into input grads / parameters
    using BackwardFn = std::function<void(Tape&, const Tensor<Real>&)>;

    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    size_t size() const { return nodes_.size(); }

    /// Drop every node at or above `mark`. Used by the adaptive solver to
    /// discard rejected trial steps.
    void truncate(size_t mark) {
        if (mark > nodes_.size()) throw GraphError("truncate past end of tape");
        nodes_.resize(mark);
    }

    void clear() {
        nodes_.clear();
        grads_.clear();
    }

    /// A leaf that receives no gradient (inputs, constants).
    Value leaf(Tensor<Real> v) { return push(std::move(v), nullptr); }

    /// A leaf that routes its gradient into the Parameter. The Parameter
    /// must outlive the backward pass.
    Value watch(Parameter<Real>& p) {
        Parameter<Real>* pp = &p;
        Tensor<Real> copy = p.tensor;
        if (!recording_) return push(std::move(copy), nullptr);
        return push(std::move(copy),
                    [pp](Tape&, const Tensor<Real>& g) { pp->gradient += g; });
    }

    Value push(Tensor<Real> v, BackwardFn back) {
        nodes_.push_back(Node{std::move(v), recording_ ? std::move(back) : nullptr});
        return Value{static_cast<int32_t>(nodes_.size() - 1)};
    }

    const Tensor<Real>& value(Value v) const {
        check(v);
        return nodes_[static_cast<size_t>(v.idx)].value;
    }

    const std::vector<int>& dims(Value v) const { return value(v).dims(); }

    /// Accumulate `g` into the gradient slot of node `v`. Only meaningful
    /// inside a backward sweep; closures call it for their inputs.
    void accumulate(Value v, const Tensor<Real>& g) {
        auto i = slot(v);
        if (grads_[i].empty())
            grads_[i] = g;
        else
            grads_[i] += g;
    }

    void accumulate(Value v, Tensor<Real>&& g) {
        auto i = slot(v);
        if (grads_[i].empty())
            grads_[i] = std::move(g);
        else
            grads_[i] += g;
    }

    /// Reverse sweep from a scalar `loss`. Populates the gradients of every
    /// Parameter reached, then clears the tape.
    void backward(Value loss) {
        if (!recording_) throw GraphError("backward on a non-recording tape");
        check(loss);
        const auto& lv = nodes_[static_cast<size_t>(loss.idx)].value;
        if (lv.size() != 1) throw GraphError("backward requires a scalar output");
        grads_.assign(nodes_.size(), Tensor<Real>());
        grads_[static_cast<size_t>(loss.idx)] = Tensor<Real>::scalar(Real(1));
        for (int32_t i = loss.idx; i >= 0; --i) {
            auto ui = static_cast<size_t>(i);
            if (grads_[ui].empty() || !nodes_[ui].back) continue;
            nodes_[ui].back(*this, grads_[ui]);
        }
        clear();
    }

private:
    struct Node {
        Tensor<Real> value;
        BackwardFn back;
    };

    void check(Value v) const {
        if (!v.valid() || static_cast<size_t>(v.idx) >= nodes_.size())
            throw GraphError("value handle does not refer to a live tape node");
    }

    size_t slot(Value v) {
        check(v);
        if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
        return static_cast<size_t>(v.idx);
    }

    std::vector<Node> nodes_;
    std::vector<Tensor<Real>> grads_;
    bool recording_ = true;
};

}  // namespace odekws
