#pragma once

#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fsgfa/tensor.hpp"

namespace fsgfa {

/// Trainable (or frozen) named tensor plus its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape), trainable(train) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Handle to a value recorded on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Operations append their backward closures in execution
/// order; backward() replays them once, in reverse, accumulating gradients by
/// summation so a value consumed k times receives the sum of its k branch
/// gradients.
template <class T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var leaf(Tensor<T> value, bool needs_grad = false) {
    slots_.push_back(Slot{std::move(value), Tensor<T>(), grad_enabled_ && needs_grad, false});
    return Var{static_cast<int>(slots_.size()) - 1};
  }

  /// Stages a parameter as a leaf; repeated staging of the same parameter on
  /// one tape returns the same slot so gradient accumulation stays correct.
  Var param(Parameter<T>& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return Var{it->second};
    Var v = leaf(p.value, p.trainable);
    param_cache_.emplace(&p, v.id);
    bound_.emplace_back(&p, v.id);
    touched_.push_back(p.name);
    return v;
  }

  const Tensor<T>& val(Var v) const { return slots_.at(static_cast<std::size_t>(v.id)).value; }
  Tensor<T>& val_mut(Var v) { return slots_.at(static_cast<std::size_t>(v.id)).value; }

  bool needs_grad(Var v) const { return slots_.at(static_cast<std::size_t>(v.id)).needs; }
  bool grad_enabled() const { return grad_enabled_; }

  bool has_grad(Var v) const { return slots_.at(static_cast<std::size_t>(v.id)).grad_alloc; }

  /// Gradient buffer, allocated as zeros on first touch.
  Tensor<T>& grad_mut(Var v) {
    Slot& s = slots_.at(static_cast<std::size_t>(v.id));
    if (!s.grad_alloc) {
      s.grad = Tensor<T>(s.value.shape);
      s.grad_alloc = true;
    }
    return s.grad;
  }

  /// Read-only gradient; zeros if nothing flowed into this slot.
  Tensor<T> grad(Var v) const {
    const Slot& s = slots_.at(static_cast<std::size_t>(v.id));
    if (!s.grad_alloc) return Tensor<T>(s.value.shape);
    return s.grad;
  }

  /// Reference to an already-materialized gradient (the output gradient seen
  /// by a backward closure is always materialized).
  const Tensor<T>& grad_ref(Var v) const {
    const Slot& s = slots_.at(static_cast<std::size_t>(v.id));
    if (!s.grad_alloc) throw std::runtime_error("grad_ref: gradient not materialized");
    return s.grad;
  }

  /// Records an op output. The closure runs during backward() and must add
  /// contributions into the inputs' gradients via grad_mut().
  Var record(Tensor<T> value, const std::vector<Var>& inputs,
             std::function<void(Tape&, Var)> back) {
    bool needs = false;
    if (grad_enabled_)
      for (Var in : inputs)
        if (needs_grad(in)) {
          needs = true;
          break;
        }
    slots_.push_back(Slot{std::move(value), Tensor<T>(), needs, false});
    Var out{static_cast<int>(slots_.size()) - 1};
    if (needs) nodes_.push_back(Node{out.id, std::move(back)});
    return out;
  }

  void backward(Var loss) {
    if (!grad_enabled_) throw std::runtime_error("backward: tape was created grad-disabled");
    const Tensor<T>& lv = val(loss);
    if (lv.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " + lv.shape_string());
    for (Slot& s : slots_) {
      s.grad_alloc = false;
      s.grad = Tensor<T>();
    }
    grad_mut(loss)[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!slots_[static_cast<std::size_t>(it->out)].grad_alloc) continue;
      it->back(*this, Var{it->out});
    }
  }

  /// Adds slot gradients into the bound parameters' grad buffers.
  void accumulate_param_grads() {
    for (auto& [p, id] : bound_) {
      if (!p->trainable) continue;
      const Slot& s = slots_[static_cast<std::size_t>(id)];
      if (!s.grad_alloc) continue;
      for (std::int64_t i = 0; i < s.grad.numel(); ++i) p->grad[i] += s.grad[i];
    }
  }

  /// Names of every parameter staged on this tape, in first-touch order.
  const std::vector<std::string>& touched_params() const { return touched_; }

  std::size_t size() const { return slots_.size(); }

 private:
  struct Slot {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs = false;
    bool grad_alloc = false;
  };
  struct Node {
    int out;
    std::function<void(Tape&, Var)> back;
  };

  std::deque<Slot> slots_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_cache_;
  std::vector<std::pair<Parameter<T>*, int>> bound_;
  std::vector<std::string> touched_;
  bool grad_enabled_ = true;
};

}  // namespace fsgfa
