#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fsgfa/autodiff.hpp"
#include "fsgfa/ops.hpp"
#include "fsgfa/rng.hpp"
#include "fsgfa/tensor.hpp"

namespace fsgfa {

/// Named references into a model: trainable parameters plus non-trainable
/// buffers (batch-norm running statistics).
template <class T>
struct ParamRefs {
  std::vector<Parameter<T>*> params;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers;

  std::int64_t trainable_count() const {
    std::int64_t n = 0;
    for (const auto* p : params) n += p->value.numel();
    return n;
  }
};

template <class T>
Tensor<T> uniform_init(const std::vector<int>& shape, std::int64_t fan_in, Rng& rng) {
  Tensor<T> t(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <class T>
struct Conv2dLayer {
  Parameter<T> weight;  // (Cout, Cin, kh, kw)
  std::optional<Parameter<T>> bias;
  int stride = 1;
  int pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int cin, int cout, int k, int stride_, int pad_,
              bool with_bias, Rng& rng)
      : weight(name + ".w",
               uniform_init<T>({cout, cin, k, k}, static_cast<std::int64_t>(cin) * k * k, rng)),
        stride(stride_),
        pad(pad_) {
    if (with_bias)
      bias.emplace(name + ".b", uniform_init<T>({cout}, static_cast<std::int64_t>(cin) * k * k,
                                                rng));
  }

  Var operator()(Tape<T>& t, Var x) {
    Var w = t.param(weight);
    if (bias) return conv2d(t, x, w, t.param(*bias), stride, pad);
    return conv2d(t, x, w, stride, pad);
  }

  void collect(ParamRefs<T>& out) {
    out.params.push_back(&weight);
    if (bias) out.params.push_back(&*bias);
  }
};

template <class T>
struct Deconv2dLayer {
  Parameter<T> weight;  // (Cin, Cout, kh, kw)
  int stride = 2;
  int pad = 1;
  int output_padding = 1;

  Deconv2dLayer() = default;
  Deconv2dLayer(const std::string& name, int cin, int cout, int k, int stride_, int pad_,
                int outpad, Rng& rng)
      : weight(name + ".w",
               uniform_init<T>({cin, cout, k, k}, static_cast<std::int64_t>(cin) * k * k, rng)),
        stride(stride_),
        pad(pad_),
        output_padding(outpad) {}

  Var operator()(Tape<T>& t, Var x) {
    return deconv2d(t, x, t.param(weight), stride, pad, output_padding);
  }

  void collect(ParamRefs<T>& out) { out.params.push_back(&weight); }
};

template <class T>
struct BatchNorm2dLayer {
  std::string name;
  Parameter<T> gamma;
  Parameter<T> beta;
  BnState<T> state;
  T eps = T(1e-5);
  T momentum = T(0.1);

  BatchNorm2dLayer() = default;
  BatchNorm2dLayer(const std::string& name_, int channels)
      : name(name_),
        gamma(name_ + ".gamma", Tensor<T>({channels}, T(1))),
        beta(name_ + ".beta", Tensor<T>({channels}, T(0))),
        state(channels) {}

  Var operator()(Tape<T>& t, Var x, BnMode mode) {
    return batchnorm2d(t, x, t.param(gamma), t.param(beta), state, mode, eps, momentum);
  }

  void collect(ParamRefs<T>& out) {
    out.params.push_back(&gamma);
    out.params.push_back(&beta);
    out.buffers.emplace_back(name + ".running_mean", &state.running_mean);
    out.buffers.emplace_back(name + ".running_var", &state.running_var);
  }
};

/// 1x1 -> 3x3 -> 1x1 residual unit, all strides 1, out = 4 x mid. The first
/// block of a stage carries a 1x1 projection shortcut when channel counts
/// change.
template <class T>
struct BottleneckBlock {
  Conv2dLayer<T> conv1, conv2, conv3;
  BatchNorm2dLayer<T> bn1, bn2, bn3;
  std::optional<Conv2dLayer<T>> proj;
  std::optional<BatchNorm2dLayer<T>> proj_bn;

  BottleneckBlock() = default;
  BottleneckBlock(const std::string& name, int cin, int mid, Rng& rng) {
    const int cout = 4 * mid;
    conv1 = Conv2dLayer<T>(name + ".conv1", cin, mid, 1, 1, 0, false, rng);
    bn1 = BatchNorm2dLayer<T>(name + ".bn1", mid);
    conv2 = Conv2dLayer<T>(name + ".conv2", mid, mid, 3, 1, 1, false, rng);
    bn2 = BatchNorm2dLayer<T>(name + ".bn2", mid);
    conv3 = Conv2dLayer<T>(name + ".conv3", mid, cout, 1, 1, 0, false, rng);
    bn3 = BatchNorm2dLayer<T>(name + ".bn3", cout);
    if (cin != cout) {
      proj.emplace(name + ".proj", cin, cout, 1, 1, 0, false, rng);
      proj_bn.emplace(name + ".proj_bn", cout);
    }
  }

  Var operator()(Tape<T>& t, Var x, BnMode mode) {
    Var y = relu(t, bn1(t, conv1(t, x), mode));
    y = relu(t, bn2(t, conv2(t, y), mode));
    y = bn3(t, conv3(t, y), mode);
    Var shortcut = proj ? (*proj_bn)(t, (*proj)(t, x), mode) : x;
    return relu(t, add(t, y, shortcut));
  }

  void collect(ParamRefs<T>& out) {
    conv1.collect(out);
    bn1.collect(out);
    conv2.collect(out);
    bn2.collect(out);
    conv3.collect(out);
    bn3.collect(out);
    if (proj) {
      proj->collect(out);
      proj_bn->collect(out);
    }
  }
};

/// Two 3x3 convs with an identity shortcut (decoder residual unit).
template <class T>
struct BasicBlock {
  Conv2dLayer<T> conv1, conv2;
  BatchNorm2dLayer<T> bn1, bn2;

  BasicBlock() = default;
  BasicBlock(const std::string& name, int channels, Rng& rng) {
    conv1 = Conv2dLayer<T>(name + ".conv1", channels, channels, 3, 1, 1, false, rng);
    bn1 = BatchNorm2dLayer<T>(name + ".bn1", channels);
    conv2 = Conv2dLayer<T>(name + ".conv2", channels, channels, 3, 1, 1, false, rng);
    bn2 = BatchNorm2dLayer<T>(name + ".bn2", channels);
  }

  Var operator()(Tape<T>& t, Var x, BnMode mode) {
    Var y = relu(t, bn1(t, conv1(t, x), mode));
    y = bn2(t, conv2(t, y), mode);
    return relu(t, add(t, y, x));
  }

  void collect(ParamRefs<T>& out) {
    conv1.collect(out);
    bn1.collect(out);
    conv2.collect(out);
    bn2.collect(out);
  }
};

}  // namespace fsgfa
