#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "fsgfa/autodiff.hpp"
#include "fsgfa/ops.hpp"
#include "fsgfa/tensor.hpp"

namespace fsgfa {

struct LossWeights {
  double alpha = 1.0;  // classification
  double beta = 1.0;   // pixel alignment
  double gamma = 1.0;  // feature alignment
};

enum class ClsMode {
  literal,    // -(1/(N*C)) sum_i sum_c y log yhat, i.e. mean CE divided by C
  per_sample  // standard mean cross-entropy
};

inline ClsMode cls_mode_from_string(const std::string& s) {
  if (s == "literal") return ClsMode::literal;
  if (s == "per_sample") return ClsMode::per_sample;
  throw std::invalid_argument("cls_mode must be 'literal' or 'per_sample', got '" + s + "'");
}

/// Cross-entropy over softmax of the logits. Fused log-softmax keeps the
/// forward numerically stable and the gradient exact: (softmax - onehot)
/// times the normalization.
template <class T>
Var cls_loss(Tape<T>& tape, Var logits, const std::vector<int>& labels,
             ClsMode mode = ClsMode::literal) {
  const Tensor<T>& lv = tape.val(logits);
  check(lv.rank() == 2, "cls_loss: logits must be N x C, got " + lv.shape_string());
  const int N = lv.dim(0), C = lv.dim(1);
  check(static_cast<int>(labels.size()) == N, "cls_loss: labels length must equal batch size");
  for (int i = 0; i < N; ++i)
    if (labels[i] < 0 || labels[i] >= C)
      throw std::invalid_argument("cls_loss: label " + std::to_string(labels[i]) +
                                  " out of range [0," + std::to_string(C) + ")");
  const T norm = mode == ClsMode::literal ? T(1) / (static_cast<T>(N) * static_cast<T>(C))
                                          : T(1) / static_cast<T>(N);
  T loss = T(0);
  for (int n = 0; n < N; ++n) {
    T mx = lv.at2(n, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, lv.at2(n, c));
    T lse = T(0);
    for (int c = 0; c < C; ++c) lse += std::exp(lv.at2(n, c) - mx);
    lse = std::log(lse) + mx;
    loss += lse - lv.at2(n, labels[n]);
  }
  loss *= norm;

  auto lab = std::make_shared<std::vector<int>>(labels);
  const int ls = logits.id;
  return tape.record(Tensor<T>({1}, loss), {logits}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{ls})) return;
    const T g = t.grad_ref(o)[0] * norm;
    const Tensor<T>& z = t.val(Var{ls});
    Tensor<T>& gx = t.grad_mut(Var{ls});
    for (int n = 0; n < N; ++n) {
      T mx = z.at2(n, 0);
      for (int c = 1; c < C; ++c) mx = std::max(mx, z.at2(n, c));
      T sum = T(0);
      for (int c = 0; c < C; ++c) sum += std::exp(z.at2(n, c) - mx);
      for (int c = 0; c < C; ++c) {
        const T p = std::exp(z.at2(n, c) - mx) / sum;
        gx.at2(n, c) += g * (p - (c == (*lab)[n] ? T(1) : T(0)));
      }
    }
  });
}

/// L1 between the well-aligned target and the reconstruction: per sample the
/// norm sums absolute differences over all pixels and channels, then the
/// batch is averaged.
template <class T>
Var pixel_align_loss(Tape<T>& tape, Var x_w, Var x_recon) {
  const Tensor<T>& wv = tape.val(x_w);
  const Tensor<T>& rv = tape.val(x_recon);
  if (!wv.same_shape(rv))
    throw std::invalid_argument("pixel_align_loss: shape mismatch " + wv.shape_string() + " vs " +
                                rv.shape_string());
  check(wv.rank() >= 1 && wv.dim(0) >= 1, "pixel_align_loss: empty batch");
  const int N = wv.dim(0);
  T loss = T(0);
  for (std::int64_t i = 0; i < wv.numel(); ++i) loss += std::abs(wv[i] - rv[i]);
  loss /= static_cast<T>(N);

  const int ws = x_w.id, rs = x_recon.id;
  return tape.record(Tensor<T>({1}, loss), {x_w, x_recon}, [=](Tape<T>& t, Var o) {
    const T g = t.grad_ref(o)[0] / static_cast<T>(N);
    const Tensor<T>& w = t.val(Var{ws});
    const Tensor<T>& r = t.val(Var{rs});
    const bool nw = t.needs_grad(Var{ws});
    const bool nr = t.needs_grad(Var{rs});
    Tensor<T>* gw = nw ? &t.grad_mut(Var{ws}) : nullptr;
    Tensor<T>* gr = nr ? &t.grad_mut(Var{rs}) : nullptr;
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      const T s = r[i] > w[i] ? T(1) : (r[i] < w[i] ? T(-1) : T(0));
      if (nr) (*gr)[i] += g * s;
      if (nw) (*gw)[i] -= g * s;
    }
  });
}

/// Squared L2 between the two pooled embedding vectors, averaged over the
/// batch. Gradients flow into both arguments.
template <class T>
Var feature_align_loss(Tape<T>& tape, Var g_agg, Var g_emb) {
  const Tensor<T>& av = tape.val(g_agg);
  const Tensor<T>& ev = tape.val(g_emb);
  if (!av.same_shape(ev))
    throw std::invalid_argument("feature_align_loss: shape mismatch " + av.shape_string() +
                                " vs " + ev.shape_string());
  check(av.rank() == 2 && av.dim(0) >= 1, "feature_align_loss: expects N x E vectors");
  const int N = av.dim(0);
  T loss = T(0);
  for (std::int64_t i = 0; i < av.numel(); ++i) {
    const T d = av[i] - ev[i];
    loss += d * d;
  }
  loss /= static_cast<T>(N);

  const int as = g_agg.id, es = g_emb.id;
  return tape.record(Tensor<T>({1}, loss), {g_agg, g_emb}, [=](Tape<T>& t, Var o) {
    const T g = t.grad_ref(o)[0] * T(2) / static_cast<T>(N);
    const Tensor<T>& a = t.val(Var{as});
    const Tensor<T>& e = t.val(Var{es});
    const bool na = t.needs_grad(Var{as});
    const bool ne = t.needs_grad(Var{es});
    Tensor<T>* ga = na ? &t.grad_mut(Var{as}) : nullptr;
    Tensor<T>* ge = ne ? &t.grad_mut(Var{es}) : nullptr;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      const T d = g * (a[i] - e[i]);
      if (na) (*ga)[i] += d;
      if (ne) (*ge)[i] -= d;
    }
  });
}

/// alpha * L_cls + beta * L_pa + gamma * L_fa.
template <class T>
Var total_loss(Tape<T>& tape, Var cls, Var pa, Var fa, const LossWeights& w) {
  check(w.alpha >= 0 && w.beta >= 0 && w.gamma >= 0, "total_loss: weights must be non-negative");
  Var s = add(tape, scale(tape, cls, static_cast<T>(w.alpha)),
              scale(tape, pa, static_cast<T>(w.beta)));
  return add(tape, s, scale(tape, fa, static_cast<T>(w.gamma)));
}

}  // namespace fsgfa
