#pragma once

// Shared test-only oracles: brute-force loop implementations and a central
// finite-difference gradient checker. These stay independent of the library's
// im2col/GEMM path on purpose.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "fsgfa/rng.hpp"
#include "fsgfa/tensor.hpp"

namespace testutil {

using fsgfa::Rng;
using fsgfa::Tensor;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

template <class T>
Tensor<T> randu(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Direct quadruple-loop convolution.
template <class T>
Tensor<T> conv2d_loops(const Tensor<T>& x, const Tensor<T>& w, const T* bias, int stride,
                       int pad) {
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  Tensor<T> out({N, Cout, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          T acc = bias ? bias[co] : T(0);
          for (int ci = 0; ci < Cin; ++ci)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int ih = oh * stride - pad + u;
                const int iw = ow * stride - pad + v;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x.at4(n, ci, ih, iw) * w.at4(co, ci, u, v);
              }
          out.at4(n, co, oh, ow) = acc;
        }
  return out;
}

// Scatter-accumulate transposed convolution; weight is (Cin, Cout, kh, kw).
template <class T>
Tensor<T> deconv2d_loops(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad,
                         int outpad) {
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int OH = (H - 1) * stride - 2 * pad + kh + outpad;
  const int OW = (W - 1) * stride - 2 * pad + kw + outpad;
  Tensor<T> out({N, Cout, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int ci = 0; ci < Cin; ++ci)
      for (int ih = 0; ih < H; ++ih)
        for (int iw = 0; iw < W; ++iw) {
          const T xv = x.at4(n, ci, ih, iw);
          for (int co = 0; co < Cout; ++co)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int oh = ih * stride - pad + u;
                const int ow = iw * stride - pad + v;
                if (oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
                out.at4(n, co, oh, ow) += xv * w.at4(ci, co, u, v);
              }
        }
  return out;
}

template <class T>
Tensor<T> maxpool_loops(const Tensor<T>& x, int k, int stride, int pad) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = (H + 2 * pad - k) / stride + 1;
  const int OW = (W + 2 * pad - k) / stride + 1;
  Tensor<T> out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const int ih = oh * stride - pad + u;
              const int iw = ow * stride - pad + v;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              best = std::max(best, x.at4(n, c, ih, iw));
            }
          out.at4(n, c, oh, ow) = best;
        }
  return out;
}

/// Central finite differences against analytic gradients at 64-bit.
/// `loss` must re-read the input tensors on every call; `analytic[i]` is the
/// gradient with respect to `*inputs[i]` at the unperturbed point. Samples
/// `coords` coordinates per input (all of them if the tensor is smaller).
/// Returns the maximum relative error over all sampled coordinates.
inline double fd_max_rel_err(const std::vector<Tensor<double>*>& inputs,
                             const std::vector<Tensor<double>>& analytic,
                             const std::function<double()>& loss, int coords, Rng& rng,
                             double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double>& t = *inputs[i];
    const std::int64_t n = t.numel();
    std::vector<std::int64_t> picks;
    if (n <= coords) {
      for (std::int64_t j = 0; j < n; ++j) picks.push_back(j);
    } else {
      for (int j = 0; j < coords; ++j) picks.push_back(rng.uniform_int(0, n - 1));
    }
    for (std::int64_t j : picks) {
      const double keep = t[j];
      t[j] = keep + h;
      const double up = loss();
      t[j] = keep - h;
      const double dn = loss();
      t[j] = keep;
      const double fd = (up - dn) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[i][j], fd));
    }
  }
  return worst;
}

}  // namespace testutil
