#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "fsgfa/autodiff.hpp"
#include "fsgfa/parallel.hpp"
#include "fsgfa/tensor.hpp"

namespace fsgfa {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

/// col layout: row = (c*kh + u)*kw + v, column = oh*OW + ow.
template <class T>
void im2col(const T* img, int C, int H, int W, int kh, int kw, int stride, int pad, T* col) {
  const int OH = conv_out_extent(H, kh, stride, pad);
  const int OW = conv_out_extent(W, kw, stride, pad);
  const std::int64_t plane = static_cast<std::int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        T* dst = col + ((static_cast<std::int64_t>(c) * kh + u) * kw + v) * plane;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + u;
          if (ih < 0 || ih >= H) {
            for (int ow = 0; ow < OW; ++ow) *dst++ = T(0);
            continue;
          }
          const T* src = img + (static_cast<std::int64_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + v;
            *dst++ = (iw < 0 || iw >= W) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

/// Scatter-add of a col matrix back into the image it was gathered from.
template <class T>
void col2im(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, T* img) {
  const int OH = conv_out_extent(H, kh, stride, pad);
  const int OW = conv_out_extent(W, kw, stride, pad);
  const std::int64_t plane = static_cast<std::int64_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        const T* src = col + ((static_cast<std::int64_t>(c) * kh + u) * kw + v) * plane;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + u;
          if (ih < 0 || ih >= H) {
            src += OW;
            continue;
          }
          T* dst = img + (static_cast<std::int64_t>(c) * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + v;
            if (iw >= 0 && iw < W) dst[iw] += *src;
            ++src;
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <class T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var bias, int stride, int pad) {
  const Tensor<T>& xv = tape.val(x);
  const Tensor<T>& wv = tape.val(w);
  check(xv.rank() == 4, "conv2d: input must be NCHW, got " + xv.shape_string());
  check(wv.rank() == 4, "conv2d: weight must be (Cout,Cin,kh,kw), got " + wv.shape_string());
  check(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and padding >= 0");
  if (xv.dim(1) != wv.dim(1))
    throw std::invalid_argument("conv2d: input channels " + xv.shape_string() +
                                " do not match weight " + wv.shape_string());
  const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  check(H + 2 * pad >= kh && W + 2 * pad >= kw,
        "conv2d: kernel " + wv.shape_string() + " larger than padded input " + xv.shape_string());
  const int OH = conv_out_extent(H, kh, stride, pad);
  const int OW = conv_out_extent(W, kw, stride, pad);
  const std::int64_t CK = static_cast<std::int64_t>(Cin) * kh * kw;
  const std::int64_t plane = static_cast<std::int64_t>(OH) * OW;

  if (bias.valid()) {
    const Tensor<T>& bv = tape.val(bias);
    check(bv.numel() == Cout, "conv2d: bias length " + bv.shape_string() +
                                  " does not match Cout of " + wv.shape_string());
  }

  Tensor<T> out({N, Cout, OH, OW});
  {
    const T* bptr = bias.valid() ? tape.val(bias).data.data() : nullptr;
    parallel_for(N, [&](int n, int) {
      T* col = scratch<T>(0, static_cast<std::size_t>(CK * plane));
      detail::im2col(xv.data.data() + static_cast<std::int64_t>(n) * Cin * H * W, Cin, H, W, kh,
                     kw, stride, pad, col);
      ConstMatMap<T> Wm(wv.data.data(), Cout, CK);
      ConstMatMap<T> Cm(col, CK, plane);
      MatMap<T> Om(out.data.data() + static_cast<std::int64_t>(n) * Cout * plane, Cout, plane);
      Om.noalias() = Wm * Cm;
      if (bptr)
        for (int c = 0; c < Cout; ++c) Om.row(c).array() += bptr[c];
    });
  }

  const int xs = x.id, ws = w.id, bs = bias.id;
  return tape.record(std::move(out), {x, w, bias.valid() ? bias : x},
                     [=](Tape<T>& t, Var o) {
    const Tensor<T>& gy = t.grad_ref(o);
    const Tensor<T>& xin = t.val(Var{xs});
    const Tensor<T>& win = t.val(Var{ws});
    const bool need_x = t.needs_grad(Var{xs});
    const bool need_w = t.needs_grad(Var{ws});
    const bool need_b = bs >= 0 && t.needs_grad(Var{bs});
    const int workers = thread_count();
    std::vector<std::vector<T>> wpart;
    if (need_w) wpart.assign(static_cast<std::size_t>(workers),
                             std::vector<T>(win.data.size(), T(0)));
    Tensor<T>* gx = need_x ? &t.grad_mut(Var{xs}) : nullptr;

    parallel_for(N, [&](int n, int tid) {
      T* col = scratch<T>(0, static_cast<std::size_t>(CK * plane));
      detail::im2col(xin.data.data() + static_cast<std::int64_t>(n) * Cin * H * W, Cin, H, W, kh,
                     kw, stride, pad, col);
      ConstMatMap<T> Gm(gy.data.data() + static_cast<std::int64_t>(n) * Cout * plane, Cout, plane);
      if (need_w) {
        MatMap<T> Wg(wpart[static_cast<std::size_t>(tid)].data(), Cout, CK);
        ConstMatMap<T> Cm(col, CK, plane);
        Wg.noalias() += Gm * Cm.transpose();
      }
      if (need_x) {
        T* cg = scratch<T>(1, static_cast<std::size_t>(CK * plane));
        ConstMatMap<T> Wm(win.data.data(), Cout, CK);
        MatMap<T> Cg(cg, CK, plane);
        Cg.noalias() = Wm.transpose() * Gm;
        detail::col2im(cg, Cin, H, W, kh, kw, stride, pad,
                       gx->data.data() + static_cast<std::int64_t>(n) * Cin * H * W);
      }
    });
    if (need_w) {
      Tensor<T>& gw = t.grad_mut(Var{ws});
      for (int tid = 0; tid < workers; ++tid)
        for (std::size_t i = 0; i < gw.data.size(); ++i)
          gw.data[i] += wpart[static_cast<std::size_t>(tid)][i];
    }
    if (need_b) {
      Tensor<T>& gb = t.grad_mut(Var{bs});
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cout; ++c) {
          T s = T(0);
          const T* g = gy.data.data() + (static_cast<std::int64_t>(n) * Cout + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) s += g[i];
          gb[c] += s;
        }
    }
  });
}

template <class T>
Var conv2d(Tape<T>& tape, Var x, Var w, int stride, int pad) {
  return conv2d(tape, x, w, Var{}, stride, pad);
}

// ---------------------------------------------------------------------------
// deconv2d (transposed convolution)
// ---------------------------------------------------------------------------

template <class T>
Var deconv2d(Tape<T>& tape, Var x, Var w, int stride, int pad, int output_padding) {
  const Tensor<T>& xv = tape.val(x);
  const Tensor<T>& wv = tape.val(w);
  check(xv.rank() == 4, "deconv2d: input must be NCHW, got " + xv.shape_string());
  check(wv.rank() == 4, "deconv2d: weight must be (Cin,Cout,kh,kw), got " + wv.shape_string());
  check(stride >= 1 && pad >= 0 && output_padding >= 0, "deconv2d: bad geometry arguments");
  check(output_padding < stride, "deconv2d: output_padding must be < stride");
  if (xv.dim(1) != wv.dim(0))
    throw std::invalid_argument("deconv2d: input channels " + xv.shape_string() +
                                " do not match weight " + wv.shape_string());
  const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int Cout = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  const int OH = (H - 1) * stride - 2 * pad + kh + output_padding;
  const int OW = (W - 1) * stride - 2 * pad + kw + output_padding;
  check(OH > 0 && OW > 0, "deconv2d: geometry yields non-positive output size");
  // The forward scatter is exactly col2im of the matching conv geometry, so
  // that geometry must map the declared output back onto the input extents.
  check(conv_out_extent(OH, kh, stride, pad) == H && conv_out_extent(OW, kw, stride, pad) == W,
        "deconv2d: geometry cannot produce the declared output size");

  const std::int64_t CK = static_cast<std::int64_t>(Cout) * kh * kw;
  const std::int64_t iplane = static_cast<std::int64_t>(H) * W;
  const std::int64_t oplane = static_cast<std::int64_t>(OH) * OW;

  Tensor<T> out({N, Cout, OH, OW});
  {
    parallel_for(N, [&](int n, int) {
      T* col = scratch<T>(0, static_cast<std::size_t>(CK * iplane));
      ConstMatMap<T> Wm(wv.data.data(), Cin, CK);
      ConstMatMap<T> Xm(xv.data.data() + static_cast<std::int64_t>(n) * Cin * iplane, Cin, iplane);
      MatMap<T> Cm(col, CK, iplane);
      Cm.noalias() = Wm.transpose() * Xm;
      detail::col2im(col, Cout, OH, OW, kh, kw, stride, pad,
                     out.data.data() + static_cast<std::int64_t>(n) * Cout * oplane);
    });
  }

  const int xs = x.id, ws = w.id;
  return tape.record(std::move(out), {x, w}, [=](Tape<T>& t, Var o) {
    const Tensor<T>& gy = t.grad_ref(o);
    const Tensor<T>& xin = t.val(Var{xs});
    const Tensor<T>& win = t.val(Var{ws});
    const bool need_x = t.needs_grad(Var{xs});
    const bool need_w = t.needs_grad(Var{ws});
    const int workers = thread_count();
    std::vector<std::vector<T>> wpart;
    if (need_w) wpart.assign(static_cast<std::size_t>(workers),
                             std::vector<T>(win.data.size(), T(0)));
    Tensor<T>* gx = need_x ? &t.grad_mut(Var{xs}) : nullptr;

    parallel_for(N, [&](int n, int tid) {
      T* col = scratch<T>(0, static_cast<std::size_t>(CK * iplane));
      // Gathering the output gradient is the conv-forward direction.
      detail::im2col(gy.data.data() + static_cast<std::int64_t>(n) * Cout * oplane, Cout, OH, OW,
                     kh, kw, stride, pad, col);
      ConstMatMap<T> Cg(col, CK, iplane);
      if (need_x) {
        ConstMatMap<T> Wm(win.data.data(), Cin, CK);
        MatMap<T> Gx(gx->data.data() + static_cast<std::int64_t>(n) * Cin * iplane, Cin, iplane);
        Gx.noalias() += Wm * Cg;
      }
      if (need_w) {
        ConstMatMap<T> Xm(xin.data.data() + static_cast<std::int64_t>(n) * Cin * iplane, Cin,
                          iplane);
        MatMap<T> Wg(wpart[static_cast<std::size_t>(tid)].data(), Cin, CK);
        Wg.noalias() += Xm * Cg.transpose();
      }
    });
    if (need_w) {
      Tensor<T>& gw = t.grad_mut(Var{ws});
      for (int tid = 0; tid < workers; ++tid)
        for (std::size_t i = 0; i < gw.data.size(); ++i)
          gw.data[i] += wpart[static_cast<std::size_t>(tid)][i];
    }
  });
}

// ---------------------------------------------------------------------------
// batchnorm2d
// ---------------------------------------------------------------------------

enum class BnMode {
  train,            // batch statistics, running state updated
  train_no_update,  // batch statistics, state untouched (pure; used by checks)
  eval              // running statistics
};

template <class T>
struct BnState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  explicit BnState(int channels = 0)
      : running_mean({channels}, T(0)), running_var({channels}, T(1)) {}
};

template <class T>
Var batchnorm2d(Tape<T>& tape, Var x, Var gamma, Var beta, BnState<T>& state, BnMode mode,
                T eps = T(1e-5), T momentum = T(0.1)) {
  const Tensor<T>& xv = tape.val(x);
  check(xv.rank() == 4, "batchnorm2d: input must be NCHW, got " + xv.shape_string());
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  check(N >= 1 && H * W >= 1, "batchnorm2d: empty batch rejected, got " + xv.shape_string());
  const Tensor<T>& gv = tape.val(gamma);
  const Tensor<T>& bv = tape.val(beta);
  check(gv.numel() == C && bv.numel() == C,
        "batchnorm2d: gamma/beta length must match channels of " + xv.shape_string());
  check(state.running_mean.numel() == C, "batchnorm2d: running state has wrong channel count");

  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  const std::int64_t m = static_cast<std::int64_t>(N) * plane;

  auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
  if (mode == BnMode::eval) {
    for (int c = 0; c < C; ++c) {
      (*mean)[c] = state.running_mean[c];
      (*invstd)[c] = T(1) / std::sqrt(state.running_var[c] + eps);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      T sum = T(0), sq = T(0);
      for (int n = 0; n < N; ++n) {
        const T* p = xv.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += p[i] * p[i];
        }
      }
      const T mu = sum / static_cast<T>(m);
      T var = sq / static_cast<T>(m) - mu * mu;
      if (var < T(0)) var = T(0);
      (*mean)[c] = mu;
      (*invstd)[c] = T(1) / std::sqrt(var + eps);
      if (mode == BnMode::train) {
        state.running_mean[c] = (T(1) - momentum) * state.running_mean[c] + momentum * mu;
        state.running_var[c] = (T(1) - momentum) * state.running_var[c] + momentum * var;
      }
    }
  }

  Tensor<T> out(xv.shape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = xv.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      T* q = out.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      const T mu = (*mean)[c], is = (*invstd)[c], g = gv[c], b = bv[c];
      for (std::int64_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mu) * is + b;
    }

  const int xs = x.id, gs = gamma.id, bs = beta.id;
  const bool batch_stats = (mode != BnMode::eval);
  return tape.record(std::move(out), {x, gamma, beta}, [=](Tape<T>& t, Var o) {
    const Tensor<T>& gy = t.grad_ref(o);
    const Tensor<T>& xin = t.val(Var{xs});
    const Tensor<T>& gmv = t.val(Var{gs});
    const bool need_x = t.needs_grad(Var{xs});
    const bool need_g = t.needs_grad(Var{gs});
    const bool need_b = t.needs_grad(Var{bs});
    Tensor<T>* gx = need_x ? &t.grad_mut(Var{xs}) : nullptr;
    Tensor<T>* gg = need_g ? &t.grad_mut(Var{gs}) : nullptr;
    Tensor<T>* gb = need_b ? &t.grad_mut(Var{bs}) : nullptr;
    for (int c = 0; c < C; ++c) {
      const T mu = (*mean)[c], is = (*invstd)[c], g = gmv[c];
      T sum_gy = T(0), sum_gy_xhat = T(0);
      for (int n = 0; n < N; ++n) {
        const T* xp = xin.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        const T* gp = gy.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          sum_gy += gp[i];
          sum_gy_xhat += gp[i] * (xp[i] - mu) * is;
        }
      }
      if (need_g) (*gg)[c] += sum_gy_xhat;
      if (need_b) (*gb)[c] += sum_gy;
      if (need_x) {
        const T k1 = sum_gy / static_cast<T>(m);
        const T k2 = sum_gy_xhat / static_cast<T>(m);
        for (int n = 0; n < N; ++n) {
          const T* xp = xin.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
          const T* gp = gy.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
          T* op = gx->data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
          if (batch_stats) {
            for (std::int64_t i = 0; i < plane; ++i) {
              const T xhat = (xp[i] - mu) * is;
              op[i] += g * is * (gp[i] - k1 - xhat * k2);
            }
          } else {
            for (std::int64_t i = 0; i < plane; ++i) op[i] += g * is * gp[i];
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// pointwise and pooling ops
// ---------------------------------------------------------------------------

template <class T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.val(x);
  Tensor<T> out(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  const int xs = x.id;
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{xs})) return;
    const Tensor<T>& gy = t.grad_ref(o);
    const Tensor<T>& xin = t.val(Var{xs});
    Tensor<T>& gx = t.grad_mut(Var{xs});
    for (std::int64_t i = 0; i < gy.numel(); ++i)
      if (xin[i] > T(0)) gx[i] += gy[i];
  });
}

template <class T>
Var tanh_op(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.val(x);
  Tensor<T> out(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = std::tanh(xv[i]);
  const int xs = x.id;
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{xs})) return;
    const Tensor<T>& gy = t.grad_ref(o);
    const Tensor<T>& y = t.val(o);
    Tensor<T>& gx = t.grad_mut(Var{xs});
    for (std::int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i] * (T(1) - y[i] * y[i]);
  });
}

template <class T>
Var maxpool2d(Tape<T>& tape, Var x, int k = 3, int stride = 2, int pad = 1) {
  const Tensor<T>& xv = tape.val(x);
  check(xv.rank() == 4, "maxpool2d: input must be NCHW, got " + xv.shape_string());
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int OH = conv_out_extent(H, k, stride, pad);
  const int OW = conv_out_extent(W, k, stride, pad);
  check(OH > 0 && OW > 0, "maxpool2d: window larger than padded input " + xv.shape_string());
  Tensor<T> out({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.data.size());
  std::int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* img = xv.data.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++oi) {
          T best = -std::numeric_limits<T>::infinity();
          std::int32_t bi = -1;
          for (int u = 0; u < k; ++u) {
            const int ih = oh * stride - pad + u;
            if (ih < 0 || ih >= H) continue;
            for (int v = 0; v < k; ++v) {
              const int iw = ow * stride - pad + v;
              if (iw < 0 || iw >= W) continue;
              const T val = img[ih * W + iw];
              if (val > best) {
                best = val;
                bi = ih * W + iw;
              }
            }
          }
          out[oi] = best;
          (*argmax)[static_cast<std::size_t>(oi)] = bi;
        }
    }
  const int xs = x.id;
  const std::int64_t iplane = static_cast<std::int64_t>(H) * W;
  const std::int64_t oplane = static_cast<std::int64_t>(OH) * OW;
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{xs})) return;
    const Tensor<T>& gy = t.grad_ref(o);
    Tensor<T>& gx = t.grad_mut(Var{xs});
    std::int64_t idx = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T* gimg = gx.data.data() + (static_cast<std::int64_t>(n) * C + c) * iplane;
        for (std::int64_t i = 0; i < oplane; ++i, ++idx)
          gimg[(*argmax)[static_cast<std::size_t>(idx)]] += gy[idx];
      }
  });
}

/// N x C x H x W -> N x C.
template <class T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.val(x);
  check(xv.rank() == 4, "global_avg_pool: input must be NCHW, got " + xv.shape_string());
  const int N = xv.dim(0), C = xv.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
  check(plane > 0, "global_avg_pool: empty spatial extent " + xv.shape_string());
  Tensor<T> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = xv.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      T s = T(0);
      for (std::int64_t i = 0; i < plane; ++i) s += p[i];
      out.at2(n, c) = s / static_cast<T>(plane);
    }
  const int xs = x.id;
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{xs})) return;
    const Tensor<T>& gy = t.grad_ref(o);
    Tensor<T>& gx = t.grad_mut(Var{xs});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T g = gy.at2(n, c) / static_cast<T>(plane);
        T* p = gx.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) p[i] += g;
      }
  });
}

/// y = x * Q + b with x: N x E, Q: E x C, b: C.
template <class T>
Var linear(Tape<T>& tape, Var x, Var q, Var bias) {
  const Tensor<T>& xv = tape.val(x);
  const Tensor<T>& qv = tape.val(q);
  check(xv.rank() == 2 && qv.rank() == 2, "linear: expects N x E input and E x C weight");
  if (xv.dim(1) != qv.dim(0))
    throw std::invalid_argument("linear: input " + xv.shape_string() + " does not match weight " +
                                qv.shape_string());
  const int N = xv.dim(0), E = xv.dim(1), C = qv.dim(1);
  if (bias.valid())
    check(tape.val(bias).numel() == C, "linear: bias length must equal output classes");
  Tensor<T> out({N, C});
  {
    ConstMatMap<T> Xm(xv.data.data(), N, E);
    ConstMatMap<T> Qm(qv.data.data(), E, C);
    MatMap<T> Om(out.data.data(), N, C);
    Om.noalias() = Xm * Qm;
    if (bias.valid()) {
      const Tensor<T>& bv = tape.val(bias);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) out.at2(n, c) += bv[c];
    }
  }
  const int xs = x.id, qs = q.id, bs = bias.id;
  return tape.record(std::move(out), {x, q, bias.valid() ? bias : x}, [=](Tape<T>& t, Var o) {
    const Tensor<T>& gy = t.grad_ref(o);
    ConstMatMap<T> Gm(gy.data.data(), N, C);
    if (t.needs_grad(Var{xs})) {
      const Tensor<T>& qin = t.val(Var{qs});
      ConstMatMap<T> Qm(qin.data.data(), E, C);
      MatMap<T> Gx(t.grad_mut(Var{xs}).data.data(), N, E);
      Gx.noalias() += Gm * Qm.transpose();
    }
    if (t.needs_grad(Var{qs})) {
      const Tensor<T>& xin = t.val(Var{xs});
      ConstMatMap<T> Xm(xin.data.data(), N, E);
      MatMap<T> Gq(t.grad_mut(Var{qs}).data.data(), E, C);
      Gq.noalias() += Xm.transpose() * Gm;
    }
    if (bs >= 0 && t.needs_grad(Var{bs})) {
      Tensor<T>& gb = t.grad_mut(Var{bs});
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) gb[c] += gy.at2(n, c);
    }
  });
}

template <class T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.val(a);
  const Tensor<T>& bv = tape.val(b);
  check(av.rank() == 4 && bv.rank() == 4, "concat_channels: expects NCHW inputs");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw std::invalid_argument("concat_channels: non-channel extents differ, " +
                                av.shape_string() + " vs " + bv.shape_string());
  const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor<T> out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy_n(av.data.data() + static_cast<std::int64_t>(n) * Ca * plane, Ca * plane,
                out.data.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane);
    std::copy_n(bv.data.data() + static_cast<std::int64_t>(n) * Cb * plane, Cb * plane,
                out.data.data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * plane);
  }
  const int as = a.id, bs = b.id;
  return tape.record(std::move(out), {a, b}, [=](Tape<T>& t, Var o) {
    const Tensor<T>& gy = t.grad_ref(o);
    if (t.needs_grad(Var{as})) {
      Tensor<T>& ga = t.grad_mut(Var{as});
      for (int n = 0; n < N; ++n) {
        const T* src = gy.data.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane;
        T* dst = ga.data.data() + static_cast<std::int64_t>(n) * Ca * plane;
        for (std::int64_t i = 0; i < Ca * plane; ++i) dst[i] += src[i];
      }
    }
    if (t.needs_grad(Var{bs})) {
      Tensor<T>& gb = t.grad_mut(Var{bs});
      for (int n = 0; n < N; ++n) {
        const T* src = gy.data.data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * plane;
        T* dst = gb.data.data() + static_cast<std::int64_t>(n) * Cb * plane;
        for (std::int64_t i = 0; i < Cb * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

/// Row-wise softmax over N x C.
template <class T>
Var softmax(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.val(x);
  check(xv.rank() == 2, "softmax: expects N x C logits, got " + xv.shape_string());
  const int N = xv.dim(0), C = xv.dim(1);
  Tensor<T> out(xv.shape);
  for (int n = 0; n < N; ++n) {
    T mx = xv.at2(n, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, xv.at2(n, c));
    T sum = T(0);
    for (int c = 0; c < C; ++c) {
      const T e = std::exp(xv.at2(n, c) - mx);
      out.at2(n, c) = e;
      sum += e;
    }
    for (int c = 0; c < C; ++c) out.at2(n, c) /= sum;
  }
  const int xs = x.id;
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{xs})) return;
    const Tensor<T>& gy = t.grad_ref(o);
    const Tensor<T>& y = t.val(o);
    Tensor<T>& gx = t.grad_mut(Var{xs});
    for (int n = 0; n < N; ++n) {
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += gy.at2(n, c) * y.at2(n, c);
      for (int c = 0; c < C; ++c) gx.at2(n, c) += y.at2(n, c) * (gy.at2(n, c) - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// small elementwise helpers (used by losses and tests)
// ---------------------------------------------------------------------------

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.val(a);
  const Tensor<T>& bv = tape.val(b);
  check_same_shape(av, bv, "add");
  Tensor<T> out(av.shape);
  for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
  const int as = a.id, bs = b.id;
  return tape.record(std::move(out), {a, b}, [=](Tape<T>& t, Var o) {
    const Tensor<T>& gy = t.grad_ref(o);
    for (int s : {as, bs})
      if (t.needs_grad(Var{s})) {
        Tensor<T>& g = t.grad_mut(Var{s});
        for (std::int64_t i = 0; i < gy.numel(); ++i) g[i] += gy[i];
      }
  });
}

template <class T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.val(a);
  const Tensor<T>& bv = tape.val(b);
  check_same_shape(av, bv, "mul");
  Tensor<T> out(av.shape);
  for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
  const int as = a.id, bs = b.id;
  return tape.record(std::move(out), {a, b}, [=](Tape<T>& t, Var o) {
    const Tensor<T>& gy = t.grad_ref(o);
    if (t.needs_grad(Var{as})) {
      const Tensor<T>& bin = t.val(Var{bs});
      Tensor<T>& g = t.grad_mut(Var{as});
      for (std::int64_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * bin[i];
    }
    if (t.needs_grad(Var{bs})) {
      const Tensor<T>& ain = t.val(Var{as});
      Tensor<T>& g = t.grad_mut(Var{bs});
      for (std::int64_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * ain[i];
    }
  });
}

template <class T>
Var scale(Tape<T>& tape, Var a, T k) {
  const Tensor<T>& av = tape.val(a);
  Tensor<T> out(av.shape);
  for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * k;
  const int as = a.id;
  return tape.record(std::move(out), {a}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{as})) return;
    const Tensor<T>& gy = t.grad_ref(o);
    Tensor<T>& g = t.grad_mut(Var{as});
    for (std::int64_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * k;
  });
}

template <class T>
Var sum_all(Tape<T>& tape, Var a) {
  const Tensor<T>& av = tape.val(a);
  T s = T(0);
  for (std::int64_t i = 0; i < av.numel(); ++i) s += av[i];
  const int as = a.id;
  return tape.record(Tensor<T>({1}, s), {a}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{as})) return;
    const T g = t.grad(o)[0];
    Tensor<T>& ga = t.grad_mut(Var{as});
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

}  // namespace fsgfa
