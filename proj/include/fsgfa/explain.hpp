#pragma once

#include <cmath>
#include <string>

#include "fsgfa/image.hpp"
#include "fsgfa/networks.hpp"
#include "fsgfa/png_io.hpp"

namespace fsgfa {

/// Non-negative class activation map over the embedding layer's spatial
/// grid.
template <class T>
struct ActivationMap {
  Tensor<T> values;  // H x W, >= 0
  std::string source_layer = "phi_tilde";
  int target_class = -1;
};

namespace detail {

template <class T>
Var select_logit(Tape<T>& tape, Var logits, int row, int col) {
  const Tensor<T>& lv = tape.val(logits);
  check(lv.rank() == 2 && row >= 0 && row < lv.dim(0) && col >= 0 && col < lv.dim(1),
        "select_logit: index out of range for " + lv.shape_string());
  const int N = lv.dim(0), C = lv.dim(1);
  const int ls = logits.id;
  return tape.record(Tensor<T>({1}, lv.at2(row, col)), {logits}, [=](Tape<T>& t, Var o) {
    if (!t.needs_grad(Var{ls})) return;
    t.grad_mut(Var{ls}).data[static_cast<std::size_t>(row) * C + col] += t.grad_ref(o)[0];
    (void)N;
  });
}

}  // namespace detail

/// Importance-weighted activation combination: w_k = spatial mean of the
/// gradient at channel k, map = ReLU(sum_k w_k A_k).
template <class T>
Tensor<T> cam_combine(const Tensor<T>& acts, const Tensor<T>& grads) {
  check(acts.rank() == 4 && acts.dim(0) == 1, "cam_combine: expects 1 x C x H x W activations");
  check_same_shape(acts, grads, "cam_combine");
  const int C = acts.dim(1), H = acts.dim(2), W = acts.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Tensor<T> map({H, W});
  for (int c = 0; c < C; ++c) {
    const T* gp = grads.data.data() + static_cast<std::int64_t>(c) * plane;
    T wsum = T(0);
    for (std::int64_t i = 0; i < plane; ++i) wsum += gp[i];
    const T wk = wsum / static_cast<T>(plane);
    const T* ap = acts.data.data() + static_cast<std::int64_t>(c) * plane;
    for (std::int64_t i = 0; i < plane; ++i) map[i] += wk * ap[i];
  }
  for (auto& v : map.data) v = v > T(0) ? v : T(0);
  return map;
}

/// Grad-CAM over the feature-map embedding output: the target logit's
/// gradient at the embedding activations is pooled into per-channel weights,
/// and the weighted activation sum passes through a ReLU. Batch-norm runs in
/// eval mode; no parameter is updated.
template <class T>
ActivationMap<T> grad_cam(ModelBundle<T>& bundle, const Tensor<T>& image, int target_class) {
  check(image.rank() == 3 && image.dim(0) == 3,
        "grad_cam: expected a normalized 3 x H x W image, got " + image.shape_string());
  if (target_class < 0 || target_class >= bundle.config.num_classes)
    throw std::invalid_argument("grad_cam: class " + std::to_string(target_class) +
                                " out of range [0," + std::to_string(bundle.config.num_classes) +
                                ")");
  Tensor<T> batch({1, 3, image.dim(1), image.dim(2)});
  std::copy_n(image.data.data(), image.numel(), batch.data.data());

  Tape<T> tape;
  Var x = tape.leaf(std::move(batch), /*needs_grad=*/true);
  Var emb = bundle.embed(tape, bundle.extract(tape, x, BnMode::eval), BnMode::eval);
  Var score = detail::select_logit(tape, bundle.classify(tape, global_avg_pool(tape, emb)), 0,
                                   target_class);
  tape.backward(score);

  ActivationMap<T> out;
  out.target_class = target_class;
  out.values = cam_combine(tape.val(emb), tape.grad(emb));
  return out;
}

/// Fixed blue-to-red color ramp with t in [0, 1].
inline Color cam_ramp(double t) {
  auto ch = [](double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0); };
  return Color{ch(1.5 - std::abs(4 * t - 3)), ch(1.5 - std::abs(4 * t - 2)),
               ch(1.5 - std::abs(4 * t - 1))};
}

/// Writes the overlay PNG (map bilinearly upscaled, max-normalized, mapped
/// through the ramp, alpha-blended at 0.5) and returns the blended image.
template <class T>
Image overlay(const ActivationMap<T>& map, const Image& image, const std::string& path) {
  check(map.values.rank() == 2, "overlay: map must be H x W");
  Tensor<T> chw({1, map.values.dim(0), map.values.dim(1)});
  std::copy_n(map.values.data.data(), map.values.numel(), chw.data.data());
  Tensor<T> up = bilinear_resize_chw(chw, image.height, image.width);
  T mx = T(0);
  for (T v : up.data) mx = std::max(mx, v);
  Image out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double t = mx > T(0) ? static_cast<double>(up.at3(0, y, x)) / static_cast<double>(mx)
                                 : 0.0;
      const Color c = cam_ramp(t);
      for (int ch = 0; ch < 3; ++ch) {
        const double blended = 0.5 * image.at(y, x, image.channels == 3 ? ch : 0) + 0.5 * c[ch];
        out.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(blended));
      }
    }
  if (!path.empty()) write_png(path, out);
  return out;
}

/// Grayscale rendering of the raw map (max-normalized).
template <class T>
Image raw_map_image(const ActivationMap<T>& map) {
  T mx = T(0);
  for (T v : map.values.data) mx = std::max(mx, v);
  Image out(map.values.dim(1), map.values.dim(0), 1);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double t =
          mx > T(0) ? static_cast<double>(map.values.at2(y, x)) / static_cast<double>(mx) : 0.0;
      out.at(y, x, 0) = static_cast<std::uint8_t>(std::lround(t * 255.0));
    }
  return out;
}

}  // namespace fsgfa
