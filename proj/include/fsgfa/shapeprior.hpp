#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fsgfa/image.hpp"
#include "fsgfa/rng.hpp"
#include "fsgfa/tensor.hpp"

namespace fsgfa {

inline constexpr int kNumKeypoints = 68;

/// 68 ordered facial landmarks in the pixel frame of a specific image.
/// Indices follow the standard 68-point ordering (1-based in the literature):
/// 1-17 boundary, 18-27 eyebrows, 28-36 nose, 37-48 eyes, 49-68 mouth.
struct KeypointSet {
  std::vector<std::pair<double, double>> points;  // (x, y), exactly 68
  int frame_width = 0;
  int frame_height = 0;

  void validate() const {
    check(static_cast<int>(points.size()) == kNumKeypoints,
          "keypoints: expected 68 points, got " + std::to_string(points.size()));
    check(frame_width > 0 && frame_height > 0, "keypoints: frame extents must be positive");
  }
};

/// Semantic channel for a 0-based landmark index: 0 = eyes and eyebrows (R),
/// 1 = nose and mouth (G), 2 = face boundary (B).
inline int semantic_group(int idx0) {
  check(idx0 >= 0 && idx0 < kNumKeypoints, "semantic_group: index out of range");
  if (idx0 <= 16) return 2;                 // boundary 1-17
  if (idx0 <= 26) return 0;                 // eyebrows 18-27
  if (idx0 <= 35) return 1;                 // nose 28-36
  if (idx0 <= 47) return 0;                 // eyes 37-48
  return 1;                                 // mouth 49-68
}

/// Renders each keypoint as an unnormalized Gaussian (peak 1 at the keypoint,
/// truncated at 4 sigma) into a 68 x out x out stack. Keypoints are scaled
/// from their image frame into the out x out grid; points outside the frame
/// simply contribute whatever part of the truncated Gaussian intersects it.
template <class T>
Tensor<T> render_heatmaps(const KeypointSet& kps, int out = 64, double sigma = 2.0) {
  kps.validate();
  check(out >= 8, "render_heatmaps: output resolution must be >= 8");
  check(sigma > 0, "render_heatmaps: sigma must be positive");
  Tensor<T> maps({kNumKeypoints, out, out});
  const double sx = static_cast<double>(out) / kps.frame_width;
  const double sy = static_cast<double>(out) / kps.frame_height;
  const double radius = 4.0 * sigma;
  const double denom = 2.0 * sigma * sigma;
  for (int j = 0; j < kNumKeypoints; ++j) {
    const double px = kps.points[static_cast<std::size_t>(j)].first * sx;
    const double py = kps.points[static_cast<std::size_t>(j)].second * sy;
    const int y0 = std::max(0, static_cast<int>(std::floor(py - radius)));
    const int y1 = std::min(out - 1, static_cast<int>(std::ceil(py + radius)));
    const int x0 = std::max(0, static_cast<int>(std::floor(px - radius)));
    const int x1 = std::min(out - 1, static_cast<int>(std::ceil(px + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
        if (d2 > radius * radius) continue;
        maps.at3(j, y, x) = static_cast<T>(std::exp(-d2 / denom));
      }
  }
  return maps;
}

/// Post-processing Z: per-channel bilinear resize of the 68 raw maps, then
/// conversion to the three semantic channels by per-pixel maximum, clamped
/// to [0, 1].
template <class T>
Tensor<T> postprocess_z(const Tensor<T>& raw, int out = 56) {
  check(raw.rank() == 3 && raw.dim(0) == kNumKeypoints,
        "postprocess_z: expected a 68-channel stack, got " + raw.shape_string());
  check(out > 0, "postprocess_z: output resolution must be positive");
  Tensor<T> resized = bilinear_resize_chw(raw, out, out);
  Tensor<T> sem({3, out, out});
  for (int j = 0; j < kNumKeypoints; ++j) {
    const int g = semantic_group(j);
    for (int y = 0; y < out; ++y)
      for (int x = 0; x < out; ++x)
        sem.at3(g, y, x) = std::max(sem.at3(g, y, x), resized.at3(j, y, x));
  }
  for (auto& v : sem.data) v = std::clamp(v, T(0), T(1));
  return sem;
}

/// Adds independent Gaussian noise of standard deviation eps to every
/// coordinate; eps = 0 returns the input unchanged.
inline KeypointSet perturb_keypoints(const KeypointSet& kps, double eps, Rng& rng) {
  check(eps >= 0, "perturb_keypoints: eps must be non-negative");
  if (eps == 0.0) return kps;
  KeypointSet out = kps;
  for (auto& [x, y] : out.points) {
    x += rng.normal(0.0, eps);
    y += rng.normal(0.0, eps);
  }
  return out;
}

/// Keypoint source abstraction standing in for the frozen shape estimation
/// network. Implementations must be deterministic per (image id, seed, eps).
class KeypointProvider {
 public:
  virtual ~KeypointProvider() = default;
  virtual KeypointSet keypoints(const std::string& image_id) const = 0;
};

/// Reference provider: looks exact keypoints up (dataset manifests carry
/// them) and optionally perturbs with per-image-id seeded noise, so results
/// do not depend on call order.
class OracleKeypointProvider : public KeypointProvider {
 public:
  using Lookup = std::function<KeypointSet(const std::string&)>;

  OracleKeypointProvider(Lookup lookup, double eps = 0.0, std::uint64_t seed = 0)
      : lookup_(std::move(lookup)), eps_(eps), seed_(seed) {
    check(eps >= 0, "keypoint provider: eps must be non-negative");
  }

  KeypointSet keypoints(const std::string& image_id) const override {
    KeypointSet kps = lookup_(image_id);
    if (eps_ == 0.0) return kps;
    Rng rng(mix_seed(seed_, image_id));
    return perturb_keypoints(kps, eps_, rng);
  }

  double noise_eps() const { return eps_; }

 private:
  Lookup lookup_;
  double eps_;
  std::uint64_t seed_;
};

}  // namespace fsgfa
