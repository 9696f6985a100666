#pragma once

#include "fsgfa/image.hpp"
#include "fsgfa/rng.hpp"
#include "fsgfa/tensor.hpp"

namespace fsgfa {

struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  bool valid() const { return x1 < x2 && y1 < y2; }

  static BBox whole(const Image& img) {
    return BBox{0, 0, static_cast<double>(img.width), static_cast<double>(img.height)};
  }
};

/// Four non-negative ratios controlling how far each bounding-box side moves.
struct MarginParams {
  double m_x1 = 0, m_x2 = 0, m_y1 = 0, m_y2 = 0;
};

/// The 2x2 transforms on (x1, x2) and (y1, y2):
///   x1' = (1 + 0.5 m_x1) x1 - 0.5 m_x1 x2
///   x2' = -0.5 m_x2 x1 + (1 + 0.5 m_x2) x2
/// and likewise for y. Transformed boxes may extend outside the image.
inline BBox apply_margin(const BBox& b, const MarginParams& m) {
  check(b.valid(), "apply_margin: box must satisfy x1 < x2 and y1 < y2");
  BBox out;
  out.x1 = (1.0 + 0.5 * m.m_x1) * b.x1 - 0.5 * m.m_x1 * b.x2;
  out.x2 = -0.5 * m.m_x2 * b.x1 + (1.0 + 0.5 * m.m_x2) * b.x2;
  out.y1 = (1.0 + 0.5 * m.m_y1) * b.y1 - 0.5 * m.m_y1 * b.y2;
  out.y2 = -0.5 * m.m_y2 * b.y1 + (1.0 + 0.5 * m.m_y2) * b.y2;
  return out;
}

/// The seven evaluation margins. m1-m5 expand all sides by the same ratio;
/// m6 and m7 move each side differently.
inline MarginParams margin_preset(int id) {
  switch (id) {
    case 1: return {0.50, 0.50, 0.50, 0.50};
    case 2: return {1.00, 1.00, 1.00, 1.00};
    case 3: return {1.50, 1.50, 1.50, 1.50};
    case 4: return {2.00, 2.00, 2.00, 2.00};
    case 5: return {2.50, 2.50, 2.50, 2.50};
    case 6: return {1.25, 0.70, 1.75, 2.15};
    case 7: return {0.33, 2.13, 2.17, 2.34};
    default:
      throw std::invalid_argument("margin_preset: id must be in 1..7, got " + std::to_string(id));
  }
}

/// Four independent U(0, 3) draws.
inline MarginParams sample_random_margin(Rng& rng) {
  MarginParams m;
  m.m_x1 = rng.uniform(0.0, 3.0);
  m.m_x2 = rng.uniform(0.0, 3.0);
  m.m_y1 = rng.uniform(0.0, 3.0);
  m.m_y2 = rng.uniform(0.0, 3.0);
  return m;
}

/// Extracts a (possibly out-of-frame) box from a byte-domain CHW image
/// tensor and resizes straight to out x out. Out-of-frame pixels are
/// mid-gray so they carry no signal after normalization.
template <class T>
Tensor<T> crop_by_box(const Tensor<T>& chw, const BBox& b, int out) {
  check(b.width() > 0 && b.height() > 0, "crop_by_box: box must have positive area");
  return crop_resize(chw, b.x1, b.y1, b.x2, b.y2, out, out, T(127.5));
}

template <class T>
Tensor<T> crop_by_box(const Image& img, const BBox& b, int out) {
  return crop_by_box(to_chw<T>(img), b, out);
}

}  // namespace fsgfa
