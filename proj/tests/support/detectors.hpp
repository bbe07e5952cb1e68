#pragma once

// Pixel-level checks of rendered clips, written independently of the renderer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wisa/numcore/tensor.hpp"
#include "wisa/physchema/categories.hpp"

namespace wisa::testing {

struct ClipView {
  const numcore::Tensor& t;
  std::size_t frames() const { return t.dim(0); }
  std::size_t height() const { return t.dim(1); }
  std::size_t width() const { return t.dim(2); }
  double at(std::size_t f, std::size_t r, std::size_t c) const { return t[(f * height() + r) * width() + c]; }
};

// Mean absolute frame difference summed over consecutive frame pairs.
inline double motion_energy(const numcore::Tensor& clip) {
  ClipView v{clip};
  double e = 0.0;
  for (std::size_t f = 1; f < v.frames(); ++f)
    for (std::size_t r = 0; r < v.height(); ++r)
      for (std::size_t c = 0; c < v.width(); ++c) e += std::abs(v.at(f, r, c) - v.at(f - 1, r, c));
  return e / static_cast<double>(v.height() * v.width());
}

// Labels that imply visible change over time.
inline bool labels_imply_motion(const physchema::CategoryVector& labels) {
  for (int id : labels.active_ids()) {
    if ((id >= 1 && id <= 6) || (id >= 8 && id <= 13) || id == 21 || (id >= 23 && id <= 28)) return true;
  }
  return false;
}

inline double frame_total(const numcore::Tensor& clip, std::size_t f) {
  ClipView v{clip};
  double s = 0.0;
  for (std::size_t r = 0; r < v.height(); ++r)
    for (std::size_t c = 0; c < v.width(); ++c) s += v.at(f, r, c);
  return s;
}

// Intensity-weighted centroid of pixels above the background level of frame f.
inline std::pair<double, double> bright_centroid(const numcore::Tensor& clip, std::size_t f, double background) {
  ClipView v{clip};
  double sx = 0, sy = 0, m = 0;
  for (std::size_t r = 0; r < v.height(); ++r)
    for (std::size_t c = 0; c < v.width(); ++c) {
      const double w = v.at(f, r, c) - background;
      if (w <= 1e-6) continue;
      sx += w * (static_cast<double>(c) + 0.5);
      sy += w * (static_cast<double>(r) + 0.5);
      m += w;
    }
  return {sx / m, sy / m};
}

struct MirrorFit {
  double top_energy = 0;  // squared contrast in the top half
  double gain = 0;        // least-squares bottom = gain * flipped top
  double residual = 1;    // relative squared residual of that fit
};

// Contrast is measured from the darkest pixel of each frame.
inline MirrorFit mirror_fit(const numcore::Tensor& clip) {
  ClipView v{clip};
  const std::size_t half = v.height() / 2;
  double tt = 0, tb = 0, bb = 0;
  for (std::size_t f = 0; f < v.frames(); ++f) {
    double lo = v.at(f, 0, 0);
    for (std::size_t r = 0; r < v.height(); ++r)
      for (std::size_t c = 0; c < v.width(); ++c) lo = std::min(lo, v.at(f, r, c));
    for (std::size_t r = 0; r < half; ++r)
      for (std::size_t c = 0; c < v.width(); ++c) {
        const double top = v.at(f, r, c) - lo;
        const double bottom = v.at(f, v.height() - 1 - r, c) - lo;
        tt += top * top;
        tb += top * bottom;
        bb += bottom * bottom;
      }
  }
  MirrorFit fit;
  fit.top_energy = tt / static_cast<double>(v.frames());
  if (tt <= 0.0 || bb <= 0.0) return fit;
  fit.gain = tb / tt;
  fit.residual = std::max(0.0, bb - fit.gain * tb) / bb;
  return fit;
}

inline bool looks_mirrored(const numcore::Tensor& clip) {
  const auto fit = mirror_fit(clip);
  return fit.top_energy > 1.0 && fit.gain >= 0.2 && fit.gain <= 0.8 && fit.residual < 0.01;
}

}  // namespace wisa::testing
