#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "llab/errors.hpp"
#include "llab/rng.hpp"

namespace llab {

/// H x W x 3 pixel buffer, values in [0,1], channel order R,G,B.
struct ImageBuffer {
  int h = 0, w = 0;
  std::vector<double> px;  // h*w*3, row-major, channel-last

  ImageBuffer() = default;
  ImageBuffer(int height, int width, double fill = 0.0)
      : h(height), w(width),
        px(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3,
           fill) {}

  double& at(int y, int x, int c) {
    return px[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
               static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)];
  }
  double at(int y, int x, int c) const {
    return px[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
               static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)];
  }

  void clamp01() {
    for (double& v : px) v = std::clamp(v, 0.0, 1.0);
  }
};

inline bool same_shape(const ImageBuffer& a, const ImageBuffer& b) {
  return a.h == b.h && a.w == b.w;
}

// ---------------------------------------------------------------------------
// pixel-space operators
// ---------------------------------------------------------------------------

enum class PixelOpKind { identity, swap_rb, suppress, grayscale };

inline const char* pixel_op_name(PixelOpKind k) {
  switch (k) {
    case PixelOpKind::identity: return "identity";
    case PixelOpKind::swap_rb: return "swap_rb";
    case PixelOpKind::suppress: return "suppress";
    case PixelOpKind::grayscale: return "grayscale";
  }
  return "?";
}

/// Pixel-space edit. `suppress` multiplies one channel by alpha in (0,1);
/// repeated application converges to the channel-zeroing projector.
struct PixelOperator {
  PixelOpKind kind = PixelOpKind::identity;
  int channel = 2;     // suppress target, 0=R 1=G 2=B
  double alpha = 0.9;  // suppress factor

  static PixelOperator identity() { return {PixelOpKind::identity, 2, 1.0}; }
  static PixelOperator swap_rb() { return {PixelOpKind::swap_rb, 2, 1.0}; }
  static PixelOperator suppress(int channel, double alpha) {
    if (channel < 0 || channel > 2)
      throw ConfigError("suppress: channel must be 0..2");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw ConfigError("suppress: alpha must be in (0,1)");
    return {PixelOpKind::suppress, channel, alpha};
  }
  static PixelOperator grayscale() { return {PixelOpKind::grayscale, 2, 1.0}; }

  std::string tag() const {
    if (kind == PixelOpKind::suppress)
      return std::string("suppress(ch=") + std::to_string(channel) +
             ",alpha=" + std::to_string(alpha) + ")";
    return pixel_op_name(kind);
  }
};

/// ITU-R BT.601 luma, replicated into all three channels.
inline ImageBuffer to_grayscale(const ImageBuffer& img) {
  ImageBuffer out(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const double lum = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                         0.114 * img.at(y, x, 2);
      out.at(y, x, 0) = lum;
      out.at(y, x, 1) = lum;
      out.at(y, x, 2) = lum;
    }
  return out;
}

inline ImageBuffer apply_pixel_op(const PixelOperator& op,
                                  const ImageBuffer& img) {
  switch (op.kind) {
    case PixelOpKind::identity:
      return img;
    case PixelOpKind::swap_rb: {
      ImageBuffer out(img.h, img.w);
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
          out.at(y, x, 0) = img.at(y, x, 2);
          out.at(y, x, 1) = img.at(y, x, 1);
          out.at(y, x, 2) = img.at(y, x, 0);
        }
      return out;
    }
    case PixelOpKind::suppress: {
      ImageBuffer out = img;
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) out.at(y, x, op.channel) *= op.alpha;
      return out;
    }
    case PixelOpKind::grayscale:
      return to_grayscale(img);
  }
  throw ConfigError("apply_pixel_op: unknown kind");
}

// ---------------------------------------------------------------------------
// geometry
// ---------------------------------------------------------------------------

/// Bilinear resize with half-pixel centers; same-size resize is the exact
/// identity.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int oh, int ow) {
  if (oh <= 0 || ow <= 0) throw ConfigError("resize: target must be positive");
  if (oh == img.h && ow == img.w) return img;
  ImageBuffer out(oh, ow);
  const double sy = static_cast<double>(img.h) / oh;
  const double sx = static_cast<double>(img.w) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

inline ImageBuffer crop(const ImageBuffer& img, int y0, int x0, int ch, int cw) {
  if (y0 < 0 || x0 < 0 || y0 + ch > img.h || x0 + cw > img.w)
    throw ConfigError("crop out of range");
  ImageBuffer out(ch, cw);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

/// Center-crop to the largest square.
inline ImageBuffer center_crop_square(const ImageBuffer& img) {
  const int side = std::min(img.h, img.w);
  const int y0 = (img.h - side) / 2;
  const int x0 = (img.w - side) / 2;
  return crop(img, y0, x0, side, side);
}

/// Ingestion policy: center-crop square, then bilinear-resize to the target.
inline ImageBuffer fit_to_resolution(const ImageBuffer& img, int resolution) {
  return resize_bilinear(center_crop_square(img), resolution, resolution);
}

// ---------------------------------------------------------------------------
// augmentation (feeds contrastive pretraining)
// ---------------------------------------------------------------------------

struct AugmentParams {
  bool hflip = false;
  double crop_scale = 1.0;  // side-length fraction in [min_scale, 1]
  double crop_cy = 0.5;     // crop center, relative
  double crop_cx = 0.5;
  double jitter[3] = {0.0, 0.0, 0.0};  // additive per-channel brightness
};

inline AugmentParams sample_augment_params(std::uint64_t seed,
                                           double min_scale = 0.6,
                                           double max_jitter = 0.2) {
  Rng rng(seed);
  AugmentParams p;
  p.hflip = rng.bernoulli(0.5);
  p.crop_scale = rng.uniform(min_scale, 1.0);
  p.crop_cy = rng.uniform(0.0, 1.0);
  p.crop_cx = rng.uniform(0.0, 1.0);
  for (double& j : p.jitter) j = rng.uniform(-max_jitter, max_jitter);
  return p;
}

inline ImageBuffer apply_augment(const ImageBuffer& img,
                                 const AugmentParams& p) {
  ImageBuffer work = img;
  if (p.hflip) {
    for (int y = 0; y < work.h; ++y)
      for (int x = 0; x < work.w / 2; ++x)
        for (int c = 0; c < 3; ++c)
          std::swap(work.at(y, x, c), work.at(y, work.w - 1 - x, c));
  }
  if (p.crop_scale < 1.0) {
    const int side = std::max(1, static_cast<int>(std::lround(p.crop_scale * std::min(work.h, work.w))));
    const int maxy = work.h - side, maxx = work.w - side;
    const int y0 = static_cast<int>(std::lround(p.crop_cy * maxy));
    const int x0 = static_cast<int>(std::lround(p.crop_cx * maxx));
    work = resize_bilinear(crop(work, y0, x0, side, side), img.h, img.w);
  }
  if (p.jitter[0] != 0.0 || p.jitter[1] != 0.0 || p.jitter[2] != 0.0) {
    for (int y = 0; y < work.h; ++y)
      for (int x = 0; x < work.w; ++x)
        for (int c = 0; c < 3; ++c)
          work.at(y, x, c) = std::clamp(work.at(y, x, c) + p.jitter[c], 0.0, 1.0);
  }
  return work;
}

/// Random flip / crop-resize / brightness jitter, deterministic in `seed`.
inline ImageBuffer augment(const ImageBuffer& img, std::uint64_t seed) {
  return apply_augment(img, sample_augment_params(seed));
}

}  // namespace llab
