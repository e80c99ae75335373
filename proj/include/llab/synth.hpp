#pragma once

// Procedural toy corpus: landscape-like scenes (sky gradient, ground, sun,
// cloud, building, tree) whose elements keep stable hue families while
// lightness, placement and size vary. The stable luminance->hue structure is
// what makes the colorization operator learnable at desk scale.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "llab/image.hpp"
#include "llab/imageio.hpp"
#include "llab/rng.hpp"

namespace llab {

namespace detail {

struct Rgb {
  double r, g, b;
};

inline void blend(ImageBuffer& img, int y, int x, const Rgb& c, double cov) {
  if (cov <= 0.0) return;
  img.at(y, x, 0) = img.at(y, x, 0) * (1 - cov) + c.r * cov;
  img.at(y, x, 1) = img.at(y, x, 1) * (1 - cov) + c.g * cov;
  img.at(y, x, 2) = img.at(y, x, 2) * (1 - cov) + c.b * cov;
}

// coverage from a signed distance (negative inside), ~1px soft edge
inline double soft(double dist, double edge) {
  return std::clamp(0.5 - dist / edge, 0.0, 1.0);
}

}  // namespace detail

inline ImageBuffer synth_image(std::uint64_t seed, int resolution) {
  using detail::Rgb;
  Rng rng(seed);
  const int res = resolution;
  ImageBuffer img(res, res);
  const double edge = 1.5 / res;

  const double horizon = rng.uniform(0.45, 0.72);

  const Rgb sky_top{rng.uniform(0.10, 0.35), rng.uniform(0.30, 0.55),
                    rng.uniform(0.65, 0.95)};
  const double sky_lift = rng.uniform(0.15, 0.35);
  const Rgb ground_top{rng.uniform(0.10, 0.30), rng.uniform(0.45, 0.75),
                       rng.uniform(0.08, 0.28)};
  const double ground_drop = rng.uniform(0.05, 0.25);

  const bool has_sun = rng.bernoulli(0.75);
  const double sun_cx = rng.uniform(0.12, 0.88);
  const double sun_cy = rng.uniform(0.08, std::max(0.1, horizon - 0.18));
  const double sun_r = rng.uniform(0.07, 0.16);
  const Rgb sun{rng.uniform(0.88, 1.0), rng.uniform(0.6, 0.85),
                rng.uniform(0.05, 0.3)};

  const bool has_cloud = rng.bernoulli(0.5);
  const double cl_cx = rng.uniform(0.15, 0.85);
  const double cl_cy = rng.uniform(0.08, std::max(0.1, horizon - 0.2));
  const double cl_rx = rng.uniform(0.12, 0.22);
  const double cl_ry = cl_rx * rng.uniform(0.35, 0.55);
  const double cl_w = rng.uniform(0.85, 0.97);
  const Rgb cloud{cl_w, cl_w, std::min(1.0, cl_w + 0.02)};

  const bool has_building = rng.bernoulli(0.6);
  const double b_x0 = rng.uniform(0.05, 0.6);
  const double b_w = rng.uniform(0.12, 0.3);
  const double b_h = rng.uniform(0.15, 0.4);
  const Rgb brick{rng.uniform(0.5, 0.78), rng.uniform(0.2, 0.38),
                  rng.uniform(0.15, 0.3)};

  const bool has_tree = rng.bernoulli(0.55);
  const double t_cx = rng.uniform(0.1, 0.9);
  const double t_base = rng.uniform(horizon + 0.05, 0.95);
  const double t_r = rng.uniform(0.08, 0.16);
  const Rgb canopy{rng.uniform(0.05, 0.2), rng.uniform(0.3, 0.55),
                   rng.uniform(0.05, 0.18)};
  const Rgb trunk{rng.uniform(0.35, 0.5), rng.uniform(0.2, 0.32),
                  rng.uniform(0.08, 0.18)};

  for (int y = 0; y < res; ++y) {
    const double v = (y + 0.5) / res;
    for (int x = 0; x < res; ++x) {
      const double u = (x + 0.5) / res;

      // background: sky above the horizon, ground below
      if (v < horizon) {
        const double f = v / horizon;  // 0 top .. 1 at horizon
        detail::blend(img, y, x,
                      {std::min(1.0, sky_top.r + sky_lift * f),
                       std::min(1.0, sky_top.g + sky_lift * f),
                       std::min(1.0, sky_top.b + sky_lift * 0.5 * f)},
                      1.0);
      } else {
        const double f = (v - horizon) / std::max(1e-9, 1.0 - horizon);
        detail::blend(img, y, x,
                      {std::max(0.0, ground_top.r - ground_drop * f),
                       std::max(0.0, ground_top.g - ground_drop * f),
                       std::max(0.0, ground_top.b - ground_drop * 0.5 * f)},
                      1.0);
      }

      if (has_sun) {
        const double d = std::hypot(u - sun_cx, v - sun_cy) - sun_r;
        detail::blend(img, y, x, sun, detail::soft(d, edge));
      }
      if (has_cloud) {
        const double dx = (u - cl_cx) / cl_rx, dy = (v - cl_cy) / cl_ry;
        const double d = (std::sqrt(dx * dx + dy * dy) - 1.0) * std::min(cl_rx, cl_ry);
        detail::blend(img, y, x, cloud, detail::soft(d, edge));
      }
      if (has_building) {
        const double dx = std::max(b_x0 - u, u - (b_x0 + b_w));
        const double dy = std::max((horizon - b_h) - v, v - (horizon + 0.03));
        const double d = std::max(dx, dy);
        detail::blend(img, y, x, brick, detail::soft(d, edge));
      }
      if (has_tree) {
        // trunk
        const double tw = 0.02;
        const double dx = std::max((t_cx - tw) - u, u - (t_cx + tw));
        const double dy = std::max((t_base - t_r * 1.6) - v, v - t_base);
        detail::blend(img, y, x, trunk, detail::soft(std::max(dx, dy), edge));
        // canopy
        const double d =
            std::hypot(u - t_cx, v - (t_base - t_r * 1.6)) - t_r;
        detail::blend(img, y, x, canopy, detail::soft(d, edge));
      }
    }
  }
  img.clamp01();
  return img;
}

/// Write `count` synthetic images (P6 ppm) into `dir`, named img00000.ppm...
inline std::vector<std::string> make_corpus(const std::string& dir, int count,
                                            int resolution, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> paths;
  paths.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img%05d.ppm", i);
    const auto path = (fs::path(dir) / name).string();
    const auto img =
        synth_image(mix_seed(seed, std::string("synth-") + name), resolution);
    save_ppm(img, path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace llab
