#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "llab/errors.hpp"

namespace llab {

/// h x w x c token grid f = E(i): one c-vector per spatial patch location,
/// token-major layout (row u, column v), channel-last.
struct FeatureMap {
  int h = 0, w = 0, c = 0;
  std::vector<double> v;
  bool normalized = false;

  FeatureMap() = default;
  FeatureMap(int hh, int ww, int cc)
      : h(hh), w(ww), c(cc),
        v(static_cast<std::size_t>(hh) * static_cast<std::size_t>(ww) *
          static_cast<std::size_t>(cc), 0.0) {}

  std::size_t tokens() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  double* token(int u, int vv) {
    return v.data() + (static_cast<std::size_t>(u) * static_cast<std::size_t>(w) +
                       static_cast<std::size_t>(vv)) * static_cast<std::size_t>(c);
  }
  const double* token(int u, int vv) const {
    return v.data() + (static_cast<std::size_t>(u) * static_cast<std::size_t>(w) +
                       static_cast<std::size_t>(vv)) * static_cast<std::size_t>(c);
  }
};

/// Channel-wise token normalization: every spatial feature vector rescaled
/// to unit L2 norm. Zero-norm tokens are an error.
inline FeatureMap normalize_tokens(const FeatureMap& f) {
  FeatureMap out = f;
  const std::size_t c = static_cast<std::size_t>(f.c);
  for (std::size_t t = 0; t < f.tokens(); ++t) {
    double s = 0.0;
    double* tok = out.v.data() + t * c;
    for (std::size_t k = 0; k < c; ++k) s += tok[k] * tok[k];
    const double nrm = std::sqrt(s);
    if (nrm == 0.0)
      throw DomainError("normalize_tokens: zero-norm token at index " +
                        std::to_string(t));
    const double inv = 1.0 / nrm;
    for (std::size_t k = 0; k < c; ++k) tok[k] *= inv;
  }
  out.normalized = true;
  return out;
}

/// Per-channel spatial activation grids, min-max normalized to [0,1] for
/// display. A constant channel maps to mid-gray (0.5).
inline std::vector<std::vector<double>> channel_activation_maps(
    const FeatureMap& f, const std::vector<int>& channels) {
  std::vector<std::vector<double>> maps;
  maps.reserve(channels.size());
  for (int ch : channels) {
    if (ch < 0 || ch >= f.c)
      throw ConfigError("channel_activation_maps: channel " +
                        std::to_string(ch) + " out of range (c=" +
                        std::to_string(f.c) + ")");
    std::vector<double> grid(f.tokens());
    double lo = 1e300, hi = -1e300;
    for (std::size_t t = 0; t < f.tokens(); ++t) {
      const double val = f.v[t * static_cast<std::size_t>(f.c) +
                             static_cast<std::size_t>(ch)];
      grid[t] = val;
      lo = std::min(lo, val);
      hi = std::max(hi, val);
    }
    if (hi - lo < 1e-12) {
      std::fill(grid.begin(), grid.end(), 0.5);
    } else {
      const double inv = 1.0 / (hi - lo);
      for (double& g : grid) g = (g - lo) * inv;
    }
    maps.push_back(std::move(grid));
  }
  return maps;
}

}  // namespace llab
