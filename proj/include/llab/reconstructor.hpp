#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "llab/errors.hpp"
#include "llab/features.hpp"
#include "llab/image.hpp"
#include "llab/rng.hpp"
#include "llab/sha256.hpp"
#include "llab/tensor.hpp"
#include "llab/vit.hpp"

namespace llab {

struct ReconstructorConfig {
  int grid_h = 8, grid_w = 8;  // token grid
  int dim = 64;
  int patch = 4;  // upsampling factor back to pixels
  int depth = 4;
  int heads = 4;
  int ffn_mult = 4;

  int tokens() const { return grid_h * grid_w; }
  int out_h() const { return grid_h * patch; }
  int out_w() const { return grid_w * patch; }

  int stages() const {
    int p = patch, n = 0;
    while (p > 1) {
      if (p % 2 != 0) throw ConfigError("reconstructor: patch must be a power of 2");
      p /= 2;
      ++n;
    }
    return n;
  }
  int stage_channels(int stage) const {  // channels after stage (0-based)
    int c = dim;
    for (int i = 0; i <= stage; ++i) c = std::max(8, c / 2);
    return c;
  }

  void validate() const {
    if (grid_h <= 0 || grid_w <= 0 || dim <= 0 || depth <= 0 || heads <= 0)
      throw ConfigError("reconstructor: dimensions must be positive");
    if (dim % heads != 0)
      throw ConfigError("reconstructor: dim must be divisible by heads");
    (void)stages();
  }

  static ReconstructorConfig for_encoder(const VitConfig& enc) {
    ReconstructorConfig r;
    r.grid_h = r.grid_w = enc.grid();
    r.dim = enc.dim;
    r.patch = enc.patch;
    r.heads = enc.heads;
    r.ffn_mult = enc.ffn_mult;
    return r;
  }
};

/// One x2 upsampling stage: nearest-neighbor upsample followed by a residual
/// block of two 3x3 convolutions (im2col matmul) with ReLU; the skip path is
/// a 1x1 projection when the channel width changes.
struct UpsampleStage {
  int cin = 0, cout = 0;
  Tensor c1_w, c1_b, c2_w, c2_b;
  Tensor skip_w, skip_b;  // defined only when cin != cout

  static UpsampleStage init(int cin, int cout, Rng& rng) {
    UpsampleStage s;
    s.cin = cin;
    s.cout = cout;
    const auto ci = static_cast<std::size_t>(cin);
    const auto co = static_cast<std::size_t>(cout);
    s.c1_w = Tensor::randn({9 * ci, co}, rng,
                           1.0 / std::sqrt(9.0 * static_cast<double>(cin)), true);
    s.c1_b = Tensor::zeros({co}, true);
    s.c2_w = Tensor::randn({9 * co, co}, rng,
                           1.0 / std::sqrt(9.0 * static_cast<double>(cout)), true);
    s.c2_b = Tensor::zeros({co}, true);
    if (cin != cout) {
      s.skip_w = Tensor::randn({ci, co}, rng,
                               1.0 / std::sqrt(static_cast<double>(cin)), true);
      s.skip_b = Tensor::zeros({co}, true);
    }
    return s;
  }

  Tensor forward(const Tensor& x, std::size_t b, std::size_t h,
                 std::size_t w) const {
    // caller has already upsampled; x is (b*h*w) x cin at the stage grid
    Tensor y = add_rowvec(
        matmul(im2col3(x, b, h, w, static_cast<std::size_t>(cin)), c1_w), c1_b);
    y = relu(y);
    y = add_rowvec(
        matmul(im2col3(y, b, h, w, static_cast<std::size_t>(cout)), c2_w), c2_b);
    Tensor skip = (cin == cout) ? x : add_rowvec(matmul(x, skip_w), skip_b);
    return add(y, skip);
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const {
    out.emplace_back(prefix + ".c1_w", c1_w);
    out.emplace_back(prefix + ".c1_b", c1_b);
    out.emplace_back(prefix + ".c2_w", c2_w);
    out.emplace_back(prefix + ".c2_b", c2_b);
    if (cin != cout) {
      out.emplace_back(prefix + ".skip_w", skip_w);
      out.emplace_back(prefix + ".skip_b", skip_b);
    }
  }
};

/// R_theta: four transformer blocks over the token grid, then upsampling
/// stages interleaved with residual conv blocks, then a 1x1 head to RGB.
/// Output is unbounded inside the loss; clamping happens only at report time.
struct ReconstructorModel {
  ReconstructorConfig cfg;
  Tensor pos;
  std::vector<TransformerBlock> blocks;
  Tensor lnf_g, lnf_b;
  std::vector<UpsampleStage> stages;
  Tensor head_w, head_b;

  static ReconstructorModel init(const ReconstructorConfig& cfg,
                                 std::uint64_t seed) {
    cfg.validate();
    ReconstructorModel m;
    m.cfg = cfg;
    Rng rng(seed);
    const auto d = static_cast<std::size_t>(cfg.dim);
    m.pos = Tensor::randn({static_cast<std::size_t>(cfg.tokens()), d}, rng, 0.02, true);
    for (int i = 0; i < cfg.depth; ++i)
      m.blocks.push_back(TransformerBlock::init(cfg.dim, cfg.ffn_mult, rng));
    m.lnf_g = Tensor::full({d}, 1.0, true);
    m.lnf_b = Tensor::zeros({d}, true);
    int cin = cfg.dim;
    for (int s = 0; s < cfg.stages(); ++s) {
      const int cout = cfg.stage_channels(s);
      m.stages.push_back(UpsampleStage::init(cin, cout, rng));
      cin = cout;
    }
    m.head_w = Tensor::randn({static_cast<std::size_t>(cin), 3}, rng,
                             1.0 / std::sqrt(static_cast<double>(cin)), true);
    m.head_b = Tensor::zeros({3}, true);
    return m;
  }

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(out, "blocks." + std::to_string(i));
    out.emplace_back("lnf_g", lnf_g);
    out.emplace_back("lnf_b", lnf_b);
    for (std::size_t i = 0; i < stages.size(); ++i)
      stages[i].collect(out, "stages." + std::to_string(i));
    out.emplace_back("head_w", head_w);
    out.emplace_back("head_b", head_b);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  std::string param_hash() const {
    Sha256 h;
    for (const auto& t : params())
      h.update(t.values().data(), t.values().size() * sizeof(double));
    return h.hex_digest();
  }

  /// tokens: (B*T) x dim -> (B*H*W) x 3, unclamped.
  Tensor forward(const Tensor& tokens, int batch) const {
    if (tokens.cols() != static_cast<std::size_t>(cfg.dim) ||
        tokens.rows() != static_cast<std::size_t>(batch) *
                             static_cast<std::size_t>(cfg.tokens()))
      throw ShapeError("reconstructor: token tensor has wrong shape");
    Tensor x = add(tokens, tile_rows(pos, static_cast<std::size_t>(batch)));
    for (const auto& b : blocks)
      x = b.forward(x, batch, cfg.tokens(), cfg.heads);
    x = layer_norm(x, lnf_g, lnf_b);

    const auto bb = static_cast<std::size_t>(batch);
    std::size_t h = static_cast<std::size_t>(cfg.grid_h);
    std::size_t w = static_cast<std::size_t>(cfg.grid_w);
    std::size_t ch = static_cast<std::size_t>(cfg.dim);
    for (const auto& st : stages) {
      x = upsample2x(x, bb, h, w, ch);
      h *= 2;
      w *= 2;
      x = st.forward(x, bb, h, w);
      ch = static_cast<std::size_t>(st.cout);
    }
    return add_rowvec(matmul(x, head_w), head_b);
  }

  /// Inference convenience: one feature map -> report-time image (clamped).
  ImageBuffer reconstruct(const FeatureMap& f) const {
    if (f.c != cfg.dim || f.h != cfg.grid_h || f.w != cfg.grid_w)
      throw ShapeError("reconstruct: feature map " + std::to_string(f.h) + "x" +
                       std::to_string(f.w) + "x" + std::to_string(f.c) +
                       " does not match reconstructor");
    Tensor tokens = Tensor::from(
        {static_cast<std::size_t>(cfg.tokens()), static_cast<std::size_t>(cfg.dim)},
        f.v);
    Tensor out = forward(tokens, 1);
    ImageBuffer img(cfg.out_h(), cfg.out_w());
    img.px = out.values();
    img.clamp01();
    return img;
  }
};

}  // namespace llab
