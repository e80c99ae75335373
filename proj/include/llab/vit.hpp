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

namespace llab {

struct VitConfig {
  int resolution = 32;
  int patch = 4;
  int dim = 64;
  int depth = 4;
  int heads = 4;
  int ffn_mult = 4;

  int grid() const { return resolution / patch; }
  int tokens() const { return grid() * grid(); }
  int patch_dim() const { return patch * patch * 3; }

  void validate() const {
    if (resolution <= 0 || patch <= 0 || dim <= 0 || depth <= 0 || heads <= 0)
      throw ConfigError("vit: all dimensions must be positive");
    if (resolution % patch != 0)
      throw ConfigError("vit: resolution must be divisible by patch size");
    if (dim % heads != 0)
      throw ConfigError("vit: model dim must be divisible by heads");
  }
};

/// Pre-LN transformer block parameters (fused QKV projection).
struct TransformerBlock {
  Tensor ln1_g, ln1_b;
  Tensor qkv_w, qkv_b;
  Tensor out_w, out_b;
  Tensor ln2_g, ln2_b;
  Tensor fc1_w, fc1_b;
  Tensor fc2_w, fc2_b;

  static TransformerBlock init(int dim, int ffn_mult, Rng& rng) {
    const auto d = static_cast<std::size_t>(dim);
    const auto f = static_cast<std::size_t>(dim * ffn_mult);
    TransformerBlock b;
    b.ln1_g = Tensor::full({d}, 1.0, true);
    b.ln1_b = Tensor::zeros({d}, true);
    b.qkv_w = Tensor::randn({d, 3 * d}, rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
    b.qkv_b = Tensor::zeros({3 * d}, true);
    b.out_w = Tensor::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
    b.out_b = Tensor::zeros({d}, true);
    b.ln2_g = Tensor::full({d}, 1.0, true);
    b.ln2_b = Tensor::zeros({d}, true);
    b.fc1_w = Tensor::randn({d, f}, rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
    b.fc1_b = Tensor::zeros({f}, true);
    b.fc2_w = Tensor::randn({f, d}, rng, 1.0 / std::sqrt(static_cast<double>(f)), true);
    b.fc2_b = Tensor::zeros({d}, true);
    return b;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix) const {
    out.emplace_back(prefix + ".ln1_g", ln1_g);
    out.emplace_back(prefix + ".ln1_b", ln1_b);
    out.emplace_back(prefix + ".qkv_w", qkv_w);
    out.emplace_back(prefix + ".qkv_b", qkv_b);
    out.emplace_back(prefix + ".out_w", out_w);
    out.emplace_back(prefix + ".out_b", out_b);
    out.emplace_back(prefix + ".ln2_g", ln2_g);
    out.emplace_back(prefix + ".ln2_b", ln2_b);
    out.emplace_back(prefix + ".fc1_w", fc1_w);
    out.emplace_back(prefix + ".fc1_b", fc1_b);
    out.emplace_back(prefix + ".fc2_w", fc2_w);
    out.emplace_back(prefix + ".fc2_b", fc2_b);
  }

  /// x: (B*T) x dim. Attention runs per image (full, no mask).
  Tensor forward(const Tensor& x, int batch, int tokens, int heads) const {
    const std::size_t dim = x.cols();
    const std::size_t hd = dim / static_cast<std::size_t>(heads);
    const std::size_t t = static_cast<std::size_t>(tokens);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor h1 = layer_norm(x, ln1_g, ln1_b);
    Tensor qkv = add_rowvec(matmul(h1, qkv_w), qkv_b);
    std::vector<Tensor> pieces;
    std::vector<std::pair<std::size_t, std::size_t>> at;
    pieces.reserve(static_cast<std::size_t>(batch * heads));
    at.reserve(pieces.capacity());
    for (int b = 0; b < batch; ++b) {
      const std::size_t r0 = static_cast<std::size_t>(b) * t;
      for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * hd;
        Tensor q = slice_block(qkv, r0, t, c0, hd);
        Tensor k = slice_block(qkv, r0, t, dim + c0, hd);
        Tensor v = slice_block(qkv, r0, t, 2 * dim + c0, hd);
        Tensor scores = mul_scalar(matmul(q, transpose(k)), scale);
        Tensor attn = softmax(scores, 1);
        pieces.push_back(matmul(attn, v));
        at.emplace_back(r0, c0);
      }
    }
    Tensor merged = concat_blocks(x.rows(), dim, pieces, at);
    Tensor proj = add_rowvec(matmul(merged, out_w), out_b);
    Tensor res1 = add(x, proj);

    Tensor h2 = layer_norm(res1, ln2_g, ln2_b);
    Tensor ff = add_rowvec(
        matmul(gelu(add_rowvec(matmul(h2, fc1_w), fc1_b)), fc2_w), fc2_b);
    return add(res1, ff);
  }
};

/// Patch extraction: batch of images -> (B*T) x (p*p*3) constant tensor.
/// Token order is row-major over the patch grid; within a patch, pixels are
/// row-major with channels last.
inline Tensor patchify_batch(const std::vector<const ImageBuffer*>& batch,
                             const VitConfig& cfg) {
  const int p = cfg.patch, g = cfg.grid();
  const std::size_t t = static_cast<std::size_t>(cfg.tokens());
  const std::size_t pd = static_cast<std::size_t>(cfg.patch_dim());
  std::vector<double> out(batch.size() * t * pd);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const ImageBuffer& img = *batch[b];
    if (img.h != cfg.resolution || img.w != cfg.resolution)
      throw ShapeError("patchify: image is " + std::to_string(img.h) + "x" +
                       std::to_string(img.w) + ", expected " +
                       std::to_string(cfg.resolution) + " square");
    for (int u = 0; u < g; ++u)
      for (int v = 0; v < g; ++v) {
        double* row = out.data() + (b * t + static_cast<std::size_t>(u * g + v)) * pd;
        std::size_t k = 0;
        for (int py = 0; py < p; ++py)
          for (int px = 0; px < p; ++px)
            for (int ch = 0; ch < 3; ++ch)
              row[k++] = img.at(u * p + py, v * p + px, ch);
      }
  }
  return Tensor::from({batch.size() * t, pd}, std::move(out));
}

/// The encoder E: frozen after pretraining, maps an image to an h x w x c
/// token grid (per-patch tokens only, no pooled/class token).
struct EncoderModel {
  VitConfig cfg;
  std::string objective_tag;
  bool frozen = false;

  Tensor patch_w, patch_b, pos;
  std::vector<TransformerBlock> blocks;
  Tensor lnf_g, lnf_b;

  static EncoderModel init(const VitConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    EncoderModel m;
    m.cfg = cfg;
    Rng rng(seed);
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto pd = static_cast<std::size_t>(cfg.patch_dim());
    const auto t = static_cast<std::size_t>(cfg.tokens());
    m.patch_w = Tensor::randn({pd, d}, rng, 1.0 / std::sqrt(static_cast<double>(pd)), true);
    m.patch_b = Tensor::zeros({d}, true);
    m.pos = Tensor::randn({t, d}, rng, 0.02, true);
    m.blocks.reserve(static_cast<std::size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i)
      m.blocks.push_back(TransformerBlock::init(cfg.dim, cfg.ffn_mult, rng));
    m.lnf_g = Tensor::full({d}, 1.0, true);
    m.lnf_b = Tensor::zeros({d}, true);
    return m;
  }

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("patch_w", patch_w);
    out.emplace_back("patch_b", patch_b);
    out.emplace_back("pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(out, "blocks." + std::to_string(i));
    out.emplace_back("lnf_g", lnf_g);
    out.emplace_back("lnf_b", lnf_b);
    return out;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  void freeze() {
    frozen = true;
    for (auto& t : params()) t.node()->requires_grad = false;
  }

  /// SHA-256 over the raw f64 bytes of all parameters, in declaration order.
  std::string param_hash() const {
    Sha256 h;
    for (const auto& t : params())
      h.update(t.values().data(), t.values().size() * sizeof(double));
    return h.hex_digest();
  }

  /// Embedded patches (already matmul'd) -> last hidden state, (B*T) x dim.
  Tensor forward_embedded(const Tensor& embedded, int batch) const {
    Tensor x = add(embedded, tile_rows(pos, static_cast<std::size_t>(batch)));
    for (const auto& b : blocks)
      x = b.forward(x, batch, cfg.tokens(), cfg.heads);
    return layer_norm(x, lnf_g, lnf_b);
  }

  Tensor embed_patches(const Tensor& patches) const {
    return add_rowvec(matmul(patches, patch_w), patch_b);
  }

  Tensor forward_batch(const std::vector<const ImageBuffer*>& batch) const {
    return forward_embedded(embed_patches(patchify_batch(batch, cfg)),
                            static_cast<int>(batch.size()));
  }

  FeatureMap encode(const ImageBuffer& img) const {
    Tensor out = forward_batch({&img});
    FeatureMap f(cfg.grid(), cfg.grid(), cfg.dim);
    f.v = out.values();
    return f;
  }
};

}  // namespace llab
