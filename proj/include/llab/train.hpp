#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "llab/corpus.hpp"
#include "llab/errors.hpp"
#include "llab/imageio.hpp"
#include "llab/optim.hpp"
#include "llab/reconstructor.hpp"
#include "llab/tensor.hpp"
#include "llab/vit.hpp"

namespace llab {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 10;
  AdamConfig adam{};
  LrSchedule schedule = LrSchedule::constant(3e-4);
  std::uint64_t seed = 0;
  std::string objective = "autoencoder";  // contrastive | masked-recon | autoencoder
  double mask_ratio = 0.5;                // masked-recon
  double temperature = 0.07;              // contrastive

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
      throw ConfigError("train: mask_ratio must be in (0,1)");
    if (temperature <= 0.0) throw ConfigError("train: temperature must be > 0");
    if (objective != "contrastive" && objective != "masked-recon" &&
        objective != "autoencoder")
      throw ConfigError("train: unknown objective '" + objective + "'");
  }
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> val_mse;  // reconstructor training only
};

inline std::vector<ImageBuffer> load_split_images(const SplitRef& split,
                                                  int resolution,
                                                  std::size_t limit = 0) {
  const auto& files = split.files();
  if (files.empty())
    throw DataError(std::string("split '") + split.name() + "' is empty");
  std::size_t n = files.size();
  if (limit > 0) n = std::min(n, limit);
  std::vector<ImageBuffer> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(load_image_resized(files[i], resolution));
  return out;
}

/// Symmetric InfoNCE over two batches of embeddings (rows are paired).
/// Embeddings are L2-normalized internally; `tau` is the temperature.
inline Tensor infonce_loss(const Tensor& z1, const Tensor& z2, double tau) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols())
    throw ShapeError("infonce: embedding shapes disagree");
  if (z1.rows() < 2) throw ShapeError("infonce: needs batch >= 2");
  Tensor n1 = row_normalize(z1);
  Tensor n2 = row_normalize(z2);
  Tensor logits = mul_scalar(matmul(n1, transpose(n2)), 1.0 / tau);
  Tensor a = cross_entropy_diag(logits);
  Tensor b = cross_entropy_diag(transpose(logits));
  return mul_scalar(add(a, b), 0.5);
}

namespace detail {

inline void check_finite_loss(double loss, const std::string& objective,
                              int epoch, std::size_t step) {
  if (!std::isfinite(loss))
    throw NumericError("training diverged: non-finite " + objective +
                       " loss at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step));
}

/// Pixel rows for a batch as a (B*H*W) x 3 constant, matching the
/// reconstructor's output layout.
inline Tensor image_rows(const std::vector<const ImageBuffer*>& batch) {
  const auto& first = *batch.front();
  const std::size_t hw =
      static_cast<std::size_t>(first.h) * static_cast<std::size_t>(first.w);
  std::vector<double> out;
  out.reserve(batch.size() * hw * 3);
  for (const ImageBuffer* img : batch)
    out.insert(out.end(), img->px.begin(), img->px.end());
  return Tensor::from({batch.size() * hw, 3}, std::move(out));
}

}  // namespace detail

/// Pretrain one encoder of the zoo under the configured objective, then
/// freeze it. Throwaway heads (projection head, mask token, pixel decoders)
/// are local to this function and discarded on return.
inline EncoderModel pretrain_encoder(const VitConfig& vit, const TrainConfig& cfg,
                                     const SplitRef& corpus,
                                     TrainLog* log = nullptr) {
  cfg.validate();
  vit.validate();
  corpus.require(Split::encoder_pretrain);
  const auto images = load_split_images(corpus, vit.resolution);

  EncoderModel model = EncoderModel::init(vit, mix_seed(cfg.seed, "encoder-init"));
  model.objective_tag = cfg.objective;

  const auto d = static_cast<std::size_t>(vit.dim);
  const auto pd = static_cast<std::size_t>(vit.patch_dim());
  Rng head_rng(mix_seed(cfg.seed, "encoder-heads"));

  std::vector<Tensor> params;
  for (auto& p : model.params()) params.push_back(p);

  // throwaway heads
  Tensor proj1_w, proj1_b, proj2_w, proj2_b, mask_token, head_w, head_b;
  if (cfg.objective == "contrastive") {
    // two-layer projection head, discarded after pretraining
    proj1_w = Tensor::randn({d, d}, head_rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
    proj1_b = Tensor::zeros({d}, true);
    proj2_w = Tensor::randn({d, d}, head_rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
    proj2_b = Tensor::zeros({d}, true);
    params.push_back(proj1_w);
    params.push_back(proj1_b);
    params.push_back(proj2_w);
    params.push_back(proj2_b);
  } else {
    head_w = Tensor::randn({d, pd}, head_rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
    head_b = Tensor::zeros({pd}, true);
    params.push_back(head_w);
    params.push_back(head_b);
    if (cfg.objective == "masked-recon") {
      mask_token = Tensor::randn({1, d}, head_rng, 0.02, true);
      params.push_back(mask_token);
    }
  }

  OptimizerState opt = OptimizerState::init(params, cfg.adam);
  Rng order_rng(mix_seed(cfg.seed, "encoder-order"));
  const std::size_t t = static_cast<std::size_t>(vit.tokens());
  std::size_t global_step = 0;

  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(idx);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bsz =
          std::min(static_cast<std::size_t>(cfg.batch_size), idx.size() - start);
      if (cfg.objective == "contrastive" && bsz < 2) continue;

      Tensor loss;
      if (cfg.objective == "contrastive") {
        // two augmented views per image, stacked into one forward pass
        std::vector<ImageBuffer> views;
        views.reserve(2 * bsz);
        for (std::size_t k = 0; k < 2 * bsz; ++k) {
          const std::size_t img_i = idx[start + (k % bsz)];
          const std::uint64_t aseed =
              mix_seed(cfg.seed, "aug-" + std::to_string(epoch) + "-" +
                                     std::to_string(start) + "-" + std::to_string(k));
          views.push_back(augment(images[img_i], aseed));
        }
        std::vector<const ImageBuffer*> batch;
        for (const auto& v : views) batch.push_back(&v);
        Tensor tokens = model.forward_batch(batch);
        Tensor pooled = mean_pool_rows(tokens, t);  // (2B) x d
        Tensor hidden = gelu(add_rowvec(matmul(pooled, proj1_w), proj1_b));
        Tensor z = add_rowvec(matmul(hidden, proj2_w), proj2_b);
        Tensor z1 = slice_block(z, 0, bsz, 0, d);
        Tensor z2 = slice_block(z, bsz, bsz, 0, d);
        loss = infonce_loss(z1, z2, cfg.temperature);
      } else if (cfg.objective == "autoencoder") {
        std::vector<const ImageBuffer*> batch;
        for (std::size_t k = 0; k < bsz; ++k) batch.push_back(&images[idx[start + k]]);
        Tensor patches = patchify_batch(batch, vit);
        Tensor tokens = model.forward_embedded(model.embed_patches(patches),
                                               static_cast<int>(bsz));
        Tensor pixels = add_rowvec(matmul(tokens, head_w), head_b);
        loss = mse_loss(pixels, patches);
      } else {  // masked-recon
        std::vector<const ImageBuffer*> batch;
        for (std::size_t k = 0; k < bsz; ++k) batch.push_back(&images[idx[start + k]]);
        Tensor patches = patchify_batch(batch, vit);
        // pick masked token rows per image
        Rng mask_rng(mix_seed(cfg.seed, "mask-" + std::to_string(epoch) + "-" +
                                            std::to_string(start)));
        const std::size_t n_mask = std::max<std::size_t>(
            1, static_cast<std::size_t>(cfg.mask_ratio * static_cast<double>(t)));
        std::vector<std::size_t> masked;
        std::vector<double> keep(bsz * t * d, 1.0);
        std::vector<double> indicator(bsz * t, 0.0);
        for (std::size_t b = 0; b < bsz; ++b) {
          std::vector<std::size_t> order(t);
          std::iota(order.begin(), order.end(), 0);
          mask_rng.shuffle(order);
          for (std::size_t k = 0; k < n_mask; ++k) {
            const std::size_t row = b * t + order[k];
            masked.push_back(row);
            std::fill_n(keep.data() + row * d, d, 0.0);
            indicator[row] = 1.0;
          }
        }
        std::sort(masked.begin(), masked.end());
        Tensor embedded = model.embed_patches(patches);
        Tensor kept = mul(embedded, Tensor::from({bsz * t, d}, std::move(keep)));
        Tensor mask_fill =
            matmul(Tensor::from({bsz * t, 1}, std::move(indicator)), mask_token);
        Tensor tokens = model.forward_embedded(add(kept, mask_fill),
                                               static_cast<int>(bsz));
        Tensor picked = gather_rows(tokens, masked);
        Tensor pred = add_rowvec(matmul(picked, head_w), head_b);
        Tensor target = gather_rows(patches, masked);
        loss = mse_loss(pred, target);
      }

      detail::check_finite_loss(loss.item(), cfg.objective, epoch, global_step);
      backward(loss);
      adam_step(params, opt, lr_at(cfg.schedule, global_step));
      ++global_step;
      epoch_loss += loss.item();
      ++batches;
    }
    if (log) log->epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
  }

  model.freeze();
  return model;
}

/// Precompute normalized feature tokens for a set of images under a frozen
/// encoder (the reconstructor's training inputs).
inline std::vector<std::vector<double>> encode_normalized(
    const EncoderModel& enc, const std::vector<ImageBuffer>& images) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (const auto& img : images)
    out.push_back(normalize_tokens(enc.encode(img)).v);
  return out;
}

/// Train R_theta on (normalized feature, image) pairs from the
/// reconstructor-train split. The encoder must be frozen; its parameter hash
/// is checked before/after as the freeze contract.
inline ReconstructorModel train_reconstructor(const EncoderModel& enc,
                                              const TrainConfig& cfg,
                                              const SplitRef& corpus,
                                              TrainLog* log = nullptr) {
  cfg.validate();
  if (!enc.frozen)
    throw Error("train_reconstructor: encoder must be frozen first");
  corpus.require(Split::reconstructor_train);
  const std::string hash_before = enc.param_hash();

  const auto images = load_split_images(corpus, enc.cfg.resolution);
  // validation holdout: trailing 10% (at least 1 image when possible)
  std::size_t n_val = images.size() / 10;
  if (n_val == 0 && images.size() >= 2) n_val = 1;
  const std::size_t n_train = images.size() - n_val;
  if (n_train == 0) throw DataError("train_reconstructor: no training images");

  const auto feats = encode_normalized(enc, images);

  const ReconstructorConfig rcfg = ReconstructorConfig::for_encoder(enc.cfg);
  ReconstructorModel rec =
      ReconstructorModel::init(rcfg, mix_seed(cfg.seed, "recon-init"));
  std::vector<Tensor> params = rec.params();
  OptimizerState opt = OptimizerState::init(params, cfg.adam);
  Rng order_rng(mix_seed(cfg.seed, "recon-order"));

  const std::size_t t = static_cast<std::size_t>(rcfg.tokens());
  const std::size_t d = static_cast<std::size_t>(rcfg.dim);

  auto tokens_for = [&](const std::vector<std::size_t>& ids) {
    std::vector<double> buf;
    buf.reserve(ids.size() * t * d);
    for (std::size_t i : ids)
      buf.insert(buf.end(), feats[i].begin(), feats[i].end());
    return Tensor::from({ids.size() * t, d}, std::move(buf));
  };
  auto targets_for = [&](const std::vector<std::size_t>& ids) {
    std::vector<const ImageBuffer*> ptrs;
    for (std::size_t i : ids) ptrs.push_back(&images[i]);
    return detail::image_rows(ptrs);
  };

  std::vector<std::size_t> train_idx(n_train);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::vector<std::size_t> val_idx(n_val);
  std::iota(val_idx.begin(), val_idx.end(), n_train);

  std::size_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bsz = std::min(static_cast<std::size_t>(cfg.batch_size),
                                       train_idx.size() - start);
      std::vector<std::size_t> ids(train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                   train_idx.begin() + static_cast<std::ptrdiff_t>(start + bsz));
      Tensor out = rec.forward(tokens_for(ids), static_cast<int>(bsz));
      Tensor loss = mse_loss(out, targets_for(ids));
      detail::check_finite_loss(loss.item(), "reconstruction", epoch, global_step);
      backward(loss);
      adam_step(params, opt, lr_at(cfg.schedule, global_step));
      ++global_step;
      epoch_loss += loss.item();
      ++batches;
    }
    if (log) {
      log->epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
      if (!val_idx.empty()) {
        Tensor vout = rec.forward(tokens_for(val_idx), static_cast<int>(val_idx.size()));
        log->val_mse.push_back(mse_loss(vout, targets_for(val_idx)).item());
      }
    }
  }

  if (enc.param_hash() != hash_before)
    throw Error("train_reconstructor: encoder parameters changed (freeze "
                "contract violated)");
  return rec;
}

}  // namespace llab
