#include "pulaski/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pulaski {

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("train: epochs must be nonnegative");
  if (!(lr > 0.0)) throw InvalidArgument("train: learning rate must be positive");
  if (batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
  if (per_epoch_cap < 1) throw InvalidArgument("train: per-epoch cap must be >= 1");
}

std::vector<TrainSample> build_samples(const Dataset& ds, const std::vector<size_t>& indices,
                                       const ModelConfig& cfg) {
  std::vector<TrainSample> out;
  auto push_volume = [&](const AnnotatedVolume& v) {
    TrainSample s;
    s.image = image_to_tensor(v.image, v.extents);
    for (const BinaryMask& m : v.annotations) s.annotations.push_back(mask_to_tensor(m));
    out.push_back(std::move(s));
  };

  for (size_t idx : indices) {
    const AnnotatedVolume& vol = ds.volumes[idx];
    int vol_dims = static_cast<int>(vol.extents.size());
    if (cfg.unet.spatial_dims == 2) {
      if (vol_dims == 2) {
        push_volume(vol);
      } else {
        // Slices along the last (acquisition) axis.
        for (const AnnotatedVolume& sl : extract_slices(vol, vol_dims - 1)) push_volume(sl);
      }
    } else {
      if (vol_dims != 3)
        throw InvalidArgument("build_samples: 3-D model needs 3-D volumes");
      PatchSpec ps;
      for (const auto& [patch, pos] : extract_patches(vol, ps)) push_volume(patch);
    }
  }
  return out;
}

Tensor sample_loss(Tape* tape, const TrainSample& s, const ModelParams& params,
                   const ModelConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case ModelKind::kPulaskiSinkhorn:
    case ModelKind::kPulaskiHausdorff:
    case ModelKind::kPulaskiFrechet:
      return pulaski_loss(tape, s.image, s.annotations, params, cfg, rng);
    case ModelKind::kProbUnetCe:
    case ModelKind::kProbUnetFtl: {
      // Lumped treatment: every annotation is an independent (x, y) pair.
      int r = static_cast<int>(rng.uniform_index(s.annotations.size()));
      return probunet_loss(tape, s.image, s.annotations[r], params, cfg, rng);
    }
    case ModelKind::kMcdo: {
      int r = static_cast<int>(rng.uniform_index(s.annotations.size()));
      return mcdo_loss(tape, s.image, s.annotations[r], params, cfg, rng);
    }
    case ModelKind::kSsn: {
      int r = static_cast<int>(rng.uniform_index(s.annotations.size()));
      return ssn_loss(tape, s.image, s.annotations[r], params, cfg, cfg.loss.m_samples, rng);
    }
  }
  throw InvalidArgument("sample_loss: unknown model kind");
}

namespace {

double evaluate_split(const std::vector<TrainSample>& samples, const ModelParams& params,
                      const ModelConfig& cfg, Rng& rng) {
  // Validation uses the same stochastic objective with its own seeded stream;
  // dropout models are scored with dropout inactive, so swap the loss to the
  // deterministic FTL for MCDO.
  double acc = 0.0;
  for (const TrainSample& s : samples) {
    Tape tape;
    if (cfg.kind == ModelKind::kMcdo) {
      Tensor feat = unet_forward(nullptr, s.image, params, cfg);
      Tensor logits = ops::conv(nullptr, feat, params.get("head.final.w"),
                                params.get("head.final.b"));
      Tensor prob = segmentation_probability(nullptr, logits);
      int r = static_cast<int>(rng.uniform_index(s.annotations.size()));
      acc += focal_tversky_loss(nullptr, prob, s.annotations[r], cfg.loss.ftl).item();
    } else {
      acc += sample_loss(nullptr, s, params, cfg, rng).item();
    }
  }
  return acc / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  if (ds.train_idx.empty() || ds.val_idx.empty())
    throw InvalidArgument("train: dataset needs nonempty train and val splits");

  std::vector<TrainSample> train_samples = build_samples(ds, ds.train_idx, mcfg);
  std::vector<TrainSample> val_samples = build_samples(ds, ds.val_idx, mcfg);
  if (train_samples.empty() || val_samples.empty())
    throw InvalidArgument("train: no samples after slicing/patching");

  Rng init_rng(Rng::derive_seed(tcfg.seed, 1));
  ModelParams params = init_params(mcfg, init_rng);

  TrainResult result;
  result.best_params = params.deep_copy();
  if (tcfg.epochs == 0) return result;

  AdamConfig adam_cfg;
  adam_cfg.lr = tcfg.lr;
  AdamState adam(params.tensors(), adam_cfg);

  Rng shuffle_rng(Rng::derive_seed(tcfg.seed, 2));
  bool have_best = false;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    // Deterministic per-epoch subsample of the training set.
    std::vector<size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    size_t visit = std::min<size_t>(order.size(), static_cast<size_t>(tcfg.per_epoch_cap));

    Rng step_rng(Rng::derive_seed(tcfg.seed, 1000 + static_cast<uint64_t>(epoch)));
    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < visit) {
      size_t batch_end = std::min(visit, pos + static_cast<size_t>(tcfg.batch_size));
      int batch_n = static_cast<int>(batch_end - pos);
      params.zero_grads();
      for (size_t b = pos; b < batch_end; ++b) {
        Tape tape;
        Tensor loss = sample_loss(&tape, train_samples[order[b]], params, mcfg, step_rng);
        double lv = loss.item();
        if (!std::isfinite(lv))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", sample " + std::to_string(b) + ", model " +
                             to_string(mcfg.kind));
        epoch_loss += lv;
        tape.backward(loss);
      }
      // Mean-gradient convention over the batch.
      for (Tensor& t : params.tensors()) {
        std::vector<double>& g = t.grad();
        double inv = 1.0 / static_cast<double>(batch_n);
        for (double& v : g) v *= inv;
      }
      adam.step(params.tensors());
      pos = batch_end;
    }
    epoch_loss /= static_cast<double>(visit);

    Rng val_rng(Rng::derive_seed(tcfg.seed, 50000 + static_cast<uint64_t>(epoch)));
    double val_loss = evaluate_split(val_samples, params, mcfg, val_rng);

    result.history.push_back({epoch, epoch_loss, val_loss});
    if (!have_best || val_loss < result.best_val_loss) {
      have_best = true;
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.best_params = params.deep_copy();
    }
  }
  return result;
}

}  // namespace pulaski
