#pragma once

#include <string>
#include <vector>

#include "pulaski/gaussian.hpp"
#include "pulaski/ot.hpp"
#include "pulaski/seg.hpp"
#include "pulaski/tensor.hpp"

namespace pulaski {

struct UNetConfig {
  int spatial_dims = 2;  // 2 or 3
  int depth = 3;         // number of pooling levels
  int base_channels = 8;
  int n_classes = 2;  // binary task; the sigmoid specialization requires 2
  int in_channels = 1;
  double dropout_rate = 0.0;  // nonzero only for the MC-dropout model

  void validate() const;
  // Input extents must be divisible by 2^depth.
  void check_extents(const Shape& spatial) const;
};

struct LatentSpec {
  int dim = 3;
};

enum class LossKind { kCrossEntropy, kFocalTversky, kSinkhorn, kHausdorff, kFrechet };

struct FtlParams {
  double alpha = 0.7;
  double beta = 0.3;
  double gamma = 4.0 / 3.0;
};

struct LossSpec {
  LossKind kind = LossKind::kHausdorff;
  double beta = 1.0;   // KL regularizer weight
  int m_samples = 4;   // latent draws per image during training
  FtlParams ftl;
  // Condition the posterior on rater (m mod R) instead of resampling uniformly.
  bool fixed_pairing = false;

  void validate() const;
  bool is_distributional() const {
    return kind == LossKind::kSinkhorn || kind == LossKind::kHausdorff ||
           kind == LossKind::kFrechet;
  }
};

enum class ModelKind {
  kPulaskiSinkhorn,
  kPulaskiHausdorff,
  kPulaskiFrechet,
  kProbUnetCe,
  kProbUnetFtl,
  kMcdo,
  kSsn,
};

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);
bool model_uses_latent(ModelKind k);

struct ModelConfig {
  ModelKind kind = ModelKind::kPulaskiHausdorff;
  UNetConfig unet;
  LatentSpec latent;
  LossSpec loss;
  int ssn_rank = 10;
  SinkhornConfig sinkhorn;     // epsilon is derived per sample, see losses
  double epsilon_rel = 0.05;   // epsilon = (epsilon_rel)^2 * squared diameter
  int max_measure_dim = 256;   // pool flattened maps to at most this many dims

  void validate() const;
  LossKind loss_kind() const;
};

// Named parameter store; declaration order defines the checkpoint layout.
class ModelParams {
 public:
  void add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  size_t count() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  void zero_grads();
  ModelParams deep_copy() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

// Uniform U(-sqrt(k), sqrt(k)) initialization with k = groups/(C_in * prod(kernel))
// for convolutions and k = 1/in_features for linear layers; biases follow the
// same law as their layer.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

// Backbone U-Net: returns the full-resolution feature map [1, base_channels, ...].
Tensor unet_forward(Tape* tape, const Tensor& x, const ModelParams& params,
                    const ModelConfig& cfg, Rng* dropout_rng = nullptr,
                    bool dropout_active = false);

// Repeats z over the spatial extents: [L] -> [1, L, spatial...].
Tensor expand_latent(Tape* tape, const Tensor& z, const Shape& spatial);

// Concatenate expanded latent channels with the feature map and apply the
// final 1x1 convolution to K logits channels.
Tensor head_logits(Tape* tape, const Tensor& features, const Tensor& z,
                   const ModelParams& params, const ModelConfig& cfg);

struct LatentDistribution {
  Tensor mu;         // [L]
  Tensor log_sigma;  // [L], clamped to [-10, 10]
};

LatentDistribution prior_forward(Tape* tape, const Tensor& x, const ModelParams& params,
                                 const ModelConfig& cfg);
// y must be a binary mask shaped like x's spatial extents.
LatentDistribution posterior_forward(Tape* tape, const Tensor& x, const Tensor& y,
                                     const ModelParams& params, const ModelConfig& cfg);

DiagonalGaussian to_gaussian(const LatentDistribution& d);

// p = sigmoid(eta_1 - eta_0); requires K = 2.
Tensor segmentation_probability(Tape* tape, const Tensor& logits);

// Mean over pixels of the clamped binary cross entropy.
Tensor cross_entropy_loss(Tape* tape, const Tensor& p, const Tensor& y);

// (1 - Tversky index)^gamma with smoothing 1.
Tensor focal_tversky_loss(Tape* tape, const Tensor& p, const Tensor& y, const FtlParams& ftl);

// KL(q || p) of two diagonal Gaussians given as (mu, log sigma) tape tensors.
Tensor kl_diag_node(Tape* tape, const LatentDistribution& q, const LatentDistribution& p);

// Statistical-distance reconstruction against the empirical annotation
// distribution plus beta * KL; the conditioning annotation is resampled
// uniformly per latent draw unless spec.fixed_pairing.
Tensor pulaski_loss(Tape* tape, const Tensor& x, const std::vector<Tensor>& annotations,
                    const ModelParams& params, const ModelConfig& cfg, Rng& rng);

// Classic probabilistic segmentation ELBO: M posterior draws, mean CE or FTL
// reconstruction plus beta * KL.
Tensor probunet_loss(Tape* tape, const Tensor& x, const Tensor& y, const ModelParams& params,
                     const ModelConfig& cfg, Rng& rng);

struct SsnHead {
  Tensor mu;      // [v], v = prod(spatial) * K, channel-major flattening
  Tensor sigma;   // [v], positive diagonal
  Tensor factor;  // [v, R] covariance factor
};

SsnHead ssn_forward(Tape* tape, const Tensor& x, const ModelParams& params,
                    const ModelConfig& cfg);

// Stabilized -log mean_m exp(sum_pixels log p_eta_m(y)).
Tensor ssn_loss(Tape* tape, const Tensor& x, const Tensor& y, const ModelParams& params,
                const ModelConfig& cfg, int m_samples, Rng& rng);

// Plain U-Net loss (FTL) with spatial dropout active; used by the MCDO model.
Tensor mcdo_loss(Tape* tape, const Tensor& x, const Tensor& y, const ModelParams& params,
                 const ModelConfig& cfg, Rng& rng);

// ---- inference-time sampling -------------------------------------------------

// M forward passes with dropout active at inference.
std::vector<Tensor> mcdo_sample(const Tensor& x, const ModelParams& params,
                                const ModelConfig& cfg, double rate, int m_samples, Rng& rng);

// M prior draws pushed through the latent head. Requires a latent model.
std::vector<Tensor> sample_from_prior(const Tensor& x, const ModelParams& params,
                                      const ModelConfig& cfg, int m_samples, Rng& rng);

// Deterministic map with z = prior mean.
Tensor most_probable_map(const Tensor& x, const ModelParams& params, const ModelConfig& cfg);

// Dispatch on model kind: prior sampling, MC dropout or SSN logit draws.
std::vector<Tensor> sample_probability_maps(const Tensor& x, const ModelParams& params,
                                            const ModelConfig& cfg, int m_samples, Rng& rng);

// Helpers shared by losses and the trainer.
Tensor image_to_tensor(const std::vector<double>& image, const Shape& extents);
Tensor mask_to_tensor(const BinaryMask& mask);
ProbabilityMap tensor_to_map(const Tensor& prob);

// Average-pool a [1,1,spatial...] probability map until its flattened size is
// at most max_dim, then flatten to a 1-D tensor.
Tensor pool_to_measure_point(Tape* tape, const Tensor& prob, int max_dim);

}  // namespace pulaski
