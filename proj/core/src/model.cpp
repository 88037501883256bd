#include "pulaski/model.hpp"

#include <algorithm>
#include <cmath>

namespace pulaski {

void UNetConfig::validate() const {
  if (spatial_dims != 2 && spatial_dims != 3)
    throw InvalidArgument("unet: spatial_dims must be 2 or 3");
  if (depth < 1) throw InvalidArgument("unet: depth must be >= 1");
  if (base_channels < 1) throw InvalidArgument("unet: base_channels must be >= 1");
  if (n_classes != 2)
    throw InvalidArgument("unet: only the binary task (K=2) is supported");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw InvalidArgument("unet: dropout_rate must lie in [0,1)");
}

void UNetConfig::check_extents(const Shape& spatial) const {
  int64_t mult = int64_t{1} << depth;
  if (static_cast<int>(spatial.size()) != spatial_dims)
    throw InvalidArgument("unet: expected " + std::to_string(spatial_dims) +
                          "-D input, got " + shape_str(spatial));
  for (int64_t e : spatial)
    if (e % mult != 0)
      throw InvalidArgument("unet: input extents " + shape_str(spatial) +
                            " must be divisible by " + std::to_string(mult));
}

void LossSpec::validate() const {
  if (beta < 0.0) throw InvalidArgument("loss: beta must be nonnegative");
  if (m_samples < 1) throw InvalidArgument("loss: m_samples must be >= 1");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "pulaski-sinkhorn") return ModelKind::kPulaskiSinkhorn;
  if (s == "pulaski-hausdorff") return ModelKind::kPulaskiHausdorff;
  if (s == "pulaski-frechet") return ModelKind::kPulaskiFrechet;
  if (s == "probunet-ce") return ModelKind::kProbUnetCe;
  if (s == "probunet-ftl") return ModelKind::kProbUnetFtl;
  if (s == "mcdo") return ModelKind::kMcdo;
  if (s == "ssn") return ModelKind::kSsn;
  throw InvalidArgument("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kPulaskiSinkhorn: return "pulaski-sinkhorn";
    case ModelKind::kPulaskiHausdorff: return "pulaski-hausdorff";
    case ModelKind::kPulaskiFrechet: return "pulaski-frechet";
    case ModelKind::kProbUnetCe: return "probunet-ce";
    case ModelKind::kProbUnetFtl: return "probunet-ftl";
    case ModelKind::kMcdo: return "mcdo";
    case ModelKind::kSsn: return "ssn";
  }
  return "?";
}

bool model_uses_latent(ModelKind k) {
  switch (k) {
    case ModelKind::kMcdo:
    case ModelKind::kSsn: return false;
    default: return true;
  }
}

LossKind ModelConfig::loss_kind() const {
  switch (kind) {
    case ModelKind::kPulaskiSinkhorn: return LossKind::kSinkhorn;
    case ModelKind::kPulaskiHausdorff: return LossKind::kHausdorff;
    case ModelKind::kPulaskiFrechet: return LossKind::kFrechet;
    case ModelKind::kProbUnetCe: return LossKind::kCrossEntropy;
    case ModelKind::kProbUnetFtl:
    case ModelKind::kMcdo: return LossKind::kFocalTversky;
    case ModelKind::kSsn: return LossKind::kCrossEntropy;
  }
  return LossKind::kCrossEntropy;
}

void ModelConfig::validate() const {
  unet.validate();
  loss.validate();
  if (latent.dim < 1) throw InvalidArgument("latent dimension must be >= 1");
  if (ssn_rank < 1) throw InvalidArgument("ssn rank must be >= 1");
  if (!(epsilon_rel > 0.0)) throw InvalidArgument("epsilon_rel must be positive");
  if (max_measure_dim < 1) throw InvalidArgument("max_measure_dim must be >= 1");
  if (kind == ModelKind::kMcdo && !(unet.dropout_rate > 0.0))
    throw InvalidArgument("mcdo model requires a positive dropout rate");
}

void ModelParams::add(const std::string& name, Tensor t) {
  if (has(name)) throw InvalidArgument("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  names_.push_back(name);
  tensors_.push_back(std::move(t));
}

Tensor& ModelParams::get(const std::string& name) {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return tensors_[i];
  throw InvalidArgument("no such parameter: " + name);
}

const Tensor& ModelParams::get(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return tensors_[i];
  throw InvalidArgument("no such parameter: " + name);
}

bool ModelParams::has(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

void ModelParams::zero_grads() {
  for (Tensor& t : tensors_) t.zero_grad();
}

ModelParams ModelParams::deep_copy() const {
  ModelParams out;
  for (size_t i = 0; i < names_.size(); ++i) {
    Tensor t = tensors_[i].clone();
    out.names_.push_back(names_[i]);
    out.tensors_.push_back(std::move(t));
  }
  return out;
}

// ---- parameter construction --------------------------------------------------

namespace {

Shape conv_kernel_shape(const UNetConfig& cfg, int64_t cout, int64_t cin, int64_t k) {
  if (cfg.spatial_dims == 2) return {cout, cin, k, k};
  return {cout, cin, k, k, k};
}

Shape up_kernel_shape(const UNetConfig& cfg, int64_t cin, int64_t cout) {
  if (cfg.spatial_dims == 2) return {cin, cout, 2, 2};
  return {cin, cout, 2, 2, 2};
}

Tensor uniform_init(const Shape& shape, double bound, Rng& rng) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

// Convolution fan-in law: k = groups / (C_in * prod(kernel)); groups is 1 here.
void add_conv(ModelParams& p, const std::string& name, const Shape& kshape, int64_t cout,
              Rng& rng) {
  int64_t cin = kshape[1];
  int64_t taps = 1;
  for (size_t i = 2; i < kshape.size(); ++i) taps *= kshape[i];
  double bound = std::sqrt(1.0 / static_cast<double>(cin * taps));
  p.add(name + ".w", uniform_init(kshape, bound, rng));
  p.add(name + ".b", uniform_init(Shape{cout}, bound, rng));
}

// Transposed convolution: fan-in per output voxel is C_in (each output position
// receives exactly one tap per input channel).
void add_up(ModelParams& p, const std::string& name, const Shape& kshape, int64_t cout,
            Rng& rng) {
  int64_t cin = kshape[0];
  int64_t taps = 1;
  for (size_t i = 2; i < kshape.size(); ++i) taps *= kshape[i];
  double bound = std::sqrt(1.0 / static_cast<double>(cin * taps));
  p.add(name + ".w", uniform_init(kshape, bound, rng));
  p.add(name + ".b", uniform_init(Shape{cout}, bound, rng));
}

int64_t level_channels(const UNetConfig& cfg, int level) {
  return static_cast<int64_t>(cfg.base_channels) << level;
}

// Contracting encoder for the prior/posterior nets: conv+pool chain, then a
// 1x1 projection to 2*latent_dim channels, global average pooled.
void add_latent_encoder(ModelParams& p, const std::string& prefix, const UNetConfig& cfg,
                        int in_channels, int latent_dim, Rng& rng) {
  int levels = std::min(cfg.depth, 3);
  int64_t cin = in_channels;
  for (int l = 0; l < levels; ++l) {
    int64_t cout = level_channels(cfg, l);
    add_conv(p, prefix + ".conv" + std::to_string(l), conv_kernel_shape(cfg, cout, cin, 3),
             cout, rng);
    cin = cout;
  }
  add_conv(p, prefix + ".out", conv_kernel_shape(cfg, 2 * latent_dim, cin, 1),
           2 * latent_dim, rng);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const UNetConfig& u = cfg.unet;
  ModelParams p;

  // Backbone encoder.
  int64_t cin = u.in_channels;
  for (int l = 0; l < u.depth; ++l) {
    int64_t c = level_channels(u, l);
    add_conv(p, "enc" + std::to_string(l) + ".conv0", conv_kernel_shape(u, c, cin, 3), c, rng);
    add_conv(p, "enc" + std::to_string(l) + ".conv1", conv_kernel_shape(u, c, c, 3), c, rng);
    cin = c;
  }
  int64_t cbot = level_channels(u, u.depth);
  add_conv(p, "bottleneck.conv0", conv_kernel_shape(u, cbot, cin, 3), cbot, rng);
  add_conv(p, "bottleneck.conv1", conv_kernel_shape(u, cbot, cbot, 3), cbot, rng);

  // Decoder with skip concatenation.
  int64_t cup = cbot;
  for (int l = u.depth - 1; l >= 0; --l) {
    int64_t c = level_channels(u, l);
    add_up(p, "dec" + std::to_string(l) + ".up", up_kernel_shape(u, cup, c), c, rng);
    add_conv(p, "dec" + std::to_string(l) + ".conv0", conv_kernel_shape(u, c, 2 * c, 3), c, rng);
    add_conv(p, "dec" + std::to_string(l) + ".conv1", conv_kernel_shape(u, c, c, 3), c, rng);
    cup = c;
  }

  // Output heads.
  if (cfg.kind == ModelKind::kSsn) {
    add_conv(p, "ssn.mu", conv_kernel_shape(u, u.n_classes, u.base_channels, 1), u.n_classes,
             rng);
    add_conv(p, "ssn.sigma", conv_kernel_shape(u, u.n_classes, u.base_channels, 1),
             u.n_classes, rng);
    add_conv(p, "ssn.factor",
             conv_kernel_shape(u, static_cast<int64_t>(u.n_classes) * cfg.ssn_rank,
                               u.base_channels, 1),
             static_cast<int64_t>(u.n_classes) * cfg.ssn_rank, rng);
  } else if (model_uses_latent(cfg.kind)) {
    add_conv(p, "head.final",
             conv_kernel_shape(u, u.n_classes, u.base_channels + cfg.latent.dim, 1),
             u.n_classes, rng);
    add_latent_encoder(p, "prior", u, u.in_channels, cfg.latent.dim, rng);
    add_latent_encoder(p, "post", u, u.in_channels + 1, cfg.latent.dim, rng);
  } else {
    add_conv(p, "head.final", conv_kernel_shape(u, u.n_classes, u.base_channels, 1),
             u.n_classes, rng);
  }
  return p;
}

// ---- forward passes ------------------------------------------------------------

namespace {

// conv -> norm -> ReLU twice; the normalization keeps deep feature magnitudes
// bounded so the saturating losses cannot run the logits away.
Tensor conv_block(Tape* tape, const Tensor& x, const ModelParams& p, const std::string& name) {
  Tensor h = ops::conv(tape, x, p.get(name + ".conv0.w"), p.get(name + ".conv0.b"));
  h = ops::relu(tape, ops::instance_norm(tape, h));
  h = ops::conv(tape, h, p.get(name + ".conv1.w"), p.get(name + ".conv1.b"));
  return ops::relu(tape, ops::instance_norm(tape, h));
}

}  // namespace

Tensor unet_forward(Tape* tape, const Tensor& x, const ModelParams& params,
                    const ModelConfig& cfg, Rng* dropout_rng, bool dropout_active) {
  const UNetConfig& u = cfg.unet;
  const Shape& xs = x.shape();
  if (static_cast<int>(xs.size()) != u.spatial_dims + 2)
    throw InvalidArgument("unet_forward: expected [1,C,spatial] input, got " + shape_str(xs));
  u.check_extents(Shape(xs.begin() + 2, xs.end()));

  bool drop = dropout_active && u.dropout_rate > 0.0;
  if (drop && !dropout_rng)
    throw InvalidArgument("unet_forward: dropout active but no generator supplied");

  std::vector<Tensor> skips;
  Tensor h = x;
  for (int l = 0; l < u.depth; ++l) {
    h = conv_block(tape, h, params, "enc" + std::to_string(l));
    if (drop) h = ops::spatial_dropout(tape, h, u.dropout_rate, *dropout_rng, true);
    skips.push_back(h);
    h = ops::avg_pool(tape, h);
  }
  h = conv_block(tape, h, params, "bottleneck");
  if (drop) h = ops::spatial_dropout(tape, h, u.dropout_rate, *dropout_rng, true);
  for (int l = u.depth - 1; l >= 0; --l) {
    std::string name = "dec" + std::to_string(l);
    h = ops::transposed_conv(tape, h, params.get(name + ".up.w"), params.get(name + ".up.b"));
    h = ops::concat_channels(tape, {skips[l], h});
    h = conv_block(tape, h, params, name);
    if (drop) h = ops::spatial_dropout(tape, h, u.dropout_rate, *dropout_rng, true);
  }
  return h;
}

Tensor expand_latent(Tape* tape, const Tensor& z, const Shape& spatial) {
  Shape target{1, z.size()};
  for (int64_t e : spatial) target.push_back(e);
  return ops::broadcast(tape, z, target);
}

Tensor head_logits(Tape* tape, const Tensor& features, const Tensor& z,
                   const ModelParams& params, const ModelConfig& cfg) {
  Shape spatial(features.shape().begin() + 2, features.shape().end());
  Tensor zmaps = expand_latent(tape, z, spatial);
  Tensor joined = ops::concat_channels(tape, {features, zmaps});
  return ops::conv(tape, joined, params.get("head.final.w"), params.get("head.final.b"));
}

namespace {

LatentDistribution latent_encoder_forward(Tape* tape, const Tensor& x, const ModelParams& p,
                                          const ModelConfig& cfg, const std::string& prefix) {
  int levels = std::min(cfg.unet.depth, 3);
  Tensor h = x;
  for (int l = 0; l < levels; ++l) {
    std::string name = prefix + ".conv" + std::to_string(l);
    h = ops::conv(tape, h, p.get(name + ".w"), p.get(name + ".b"));
    h = ops::relu(tape, ops::instance_norm(tape, h));
    if (l + 1 < levels) h = ops::avg_pool(tape, h);
  }
  h = ops::conv(tape, h, p.get(prefix + ".out.w"), p.get(prefix + ".out.b"));
  Tensor pooled = ops::global_avg_pool(tape, h);  // [1, 2L]
  Tensor flat = ops::reshape(tape, pooled, Shape{pooled.size()});
  int64_t latent = pooled.size() / 2;
  LatentDistribution d;
  d.mu = ops::slice_flat(tape, flat, 0, latent);
  d.log_sigma = ops::clamp(tape, ops::slice_flat(tape, flat, latent, 2 * latent), -10.0, 10.0);
  return d;
}

}  // namespace

LatentDistribution prior_forward(Tape* tape, const Tensor& x, const ModelParams& params,
                                 const ModelConfig& cfg) {
  return latent_encoder_forward(tape, x, params, cfg, "prior");
}

LatentDistribution posterior_forward(Tape* tape, const Tensor& x, const Tensor& y,
                                     const ModelParams& params, const ModelConfig& cfg) {
  if (!same_shape(x.shape(), y.shape()))
    throw InvalidArgument("posterior_forward: image and mask shapes differ");
  for (int64_t i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0)
      throw InvalidArgument("posterior_forward: conditioning mask must be binary");
  Tensor joined = ops::concat_channels(tape, {x, y});
  return latent_encoder_forward(tape, joined, params, cfg, "post");
}

DiagonalGaussian to_gaussian(const LatentDistribution& d) {
  DiagonalGaussian g;
  g.mu = d.mu.values();
  g.sigma.resize(d.log_sigma.size());
  for (int64_t i = 0; i < d.log_sigma.size(); ++i) g.sigma[i] = std::exp(d.log_sigma[i]);
  return g;
}

Tensor segmentation_probability(Tape* tape, const Tensor& logits) {
  const Shape& s = logits.shape();
  if (s.size() < 2 || s[1] != 2)
    throw InvalidArgument("segmentation_probability: requires K=2 logits, got " + shape_str(s));
  int64_t plane = logits.size() / 2;
  Tensor eta0 = ops::slice_flat(tape, ops::reshape(tape, logits, Shape{logits.size()}), 0, plane);
  Tensor eta1 =
      ops::slice_flat(tape, ops::reshape(tape, logits, Shape{logits.size()}), plane, 2 * plane);
  Tensor beta = ops::sub(tape, eta1, eta0);
  Tensor p = ops::sigmoid(tape, beta);
  Shape out_shape = s;
  out_shape[1] = 1;
  return ops::reshape(tape, p, out_shape);
}

Tensor image_to_tensor(const std::vector<double>& image, const Shape& extents) {
  Shape s{1, 1};
  for (int64_t e : extents) s.push_back(e);
  return Tensor(s, image);
}

Tensor mask_to_tensor(const BinaryMask& mask) {
  Shape s{1, 1};
  for (int64_t e : mask.extents) s.push_back(e);
  std::vector<double> vals(mask.values.begin(), mask.values.end());
  return Tensor(s, std::move(vals));
}

ProbabilityMap tensor_to_map(const Tensor& prob) {
  const Shape& s = prob.shape();
  ProbabilityMap m;
  m.extents = Shape(s.begin() + 2, s.end());
  m.values = prob.values();
  for (double& v : m.values) v = std::clamp(v, 0.0, 1.0);
  return m;
}

Tensor pool_to_measure_point(Tape* tape, const Tensor& prob, int max_dim) {
  Tensor h = prob;
  while (h.size() > max_dim) {
    const Shape& s = h.shape();
    bool poolable = true;
    for (size_t i = 2; i < s.size(); ++i)
      if (s[i] % 2 != 0 || s[i] < 2) poolable = false;
    if (!poolable) break;
    h = ops::avg_pool(tape, h);
  }
  return ops::reshape(tape, h, Shape{h.size()});
}

// ---- inference-time sampling ---------------------------------------------------

std::vector<Tensor> mcdo_sample(const Tensor& x, const ModelParams& params,
                                const ModelConfig& cfg, double rate, int m_samples, Rng& rng) {
  if (!(rate > 0.0 && rate < 1.0))
    throw InvalidArgument("mcdo_sample: rate must lie in (0,1)");
  ModelConfig c = cfg;
  c.unet.dropout_rate = rate;
  std::vector<Tensor> maps;
  for (int m = 0; m < m_samples; ++m) {
    Tensor feat = unet_forward(nullptr, x, params, c, &rng, true);
    Tensor logits = ops::conv(nullptr, feat, params.get("head.final.w"),
                              params.get("head.final.b"));
    maps.push_back(segmentation_probability(nullptr, logits));
  }
  return maps;
}

std::vector<Tensor> sample_from_prior(const Tensor& x, const ModelParams& params,
                                      const ModelConfig& cfg, int m_samples, Rng& rng) {
  if (!model_uses_latent(cfg.kind))
    throw InvalidArgument("sample_from_prior: model has no latent space");
  Tensor feat = unet_forward(nullptr, x, params, cfg);
  LatentDistribution prior = prior_forward(nullptr, x, params, cfg);
  DiagonalGaussian g = to_gaussian(prior);
  std::vector<Tensor> maps;
  for (int m = 0; m < m_samples; ++m) {
    auto [z, eps] = sample_diag(g, rng);
    Tensor zt(Shape{static_cast<int64_t>(z.size())}, z);
    Tensor logits = head_logits(nullptr, feat, zt, params, cfg);
    maps.push_back(segmentation_probability(nullptr, logits));
  }
  return maps;
}

Tensor most_probable_map(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
  if (!model_uses_latent(cfg.kind))
    throw InvalidArgument("most_probable_map: model has no latent space");
  Tensor feat = unet_forward(nullptr, x, params, cfg);
  LatentDistribution prior = prior_forward(nullptr, x, params, cfg);
  Tensor z(prior.mu.shape(), prior.mu.values());
  Tensor logits = head_logits(nullptr, feat, z, params, cfg);
  return segmentation_probability(nullptr, logits);
}

std::vector<Tensor> ssn_sample_maps(const Tensor& x, const ModelParams& params,
                                    const ModelConfig& cfg, int m_samples, Rng& rng);

std::vector<Tensor> sample_probability_maps(const Tensor& x, const ModelParams& params,
                                            const ModelConfig& cfg, int m_samples, Rng& rng) {
  switch (cfg.kind) {
    case ModelKind::kMcdo:
      return mcdo_sample(x, params, cfg, cfg.unet.dropout_rate, m_samples, rng);
    case ModelKind::kSsn:
      return ssn_sample_maps(x, params, cfg, m_samples, rng);
    default:
      return sample_from_prior(x, params, cfg, m_samples, rng);
  }
}

}  // namespace pulaski
