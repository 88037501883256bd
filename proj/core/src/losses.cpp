#include <algorithm>
#include <cmath>
#include <map>

#include "pulaski/model.hpp"

namespace pulaski {

namespace o = ops;

Tensor cross_entropy_loss(Tape* tape, const Tensor& p, const Tensor& y) {
  if (!same_shape(p.shape(), y.shape()))
    throw ShapeError("cross_entropy: shape mismatch " + shape_str(p.shape()) + " vs " +
                     shape_str(y.shape()));
  Tensor pc = o::clamp(tape, p, 1e-7, 1.0 - 1e-7);
  // -[y log p + (1-y) log(1-p)], mean over pixels
  Tensor log_p = o::log(tape, pc);
  Tensor log_1p = o::log(tape, o::add_scalar(tape, o::scale(tape, pc, -1.0), 1.0));
  Tensor ones_minus_y = o::add_scalar(tape, o::scale(tape, y, -1.0), 1.0);
  Tensor ll = o::add(tape, o::mul(tape, y, log_p), o::mul(tape, ones_minus_y, log_1p));
  return o::scale(tape, o::mean(tape, ll), -1.0);
}

Tensor focal_tversky_loss(Tape* tape, const Tensor& p, const Tensor& y, const FtlParams& ftl) {
  if (!same_shape(p.shape(), y.shape()))
    throw ShapeError("focal_tversky: shape mismatch");
  const double smooth = 1.0;
  Tensor tp = o::sum(tape, o::mul(tape, p, y));
  Tensor ones_minus_p = o::add_scalar(tape, o::scale(tape, p, -1.0), 1.0);
  Tensor ones_minus_y = o::add_scalar(tape, o::scale(tape, y, -1.0), 1.0);
  Tensor fn = o::sum(tape, o::mul(tape, ones_minus_p, y));
  Tensor fp = o::sum(tape, o::mul(tape, p, ones_minus_y));
  Tensor num = o::add_scalar(tape, tp, smooth);
  Tensor den = o::add_scalar(
      tape, o::add(tape, tp, o::add(tape, o::scale(tape, fn, ftl.alpha),
                                    o::scale(tape, fp, ftl.beta))), smooth);
  // ti = num/den via exp(log num - log den); both strictly positive.
  Tensor ti = o::exp(tape, o::sub(tape, o::log(tape, num), o::log(tape, den)));
  Tensor one_minus_ti = o::clamp(tape, o::add_scalar(tape, o::scale(tape, ti, -1.0), 1.0),
                                 0.0, 1.0);
  return o::pow_scalar(tape, one_minus_ti, ftl.gamma);
}

Tensor kl_diag_node(Tape* tape, const LatentDistribution& q, const LatentDistribution& p) {
  if (q.mu.size() != p.mu.size())
    throw ShapeError("kl_diag_node: latent dimensions differ");
  // sum_d [ (lsp - lsq) + 0.5 exp(2 lsq - 2 lsp) + 0.5 (mq - mp)^2 exp(-2 lsp) - 0.5 ]
  Tensor dls = o::sub(tape, p.log_sigma, q.log_sigma);
  Tensor var_ratio =
      o::exp(tape, o::scale(tape, o::sub(tape, q.log_sigma, p.log_sigma), 2.0));
  Tensor dmu = o::sub(tape, q.mu, p.mu);
  Tensor mean_term =
      o::mul(tape, o::mul(tape, dmu, dmu), o::exp(tape, o::scale(tape, p.log_sigma, -2.0)));
  Tensor inner = o::add(tape, dls,
                        o::add_scalar(tape,
                                      o::scale(tape, o::add(tape, var_ratio, mean_term), 0.5),
                                      -0.5));
  return o::sum(tape, inner);
}

namespace {

Tensor reparam_sample(Tape* tape, const LatentDistribution& d, Rng& rng) {
  std::vector<double> eps(d.mu.size());
  for (double& e : eps) e = rng.normal();
  Tensor eps_t(Shape{d.mu.size()}, eps);
  return o::add(tape, d.mu, o::mul(tape, o::exp(tape, d.log_sigma), eps_t));
}

// Constant measure from the annotation masks, pooled like the predictions.
DiscreteMeasure annotation_measure(const std::vector<Tensor>& annotations, int max_dim) {
  std::vector<Tensor> pooled;
  for (const Tensor& y : annotations)
    pooled.push_back(pool_to_measure_point(nullptr, y, max_dim));
  Matrix pts(static_cast<int64_t>(pooled.size()), pooled[0].size());
  for (size_t r = 0; r < pooled.size(); ++r)
    for (int64_t k = 0; k < pooled[r].size(); ++k)
      pts(static_cast<int64_t>(r), k) = pooled[r][k];
  return DiscreteMeasure::uniform(std::move(pts));
}

// Diagonal-covariance Gaussian-W2 surrogate between prediction and annotation
// point sets; the full matrix square root stays out of the training path.
Tensor frechet_surrogate(Tape* tape, const std::vector<Tensor>& pred_points,
                         const DiscreteMeasure& target) {
  int64_t m = static_cast<int64_t>(pred_points.size());
  if (m < 2)
    throw InvalidArgument("frechet loss: needs at least 2 prediction samples");
  int64_t dim = pred_points[0].size();
  if (dim != target.dim())
    throw ShapeError("frechet loss: point dimension mismatch");
  const double var_floor = 1e-10;

  // Prediction moments on the tape.
  Tensor sum = pred_points[0];
  for (int64_t i = 1; i < m; ++i) sum = o::add(tape, sum, pred_points[i]);
  Tensor mean_q = o::scale(tape, sum, 1.0 / static_cast<double>(m));
  Tensor var_q;
  for (int64_t i = 0; i < m; ++i) {
    Tensor d = o::sub(tape, pred_points[i], mean_q);
    Tensor sq = o::mul(tape, d, d);
    var_q = i == 0 ? sq : o::add(tape, var_q, sq);
  }
  var_q = o::scale(tape, var_q, 1.0 / static_cast<double>(m - 1));

  // Constant annotation moments.
  std::vector<double> mean_p(dim, 0.0), var_p(dim, 0.0);
  int64_t r = target.size();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t k = 0; k < dim; ++k) mean_p[k] += target.points(i, k) / r;
  if (r >= 2) {
    for (int64_t i = 0; i < r; ++i)
      for (int64_t k = 0; k < dim; ++k) {
        double d = target.points(i, k) - mean_p[k];
        var_p[k] += d * d / (r - 1);
      }
  }
  Tensor mean_p_t(Shape{dim}, mean_p);
  std::vector<double> sd_p(dim);
  for (int64_t k = 0; k < dim; ++k) sd_p[k] = std::sqrt(var_p[k] + var_floor);
  Tensor sd_p_t(Shape{dim}, sd_p);

  Tensor dmu = o::sub(tape, mean_q, mean_p_t);
  Tensor mean_term = o::sum(tape, o::mul(tape, dmu, dmu));
  Tensor sd_q = o::sqrt(tape, o::add_scalar(tape, var_q, var_floor));
  Tensor dsd = o::sub(tape, sd_q, sd_p_t);
  Tensor sd_term = o::sum(tape, o::mul(tape, dsd, dsd));
  return o::add(tape, mean_term, sd_term);
}

}  // namespace

Tensor pulaski_loss(Tape* tape, const Tensor& x, const std::vector<Tensor>& annotations,
                    const ModelParams& params, const ModelConfig& cfg, Rng& rng) {
  const LossSpec& spec = cfg.loss;
  if (!spec.is_distributional())
    throw InvalidArgument("pulaski_loss: loss kind must be a statistical distance");
  int r_count = static_cast<int>(annotations.size());
  if (r_count < 2)
    throw InvalidArgument("pulaski_loss: needs at least 2 annotations, got " +
                          std::to_string(r_count));

  Tensor features = unet_forward(tape, x, params, cfg);
  LatentDistribution prior = prior_forward(tape, x, params, cfg);

  // Constant target measure; also fixes the regularization scale so that
  // epsilon does not depend on the parameters.
  DiscreteMeasure target = annotation_measure(annotations, cfg.max_measure_dim);
  SinkhornConfig ot_cfg = cfg.sinkhorn;
  ot_cfg.epsilon = std::max(cfg.epsilon_rel * cfg.epsilon_rel *
                                squared_diameter(target, target),
                            1e-8);

  std::map<int, LatentDistribution> posterior_cache;
  std::vector<Tensor> pred_points;
  Tensor kl_sum;
  for (int m = 0; m < spec.m_samples; ++m) {
    int r = spec.fixed_pairing ? m % r_count
                               : static_cast<int>(rng.uniform_index(r_count));
    auto it = posterior_cache.find(r);
    if (it == posterior_cache.end())
      it = posterior_cache.emplace(r, posterior_forward(tape, x, annotations[r], params, cfg))
               .first;
    const LatentDistribution& posterior = it->second;

    Tensor z = reparam_sample(tape, posterior, rng);
    Tensor logits = head_logits(tape, features, z, params, cfg);
    Tensor prob = segmentation_probability(tape, logits);
    pred_points.push_back(pool_to_measure_point(tape, prob, cfg.max_measure_dim));

    Tensor kl = kl_diag_node(tape, posterior, prior);
    kl_sum = m == 0 ? kl : o::add(tape, kl_sum, kl);
  }

  Tensor distance;
  if (spec.kind == LossKind::kFrechet) {
    distance = frechet_surrogate(tape, pred_points, target);
  } else {
    std::vector<double> w(pred_points.size(), 1.0 / static_cast<double>(pred_points.size()));
    OtLossKind kind = spec.kind == LossKind::kSinkhorn ? OtLossKind::kSinkhorn
                                                       : OtLossKind::kHausdorff;
    distance = ot_divergence_node(tape, kind, pred_points, w, target, ot_cfg);
  }

  Tensor kl_mean = o::scale(tape, kl_sum, 1.0 / static_cast<double>(spec.m_samples));
  return o::add(tape, distance, o::scale(tape, kl_mean, spec.beta));
}

Tensor probunet_loss(Tape* tape, const Tensor& x, const Tensor& y, const ModelParams& params,
                     const ModelConfig& cfg, Rng& rng) {
  const LossSpec& spec = cfg.loss;
  if (spec.kind != LossKind::kCrossEntropy && spec.kind != LossKind::kFocalTversky)
    throw InvalidArgument("probunet_loss: loss kind must be CE or FTL");

  Tensor features = unet_forward(tape, x, params, cfg);
  LatentDistribution prior = prior_forward(tape, x, params, cfg);
  LatentDistribution posterior = posterior_forward(tape, x, y, params, cfg);

  Tensor recon_sum;
  for (int m = 0; m < spec.m_samples; ++m) {
    Tensor z = reparam_sample(tape, posterior, rng);
    Tensor logits = head_logits(tape, features, z, params, cfg);
    Tensor prob = segmentation_probability(tape, logits);
    Tensor recon = spec.kind == LossKind::kCrossEntropy
                       ? cross_entropy_loss(tape, prob, y)
                       : focal_tversky_loss(tape, prob, y, spec.ftl);
    recon_sum = m == 0 ? recon : o::add(tape, recon_sum, recon);
  }
  Tensor recon_mean = o::scale(tape, recon_sum, 1.0 / static_cast<double>(spec.m_samples));
  Tensor kl = kl_diag_node(tape, posterior, prior);
  return o::add(tape, recon_mean, o::scale(tape, kl, spec.beta));
}

SsnHead ssn_forward(Tape* tape, const Tensor& x, const ModelParams& params,
                    const ModelConfig& cfg) {
  Tensor features = unet_forward(tape, x, params, cfg);
  Tensor mu = ops::conv(tape, features, params.get("ssn.mu.w"), params.get("ssn.mu.b"));
  Tensor sig = ops::conv(tape, features, params.get("ssn.sigma.w"), params.get("ssn.sigma.b"));
  Tensor fac = ops::conv(tape, features, params.get("ssn.factor.w"), params.get("ssn.factor.b"));

  SsnHead head;
  int64_t v = mu.size();
  head.mu = o::reshape(tape, mu, Shape{v});
  head.sigma = o::add_scalar(tape, o::softplus(tape, o::reshape(tape, sig, Shape{v})), 1e-4);
  // Factor channels are ordered (class k, rank r); regroup to [v, R].
  int64_t rank = cfg.ssn_rank;
  int64_t k_classes = cfg.unet.n_classes;
  int64_t plane = v / k_classes;
  Tensor flat = o::reshape(tape, fac, Shape{fac.size()});
  // Row (k*plane + pix), column r maps to channel (k*rank + r) at pixel pix.
  std::vector<Tensor> columns;
  for (int64_t r = 0; r < rank; ++r) {
    std::vector<Tensor> per_class;
    for (int64_t k = 0; k < k_classes; ++k) {
      int64_t ch = k * rank + r;
      per_class.push_back(o::slice_flat(tape, flat, ch * plane, (ch + 1) * plane));
    }
    columns.push_back(o::concat_flat(tape, per_class));  // [v]
  }
  Tensor cols = o::concat_flat(tape, columns);  // column-major [R * v]
  head.factor = o::transpose2d(tape, o::reshape(tape, cols, Shape{rank, v}));  // [v, R]
  return head;
}

namespace {

// eta = mu + P eps1 + sqrt(sigma) .* eps2, with P shaped [v, R].
Tensor ssn_sample_eta(Tape* tape, const SsnHead& head, int64_t rank, Rng& rng) {
  int64_t v = head.mu.size();
  std::vector<double> e1(rank), e2(v);
  for (double& e : e1) e = rng.normal();
  for (double& e : e2) e = rng.normal();
  Tensor e1_t(Shape{rank, 1}, e1);
  Tensor e2_t(Shape{v}, e2);
  Tensor low_rank = o::reshape(tape, o::matmul(tape, head.factor, e1_t), Shape{v});
  Tensor diag_part = o::mul(tape, o::sqrt(tape, head.sigma), e2_t);
  return o::add(tape, head.mu, o::add(tape, low_rank, diag_part));
}

// sum over pixels of log p_eta(c = y) for binary classes, channel-major eta.
Tensor ssn_log_likelihood(Tape* tape, const Tensor& eta_flat, const Tensor& y) {
  int64_t v = eta_flat.size();
  int64_t plane = v / 2;
  Tensor eta0 = o::slice_flat(tape, eta_flat, 0, plane);
  Tensor eta1 = o::slice_flat(tape, eta_flat, plane, v);
  Tensor beta = o::sub(tape, eta1, eta0);
  Tensor yf = o::reshape(tape, y, Shape{plane});
  // log p(1) = -softplus(-beta), log p(0) = -softplus(beta)
  Tensor lp1 = o::scale(tape, o::softplus(tape, o::scale(tape, beta, -1.0)), -1.0);
  Tensor lp0 = o::scale(tape, o::softplus(tape, beta), -1.0);
  Tensor ones_minus_y = o::add_scalar(tape, o::scale(tape, yf, -1.0), 1.0);
  Tensor ll = o::add(tape, o::mul(tape, yf, lp1), o::mul(tape, ones_minus_y, lp0));
  return o::sum(tape, ll);
}

}  // namespace

Tensor ssn_loss(Tape* tape, const Tensor& x, const Tensor& y, const ModelParams& params,
                const ModelConfig& cfg, int m_samples, Rng& rng) {
  if (m_samples < 1) throw InvalidArgument("ssn_loss: m_samples must be >= 1");
  SsnHead head = ssn_forward(tape, x, params, cfg);
  std::vector<Tensor> log_liks;
  for (int m = 0; m < m_samples; ++m) {
    Tensor eta = ssn_sample_eta(tape, head, cfg.ssn_rank, rng);
    log_liks.push_back(ssn_log_likelihood(tape, eta, y));
  }
  // -log mean exp(s_m), stabilized around the largest sample.
  size_t star = 0;
  for (size_t m = 1; m < log_liks.size(); ++m)
    if (log_liks[m].item() > log_liks[star].item()) star = m;
  Tensor s_star = log_liks[star];
  Tensor exp_sum;
  for (size_t m = 0; m < log_liks.size(); ++m) {
    Tensor e = o::exp(tape, o::sub(tape, log_liks[m], s_star));
    exp_sum = m == 0 ? e : o::add(tape, exp_sum, e);
  }
  Tensor lme = o::add(tape, s_star,
                      o::log(tape, o::scale(tape, exp_sum,
                                            1.0 / static_cast<double>(log_liks.size()))));
  return o::scale(tape, lme, -1.0);
}

Tensor mcdo_loss(Tape* tape, const Tensor& x, const Tensor& y, const ModelParams& params,
                 const ModelConfig& cfg, Rng& rng) {
  Tensor features = unet_forward(tape, x, params, cfg, &rng, true);
  Tensor logits = ops::conv(tape, features, params.get("head.final.w"),
                            params.get("head.final.b"));
  Tensor prob = segmentation_probability(tape, logits);
  return focal_tversky_loss(tape, prob, y, cfg.loss.ftl);
}

std::vector<Tensor> ssn_sample_maps(const Tensor& x, const ModelParams& params,
                                    const ModelConfig& cfg, int m_samples, Rng& rng) {
  SsnHead head = ssn_forward(nullptr, x, params, cfg);
  const Shape& xs = x.shape();
  Shape map_shape = xs;  // [1,1,spatial]
  std::vector<Tensor> maps;
  for (int m = 0; m < m_samples; ++m) {
    Tensor eta = ssn_sample_eta(nullptr, head, cfg.ssn_rank, rng);
    int64_t plane = eta.size() / 2;
    Tensor eta0 = o::slice_flat(nullptr, eta, 0, plane);
    Tensor eta1 = o::slice_flat(nullptr, eta, plane, eta.size());
    Tensor prob = o::sigmoid(nullptr, o::sub(nullptr, eta1, eta0));
    maps.push_back(o::reshape(nullptr, prob, map_shape));
  }
  return maps;
}

}  // namespace pulaski
