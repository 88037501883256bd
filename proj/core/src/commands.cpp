#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "pulaski/commands.hpp"
#include "pulaski/sha1.hpp"
#include "pulaski/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pulaski {

namespace {

double wall_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const RunConfig& cfg, const std::string& content_hash,
                        const json& extra, double wall_clock) {
  json m;
  m["command"] = command;
  m["config"] = cfg.entries();
  m["content_hash"] = content_hash;
  m["wall_clock_sec"] = wall_clock;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  fs::create_directories(out_dir);
  std::string tmp = (fs::path(out_dir) / "run_manifest.json.tmp").string();
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write run manifest in " + out_dir);
    os << m.dump(2) << "\n";
  }
  fs::rename(tmp, fs::path(out_dir) / "run_manifest.json");
}

std::string config_hash(const RunConfig& cfg) {
  std::string blob;
  for (const auto& [k, v] : cfg.entries()) blob += k + "=" + v + "\n";
  return sha1_hex(blob);
}

}  // namespace

void cmd_gen(const RunConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  cfg.validate_keys("gen");
  SyntheticSpec spec = cfg.synthetic_spec();
  std::string out = cfg.out_dir();

  Dataset ds = generate_dataset(spec);
  write_dataset(out, ds);

  json extra;
  extra["n_volumes"] = ds.volumes.size();
  extra["splits"] = json{{"train", ds.train_idx.size()},
                         {"val", ds.val_idx.size()},
                         {"test", ds.test_idx.size()}};
  write_run_manifest(out, "gen", cfg, config_hash(cfg), extra, wall_seconds(t0));
}

TrainOutcome cmd_train(const RunConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  cfg.validate_keys("train");
  std::string out = cfg.out_dir();
  std::string data_dir = cfg.get_string("dataset.path", "");
  if (data_dir.empty()) throw InvalidArgument("train: dataset.path is required");
  ModelConfig mcfg = cfg.model_config();
  TrainConfig tcfg = cfg.train_config();

  Dataset ds = load_dataset(data_dir);
  TrainResult result = train(ds, mcfg, tcfg);

  fs::create_directories(out);
  TrainOutcome outcome;
  outcome.checkpoint_path = (fs::path(out) / "checkpoint.plsk").string();
  outcome.history_path = (fs::path(out) / "history.csv").string();
  outcome.best_val_loss = result.best_val_loss;
  outcome.best_epoch = result.best_epoch;
  save_checkpoint(outcome.checkpoint_path, result.best_params, mcfg);
  write_history_csv(outcome.history_path, result.history);

  json extra;
  extra["best_epoch"] = result.best_epoch;
  extra["best_val_loss"] = result.best_val_loss;
  extra["epochs_run"] = result.history.size();
  std::string hash =
      sha1_hex(config_hash(cfg) + sha1_file((fs::path(data_dir) / "manifest.json").string()));
  write_run_manifest(out, "train", cfg, hash, extra, wall_seconds(t0));
  return outcome;
}

// ---- sampling -------------------------------------------------------------------

namespace {

// Deterministic per-map binarization; a constant map has no Otsu threshold and
// falls back to 0.5.
BinaryMask binarize_with_otsu(const ProbabilityMap& p) {
  double tau;
  try {
    tau = otsu_threshold(p);
    if (!(tau > 0.0 && tau < 1.0)) tau = 0.5;
  } catch (const InvalidArgument&) {
    tau = 0.5;
  }
  return binarize(p, tau);
}

ProbabilityMap stack_slice_maps(const std::vector<ProbabilityMap>& slices, const Shape& extents) {
  // Slices along the last axis, index-aligned with extract_slices.
  ProbabilityMap out;
  out.extents = extents;
  out.values.assign(numel(extents), 0.0);
  int64_t e2 = extents[2];
  int64_t plane = numel(Shape(extents.begin(), extents.end() - 1));
  for (int64_t s = 0; s < e2; ++s)
    for (int64_t j = 0; j < plane; ++j) out.values[j * e2 + s] = slices[s].values[j];
  return out;
}

}  // namespace

VolumePrediction predict_volume(const AnnotatedVolume& vol, const ModelParams& params,
                                const ModelConfig& cfg, int m_samples, Rng& rng) {
  VolumePrediction pred;
  pred.image_id = vol.id;
  int vol_dims = static_cast<int>(vol.extents.size());

  auto mean_map_of = [&](const Tensor& x) -> ProbabilityMap {
    if (model_uses_latent(cfg.kind)) return tensor_to_map(most_probable_map(x, params, cfg));
    if (cfg.kind == ModelKind::kSsn) {
      SsnHead head = ssn_forward(nullptr, x, params, cfg);
      int64_t plane = head.mu.size() / 2;
      Tensor eta0 = ops::slice_flat(nullptr, head.mu, 0, plane);
      Tensor eta1 = ops::slice_flat(nullptr, head.mu, plane, head.mu.size());
      Tensor prob = ops::sigmoid(nullptr, ops::sub(nullptr, eta1, eta0));
      return tensor_to_map(ops::reshape(nullptr, prob, x.shape()));
    }
    // MCDO: dropout-free deterministic forward.
    Tensor feat = unet_forward(nullptr, x, params, cfg);
    Tensor logits =
        ops::conv(nullptr, feat, params.get("head.final.w"), params.get("head.final.b"));
    return tensor_to_map(segmentation_probability(nullptr, logits));
  };

  if (cfg.unet.spatial_dims == 2 && vol_dims == 3) {
    // Slice-wise prediction stacked back into volumes.
    std::vector<AnnotatedVolume> slices = extract_slices(vol, vol_dims - 1);
    std::vector<std::vector<ProbabilityMap>> per_sample(m_samples);
    std::vector<ProbabilityMap> mean_slices;
    for (const AnnotatedVolume& sl : slices) {
      Tensor x = image_to_tensor(sl.image, sl.extents);
      std::vector<Tensor> maps = sample_probability_maps(x, params, cfg, m_samples, rng);
      for (int m = 0; m < m_samples; ++m) per_sample[m].push_back(tensor_to_map(maps[m]));
      mean_slices.push_back(mean_map_of(x));
    }
    for (int m = 0; m < m_samples; ++m)
      pred.prob_maps.push_back(stack_slice_maps(per_sample[m], vol.extents));
    pred.mean_map = stack_slice_maps(mean_slices, vol.extents);
  } else if (cfg.unet.spatial_dims == 3 && vol_dims == 3) {
    // Patch-wise prediction with overlap averaging.
    PatchSpec ps;
    std::vector<Shape> positions = patch_positions(vol.extents, ps);
    std::vector<std::vector<std::pair<std::vector<double>, Shape>>> per_sample(m_samples);
    std::vector<std::pair<std::vector<double>, Shape>> mean_patches;
    for (const Shape& pos : positions) {
      AnnotatedVolume patch = extract_patch(vol, pos, ps.patch_extents);
      Tensor x = image_to_tensor(patch.image, patch.extents);
      std::vector<Tensor> maps = sample_probability_maps(x, params, cfg, m_samples, rng);
      for (int m = 0; m < m_samples; ++m)
        per_sample[m].emplace_back(tensor_to_map(maps[m]).values, pos);
      mean_patches.emplace_back(mean_map_of(x).values, pos);
    }
    for (int m = 0; m < m_samples; ++m) {
      ProbabilityMap pm;
      pm.extents = vol.extents;
      pm.values = stitch_overlap_average(per_sample[m], ps.patch_extents, vol.extents);
      pred.prob_maps.push_back(std::move(pm));
    }
    pred.mean_map.extents = vol.extents;
    pred.mean_map.values = stitch_overlap_average(mean_patches, ps.patch_extents, vol.extents);
  } else if (cfg.unet.spatial_dims == 2 && vol_dims == 2) {
    Tensor x = image_to_tensor(vol.image, vol.extents);
    std::vector<Tensor> maps = sample_probability_maps(x, params, cfg, m_samples, rng);
    for (const Tensor& m : maps) pred.prob_maps.push_back(tensor_to_map(m));
    pred.mean_map = mean_map_of(x);
  } else {
    throw InvalidArgument("predict_volume: model dimensionality does not fit volume " +
                          shape_str(vol.extents));
  }

  for (const ProbabilityMap& p : pred.prob_maps) pred.masks.push_back(binarize_with_otsu(p));
  return pred;
}

void cmd_sample(const RunConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  cfg.validate_keys("sample");
  std::string out = cfg.out_dir();
  std::string data_dir = cfg.get_string("dataset.path", "");
  std::string ckpt_path = cfg.get_string("sample.checkpoint", "");
  if (data_dir.empty()) throw InvalidArgument("sample: dataset.path is required");
  if (ckpt_path.empty()) throw InvalidArgument("sample: sample.checkpoint is required");
  int m_samples = static_cast<int>(cfg.get_int("sample.m", 10));
  if (m_samples < 1) throw InvalidArgument("sample: sample.m must be >= 1");

  Dataset ds = load_dataset(data_dir);
  Checkpoint ck = load_checkpoint(ckpt_path);

  fs::create_directories(out);
  json images = json::array();
  for (size_t t = 0; t < ds.test_idx.size(); ++t) {
    const AnnotatedVolume& vol = ds.volumes[ds.test_idx[t]];
    Rng rng(Rng::derive_seed(cfg.seed(), 0x5A000000u + t));
    VolumePrediction pred = predict_volume(vol, ck.params, ck.config, m_samples, rng);

    fs::path vdir = fs::path(out) / vol.id;
    fs::create_directories(vdir);
    json rec;
    rec["id"] = vol.id;
    json mask_files = json::array(), prob_files = json::array();
    for (int m = 0; m < m_samples; ++m) {
      std::string mask_rel = vol.id + "/mask_" + std::to_string(m) + ".pvol";
      std::string prob_rel = vol.id + "/prob_" + std::to_string(m) + ".pvol";
      write_mask_pvol((fs::path(out) / mask_rel).string(), pred.masks[m]);
      write_image_pvol((fs::path(out) / prob_rel).string(), pred.prob_maps[m].extents,
                       pred.prob_maps[m].values);
      mask_files.push_back(mask_rel);
      prob_files.push_back(prob_rel);
    }
    std::string mean_rel = vol.id + "/mean_map.pvol";
    write_image_pvol((fs::path(out) / mean_rel).string(), pred.mean_map.extents,
                     pred.mean_map.values);
    rec["masks"] = mask_files;
    rec["probs"] = prob_files;
    rec["mean_map"] = mean_rel;
    images.push_back(rec);
  }

  json manifest;
  manifest["model"] = to_string(ck.config.kind);
  manifest["m_samples"] = m_samples;
  manifest["dataset"] = data_dir;
  manifest["images"] = images;
  {
    std::string tmp = (fs::path(out) / "samples_manifest.json.tmp").string();
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write samples manifest in " + out);
    os << manifest.dump(2) << "\n";
    os.close();
    fs::rename(tmp, fs::path(out) / "samples_manifest.json");
  }

  std::string hash = sha1_hex(config_hash(cfg) + sha1_file(ckpt_path));
  write_run_manifest(out, "sample", cfg, hash, json{{"n_images", images.size()}},
                     wall_seconds(t0));
}

// ---- evaluation -------------------------------------------------------------------

namespace {

struct MethodPredictions {
  std::string label;
  std::string model;
  std::map<std::string, std::vector<BinaryMask>> masks_by_image;
};

MethodPredictions load_predictions(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "samples_manifest.json");
  if (!is) throw IoError("no samples manifest in " + dir);
  json manifest = json::parse(is);
  MethodPredictions mp;
  mp.model = manifest.at("model").get<std::string>();
  mp.label = fs::path(dir).filename().string();
  if (mp.label.empty()) mp.label = mp.model;
  for (const json& rec : manifest.at("images")) {
    std::string id = rec.at("id").get<std::string>();
    std::vector<BinaryMask> masks;
    for (const json& rel : rec.at("masks")) {
      PvolContent c = read_pvol((fs::path(dir) / rel.get<std::string>()).string());
      if (!c.is_mask) throw IoError("prediction payload is not a mask in " + dir);
      masks.push_back(std::move(c.mask));
    }
    mp.masks_by_image[id] = std::move(masks);
  }
  return mp;
}

std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var)};
}

void write_roo_maps(const std::string& out, const std::string& tag,
                    const std::string& image_id, const std::vector<BinaryMask>& masks) {
  ProbabilityMap roo = rate_of_occurrence(masks);
  fs::path dir = fs::path(out) / "roo";
  fs::create_directories(dir);
  if (roo.extents.size() == 2) {
    write_pgm((dir / (tag + "_" + image_id + ".pgm")).string(), roo.extents, roo.values);
  } else {
    // One PGM per slice along the last axis.
    int64_t e2 = roo.extents[2];
    int64_t plane = roo.extents[0] * roo.extents[1];
    Shape se{roo.extents[0], roo.extents[1]};
    for (int64_t s = 0; s < e2; ++s) {
      std::vector<double> sl(plane);
      for (int64_t j = 0; j < plane; ++j) sl[j] = roo.values[j * e2 + s];
      write_pgm((dir / (tag + "_" + image_id + "_s" + std::to_string(s) + ".pgm")).string(),
                se, sl);
    }
  }
}

}  // namespace

EvalOutcome cmd_eval(const RunConfig& cfg, const std::vector<std::string>& prediction_dirs) {
  auto t0 = std::chrono::steady_clock::now();
  cfg.validate_keys("eval");
  std::string out = cfg.out_dir();
  std::string data_dir = cfg.get_string("dataset.path", "");
  if (data_dir.empty()) throw InvalidArgument("eval: dataset.path is required");
  if (prediction_dirs.empty()) throw InvalidArgument("eval: at least one predictions dir");

  Dataset ds = load_dataset(data_dir);
  std::vector<MethodPredictions> methods;
  for (const std::string& dir : prediction_dirs) methods.push_back(load_predictions(dir));

  // Every test volume must be covered by every method.
  std::string missing;
  for (size_t idx : ds.test_idx) {
    const std::string& id = ds.volumes[idx].id;
    for (const MethodPredictions& mp : methods)
      if (!mp.masks_by_image.count(id)) missing += " " + mp.label + ":" + id;
  }
  if (!missing.empty()) throw InvalidArgument("eval: missing predictions for" + missing);

  fs::create_directories(out);
  EvalOutcome outcome;
  json aggregate;
  std::map<std::string, std::vector<double>> ged_by_method, kalpha_by_method;

  // Annotation statistics are method-independent.
  std::vector<double> ann_kall, ann_kroi;
  for (size_t idx : ds.test_idx) {
    const AnnotatedVolume& vol = ds.volumes[idx];
    ann_kall.push_back(krippendorff_alpha(vol.annotations, KalphaRegion::kAll));
    BinaryMask roi = roi_union(vol.annotations);
    ann_kroi.push_back(krippendorff_alpha_in_roi(vol.annotations, roi));
    write_roo_maps(out, "annotation", vol.id, vol.annotations);
  }
  auto [ann_kall_m, ann_kall_sd] = mean_sd(ann_kall);
  auto [ann_kroi_m, ann_kroi_sd] = mean_sd(ann_kroi);
  // Tabular values follow the x100 convention; machine-readable raw values sit
  // alongside them.
  aggregate["annotation"] = json{{"kalpha_all_mean", 100.0 * ann_kall_m},
                                 {"kalpha_all_sd", 100.0 * ann_kall_sd},
                                 {"kalpha_roi_mean", 100.0 * ann_kroi_m},
                                 {"kalpha_roi_sd", 100.0 * ann_kroi_sd},
                                 {"kalpha_all_raw", ann_kall_m},
                                 {"kalpha_roi_raw", ann_kroi_m}};

  for (const MethodPredictions& mp : methods) {
    MetricsReport report;
    report.annotation_kalpha_all_mean = ann_kall_m;
    report.annotation_kalpha_all_sd = ann_kall_sd;
    report.annotation_kalpha_roi_mean = ann_kroi_m;
    report.annotation_kalpha_roi_sd = ann_kroi_sd;

    std::string csv_path = (fs::path(out) / (mp.label + "_metrics.csv")).string();
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << "image_id,ged,kalpha_all,kalpha_roi\n";
    csv.precision(17);

    std::vector<double> geds, kalls, krois;
    for (size_t idx : ds.test_idx) {
      const AnnotatedVolume& vol = ds.volumes[idx];
      const std::vector<BinaryMask>& pred = mp.masks_by_image.at(vol.id);
      ImageMetrics im;
      im.image_id = vol.id;
      im.ged = ged_squared(pred, vol.annotations);
      im.kalpha_all = krippendorff_alpha(pred, KalphaRegion::kAll);
      BinaryMask roi = roi_union(vol.annotations);
      im.kalpha_roi = krippendorff_alpha_in_roi(pred, roi);
      report.per_image.push_back(im);
      geds.push_back(im.ged);
      kalls.push_back(im.kalpha_all);
      krois.push_back(im.kalpha_roi);
      csv << im.image_id << "," << im.ged << "," << im.kalpha_all << "," << im.kalpha_roi
          << "\n";
      write_roo_maps(out, mp.label, vol.id, pred);
    }
    std::tie(report.ged_mean, report.ged_sd) = mean_sd(geds);
    std::tie(report.kalpha_all_mean, report.kalpha_all_sd) = mean_sd(kalls);
    std::tie(report.kalpha_roi_mean, report.kalpha_roi_sd) = mean_sd(krois);

    aggregate[mp.label] = json{{"model", mp.model},
                               {"ged_mean", report.ged_mean},
                               {"ged_sd", report.ged_sd},
                               {"kalpha_all_mean", 100.0 * report.kalpha_all_mean},
                               {"kalpha_all_sd", 100.0 * report.kalpha_all_sd},
                               {"kalpha_roi_mean", 100.0 * report.kalpha_roi_mean},
                               {"kalpha_roi_sd", 100.0 * report.kalpha_roi_sd},
                               {"kalpha_all_raw", report.kalpha_all_mean},
                               {"kalpha_roi_raw", report.kalpha_roi_mean}};

    ged_by_method[mp.label] = geds;
    kalpha_by_method[mp.label] = kalls;
    outcome.report = report;  // last one wins; callers pass a single dir for one report
    if (outcome.metrics_csv.empty()) outcome.metrics_csv = csv_path;
  }

  // Pairwise significance tests across methods.
  if (methods.size() > 1) {
    json tests = json::array();
    for (size_t i = 0; i < methods.size(); ++i)
      for (size_t j = i + 1; j < methods.size(); ++j) {
        auto run_test = [&](const std::map<std::string, std::vector<double>>& by_method,
                            const std::string& metric) -> json {
          json t;
          t["metric"] = metric;
          t["a"] = methods[i].label;
          t["b"] = methods[j].label;
          try {
            WilcoxonResult w = wilcoxon_signed_rank(by_method.at(methods[i].label),
                                                    by_method.at(methods[j].label));
            t["p_value"] = w.p_value;
            t["statistic"] = w.statistic;
            t["exact"] = w.exact;
          } catch (const UndefinedTest& e) {
            t["p_value"] = "n/a";
            t["note"] = e.what();
          }
          return t;
        };
        tests.push_back(run_test(ged_by_method, "ged"));
        tests.push_back(run_test(kalpha_by_method, "kalpha_all"));
      }
    aggregate["wilcoxon"] = tests;
  }

  outcome.aggregate_json = (fs::path(out) / "aggregate.json").string();
  {
    std::string tmp = outcome.aggregate_json + ".tmp";
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write " + outcome.aggregate_json);
    os << aggregate.dump(2) << "\n";
    os.close();
    fs::rename(tmp, outcome.aggregate_json);
  }

  std::string hash = config_hash(cfg);
  write_run_manifest(out, "eval", cfg, hash,
                     json{{"methods", methods.size()}, {"images", ds.test_idx.size()}},
                     wall_seconds(t0));
  return outcome;
}

}  // namespace pulaski
