#pragma once

#include <map>
#include <string>
#include <vector>

#include "pulaski/metrics.hpp"
#include "pulaski/train.hpp"

namespace pulaski {

// Declarative configuration: a TOML-syntax key = value file with optional
// [sections] (flattened to section.key), plus --key=value overrides. Unknown
// keys are rejected before any work happens.
class RunConfig {
 public:
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  void apply_override(const std::string& key, const std::string& value);
  void validate_keys(const std::string& command) const;

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Resolved common settings.
  uint64_t seed() const { return static_cast<uint64_t>(get_int("seed", 7)); }
  std::string out_dir() const;

  SyntheticSpec synthetic_spec() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;

 private:
  std::map<std::string, std::string> entries_;
};

// Command entry points used by the CLI binary and by tests. Each returns the
// paths it wrote via the manifest; all validation precedes side effects.
void cmd_gen(const RunConfig& cfg);

struct TrainOutcome {
  std::string checkpoint_path;
  std::string history_path;
  double best_val_loss = 0.0;
  int best_epoch = -1;
};
TrainOutcome cmd_train(const RunConfig& cfg);

void cmd_sample(const RunConfig& cfg);

struct EvalOutcome {
  MetricsReport report;
  std::string metrics_csv;
  std::string aggregate_json;
};
// `prediction_dirs` are outputs of cmd_sample; with more than one directory,
// pairwise Wilcoxon tests across methods are added to the report files.
EvalOutcome cmd_eval(const RunConfig& cfg, const std::vector<std::string>& prediction_dirs);

// Shared by cmd_sample and tests: prediction masks and maps for one volume.
struct VolumePrediction {
  std::string image_id;
  std::vector<ProbabilityMap> prob_maps;
  std::vector<BinaryMask> masks;
  ProbabilityMap mean_map;  // prior-mean (or dropout-free / mean-logit) map
};
VolumePrediction predict_volume(const AnnotatedVolume& vol, const ModelParams& params,
                                const ModelConfig& cfg, int m_samples, Rng& rng);

}  // namespace pulaski
