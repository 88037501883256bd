#pragma once

#include <string>
#include <vector>

#include "pulaski/datagen.hpp"
#include "pulaski/model.hpp"

namespace pulaski {

struct TrainConfig {
  int epochs = 500;
  double lr = 1e-3;
  int batch_size = 8;      // 4 is the 3-D default, set by the CLI
  int per_epoch_cap = 256; // training samples visited per epoch
  uint64_t seed = 7;

  void validate() const;
};

// One training sample: an image with its full annotation set (2-D slice or
// 3-D patch, depending on the model dimensionality).
struct TrainSample {
  Tensor image;                    // [1,1,spatial]
  std::vector<Tensor> annotations; // R binary masks, [1,1,spatial]
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParams best_params;  // snapshot at the lowest validation loss
  std::vector<EpochRecord> history;
  int best_epoch = -1;  // -1 when epochs == 0
  double best_val_loss = 0.0;
};

// Turns dataset volumes into model-ready samples: 2-D models consume slices
// along the last axis (or whole volumes when already 2-D), 3-D models consume
// overlapping patches.
std::vector<TrainSample> build_samples(const Dataset& ds, const std::vector<size_t>& indices,
                                       const ModelConfig& cfg);

// Loss of a single sample; dispatches on the model kind.
Tensor sample_loss(Tape* tape, const TrainSample& s, const ModelParams& params,
                   const ModelConfig& cfg, Rng& rng);

// Adam training with per-epoch subsampling and best-validation selection.
TrainResult train(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg);

// Checkpoint format "PLSK1": magic, u32 little-endian JSON manifest length,
// manifest (names, shapes, dtype, model config), then raw little-endian f64
// payloads in manifest order.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg);
struct Checkpoint {
  ModelParams params;
  ModelConfig config;
};
Checkpoint load_checkpoint(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

// Serialization of the model config inside checkpoints and run manifests.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace pulaski
