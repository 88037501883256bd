#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "pulaski/commands.hpp"

namespace pulaski {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

// Key registry per command; gen/train/sample/eval share the common block.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "out",
      // dataset generation / location
      "dataset.path", "dataset.extents", "dataset.n_images", "dataset.n_raters",
      "dataset.structure", "dataset.dilation_mean", "dataset.dilation_sd",
      "dataset.dilation_low", "dataset.dilation_high", "dataset.flip_prob",
      "dataset.noise_sd",
      // model
      "model.kind", "model.dims", "model.depth", "model.base_channels",
      "model.latent_dim", "model.dropout_rate", "model.ssn_rank",
      // loss
      "loss.beta", "loss.m_samples", "loss.ftl_alpha", "loss.ftl_beta", "loss.ftl_gamma",
      "loss.fixed_pairing",
      // transport solver
      "sinkhorn.epsilon_rel", "sinkhorn.tol", "sinkhorn.max_iters", "sinkhorn.scaling",
      "sinkhorn.max_measure_dim",
      // training
      "train.epochs", "train.lr", "train.batch", "train.per_epoch_cap",
      // sampling / checkpoints
      "sample.m", "sample.checkpoint",
  };
  return keys;
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw InvalidArgument("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
    std::string full = section.empty() ? key : section + "." + key;
    cfg.entries_[full] = value;
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
  entries_[key] = unquote(trim(value));
}

void RunConfig::validate_keys(const std::string& command) const {
  (void)command;
  for (const auto& [k, v] : entries_)
    if (!known_keys().count(k)) throw InvalidArgument("unknown config key: " + k);
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t used = 0;
    int64_t v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + ": expected integer, got '" + it->second + "'");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + ": expected number, got '" + it->second + "'");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw InvalidArgument("config key " + key + ": expected boolean, got '" + it->second + "'");
}

std::string RunConfig::out_dir() const {
  std::string out = get_string("out", "");
  if (out.empty()) throw InvalidArgument("config: 'out' directory is required");
  return out;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  std::string extents = get_string("dataset.extents", "32x32x32");
  s.extents.clear();
  std::string tok;
  for (char c : extents + "x") {
    if (c == 'x' || c == 'X') {
      if (!tok.empty()) s.extents.push_back(std::stoll(tok));
      tok.clear();
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      tok += c;
    } else {
      throw InvalidArgument("dataset.extents: expected AxBxC, got '" + extents + "'");
    }
  }
  s.n_images = static_cast<int>(get_int("dataset.n_images", 15));
  s.n_raters = static_cast<int>(get_int("dataset.n_raters", 5));
  std::string structure = get_string("dataset.structure", "tubes");
  if (structure == "tubes") s.structure = SyntheticSpec::Structure::kTubes;
  else if (structure == "blobs") s.structure = SyntheticSpec::Structure::kBlobs;
  else throw InvalidArgument("dataset.structure: expected tubes|blobs, got '" + structure + "'");
  s.dilation_mean = get_double("dataset.dilation_mean", s.dilation_mean);
  s.dilation_sd = get_double("dataset.dilation_sd", s.dilation_sd);
  s.dilation_low = get_double("dataset.dilation_low", s.dilation_low);
  s.dilation_high = get_double("dataset.dilation_high", s.dilation_high);
  s.flip_prob = get_double("dataset.flip_prob", s.flip_prob);
  s.noise_sd = get_double("dataset.noise_sd", s.noise_sd);
  s.seed = seed();
  s.validate();
  return s;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(get_string("model.kind", "pulaski-hausdorff"));
  cfg.unet.spatial_dims = static_cast<int>(get_int("model.dims", 2));
  cfg.unet.depth = static_cast<int>(get_int("model.depth", 3));
  cfg.unet.base_channels = static_cast<int>(get_int("model.base_channels", 8));
  double default_dropout = cfg.kind == ModelKind::kMcdo ? 0.3 : 0.0;
  cfg.unet.dropout_rate = get_double("model.dropout_rate", default_dropout);
  cfg.latent.dim = static_cast<int>(get_int("model.latent_dim", 3));
  cfg.ssn_rank = static_cast<int>(get_int("model.ssn_rank", 10));
  cfg.loss.kind = cfg.loss_kind();
  cfg.loss.beta = get_double("loss.beta", 1.0);
  cfg.loss.m_samples = static_cast<int>(get_int("loss.m_samples", 4));
  cfg.loss.ftl.alpha = get_double("loss.ftl_alpha", 0.7);
  cfg.loss.ftl.beta = get_double("loss.ftl_beta", 0.3);
  cfg.loss.ftl.gamma = get_double("loss.ftl_gamma", 4.0 / 3.0);
  cfg.loss.fixed_pairing = get_bool("loss.fixed_pairing", false);
  cfg.epsilon_rel = get_double("sinkhorn.epsilon_rel", 0.05);
  cfg.sinkhorn.tol = get_double("sinkhorn.tol", 1e-6);
  cfg.sinkhorn.max_iters = static_cast<int>(get_int("sinkhorn.max_iters", 500));
  cfg.sinkhorn.scaling = get_double("sinkhorn.scaling", 0.5);
  cfg.max_measure_dim = static_cast<int>(get_int("sinkhorn.max_measure_dim", 256));
  cfg.validate();
  return cfg;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = static_cast<int>(get_int("train.epochs", 500));
  t.lr = get_double("train.lr", 1e-3);
  int default_batch = get_int("model.dims", 2) == 3 ? 4 : 8;
  t.batch_size = static_cast<int>(get_int("train.batch", default_batch));
  t.per_epoch_cap = static_cast<int>(get_int("train.per_epoch_cap", 256));
  t.seed = seed();
  t.validate();
  return t;
}

}  // namespace pulaski
