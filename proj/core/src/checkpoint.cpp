#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pulaski/train.hpp"

using nlohmann::json;

namespace pulaski {

namespace {

constexpr char kMagic[5] = {'P', 'L', 'S', 'K', '1'};

json config_json(const ModelConfig& cfg) {
  return json{{"kind", to_string(cfg.kind)},
              {"spatial_dims", cfg.unet.spatial_dims},
              {"depth", cfg.unet.depth},
              {"base_channels", cfg.unet.base_channels},
              {"n_classes", cfg.unet.n_classes},
              {"in_channels", cfg.unet.in_channels},
              {"dropout_rate", cfg.unet.dropout_rate},
              {"latent_dim", cfg.latent.dim},
              {"loss_beta", cfg.loss.beta},
              {"m_samples", cfg.loss.m_samples},
              {"ftl_alpha", cfg.loss.ftl.alpha},
              {"ftl_beta", cfg.loss.ftl.beta},
              {"ftl_gamma", cfg.loss.ftl.gamma},
              {"fixed_pairing", cfg.loss.fixed_pairing},
              {"ssn_rank", cfg.ssn_rank},
              {"epsilon_rel", cfg.epsilon_rel},
              {"max_measure_dim", cfg.max_measure_dim},
              {"sinkhorn_tol", cfg.sinkhorn.tol},
              {"sinkhorn_max_iters", cfg.sinkhorn.max_iters},
              {"sinkhorn_scaling", cfg.sinkhorn.scaling}};
}

ModelConfig config_from(const json& j) {
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
  cfg.unet.spatial_dims = j.at("spatial_dims").get<int>();
  cfg.unet.depth = j.at("depth").get<int>();
  cfg.unet.base_channels = j.at("base_channels").get<int>();
  cfg.unet.n_classes = j.at("n_classes").get<int>();
  cfg.unet.in_channels = j.at("in_channels").get<int>();
  cfg.unet.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.latent.dim = j.at("latent_dim").get<int>();
  cfg.loss.kind = cfg.loss_kind();
  cfg.loss.beta = j.at("loss_beta").get<double>();
  cfg.loss.m_samples = j.at("m_samples").get<int>();
  cfg.loss.ftl.alpha = j.at("ftl_alpha").get<double>();
  cfg.loss.ftl.beta = j.at("ftl_beta").get<double>();
  cfg.loss.ftl.gamma = j.at("ftl_gamma").get<double>();
  cfg.loss.fixed_pairing = j.at("fixed_pairing").get<bool>();
  cfg.ssn_rank = j.at("ssn_rank").get<int>();
  cfg.epsilon_rel = j.at("epsilon_rel").get<double>();
  cfg.max_measure_dim = j.at("max_measure_dim").get<int>();
  cfg.sinkhorn.tol = j.at("sinkhorn_tol").get<double>();
  cfg.sinkhorn.max_iters = j.at("sinkhorn_max_iters").get<int>();
  cfg.sinkhorn.scaling = j.at("sinkhorn_scaling").get<double>();
  return cfg;
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ostream& os, const std::vector<double>& v) {
  // Little-endian host assumed; payload is defined little-endian.
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  return config_from(json::parse(text));
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& cfg) {
  json manifest;
  manifest["model"] = config_json(cfg);
  json names = json::array(), shapes = json::array(), dtypes = json::array();
  for (size_t i = 0; i < params.count(); ++i) {
    names.push_back(params.names()[i]);
    shapes.push_back(params.tensors()[i].shape());
    dtypes.push_back("f64");
  }
  manifest["names"] = names;
  manifest["shapes"] = shapes;
  manifest["dtypes"] = dtypes;
  std::string mtext = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(kMagic, 5);
  put_u32(os, static_cast<uint32_t>(mtext.size()));
  os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const Tensor& t : params.tensors()) write_f64_le(os, t.values());
  if (!os) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw IoError("not a PLSK1 checkpoint: " + path);
  uint32_t mlen = get_u32(is);
  std::string mtext(mlen, '\0');
  is.read(mtext.data(), mlen);
  if (!is) throw IoError("truncated checkpoint manifest: " + path);
  json manifest = json::parse(mtext);

  Checkpoint ck;
  ck.config = config_from(manifest.at("model"));
  const json& names = manifest.at("names");
  const json& shapes = manifest.at("shapes");
  for (size_t i = 0; i < names.size(); ++i) {
    Shape shape = shapes[i].get<Shape>();
    std::vector<double> data(numel(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint payload: " + path);
    ck.params.add(names[i].get<std::string>(), Tensor(shape, std::move(data)));
  }
  return ck;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write history: " + path);
  os << "epoch,train_loss,val_loss\n";
  os.precision(17);
  for (const EpochRecord& r : history)
    os << r.epoch << "," << r.train_loss << "," << r.val_loss << "\n";
}

}  // namespace pulaski
