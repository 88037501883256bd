#include "pulaski/volume_io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pulaski {

namespace {

constexpr char kMagic[5] = {'P', 'V', 'O', 'L', '1'};

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

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

void write_header(std::ostream& os, const Shape& extents, uint8_t kind) {
  os.write(kMagic, 5);
  uint8_t dims = static_cast<uint8_t>(extents.size());
  os.write(reinterpret_cast<const char*>(&dims), 1);
  for (int64_t e : extents) put_u32(os, static_cast<uint32_t>(e));
  os.write(reinterpret_cast<const char*>(&kind), 1);
}

}  // namespace

void write_image_pvol(const std::string& path, const Shape& extents,
                      const std::vector<double>& image) {
  if (numel(extents) != static_cast<int64_t>(image.size()))
    throw ShapeError("write_image_pvol: size mismatch for " + path);
  std::ofstream os = open_out(path);
  write_header(os, extents, 0);
  std::vector<float> buf(image.size());
  for (size_t i = 0; i < image.size(); ++i) buf[i] = static_cast<float>(image[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path);
}

void write_mask_pvol(const std::string& path, const BinaryMask& mask) {
  std::ofstream os = open_out(path);
  write_header(os, mask.extents, 1);
  os.write(reinterpret_cast<const char*>(mask.values.data()),
           static_cast<std::streamsize>(mask.values.size()));
  if (!os) throw IoError("write failed: " + path);
}

PvolContent read_pvol(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kMagic, 5) != 0)
    throw IoError("not a PVOL1 file: " + path);
  uint8_t dims = 0;
  is.read(reinterpret_cast<char*>(&dims), 1);
  if (dims < 1 || dims > 4) throw IoError("bad dimensionality in " + path);
  PvolContent out;
  for (int d = 0; d < dims; ++d) out.extents.push_back(get_u32(is));
  uint8_t kind = 0;
  is.read(reinterpret_cast<char*>(&kind), 1);
  int64_t n = numel(out.extents);
  if (kind == 0) {
    std::vector<float> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw IoError("truncated payload in " + path);
    out.image.assign(buf.begin(), buf.end());
  } else if (kind == 1) {
    out.is_mask = true;
    out.mask.extents = out.extents;
    out.mask.values.resize(n);
    is.read(reinterpret_cast<char*>(out.mask.values.data()), static_cast<std::streamsize>(n));
    if (!is) throw IoError("truncated payload in " + path);
  } else {
    throw IoError("unknown payload kind in " + path);
  }
  return out;
}

namespace {

json spec_to_json(const SyntheticSpec& s) {
  return json{{"extents", s.extents},
              {"n_images", s.n_images},
              {"n_raters", s.n_raters},
              {"structure", s.structure == SyntheticSpec::Structure::kTubes ? "tubes" : "blobs"},
              {"dilation_mean", s.dilation_mean},
              {"dilation_sd", s.dilation_sd},
              {"dilation_low", s.dilation_low},
              {"dilation_high", s.dilation_high},
              {"flip_prob", s.flip_prob},
              {"noise_sd", s.noise_sd},
              {"seed", s.seed}};
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.extents = j.at("extents").get<Shape>();
  s.n_images = j.at("n_images").get<int>();
  s.n_raters = j.at("n_raters").get<int>();
  s.structure = j.at("structure").get<std::string>() == "blobs"
                    ? SyntheticSpec::Structure::kBlobs
                    : SyntheticSpec::Structure::kTubes;
  s.dilation_mean = j.at("dilation_mean").get<double>();
  s.dilation_sd = j.at("dilation_sd").get<double>();
  s.dilation_low = j.at("dilation_low").get<double>();
  s.dilation_high = j.at("dilation_high").get<double>();
  s.flip_prob = j.at("flip_prob").get<double>();
  s.noise_sd = j.at("noise_sd").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  return s;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(fs::path(dir) / "volumes");
  json manifest;
  manifest["format"] = "pulaski-dataset-v1";
  manifest["spec"] = spec_to_json(ds.spec);
  json vols = json::array();

  auto split_of = [&](size_t i) -> std::string {
    for (size_t t : ds.train_idx) if (t == i) return "train";
    for (size_t t : ds.val_idx) if (t == i) return "val";
    return "test";
  };

  for (size_t i = 0; i < ds.volumes.size(); ++i) {
    const AnnotatedVolume& v = ds.volumes[i];
    std::string img_rel = "volumes/" + v.id + "_image.pvol";
    write_image_pvol((fs::path(dir) / img_rel).string(), v.extents, v.image);
    json ann = json::array();
    for (size_t r = 0; r < v.annotations.size(); ++r) {
      std::string rel = "volumes/" + v.id + "_rater" + std::to_string(r) + ".pvol";
      write_mask_pvol((fs::path(dir) / rel).string(), v.annotations[r]);
      ann.push_back(rel);
    }
    vols.push_back(json{{"id", v.id}, {"image", img_rel}, {"annotations", ann},
                        {"split", split_of(i)}});
  }
  manifest["volumes"] = vols;

  std::string tmp = (fs::path(dir) / "manifest.json.tmp").string();
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
  }
  fs::rename(tmp, fs::path(dir) / "manifest.json");
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw IoError("no dataset manifest in " + dir);
  json manifest = json::parse(is);
  Dataset ds;
  ds.spec = spec_from_json(manifest.at("spec"));
  for (const json& jv : manifest.at("volumes")) {
    AnnotatedVolume v;
    v.id = jv.at("id").get<std::string>();
    PvolContent img = read_pvol((fs::path(dir) / jv.at("image").get<std::string>()).string());
    if (img.is_mask) throw IoError("image payload is a mask: " + v.id);
    v.extents = img.extents;
    v.image = std::move(img.image);
    for (const json& ja : jv.at("annotations")) {
      PvolContent m = read_pvol((fs::path(dir) / ja.get<std::string>()).string());
      if (!m.is_mask) throw IoError("annotation payload is not a mask: " + v.id);
      v.annotations.push_back(std::move(m.mask));
    }
    std::string split = jv.at("split").get<std::string>();
    size_t idx = ds.volumes.size();
    if (split == "train") ds.train_idx.push_back(idx);
    else if (split == "val") ds.val_idx.push_back(idx);
    else ds.test_idx.push_back(idx);
    ds.volumes.push_back(std::move(v));
  }
  return ds;
}

void write_pgm(const std::string& path, const Shape& extents, const std::vector<double>& values) {
  if (extents.size() != 2)
    throw InvalidArgument("write_pgm: expected 2-D extents, got " + shape_str(extents));
  if (numel(extents) != static_cast<int64_t>(values.size()))
    throw ShapeError("write_pgm: size mismatch");
  std::ofstream os = open_out(path);
  os << "P5\n" << extents[1] << " " << extents[0] << "\n255\n";
  std::vector<unsigned char> row(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    double v = std::clamp(values[i], 0.0, 1.0);
    row[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace pulaski
