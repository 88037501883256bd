#include <cmath>

#include "doctest.h"
#include "pulaski/datagen.hpp"
#include "pulaski/metrics.hpp"
#include "pulaski/volume_io.hpp"

#include <filesystem>
#include <fstream>

using namespace pulaski;

TEST_CASE("truncated normal: bounds, sd->0, moment match") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double v = truncated_normal(0.5, 1.0, 0.0, 1.0, rng);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(truncated_normal(0.4, 0.0, 0.0, 1.0, rng) == 0.4);
  CHECK_THROWS_AS(truncated_normal(0.0, 1.0, 1.0, 0.0, rng), InvalidArgument);
  CHECK_THROWS_AS(truncated_normal(0.0, 0.1, 50.0, 51.0, rng), InvalidArgument);

  // Closed-form truncated moments: mean = mu + sd*(phi(a)-phi(b))/Z.
  const double mu = 0.5, sd = 1.0, lo = 0.0, hi = 1.0;
  auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  double alpha = (lo - mu) / sd, beta = (hi - mu) / sd;
  double z = cdf(beta) - cdf(alpha);
  double expect = mu + sd * (phi(alpha) - phi(beta)) / z;
  Rng mc(17);
  double acc = 0.0;
  int n = 100000;
  for (int i = 0; i < n; ++i) acc += truncated_normal(mu, sd, lo, hi, mc);
  CHECK(std::abs(acc / n - expect) / std::abs(expect) < 0.02);
}

TEST_CASE("dataset generation: determinism and rater structure") {
  SyntheticSpec spec;
  spec.extents = {16, 16, 16};
  spec.n_images = 4;
  spec.n_raters = 3;
  spec.seed = 11;

  Dataset d1 = generate_dataset(spec);
  Dataset d2 = generate_dataset(spec);
  REQUIRE(d1.volumes.size() == 4);
  for (size_t v = 0; v < d1.volumes.size(); ++v) {
    CHECK(d1.volumes[v].image == d2.volumes[v].image);
    for (int r = 0; r < 3; ++r)
      CHECK(d1.volumes[v].annotations[r].values == d2.volumes[v].annotations[r].values);
  }
  CHECK(d1.train_idx == d2.train_idx);
  CHECK(d1.test_idx == d2.test_idx);
}

TEST_CASE("zero jitter and zero flips give identical raters with alpha 1") {
  SyntheticSpec spec;
  spec.extents = {16, 16};
  spec.n_images = 2;
  spec.n_raters = 4;
  spec.dilation_mean = 0.0;
  spec.dilation_sd = 0.0;
  spec.flip_prob = 0.0;
  spec.seed = 5;
  Dataset ds = generate_dataset(spec);
  for (const AnnotatedVolume& v : ds.volumes) {
    for (int r = 1; r < 4; ++r)
      CHECK(v.annotations[r].values == v.annotations[0].values);
    bool degenerate = false;
    double alpha = krippendorff_alpha(v.annotations, KalphaRegion::kAll, &degenerate);
    CHECK(alpha == doctest::Approx(1.0));
  }
}

TEST_CASE("default corpus lands in the target disagreement window") {
  SyntheticSpec spec;  // frozen defaults
  Dataset ds = generate_dataset(spec);
  double acc = 0.0;
  for (const AnnotatedVolume& v : ds.volumes)
    acc += krippendorff_alpha(v.annotations, KalphaRegion::kAll);
  double mean_alpha = acc / ds.volumes.size();
  CHECK(mean_alpha > 0.3);
  CHECK(mean_alpha < 0.7);
}

TEST_CASE("rater masks differ only near the structure boundary") {
  SyntheticSpec spec;
  spec.extents = {24, 24};
  spec.n_images = 3;
  spec.seed = 21;
  Dataset ds = generate_dataset(spec);
  // Clean mask is recoverable as the zero-offset rater path: regenerate with
  // zero jitter and compare band distances instead.
  SyntheticSpec clean_spec = spec;
  clean_spec.dilation_sd = 0.0;
  clean_spec.dilation_mean = 0.0;
  clean_spec.flip_prob = 0.0;
  Dataset clean = generate_dataset(clean_spec);

  double max_r = std::max(std::abs(spec.dilation_low), std::abs(spec.dilation_high));
  double band = max_r + 1.5;
  for (size_t v = 0; v < ds.volumes.size(); ++v) {
    const BinaryMask& base = clean.volumes[v].annotations[0];
    std::vector<uint8_t> inv(base.values.size());
    for (size_t i = 0; i < inv.size(); ++i) inv[i] = base.values[i] ? 0 : 1;
    std::vector<double> d_fg = edt_squared(base.values, base.extents);
    std::vector<double> d_bg = edt_squared(inv, base.extents);
    for (const BinaryMask& m : ds.volumes[v].annotations)
      for (size_t i = 0; i < m.values.size(); ++i)
        if (m.values[i] != base.values[i])
          CHECK(std::min(d_fg[i], d_bg[i]) <= band * band + 1e-9);
  }
}

TEST_CASE("extract_slices: shape, inverse, annotation count") {
  SyntheticSpec spec;
  spec.extents = {8, 8, 8};
  spec.n_images = 1;
  spec.seed = 9;
  Dataset ds = generate_dataset(spec);
  const AnnotatedVolume& vol = ds.volumes[0];

  std::vector<AnnotatedVolume> slices = extract_slices(vol, 2);
  REQUIRE(slices.size() == 8);
  for (const AnnotatedVolume& s : slices) {
    CHECK(s.extents == Shape{8, 8});
    CHECK(s.annotations.size() == vol.annotations.size());
  }
  // Re-stacking reproduces the volume exactly.
  for (int64_t i = 0; i < 8; ++i)
    for (int64_t j = 0; j < 8; ++j)
      for (int64_t k = 0; k < 8; ++k)
        CHECK(vol.image[(i * 8 + j) * 8 + k] == slices[k].image[i * 8 + j]);

  CHECK_THROWS_AS(extract_slices(vol, 3), InvalidArgument);
}

TEST_CASE("patch grid arithmetic") {
  PatchSpec ps;
  ps.patch_extents = {16, 16, 16};
  ps.strides = {16, 16, 16};
  CHECK(patch_positions({32, 32, 32}, ps).size() == 8);  // non-overlapping tiling

  ps.strides = {8, 8, 8};
  std::vector<Shape> pos = patch_positions({32, 32, 32}, ps);
  CHECK(pos.size() == 27);  // 3 positions per axis

  // Every voxel covered at least once.
  std::vector<int> cover(32 * 32 * 32, 0);
  for (const Shape& p : pos)
    for (int64_t z = p[0]; z < p[0] + 16; ++z)
      for (int64_t y = p[1]; y < p[1] + 16; ++y)
        for (int64_t x = p[2]; x < p[2] + 16; ++x) ++cover[(z * 32 + y) * 32 + x];
  for (int c : cover) CHECK(c >= 1);

  PatchSpec bad;
  bad.patch_extents = {64, 64, 64};
  bad.strides = {8, 8, 8};
  CHECK_THROWS_AS(patch_positions({32, 32, 32}, bad), InvalidArgument);
}

TEST_CASE("stitch_overlap_average: constants, identity, accumulation oracle") {
  Shape vol_ext{12, 12};
  PatchSpec ps;
  ps.patch_extents = {8, 8};
  ps.strides = {4, 4};

  // Constant patches stitch to the constant.
  std::vector<std::pair<std::vector<double>, Shape>> patches;
  for (const Shape& p : patch_positions(vol_ext, ps))
    patches.emplace_back(std::vector<double>(64, 3.25), p);
  std::vector<double> out = stitch_overlap_average(patches, ps.patch_extents, vol_ext);
  for (double v : out) CHECK(v == doctest::Approx(3.25));

  // Extract-then-stitch is the identity.
  Rng rng(31);
  AnnotatedVolume v;
  v.id = "t";
  v.extents = vol_ext;
  for (int i = 0; i < 144; ++i) v.image.push_back(rng.uniform());
  BinaryMask m;
  m.extents = vol_ext;
  m.values.assign(144, 0);
  v.annotations = {m, m};
  patches.clear();
  for (const auto& [patch, pos] : extract_patches(v, ps)) patches.emplace_back(patch.image, pos);
  std::vector<double> back = stitch_overlap_average(patches, ps.patch_extents, vol_ext);
  for (int i = 0; i < 144; ++i) CHECK(back[i] == doctest::Approx(v.image[i]).epsilon(1e-14));

  // Randomized payloads match a direct accumulation loop.
  patches.clear();
  std::vector<double> acc(144, 0.0), cnt(144, 0.0);
  for (const Shape& p : patch_positions(vol_ext, ps)) {
    std::vector<double> payload(64);
    for (double& x : payload) x = rng.uniform();
    for (int64_t a = 0; a < 8; ++a)
      for (int64_t b = 0; b < 8; ++b) {
        acc[(p[0] + a) * 12 + (p[1] + b)] += payload[a * 8 + b];
        cnt[(p[0] + a) * 12 + (p[1] + b)] += 1.0;
      }
    patches.emplace_back(payload, p);
  }
  std::vector<double> mine = stitch_overlap_average(patches, ps.patch_extents, vol_ext);
  for (int i = 0; i < 144; ++i) CHECK(mine[i] == doctest::Approx(acc[i] / cnt[i]).epsilon(1e-14));

  // Uncovered voxel reported.
  patches.resize(1);
  CHECK_THROWS_AS(stitch_overlap_average(patches, ps.patch_extents, vol_ext), InvalidArgument);
}

TEST_CASE("pvol round trip and dataset serialization determinism") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "pulaski_test_io";
  fs::remove_all(dir);
  fs::create_directories(dir);

  SyntheticSpec spec;
  spec.extents = {8, 8, 8};
  spec.n_images = 3;
  spec.seed = 77;
  Dataset ds = generate_dataset(spec);

  write_dataset((dir / "d1").string(), ds);
  write_dataset((dir / "d2").string(), ds);

  // Byte-identical serialization.
  for (const auto& entry : fs::recursive_directory_iterator(dir / "d1")) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), dir / "d1");
    std::ifstream f1(entry.path(), std::ios::binary), f2(dir / "d2" / rel, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
  }

  Dataset loaded = load_dataset((dir / "d1").string());
  REQUIRE(loaded.volumes.size() == ds.volumes.size());
  CHECK(loaded.train_idx.size() == ds.train_idx.size());
  for (size_t v = 0; v < ds.volumes.size(); ++v) {
    CHECK(loaded.volumes[v].extents == ds.volumes[v].extents);
    for (size_t r = 0; r < ds.volumes[v].annotations.size(); ++r)
      CHECK(loaded.volumes[v].annotations[r].values == ds.volumes[v].annotations[r].values);
    // Image survives the f32 round trip within float precision.
    for (size_t i = 0; i < ds.volumes[v].image.size(); ++i)
      CHECK(loaded.volumes[v].image[i] ==
            doctest::Approx(ds.volumes[v].image[i]).epsilon(1e-6));
  }
  fs::remove_all(dir);
}

TEST_CASE("split proportions follow 9:2:4") {
  SyntheticSpec spec;
  spec.extents = {8, 8};
  spec.n_images = 15;
  spec.seed = 3;
  Dataset ds = generate_dataset(spec);
  CHECK(ds.train_idx.size() == 9);
  CHECK(ds.val_idx.size() == 2);
  CHECK(ds.test_idx.size() == 4);
}
