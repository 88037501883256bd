#include "pulaski/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pulaski {

void AnnotatedVolume::validate() const {
  if (numel(extents) != static_cast<int64_t>(image.size()))
    throw ShapeError("volume " + id + ": image size does not match extents");
  if (annotations.size() < 2)
    throw InvalidArgument("volume " + id + ": needs at least 2 annotations");
  for (const BinaryMask& m : annotations)
    if (m.extents != extents) throw ShapeError("volume " + id + ": annotation shape mismatch");
}

void SyntheticSpec::validate() const {
  if (extents.size() != 2 && extents.size() != 3)
    throw InvalidArgument("synthetic spec: extents must be 2-D or 3-D");
  for (int64_t e : extents)
    if (e < 8) throw InvalidArgument("synthetic spec: extents too small for structures (min 8)");
  if (n_images < 1) throw InvalidArgument("synthetic spec: n_images must be positive");
  if (n_raters < 2) throw InvalidArgument("synthetic spec: needs at least 2 raters");
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw InvalidArgument("synthetic spec: flip_prob must lie in [0,1]");
  if (noise_sd < 0.0 || dilation_sd < 0.0)
    throw InvalidArgument("synthetic spec: standard deviations must be nonnegative");
  if (!(dilation_low < dilation_high))
    throw InvalidArgument("synthetic spec: dilation bounds empty");
}

void PatchSpec::validate(const Shape& volume_extents) const {
  if (patch_extents.size() != volume_extents.size())
    throw InvalidArgument("patch spec: dimensionality mismatch");
  if (strides.size() != patch_extents.size())
    throw InvalidArgument("patch spec: stride count mismatch");
  for (size_t i = 0; i < patch_extents.size(); ++i) {
    if (patch_extents[i] > volume_extents[i])
      throw InvalidArgument("patch spec: patch larger than volume along axis " +
                            std::to_string(i));
    if (strides[i] < 1 || strides[i] > patch_extents[i])
      throw InvalidArgument("patch spec: stride must lie in [1, patch extent]");
  }
}

double truncated_normal(double mean, double sd, double low, double high, Rng& rng) {
  if (!(low < high)) throw InvalidArgument("truncated_normal: low must be < high");
  if (!(sd > 0.0)) {
    if (sd == 0.0) {
      if (mean < low || mean > high)
        throw InvalidArgument("truncated_normal: zero sd with mean outside bounds");
      return mean;
    }
    throw InvalidArgument("truncated_normal: sd must be nonnegative");
  }
  // Mass of the acceptance region via the normal CDF.
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0))); };
  double mass = cdf(high) - cdf(low);
  if (mass < 1e-12)
    throw InvalidArgument("truncated_normal: acceptance region mass below 1e-12");
  for (;;) {
    double x = rng.normal(mean, sd);
    if (x >= low && x <= high) return x;
  }
}

// ---- distance transform -----------------------------------------------------

namespace {

// Felzenszwalb-Huttenlocher 1-D squared distance transform (lower envelope).
void edt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      int p = v[k];
      s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    int p = v[k];
    d[q] = (q - p) * (q - p) + f[p];
  }
}

}  // namespace

std::vector<double> edt_squared(const std::vector<uint8_t>& seeds, const Shape& extents) {
  int64_t total = numel(extents);
  if (static_cast<int64_t>(seeds.size()) != total)
    throw ShapeError("edt: seed count does not match extents");
  constexpr double kFar = 1e18;
  std::vector<double> dist(total);
  for (int64_t i = 0; i < total; ++i) dist[i] = seeds[i] ? 0.0 : kFar;

  // Transform one axis at a time; row-major strides.
  size_t dims = extents.size();
  std::vector<int64_t> stride(dims, 1);
  for (size_t i = dims - 1; i > 0; --i) stride[i - 1] = stride[i] * extents[i];

  int64_t max_extent = *std::max_element(extents.begin(), extents.end());
  std::vector<double> f(max_extent), d(max_extent), z(max_extent + 1);
  std::vector<int> v(max_extent);

  for (size_t axis = 0; axis < dims; ++axis) {
    int n = static_cast<int>(extents[axis]);
    int64_t st = stride[axis];
    int64_t lines = total / n;
    for (int64_t line = 0; line < lines; ++line) {
      // Base offset of this line: distribute `line` over the other axes.
      int64_t base = 0, rem = line;
      for (size_t ax = 0; ax < dims; ++ax) {
        if (ax == axis) continue;
        int64_t e = extents[ax];
        base += (rem % e) * stride[ax];
        rem /= e;
      }
      for (int i = 0; i < n; ++i) f[i] = dist[base + i * st];
      edt_1d(f, d, v, z, n);
      for (int i = 0; i < n; ++i) dist[base + i * st] = d[i];
    }
  }
  return dist;
}

// ---- structure rasterization -------------------------------------------------

namespace {

// Quadratic Bezier through three control points, sampled densely onto the grid.
void rasterize_curve_seeds(std::vector<uint8_t>& seeds, const Shape& extents,
                           const std::vector<double>& p0, const std::vector<double>& p1,
                           const std::vector<double>& p2) {
  size_t dims = extents.size();
  std::vector<int64_t> stride(dims, 1);
  for (size_t i = dims - 1; i > 0; --i) stride[i - 1] = stride[i] * extents[i];
  int steps = 8 * static_cast<int>(*std::max_element(extents.begin(), extents.end()));
  for (int s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) / steps;
    double u = 1.0 - t;
    int64_t idx = 0;
    bool inside = true;
    for (size_t k = 0; k < dims; ++k) {
      double c = u * u * p0[k] + 2.0 * u * t * p1[k] + t * t * p2[k];
      int64_t q = static_cast<int64_t>(std::llround(c));
      if (q < 0 || q >= extents[k]) {
        inside = false;
        break;
      }
      idx += q * stride[k];
    }
    if (inside) seeds[idx] = 1;
  }
}

std::vector<uint8_t> clean_structure_mask(const SyntheticSpec& spec, Rng& rng) {
  int64_t total = numel(spec.extents);
  std::vector<uint8_t> seeds(total, 0);
  size_t dims = spec.extents.size();
  bool tubes = spec.structure == SyntheticSpec::Structure::kTubes;

  auto random_point = [&](double margin) {
    std::vector<double> p(dims);
    for (size_t k = 0; k < dims; ++k)
      p[k] = rng.uniform(margin, static_cast<double>(spec.extents[k] - 1) - margin);
    return p;
  };

  double radius;
  if (tubes) {
    // Curved tubes spanning the volume; thin, vessel-like.
    int n_tubes = dims == 3 ? 2 : 1;
    radius = dims == 3 ? rng.uniform(1.6, 2.2) : rng.uniform(1.0, 1.6);
    for (int t = 0; t < n_tubes; ++t)
      rasterize_curve_seeds(seeds, spec.extents, random_point(2.0), random_point(4.0),
                            random_point(2.0));
  } else {
    // Small lesion-like blobs: single-seed spheres.
    int n_blobs = 2 + static_cast<int>(rng.uniform_index(3));
    radius = dims == 3 ? rng.uniform(2.0, 3.0) : rng.uniform(1.4, 2.2);
    std::vector<int64_t> stride(dims, 1);
    for (size_t i = dims - 1; i > 0; --i) stride[i - 1] = stride[i] * spec.extents[i];
    for (int b = 0; b < n_blobs; ++b) {
      std::vector<double> c = random_point(3.0);
      int64_t idx = 0;
      for (size_t k = 0; k < dims; ++k)
        idx += static_cast<int64_t>(std::llround(c[k])) * stride[k];
      seeds[idx] = 1;
    }
  }

  std::vector<double> d2 = edt_squared(seeds, spec.extents);
  std::vector<uint8_t> mask(total, 0);
  double r2 = radius * radius;
  for (int64_t i = 0; i < total; ++i) mask[i] = d2[i] <= r2 ? 1 : 0;
  return mask;
}

// Separable [1 2 1]/4 smoothing along every axis, clamped at borders.
std::vector<double> smooth(const std::vector<double>& in, const Shape& extents) {
  size_t dims = extents.size();
  std::vector<int64_t> stride(dims, 1);
  for (size_t i = dims - 1; i > 0; --i) stride[i - 1] = stride[i] * extents[i];
  std::vector<double> cur = in, next(in.size());
  int64_t total = static_cast<int64_t>(in.size());
  for (size_t axis = 0; axis < dims; ++axis) {
    int64_t n = extents[axis], st = stride[axis];
    int64_t lines = total / n;
    for (int64_t line = 0; line < lines; ++line) {
      int64_t base = 0, rem = line;
      for (size_t ax = 0; ax < dims; ++ax) {
        if (ax == axis) continue;
        base += (rem % extents[ax]) * stride[ax];
        rem /= extents[ax];
      }
      for (int64_t i = 0; i < n; ++i) {
        double lo = cur[base + std::max<int64_t>(0, i - 1) * st];
        double mid = cur[base + i * st];
        double hi = cur[base + std::min(n - 1, i + 1) * st];
        next[base + i * st] = 0.25 * lo + 0.5 * mid + 0.25 * hi;
      }
    }
    cur.swap(next);
  }
  return cur;
}

}  // namespace

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  int64_t total = numel(spec.extents);

  for (int v = 0; v < spec.n_images; ++v) {
    Rng rng(Rng::derive_seed(spec.seed, static_cast<uint64_t>(v)));
    AnnotatedVolume vol;
    vol.id = "vol" + std::string(v < 10 ? "0" : "") + std::to_string(v);
    vol.extents = spec.extents;

    std::vector<uint8_t> clean = clean_structure_mask(spec, rng);

    // Image: smoothed structure plus Gaussian noise.
    std::vector<double> img(clean.begin(), clean.end());
    img = smooth(img, spec.extents);
    for (double& p : img) p += spec.noise_sd * rng.normal();
    vol.image = std::move(img);

    // Signed-distance machinery for rater jitter.
    std::vector<uint8_t> inv(clean.size());
    for (size_t i = 0; i < clean.size(); ++i) inv[i] = clean[i] ? 0 : 1;
    std::vector<double> d_fg = edt_squared(clean, spec.extents);   // 0 inside structure
    std::vector<double> d_bg = edt_squared(inv, spec.extents);     // 0 outside
    double flip_band2 = 1.5 * 1.5;

    for (int r = 0; r < spec.n_raters; ++r) {
      double delta = spec.dilation_sd == 0.0
                         ? spec.dilation_mean
                         : truncated_normal(spec.dilation_mean, spec.dilation_sd,
                                            spec.dilation_low, spec.dilation_high, rng);
      BinaryMask m;
      m.extents = spec.extents;
      m.values.resize(total);
      if (delta >= 0.0) {
        double t2 = delta * delta;
        for (int64_t i = 0; i < total; ++i) m.values[i] = d_fg[i] <= t2 ? 1 : 0;
      } else {
        double t2 = delta * delta;
        for (int64_t i = 0; i < total; ++i) m.values[i] = (clean[i] && d_bg[i] > t2) ? 1 : 0;
      }
      if (spec.flip_prob > 0.0)
        for (int64_t i = 0; i < total; ++i)
          if (std::min(d_fg[i], d_bg[i]) <= flip_band2 && rng.bernoulli(spec.flip_prob))
            m.values[i] ^= 1;
      vol.annotations.push_back(std::move(m));
    }
    ds.volumes.push_back(std::move(vol));
  }

  // 9:2:4 split, shuffled deterministically.
  std::vector<size_t> order(spec.n_images);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(Rng::derive_seed(spec.seed, 0xABCDEF));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[split_rng.uniform_index(i)]);
  int n = spec.n_images;
  int n_train = static_cast<int>(std::lround(n * 9.0 / 15.0));
  int n_val = std::max(1, static_cast<int>(std::lround(n * 2.0 / 15.0)));
  n_train = std::max(1, std::min(n_train, n - 2));
  int n_test = n - n_train - n_val;
  if (n_test < 1) {
    n_test = 1;
    n_val = n - n_train - n_test;
  }
  for (int i = 0; i < n; ++i) {
    if (i < n_train) ds.train_idx.push_back(order[i]);
    else if (i < n_train + n_val) ds.val_idx.push_back(order[i]);
    else ds.test_idx.push_back(order[i]);
  }
  return ds;
}

std::vector<AnnotatedVolume> extract_slices(const AnnotatedVolume& vol, int axis) {
  size_t dims = vol.extents.size();
  if (axis < 0 || axis >= static_cast<int>(dims))
    throw InvalidArgument("extract_slices: axis " + std::to_string(axis) +
                          " out of range for " + shape_str(vol.extents));
  if (dims != 3) throw InvalidArgument("extract_slices: volume must be 3-D");

  std::vector<int64_t> stride(dims, 1);
  for (size_t i = dims - 1; i > 0; --i) stride[i - 1] = stride[i] * vol.extents[i];

  Shape slice_extents;
  for (size_t k = 0; k < dims; ++k)
    if (static_cast<int>(k) != axis) slice_extents.push_back(vol.extents[k]);
  int64_t slice_n = numel(slice_extents);

  auto take_slice = [&](const auto& src, auto& dst, int64_t index) {
    int64_t pos = 0;
    for (int64_t j = 0; j < slice_n; ++j) {
      // Unravel j over the kept axes, insert `index` on `axis`.
      int64_t rem = j, off = index * stride[axis];
      for (size_t k = dims; k-- > 0;) {
        if (static_cast<int>(k) == axis) continue;
        int64_t e = vol.extents[k];
        off += (rem % e) * stride[k];
        rem /= e;
      }
      dst[pos++] = src[off];
    }
  };

  std::vector<AnnotatedVolume> out;
  for (int64_t s = 0; s < vol.extents[axis]; ++s) {
    AnnotatedVolume sl;
    sl.id = vol.id + "_s" + std::to_string(s);
    sl.extents = slice_extents;
    sl.image.resize(slice_n);
    take_slice(vol.image, sl.image, s);
    for (const BinaryMask& m : vol.annotations) {
      BinaryMask ms;
      ms.extents = slice_extents;
      ms.values.resize(slice_n);
      take_slice(m.values, ms.values, s);
      sl.annotations.push_back(std::move(ms));
    }
    out.push_back(std::move(sl));
  }
  return out;
}

std::vector<Shape> patch_positions(const Shape& volume_extents, const PatchSpec& ps) {
  ps.validate(volume_extents);
  size_t dims = volume_extents.size();
  std::vector<std::vector<int64_t>> axis_pos(dims);
  for (size_t k = 0; k < dims; ++k) {
    int64_t last = volume_extents[k] - ps.patch_extents[k];
    for (int64_t p = 0; p < last; p += ps.strides[k]) axis_pos[k].push_back(p);
    axis_pos[k].push_back(last);  // clamped final position touches the boundary
  }
  std::vector<Shape> out;
  Shape pos(dims, 0);
  std::vector<size_t> idx(dims, 0);
  for (;;) {
    for (size_t k = 0; k < dims; ++k) pos[k] = axis_pos[k][idx[k]];
    out.push_back(pos);
    size_t k = dims;
    while (k-- > 0) {
      if (++idx[k] < axis_pos[k].size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

namespace {

void copy_box(const std::vector<double>& src, const Shape& src_extents, const Shape& position,
              std::vector<double>& dst, const Shape& box) {
  size_t dims = src_extents.size();
  std::vector<int64_t> sstride(dims, 1), dstride(dims, 1);
  for (size_t i = dims - 1; i > 0; --i) {
    sstride[i - 1] = sstride[i] * src_extents[i];
    dstride[i - 1] = dstride[i] * box[i];
  }
  int64_t n = numel(box);
  for (int64_t j = 0; j < n; ++j) {
    int64_t rem = j, soff = 0;
    for (size_t k = dims; k-- > 0;) {
      int64_t c = rem % box[k];
      rem /= box[k];
      soff += (position[k] + c) * sstride[k];
    }
    dst[j] = src[soff];
  }
}

}  // namespace

AnnotatedVolume extract_patch(const AnnotatedVolume& vol, const Shape& position,
                              const Shape& patch_extents) {
  AnnotatedVolume p;
  p.id = vol.id + "_p";
  for (size_t k = 0; k < position.size(); ++k)
    p.id += (k ? "x" : "") + std::to_string(position[k]);
  p.extents = patch_extents;
  p.image.resize(numel(patch_extents));
  copy_box(vol.image, vol.extents, position, p.image, patch_extents);
  for (const BinaryMask& m : vol.annotations) {
    std::vector<double> tmp(m.values.begin(), m.values.end());
    std::vector<double> boxed(numel(patch_extents));
    copy_box(tmp, vol.extents, position, boxed, patch_extents);
    BinaryMask bm;
    bm.extents = patch_extents;
    bm.values.resize(boxed.size());
    for (size_t i = 0; i < boxed.size(); ++i) bm.values[i] = boxed[i] != 0.0 ? 1 : 0;
    p.annotations.push_back(std::move(bm));
  }
  return p;
}

std::vector<std::pair<AnnotatedVolume, Shape>> extract_patches(const AnnotatedVolume& vol,
                                                               const PatchSpec& ps) {
  std::vector<std::pair<AnnotatedVolume, Shape>> out;
  for (const Shape& pos : patch_positions(vol.extents, ps))
    out.emplace_back(extract_patch(vol, pos, ps.patch_extents), pos);
  return out;
}

std::vector<double> stitch_overlap_average(
    const std::vector<std::pair<std::vector<double>, Shape>>& patches,
    const Shape& patch_extents, const Shape& out_extents) {
  int64_t total = numel(out_extents);
  // Extended-precision accumulation keeps the average of k identical
  // contributions bit-exact, so extract -> stitch is the identity.
  std::vector<long double> acc(total, 0.0L);
  std::vector<double> cover(total, 0.0);
  size_t dims = out_extents.size();
  std::vector<int64_t> ostride(dims, 1);
  for (size_t i = dims - 1; i > 0; --i) ostride[i - 1] = ostride[i] * out_extents[i];
  int64_t pn = numel(patch_extents);

  for (const auto& [vals, pos] : patches) {
    if (static_cast<int64_t>(vals.size()) != pn)
      throw ShapeError("stitch: patch payload does not match patch extents");
    for (int64_t j = 0; j < pn; ++j) {
      int64_t rem = j, off = 0;
      for (size_t k = dims; k-- > 0;) {
        int64_t c = rem % patch_extents[k];
        rem /= patch_extents[k];
        int64_t o = pos[k] + c;
        if (o < 0 || o >= out_extents[k])
          throw InvalidArgument("stitch: patch exceeds output bounds");
        off += o * ostride[k];
      }
      acc[off] += vals[j];
      cover[off] += 1.0;
    }
  }
  std::vector<double> out(total);
  for (int64_t i = 0; i < total; ++i) {
    if (cover[i] == 0.0)
      throw InvalidArgument("stitch: voxel " + std::to_string(i) + " not covered by any patch");
    out[i] = static_cast<double>(acc[i] / static_cast<long double>(cover[i]));
  }
  return out;
}

}  // namespace pulaski
