#pragma once

#include <string>
#include <vector>

#include "pulaski/rng.hpp"
#include "pulaski/seg.hpp"

namespace pulaski {

// One image with its set of plausible expert segmentations.
struct AnnotatedVolume {
  std::string id;
  Shape extents;              // 2-D or 3-D spatial
  std::vector<double> image;  // intensities, arbitrary units
  std::vector<BinaryMask> annotations;

  int n_raters() const { return static_cast<int>(annotations.size()); }
  void validate() const;
};

struct SyntheticSpec {
  Shape extents = {32, 32, 32};
  int n_images = 15;
  int n_raters = 5;
  enum class Structure { kTubes, kBlobs };
  Structure structure = Structure::kTubes;

  // Per-rater boundary offset (voxels), truncated normal. Positive dilates,
  // negative erodes; the asymmetric bounds keep thin tubes alive under
  // erosion. Defaults are frozen so the corpus disagreement lands near the
  // Kalpha profile of multi-annotator vessel data (~0.45 all, ~0.21 ROI).
  double dilation_mean = 0.0;
  double dilation_sd = 0.8;
  double dilation_low = -1.2;
  double dilation_high = 1.8;
  // Independent flips of voxels near the structure boundary.
  double flip_prob = 0.02;
  double noise_sd = 0.12;
  uint64_t seed = 7;

  void validate() const;
};

struct PatchSpec {
  Shape patch_extents = {16, 16, 16};
  Shape strides = {8, 8, 8};

  void validate(const Shape& volume_extents) const;
};

struct Dataset {
  std::vector<AnnotatedVolume> volumes;
  std::vector<size_t> train_idx, val_idx, test_idx;
  SyntheticSpec spec;
};

// Rejection sampling from N(mean, sd^2) restricted to [low, high].
double truncated_normal(double mean, double sd, double low, double high, Rng& rng);

// Synthetic multi-annotator corpus: random tube or blob structures, image =
// smoothed mask + noise, rater masks = clean mask dilated/eroded by a
// truncated-normal radius plus boundary flips. Split 9:2:4.
Dataset generate_dataset(const SyntheticSpec& spec);

// Squared Euclidean distance transform (distance to the nearest seed voxel).
std::vector<double> edt_squared(const std::vector<uint8_t>& seeds, const Shape& extents);

// One 2-D sample per index along `axis`, annotations sliced consistently.
std::vector<AnnotatedVolume> extract_slices(const AnnotatedVolume& vol, int axis);

// Grid positions at the given strides; the last position per axis is clamped
// so the final patch touches the boundary.
std::vector<Shape> patch_positions(const Shape& volume_extents, const PatchSpec& ps);

AnnotatedVolume extract_patch(const AnnotatedVolume& vol, const Shape& position,
                              const Shape& patch_extents);

std::vector<std::pair<AnnotatedVolume, Shape>> extract_patches(const AnnotatedVolume& vol,
                                                               const PatchSpec& ps);

// Per-voxel mean of overlapping patch contributions. Every voxel must be
// covered by at least one patch.
std::vector<double> stitch_overlap_average(
    const std::vector<std::pair<std::vector<double>, Shape>>& patches,
    const Shape& patch_extents, const Shape& out_extents);

}  // namespace pulaski
