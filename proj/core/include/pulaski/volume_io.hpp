#pragma once

#include <string>

#include "pulaski/datagen.hpp"

namespace pulaski {

// Volume container format "PVOL1": magic, u8 dimensionality, little-endian
// u32 extents, u8 payload kind (0 = f32 image, 1 = u8 mask), raw payload.
void write_image_pvol(const std::string& path, const Shape& extents,
                      const std::vector<double>& image);
void write_mask_pvol(const std::string& path, const BinaryMask& mask);

struct PvolContent {
  Shape extents;
  bool is_mask = false;
  std::vector<double> image;  // set when !is_mask
  BinaryMask mask;            // set when is_mask
};

PvolContent read_pvol(const std::string& path);

// Writes volumes plus a JSON manifest listing files, split assignment and the
// generating spec. Layout: <dir>/manifest.json, <dir>/volumes/*.pvol
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// 8-bit grayscale binary PGM (P5); values expected in [0,1]; 2-D extents.
void write_pgm(const std::string& path, const Shape& extents, const std::vector<double>& values);

}  // namespace pulaski
