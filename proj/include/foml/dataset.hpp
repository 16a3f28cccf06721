#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace foml {

// Labeled images stored row-major per item, channel-major within an item.
struct Dataset {
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t item_size() const { return channels * height * width; }
  std::size_t num_classes() const;
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(pixels).subspan(i * item_size(), item_size());
  }
  void push(std::span<const double> image, int label);
};

// Procedural 8x8 glyphs: each class is a fixed pattern of 2x2 blocks; items are
// jittered, re-weighted and noised copies of it. Class patterns do not depend
// on `seed`, only the item jitter does.
Dataset make_glyph_dataset(std::size_t items_per_class, std::uint64_t seed, std::size_t num_classes = 10);

// FOMLDS v1: a header line "FOMLDS v1 <num_items> <height> <width> <channels>"
// followed by either CSV rows "label,p0,p1,..." (files ending in .csv) or
// binary records of an int32 little-endian label and float64 little-endian
// pixels.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// MNIST-style IDX files (big-endian idx3 images, idx1 labels), pixels scaled to
// [0,1]. A non-zero target side resamples every image by area averaging.
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t target_side = 0);
Dataset resize_area(const Dataset& data, std::size_t height, std::size_t width);

}  // namespace foml
