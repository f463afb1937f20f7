#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peot/dataset.hpp"
#include "peot/signal_features.hpp"

namespace peot {

// IDX images (magic 0x00000803) and labels (0x00000801), big-endian dims.
// Gzip-compressed files are read transparently.
struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::string& path);
std::vector<std::uint8_t> read_idx_labels(const std::string& path);

// Pixels scaled to [0, 1]; one unit-cost feature per pixel.
Dataset dataset_from_idx(const std::string& images_path, const std::string& labels_path);

// Header `time,ch0,ch1,...`. When fs <= 0 it is derived from the first two
// time stamps.
Recording read_recording_csv(const std::string& path, double fs = 0.0);
void write_recording_csv(const Recording& rec, const std::string& path);

// `window_index,label`; indices must cover 0..n-1 exactly once.
std::vector<int> read_window_labels_csv(const std::string& path);
void write_window_labels_csv(const std::vector<int>& labels, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace peot
