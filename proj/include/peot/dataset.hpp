#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace peot {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Labeled feature matrix. Rows are windows (or images), columns follow the
// global feature index space shared by every model trained on the set.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;
  // Rows are consecutive windows of a recording; folds must be contiguous.
  bool temporal = false;
  std::vector<std::string> feature_names;
  // Extraction cost of each feature column (relative units).
  std::vector<double> costs;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  std::size_t num_features() const { return static_cast<std::size_t>(features.cols()); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * features.cols(), static_cast<std::size_t>(features.cols())};
  }

  // Content hash over dimensions, features, labels and costs (FNV-1a 64).
  std::uint64_t fingerprint() const;

  Dataset subset(std::span<const std::size_t> indices) const;

  // Throws InvalidInput when shapes disagree or labels fall outside [0, C).
  void validate() const;
};

std::string fingerprint_hex(std::uint64_t fp);

// Versioned binary container: 8-byte magic, u32 header length, JSON header,
// then row-major little-endian float64 features and int32 labels.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// FNV-1a 64-bit over a byte range, chainable through `seed`.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace peot
