#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "peot/boosted_baseline.hpp"
#include "peot/dataset.hpp"
#include "peot/soft_tree.hpp"

namespace peot {

// Uniform grid of 2^bits levels spanning [lo, hi] inclusive.
struct QuantFormat {
  int bits = 8;
  double lo = 0.0;
  double hi = 1.0;

  std::uint64_t levels() const { return std::uint64_t{1} << bits; }
  double step() const { return (hi - lo) / static_cast<double>(levels() - 1); }
  void validate() const;
};

// Clamp to [lo, hi], then round half up to the nearest grid level.
std::uint64_t quantize_index(double value, const QuantFormat& fmt);
double dequantize_index(std::uint64_t index, const QuantFormat& fmt);
double quantize_value(double value, const QuantFormat& fmt);
std::vector<double> quantize_values(std::span<const double> values, const QuantFormat& fmt);
bool on_grid(double value, const QuantFormat& fmt);

// kept[e] == 0 marks a pruned first-layer entry.
struct PruneMask {
  std::vector<std::uint8_t> kept;

  std::size_t num_pruned() const;
};

struct PruneResult {
  ObliqueTree tree;
  PruneMask mask;
};

// Global magnitude pruning of exactly floor(sparsity * N) first-layer
// entries; equal magnitudes are pruned in (node, row, column) order.
PruneResult prune(const ObliqueTree& tree, double target_sparsity);

struct Codebook {
  std::vector<double> centroids;
  std::vector<std::int32_t> assignment;  // per first-layer entry, -1 if pruned

  int index_bits() const;
};

struct KMeansResult {
  std::vector<double> centroids;
  std::vector<std::int32_t> assignment;
  int iterations = 0;
};

inline constexpr int kKMeansMaxIterations = 300;
inline constexpr double kKMeansTolerance = 1e-9;

// 1-D Lloyd iterations from centroids spaced linearly over [min, max]. When k
// is at least the number of distinct values the distinct values themselves
// are the centroids.
KMeansResult kmeans_1d(std::span<const double> values, std::size_t k);
std::vector<double> linear_init_centroids(std::span<const double> values, std::size_t k);
double within_cluster_ss(std::span<const double> values, std::span<const double> centroids);

struct ShareResult {
  ObliqueTree tree;
  Codebook codebook;
  int iterations = 0;
};

// Clusters the surviving first-layer weights into at most 2^bits shared values.
ShareResult share(const ObliqueTree& tree, int bits);

// Gradient training from the current parameters under the tree's pruning
// mask and codebook.
ObliqueTree fine_tune(const ObliqueTree& tree, const Dataset& data, const TrainConfig& config,
                      TrainReport* report = nullptr);

enum class SizeAccounting { DenseFloat32, PrunedShared, QuantizedGbt };

const char* size_accounting_name(SizeAccounting a);
SizeAccounting parse_size_accounting(const std::string& name);

struct SizeBreakdown {
  SizeAccounting accounting = SizeAccounting::DenseFloat32;
  std::vector<std::pair<std::string, std::uint64_t>> parts;
  std::uint64_t total_bits = 0;

  nlohmann::json to_json() const;
};

std::uint64_t ceil_log2(std::uint64_t n);

SizeBreakdown model_size_bits(const ObliqueTree& tree, SizeAccounting accounting);
SizeBreakdown model_size_bits(const GbtModel& model, SizeAccounting accounting);

// Sparsity reached after round r of R: linear s*r/R, or cubic
// s*(1 - (1 - r/R)^3), which takes smaller steps near the target.
enum class PruneSchedule { Linear, Cubic };

struct CompressConfig {
  double sparsity = 0.9;
  // 0 skips weight sharing.
  int share_bits = 4;
  // Number of pruning rounds; sparsity ramps linearly to the target.
  int prune_rounds = 1;
  PruneSchedule prune_schedule = PruneSchedule::Linear;
  bool fine_tune_enabled = true;
  int prune_epochs = 5;
  int share_epochs = 5;
  TrainConfig train;

  void validate() const;
};

void to_json(nlohmann::json& j, const CompressConfig& c);
void from_json(const nlohmann::json& j, CompressConfig& c);

struct CompressionReport {
  double sparsity = 0.0;
  int share_bits = 0;
  std::size_t codebook_size = 0;
  SizeBreakdown size_before;
  SizeBreakdown size_after;
  double ratio = 0.0;
  double acc_before = 0.0;
  double acc_after = 0.0;
  double touched_internal_only = 0.0;
  double touched_with_leaves = 0.0;

  nlohmann::json to_json() const;
};

struct CompressResult {
  ObliqueTree tree;
  CompressionReport report;
};

// prune -> fine_tune -> share -> fine_tune. Accuracies are measured with
// single-path inference on `eval` (or `train` when eval is null).
CompressResult compress_pipeline(const ObliqueTree& tree, const Dataset& train,
                                 const Dataset* eval, const CompressConfig& config);

}  // namespace peot
