#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "peot/boosted_baseline.hpp"
#include "peot/compression.hpp"
#include "peot/dataset.hpp"
#include "peot/soft_tree.hpp"

namespace peot {

// Binary tasks report the positive class (label 1); multiclass tasks report
// macro averages over classes.
struct Metrics {
  int num_classes = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;

  nlohmann::json to_json() const;
};

Metrics compute_metrics(std::span<const int> labels, std::span<const int> predictions,
                        int num_classes);

// Test-index sets of k folds. Temporal data gets contiguous blocks; other
// data gets stratified folds shuffled by (fingerprint, seed).
std::vector<std::vector<std::size_t>> make_folds(const Dataset& data, int k, std::uint64_t seed);

struct FoldSplit {
  Dataset train;
  Dataset test;
};

FoldSplit split_fold(const Dataset& data, const std::vector<std::vector<std::size_t>>& folds,
                     std::size_t fold);

// Trains on `train` and returns predicted labels for `test`.
using FoldTrainer =
    std::function<std::vector<int>(const Dataset& train, const Dataset& test, std::size_t fold)>;

struct CvResult {
  std::vector<Metrics> folds;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;

  nlohmann::json to_json() const;
};

CvResult cross_validate(const Dataset& data, int k, std::uint64_t seed, const FoldTrainer& trainer);

double mean_of(std::span<const double> v);
// Population standard deviation.
double std_of(std::span<const double> v);
// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

// Adam with a decaying rate. Plain momentum reacts too slowly to the
// soft-threshold step for the lambda grid to mean much.
TrainConfig cost_aware_train_defaults();

struct SweepConfig {
  std::vector<double> lambdas{0.0, 0.01, 0.1, 1.0};
  std::vector<int> depths{3, 4};
  int folds = 5;
  std::uint64_t seed = 1;
  TrainConfig train = cost_aware_train_defaults();
  double prune_threshold = 1e-6;
};

void to_json(nlohmann::json& j, const SweepConfig& c);
void from_json(const nlohmann::json& j, SweepConfig& c);

struct SweepRow {
  double lambda = 0.0;
  int depth = 0;
  int fold = 0;
  double f1 = 0.0;
  double power = 0.0;  // normalized to the cheapest feature
  int latency = 0;
  std::string error;
};

struct SweepPoint {
  double lambda = 0.0;
  int depth = 0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  double mean_power = 0.0;
  int latency = 0;
  std::size_t failed_folds = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepPoint> points;

  // lambda,depth,fold,f1,power,latency
  std::string to_csv() const;
  nlohmann::json to_json() const;
  std::string gnuplot_script(const std::string& csv_name) const;
};

SweepResult tradeoff_sweep(const Dataset& data, const SweepConfig& config);

struct BenchmarkConfig {
  int folds = 5;
  std::uint64_t seed = 1;
  double prune_threshold = 1e-6;
  GbtConfig gbt;
  GbtConfig pegb;
  int pegb_threshold_bits = 10;
  int pegb_leaf_bits = 3;
  CompressConfig peot;

  static BenchmarkConfig defaults();
};

void to_json(nlohmann::json& j, const BenchmarkConfig& c);
void from_json(const nlohmann::json& j, BenchmarkConfig& c);

struct MethodSummary {
  std::string method;
  std::string size_accounting;
  std::vector<double> f1;
  std::vector<double> size_bits;
  std::vector<double> power;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  double mean_size_bits = 0.0;
  double mean_power = 0.0;
  double size_normalized = 0.0;
  double power_normalized = 0.0;
};

struct BenchmarkReport {
  std::string provenance;
  std::string dataset_fingerprint;
  std::vector<MethodSummary> rows;  // baseline first
  std::vector<std::string> notes;

  const MethodSummary& row(const std::string& method) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Fills means and normalizes size and power to rows[0].
void finalize_rows(std::vector<MethodSummary>& rows);

BenchmarkReport benchmark_report(const Dataset& data, const BenchmarkConfig& config);

}  // namespace peot
