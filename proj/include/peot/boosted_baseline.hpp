#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "peot/dataset.hpp"

namespace peot {

// Axis-aligned regression tree. Node 0 is the root; a node with feature < 0
// is a leaf. Samples with x[feature] <= threshold go left.
struct AxisTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double weight = 0.0;

    bool is_leaf() const { return feature < 0; }
  };

  std::vector<Node> nodes;

  std::size_t num_internal() const;
  std::size_t num_leaves() const;
  int depth() const;
  // Leaf reached by x and the number of internal nodes visited on the way.
  int leaf_for(std::span<const double> x, int* visited = nullptr) const;
};

// Boosted ensemble for one binary logistic objective.
struct GbtEnsemble {
  std::vector<AxisTree> trees;
  double learning_rate = 0.3;
  double base_score = 0.0;

  double margin(std::span<const double> x) const;
};

struct QuantizationInfo {
  bool enabled = false;
  int threshold_bits = 0;
  int leaf_bits = 0;
  // Per-feature threshold grids and the global leaf grid.
  std::vector<double> threshold_lo, threshold_hi;
  double leaf_lo = 0.0, leaf_hi = 0.0;
};

// Binary model (one ensemble) or one-vs-rest multiclass (one per class).
struct GbtModel {
  int num_features = 0;
  int num_classes = 2;
  std::vector<GbtEnsemble> ensembles;
  std::vector<double> feature_min, feature_max;
  bool cost_aware = false;
  QuantizationInfo quantization;
  std::vector<std::string> warnings;

  std::size_t num_trees() const;
};

struct GbtConfig {
  int n_trees = 8;
  int max_depth = 4;
  double learning_rate = 0.3;
  double lambda_reg = 1.0;
  int min_samples_leaf = 5;
  // Cost-aware split penalty: gain -= cost_lambda * c_f on the first use of
  // feature f within the tree being grown. Approximates the cost-aware
  // boosting baseline; zero disables it.
  double cost_lambda = 0.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const GbtConfig& c);
void from_json(const nlohmann::json& j, GbtConfig& c);

struct GbtTrainTrace {
  // Training logistic loss after each round, per ensemble.
  std::vector<std::vector<double>> round_loss;
};

GbtModel train_gbt(const Dataset& data, const GbtConfig& config, GbtTrainTrace* trace = nullptr);

// Trains one binary ensemble on 0/1 targets.
GbtEnsemble train_binary_ensemble(const Matrix& x, std::span<const int> targets,
                                  std::span<const double> costs, const GbtConfig& config,
                                  std::vector<std::string>* warnings = nullptr,
                                  std::vector<double>* round_loss = nullptr);

struct GbtPrediction {
  std::vector<double> margins;
  std::vector<double> probabilities;
  int label = 0;
};

GbtPrediction predict_gbt(const GbtModel& model, std::span<const double> x);
std::vector<int> predict_gbt_labels(const GbtModel& model, const Matrix& x);

// Thresholds on per-feature min-max grids (training-data range) and leaf
// weights on a global min-max grid over the model's leaves.
GbtModel quantize_gbt(const GbtModel& model, int threshold_bits = 10, int leaf_bits = 3);

// Features read by the visited paths of all trees, each counted once per
// sample; mean over rows.
std::vector<std::size_t> gbt_deployed_features(const GbtModel& model, std::span<const double> x);
double gbt_deployed_power(const GbtModel& model, const Matrix& x, std::span<const double> costs);

}  // namespace peot
