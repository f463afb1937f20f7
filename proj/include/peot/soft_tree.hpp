#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "peot/dataset.hpp"

namespace peot {

// Dimensions of a complete oblique tree and the layout of its flat
// parameter vector. Internal nodes are stored breadth-first (children of n
// are 2n+1 on the left and 2n+2 on the right), each as
// [W1 (hidden x F, row-major) | b1 (hidden) | w2 (hidden) | b2], followed by
// the leaf logits (2^D x C, row-major). Leaf 0 is the all-left leaf.
struct TreeShape {
  int depth = 0;
  int num_features = 0;
  int num_classes = 0;
  int hidden = 0;

  std::size_t num_internal() const { return (std::size_t{1} << depth) - 1; }
  std::size_t num_leaves() const { return std::size_t{1} << depth; }
  std::size_t w1_size() const { return static_cast<std::size_t>(hidden) * num_features; }
  std::size_t node_param_count() const { return w1_size() + 2 * static_cast<std::size_t>(hidden) + 1; }
  std::size_t internal_param_count() const { return num_internal() * node_param_count(); }
  std::size_t leaf_param_count() const { return num_leaves() * static_cast<std::size_t>(num_classes); }
  std::size_t total_params() const { return internal_param_count() + leaf_param_count(); }
  std::size_t num_w1_entries() const { return num_internal() * w1_size(); }

  std::size_t w1_offset(std::size_t node) const { return node * node_param_count(); }
  std::size_t b1_offset(std::size_t node) const { return w1_offset(node) + w1_size(); }
  std::size_t w2_offset(std::size_t node) const { return b1_offset(node) + hidden; }
  std::size_t b2_offset(std::size_t node) const { return w2_offset(node) + hidden; }
  std::size_t leaf_offset(std::size_t leaf) const {
    return internal_param_count() + leaf * static_cast<std::size_t>(num_classes);
  }
  // Position in the parameter vector of global first-layer entry `entry`
  // (entries enumerate W1 of node 0, then node 1, ... row-major).
  std::size_t w1_param_index(std::size_t entry) const {
    return w1_offset(entry / w1_size()) + entry % w1_size();
  }

  void validate() const;
  bool operator==(const TreeShape&) const = default;
};

// Per-feature affine map applied to raw inputs before the first layer.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer identity(std::size_t num_features);
  // Train-set mean and std; std is clamped to at least `min_std`.
  static Standardizer fit(const Matrix& x, double min_std);

  void apply(std::span<const double> x, std::span<double> out) const;
  Matrix apply(const Eigen::Ref<const Matrix>& x) const;
};

// Pruning mask and weight-sharing codebook attached to a tree. Both index
// the global first-layer entries (see TreeShape::w1_param_index).
struct CompressionState {
  std::vector<std::uint8_t> kept;        // empty: dense
  std::vector<double> centroids;         // empty: no sharing
  std::vector<std::int32_t> assignment;  // centroid per entry, -1 if pruned

  bool is_pruned() const { return !kept.empty(); }
  bool is_shared() const { return !centroids.empty(); }
  bool entry_kept(std::size_t entry) const { return kept.empty() || kept[entry] != 0; }
};

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

// Two-layer routing network of one internal node.
struct NodeView {
  ConstMatrixMap w1;
  ConstVectorMap b1;
  ConstVectorMap w2;
  double b2;
};

class ObliqueTree {
 public:
  ObliqueTree() = default;
  // All parameters zero, identity standardizer.
  explicit ObliqueTree(const TreeShape& shape);

  const TreeShape& shape() const { return shape_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  NodeView node(std::size_t n) const;
  MatrixMap w1(std::size_t n);
  ConstMatrixMap w1(std::size_t n) const;
  std::span<double> leaf_logits(std::size_t leaf);
  std::span<const double> leaf_logits(std::size_t leaf) const;

  // Re-imposes the compression state: pruned entries to zero, shared
  // entries to their centroid.
  void apply_compression();

  Standardizer standardizer;
  CompressionState compression;

 private:
  TreeShape shape_;
  std::vector<double> params_;
};

// p(right) = sigmoid(w2 . relu(W1 z + b1) + b2) for an already standardized z.
double routing_probability(const NodeView& node, std::span<const double> z);

// Visit probability of every node of the full tree (internal nodes then
// leaves, breadth-first; 2^(D+1) - 1 entries). Root is 1.
std::vector<double> node_visit_probabilities(const ObliqueTree& tree, std::span<const double> x);
std::vector<double> path_probabilities(const ObliqueTree& tree, std::span<const double> x);
std::vector<double> leaf_distribution(const ObliqueTree& tree, std::size_t leaf);
std::vector<double> predict_soft(const ObliqueTree& tree, std::span<const double> x);

struct SinglePathResult {
  int label = 0;
  std::vector<std::size_t> visited;  // internal node ids, root first
  std::size_t leaf = 0;
};

// Follows the most probable branch at each node; p == 0.5 goes left.
SinglePathResult predict_single_path(const ObliqueTree& tree, std::span<const double> x);
std::vector<int> predict_labels(const ObliqueTree& tree, const Matrix& x);

struct BatchView {
  Eigen::Ref<const Matrix> x;
  std::span<const int> labels;
  std::span<const double> weights;  // optional per-sample loss weights
};

struct LossResult {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double penalty = 0.0;  // mean power penalty, before multiplying by lambda
  std::vector<double> gradient;
};

// Mean cross-entropy of the soft mixture plus lambda * mean power penalty,
// with exact gradients for every entry of tree.params().
LossResult loss_and_gradients(const ObliqueTree& tree, const BatchView& batch, double lambda,
                              std::span<const double> costs);

enum class OptimizerKind { Momentum, Adam };

struct TrainConfig {
  int depth = 3;
  int hidden = 8;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::Momentum;
  double momentum = 0.9;
  double beta2 = 0.999;
  double lambda = 0.0;
  std::uint64_t seed = 1;
  double init_scale = 1.0;
  bool class_weighted = false;
  double min_std = 1e-8;
  // Apply the L1 part of the power penalty as a soft-threshold step so
  // unused feature columns reach exact zeros.
  bool proximal_l1 = true;
  // Learning rate decays linearly over the epochs down to this fraction.
  double final_lr_fraction = 1.0;
  // Treat visit probabilities in the power penalty as fixed weights during
  // training. The penalty's pull on routing otherwise collapses multiclass
  // trees onto one cheap path before they learn anything.
  bool detach_visit_weights = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainReport {
  std::vector<double> epoch_loss;
};

// Fresh tree: node weights uniform in +-init_scale/sqrt(F), leaf logits zero,
// standardizer fitted on `data`.
ObliqueTree init_tree(const Dataset& data, const TrainConfig& config);

ObliqueTree train(const Dataset& data, const TrainConfig& config, TrainReport* report = nullptr);

// Continues training from the current parameters. Pruned entries stay zero
// and shared entries move together through their centroid.
void fit(ObliqueTree& tree, const Dataset& data, const TrainConfig& config,
         TrainReport* report = nullptr);

// Full objective over a dataset, no gradients.
double objective(const ObliqueTree& tree, const Dataset& data, double lambda,
                 bool class_weighted);

enum class TouchAccounting { InternalOnly, WithLeaves };

const char* touch_accounting_name(TouchAccounting mode);

// Share of parameters read by single-path inference on x.
double params_touched_fraction(const ObliqueTree& tree, std::span<const double> x,
                               TouchAccounting mode);

std::vector<double> class_weights_for(const Dataset& data, bool enabled);

}  // namespace peot
