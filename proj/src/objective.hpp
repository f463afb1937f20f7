#pragma once

#include <span>
#include <vector>

#include "peot/soft_tree.hpp"

namespace peot::detail {

struct ObjectiveOptions {
  double ce_scale = 1.0;
  double penalty_scale = 0.0;
  // When false the sign(W1) term of the penalty is left out of the gradient
  // (the trainer applies it as a proximal step instead).
  bool l1_subgradient = true;
  // When false the penalty's dependence on visit probabilities is not
  // propagated into the routing parameters.
  bool penalty_through_routing = true;
};

// Sums over the batch; means are formed by the caller.
struct ObjectiveSums {
  double ce_weighted = 0.0;
  double weight_total = 0.0;
  double penalty = 0.0;
  std::size_t count = 0;

  double ce_mean() const { return weight_total > 0.0 ? ce_weighted / weight_total : 0.0; }
  double penalty_mean() const { return count ? penalty / static_cast<double>(count) : 0.0; }
};

// Forward pass over a raw (unstandardized) batch. When `grad` is non-null it
// receives the gradient of
//   ce_scale * (weighted mean CE) + penalty_scale * (mean penalty)
// with respect to tree.params(). `mean_visit` receives the batch-mean visit
// probability of each internal node. `labels` may be empty when
// ce_scale == 0.
ObjectiveSums evaluate_objective(const ObliqueTree& tree, const Eigen::Ref<const Matrix>& x,
                                 std::span<const int> labels, std::span<const double> weights,
                                 std::span<const double> costs, const ObjectiveOptions& options,
                                 std::vector<double>* grad, std::vector<double>* mean_visit = nullptr);

inline constexpr double kLogFloor = 1e-12;

}  // namespace peot::detail
