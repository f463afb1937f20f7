#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "peot/dataset.hpp"
#include "peot/soft_tree.hpp"

namespace peot {

inline constexpr double kDefaultPruneThreshold = 1e-6;

// sum_f c_f * ||W1(node)[:, f]||_1
double node_feature_cost(const ObliqueTree& tree, std::size_t node, std::span<const double> costs);

// Training surrogate: sum over internal nodes of visit probability times the
// node's cost-weighted first-layer column norms. Features shared between
// nodes are counted at every node (upper bound on extraction cost).
double power_penalty(const ObliqueTree& tree, std::span<const double> x,
                     std::span<const double> costs);

// d(power_penalty)/d(params); sign(0) = 0 for the L1 term.
std::vector<double> power_penalty_gradients(const ObliqueTree& tree, std::span<const double> x,
                                            std::span<const double> costs);

// Features read along the single inference path of x: those whose
// first-layer column norm exceeds `prune_threshold` at a visited node.
// Sorted, each feature once.
std::vector<std::size_t> deployed_features(const ObliqueTree& tree, std::span<const double> x,
                                           double prune_threshold = kDefaultPruneThreshold);

// Mean over rows of the summed cost of deployed_features.
double deployed_power(const ObliqueTree& tree, const Matrix& x, std::span<const double> costs,
                      double prune_threshold = kDefaultPruneThreshold);

void check_costs(std::span<const double> costs, std::size_t num_features);

}  // namespace peot
