#include "peot/cost_regularizer.hpp"

#include <algorithm>
#include <cmath>

#include "objective.hpp"
#include "peot/error.hpp"

namespace peot {

void check_costs(std::span<const double> costs, std::size_t num_features) {
  if (costs.size() != num_features)
    throw_invalid("cost vector has " + std::to_string(costs.size()) + " entries, model has " +
                  std::to_string(num_features) + " features");
  for (double c : costs)
    if (!(c > 0.0) || !std::isfinite(c)) throw_invalid("feature costs must be finite and > 0");
}

double node_feature_cost(const ObliqueTree& tree, std::size_t node, std::span<const double> costs) {
  const ConstMatrixMap w1 = tree.w1(node);
  double total = 0.0;
  for (Eigen::Index f = 0; f < w1.cols(); ++f)
    total += costs[static_cast<std::size_t>(f)] * w1.col(f).cwiseAbs().sum();
  return total;
}

double power_penalty(const ObliqueTree& tree, std::span<const double> x, std::span<const double> costs) {
  check_costs(costs, static_cast<std::size_t>(tree.shape().num_features));
  const auto mu = node_visit_probabilities(tree, x);
  double psi = 0.0;
  for (std::size_t n = 0; n < tree.shape().num_internal(); ++n) psi += mu[n] * node_feature_cost(tree, n, costs);
  return psi;
}

std::vector<double> power_penalty_gradients(const ObliqueTree& tree, std::span<const double> x,
                                            std::span<const double> costs) {
  check_costs(costs, static_cast<std::size_t>(tree.shape().num_features));
  if (x.size() != static_cast<std::size_t>(tree.shape().num_features))
    throw_invalid("input has " + std::to_string(x.size()) + " features, model expects " +
                  std::to_string(tree.shape().num_features));
  const ConstMatrixMap row(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  detail::ObjectiveOptions opt;
  opt.ce_scale = 0.0;
  opt.penalty_scale = 1.0;
  std::vector<double> grad;
  detail::evaluate_objective(tree, row, {}, {}, costs, opt, &grad);
  return grad;
}

std::vector<std::size_t> deployed_features(const ObliqueTree& tree, std::span<const double> x,
                                           double prune_threshold) {
  const auto path = predict_single_path(tree, x);
  std::vector<std::uint8_t> used(static_cast<std::size_t>(tree.shape().num_features), 0);
  for (std::size_t n : path.visited) {
    const ConstMatrixMap w1 = tree.w1(n);
    for (Eigen::Index f = 0; f < w1.cols(); ++f)
      if (w1.col(f).cwiseAbs().sum() > prune_threshold) used[static_cast<std::size_t>(f)] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < used.size(); ++f)
    if (used[f]) out.push_back(f);
  return out;
}

double deployed_power(const ObliqueTree& tree, const Matrix& x, std::span<const double> costs,
                      double prune_threshold) {
  check_costs(costs, static_cast<std::size_t>(tree.shape().num_features));
  if (x.rows() == 0) throw_invalid("deployed power needs at least one sample");
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto used = deployed_features(tree, {x.data() + r * x.cols(), static_cast<std::size_t>(x.cols())},
                                        prune_threshold);
    for (std::size_t f : used) total += costs[f];
  }
  return total / static_cast<double>(x.rows());
}

}  // namespace peot
