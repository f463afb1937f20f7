#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "peot/cost_regularizer.hpp"
#include "peot/error.hpp"
#include "peot/eval_harness.hpp"
#include "peot/synth.hpp"

using namespace peot;

namespace {

TreeShape shape(int depth, int features, int hidden, int classes) {
  TreeShape s;
  s.depth = depth;
  s.num_features = features;
  s.hidden = hidden;
  s.num_classes = classes;
  return s;
}

void zero_w1(ObliqueTree& t) {
  for (std::size_t e = 0; e < t.shape().num_w1_entries(); ++e) t.params()[t.shape().w1_param_index(e)] = 0.0;
}

}  // namespace

TEST_CASE("power penalty values") {
  ObliqueTree t = oracle::random_tree(shape(3, 4, 2, 2), 1);
  zero_w1(t);
  const std::vector<double> c{1, 2, 3, 4}, x{0.5, -1, 2, 0};
  CHECK(power_penalty(t, x, c) == 0.0);

  ObliqueTree root(shape(1, 1, 2, 2));
  root.w1(0)(0, 0) = 1.0;
  root.w1(0)(1, 0) = -2.0;
  CHECK(power_penalty(root, std::vector<double>{0.7}, std::vector<double>{2.0}) == 6.0);

  const ObliqueTree r = oracle::random_tree(shape(3, 5, 3, 2), 77);
  const std::vector<double> c5{1, 3, 25, 25, 1};
  const Matrix xs = oracle::random_matrix(10, 5, 78);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const std::span<const double> xi(xs.data() + i * 5, 5);
    CHECK(std::abs(power_penalty(r, xi, c5) - static_cast<double>(oracle::penalty(r, r.params(), xi, c5))) < 1e-12);
  }
  CHECK_THROWS_AS(power_penalty(r, std::vector<double>{1, 2}, c5), Error);
  CHECK_THROWS_AS(power_penalty(r, std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{1, 2}), Error);
}

TEST_CASE("power penalty gradients") {
  const ObliqueTree t = oracle::random_tree(shape(3, 4, 2, 2), 5, 1e-3);
  const std::vector<double> c{1, 3, 25, 2}, x{0.1, 0.7, -1.2, 0.4};
  const auto g = power_penalty_gradients(t, x, c);
  REQUIRE(g.size() == t.shape().total_params());
  for (std::size_t k = 0; k < g.size(); ++k) {
    std::vector<double> p(t.params().begin(), t.params().end());
    p[k] += 1e-5;
    const auto up = oracle::penalty(t, p, x, c);
    p[k] -= 2e-5;
    const auto down = oracle::penalty(t, p, x, c);
    const double fd = static_cast<double>((up - down) / 2e-5L);
    if (std::abs(fd) < 1e-8)
      CHECK(std::abs(g[k] - fd) < 1e-8);
    else
      CHECK(std::abs(g[k] - fd) / std::max(std::abs(fd), std::abs(g[k])) < 1e-4);
  }

  std::vector<double> c2(c);
  for (auto& v : c2) v *= 3.0;
  const auto g3 = power_penalty_gradients(t, x, c2);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(g3[k] == doctest::Approx(3.0 * g[k]).epsilon(1e-12));

  // Depth 1: the root is always visited, so the penalty is the plain
  // cost-weighted L1 norm and a zero entry has zero subgradient.
  ObliqueTree z = oracle::random_tree(shape(1, 4, 2, 2), 6, 0.1);
  z.params()[z.shape().w1_param_index(0)] = 0.0;
  const auto gz = power_penalty_gradients(z, x, c);
  CHECK(gz[z.shape().w1_param_index(0)] == 0.0);
  CHECK(gz[z.shape().w1_param_index(1)] == doctest::Approx(c[1] * (z.params()[z.shape().w1_param_index(1)] > 0 ? 1 : -1)));
}

TEST_CASE("deployed power") {
  ObliqueTree t = oracle::random_tree(shape(3, 3, 2, 2), 9);
  zero_w1(t);
  const Matrix xs = oracle::random_matrix(4, 3, 10);
  CHECK(deployed_power(t, xs, std::vector<double>{1, 5, 3}) == 0.0);

  ObliqueTree d1(shape(1, 3, 2, 2));
  d1.w1(0)(0, 0) = 0.5;
  d1.w1(0)(1, 2) = -0.1;
  CHECK(deployed_power(d1, xs, std::vector<double>{1, 5, 3}) == 4.0);

  // Depth 2 with the root sending every sample left (large negative bias):
  // root uses {0, 1}, its left child uses {1, 2}; feature 1 counts once.
  ObliqueTree d2(shape(2, 3, 1, 2));
  d2.params()[d2.shape().b2_offset(0)] = -50.0;
  d2.w1(0)(0, 0) = 1e-3;
  d2.w1(0)(0, 1) = 1e-3;
  d2.w1(1)(0, 1) = 2.0;
  d2.w1(1)(0, 2) = 2.0;
  d2.w1(2)(0, 0) = 9.0;
  const std::vector<double> c{1, 5, 3};
  CHECK(deployed_features(d2, std::vector<double>{0, 0, 0}) == std::vector<std::size_t>{0, 1, 2});
  CHECK(deployed_power(d2, Matrix::Zero(2, 3), c) == 1.0 + 5.0 + 3.0);
  // Raising the threshold above the root's column norms drops features 0 and 1 there.
  CHECK(deployed_power(d2, Matrix::Zero(2, 3), c, 0.01) == 5.0 + 3.0);
  CHECK_THROWS_AS(deployed_power(d2, Matrix::Zero(0, 3), c), Error);
}

TEST_CASE("the cost penalty lowers deployed power") {
  const Dataset d = synth_dataset(SynthTask::Seizure, 300, 3);
  TrainConfig cfg = cost_aware_train_defaults();
  cfg.depth = 3;
  cfg.hidden = 4;
  cfg.epochs = 20;
  const ObliqueTree plain = train(d, cfg);
  cfg.lambda = 0.1;
  const ObliqueTree lean = train(d, cfg);
  const double total = std::accumulate(d.costs.begin(), d.costs.end(), 0.0);
  CHECK(deployed_power(plain, d.features, d.costs) == doctest::Approx(total));
  CHECK(deployed_power(lean, d.features, d.costs) < 0.5 * total);
  // The soft-threshold step leaves exact zeros behind.
  std::size_t zeros = 0;
  for (std::size_t e = 0; e < lean.shape().num_w1_entries(); ++e)
    zeros += lean.params()[lean.shape().w1_param_index(e)] == 0.0;
  CHECK(zeros > lean.shape().num_w1_entries() / 4);
}
