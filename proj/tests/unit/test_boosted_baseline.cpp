#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "peot/boosted_baseline.hpp"
#include "peot/error.hpp"

using namespace peot;

namespace {

Dataset random_binary(std::size_t n, std::size_t f, std::uint64_t seed) {
  Dataset d;
  d.features = oracle::random_matrix(n, f, seed);
  std::mt19937_64 rng(seed + 1);
  std::bernoulli_distribution flip(0.15);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    int y = d.features(i, 0) - 0.7 * d.features(i, 1) + 0.3 * d.features(i, 2) > 0 ? 1 : 0;
    if (flip(rng)) y = 1 - y;
    d.labels.push_back(y);
  }
  d.num_classes = 2;
  d.costs.assign(f, 1.0);
  return d;
}

std::span<const double> row(const Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

TEST_CASE("a single stump separates separable 1-D data") {
  Dataset d;
  d.features.resize(40, 1);
  for (int i = 0; i < 40; ++i) {
    d.features(i, 0) = i < 20 ? -1.0 - 0.1 * i : 1.0 + 0.1 * i;
    d.labels.push_back(i < 20 ? 0 : 1);
  }
  d.num_classes = 2;
  GbtConfig c;
  c.n_trees = 1;
  c.max_depth = 1;
  c.min_samples_leaf = 1;
  const GbtModel m = train_gbt(d, c);
  const auto pred = predict_gbt_labels(m, d.features);
  CHECK(pred == d.labels);
  std::set<double> margins;
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) margins.insert(predict_gbt(m, row(d.features, i)).margins[0]);
  CHECK(margins.size() == 2);
}

TEST_CASE("training loss decreases every round") {
  const Dataset d = random_binary(200, 5, 3);
  GbtConfig c;
  c.n_trees = 20;
  c.learning_rate = 0.3;
  GbtTrainTrace trace;
  train_gbt(d, c, &trace);
  REQUIRE(trace.round_loss.size() == 1);
  for (std::size_t r = 1; r < trace.round_loss[0].size(); ++r) CHECK(trace.round_loss[0][r] < trace.round_loss[0][r - 1]);
}

TEST_CASE("margins and traversal") {
  GbtModel m;
  m.num_features = 2;
  m.num_classes = 2;
  GbtEnsemble e;
  e.learning_rate = 0.25;
  e.base_score = 0.1;
  AxisTree flat;
  flat.nodes = {{0, 0.0, 1, 2, 0.0}, {-1, 0, -1, -1, 0.8}, {-1, 0, -1, -1, 0.8}};
  e.trees.push_back(flat);
  m.ensembles.push_back(e);
  for (double x : {-3.0, 0.0, 5.0})
    CHECK(predict_gbt(m, std::vector<double>{x, 1.0}).margins[0] == doctest::Approx(0.1 + 0.25 * 0.8));

  AxisTree full;
  full.nodes = {{0, 0.0, 1, 2, 0}, {1, 0.0, 3, 4, 0}, {1, 1.0, 5, 6, 0}, {}, {}, {}, {}};
  CHECK(full.depth() == 2);
  CHECK(full.num_internal() == 3);
  CHECK(full.num_leaves() == 4);
  for (const auto& x : {std::vector<double>{-1, -1}, std::vector<double>{-1, 1}, std::vector<double>{1, 0},
                        std::vector<double>{1, 2}}) {
    int visited = 0;
    full.leaf_for(x, &visited);
    CHECK(visited == 2);
  }
  CHECK_THROWS_AS(predict_gbt(m, std::vector<double>{1.0}), Error);
}

TEST_CASE("quantization") {
  const Dataset d = random_binary(300, 6, 9);
  GbtConfig c;
  c.n_trees = 8;
  c.max_depth = 4;
  const GbtModel m = train_gbt(d, c);

  // With fine threshold grids routing is unchanged, so each tree's margin
  // moves by at most eta times half the leaf grid spacing.
  const GbtModel q = quantize_gbt(m, 32, 3);
  CHECK(q.quantization.enabled);
  const double spacing = (q.quantization.leaf_hi - q.quantization.leaf_lo) / 7.0;
  const double bound = static_cast<double>(m.num_trees()) * c.learning_rate * (spacing / 2 + 1e-12);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    const double a = predict_gbt(m, row(d.features, i)).margins[0];
    const double b = predict_gbt(q, row(d.features, i)).margins[0];
    CHECK(std::abs(a - b) <= bound);
  }

  const GbtModel q10 = quantize_gbt(m, 10, 3);
  const GbtModel again = quantize_gbt(q10, 10, 3);
  for (std::size_t t = 0; t < q10.ensembles[0].trees.size(); ++t)
    for (std::size_t n = 0; n < q10.ensembles[0].trees[t].nodes.size(); ++n) {
      CHECK(again.ensembles[0].trees[t].nodes[n].weight == q10.ensembles[0].trees[t].nodes[n].weight);
      CHECK(again.ensembles[0].trees[t].nodes[n].threshold == q10.ensembles[0].trees[t].nodes[n].threshold);
    }
  std::set<double> leaves;
  for (const auto& t : q10.ensembles[0].trees)
    for (const auto& n : t.nodes)
      if (n.is_leaf()) leaves.insert(n.weight);
  CHECK(leaves.size() <= 8);
}

TEST_CASE("single-class data reduces to the base score") {
  Dataset d = random_binary(50, 3, 4);
  std::fill(d.labels.begin(), d.labels.end(), 1);
  const GbtModel m = train_gbt(d, GbtConfig{});
  CHECK(m.ensembles[0].trees.empty());
  CHECK_FALSE(m.warnings.empty());
  CHECK(predict_gbt(m, row(d.features, 0)).label == 1);
}

TEST_CASE("one-vs-rest multiclass") {
  Dataset d;
  d.features = oracle::random_matrix(300, 3, 21);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    const double a = d.features(i, 0), b = d.features(i, 1);
    d.labels.push_back(a > 0.5 ? 2 : (b > 0 ? 1 : 0));
  }
  d.num_classes = 3;
  d.costs = {1, 1, 1};
  GbtConfig c;
  c.n_trees = 10;
  const GbtModel m = train_gbt(d, c);
  CHECK(m.ensembles.size() == 3);
  const auto pred = predict_gbt_labels(m, d.features);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == d.labels[i];
  CHECK(static_cast<double>(ok) / static_cast<double>(pred.size()) > 0.9);
}

TEST_CASE("cost-aware splits avoid expensive features") {
  Dataset d = random_binary(400, 4, 12);
  // Feature 3 duplicates feature 0 with a tiny shift but is 25x cheaper.
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) d.features(i, 3) = d.features(i, 0) + 1e-9;
  d.costs = {25, 1, 1, 1};
  GbtConfig plain;
  plain.n_trees = 10;
  GbtConfig aware = plain;
  aware.cost_lambda = 0.5;
  const double p0 = gbt_deployed_power(train_gbt(d, plain), d.features, d.costs);
  const GbtModel am = train_gbt(d, aware);
  CHECK(am.cost_aware);
  CHECK(gbt_deployed_power(am, d.features, d.costs) < p0);
}

TEST_CASE("gbt config validation") {
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"n_trees": 0})").get<GbtConfig>().validate(), Error);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"trees": 3})").get<GbtConfig>(), Error);
}
