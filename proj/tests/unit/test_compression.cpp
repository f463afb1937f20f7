#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "peot/compression.hpp"
#include "peot/error.hpp"

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

Dataset small_data(std::uint64_t seed) {
  Dataset d;
  d.features = oracle::random_matrix(120, 4, seed);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i)
    d.labels.push_back(d.features(i, 0) + 0.5 * d.features(i, 1) > 0 ? 1 : 0);
  d.num_classes = 2;
  d.costs = {1, 3, 25, 1};
  return d;
}

std::vector<double> w1_values(const ObliqueTree& t) {
  std::vector<double> v;
  for (std::size_t e = 0; e < t.shape().num_w1_entries(); ++e) v.push_back(t.params()[t.shape().w1_param_index(e)]);
  return v;
}

}  // namespace

TEST_CASE("uniform quantization") {
  const QuantFormat f{4, -1.5, 2.5};
  CHECK(quantize_value(-1.5, f) == -1.5);
  CHECK(quantize_value(2.5, f) == 2.5);
  CHECK(quantize_value(-9.0, f) == -1.5);
  CHECK(quantize_value(9.0, f) == 2.5);

  const QuantFormat one{1, 0.0, 1.0};
  CHECK(quantize_value(0.4, one) == 0.0);
  CHECK(quantize_value(0.6, one) == 1.0);
  CHECK(quantize_value(0.5, one) == 1.0);

  const QuantFormat ten{10, -3.0, 7.0};
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3.0, 7.0);
  std::vector<double> vals(5000);
  for (auto& v : vals) v = u(rng);
  const auto q = quantize_values(vals, ten);
  const double bound = 10.0 / (2.0 * 1023.0) + 1e-12;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    CHECK(std::abs(q[i] - vals[i]) <= bound);
    CHECK(quantize_value(q[i], ten) == q[i]);
    CHECK(on_grid(q[i], ten));
  }
  CHECK(quantize_values(std::vector<double>{}, ten).empty());
  CHECK_THROWS_AS(quantize_value(0.0, QuantFormat{0, 0, 1}), Error);
  CHECK_THROWS_AS(quantize_value(0.0, QuantFormat{4, 1, 1}), Error);
}

TEST_CASE("magnitude pruning") {
  ObliqueTree t(shape(1, 2, 2, 2));
  auto w = t.w1(0);
  w(0, 0) = 3, w(0, 1) = -1, w(1, 0) = 2, w(1, 1) = -4;

  const PruneResult same = prune(t, 0.0);
  CHECK(same.mask.num_pruned() == 0);
  CHECK(std::equal(same.tree.params().begin(), same.tree.params().end(), t.params().begin()));

  const PruneResult half = prune(t, 0.5);
  CHECK(w1_values(half.tree) == std::vector<double>{3, 0, 0, -4});
  CHECK(half.mask.kept == std::vector<std::uint8_t>{1, 0, 0, 1});

  ObliqueTree ties(shape(1, 2, 2, 2));
  ties.w1(0).setConstant(1.0);
  CHECK(prune(ties, 0.5).mask.kept == std::vector<std::uint8_t>{0, 0, 1, 1});

  CHECK_THROWS_AS(prune(t, 1.0), Error);
  CHECK_THROWS_AS(prune(t, -0.1), Error);
}

TEST_CASE("pruned tree equals the dense tree with zeroed entries") {
  const ObliqueTree t = oracle::random_tree(shape(3, 6, 4, 3), 41);
  const PruneResult r = prune(t, 0.6);
  CHECK(r.mask.num_pruned() == static_cast<std::size_t>(std::floor(0.6 * t.shape().num_w1_entries())));
  ObliqueTree manual = t;
  for (std::size_t e = 0; e < t.shape().num_w1_entries(); ++e)
    if (!r.mask.kept[e]) manual.params()[t.shape().w1_param_index(e)] = 0.0;
  const Matrix xs = oracle::random_matrix(30, 6, 42);
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const std::span<const double> x(xs.data() + i * 6, 6);
    const auto a = predict_soft(r.tree, x), b = predict_soft(manual, x);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-12);
  }
}

TEST_CASE("one-dimensional k-means") {
  std::vector<double> two;
  for (int i = 0; i < 10; ++i) two.push_back(1.0), two.push_back(5.0);
  const KMeansResult km = kmeans_1d(two, 2);
  CHECK(km.centroids == std::vector<double>{1.0, 5.0});
  CHECK(within_cluster_ss(two, km.centroids) == 0.0);

  const std::vector<double> few{0.3, -1.0, 0.3, 2.0};
  const KMeansResult all = kmeans_1d(few, 8);
  CHECK(all.centroids.size() == 3);
  CHECK(within_cluster_ss(few, all.centroids) == 0.0);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> vals(2000);
  for (auto& v : vals) v = g(rng);
  const KMeansResult r = kmeans_1d(vals, 32);
  CHECK(r.centroids.size() == 32);
  CHECK(within_cluster_ss(vals, r.centroids) <= within_cluster_ss(vals, linear_init_centroids(vals, 32)));
  CHECK(r.iterations <= kKMeansMaxIterations);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double d = std::abs(vals[i] - r.centroids[static_cast<std::size_t>(r.assignment[i])]);
    for (double c : r.centroids) CHECK(d <= std::abs(vals[i] - c));
  }
  CHECK_THROWS_AS(kmeans_1d(std::vector<double>{}, 2), Error);
}

TEST_CASE("weight sharing") {
  const ObliqueTree t = oracle::random_tree(shape(2, 5, 3, 2), 61);
  const ShareResult s = share(prune(t, 0.5).tree, 2);
  CHECK(s.codebook.centroids.size() == 4);
  CHECK(s.codebook.index_bits() == 2);
  for (std::size_t e = 0; e < t.shape().num_w1_entries(); ++e) {
    const double v = s.tree.params()[t.shape().w1_param_index(e)];
    if (!s.tree.compression.entry_kept(e)) {
      CHECK(v == 0.0);
      CHECK(s.codebook.assignment[e] == -1);
    } else {
      CHECK(v == s.codebook.centroids[static_cast<std::size_t>(s.codebook.assignment[e])]);
    }
  }
  ObliqueTree empty(shape(1, 1, 1, 2));
  empty.compression.kept = {0};
  CHECK_THROWS_AS(share(empty, 2), Error);
}

TEST_CASE("fine-tuning keeps the mask and the codebook") {
  const Dataset d = small_data(3);
  TrainConfig cfg;
  cfg.depth = 2;
  cfg.hidden = 3;
  cfg.epochs = 3;
  const ObliqueTree dense = train(d, cfg);
  const ShareResult s = share(prune(dense, 0.7).tree, 2);
  const ObliqueTree tuned = fine_tune(s.tree, d, cfg);
  const auto& comp = tuned.compression;
  std::vector<double> moved(comp.centroids.size());
  for (std::size_t k = 0; k < moved.size(); ++k) moved[k] = comp.centroids[k] - s.codebook.centroids[k];
  bool any_moved = false;
  for (std::size_t e = 0; e < tuned.shape().num_w1_entries(); ++e) {
    const double before = s.tree.params()[tuned.shape().w1_param_index(e)];
    const double after = tuned.params()[tuned.shape().w1_param_index(e)];
    if (!comp.entry_kept(e)) {
      CHECK(after == 0.0);
      continue;
    }
    const auto k = static_cast<std::size_t>(comp.assignment[e]);
    CHECK(after == comp.centroids[k]);
    CHECK(after - before == doctest::Approx(moved[k]).epsilon(1e-12));
    any_moved |= after != before;
  }
  CHECK(any_moved);
}

TEST_CASE("size accounting") {
  const ObliqueTree dense(shape(2, 4, 2, 2));
  CHECK(model_size_bits(dense, SizeAccounting::DenseFloat32).total_bits == 1504);

  ObliqueTree t = oracle::random_tree(shape(2, 4, 2, 2), 2);
  const ShareResult s = share(prune(t, 0.5).tree, 2);
  // 24 entries, 12 survive; 2-bit indices, 4 centroids, 5-bit sparse index,
  // 3 nodes x 5 other node params + 8 leaf logits at 32 bits.
  const std::uint64_t expected = 12 * 2 + 32 * 4 + 12 * 5 + 32 * (3 * 5 + 8);
  CHECK(model_size_bits(s.tree, SizeAccounting::PrunedShared).total_bits == expected);
  CHECK_THROWS_AS(model_size_bits(t, SizeAccounting::QuantizedGbt), Error);

  GbtModel stump;
  stump.num_features = 32;
  stump.num_classes = 2;
  GbtEnsemble e;
  AxisTree tree;
  tree.nodes = {{0, 0.5, 1, 2, 0.0}, {}, {}};
  e.trees.push_back(tree);
  stump.ensembles.push_back(e);
  stump.quantization.enabled = true;
  stump.quantization.threshold_bits = 10;
  stump.quantization.leaf_bits = 3;
  CHECK(model_size_bits(stump, SizeAccounting::QuantizedGbt).total_bits == 21);
  CHECK(model_size_bits(stump, SizeAccounting::DenseFloat32).total_bits == 5 + 32 + 2 * 32);

  CHECK(ceil_log2(1) == 0);
  CHECK(ceil_log2(2) == 1);
  CHECK(ceil_log2(3) == 2);
  CHECK(ceil_log2(1024) == 10);
  CHECK(parse_size_accounting("pruned-shared") == SizeAccounting::PrunedShared);
  CHECK_THROWS_AS(parse_size_accounting("gzip"), Error);
}

TEST_CASE("compression pipeline") {
  const Dataset d = small_data(8);
  CompressConfig cfg;
  cfg.train.depth = 2;
  cfg.train.hidden = 4;
  cfg.train.epochs = 3;
  const ObliqueTree dense = train(d, cfg.train);

  // Sparsity 0 with a codebook as large as the weight count: no-op stages,
  // so the ratio only reflects index overhead.
  CompressConfig noop = cfg;
  noop.sparsity = 0.0;
  noop.share_bits = 32;
  noop.fine_tune_enabled = false;
  const CompressResult r0 = compress_pipeline(dense, d, nullptr, noop);
  CHECK(r0.report.ratio < 1.0);
  CHECK(r0.report.ratio > 0.5);
  CHECK(r0.report.acc_after == r0.report.acc_before);

  std::uint64_t last = std::numeric_limits<std::uint64_t>::max();
  for (double s : {0.5, 0.7, 0.9}) {
    CompressConfig c = cfg;
    c.sparsity = s;
    c.share_bits = 3;
    const CompressResult r = compress_pipeline(dense, d, nullptr, c);
    CHECK(r.report.size_after.total_bits < last);
    last = r.report.size_after.total_bits;
    CHECK(r.report.ratio == doctest::Approx(static_cast<double>(r.report.size_before.total_bits) /
                                            static_cast<double>(r.report.size_after.total_bits)));
    CHECK(r.report.touched_internal_only == doctest::Approx(2.0 / 3.0));
  }

  nlohmann::json j = cfg;
  CHECK(j.get<CompressConfig>().train.depth == 2);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"sparsity": 1.5})").get<CompressConfig>().validate(), Error);
}

TEST_CASE("prune schedules reach the same mask without fine-tuning") {
  const Dataset d = small_data(11);
  CompressConfig cfg;
  cfg.train.depth = 2;
  cfg.train.hidden = 4;
  cfg.train.epochs = 3;
  const ObliqueTree dense = train(d, cfg.train);
  cfg.sparsity = 0.75;
  cfg.share_bits = 0;
  cfg.fine_tune_enabled = false;
  cfg.prune_rounds = 1;
  const auto once = compress_pipeline(dense, d, nullptr, cfg).tree;
  for (PruneSchedule sched : {PruneSchedule::Linear, PruneSchedule::Cubic}) {
    cfg.prune_schedule = sched;
    cfg.prune_rounds = 4;
    const auto stepped = compress_pipeline(dense, d, nullptr, cfg).tree;
    CHECK(stepped.compression.kept == once.compression.kept);
    CHECK(w1_values(stepped) == w1_values(once));
  }

  nlohmann::json j = cfg;
  CHECK(j["prune_schedule"] == "cubic");
  CHECK(j.get<CompressConfig>().prune_schedule == PruneSchedule::Cubic);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"prune_schedule": "steep"})").get<CompressConfig>(), Error);
}
