#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "peot/error.hpp"
#include "peot/eval_harness.hpp"
#include "peot/synth.hpp"

using namespace peot;

namespace {

Dataset labelled(std::size_t n, int classes, std::uint64_t seed) {
  Dataset d;
  d.features = oracle::random_matrix(n, 3, seed);
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(classes)));
  d.num_classes = classes;
  d.costs = {1, 2, 3};
  return d;
}

}  // namespace

TEST_CASE("binary metrics") {
  const std::vector<int> y{1, 0, 1, 1, 0}, p{1, 0, 0, 1, 1};
  const Metrics m = compute_metrics(y, p, 2);
  CHECK(m.confusion[1][1] == 2);
  CHECK(m.confusion[1][0] == 1);
  CHECK(m.confusion[0][1] == 1);
  CHECK(m.confusion[0][0] == 1);
  CHECK(m.accuracy == doctest::Approx(0.6));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.sensitivity == doctest::Approx(2.0 / 3.0));
  CHECK(m.specificity == doctest::Approx(0.5));

  const std::vector<int> perfect{1, 1, 0};
  CHECK(compute_metrics(perfect, perfect, 2).f1 == 1.0);
  // No positives anywhere: every rate with a zero denominator is 0.
  const std::vector<int> zeros{0, 0, 0};
  const Metrics z = compute_metrics(zeros, zeros, 2);
  CHECK(z.f1 == 0.0);
  CHECK(z.sensitivity == 0.0);
  CHECK(z.specificity == 1.0);
}

TEST_CASE("multiclass metrics use macro averages") {
  const std::vector<int> y{0, 0, 1, 1, 2, 2}, p{0, 1, 1, 1, 2, 0};
  const Metrics m = compute_metrics(y, p, 3);
  // per-class F1: c0 p=1/2 r=1/2 -> 1/2; c1 p=2/3 r=1 -> 4/5; c2 p=1 r=1/2 -> 2/3
  CHECK(m.f1 == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0));
  CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
  std::size_t total = 0;
  for (const auto& r : m.confusion) total += std::accumulate(r.begin(), r.end(), std::size_t{0});
  CHECK(total == y.size());
  CHECK_THROWS_AS(compute_metrics(y, std::vector<int>{0}, 3), Error);
  CHECK_THROWS_AS(compute_metrics(y, std::vector<int>{0, 0, 0, 0, 0, 3}, 3), Error);
}

TEST_CASE("folds partition the data") {
  for (int k : {2, 5, 7}) {
    const Dataset d = labelled(103, 3, 5);
    const auto folds = make_folds(d, k, 11);
    REQUIRE(folds.size() == static_cast<std::size_t>(k));
    std::vector<int> seen(d.size(), 0);
    std::size_t lo = d.size(), hi = 0;
    for (const auto& f : folds) {
      for (auto i : f) ++seen[i];
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      // stratified: every class present in every fold
      std::set<int> cls;
      for (auto i : f) cls.insert(d.labels[i]);
      CHECK(cls.size() == 3);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(hi - lo <= 3);
    CHECK(make_folds(d, k, 11) == folds);
  }
  const Dataset d = labelled(40, 2, 1);
  CHECK(make_folds(d, 5, 1) != make_folds(d, 5, 2));
  CHECK_THROWS_AS(make_folds(d, 1, 1), Error);
  CHECK_THROWS_AS(make_folds(d, 41, 1), Error);
  const auto loo = make_folds(d, 40, 3);
  for (const auto& f : loo) CHECK(f.size() == 1);
}

TEST_CASE("temporal folds are contiguous blocks") {
  Dataset d = labelled(23, 2, 2);
  d.temporal = true;
  const auto folds = make_folds(d, 4, 9);
  std::size_t next = 0;
  for (const auto& f : folds)
    for (auto i : f) CHECK(i == next++);
  CHECK(next == 23);
  const FoldSplit s = split_fold(d, folds, 1);
  CHECK(s.train.size() + s.test.size() == 23);
  CHECK(s.test.features(0, 0) == d.features(static_cast<Eigen::Index>(folds[1][0]), 0));
}

TEST_CASE("cross validation reports the mean over folds") {
  const Dataset d = labelled(50, 2, 4);
  const CvResult r = cross_validate(d, 5, 1, [](const Dataset&, const Dataset& test, std::size_t fold) {
    // Perfect on even folds, inverted on odd ones.
    std::vector<int> p = test.labels;
    if (fold % 2) for (auto& v : p) v = 1 - v;
    return p;
  });
  CHECK(r.folds.size() == 5);
  CHECK(r.mean_f1 == doctest::Approx(3.0 / 5.0));
  CHECK(r.std_f1 == doctest::Approx(std::sqrt(0.24)));
}

TEST_CASE("summary statistics") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(mean_of(v) == 2.5);
  CHECK(std_of(v) == doctest::Approx(std::sqrt(1.25)));
  const std::vector<double> a{1, 2, 3, 4, 5}, b{5, 6, 7, 8, 100}, c{3, 2, 1, 0, -1};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
  const std::vector<double> ties{1, 1, 2, 2, 3};
  // ranks 1.5 1.5 3.5 3.5 5 against 1..5
  CHECK(spearman(a, ties) == doctest::Approx(0.9486832980505138));
  const std::vector<double> flat{2, 2, 2, 2, 2};
  CHECK(spearman(a, flat) == 0.0);
}

TEST_CASE("sweep grid") {
  const Dataset d = synth_dataset(SynthTask::Seizure, 200, 7);
  SweepConfig c;
  c.lambdas = {0.1, 0.0};
  c.depths = {2};
  c.folds = 3;
  c.train.hidden = 2;
  c.train.epochs = 3;
  const SweepResult r = tradeoff_sweep(d, c);
  CHECK(r.rows.size() == 2 * 1 * 3);
  CHECK(r.points.size() == 2);
  CHECK(r.points[0].lambda == 0.0);
  for (const auto& row : r.rows) {
    CHECK(row.error.empty());
    CHECK(row.latency == row.depth);
    CHECK(row.power >= 0.0);
  }
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("lambda,depth,fold,f1,power,latency\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(tradeoff_sweep(d, c).to_csv() == csv);
}

TEST_CASE("benchmark rows are normalized to the first") {
  std::vector<MethodSummary> rows(2);
  rows[0].f1 = {0.5, 0.7};
  rows[0].size_bits = {100, 300};
  rows[0].power = {4, 4};
  rows[1].f1 = {0.6, 0.6};
  rows[1].size_bits = {50, 50};
  rows[1].power = {1, 3};
  finalize_rows(rows);
  CHECK(rows[0].size_normalized == 1.0);
  CHECK(rows[0].power_normalized == 1.0);
  CHECK(rows[1].size_normalized == doctest::Approx(0.25));
  CHECK(rows[1].power_normalized == doctest::Approx(0.5));
  CHECK(rows[0].mean_f1 == doctest::Approx(0.6));
  CHECK(rows[0].std_f1 == doctest::Approx(0.1));
}

TEST_CASE("config round trips") {
  SweepConfig s;
  s.lambdas = {0.5};
  const nlohmann::json js = s;
  CHECK(js.get<SweepConfig>().lambdas == s.lambdas);
  const nlohmann::json jb = BenchmarkConfig::defaults();
  CHECK(jb.get<BenchmarkConfig>().gbt.n_trees == 100);
  CHECK(jb.get<BenchmarkConfig>().pegb.cost_lambda == 1.0);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"lambda": [1]})").get<SweepConfig>(), Error);
}
