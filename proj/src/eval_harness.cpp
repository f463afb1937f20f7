#include "peot/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json_util.hpp"
#include "peot/cost_regularizer.hpp"
#include "peot/error.hpp"

namespace peot {

namespace {

double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_from(double tp, double fp, double fn) {
  const double p = ratio_or_zero(tp, tp + fp);
  const double r = ratio_or_zero(tp, tp + fn);
  return ratio_or_zero(2.0 * p * r, p + r);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

nlohmann::json Metrics::to_json() const {
  return {{"num_classes", num_classes}, {"accuracy", accuracy},       {"f1", f1},
          {"sensitivity", sensitivity}, {"specificity", specificity}, {"confusion", confusion}};
}

Metrics compute_metrics(std::span<const int> labels, std::span<const int> predictions, int num_classes) {
  if (labels.empty()) throw_invalid("metrics need at least one sample");
  if (labels.size() != predictions.size())
    throw_invalid("metrics: " + std::to_string(labels.size()) + " labels vs " +
                  std::to_string(predictions.size()) + " predictions");
  if (num_classes < 2) throw_invalid("metrics need at least two classes");
  Metrics m;
  m.num_classes = num_classes;
  const auto c = static_cast<std::size_t>(num_classes);
  m.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predictions[i] < 0 || predictions[i] >= num_classes)
      throw_invalid("metrics: class index outside [0, " + std::to_string(num_classes) + ")");
    ++m.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  const auto n = static_cast<double>(labels.size());
  double correct = 0.0;
  for (std::size_t k = 0; k < c; ++k) correct += static_cast<double>(m.confusion[k][k]);
  m.accuracy = correct / n;

  auto class_counts = [&](std::size_t k, double& tp, double& fp, double& fn, double& tn) {
    tp = static_cast<double>(m.confusion[k][k]);
    fp = fn = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += static_cast<double>(m.confusion[j][k]);
      fn += static_cast<double>(m.confusion[k][j]);
    }
    tn = n - tp - fp - fn;
  };

  double tp, fp, fn, tn;
  if (num_classes == 2) {
    class_counts(1, tp, fp, fn, tn);
    m.f1 = f1_from(tp, fp, fn);
    m.sensitivity = ratio_or_zero(tp, tp + fn);
    m.specificity = ratio_or_zero(tn, tn + fp);
    return m;
  }
  for (std::size_t k = 0; k < c; ++k) {
    class_counts(k, tp, fp, fn, tn);
    m.f1 += f1_from(tp, fp, fn);
    m.sensitivity += ratio_or_zero(tp, tp + fn);
    m.specificity += ratio_or_zero(tn, tn + fp);
  }
  m.f1 /= static_cast<double>(c);
  m.sensitivity /= static_cast<double>(c);
  m.specificity /= static_cast<double>(c);
  return m;
}

std::vector<std::vector<std::size_t>> make_folds(const Dataset& data, int k, std::uint64_t seed) {
  if (k < 2) throw_invalid("cross-validation needs k >= 2");
  const std::size_t n = data.size();
  const auto folds_n = static_cast<std::size_t>(k);
  if (n < folds_n)
    throw_invalid("dataset has " + std::to_string(n) + " samples, fewer than " + std::to_string(k) + " folds");
  std::vector<std::vector<std::size_t>> folds(folds_n);

  if (data.temporal) {
    for (std::size_t f = 0; f < folds_n; ++f)
      for (std::size_t i = f * n / folds_n; i < (f + 1) * n / folds_n; ++i) folds[f].push_back(i);
    return folds;
  }

  std::mt19937_64 rng(data.fingerprint() ^ seed);
  const int classes = std::max(data.num_classes, 1);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::size_t next = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) {
      folds[next].push_back(i);
      next = (next + 1) % folds_n;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

FoldSplit split_fold(const Dataset& data, const std::vector<std::vector<std::size_t>>& folds, std::size_t fold) {
  if (fold >= folds.size()) throw_invalid("fold index out of range");
  std::vector<std::size_t> train_idx;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != fold) train_idx.insert(train_idx.end(), folds[f].begin(), folds[f].end());
  std::sort(train_idx.begin(), train_idx.end());
  return {data.subset(train_idx), data.subset(folds[fold])};
}

nlohmann::json CvResult::to_json() const {
  nlohmann::json per_fold = nlohmann::json::array();
  for (const auto& m : folds) per_fold.push_back(m.to_json());
  return {{"folds", per_fold},
          {"mean_f1", mean_f1},
          {"std_f1", std_f1},
          {"mean_accuracy", mean_accuracy},
          {"std_accuracy", std_accuracy}};
}

CvResult cross_validate(const Dataset& data, int k, std::uint64_t seed, const FoldTrainer& trainer) {
  const auto folds = make_folds(data, k, seed);
  CvResult r;
  std::vector<double> f1s, accs;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const FoldSplit split = split_fold(data, folds, f);
    const auto pred = trainer(split.train, split.test, f);
    r.folds.push_back(compute_metrics(split.test.labels, pred, std::max(2, data.num_classes)));
    f1s.push_back(r.folds.back().f1);
    accs.push_back(r.folds.back().accuracy);
  }
  r.mean_f1 = mean_of(f1s);
  r.std_f1 = std_of(f1s);
  r.mean_accuracy = mean_of(accs);
  r.std_accuracy = std_of(accs);
  return r;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) throw_invalid("mean of an empty sequence");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw_invalid("spearman needs two equal-length sequences of size >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = {{"lambdas", c.lambdas}, {"depths", c.depths},   {"folds", c.folds},
       {"seed", c.seed},       {"train", c.train},     {"prune_threshold", c.prune_threshold}};
}

void from_json(const nlohmann::json& j, SweepConfig& c) {
  const std::string ctx = "sweep config";
  detail::check_keys(j, {"lambdas", "depths", "folds", "seed", "train", "prune_threshold"}, ctx);
  detail::read_opt(j, "lambdas", c.lambdas, ctx);
  detail::read_opt(j, "depths", c.depths, ctx);
  detail::read_opt(j, "folds", c.folds, ctx);
  detail::read_opt(j, "seed", c.seed, ctx);
  detail::read_opt(j, "prune_threshold", c.prune_threshold, ctx);
  if (j.contains("train")) from_json(j["train"], c.train);
}

std::string SweepResult::to_csv() const {
  std::string out = "lambda,depth,fold,f1,power,latency\n";
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    out += fmt_double(r.lambda) + "," + std::to_string(r.depth) + "," + std::to_string(r.fold) + "," +
           fmt_double(r.f1) + "," + fmt_double(r.power) + "," + std::to_string(r.latency) + "\n";
  }
  return out;
}

nlohmann::json SweepResult::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back({{"lambda", p.lambda},
                   {"depth", p.depth},
                   {"mean_f1", p.mean_f1},
                   {"std_f1", p.std_f1},
                   {"mean_power", p.mean_power},
                   {"latency", p.latency},
                   {"failed_folds", p.failed_folds}});
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& r : rows)
    if (!r.error.empty()) errors.push_back({{"lambda", r.lambda}, {"depth", r.depth}, {"fold", r.fold}, {"error", r.error}});
  return {{"points", pts}, {"errors", errors}, {"power_unit", "cheapest feature = 1"}};
}

std::string SweepResult::gnuplot_script(const std::string& csv_name) const {
  std::string s;
  s += "set datafile separator ','\n";
  s += "set key autotitle columnhead\n";
  s += "set xlabel 'normalized deployed power'\n";
  s += "set ylabel 'F1'\n";
  s += "plot '" + csv_name + "' using 5:4:2 with points palette pointtype 7 title 'fold results (colour = depth)'\n";
  return s;
}

SweepResult tradeoff_sweep(const Dataset& data, const SweepConfig& config) {
  if (config.lambdas.empty() || config.depths.empty()) throw_invalid("sweep grids must be nonempty");
  if (data.costs.size() != data.num_features()) throw_invalid("sweep needs per-feature costs");
  const double unit = *std::min_element(data.costs.begin(), data.costs.end());
  const auto folds = make_folds(data, config.folds, config.seed);
  std::vector<FoldSplit> splits;
  for (std::size_t f = 0; f < folds.size(); ++f) splits.push_back(split_fold(data, folds, f));

  std::vector<double> lambdas = config.lambdas;
  std::vector<int> depths = config.depths;
  std::sort(lambdas.begin(), lambdas.end());
  std::sort(depths.begin(), depths.end());

  SweepResult result;
  for (double lambda : lambdas)
    for (int depth : depths) {
      SweepPoint p;
      p.lambda = lambda;
      p.depth = depth;
      p.latency = depth;
      std::vector<double> f1s, powers;
      for (std::size_t f = 0; f < splits.size(); ++f) {
        SweepRow row;
        row.lambda = lambda;
        row.depth = depth;
        row.fold = static_cast<int>(f);
        row.latency = depth;
        try {
          TrainConfig tc = config.train;
          tc.depth = depth;
          tc.lambda = lambda;
          tc.seed = config.train.seed + f;
          const ObliqueTree tree = train(splits[f].train, tc);
          const auto pred = predict_labels(tree, splits[f].test.features);
          row.f1 = compute_metrics(splits[f].test.labels, pred, std::max(2, data.num_classes)).f1;
          row.power = deployed_power(tree, splits[f].test.features, data.costs, config.prune_threshold) / unit;
          f1s.push_back(row.f1);
          powers.push_back(row.power);
        } catch (const std::exception& e) {
          row.error = e.what();
          ++p.failed_folds;
        }
        result.rows.push_back(row);
      }
      if (!f1s.empty()) {
        p.mean_f1 = mean_of(f1s);
        p.std_f1 = std_of(f1s);
        p.mean_power = mean_of(powers);
      }
      result.points.push_back(p);
    }
  return result;
}

TrainConfig cost_aware_train_defaults() {
  TrainConfig t;
  t.optimizer = OptimizerKind::Adam;
  t.learning_rate = 0.01;
  t.epochs = 60;
  t.final_lr_fraction = 0.1;
  return t;
}

BenchmarkConfig BenchmarkConfig::defaults() {
  BenchmarkConfig c;
  c.gbt.n_trees = 100;
  c.gbt.max_depth = 4;
  c.gbt.learning_rate = 0.1;
  c.gbt.min_samples_leaf = 20;
  c.pegb = c.gbt;
  c.pegb.cost_lambda = 1.0;
  c.peot.train = cost_aware_train_defaults();
  c.peot.train.depth = 4;
  c.peot.train.hidden = 4;
  c.peot.train.lambda = 0.03;
  c.peot.sparsity = 0.9;
  c.peot.share_bits = 4;
  return c;
}

void to_json(nlohmann::json& j, const BenchmarkConfig& c) {
  j = {{"folds", c.folds},
       {"seed", c.seed},
       {"prune_threshold", c.prune_threshold},
       {"gbt", c.gbt},
       {"pegb", c.pegb},
       {"pegb_threshold_bits", c.pegb_threshold_bits},
       {"pegb_leaf_bits", c.pegb_leaf_bits},
       {"peot", c.peot}};
}

void from_json(const nlohmann::json& j, BenchmarkConfig& c) {
  const std::string ctx = "benchmark config";
  detail::check_keys(j, {"folds", "seed", "prune_threshold", "gbt", "pegb", "pegb_threshold_bits", "pegb_leaf_bits", "peot"},
                     ctx);
  detail::read_opt(j, "folds", c.folds, ctx);
  detail::read_opt(j, "seed", c.seed, ctx);
  detail::read_opt(j, "prune_threshold", c.prune_threshold, ctx);
  detail::read_opt(j, "pegb_threshold_bits", c.pegb_threshold_bits, ctx);
  detail::read_opt(j, "pegb_leaf_bits", c.pegb_leaf_bits, ctx);
  if (j.contains("gbt")) from_json(j["gbt"], c.gbt);
  if (j.contains("pegb")) from_json(j["pegb"], c.pegb);
  if (j.contains("peot")) from_json(j["peot"], c.peot);
}

const MethodSummary& BenchmarkReport::row(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw_invalid("benchmark report has no row '" + method + "'");
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json out_rows = nlohmann::json::array();
  for (const auto& r : rows)
    out_rows.push_back({{"method", r.method},
                        {"size_accounting", r.size_accounting},
                        {"f1", r.f1},
                        {"size_bits", r.size_bits},
                        {"power", r.power},
                        {"mean_f1", r.mean_f1},
                        {"std_f1", r.std_f1},
                        {"mean_size_bits", r.mean_size_bits},
                        {"mean_power", r.mean_power},
                        {"size_normalized", r.size_normalized},
                        {"power_normalized", r.power_normalized}});
  return {{"provenance", provenance}, {"dataset_fingerprint", dataset_fingerprint}, {"rows", out_rows}, {"notes", notes}};
}

std::string BenchmarkReport::to_csv() const {
  std::string out = "method,size_accounting,mean_f1,std_f1,mean_size_bits,mean_power,size_normalized,power_normalized\n";
  for (const auto& r : rows)
    out += r.method + "," + r.size_accounting + "," + fmt_double(r.mean_f1) + "," + fmt_double(r.std_f1) + "," +
           fmt_double(r.mean_size_bits) + "," + fmt_double(r.mean_power) + "," + fmt_double(r.size_normalized) + "," +
           fmt_double(r.power_normalized) + "\n";
  return out;
}

void finalize_rows(std::vector<MethodSummary>& rows) {
  if (rows.empty()) throw_invalid("benchmark needs at least one method");
  for (auto& r : rows) {
    r.mean_f1 = mean_of(r.f1);
    r.std_f1 = std_of(r.f1);
    r.mean_size_bits = mean_of(r.size_bits);
    r.mean_power = mean_of(r.power);
  }
  const double size0 = rows[0].mean_size_bits, power0 = rows[0].mean_power;
  for (auto& r : rows) {
    r.size_normalized = ratio_or_zero(r.mean_size_bits, size0);
    r.power_normalized = ratio_or_zero(r.mean_power, power0);
  }
  rows[0].size_normalized = 1.0;
  rows[0].power_normalized = 1.0;
}

BenchmarkReport benchmark_report(const Dataset& data, const BenchmarkConfig& config) {
  if (data.costs.size() != data.num_features()) throw_invalid("benchmark needs per-feature costs");
  const auto folds = make_folds(data, config.folds, config.seed);
  const int classes = std::max(2, data.num_classes);

  std::vector<MethodSummary> rows(3);
  rows[0].method = "gbt";
  rows[0].size_accounting = size_accounting_name(SizeAccounting::DenseFloat32);
  rows[1].method = "pegb";
  rows[1].size_accounting = size_accounting_name(SizeAccounting::QuantizedGbt);
  rows[2].method = "peot";
  rows[2].size_accounting = size_accounting_name(SizeAccounting::PrunedShared);

  for (std::size_t f = 0; f < folds.size(); ++f) {
    const FoldSplit split = split_fold(data, folds, f);
    const Matrix& xt = split.test.features;

    const GbtModel gbt = train_gbt(split.train, config.gbt);
    rows[0].f1.push_back(compute_metrics(split.test.labels, predict_gbt_labels(gbt, xt), classes).f1);
    rows[0].size_bits.push_back(static_cast<double>(model_size_bits(gbt, SizeAccounting::DenseFloat32).total_bits));
    rows[0].power.push_back(gbt_deployed_power(gbt, xt, data.costs));

    const GbtModel pegb =
        quantize_gbt(train_gbt(split.train, config.pegb), config.pegb_threshold_bits, config.pegb_leaf_bits);
    rows[1].f1.push_back(compute_metrics(split.test.labels, predict_gbt_labels(pegb, xt), classes).f1);
    rows[1].size_bits.push_back(static_cast<double>(model_size_bits(pegb, SizeAccounting::QuantizedGbt).total_bits));
    rows[1].power.push_back(gbt_deployed_power(pegb, xt, data.costs));

    CompressConfig cc = config.peot;
    cc.train.seed = config.peot.train.seed + f;
    const ObliqueTree dense = train(split.train, cc.train);
    const ObliqueTree peot = compress_pipeline(dense, split.train, &split.test, cc).tree;
    rows[2].f1.push_back(compute_metrics(split.test.labels, predict_labels(peot, xt), classes).f1);
    rows[2].size_bits.push_back(static_cast<double>(model_size_bits(peot, SizeAccounting::PrunedShared).total_bits));
    rows[2].power.push_back(deployed_power(peot, xt, data.costs, config.prune_threshold));
  }
  finalize_rows(rows);

  BenchmarkReport report;
  report.provenance = data.provenance;
  report.dataset_fingerprint = fingerprint_hex(data.fingerprint());
  report.rows = std::move(rows);
  report.notes.push_back("sizes and deployed power are normalized to the gbt row");
  const auto& pegb = report.rows[1];
  const auto& peot = report.rows[2];
  report.notes.push_back(std::string("peot vs pegb: size ") + (peot.mean_size_bits <= pegb.mean_size_bits ? "<=" : ">") +
                         ", power " + (peot.mean_power <= pegb.mean_power ? "<=" : ">") + ", f1 " +
                         (peot.mean_f1 >= pegb.mean_f1 ? ">=" : "<"));
  return report;
}

}  // namespace peot
