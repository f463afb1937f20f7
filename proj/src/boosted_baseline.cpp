#include "peot/boosted_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_util.hpp"
#include "peot/compression.hpp"
#include "peot/error.hpp"

namespace peot {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

double logistic_loss(std::span<const double> margin, std::span<const int> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < margin.size(); ++i) {
    // log(1 + exp(-s m)) with s = +-1
    const double m = y[i] ? margin[i] : -margin[i];
    total += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  return total / static_cast<double>(margin.size());
}

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const Matrix& x, const std::vector<std::vector<std::size_t>>& sorted,
             std::span<const double> costs, const GbtConfig& config)
      : x_(x), sorted_(sorted), costs_(costs), config_(config), owner_(static_cast<std::size_t>(x.rows()), -1) {}

  AxisTree grow(std::span<const double> g, std::span<const double> h) {
    AxisTree tree;
    std::vector<std::uint8_t> used(static_cast<std::size_t>(x_.cols()), 0);
    std::fill(owner_.begin(), owner_.end(), 0);

    struct Pending {
      int node;
      int depth;
    };
    tree.nodes.push_back({});
    std::vector<Pending> queue{{0, 0}};
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const auto [id, depth] = queue[qi];
      double gsum = 0.0, hsum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < owner_.size(); ++i)
        if (owner_[i] == id) {
          gsum += g[i];
          hsum += h[i];
          ++count;
        }
      tree.nodes[static_cast<std::size_t>(id)].weight = -gsum / (hsum + config_.lambda_reg);
      if (depth >= config_.max_depth) continue;
      const SplitCandidate best = find_split(id, gsum, hsum, count, g, h, used);
      if (best.feature < 0) continue;

      used[static_cast<std::size_t>(best.feature)] = 1;
      const int left = static_cast<int>(tree.nodes.size());
      const int right = left + 1;
      auto& node = tree.nodes[static_cast<std::size_t>(id)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left;
      node.right = right;
      node.weight = 0.0;
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      for (std::size_t i = 0; i < owner_.size(); ++i)
        if (owner_[i] == id)
          owner_[i] = x_(static_cast<Eigen::Index>(i), best.feature) <= best.threshold ? left : right;
      queue.push_back({left, depth + 1});
      queue.push_back({right, depth + 1});
    }
    return tree;
  }

 private:
  SplitCandidate find_split(int id, double gsum, double hsum, std::size_t count, std::span<const double> g,
                            std::span<const double> h, const std::vector<std::uint8_t>& used) const {
    SplitCandidate best;
    const auto msl = static_cast<std::size_t>(config_.min_samples_leaf);
    if (count < 2 * msl) return best;
    const double lam = config_.lambda_reg;
    const double parent = gsum * gsum / (hsum + lam);
    std::vector<std::size_t> members;
    members.reserve(count);
    for (Eigen::Index f = 0; f < x_.cols(); ++f) {
      members.clear();
      for (std::size_t i : sorted_[static_cast<std::size_t>(f)])
        if (owner_[i] == id) members.push_back(i);
      const double penalty =
          (config_.cost_lambda > 0.0 && !used[static_cast<std::size_t>(f)]) ? config_.cost_lambda * costs_[static_cast<std::size_t>(f)] : 0.0;
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < members.size(); ++k) {
        gl += g[members[k]];
        hl += h[members[k]];
        const std::size_t nl = k + 1;
        if (nl < msl || members.size() - nl < msl) continue;
        const double a = x_(static_cast<Eigen::Index>(members[k]), f);
        const double b = x_(static_cast<Eigen::Index>(members[k + 1]), f);
        if (!(a < b)) continue;
        const double gr = gsum - gl, hr = hsum - hl;
        const double gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - penalty;
        if (gain > best.gain) {
          double t = 0.5 * (a + b);
          if (!(t < b)) t = a;
          best = {static_cast<int>(f), t, gain};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  std::span<const double> costs_;
  const GbtConfig& config_;
  std::vector<int> owner_;
};

}  // namespace

std::size_t AxisTree::num_internal() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return !n.is_leaf(); }));
}

std::size_t AxisTree::num_leaves() const { return nodes.size() - num_internal(); }

int AxisTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) {
      best = std::max(best, d[i]);
      continue;
    }
    d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
    d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
  }
  return best;
}

int AxisTree::leaf_for(std::span<const double> x, int* visited) const {
  int n = 0, steps = 0;
  while (!nodes[static_cast<std::size_t>(n)].is_leaf()) {
    const auto& node = nodes[static_cast<std::size_t>(n)];
    n = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    ++steps;
  }
  if (visited) *visited = steps;
  return n;
}

double GbtEnsemble::margin(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.nodes[static_cast<std::size_t>(t.leaf_for(x))].weight;
  return base_score + learning_rate * sum;
}

std::size_t GbtModel::num_trees() const {
  std::size_t n = 0;
  for (const auto& e : ensembles) n += e.trees.size();
  return n;
}

void GbtConfig::validate() const {
  if (n_trees < 1) throw_config("n_trees must be >= 1");
  if (max_depth < 1) throw_config("max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw_config("learning_rate must lie in (0, 1]");
  if (!(lambda_reg >= 0.0)) throw_config("lambda_reg must be >= 0");
  if (min_samples_leaf < 1) throw_config("min_samples_leaf must be >= 1");
  if (!(cost_lambda >= 0.0)) throw_config("cost_lambda must be >= 0");
}

void to_json(nlohmann::json& j, const GbtConfig& c) {
  j = {{"n_trees", c.n_trees},       {"max_depth", c.max_depth},
       {"learning_rate", c.learning_rate}, {"lambda_reg", c.lambda_reg},
       {"min_samples_leaf", c.min_samples_leaf}, {"cost_lambda", c.cost_lambda}};
}

void from_json(const nlohmann::json& j, GbtConfig& c) {
  const std::string ctx = "gbt config";
  detail::check_keys(j, {"n_trees", "max_depth", "learning_rate", "lambda_reg", "min_samples_leaf", "cost_lambda"}, ctx);
  detail::read_opt(j, "n_trees", c.n_trees, ctx);
  detail::read_opt(j, "max_depth", c.max_depth, ctx);
  detail::read_opt(j, "learning_rate", c.learning_rate, ctx);
  detail::read_opt(j, "lambda_reg", c.lambda_reg, ctx);
  detail::read_opt(j, "min_samples_leaf", c.min_samples_leaf, ctx);
  detail::read_opt(j, "cost_lambda", c.cost_lambda, ctx);
}

GbtEnsemble train_binary_ensemble(const Matrix& x, std::span<const int> targets, std::span<const double> costs,
                                  const GbtConfig& config, std::vector<std::string>* warnings,
                                  std::vector<double>* round_loss) {
  config.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0) throw_invalid("cannot train on an empty dataset");
  if (targets.size() != n) throw_invalid("target count differs from row count");
  if (costs.size() != static_cast<std::size_t>(x.cols())) throw_invalid("cost vector length differs from feature count");

  GbtEnsemble ens;
  ens.learning_rate = config.learning_rate;
  const double positives = static_cast<double>(std::count(targets.begin(), targets.end(), 1));
  const double rate = std::clamp(positives / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  ens.base_score = std::log(rate / (1.0 - rate));
  if (positives == 0.0 || positives == static_cast<double>(n)) {
    if (warnings) warnings->push_back("single-class targets: model reduces to its base score");
    return ens;
  }

  std::vector<std::vector<std::size_t>> sorted(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& order = sorted[static_cast<std::size_t>(f)];
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return x(static_cast<Eigen::Index>(a), f) < x(static_cast<Eigen::Index>(b), f);
    });
  }

  std::vector<double> margin(n, ens.base_score), g(n), h(n);
  TreeGrower grower(x, sorted, costs, config);
  for (int round = 0; round < config.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      g[i] = p - targets[i];
      h[i] = std::max(p * (1.0 - p), 1e-16);
    }
    AxisTree tree = grower.grow(g, h);
    for (std::size_t i = 0; i < n; ++i) {
      const int leaf = tree.leaf_for({x.data() + static_cast<Eigen::Index>(i) * x.cols(), static_cast<std::size_t>(x.cols())});
      margin[i] += config.learning_rate * tree.nodes[static_cast<std::size_t>(leaf)].weight;
    }
    ens.trees.push_back(std::move(tree));
    if (round_loss) round_loss->push_back(logistic_loss(margin, targets));
  }
  return ens;
}

GbtModel train_gbt(const Dataset& data, const GbtConfig& config, GbtTrainTrace* trace) {
  config.validate();
  data.validate();
  if (data.size() == 0) throw_invalid("cannot train on an empty dataset");
  GbtModel model;
  model.num_features = static_cast<int>(data.num_features());
  model.num_classes = std::max(2, data.num_classes);
  model.cost_aware = config.cost_lambda > 0.0;
  model.feature_min.resize(data.num_features());
  model.feature_max.resize(data.num_features());
  for (Eigen::Index f = 0; f < data.features.cols(); ++f) {
    model.feature_min[static_cast<std::size_t>(f)] = data.features.col(f).minCoeff();
    model.feature_max[static_cast<std::size_t>(f)] = data.features.col(f).maxCoeff();
  }
  const std::vector<double> ones(data.num_features(), 1.0);
  const std::span<const double> costs = data.costs.empty() ? std::span<const double>(ones) : data.costs;

  const int heads = model.num_classes == 2 ? 1 : model.num_classes;
  if (trace) trace->round_loss.assign(static_cast<std::size_t>(heads), {});
  for (int c = 0; c < heads; ++c) {
    const int positive = heads == 1 ? 1 : c;
    std::vector<int> targets(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) targets[i] = data.labels[i] == positive ? 1 : 0;
    model.ensembles.push_back(train_binary_ensemble(data.features, targets, costs, config, &model.warnings,
                                                    trace ? &trace->round_loss[static_cast<std::size_t>(c)] : nullptr));
  }
  return model;
}

GbtPrediction predict_gbt(const GbtModel& model, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(model.num_features))
    throw_invalid("input has " + std::to_string(x.size()) + " features, model expects " +
                  std::to_string(model.num_features));
  GbtPrediction p;
  for (const auto& e : model.ensembles) {
    p.margins.push_back(e.margin(x));
    p.probabilities.push_back(sigmoid(p.margins.back()));
  }
  if (model.ensembles.size() == 1) {
    p.label = p.probabilities[0] > 0.5 ? 1 : 0;
  } else {
    p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
  }
  return p;
}

std::vector<int> predict_gbt_labels(const GbtModel& model, const Matrix& x) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    out.push_back(predict_gbt(model, {x.data() + r * x.cols(), static_cast<std::size_t>(x.cols())}).label);
  return out;
}

GbtModel quantize_gbt(const GbtModel& model, int threshold_bits, int leaf_bits) {
  if (threshold_bits < 1 || threshold_bits > 32 || leaf_bits < 1 || leaf_bits > 32)
    throw_invalid("quantization bits must lie in [1, 32]");
  GbtModel q = model;
  auto& info = q.quantization;
  info.enabled = true;
  info.threshold_bits = threshold_bits;
  info.leaf_bits = leaf_bits;
  info.threshold_lo = model.feature_min;
  info.threshold_hi = model.feature_max;

  double lo = INFINITY, hi = -INFINITY;
  for (const auto& e : model.ensembles)
    for (const auto& t : e.trees)
      for (const auto& n : t.nodes)
        if (n.is_leaf()) {
          lo = std::min(lo, n.weight);
          hi = std::max(hi, n.weight);
        }
  info.leaf_lo = lo;
  info.leaf_hi = hi;

  for (auto& e : q.ensembles)
    for (auto& t : e.trees)
      for (auto& n : t.nodes) {
        if (n.is_leaf()) {
          if (lo < hi) n.weight = quantize_value(n.weight, QuantFormat{leaf_bits, lo, hi});
        } else {
          const auto f = static_cast<std::size_t>(n.feature);
          if (info.threshold_lo[f] < info.threshold_hi[f])
            n.threshold = quantize_value(n.threshold, QuantFormat{threshold_bits, info.threshold_lo[f], info.threshold_hi[f]});
        }
      }
  return q;
}

std::vector<std::size_t> gbt_deployed_features(const GbtModel& model, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(model.num_features))
    throw_invalid("input has " + std::to_string(x.size()) + " features, model expects " +
                  std::to_string(model.num_features));
  std::vector<std::uint8_t> used(x.size(), 0);
  for (const auto& e : model.ensembles)
    for (const auto& t : e.trees) {
      int n = 0;
      while (!t.nodes[static_cast<std::size_t>(n)].is_leaf()) {
        const auto& node = t.nodes[static_cast<std::size_t>(n)];
        used[static_cast<std::size_t>(node.feature)] = 1;
        n = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
      }
    }
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < used.size(); ++f)
    if (used[f]) out.push_back(f);
  return out;
}

double gbt_deployed_power(const GbtModel& model, const Matrix& x, std::span<const double> costs) {
  if (costs.size() != static_cast<std::size_t>(model.num_features)) throw_invalid("cost vector length differs from feature count");
  if (x.rows() == 0) throw_invalid("deployed power needs at least one sample");
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (std::size_t f : gbt_deployed_features(model, {x.data() + r * x.cols(), static_cast<std::size_t>(x.cols())}))
      total += costs[f];
  return total / static_cast<double>(x.rows());
}

}  // namespace peot
