#include "peot/soft_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json_util.hpp"
#include "objective.hpp"
#include "peot/cost_regularizer.hpp"
#include "peot/error.hpp"

namespace peot {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

void check_input(const ObliqueTree& tree, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(tree.shape().num_features))
    throw_invalid("input has " + std::to_string(x.size()) + " features, model expects " +
                  std::to_string(tree.shape().num_features));
}

std::vector<double> standardized(const ObliqueTree& tree, std::span<const double> x) {
  check_input(tree, x);
  std::vector<double> z(x.size());
  tree.standardizer.apply(x, z);
  return z;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - m);
    sum += out[c];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

void TreeShape::validate() const {
  if (depth < 1 || depth > 16) throw_invalid("tree depth must lie in [1, 16]");
  if (num_features < 1) throw_invalid("feature count must be >= 1");
  if (num_classes < 2) throw_invalid("class count must be >= 2");
  if (hidden < 1) throw_invalid("hidden width must be >= 1");
}

Standardizer Standardizer::identity(std::size_t num_features) {
  return Standardizer{std::vector<double>(num_features, 0.0), std::vector<double>(num_features, 1.0)};
}

Standardizer Standardizer::fit(const Matrix& x, double min_std) {
  const auto n = static_cast<double>(x.rows());
  if (x.rows() == 0) throw_invalid("cannot fit standardization on an empty dataset");
  Standardizer s;
  s.mean.resize(static_cast<std::size_t>(x.cols()));
  s.scale.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    const double mean = x.col(f).sum() / n;
    const double var = (x.col(f).array() - mean).square().sum() / n;
    s.mean[static_cast<std::size_t>(f)] = mean;
    s.scale[static_cast<std::size_t>(f)] = std::max(std::sqrt(var), min_std);
  }
  return s;
}

void Standardizer::apply(std::span<const double> x, std::span<double> out) const {
  for (std::size_t f = 0; f < x.size(); ++f) out[f] = (x[f] - mean[f]) / scale[f];
}

Matrix Standardizer::apply(const Eigen::Ref<const Matrix>& x) const {
  Matrix z(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index f = 0; f < x.cols(); ++f)
      z(r, f) = (x(r, f) - mean[static_cast<std::size_t>(f)]) / scale[static_cast<std::size_t>(f)];
  return z;
}

ObliqueTree::ObliqueTree(const TreeShape& shape)
    : standardizer(Standardizer::identity(static_cast<std::size_t>(shape.num_features))),
      shape_(shape) {
  shape_.validate();
  params_.assign(shape_.total_params(), 0.0);
}

NodeView ObliqueTree::node(std::size_t n) const {
  const auto h = static_cast<Eigen::Index>(shape_.hidden);
  return NodeView{ConstMatrixMap(params_.data() + shape_.w1_offset(n), h, shape_.num_features),
                  ConstVectorMap(params_.data() + shape_.b1_offset(n), h),
                  ConstVectorMap(params_.data() + shape_.w2_offset(n), h),
                  params_[shape_.b2_offset(n)]};
}

MatrixMap ObliqueTree::w1(std::size_t n) {
  return MatrixMap(params_.data() + shape_.w1_offset(n), shape_.hidden, shape_.num_features);
}

ConstMatrixMap ObliqueTree::w1(std::size_t n) const {
  return ConstMatrixMap(params_.data() + shape_.w1_offset(n), shape_.hidden, shape_.num_features);
}

std::span<double> ObliqueTree::leaf_logits(std::size_t leaf) {
  return std::span<double>(params_).subspan(shape_.leaf_offset(leaf),
                                            static_cast<std::size_t>(shape_.num_classes));
}

std::span<const double> ObliqueTree::leaf_logits(std::size_t leaf) const {
  return std::span<const double>(params_).subspan(shape_.leaf_offset(leaf),
                                                  static_cast<std::size_t>(shape_.num_classes));
}

void ObliqueTree::apply_compression() {
  const std::size_t n = shape_.num_w1_entries();
  if (compression.is_shared()) {
    for (std::size_t e = 0; e < n; ++e) {
      const std::int32_t a = compression.assignment[e];
      params_[shape_.w1_param_index(e)] =
          a < 0 ? 0.0 : compression.centroids[static_cast<std::size_t>(a)];
    }
  } else if (compression.is_pruned()) {
    for (std::size_t e = 0; e < n; ++e)
      if (!compression.kept[e]) params_[shape_.w1_param_index(e)] = 0.0;
  }
}

double routing_probability(const NodeView& node, std::span<const double> z) {
  if (z.size() != static_cast<std::size_t>(node.w1.cols()))
    throw_invalid("input has " + std::to_string(z.size()) + " features, node expects " +
                  std::to_string(node.w1.cols()));
  const ConstVectorMap zv(z.data(), static_cast<Eigen::Index>(z.size()));
  const Vector hidden = (node.w1 * zv + node.b1).cwiseMax(0.0);
  return sigmoid(node.w2.dot(hidden) + node.b2);
}

std::vector<double> node_visit_probabilities(const ObliqueTree& tree, std::span<const double> x) {
  const auto z = standardized(tree, x);
  const std::size_t internal = tree.shape().num_internal();
  std::vector<double> mu(2 * internal + 1, 0.0);
  mu[0] = 1.0;
  for (std::size_t n = 0; n < internal; ++n) {
    const double p = routing_probability(tree.node(n), z);
    mu[2 * n + 1] = mu[n] * (1.0 - p);
    mu[2 * n + 2] = mu[n] * p;
  }
  return mu;
}

std::vector<double> path_probabilities(const ObliqueTree& tree, std::span<const double> x) {
  const auto mu = node_visit_probabilities(tree, x);
  const std::size_t internal = tree.shape().num_internal();
  return std::vector<double>(mu.begin() + static_cast<std::ptrdiff_t>(internal), mu.end());
}

std::vector<double> leaf_distribution(const ObliqueTree& tree, std::size_t leaf) {
  if (leaf >= tree.shape().num_leaves()) throw_invalid("leaf index out of range");
  return softmax(tree.leaf_logits(leaf));
}

std::vector<double> predict_soft(const ObliqueTree& tree, std::span<const double> x) {
  const auto leaves = path_probabilities(tree, x);
  std::vector<double> out(static_cast<std::size_t>(tree.shape().num_classes), 0.0);
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const auto q = leaf_distribution(tree, l);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += leaves[l] * q[c];
  }
  return out;
}

SinglePathResult predict_single_path(const ObliqueTree& tree, std::span<const double> x) {
  const auto z = standardized(tree, x);
  SinglePathResult r;
  std::size_t n = 0;
  for (int level = 0; level < tree.shape().depth; ++level) {
    r.visited.push_back(n);
    const double p = routing_probability(tree.node(n), z);
    n = p > 0.5 ? 2 * n + 2 : 2 * n + 1;
  }
  r.leaf = n - tree.shape().num_internal();
  r.label = static_cast<int>(argmax_first(leaf_distribution(tree, r.leaf)));
  return r;
}

std::vector<int> predict_labels(const ObliqueTree& tree, const Matrix& x) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    out.push_back(predict_single_path(tree, {x.data() + r * x.cols(), static_cast<std::size_t>(x.cols())}).label);
  return out;
}

namespace detail {

ObjectiveSums evaluate_objective(const ObliqueTree& tree, const Eigen::Ref<const Matrix>& x,
                                 std::span<const int> labels, std::span<const double> weights,
                                 std::span<const double> costs, const ObjectiveOptions& options,
                                 std::vector<double>* grad, std::vector<double>* mean_visit) {
  const TreeShape& s = tree.shape();
  const Eigen::Index batch = x.rows();
  if (x.cols() != s.num_features)
    throw_invalid("batch has " + std::to_string(x.cols()) + " features, model expects " +
                  std::to_string(s.num_features));
  if (batch == 0) throw_invalid("empty batch");
  const bool use_ce = options.ce_scale != 0.0;
  if (use_ce && labels.size() != static_cast<std::size_t>(batch))
    throw_invalid("label count differs from batch size");
  if (!weights.empty() && weights.size() != static_cast<std::size_t>(batch))
    throw_invalid("weight count differs from batch size");
  // The penalty value is tracked whenever costs are supplied; it enters the
  // gradient only with a nonzero scale.
  const bool track_penalty = !costs.empty();
  const bool use_penalty = track_penalty && options.penalty_scale != 0.0;
  if (options.penalty_scale != 0.0 && !track_penalty) throw_invalid("penalty requested without a cost vector");
  if (track_penalty) check_costs(costs, static_cast<std::size_t>(s.num_features));

  const std::size_t internal = s.num_internal();
  const std::size_t leaves = s.num_leaves();
  const auto C = static_cast<Eigen::Index>(s.num_classes);

  const Matrix xs = tree.standardizer.apply(x);

  // Forward.
  std::vector<Eigen::MatrixXd> pre(internal);  // B x hidden
  Eigen::MatrixXd prob(batch, static_cast<Eigen::Index>(internal));
  Eigen::MatrixXd mu(batch, static_cast<Eigen::Index>(internal + leaves));
  mu.col(0).setOnes();
  for (std::size_t n = 0; n < internal; ++n) {
    const NodeView node = tree.node(n);
    pre[n] = xs * node.w1.transpose();
    pre[n].rowwise() += node.b1.transpose();
    const Eigen::VectorXd logit = (pre[n].cwiseMax(0.0) * node.w2).array() + node.b2;
    for (Eigen::Index i = 0; i < batch; ++i) {
      const double p = sigmoid(logit(i));
      if (!std::isfinite(logit(i)) || !std::isfinite(p))
        throw_numeric("non-finite routing output at internal node " + std::to_string(n));
      prob(i, static_cast<Eigen::Index>(n)) = p;
    }
    const auto ni = static_cast<Eigen::Index>(n);
    mu.col(2 * ni + 1) = mu.col(ni).cwiseProduct((1.0 - prob.col(ni).array()).matrix());
    mu.col(2 * ni + 2) = mu.col(ni).cwiseProduct(prob.col(ni));
  }

  Eigen::MatrixXd q(static_cast<Eigen::Index>(leaves), C);
  for (std::size_t l = 0; l < leaves; ++l) {
    const auto d = softmax(tree.leaf_logits(l));
    for (Eigen::Index c = 0; c < C; ++c) q(static_cast<Eigen::Index>(l), c) = d[static_cast<std::size_t>(c)];
  }
  const auto leaf_mu = mu.rightCols(static_cast<Eigen::Index>(leaves));
  const Eigen::MatrixXd y = leaf_mu * q;

  std::vector<double> node_cost(internal, 0.0);
  if (track_penalty)
    for (std::size_t n = 0; n < internal; ++n) node_cost[n] = node_feature_cost(tree, n, costs);

  ObjectiveSums sums;
  sums.count = static_cast<std::size_t>(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
    sums.weight_total += w;
    if (use_ce) {
      const int label = labels[static_cast<std::size_t>(i)];
      if (label < 0 || label >= s.num_classes) throw_invalid("label outside [0, C)");
      sums.ce_weighted -= w * std::log(std::max(y(i, label), kLogFloor));
    }
    if (track_penalty)
      for (std::size_t n = 0; n < internal; ++n) sums.penalty += mu(i, static_cast<Eigen::Index>(n)) * node_cost[n];
  }
  if (!std::isfinite(sums.ce_weighted) || !std::isfinite(sums.penalty))
    throw_numeric("non-finite loss in forward pass");

  if (mean_visit) {
    mean_visit->resize(internal);
    for (std::size_t n = 0; n < internal; ++n)
      (*mean_visit)[n] = mu.col(static_cast<Eigen::Index>(n)).mean();
  }
  if (!grad) return sums;

  // Backward.
  grad->assign(s.total_params(), 0.0);
  auto& g = *grad;
  const double inv_batch = 1.0 / static_cast<double>(batch);

  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(batch, C);
  if (use_ce) {
    for (Eigen::Index i = 0; i < batch; ++i) {
      const int label = labels[static_cast<std::size_t>(i)];
      const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
      const double yi = y(i, label);
      if (yi > kLogFloor) dy(i, label) = -options.ce_scale * w / (sums.weight_total * yi);
    }
  }

  const Eigen::MatrixXd dq = leaf_mu.transpose() * dy;  // leaves x C
  for (std::size_t l = 0; l < leaves; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    const double dot = dq.row(li).dot(q.row(li));
    for (Eigen::Index c = 0; c < C; ++c)
      g[s.leaf_offset(l) + static_cast<std::size_t>(c)] = q(li, c) * (dq(li, c) - dot);
  }

  Eigen::MatrixXd dmu(batch, static_cast<Eigen::Index>(internal + leaves));
  dmu.rightCols(static_cast<Eigen::Index>(leaves)) = dy * q.transpose();
  for (std::size_t nn = internal; nn-- > 0;) {
    const auto n = static_cast<Eigen::Index>(nn);
    const auto p = prob.col(n).array();
    const auto left = dmu.col(2 * n + 1).array();
    const auto right = dmu.col(2 * n + 2).array();
    dmu.col(n) = (left * (1.0 - p) + right * p).matrix();
    if (use_penalty && options.penalty_through_routing)
      dmu.col(n).array() += options.penalty_scale * node_cost[nn] * inv_batch;

    const Eigen::VectorXd da = (mu.col(n).array() * (right - left) * p * (1.0 - p)).matrix();
    const NodeView node = tree.node(nn);
    const Eigen::MatrixXd hidden = pre[nn].cwiseMax(0.0);
    Eigen::MatrixXd dpre = da * node.w2.transpose();
    dpre.array() *= (pre[nn].array() > 0.0).cast<double>();

    MatrixMap dw1(g.data() + s.w1_offset(nn), s.hidden, s.num_features);
    dw1.noalias() = dpre.transpose() * xs;
    VectorMap(g.data() + s.b1_offset(nn), s.hidden) = dpre.colwise().sum().transpose();
    VectorMap(g.data() + s.w2_offset(nn), s.hidden) = hidden.transpose() * da;
    g[s.b2_offset(nn)] = da.sum();

    if (use_penalty && options.l1_subgradient) {
      const double scale = options.penalty_scale * mu.col(n).mean();
      const ConstMatrixMap w1 = tree.w1(nn);
      for (Eigen::Index h = 0; h < w1.rows(); ++h)
        for (Eigen::Index f = 0; f < w1.cols(); ++f) {
          const double w = w1(h, f);
          const double sign = (w > 0.0) - (w < 0.0);
          dw1(h, f) += scale * costs[static_cast<std::size_t>(f)] * sign;
        }
    }
  }
  return sums;
}

}  // namespace detail

LossResult loss_and_gradients(const ObliqueTree& tree, const BatchView& batch, double lambda,
                              std::span<const double> costs) {
  if (lambda < 0.0) throw_invalid("lambda must be >= 0");
  LossResult r;
  detail::ObjectiveOptions opt;
  opt.penalty_scale = lambda;
  const auto sums = detail::evaluate_objective(tree, batch.x, batch.labels, batch.weights, costs, opt, &r.gradient);
  r.cross_entropy = sums.ce_mean();
  r.penalty = sums.penalty_mean();
  r.loss = r.cross_entropy + lambda * r.penalty;
  return r;
}

void TrainConfig::validate() const {
  if (depth < 1 || depth > 16) throw_config("depth must lie in [1, 16]");
  if (hidden < 1) throw_config("hidden must be >= 1");
  if (epochs < 1) throw_config("epochs must be >= 1");
  if (batch_size < 1) throw_config("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw_config("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw_config("momentum must lie in [0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw_config("beta2 must lie in (0, 1)");
  if (!(lambda >= 0.0)) throw_config("lambda must be >= 0");
  if (!(init_scale > 0.0)) throw_config("init_scale must be > 0");
  if (!(min_std > 0.0)) throw_config("min_std must be > 0");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) throw_config("final_lr_fraction must lie in (0, 1]");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"depth", c.depth},
       {"hidden", c.hidden},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "momentum"},
       {"momentum", c.momentum},
       {"beta2", c.beta2},
       {"lambda", c.lambda},
       {"seed", c.seed},
       {"init_scale", c.init_scale},
       {"class_weighted", c.class_weighted},
       {"min_std", c.min_std},
       {"proximal_l1", c.proximal_l1},
       {"final_lr_fraction", c.final_lr_fraction},
       {"detach_visit_weights", c.detach_visit_weights}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const std::string ctx = "train config";
  detail::check_keys(j, {"depth", "hidden", "epochs", "batch_size", "learning_rate", "optimizer", "momentum",
                         "beta2", "lambda", "seed", "init_scale", "class_weighted", "min_std", "proximal_l1",
                         "final_lr_fraction", "detach_visit_weights"},
                     ctx);
  detail::read_opt(j, "depth", c.depth, ctx);
  detail::read_opt(j, "hidden", c.hidden, ctx);
  detail::read_opt(j, "epochs", c.epochs, ctx);
  detail::read_opt(j, "batch_size", c.batch_size, ctx);
  detail::read_opt(j, "learning_rate", c.learning_rate, ctx);
  if (j.contains("optimizer")) {
    std::string name;
    detail::read_opt(j, "optimizer", name, ctx);
    if (name == "momentum") c.optimizer = OptimizerKind::Momentum;
    else if (name == "adam") c.optimizer = OptimizerKind::Adam;
    else throw_config(ctx + ": optimizer must be 'momentum' or 'adam'");
  }
  detail::read_opt(j, "momentum", c.momentum, ctx);
  detail::read_opt(j, "beta2", c.beta2, ctx);
  detail::read_opt(j, "lambda", c.lambda, ctx);
  detail::read_opt(j, "seed", c.seed, ctx);
  detail::read_opt(j, "init_scale", c.init_scale, ctx);
  detail::read_opt(j, "class_weighted", c.class_weighted, ctx);
  detail::read_opt(j, "min_std", c.min_std, ctx);
  detail::read_opt(j, "final_lr_fraction", c.final_lr_fraction, ctx);
  detail::read_opt(j, "detach_visit_weights", c.detach_visit_weights, ctx);
  detail::read_opt(j, "proximal_l1", c.proximal_l1, ctx);
}

std::vector<double> class_weights_for(const Dataset& data, bool enabled) {
  if (!enabled) return {};
  std::vector<std::size_t> counts(static_cast<std::size_t>(data.num_classes), 0);
  for (int y : data.labels) ++counts[static_cast<std::size_t>(y)];
  const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
  std::vector<double> w;
  w.reserve(data.size());
  for (int y : data.labels)
    w.push_back(static_cast<double>(data.size()) / (present * static_cast<double>(counts[static_cast<std::size_t>(y)])));
  return w;
}

ObliqueTree init_tree(const Dataset& data, const TrainConfig& config) {
  config.validate();
  data.validate();
  if (data.size() == 0) throw_invalid("cannot train on an empty dataset");
  const TreeShape shape{config.depth, static_cast<int>(data.num_features()), std::max(2, data.num_classes),
                        config.hidden};
  ObliqueTree tree(shape);
  tree.standardizer = Standardizer::fit(data.features, config.min_std);

  std::mt19937_64 rng(config.seed);
  const double s1 = config.init_scale / std::sqrt(static_cast<double>(shape.num_features));
  const double s2 = config.init_scale / std::sqrt(static_cast<double>(shape.hidden));
  std::uniform_real_distribution<double> u1(-s1, s1), u2(-s2, s2);
  auto params = tree.params();
  for (std::size_t n = 0; n < shape.num_internal(); ++n) {
    for (std::size_t k = 0; k < shape.w1_size(); ++k) params[shape.w1_offset(n) + k] = u1(rng);
    for (int h = 0; h < shape.hidden; ++h) params[shape.w2_offset(n) + static_cast<std::size_t>(h)] = u2(rng);
  }
  return tree;
}

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::size_t size)
      : config_(config), first_(size, 0.0), second_(config.optimizer == OptimizerKind::Adam ? size : 0, 0.0) {}

  void set_rate(double rate) { rate_ = rate; }

  void step(std::span<double> values, std::span<const double> grad) {
    ++t_;
    if (config_.optimizer == OptimizerKind::Momentum) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        first_[i] = config_.momentum * first_[i] - rate_ * grad[i];
        values[i] += first_[i];
      }
      return;
    }
    const double b1 = config_.momentum, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      first_[i] = b1 * first_[i] + (1.0 - b1) * grad[i];
      second_[i] = b2 * second_[i] + (1.0 - b2) * grad[i] * grad[i];
      values[i] -= rate_ * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + 1e-8);
    }
  }

  void reset_entries(std::span<const std::size_t> indices) {
    for (std::size_t i : indices) {
      first_[i] = 0.0;
      if (!second_.empty()) second_[i] = 0.0;
    }
  }

 private:
  const TrainConfig& config_;
  double rate_ = config_.learning_rate;
  std::vector<double> first_;
  std::vector<double> second_;
  long t_ = 0;
};

std::string loss_trace(const std::vector<double>& trace) {
  std::ostringstream os;
  for (std::size_t i = 0; i < trace.size(); ++i) os << (i ? "," : "") << trace[i];
  return os.str();
}

}  // namespace

double objective(const ObliqueTree& tree, const Dataset& data, double lambda, bool class_weighted) {
  const auto weights = class_weights_for(data, class_weighted);
  const std::vector<double> ones(data.num_features(), 1.0);
  const std::span<const double> costs = data.costs.empty() ? std::span<const double>(ones) : data.costs;
  detail::ObjectiveOptions opt;
  opt.penalty_scale = lambda;
  detail::ObjectiveSums total;
  constexpr Eigen::Index kChunk = 1024;
  for (Eigen::Index start = 0; start < data.features.rows(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, data.features.rows() - start);
    const auto s = detail::evaluate_objective(
        tree, data.features.middleRows(start, len),
        std::span<const int>(data.labels).subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len)),
        weights.empty() ? std::span<const double>()
                        : std::span<const double>(weights).subspan(static_cast<std::size_t>(start),
                                                                   static_cast<std::size_t>(len)),
        costs, opt, nullptr);
    total.ce_weighted += s.ce_weighted;
    total.weight_total += s.weight_total;
    total.penalty += s.penalty;
    total.count += s.count;
  }
  return total.ce_mean() + lambda * total.penalty_mean();
}

void fit(ObliqueTree& tree, const Dataset& data, const TrainConfig& config, TrainReport* report) {
  config.validate();
  data.validate();
  if (data.size() == 0) throw_invalid("cannot train on an empty dataset");
  const TreeShape& shape = tree.shape();
  if (data.num_features() != static_cast<std::size_t>(shape.num_features))
    throw_invalid("dataset feature count differs from the model");
  if (data.num_classes > shape.num_classes) throw_invalid("dataset has more classes than the model");

  const std::vector<double> ones(data.num_features(), 1.0);
  const std::span<const double> costs = data.costs.empty() ? std::span<const double>(ones) : data.costs;
  const auto weights = class_weights_for(data, config.class_weighted);
  const bool shared = tree.compression.is_shared();
  const bool pruned = tree.compression.is_pruned() || shared;
  const bool prox = config.proximal_l1 && config.lambda > 0.0 && !shared;

  detail::ObjectiveOptions opt;
  opt.penalty_scale = config.lambda;
  opt.l1_subgradient = !prox;
  opt.penalty_through_routing = !config.detach_visit_weights;

  auto params = tree.params();
  Optimizer optimizer(config, params.size());
  Optimizer centroid_optimizer(config, tree.compression.centroids.size());
  std::vector<double> centroid_grad(tree.compression.centroids.size());

  std::vector<std::size_t> frozen;
  if (pruned) {
    for (std::size_t e = 0; e < shape.num_w1_entries(); ++e)
      if (!tree.compression.entry_kept(e) || (shared && tree.compression.assignment[e] < 0))
        frozen.push_back(shape.w1_param_index(e));
  }

  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(config.batch_size);

  std::vector<double> grad, mean_visit;
  std::vector<double> trace;
  Matrix xb;
  std::vector<int> yb;
  std::vector<double> wb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Linear decay from learning_rate to learning_rate * final_lr_fraction.
    const double progress = config.epochs > 1 ? static_cast<double>(epoch) / (config.epochs - 1) : 0.0;
    const double rate = config.learning_rate * (1.0 - progress * (1.0 - config.final_lr_fraction));
    optimizer.set_rate(rate);
    centroid_optimizer.set_rate(rate);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      xb.resize(static_cast<Eigen::Index>(len), data.features.cols());
      yb.resize(len);
      wb.resize(weights.empty() ? 0 : len);
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t r = order[start + i];
        xb.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(r));
        yb[i] = data.labels[r];
        if (!weights.empty()) wb[i] = weights[r];
      }
      detail::evaluate_objective(tree, xb, yb, wb, costs, opt, &grad, &mean_visit);

      for (std::size_t idx : frozen) grad[idx] = 0.0;
      if (shared) {
        std::fill(centroid_grad.begin(), centroid_grad.end(), 0.0);
        for (std::size_t e = 0; e < shape.num_w1_entries(); ++e) {
          const std::int32_t a = tree.compression.assignment[e];
          const std::size_t idx = shape.w1_param_index(e);
          if (a >= 0) centroid_grad[static_cast<std::size_t>(a)] += grad[idx];
          grad[idx] = 0.0;
        }
      }
      optimizer.step(params, grad);
      if (shared) centroid_optimizer.step(tree.compression.centroids, centroid_grad);

      if (prox) {
        // Decoupled from the optimizer's preconditioning, like decoupled
        // weight decay: the threshold is the raw rate times the L1 weight.
        const auto F = static_cast<std::size_t>(shape.num_features);
        for (std::size_t e = 0; e < shape.num_w1_entries(); ++e) {
          const std::size_t idx = shape.w1_param_index(e);
          const double tau = rate * config.lambda * mean_visit[e / shape.w1_size()] * costs[e % F];
          const double w = params[idx];
          params[idx] = w > tau ? w - tau : (w < -tau ? w + tau : 0.0);
        }
      }
      if (pruned) {
        tree.apply_compression();
        optimizer.reset_entries(frozen);
      }
    }
    const double loss = objective(tree, data, config.lambda, config.class_weighted);
    trace.push_back(loss);
    if (!std::isfinite(loss))
      throw_numeric("training diverged at epoch " + std::to_string(epoch + 1) + "; loss trace: " + loss_trace(trace));
  }
  if (report) report->epoch_loss = std::move(trace);
}

ObliqueTree train(const Dataset& data, const TrainConfig& config, TrainReport* report) {
  ObliqueTree tree = init_tree(data, config);
  fit(tree, data, config, report);
  return tree;
}

const char* touch_accounting_name(TouchAccounting mode) {
  return mode == TouchAccounting::InternalOnly ? "internal_only" : "with_leaves";
}

double params_touched_fraction(const ObliqueTree& tree, std::span<const double> x, TouchAccounting mode) {
  const auto path = predict_single_path(tree, x);
  const TreeShape& s = tree.shape();
  const double visited = static_cast<double>(path.visited.size() * s.node_param_count());
  if (mode == TouchAccounting::InternalOnly)
    return visited / static_cast<double>(s.internal_param_count());
  return (visited + static_cast<double>(s.num_classes)) / static_cast<double>(s.total_params());
}

}  // namespace peot
