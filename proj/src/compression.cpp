#include "peot/compression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_util.hpp"
#include "peot/error.hpp"
#include "peot/eval_harness.hpp"

namespace peot {

void QuantFormat::validate() const {
  if (bits < 1 || bits > 32) throw_invalid("quantization bits must lie in [1, 32]");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw_invalid("quantization range needs lo < hi");
}

std::uint64_t quantize_index(double value, const QuantFormat& fmt) {
  fmt.validate();
  const double v = std::clamp(value, fmt.lo, fmt.hi);
  const double t = std::floor((v - fmt.lo) / fmt.step() + 0.5);
  const auto top = static_cast<double>(fmt.levels() - 1);
  return static_cast<std::uint64_t>(std::clamp(t, 0.0, top));
}

double dequantize_index(std::uint64_t index, const QuantFormat& fmt) {
  if (index >= fmt.levels() - 1) return fmt.hi;
  return fmt.lo + static_cast<double>(index) * fmt.step();
}

double quantize_value(double value, const QuantFormat& fmt) {
  return dequantize_index(quantize_index(value, fmt), fmt);
}

std::vector<double> quantize_values(std::span<const double> values, const QuantFormat& fmt) {
  fmt.validate();
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(quantize_value(v, fmt));
  return out;
}

bool on_grid(double value, const QuantFormat& fmt) { return quantize_value(value, fmt) == value; }

std::size_t PruneMask::num_pruned() const {
  return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), std::uint8_t{0}));
}

PruneResult prune(const ObliqueTree& tree, double target_sparsity) {
  if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) throw_invalid("target sparsity must lie in [0, 1)");
  const TreeShape& s = tree.shape();
  const std::size_t n = s.num_w1_entries();
  const auto count = static_cast<std::size_t>(std::floor(target_sparsity * static_cast<double>(n)));

  PruneResult r{tree, PruneMask{}};
  r.mask.kept = tree.compression.is_pruned() ? tree.compression.kept : std::vector<std::uint8_t>(n, 1);
  if (count == 0 && !tree.compression.is_pruned()) return r;

  const auto params = tree.params();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(params[s.w1_param_index(a)]) < std::abs(params[s.w1_param_index(b)]);
  });
  for (std::size_t i = 0; i < count; ++i) r.mask.kept[order[i]] = 0;

  r.tree.compression.kept = r.mask.kept;
  if (r.tree.compression.is_shared())
    for (std::size_t e = 0; e < n; ++e)
      if (!r.mask.kept[e]) r.tree.compression.assignment[e] = -1;
  r.tree.apply_compression();
  return r;
}

int Codebook::index_bits() const { return static_cast<int>(ceil_log2(centroids.size())); }

std::vector<double> linear_init_centroids(std::span<const double> values, std::size_t k) {
  if (values.empty() || k == 0) throw_invalid("k-means needs values and k >= 1");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (k == 1) return {0.5 * (*mn + *mx)};
  std::vector<double> c(k);
  for (std::size_t i = 0; i < k; ++i)
    c[i] = *mn + (*mx - *mn) * static_cast<double>(i) / static_cast<double>(k - 1);
  return c;
}

namespace {

// Nearest centroid; equal distances resolve to the lower index.
std::int32_t nearest(double v, std::span<const double> centroids) {
  std::int32_t best = 0;
  double best_d = std::abs(v - centroids[0]);
  for (std::size_t i = 1; i < centroids.size(); ++i) {
    const double d = std::abs(v - centroids[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int32_t>(i);
    }
  }
  return best;
}

// Centroids are kept sorted, so the nearest one is adjacent to the insertion
// point.
std::int32_t nearest_sorted(double v, std::span<const double> centroids) {
  const auto it = std::lower_bound(centroids.begin(), centroids.end(), v);
  std::size_t hi = static_cast<std::size_t>(it - centroids.begin());
  if (hi == 0) return 0;
  if (hi == centroids.size()) return static_cast<std::int32_t>(hi - 1);
  const std::size_t lo = hi - 1;
  return v - centroids[lo] <= centroids[hi] - v ? static_cast<std::int32_t>(lo) : static_cast<std::int32_t>(hi);
}

}  // namespace

double within_cluster_ss(std::span<const double> values, std::span<const double> centroids) {
  double total = 0.0;
  for (double v : values) {
    const double d = v - centroids[static_cast<std::size_t>(nearest(v, centroids))];
    total += d * d;
  }
  return total;
}

KMeansResult kmeans_1d(std::span<const double> values, std::size_t k) {
  if (values.empty()) throw_invalid("k-means needs at least one value");
  if (k == 0) throw_invalid("k-means needs k >= 1");
  KMeansResult r;
  std::vector<double> distinct(values.begin(), values.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  if (distinct.size() <= k) {
    r.centroids = distinct;
  } else {
    r.centroids = linear_init_centroids(values, k);
    std::vector<double> sum(k), prev;
    std::vector<std::size_t> cnt(k);
    while (r.iterations < kKMeansMaxIterations) {
      ++r.iterations;
      std::fill(sum.begin(), sum.end(), 0.0);
      std::fill(cnt.begin(), cnt.end(), 0);
      for (double v : values) {
        const auto a = static_cast<std::size_t>(nearest_sorted(v, r.centroids));
        sum[a] += v;
        ++cnt[a];
      }
      prev = r.centroids;
      double shift = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        if (cnt[c]) r.centroids[c] = sum[c] / static_cast<double>(cnt[c]);
        shift = std::max(shift, std::abs(r.centroids[c] - prev[c]));
      }
      std::sort(r.centroids.begin(), r.centroids.end());
      if (shift < kKMeansTolerance) break;
    }
  }
  r.assignment.reserve(values.size());
  for (double v : values) r.assignment.push_back(nearest_sorted(v, r.centroids));
  return r;
}

ShareResult share(const ObliqueTree& tree, int bits) {
  if (bits < 1) throw_invalid("share bits must be >= 1");
  const TreeShape& s = tree.shape();
  const std::size_t n = s.num_w1_entries();
  const auto params = tree.params();

  std::vector<std::size_t> survivors;
  std::vector<double> values;
  for (std::size_t e = 0; e < n; ++e)
    if (tree.compression.entry_kept(e)) {
      survivors.push_back(e);
      values.push_back(params[s.w1_param_index(e)]);
    }
  if (survivors.empty()) throw_invalid("no surviving first-layer weights to share");

  const std::size_t k = bits >= 62 ? values.size() : std::min<std::size_t>(std::size_t{1} << bits, values.size());
  const KMeansResult km = kmeans_1d(values, k);

  ShareResult r{tree, Codebook{}, km.iterations};
  r.codebook.centroids = km.centroids;
  r.codebook.assignment.assign(n, -1);
  for (std::size_t i = 0; i < survivors.size(); ++i) r.codebook.assignment[survivors[i]] = km.assignment[i];
  r.tree.compression.centroids = r.codebook.centroids;
  r.tree.compression.assignment = r.codebook.assignment;
  r.tree.apply_compression();
  return r;
}

ObliqueTree fine_tune(const ObliqueTree& tree, const Dataset& data, const TrainConfig& config, TrainReport* report) {
  ObliqueTree out = tree;
  fit(out, data, config, report);
  return out;
}

const char* size_accounting_name(SizeAccounting a) {
  switch (a) {
    case SizeAccounting::DenseFloat32: return "dense-float32";
    case SizeAccounting::PrunedShared: return "pruned-shared";
    case SizeAccounting::QuantizedGbt: return "quantized-gbt";
  }
  return "?";
}

SizeAccounting parse_size_accounting(const std::string& name) {
  if (name == "dense-float32") return SizeAccounting::DenseFloat32;
  if (name == "pruned-shared") return SizeAccounting::PrunedShared;
  if (name == "quantized-gbt") return SizeAccounting::QuantizedGbt;
  throw_invalid("unknown size accounting '" + name + "'");
}

nlohmann::json SizeBreakdown::to_json() const {
  nlohmann::json parts_json = nlohmann::json::object();
  for (const auto& [name, bits] : parts) parts_json[name] = bits;
  return {{"accounting", size_accounting_name(accounting)}, {"total_bits", total_bits}, {"parts", parts_json}};
}

std::uint64_t ceil_log2(std::uint64_t n) {
  std::uint64_t bits = 0;
  while ((std::uint64_t{1} << bits) < n) ++bits;
  return bits;
}

SizeBreakdown model_size_bits(const ObliqueTree& tree, SizeAccounting accounting) {
  const TreeShape& s = tree.shape();
  SizeBreakdown b;
  b.accounting = accounting;
  const std::uint64_t n = s.num_w1_entries();
  const std::uint64_t other = s.num_internal() * (2 * static_cast<std::uint64_t>(s.hidden) + 1);
  const std::uint64_t leaves = s.leaf_param_count();
  switch (accounting) {
    case SizeAccounting::DenseFloat32:
      b.parts = {{"first_layer_weights", 32 * n}, {"node_biases_and_output_weights", 32 * other}, {"leaf_logits", 32 * leaves}};
      break;
    case SizeAccounting::PrunedShared: {
      std::uint64_t survivors = 0;
      for (std::size_t e = 0; e < n; ++e) survivors += tree.compression.entry_kept(e) ? 1 : 0;
      if (tree.compression.is_shared()) {
        const std::uint64_t k = tree.compression.centroids.size();
        b.parts.emplace_back("weight_indices", survivors * ceil_log2(k));
        b.parts.emplace_back("codebook", 32 * k);
      } else {
        b.parts.emplace_back("surviving_weights", 32 * survivors);
      }
      b.parts.emplace_back("sparse_index", survivors * ceil_log2(n));
      b.parts.emplace_back("node_biases_and_output_weights", 32 * other);
      b.parts.emplace_back("leaf_logits", 32 * leaves);
      break;
    }
    case SizeAccounting::QuantizedGbt:
      throw_invalid("quantized-gbt accounting applies to boosted ensembles only");
  }
  for (const auto& [name, bits] : b.parts) b.total_bits += bits;
  return b;
}

SizeBreakdown model_size_bits(const GbtModel& model, SizeAccounting accounting) {
  SizeBreakdown b;
  b.accounting = accounting;
  std::uint64_t internal = 0, leaves = 0;
  for (const auto& e : model.ensembles)
    for (const auto& t : e.trees) {
      internal += t.num_internal();
      leaves += t.num_leaves();
    }
  const std::uint64_t index_bits = ceil_log2(static_cast<std::uint64_t>(model.num_features));
  switch (accounting) {
    case SizeAccounting::DenseFloat32:
      b.parts = {{"feature_indices", internal * index_bits}, {"thresholds", internal * 32}, {"leaf_weights", leaves * 32}};
      break;
    case SizeAccounting::QuantizedGbt:
      if (!model.quantization.enabled) throw_invalid("quantized-gbt accounting needs a quantized ensemble");
      b.parts = {{"feature_indices", internal * index_bits},
                 {"thresholds", internal * static_cast<std::uint64_t>(model.quantization.threshold_bits)},
                 {"leaf_weights", leaves * static_cast<std::uint64_t>(model.quantization.leaf_bits)}};
      break;
    case SizeAccounting::PrunedShared:
      throw_invalid("pruned-shared accounting applies to oblique trees only");
  }
  for (const auto& [name, bits] : b.parts) b.total_bits += bits;
  return b;
}

void CompressConfig::validate() const {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw_config("sparsity must lie in [0, 1)");
  if (share_bits < 0) throw_config("share_bits must be >= 0");
  if (prune_rounds < 1) throw_config("prune_rounds must be >= 1");
  if (prune_epochs < 0 || share_epochs < 0) throw_config("fine-tune epochs must be >= 0");
  train.validate();
}

void to_json(nlohmann::json& j, const CompressConfig& c) {
  j = {{"sparsity", c.sparsity},           {"share_bits", c.share_bits},
       {"prune_rounds", c.prune_rounds},   {"prune_schedule", c.prune_schedule == PruneSchedule::Cubic ? "cubic" : "linear"},
       {"fine_tune", c.fine_tune_enabled},
       {"prune_epochs", c.prune_epochs},   {"share_epochs", c.share_epochs},
       {"train", c.train}};
}

void from_json(const nlohmann::json& j, CompressConfig& c) {
  const std::string ctx = "compress config";
  detail::check_keys(j, {"sparsity", "share_bits", "prune_rounds", "prune_schedule", "fine_tune", "prune_epochs", "share_epochs", "train"}, ctx);
  detail::read_opt(j, "sparsity", c.sparsity, ctx);
  detail::read_opt(j, "share_bits", c.share_bits, ctx);
  detail::read_opt(j, "prune_rounds", c.prune_rounds, ctx);
  if (j.contains("prune_schedule")) {
    std::string name;
    detail::read_opt(j, "prune_schedule", name, ctx);
    if (name == "linear") c.prune_schedule = PruneSchedule::Linear;
    else if (name == "cubic") c.prune_schedule = PruneSchedule::Cubic;
    else throw_config(ctx + ": prune_schedule must be 'linear' or 'cubic'");
  }
  detail::read_opt(j, "fine_tune", c.fine_tune_enabled, ctx);
  detail::read_opt(j, "prune_epochs", c.prune_epochs, ctx);
  detail::read_opt(j, "share_epochs", c.share_epochs, ctx);
  if (j.contains("train")) from_json(j["train"], c.train);
}

nlohmann::json CompressionReport::to_json() const {
  return {{"sparsity", sparsity},
          {"share_bits", share_bits},
          {"codebook_size", codebook_size},
          {"size_bits_before", size_before.total_bits},
          {"size_bits_after", size_after.total_bits},
          {"ratio", ratio},
          {"acc_before", acc_before},
          {"acc_after", acc_after},
          {"breakdown", {{"before", size_before.to_json()}, {"after", size_after.to_json()}}},
          {"params_touched", {{"internal_only", touched_internal_only}, {"with_leaves", touched_with_leaves}}}};
}

namespace {

double single_path_accuracy(const ObliqueTree& tree, const Dataset& data) {
  const auto pred = predict_labels(tree, data.features);
  return compute_metrics(data.labels, pred, std::max(2, data.num_classes)).accuracy;
}

}  // namespace

CompressResult compress_pipeline(const ObliqueTree& tree, const Dataset& train, const Dataset* eval,
                                 const CompressConfig& config) {
  config.validate();
  const Dataset& test = eval ? *eval : train;
  if (test.size() == 0) throw_invalid("evaluation dataset is empty");

  CompressResult r{tree, {}};
  r.report.sparsity = config.sparsity;
  r.report.share_bits = config.share_bits;
  r.report.size_before = model_size_bits(tree, SizeAccounting::DenseFloat32);
  r.report.acc_before = single_path_accuracy(tree, test);

  TrainConfig prune_cfg = config.train;
  prune_cfg.epochs = config.prune_epochs;
  TrainConfig share_cfg = config.train;
  share_cfg.epochs = config.share_epochs;

  for (int round = 1; round <= config.prune_rounds; ++round) {
    const double t = static_cast<double>(round) / config.prune_rounds;
    const double target = config.prune_schedule == PruneSchedule::Cubic
                              ? config.sparsity * (1.0 - (1.0 - t) * (1.0 - t) * (1.0 - t))
                              : config.sparsity * t;
    r.tree = prune(r.tree, target).tree;
    if (config.fine_tune_enabled && prune_cfg.epochs > 0) fit(r.tree, train, prune_cfg);
  }
  if (config.share_bits > 0) {
    r.tree = share(r.tree, config.share_bits).tree;
    if (config.fine_tune_enabled && share_cfg.epochs > 0) fit(r.tree, train, share_cfg);
  }

  r.report.codebook_size = r.tree.compression.centroids.size();
  r.report.size_after = model_size_bits(r.tree, SizeAccounting::PrunedShared);
  r.report.ratio = static_cast<double>(r.report.size_before.total_bits) /
                   static_cast<double>(r.report.size_after.total_bits);
  r.report.acc_after = single_path_accuracy(r.tree, test);
  r.report.touched_internal_only = params_touched_fraction(r.tree, test.row(0), TouchAccounting::InternalOnly);
  r.report.touched_with_leaves = params_touched_fraction(r.tree, test.row(0), TouchAccounting::WithLeaves);
  return r;
}

}  // namespace peot
