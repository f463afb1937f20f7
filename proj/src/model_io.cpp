#include "peot/model_io.hpp"

#include <charconv>
#include <cmath>

#include "peot/error.hpp"

namespace peot {

using nlohmann::json;

std::string hex_double(double v) {
  if (!std::isfinite(v)) throw_numeric("cannot serialize non-finite value");
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  if (ec != std::errc{}) throw_numeric("hex formatting failed");
  return {buf, end};
}

double parse_hex_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::hex);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v)) throw_data("malformed hex float '" + s + "'");
  return v;
}

namespace {

json hex_array(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(hex_double(x));
  return a;
}

std::vector<double> parse_hex_array(const json& j, const char* what) {
  if (!j.is_array()) throw_data(std::string("model field '") + what + "' must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_string()) throw_data(std::string("model field '") + what + "' must hold hex strings");
    out.push_back(parse_hex_double(e.get<std::string>()));
  }
  return out;
}

std::string bits_to_hex(const std::vector<std::uint8_t>& bits) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    int nibble = 0;
    for (std::size_t b = 0; b < 4 && i + b < bits.size(); ++b) nibble |= (bits[i + b] ? 1 : 0) << b;
    out.push_back(digits[nibble]);
  }
  return out;
}

std::vector<std::uint8_t> hex_to_bits(const std::string& hex, std::size_t n) {
  if (hex.size() != (n + 3) / 4) throw_data("pruning mask has the wrong length");
  std::vector<std::uint8_t> bits(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char c = hex[i / 4];
    int nibble;
    if (c >= '0' && c <= '9')
      nibble = c - '0';
    else if (c >= 'a' && c <= 'f')
      nibble = c - 'a' + 10;
    else
      throw_data("pruning mask holds a non-hex character");
    bits[i] = static_cast<std::uint8_t>((nibble >> (i % 4)) & 1);
  }
  return bits;
}

template <typename T>
T field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw_data(std::string("model document lacks '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw_data(std::string("model field '") + key + "' has the wrong type");
  }
}

void check_header(const json& j, const char* format) {
  if (!j.is_object()) throw_data("model document must be a JSON object");
  if (field<std::string>(j, "format") != format)
    throw_data(std::string("expected a '") + format + "' model document");
  const int version = field<int>(j, "version");
  if (version != kModelFormatVersion) throw_data("unsupported model version " + std::to_string(version));
}

}  // namespace

json tree_to_json(const ObliqueTree& tree) {
  const TreeShape& s = tree.shape();
  json j;
  j["format"] = "oblique_tree";
  j["version"] = kModelFormatVersion;
  j["shape"] = {{"depth", s.depth}, {"hidden", s.hidden}, {"num_features", s.num_features}, {"num_classes", s.num_classes}};
  j["params"] = hex_array(tree.params());
  j["standardizer"] = {{"mean", hex_array(tree.standardizer.mean)}, {"scale", hex_array(tree.standardizer.scale)}};
  json comp = json::object();
  if (tree.compression.is_pruned()) comp["kept"] = bits_to_hex(tree.compression.kept);
  if (tree.compression.is_shared()) {
    comp["centroids"] = hex_array(tree.compression.centroids);
    json assign = json::array();
    for (std::size_t e = 0; e < s.num_w1_entries(); ++e)
      if (tree.compression.entry_kept(e)) assign.push_back(tree.compression.assignment[e]);
    comp["assignment"] = assign;
  }
  j["compression"] = comp;
  return j;
}

ObliqueTree tree_from_json(const json& j) {
  check_header(j, "oblique_tree");
  const json shape_j = field<json>(j, "shape");
  TreeShape s;
  s.depth = field<int>(shape_j, "depth");
  s.hidden = field<int>(shape_j, "hidden");
  s.num_features = field<int>(shape_j, "num_features");
  s.num_classes = field<int>(shape_j, "num_classes");
  try {
    s.validate();
  } catch (const Error& e) {
    throw_data(std::string("model shape: ") + e.what());
  }
  ObliqueTree tree(s);
  const auto params = parse_hex_array(field<json>(j, "params"), "params");
  if (params.size() != s.total_params())
    throw_data("model holds " + std::to_string(params.size()) + " parameters, shape needs " +
               std::to_string(s.total_params()));
  std::copy(params.begin(), params.end(), tree.params().begin());

  const json st = field<json>(j, "standardizer");
  tree.standardizer.mean = parse_hex_array(field<json>(st, "mean"), "standardizer.mean");
  tree.standardizer.scale = parse_hex_array(field<json>(st, "scale"), "standardizer.scale");
  const auto nf = static_cast<std::size_t>(s.num_features);
  if (tree.standardizer.mean.size() != nf || tree.standardizer.scale.size() != nf)
    throw_data("standardizer length does not match feature count");
  for (double sc : tree.standardizer.scale)
    if (!(sc > 0.0)) throw_data("standardizer scales must be positive");

  const json comp = field<json>(j, "compression");
  const std::size_t n = s.num_w1_entries();
  if (comp.contains("kept")) tree.compression.kept = hex_to_bits(field<std::string>(comp, "kept"), n);
  if (comp.contains("centroids")) {
    tree.compression.centroids = parse_hex_array(comp["centroids"], "centroids");
    const auto survivors = field<std::vector<std::int32_t>>(comp, "assignment");
    tree.compression.assignment.assign(n, -1);
    std::size_t next = 0;
    for (std::size_t e = 0; e < n; ++e) {
      if (!tree.compression.entry_kept(e)) continue;
      if (next >= survivors.size()) throw_data("codebook assignment is shorter than the survivor count");
      const std::int32_t a = survivors[next++];
      if (a < 0 || static_cast<std::size_t>(a) >= tree.compression.centroids.size())
        throw_data("codebook assignment out of range");
      tree.compression.assignment[e] = a;
    }
    if (next != survivors.size()) throw_data("codebook assignment is longer than the survivor count");
  }
  return tree;
}

json gbt_to_json(const GbtModel& model) {
  json j;
  j["format"] = "gbt";
  j["version"] = kModelFormatVersion;
  j["num_features"] = model.num_features;
  j["num_classes"] = model.num_classes;
  j["cost_aware"] = model.cost_aware;
  j["feature_min"] = hex_array(model.feature_min);
  j["feature_max"] = hex_array(model.feature_max);
  j["warnings"] = model.warnings;
  const auto& q = model.quantization;
  j["quantization"] = {{"enabled", q.enabled},
                       {"threshold_bits", q.threshold_bits},
                       {"leaf_bits", q.leaf_bits},
                       {"threshold_lo", hex_array(q.threshold_lo)},
                       {"threshold_hi", hex_array(q.threshold_hi)},
                       {"leaf_lo", hex_double(q.leaf_lo)},
                       {"leaf_hi", hex_double(q.leaf_hi)}};
  json ensembles = json::array();
  for (const auto& e : model.ensembles) {
    json trees = json::array();
    for (const auto& t : e.trees) {
      json nodes = json::array();
      for (const auto& nd : t.nodes)
        nodes.push_back(json::array({nd.feature, hex_double(nd.threshold), nd.left, nd.right, hex_double(nd.weight)}));
      trees.push_back(nodes);
    }
    ensembles.push_back({{"learning_rate", hex_double(e.learning_rate)},
                         {"base_score", hex_double(e.base_score)},
                         {"trees", trees}});
  }
  j["ensembles"] = ensembles;
  return j;
}

GbtModel gbt_from_json(const json& j) {
  check_header(j, "gbt");
  GbtModel m;
  m.num_features = field<int>(j, "num_features");
  m.num_classes = field<int>(j, "num_classes");
  if (m.num_features < 1 || m.num_classes < 2) throw_data("gbt model needs F >= 1 and C >= 2");
  m.cost_aware = field<bool>(j, "cost_aware");
  m.feature_min = parse_hex_array(field<json>(j, "feature_min"), "feature_min");
  m.feature_max = parse_hex_array(field<json>(j, "feature_max"), "feature_max");
  m.warnings = field<std::vector<std::string>>(j, "warnings");
  const json q = field<json>(j, "quantization");
  m.quantization.enabled = field<bool>(q, "enabled");
  m.quantization.threshold_bits = field<int>(q, "threshold_bits");
  m.quantization.leaf_bits = field<int>(q, "leaf_bits");
  m.quantization.threshold_lo = parse_hex_array(field<json>(q, "threshold_lo"), "threshold_lo");
  m.quantization.threshold_hi = parse_hex_array(field<json>(q, "threshold_hi"), "threshold_hi");
  m.quantization.leaf_lo = parse_hex_double(field<std::string>(q, "leaf_lo"));
  m.quantization.leaf_hi = parse_hex_double(field<std::string>(q, "leaf_hi"));

  const std::size_t expected = m.num_classes == 2 ? 1 : static_cast<std::size_t>(m.num_classes);
  const json ens = field<json>(j, "ensembles");
  if (!ens.is_array() || ens.size() != expected) throw_data("gbt model has the wrong number of ensembles");
  for (const auto& ej : ens) {
    GbtEnsemble e;
    e.learning_rate = parse_hex_double(field<std::string>(ej, "learning_rate"));
    e.base_score = parse_hex_double(field<std::string>(ej, "base_score"));
    for (const auto& tj : field<json>(ej, "trees")) {
      AxisTree t;
      for (const auto& nj : tj) {
        if (!nj.is_array() || nj.size() != 5) throw_data("gbt node must be [feature, threshold, left, right, weight]");
        AxisTree::Node nd;
        try {
          nd.feature = nj[0].get<int>();
          nd.threshold = parse_hex_double(nj[1].get<std::string>());
          nd.left = nj[2].get<int>();
          nd.right = nj[3].get<int>();
          nd.weight = parse_hex_double(nj[4].get<std::string>());
        } catch (const json::exception&) {
          throw_data("gbt node has the wrong field types");
        }
        t.nodes.push_back(nd);
      }
      const auto count = static_cast<int>(t.nodes.size());
      if (count == 0) throw_data("gbt tree has no nodes");
      // Children always follow their parent, which rules out cycles.
      for (int i = 0; i < count; ++i) {
        const auto& nd = t.nodes[static_cast<std::size_t>(i)];
        if (nd.is_leaf()) continue;
        if (nd.feature >= m.num_features || nd.left <= i || nd.right <= i || nd.left >= count || nd.right >= count)
          throw_data("gbt node references an invalid feature or child");
      }
      e.trees.push_back(std::move(t));
    }
    m.ensembles.push_back(std::move(e));
  }
  return m;
}

std::string dump_model(const json& j) { return j.dump(1) + "\n"; }

std::string model_format(const json& j) {
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
    throw_data("model document lacks a format tag");
  return j["format"].get<std::string>();
}

}  // namespace peot
