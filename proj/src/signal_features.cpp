#include "peot/signal_features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "peot/error.hpp"

namespace peot {

namespace {

void check_window(const Window& w, std::size_t min_len) {
  if (w.samples.size() < min_len)
    throw_invalid("window has " + std::to_string(w.samples.size()) + " samples, need at least " +
                  std::to_string(min_len));
  if (!(w.fs > 0.0)) throw_invalid("sampling rate must be positive");
  for (double v : w.samples)
    if (!std::isfinite(v)) throw_invalid("window contains a non-finite sample");
}

void check_band(double lo, double hi, double fs) {
  if (!(lo > 0.0 && lo < hi && hi < fs / 2.0)) {
    std::ostringstream os;
    os << "band (" << lo << ", " << hi << ") Hz must satisfy 0 < lo < hi < fs/2 = " << fs / 2.0;
    throw_invalid(os.str());
  }
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

const char* feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::LineLength: return "LineLength";
    case FeatureKind::BandPower: return "BandPower";
    case FeatureKind::Variance: return "Variance";
  }
  return "?";
}

FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "LineLength") return FeatureKind::LineLength;
  if (name == "BandPower") return FeatureKind::BandPower;
  if (name == "Variance") return FeatureKind::Variance;
  throw_config("unknown feature kind '" + name + "'");
}

std::string FeatureEntry::name() const {
  std::ostringstream os;
  os << "ch" << channel << "." << feature_kind_name(kind);
  if (kind == FeatureKind::BandPower) os << "(" << lo_hz << "-" << hi_hz << ")";
  return os.str();
}

CostTable CostTable::defaults() {
  return CostTable{{{FeatureKind::LineLength, 1.0},
                    {FeatureKind::Variance, 3.0},
                    {FeatureKind::BandPower, 25.0}}};
}

double line_length(const Window& w) {
  check_window(w, 2);
  const auto& x = w.samples;
  double sum = 0.0;
  for (std::size_t n = 1; n < x.size(); ++n) sum += std::abs(x[n] - x[n - 1]);
  return sum / static_cast<double>(x.size());
}

double variance(const Window& w) {
  check_window(w, 2);
  const auto& x = w.samples;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size());
}

std::vector<double> design_bandpass(double lo_hz, double hi_hz, double fs, int order) {
  if (!(fs > 0.0)) throw_invalid("sampling rate must be positive");
  check_band(lo_hz, hi_hz, fs);
  if (order < 2 || order % 2 != 0) throw_invalid("filter order must be even and >= 2");

  const double f1 = lo_hz / fs;
  const double f2 = hi_hz / fs;
  const int taps = order + 1;
  const double mid = order / 2.0;
  std::vector<double> h(static_cast<std::size_t>(taps));
  for (int n = 0; n < taps; ++n) {
    const double m = n - mid;
    const double ideal = 2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m);
    const double hamming = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / order);
    h[static_cast<std::size_t>(n)] = ideal * hamming;
  }
  // Unit gain at the band centre.
  const double fc = 0.5 * (f1 + f2);
  std::complex<double> response = 0.0;
  for (int n = 0; n < taps; ++n)
    response += h[static_cast<std::size_t>(n)] * std::polar(1.0, -2.0 * std::numbers::pi * fc * n);
  const double gain = std::abs(response);
  for (double& v : h) v /= gain;
  // cos(2*pi*n/M) and cos(2*pi*(M-n)/M) differ in the last bit; mirror so the
  // response is exactly linear phase.
  for (int n = 0; n < taps / 2; ++n)
    h[static_cast<std::size_t>(taps - 1 - n)] = h[static_cast<std::size_t>(n)];
  return h;
}

double band_power_with(std::span<const double> samples, std::span<const double> taps) {
  if (samples.size() < taps.size())
    throw_invalid("window has " + std::to_string(samples.size()) + " samples, band power needs at least " +
                  std::to_string(taps.size()));
  const std::size_t m = taps.size() - 1;
  double sum = 0.0;
  for (std::size_t n = m; n < samples.size(); ++n) {
    double y = 0.0;
    for (std::size_t k = 0; k <= m; ++k) y += taps[k] * samples[n - k];
    sum += y * y;
  }
  return sum / static_cast<double>(samples.size() - m);
}

double band_power(const Window& w, double lo_hz, double hi_hz) {
  check_window(w, 2);
  check_band(lo_hz, hi_hz, w.fs);
  const auto taps = design_bandpass(lo_hz, hi_hz, w.fs);
  return band_power_with(w.samples, taps);
}

std::size_t window_hop(const WindowingConfig& cfg) {
  if (cfg.window_samples < 2) throw_config("window_samples must be >= 2");
  if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) throw_config("overlap must lie in [0, 1)");
  const auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(cfg.window_samples) * (1.0 - cfg.overlap)));
  return hop == 0 ? 1 : hop;
}

std::size_t window_count(std::size_t num_samples, const WindowingConfig& cfg) {
  const std::size_t hop = window_hop(cfg);
  if (num_samples < cfg.window_samples) return 0;
  return (num_samples - cfg.window_samples) / hop + 1;
}

Matrix extract_features(const Recording& rec, const FeatureSpec& spec,
                        const WindowingConfig& windowing) {
  const std::size_t n_windows = window_count(rec.num_samples(), windowing);
  const std::size_t hop = window_hop(windowing);
  for (const auto& ch : rec.channels)
    if (ch.size() != rec.num_samples()) throw_invalid("recording channels differ in length");

  std::vector<std::vector<double>> filters(spec.entries.size());
  for (std::size_t f = 0; f < spec.entries.size(); ++f) {
    const auto& e = spec.entries[f];
    if (e.channel < 0 || static_cast<std::size_t>(e.channel) >= rec.channels.size())
      throw_invalid("feature " + std::to_string(f) + " addresses channel " + std::to_string(e.channel) +
                    " but the recording has " + std::to_string(rec.channels.size()));
    if (e.kind == FeatureKind::BandPower) filters[f] = design_bandpass(e.lo_hz, e.hi_hz, rec.fs);
  }

  Matrix out(static_cast<Eigen::Index>(n_windows), static_cast<Eigen::Index>(spec.entries.size()));
  for (std::size_t w = 0; w < n_windows; ++w) {
    for (std::size_t f = 0; f < spec.entries.size(); ++f) {
      const auto& e = spec.entries[f];
      const Window win{std::span<const double>(rec.channels[static_cast<std::size_t>(e.channel)])
                           .subspan(w * hop, windowing.window_samples),
                       rec.fs};
      double v = 0.0;
      switch (e.kind) {
        case FeatureKind::LineLength: v = line_length(win); break;
        case FeatureKind::Variance: v = variance(win); break;
        case FeatureKind::BandPower:
          check_window(win, filters[f].size());
          v = band_power_with(win.samples, filters[f]);
          break;
      }
      out(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(f)) = v;
    }
  }
  return out;
}

std::vector<double> feature_cost_vector(const FeatureSpec& spec, const CostTable& table) {
  std::vector<double> c;
  c.reserve(spec.entries.size());
  for (const auto& e : spec.entries) {
    auto it = table.costs.find(e.kind);
    if (it == table.costs.end())
      throw_config(std::string("cost table has no price for ") + feature_kind_name(e.kind));
    if (!(it->second > 0.0))
      throw_config(std::string("cost for ") + feature_kind_name(e.kind) + " must be > 0");
    c.push_back(it->second);
  }
  return c;
}

FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig cfg;
  try {
    if (j.contains("window_samples")) cfg.windowing.window_samples = j["window_samples"].get<std::size_t>();
    if (j.contains("overlap")) cfg.windowing.overlap = j["overlap"].get<double>();
    if (j.contains("costs")) {
      cfg.table.costs.clear();
      for (const auto& [name, value] : j["costs"].items())
        cfg.table.costs[parse_feature_kind(name)] = value.get<double>();
    }
    for (const auto& item : j.at("features")) {
      FeatureEntry e;
      e.channel = item.at("channel").get<int>();
      e.kind = parse_feature_kind(item.at("kind").get<std::string>());
      if (e.kind == FeatureKind::BandPower) {
        e.lo_hz = item.at("lo_hz").get<double>();
        e.hi_hz = item.at("hi_hz").get<double>();
      }
      cfg.spec.entries.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw_config(std::string("feature config: ") + e.what());
  }
  window_hop(cfg.windowing);
  for (const auto& [kind, cost] : cfg.table.costs)
    if (!(cost > 0.0)) throw_config(std::string("cost for ") + feature_kind_name(kind) + " must be > 0");
  return cfg;
}

nlohmann::json feature_config_to_json(const FeatureConfig& cfg) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& e : cfg.spec.entries) {
    nlohmann::json item = {{"channel", e.channel}, {"kind", feature_kind_name(e.kind)}};
    if (e.kind == FeatureKind::BandPower) {
      item["lo_hz"] = e.lo_hz;
      item["hi_hz"] = e.hi_hz;
    }
    features.push_back(item);
  }
  nlohmann::json costs = nlohmann::json::object();
  for (const auto& [kind, cost] : cfg.table.costs) costs[feature_kind_name(kind)] = cost;
  return {{"window_samples", cfg.windowing.window_samples},
          {"overlap", cfg.windowing.overlap},
          {"features", features},
          {"costs", costs}};
}

Dataset make_signal_dataset(const Recording& rec, const std::vector<int>& window_labels,
                            const FeatureConfig& cfg, const std::string& provenance) {
  Dataset ds;
  ds.features = extract_features(rec, cfg.spec, cfg.windowing);
  if (static_cast<std::size_t>(ds.features.rows()) != window_labels.size())
    throw_data("recording yields " + std::to_string(ds.features.rows()) + " windows but " +
               std::to_string(window_labels.size()) + " labels were given");
  if (window_labels.empty()) throw_data("recording yields no windows");
  ds.labels = window_labels;
  int max_label = 0;
  for (int y : window_labels) {
    if (y < 0) throw_data("negative window label");
    max_label = std::max(max_label, y);
  }
  ds.num_classes = std::max(2, max_label + 1);
  ds.temporal = true;
  for (const auto& e : cfg.spec.entries) ds.feature_names.push_back(e.name());
  ds.costs = feature_cost_vector(cfg.spec, cfg.table);
  ds.provenance = provenance;
  ds.validate();
  return ds;
}

}  // namespace peot
