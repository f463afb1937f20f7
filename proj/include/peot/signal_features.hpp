#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "peot/dataset.hpp"

namespace peot {

// One analysis window of a single channel.
struct Window {
  std::span<const double> samples;
  double fs = 0.0;
};

enum class FeatureKind { LineLength, BandPower, Variance };

const char* feature_kind_name(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);

struct FeatureEntry {
  int channel = 0;
  FeatureKind kind = FeatureKind::LineLength;
  double lo_hz = 0.0;  // BandPower only
  double hi_hz = 0.0;  // BandPower only

  std::string name() const;
};

// Ordered feature list; the order defines column indices of extracted data.
struct FeatureSpec {
  std::vector<FeatureEntry> entries;
};

// Power cost per feature kind, normalized so that LineLength = 1.
struct CostTable {
  std::map<FeatureKind, double> costs;

  static CostTable defaults();
};

struct WindowingConfig {
  std::size_t window_samples = 256;
  // Fraction of a window shared with the next one, in [0, 1).
  double overlap = 0.0;
};

// Multi-channel recording, channel-major.
struct Recording {
  double fs = 0.0;
  std::vector<std::vector<double>> channels;

  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
};

inline constexpr int kBandPassOrder = 64;

double line_length(const Window& w);
double variance(const Window& w);
double band_power(const Window& w, double lo_hz, double hi_hz);

// Linear-phase windowed-sinc band-pass design (Hamming), `order + 1` taps,
// scaled to unit gain at the band centre.
std::vector<double> design_bandpass(double lo_hz, double hi_hz, double fs,
                                    int order = kBandPassOrder);

// Band power with a precomputed filter; the first `taps - 1` outputs are
// warm-up and are discarded.
double band_power_with(std::span<const double> samples, std::span<const double> taps);

std::size_t window_count(std::size_t num_samples, const WindowingConfig& cfg);
std::size_t window_hop(const WindowingConfig& cfg);

Matrix extract_features(const Recording& rec, const FeatureSpec& spec,
                        const WindowingConfig& windowing);

std::vector<double> feature_cost_vector(const FeatureSpec& spec, const CostTable& table);

// JSON config document:
// {"fs": 256, "window_samples": 256, "overlap": 0.0,
//  "features": [{"channel": 0, "kind": "LineLength"},
//               {"channel": 1, "kind": "BandPower", "lo_hz": 8, "hi_hz": 12}],
//  "costs": {"LineLength": 1, "Variance": 3, "BandPower": 25}}
struct FeatureConfig {
  FeatureSpec spec;
  CostTable table = CostTable::defaults();
  WindowingConfig windowing;
};

FeatureConfig feature_config_from_json(const nlohmann::json& j);
nlohmann::json feature_config_to_json(const FeatureConfig& cfg);

// Builds a dataset from a recording and per-window labels.
Dataset make_signal_dataset(const Recording& rec, const std::vector<int>& window_labels,
                            const FeatureConfig& cfg, const std::string& provenance);

}  // namespace peot
