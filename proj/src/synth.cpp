#include "peot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "peot/error.hpp"

namespace peot {

SynthTask parse_synth_task(const std::string& name) {
  if (name == "seizure") return SynthTask::Seizure;
  if (name == "tremor") return SynthTask::Tremor;
  if (name == "finger") return SynthTask::Finger;
  throw_invalid("unknown synthetic task '" + name + "' (expected seizure, tremor or finger)");
}

const char* synth_task_name(SynthTask task) {
  switch (task) {
    case SynthTask::Seizure: return "seizure";
    case SynthTask::Tremor: return "tremor";
    case SynthTask::Finger: return "finger";
  }
  return "?";
}

namespace {

// Event windows arrive in runs: quiet stretches of 6-18 windows alternate
// with events of 2-6 windows, about one quarter positive overall.
std::vector<int> run_labels(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> quiet(6, 18), event(2, 6);
  std::vector<int> labels;
  labels.reserve(n);
  bool positive = false;
  while (labels.size() < n) {
    const std::size_t len = positive ? event(rng) : quiet(rng);
    for (std::size_t i = 0; i < len && labels.size() < n; ++i) labels.push_back(positive ? 1 : 0);
    positive = !positive;
  }
  return labels;
}

// Blocks of four windows; every five blocks visit each class once in a
// shuffled order.
std::vector<int> block_labels(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> labels;
  labels.reserve(n);
  std::vector<int> order{0, 1, 2, 3, 4};
  while (labels.size() < n) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int c : order)
      for (int i = 0; i < 4 && labels.size() < n; ++i) labels.push_back(c);
  }
  return labels;
}

double mean_line_length(const Recording& rec, const std::vector<int>& labels, int cls, std::size_t channel) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t w = 0; w < labels.size(); ++w) {
    if (labels[w] != cls) continue;
    total += line_length(Window{std::span<const double>(rec.channels[channel]).subspan(w * kSynthWindow, kSynthWindow),
                                rec.fs});
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

SynthRecording synthesize(SynthTask task, std::size_t n_windows, std::uint64_t seed) {
  if (n_windows < 100) throw_invalid("synthetic recordings need at least 100 windows");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthRecording out;
  out.features = synth_feature_config();
  out.num_classes = task == SynthTask::Finger ? 5 : 2;
  out.labels = task == SynthTask::Finger ? block_labels(n_windows, rng) : run_labels(n_windows, rng);

  const std::size_t n = n_windows * kSynthWindow;
  Recording& rec = out.recording;
  rec.fs = kSynthFs;
  rec.channels.assign(kSynthChannels, std::vector<double>(n));
  for (auto& ch : rec.channels) {
    double x = 0.0;
    for (double& s : ch) {
      x = 0.9 * x + gauss(rng);
      s = x;
    }
  }
  // Slow changes in overall signal level blur single-threshold rules.
  for (std::size_t w = 0; w < n_windows; ++w) {
    const double gain = 0.8 + 0.45 * unit(rng);
    for (auto& ch : rec.channels)
      for (std::size_t i = 0; i < kSynthWindow; ++i) ch[w * kSynthWindow + i] *= gain;
  }

  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t w = 0; w < n_windows; ++w) {
    const int label = out.labels[w];
    const std::size_t begin = w * kSynthWindow;
    switch (task) {
      case SynthTask::Seizure:
        if (label == 1) {
          // Broadband burst of uneven strength per channel plus a 3-8 Hz rhythm.
          for (std::size_t c = 0; c < 4; ++c) {
            const double amp = 0.3 + 2.7 * unit(rng), rhythm = 1.5 * unit(rng);
            const double f = 3.0 + 5.0 * unit(rng), phase = two_pi * unit(rng);
            for (std::size_t i = 0; i < kSynthWindow; ++i)
              rec.channels[c][begin + i] +=
                  amp * gauss(rng) + rhythm * std::sin(two_pi * f * static_cast<double>(i) / kSynthFs + phase);
          }
        } else if (unit(rng) < 0.08) {
          // Single-channel artifact in a negative window.
          const auto c = static_cast<std::size_t>(unit(rng) * kSynthChannels) % kSynthChannels;
          const double amp = 1.0 + 2.0 * unit(rng);
          for (std::size_t i = 0; i < kSynthWindow; ++i) rec.channels[c][begin + i] += amp * gauss(rng);
        }
        break;
      case SynthTask::Tremor:
        if (label == 1) {
          for (std::size_t c = 0; c < 4; ++c) {
            const double f = 4.0 + 4.0 * unit(rng), amp = 2.0 + 2.0 * unit(rng), phase = two_pi * unit(rng);
            for (std::size_t i = 0; i < kSynthWindow; ++i)
              rec.channels[c][begin + i] += amp * std::sin(two_pi * f * static_cast<double>(i) / kSynthFs + phase);
          }
        }
        break;
      case SynthTask::Finger: {
        const auto c = static_cast<std::size_t>(label);
        for (int k = 0; k < 3; ++k) {
          const double f = 15.0 + 13.0 * unit(rng), phase = two_pi * unit(rng);
          for (std::size_t i = 0; i < kSynthWindow; ++i)
            rec.channels[c][begin + i] += 1.5 * std::sin(two_pi * f * static_cast<double>(i) / kSynthFs + phase);
        }
        break;
      }
    }
  }

  std::ostringstream note;
  note.precision(4);
  switch (task) {
    case SynthTask::Seizure:
      note << "seizure: broadband bursts on channels 0-3 in positive windows; mean line-length ratio "
              "positive/negative on channel 0 = "
           << mean_line_length(rec, out.labels, 1, 0) / mean_line_length(rec, out.labels, 0, 0);
      break;
    case SynthTask::Tremor:
      note << "tremor: 4-8 Hz oscillation bursts on channels 0-3 in positive windows; mean line-length ratio "
              "positive/negative on channel 0 = "
           << mean_line_length(rec, out.labels, 1, 0) / mean_line_length(rec, out.labels, 0, 0);
      break;
    case SynthTask::Finger:
      note << "finger: class k adds 13-30 Hz oscillations on channel k (k = 0..4); classes balanced in blocks of 4";
      break;
  }
  out.note = note.str();
  return out;
}

FeatureConfig synth_feature_config() {
  FeatureConfig cfg;
  cfg.windowing.window_samples = kSynthWindow;
  cfg.windowing.overlap = 0.0;
  for (int c = 0; c < kSynthChannels; ++c) {
    cfg.spec.entries.push_back({c, FeatureKind::LineLength, 0.0, 0.0});
    cfg.spec.entries.push_back({c, FeatureKind::Variance, 0.0, 0.0});
    cfg.spec.entries.push_back({c, FeatureKind::BandPower, 4.0, 8.0});
    cfg.spec.entries.push_back({c, FeatureKind::BandPower, 13.0, 30.0});
  }
  return cfg;
}

Dataset synth_dataset(SynthTask task, std::size_t n_windows, std::uint64_t seed) {
  const SynthRecording s = synthesize(task, n_windows, seed);
  Dataset ds = make_signal_dataset(s.recording, s.labels, s.features,
                                   std::string("synthetic:") + synth_task_name(task) + ":seed=" + std::to_string(seed));
  ds.num_classes = s.num_classes;
  return ds;
}

}  // namespace peot
