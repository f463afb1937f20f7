#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "peot/dataset.hpp"
#include "peot/signal_features.hpp"

namespace peot {

enum class SynthTask { Seizure, Tremor, Finger };

SynthTask parse_synth_task(const std::string& name);
const char* synth_task_name(SynthTask task);

struct SynthRecording {
  Recording recording;
  std::vector<int> labels;  // per window
  int num_classes = 2;
  FeatureConfig features;
  std::string note;
};

inline constexpr int kSynthChannels = 8;
inline constexpr double kSynthFs = 256.0;
inline constexpr std::size_t kSynthWindow = 256;

// Eight channels at 256 Hz, one-second windows.
//   seizure: ~25% positive windows in runs; broadband bursts on channels 0-3.
//   tremor:  4-8 Hz oscillation bursts on channels 0-3.
//   finger:  five balanced classes; class k adds 13-30 Hz power on channel k.
SynthRecording synthesize(SynthTask task, std::size_t n_windows, std::uint64_t seed);

// Per channel: LineLength, Variance, BandPower(4-8 Hz), BandPower(13-30 Hz).
FeatureConfig synth_feature_config();

Dataset synth_dataset(SynthTask task, std::size_t n_windows, std::uint64_t seed);

}  // namespace peot
