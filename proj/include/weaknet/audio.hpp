#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace weaknet {

struct AudioClip {
  std::vector<float> samples;  // mono, amplitude in [-1, 1]
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a PCM WAV file (16-bit integer or 32-bit float). Multichannel input
/// is averaged to mono; 16-bit samples are scaled by 1/32768.
AudioClip load_audio(const std::filesystem::path& path);

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1] and rounded to the
/// nearest integer step.
void write_wav16(const std::filesystem::path& path, const AudioClip& clip);

/// Linear-interpolation resampling; output length is
/// round(len * target / source). Returns the input unchanged when the rates
/// already match.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace weaknet
