#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "weaknet/audio.hpp"
#include "weaknet/tensor.hpp"

namespace weaknet {

struct LogmelConfig {
  int sample_rate = 44100;
  int fft_size = 1024;  // ~23.2 ms at 44.1 kHz
  int hop_size = 512;   // ~11.6 ms
  int n_mels = 128;
  double fmin = 20.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;

  double effective_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  double floor_value() const;
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct LogmelSpectrogram {
  std::vector<float> frames;  // num_frames x n_mels, row-major
  std::size_t num_frames = 0;
  LogmelConfig config;

  std::size_t n_mels() const { return static_cast<std::size_t>(config.n_mels); }
  float at(std::size_t t, std::size_t band) const { return frames[t * n_mels() + band]; }
};

/// 2595 * log10(1 + f / 700)
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the mel scale, shape [n_mels, fft_size/2 + 1].
/// Throws std::invalid_argument if any filter has no positive weight.
TensorD mel_filterbank(const LogmelConfig& config);

/// Center frequencies (Hz) of the mel filters.
std::vector<double> mel_center_frequencies(const LogmelConfig& config);

std::size_t logmel_frame_count(std::size_t num_samples, const LogmelConfig& config);

/// Hann-windowed power STFT -> mel energies -> natural log with floor.
LogmelSpectrogram logmel(const AudioClip& clip, const LogmelConfig& config);

// LMEL feature file: "LMEL", u32 version, u32 T, u32 n_mels, then f32 data,
// all little-endian.
inline constexpr std::uint32_t kLogmelFileVersion = 1;
void write_logmel(const std::filesystem::path& path, const LogmelSpectrogram& spec);
/// `config` supplies everything the file does not carry; n_mels is taken
/// from the file and must match config.n_mels.
LogmelSpectrogram read_logmel(const std::filesystem::path& path,
                              const LogmelConfig& config = {});

}  // namespace weaknet
