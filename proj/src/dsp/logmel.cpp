#include "weaknet/logmel.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace weaknet {
namespace {

// In-place iterative radix-2 FFT.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), twiddle_(n / 2), rev_(n) {
    if (n == 0 || !std::has_single_bit(n)) {
      throw std::invalid_argument("fft size must be a power of two");
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) /
                                        static_cast<double>(n));
    }
    const int bits = std::countr_zero(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      rev_[i] = r;
    }
  }

  void transform(std::vector<std::complex<double>>& a) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < rev_[i]) std::swap(a[i], a[rev_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t step = n_ / len;
      for (std::size_t i = 0; i < n_; i += len) {
        for (std::size_t j = 0; j < len / 2; ++j) {
          const std::complex<double> u = a[i + j];
          const std::complex<double> v = a[i + j + len / 2] * twiddle_[j * step];
          a[i + j] = u + v;
          a[i + j + len / 2] = u - v;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> rev_;
};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4] = {};
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

double LogmelConfig::floor_value() const { return std::log(log_floor); }

void LogmelConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("logmel: sample_rate must be positive");
  if (fft_size <= 0 || !std::has_single_bit(static_cast<unsigned>(fft_size))) {
    throw std::invalid_argument("logmel: fft_size must be a positive power of two");
  }
  if (hop_size <= 0 || hop_size > fft_size) {
    throw std::invalid_argument("logmel: hop_size must be in [1, fft_size]");
  }
  if (n_mels < 1) throw std::invalid_argument("logmel: n_mels must be >= 1");
  if (fmin < 0.0 || !(fmin < effective_fmax()) || effective_fmax() > sample_rate / 2.0) {
    throw std::invalid_argument("logmel: need 0 <= fmin < fmax <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) throw std::invalid_argument("logmel: log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {
std::vector<double> mel_edges(const LogmelConfig& config) {
  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.effective_fmax());
  const auto points = static_cast<std::size_t>(config.n_mels) + 2;
  std::vector<double> hz(points);
  for (std::size_t i = 0; i < points; ++i) {
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return hz;
}
}  // namespace

std::vector<double> mel_center_frequencies(const LogmelConfig& config) {
  config.validate();
  const std::vector<double> edges = mel_edges(config);
  return {edges.begin() + 1, edges.end() - 1};
}

TensorD mel_filterbank(const LogmelConfig& config) {
  config.validate();
  const std::vector<double> edges = mel_edges(config);
  const auto bins = static_cast<std::size_t>(config.fft_size / 2 + 1);
  const auto mels = static_cast<std::size_t>(config.n_mels);
  TensorD fb({mels, bins});
  for (std::size_t m = 0; m < mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / config.fft_size;
      const double rising = (f - lo) / (center - lo);
      const double falling = (hi - f) / (hi - center);
      const double w = std::max(0.0, std::min(rising, falling));
      fb[m * bins + k] = w;
      any = any || w > 0.0;
    }
    if (!any) {
      throw std::invalid_argument(
          "mel_filterbank: filter " + std::to_string(m) + " (" +
          std::to_string(center) + " Hz) covers no FFT bin; reduce n_mels, raise "
          "fmin or increase fft_size");
    }
  }
  return fb;
}

std::size_t logmel_frame_count(std::size_t num_samples, const LogmelConfig& config) {
  const auto fft = static_cast<std::size_t>(config.fft_size);
  if (num_samples < fft) return 0;
  return (num_samples - fft) / static_cast<std::size_t>(config.hop_size) + 1;
}

LogmelSpectrogram logmel(const AudioClip& clip, const LogmelConfig& config) {
  config.validate();
  if (clip.sample_rate != config.sample_rate) {
    throw std::invalid_argument("logmel: clip sample rate " + std::to_string(clip.sample_rate) +
                                " differs from config " + std::to_string(config.sample_rate) +
                                "; resample first");
  }
  const auto fft = static_cast<std::size_t>(config.fft_size);
  if (clip.samples.size() < fft) {
    throw std::invalid_argument("logmel: clip shorter than one analysis window (" +
                                std::to_string(clip.samples.size()) + " < " +
                                std::to_string(fft) + " samples)");
  }
  const TensorD fb = mel_filterbank(config);
  const std::size_t bins = fft / 2 + 1;
  const std::size_t mels = static_cast<std::size_t>(config.n_mels);

  std::vector<double> window(fft);
  for (std::size_t i = 0; i < fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(fft));
  }
  // Sparse filter rows: [first, last) nonzero bin per filter.
  std::vector<std::pair<std::size_t, std::size_t>> support(mels);
  for (std::size_t m = 0; m < mels; ++m) {
    std::size_t first = bins, last = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      if (fb[m * bins + k] > 0.0) {
        first = std::min(first, k);
        last = k + 1;
      }
    }
    support[m] = {first, last};
  }

  LogmelSpectrogram out;
  out.config = config;
  out.num_frames = logmel_frame_count(clip.samples.size(), config);
  out.frames.resize(out.num_frames * mels);
  const double floor = config.log_floor;
  const Fft transform(fft);
  std::vector<std::complex<double>> buf(fft);
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < out.num_frames; ++t) {
    const float* x = clip.samples.data() + t * static_cast<std::size_t>(config.hop_size);
    for (std::size_t i = 0; i < fft; ++i) buf[i] = {x[i] * window[i], 0.0};
    transform.transform(buf);
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(buf[k]);
    for (std::size_t m = 0; m < mels; ++m) {
      double e = 0.0;
      for (std::size_t k = support[m].first; k < support[m].second; ++k) {
        e += fb[m * bins + k] * power[k];
      }
      out.frames[t * mels + m] = static_cast<float>(std::log(std::max(e, floor)));
    }
  }
  return out;
}

void write_logmel(const std::filesystem::path& path, const LogmelSpectrogram& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file: " + path.string());
  out.write("LMEL", 4);
  put_u32(out, kLogmelFileVersion);
  put_u32(out, static_cast<std::uint32_t>(spec.num_frames));
  put_u32(out, static_cast<std::uint32_t>(spec.n_mels()));
  static_assert(std::endian::native == std::endian::little,
                "feature files are written in host byte order");
  out.write(reinterpret_cast<const char*>(spec.frames.data()),
            static_cast<std::streamsize>(spec.frames.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

LogmelSpectrogram read_logmel(const std::filesystem::path& path,
                              const LogmelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LMEL", 4) != 0) {
    throw std::runtime_error("not an LMEL feature file: " + path.string());
  }
  const std::uint32_t version = get_u32(in);
  if (version != kLogmelFileVersion) {
    throw std::runtime_error("unsupported LMEL version " + std::to_string(version));
  }
  const std::uint32_t frames = get_u32(in);
  const std::uint32_t mels = get_u32(in);
  if (static_cast<int>(mels) != config.n_mels) {
    throw std::runtime_error("feature file " + path.string() + " has " + std::to_string(mels) +
                             " mel bands, expected " + std::to_string(config.n_mels));
  }
  LogmelSpectrogram spec;
  spec.config = config;
  spec.num_frames = frames;
  spec.frames.resize(static_cast<std::size_t>(frames) * mels);
  in.read(reinterpret_cast<char*>(spec.frames.data()),
          static_cast<std::streamsize>(spec.frames.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated feature file: " + path.string());
  return spec;
}

}  // namespace weaknet
