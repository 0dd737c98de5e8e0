#include "weaknet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace weaknet {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace

AudioClip load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open audio file: " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw AudioError("truncated fmt chunk: " + path.string());
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible && avail >= 26) {
        format = read_u16(bytes.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw AudioError("missing fmt chunk: " + path.string());
  if (data == nullptr) throw AudioError("missing data chunk: " + path.string());

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw AudioError("unsupported WAV encoding (format " + std::to_string(format) +
                     ", " + std::to_string(bits) + " bits): " + path.string());
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw AudioError("zero-length audio: " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * (bits / 8);
      if (pcm16) {
        sum += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float v;
        const std::uint32_t raw = read_u32(p);
        std::memcpy(&v, &raw, sizeof v);
        sum += v;
      }
    }
    clip.samples[f] = static_cast<float>(sum / channels);
  }
  return clip;
}

void write_wav16(const std::filesystem::path& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw AudioError("write_wav16: invalid sample rate");
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (float s : clip.samples) {
    // Same scale as the reader, so a round trip is exact to half a step.
    const long v = std::clamp(std::lround(static_cast<double>(s) * 32768.0), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw AudioError("cannot write audio file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw AudioError("write failed: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate <= 0 || target_rate <= 0) {
    throw std::invalid_argument("resample: sample rates must be positive");
  }
  if (clip.sample_rate == target_rate) return clip;
  const std::size_t in_len = clip.samples.size();
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const auto out_len = static_cast<std::size_t>(std::llround(in_len * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  if (in_len == 0) return out;
  const double step = static_cast<double>(clip.sample_rate) / target_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double t = i * step;
    const auto i0 = static_cast<std::size_t>(t);
    if (i0 + 1 >= in_len) {
      out.samples[i] = clip.samples[in_len - 1];
      continue;
    }
    const double frac = t - static_cast<double>(i0);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[i0] +
                                        frac * clip.samples[i0 + 1]);
  }
  return out;
}

}  // namespace weaknet
