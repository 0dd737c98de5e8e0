#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "helpers.hpp"
#include "weaknet/audio.hpp"
#include "weaknet/logmel.hpp"

using namespace weaknet;

namespace {

void put16(std::ofstream& f, std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); }
void put32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

// Minimal WAV writer for fixtures the library itself does not produce.
void write_wav(const std::filesystem::path& path, std::uint16_t format, std::uint16_t channels,
               std::uint16_t bits, std::uint32_t rate, const std::vector<char>& payload) {
  std::ofstream f(path, std::ios::binary);
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  f.write("RIFF", 4);
  put32(f, static_cast<std::uint32_t>(36 + payload.size()));
  f.write("WAVEfmt ", 8);
  put32(f, 16);
  put16(f, format);
  put16(f, channels);
  put32(f, rate);
  put32(f, rate * block);
  put16(f, block);
  put16(f, bits);
  f.write("data", 4);
  put32(f, static_cast<std::uint32_t>(payload.size()));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

template <class S>
std::vector<char> bytes_of(const std::vector<S>& v) {
  std::vector<char> out(v.size() * sizeof(S));
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

AudioClip sine(double hz, double seconds, int rate, double amplitude = 1.0) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / rate));
  }
  return c;
}

double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double inv_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("load_audio reads 16-bit mono and scales by 1/32768") {
    auto dir = testing::scratch_dir("dsp_load");
    std::vector<std::int16_t> pcm(44100, 0);
    pcm[0] = 32767;
    pcm[1] = -32768;
    write_wav(dir / "a.wav", 1, 1, 16, 44100, bytes_of(pcm));
    const AudioClip c = load_audio(dir / "a.wav");
    CHECK(c.sample_rate == 44100);
    CHECK(c.samples.size() == 44100);
    CHECK(c.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));
    CHECK(c.samples[1] == -1.0f);
  }

  TEST_CASE("stereo channels x and -x average to silence") {
    auto dir = testing::scratch_dir("dsp_stereo");
    std::vector<std::int16_t> pcm;
    for (int i = 0; i < 1000; ++i) {
      const auto v = static_cast<std::int16_t>((i * 37) % 20000 - 10000);
      pcm.push_back(v);
      pcm.push_back(static_cast<std::int16_t>(-v));
    }
    write_wav(dir / "s.wav", 1, 2, 16, 22050, bytes_of(pcm));
    const AudioClip c = load_audio(dir / "s.wav");
    CHECK(c.samples.size() == 1000);
    for (float v : c.samples) REQUIRE(v == 0.0f);
  }

  TEST_CASE("32-bit float WAV is read verbatim") {
    auto dir = testing::scratch_dir("dsp_float");
    std::vector<float> pcm{0.25f, -0.5f, 0.125f};
    write_wav(dir / "f.wav", 3, 1, 32, 8000, bytes_of(pcm));
    const AudioClip c = load_audio(dir / "f.wav");
    CHECK(c.samples == pcm);
  }

  TEST_CASE("write_wav16 round trip") {
    auto dir = testing::scratch_dir("dsp_rt");
    AudioClip c = sine(440.0, 0.1, 16000, 0.5);
    write_wav16(dir / "r.wav", c);
    const AudioClip back = load_audio(dir / "r.wav");
    REQUIRE(back.samples.size() == c.samples.size());
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      CHECK(std::fabs(back.samples[i] - c.samples[i]) <= 0.5f / 32768.0f + 1e-7f);
    }
  }

  TEST_CASE("load_audio errors") {
    auto dir = testing::scratch_dir("dsp_err");
    CHECK_THROWS_AS(load_audio(dir / "missing.wav"), AudioError);
    write_wav(dir / "u8.wav", 1, 1, 8, 8000, std::vector<char>(100, 0));
    CHECK_THROWS_AS(load_audio(dir / "u8.wav"), AudioError);
    write_wav(dir / "empty.wav", 1, 1, 16, 8000, {});
    CHECK_THROWS_AS(load_audio(dir / "empty.wav"), AudioError);
    std::ofstream(dir / "junk.wav") << "not audio at all";
    CHECK_THROWS_AS(load_audio(dir / "junk.wav"), AudioError);
  }

  TEST_CASE("resample length, no-op and spectral peak") {
    AudioClip c;
    c.sample_rate = 22050;
    c.samples.assign(22050, 0.1f);
    CHECK(resample(c, 44100).samples.size() == 44100);
    CHECK(resample(c, 44100).sample_rate == 44100);

    AudioClip same = sine(300.0, 0.2, 44100);
    CHECK(resample(same, 44100).samples == same.samples);

    const AudioClip up = resample(sine(100.0, 1.0, 8000), 44100);
    REQUIRE(up.samples.size() == 44100);
    // Direct DFT over 1 Hz bins up to 500 Hz.
    int best = 0;
    double best_mag = -1.0;
    for (int k = 1; k <= 500; ++k) {
      std::complex<double> acc{};
      for (std::size_t n = 0; n < up.samples.size(); ++n) {
        acc += static_cast<double>(up.samples[n]) *
               std::polar(1.0, -2.0 * std::numbers::pi * k * static_cast<double>(n) / 44100.0);
      }
      if (std::abs(acc) > best_mag) {
        best_mag = std::abs(acc);
        best = k;
      }
    }
    CHECK(best == 100);
  }

  TEST_CASE("mel filterbank rows are non-empty and centres increase") {
    const LogmelConfig cfg;
    const TensorD fb = mel_filterbank(cfg);
    REQUIRE(fb.dim(0) == 128);
    REQUIRE(fb.dim(1) == 513);
    for (std::size_t m = 0; m < 128; ++m) {
      double mx = 0.0;
      for (std::size_t k = 0; k < 513; ++k) {
        REQUIRE(fb[m * 513 + k] >= 0.0);
        mx = std::max(mx, fb[m * 513 + k]);
      }
      CHECK(mx > 0.0);
    }
    const auto centres = mel_center_frequencies(cfg);
    for (std::size_t i = 1; i < centres.size(); ++i) CHECK(centres[i] > centres[i - 1]);
  }

  TEST_CASE("small filterbank matches a hand mel computation") {
    LogmelConfig cfg;
    cfg.sample_rate = 8000;
    cfg.fft_size = 256;
    cfg.hop_size = 128;
    cfg.n_mels = 4;
    cfg.fmin = 0.0;
    const double top = mel(4000.0);
    std::vector<double> edges;
    for (int i = 0; i < 6; ++i) edges.push_back(inv_mel(top * i / 5.0));
    const auto centres = mel_center_frequencies(cfg);
    for (int m = 0; m < 4; ++m) CHECK(centres[m] == doctest::Approx(edges[m + 1]).epsilon(1e-12));
    // 0 Hz, 312.5 Hz, ... edges in FFT bins of 31.25 Hz.
    const TensorD fb = mel_filterbank(cfg);
    for (int m = 0; m < 4; ++m) {
      for (int k = 0; k <= 128; ++k) {
        const double f = k * 8000.0 / 256.0;
        const double w = std::max(0.0, std::min((f - edges[m]) / (edges[m + 1] - edges[m]),
                                                (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1])));
        REQUIRE(fb[m * 129 + k] == doctest::Approx(w).epsilon(1e-12));
      }
    }
    // Centre bins: round(centre / 31.25).
    const int expected_peaks[4] = {static_cast<int>(std::lround(edges[1] / 31.25)),
                                   static_cast<int>(std::lround(edges[2] / 31.25)),
                                   static_cast<int>(std::lround(edges[3] / 31.25)),
                                   static_cast<int>(std::lround(edges[4] / 31.25))};
    for (int m = 0; m < 4; ++m) {
      int arg = 0;
      for (int k = 0; k <= 128; ++k) {
        if (fb[m * 129 + k] > fb[m * 129 + arg]) arg = k;
      }
      CHECK(std::abs(arg - expected_peaks[m]) <= 1);
    }
  }

  TEST_CASE("too many mel bands for the FFT is a configuration error") {
    LogmelConfig cfg;
    cfg.sample_rate = 8000;
    cfg.fft_size = 64;
    cfg.hop_size = 32;
    cfg.n_mels = 128;
    CHECK_THROWS_AS(mel_filterbank(cfg), std::invalid_argument);
  }

  TEST_CASE("config validation") {
    LogmelConfig cfg;
    cfg.hop_size = 2048;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.fmax = 30000.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.fmin = 5000.0;
    cfg.fmax = 4000.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.n_mels = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  TEST_CASE("ten seconds at defaults gives 860 frames") {
    AudioClip c;
    c.sample_rate = 44100;
    c.samples.assign(441000, 0.0f);
    const LogmelSpectrogram s = logmel(c, {});
    CHECK(s.num_frames == (441000 - 1024) / 512 + 1);
    CHECK(s.num_frames == 860);
    CHECK(s.n_mels() == 128);
  }

  TEST_CASE("digital silence sits on the floor") {
    AudioClip c;
    c.sample_rate = 44100;
    c.samples.assign(5000, 0.0f);
    const LogmelSpectrogram s = logmel(c, {});
    const float floor = static_cast<float>(std::log(1e-10));
    for (float v : s.frames) REQUIRE(v == floor);
  }

  TEST_CASE("1 kHz sine peaks in the band centred nearest 1 kHz") {
    const LogmelConfig cfg;
    const LogmelSpectrogram s = logmel(sine(1000.0, 0.5, 44100), cfg);
    const auto centres = mel_center_frequencies(cfg);
    std::size_t nearest = 0;
    for (std::size_t m = 0; m < centres.size(); ++m) {
      if (std::fabs(centres[m] - 1000.0) < std::fabs(centres[nearest] - 1000.0)) nearest = m;
    }
    for (std::size_t t = 0; t < s.num_frames; ++t) {
      std::size_t arg = 0;
      for (std::size_t m = 0; m < 128; ++m) {
        if (s.at(t, m) > s.at(t, arg)) arg = m;
      }
      REQUIRE(arg == nearest);
    }
  }

  TEST_CASE("short clips are rejected and rates must match") {
    AudioClip c;
    c.sample_rate = 44100;
    c.samples.assign(1000, 0.0f);
    CHECK_THROWS_AS(logmel(c, {}), std::invalid_argument);
    c.samples.assign(4000, 0.0f);
    c.sample_rate = 22050;
    CHECK_THROWS_AS(logmel(c, {}), std::invalid_argument);
  }

  TEST_CASE("frame count formula over random lengths") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> len(1024, 30000);
    for (int trial = 0; trial < 20; ++trial) {
      AudioClip c;
      c.sample_rate = 44100;
      c.samples.assign(len(rng), 0.01f);
      CHECK(logmel(c, {}).num_frames == (c.samples.size() - 1024) / 512 + 1);
      CHECK(logmel_frame_count(c.samples.size(), {}) == (c.samples.size() - 1024) / 512 + 1);
    }
  }

  TEST_CASE("trailing samples shorter than a hop do not change the output") {
    AudioClip c = sine(700.0, 0.3, 44100, 0.3);
    // Make the length an exact frame boundary first.
    c.samples.resize(1024 + 512 * 20);
    const LogmelSpectrogram a = logmel(c, {});
    std::mt19937_64 rng(9);
    for (int extra = 1; extra < 512; extra += 97) {
      AudioClip d = c;
      for (int i = 0; i < extra; ++i) d.samples.push_back(static_cast<float>(rng() % 100) / 200.0f);
      CHECK(logmel(d, {}).frames == a.frames);
    }
  }

  TEST_CASE("scaling by alpha shifts log energy by 2 log alpha") {
    AudioClip c = sine(1500.0, 0.2, 44100, 0.2);
    for (std::size_t i = 0; i < c.samples.size(); ++i) c.samples[i] += 0.01f * std::sin(0.37f * i);
    const LogmelSpectrogram a = logmel(c, {});
    // Powers of two scale float samples exactly.
    for (double alpha : {0.25, 0.5, 2.0, 4.0}) {
      AudioClip d = c;
      for (float& v : d.samples) v = static_cast<float>(v * alpha);
      const LogmelSpectrogram b = logmel(d, {});
      const double floor = std::log(1e-10);
      for (std::size_t i = 0; i < a.frames.size(); ++i) {
        if (a.frames[i] > floor + 5.0 && b.frames[i] > floor + 5.0) {
          REQUIRE(std::fabs((b.frames[i] - a.frames[i]) - 2.0 * std::log(alpha)) < 1e-4);
        }
      }
    }
  }

  TEST_CASE("featurization is deterministic and LMEL files round trip") {
    const AudioClip c = sine(2500.0, 0.4, 44100, 0.4);
    const LogmelSpectrogram a = logmel(c, {});
    CHECK(logmel(c, {}).frames == a.frames);
    auto dir = testing::scratch_dir("dsp_lmel");
    write_logmel(dir / "x.lmel", a);
    const LogmelSpectrogram b = read_logmel(dir / "x.lmel");
    CHECK(b.frames == a.frames);
    CHECK(b.num_frames == a.num_frames);
    std::ifstream in(dir / "x.lmel", std::ios::binary);
    char head[16];
    in.read(head, 16);
    CHECK(std::string(head, 4) == "LMEL");
    std::uint32_t v[3];
    std::memcpy(v, head + 4, 12);
    CHECK(v[0] == 1);
    CHECK(v[1] == a.num_frames);
    CHECK(v[2] == 128);
    LogmelConfig other;
    other.n_mels = 64;
    CHECK_THROWS(read_logmel(dir / "x.lmel", other));
  }
}
