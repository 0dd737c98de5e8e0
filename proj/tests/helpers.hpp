#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "weaknet/logmel.hpp"
#include "weaknet/tensor.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("weaknet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <class T>
weaknet::BasicTensor<T> random_tensor(weaknet::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  weaknet::BasicTensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(u(rng));
  return t;
}

// Random logmel in a plausible range, T frames x 128 bands.
inline weaknet::LogmelSpectrogram random_logmel(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-12.0f, 2.0f);
  weaknet::LogmelSpectrogram x;
  x.num_frames = frames;
  x.frames.resize(frames * 128);
  for (float& v : x.frames) v = u(rng);
  return x;
}

inline bool same_bits(const weaknet::Tensor& a, const weaknet::Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace testing
