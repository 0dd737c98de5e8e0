#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace weaknet {

/// 64-bit FNV-1a; used for provenance digests, not for security.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ull;
    }
  }
  void update(const void* data, std::size_t size) {
    update(std::string_view(static_cast<const char*>(data), size));
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string fnv1a_hex(std::string_view bytes);
/// Digest of a file's bytes; throws std::runtime_error if unreadable.
std::string file_digest(const std::filesystem::path& path);

}  // namespace weaknet
