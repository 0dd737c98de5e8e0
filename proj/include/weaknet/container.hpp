#pragma once

// Binary container shared by checkpoints and SVM models: u64 header length,
// a JSON header, then raw little-endian f32 blobs described by header["blobs"].

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "weaknet/tensor.hpp"

namespace weaknet {

struct NamedBlob {
  std::string name;
  Tensor tensor;
};

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<NamedBlob>& blobs);

struct Container {
  nlohmann::json header;
  std::vector<NamedBlob> blobs;
  const Tensor* find(const std::string& name) const;
};

Container read_container(const std::filesystem::path& path);

}  // namespace weaknet
