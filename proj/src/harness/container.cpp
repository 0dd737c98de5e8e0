#include "weaknet/container.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace weaknet {

static_assert(std::endian::native == std::endian::little,
              "container blobs are written in host byte order");

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<NamedBlob>& blobs) {
  nlohmann::json index = nlohmann::json::array();
  for (const NamedBlob& b : blobs) index.push_back({{"name", b.name}, {"shape", b.tensor.shape()}});
  header["blobs"] = index;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const NamedBlob& b : blobs) {
    out.write(reinterpret_cast<const char*>(b.tensor.data()),
              static_cast<std::streamsize>(b.tensor.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

const Tensor* Container::find(const std::string& name) const {
  for (const NamedBlob& b : blobs) {
    if (b.name == name) return &b.tensor;
  }
  return nullptr;
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ull << 30)) throw std::runtime_error("corrupt header in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated header in " + path.string());
  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad header in " + path.string() + ": " + e.what());
  }
  for (const auto& entry : c.header.at("blobs")) {
    NamedBlob b;
    b.name = entry.at("name").get<std::string>();
    b.tensor = Tensor(entry.at("shape").get<Shape>());
    in.read(reinterpret_cast<char*>(b.tensor.data()),
            static_cast<std::streamsize>(b.tensor.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated blob '" + b.name + "' in " + path.string());
    c.blobs.push_back(std::move(b));
  }
  return c;
}

}  // namespace weaknet
