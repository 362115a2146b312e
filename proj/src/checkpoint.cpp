#include "octlc/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "octlc/error.hpp"

using nlohmann::json;

namespace octlc {

static_assert(sizeof(float) == 4, "float must be 32-bit");

void save_safetensors(const Checkpoint& ckpt, const std::string& path) {
  json header = json::object();
  if (!ckpt.metadata.empty()) {
    json meta = json::object();
    for (const auto& [k, v] : ckpt.metadata) meta[k] = v;
    header["__metadata__"] = meta;
  }
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    const std::uint64_t bytes = tensor.numel() * 4;
    header[name] = json{{"dtype", "F32"},
                        {"shape", tensor.shape},
                        {"data_offsets", json::array({offset, offset + bytes})}};
    offset += bytes;
  }
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  const std::uint64_t header_len = header_str.size();
  char len_le[8];
  for (int i = 0; i < 8; ++i) len_le[i] = static_cast<char>(header_len >> (8 * i));
  out.write(len_le, 8);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(tensor.ptr()),
              static_cast<std::streamsize>(tensor.numel() * 4));
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint load_safetensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);

  char len_le[8];
  in.read(len_le, 8);
  if (in.gcount() != 8) throw IoError("checkpoint: truncated file " + path);
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) {
    header_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(len_le[i]))
                  << (8 * i);
  }
  if (header_len > (1u << 26)) {
    throw IoError("checkpoint: implausible header length in " + path);
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) {
    throw IoError("checkpoint: truncated header in " + path);
  }
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw IoError("checkpoint: malformed header in " + path + ": " + e.what());
  }

  // Data begins right after the header; entries are sorted by offset so
  // the tensors vector preserves on-disk order.
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t begin = 0, end = 0;
  };
  std::vector<Entry> entries;
  Checkpoint ckpt;
  for (const auto& [key, value] : header.items()) {
    if (key == "__metadata__") {
      for (const auto& [mk, mv] : value.items()) {
        ckpt.metadata[mk] = mv.get<std::string>();
      }
      continue;
    }
    Entry e;
    e.name = key;
    if (value.at("dtype").get<std::string>() != "F32") {
      throw IoError("checkpoint: tensor " + key + " is not F32 in " + path);
    }
    e.shape = value.at("shape").get<std::vector<int>>();
    const auto offsets = value.at("data_offsets");
    e.begin = offsets.at(0).get<std::uint64_t>();
    e.end = offsets.at(1).get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.begin < b.begin; });

  const std::streampos data_start = in.tellg();
  for (const auto& e : entries) {
    nn::Tensor t(e.shape);
    if (t.numel() * 4 != e.end - e.begin) {
      throw IoError("checkpoint: size mismatch for tensor " + e.name + " in " + path);
    }
    in.seekg(data_start + static_cast<std::streamoff>(e.begin));
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * 4));
    if (static_cast<std::uint64_t>(in.gcount()) != t.numel() * 4) {
      throw IoError("checkpoint: truncated tensor " + e.name + " in " + path);
    }
    ckpt.tensors.emplace_back(e.name, std::move(t));
  }
  return ckpt;
}

}  // namespace octlc
