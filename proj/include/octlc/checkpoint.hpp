#ifndef OCTLC_CHECKPOINT_HPP_
#define OCTLC_CHECKPOINT_HPP_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "octlc/nn/tensor.hpp"

namespace octlc {

// Tensor container in the safetensors layout: an 8-byte little-endian
// header length, a JSON header mapping tensor names to dtype/shape/offsets
// (plus free-form string metadata under __metadata__), then raw data.
// Only F32 tensors are stored.
struct Checkpoint {
  std::vector<std::pair<std::string, nn::Tensor>> tensors;  // ordered
  std::map<std::string, std::string> metadata;

  const nn::Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

void save_safetensors(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_safetensors(const std::string& path);

}  // namespace octlc

#endif  // OCTLC_CHECKPOINT_HPP_
