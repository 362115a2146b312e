#ifndef OCTLC_NN_TENSOR_HPP_
#define OCTLC_NN_TENSOR_HPP_

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "octlc/error.hpp"

namespace octlc::nn {

// Dense row-major tensor. NCHW for feature maps, [out, in] for linear
// weights, [out_ch, in_ch/groups, kh, kw] for conv weights.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(count(shape), T(0));
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }
  static TensorT zeros_like(const TensorT& o) { return TensorT(o.shape); }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  void reshape(std::vector<int> s) {
    if (count(s) != data.size()) {
      throw ValidationError("tensor: reshape changes element count");
    }
    shape = std::move(s);
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }
};

using Tensor = TensorT<float>;

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace octlc::nn

#endif  // OCTLC_NN_TENSOR_HPP_
