#ifndef OCTLC_NN_MODULES_HPP_
#define OCTLC_NN_MODULES_HPP_

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "octlc/nn/autograd.hpp"

namespace octlc::nn {

struct NamedParam {
  std::string name;
  Var var;
};

struct NamedBuffer {
  std::string name;
  std::shared_ptr<Tensor> tensor;
};

// Owns the name -> tensor mapping of a model part, in registration order.
// Registration order is the canonical order for digests, checkpoints and
// seeded initialization.
class Registry {
 public:
  Var add_param(const std::string& name, std::vector<int> shape) {
    Var v = make_leaf(Tensor(std::move(shape)), true);
    params_.push_back({name, v});
    return v;
  }
  std::shared_ptr<Tensor> add_buffer(const std::string& name,
                                     std::vector<int> shape) {
    auto t = std::make_shared<Tensor>(std::move(shape));
    buffers_.push_back({name, t});
    return t;
  }

  const std::vector<NamedParam>& params() const { return params_; }
  const std::vector<NamedBuffer>& buffers() const { return buffers_; }

  void set_trainable(bool trainable) {
    for (auto& p : params_) p.var->requires_grad = trainable;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var->value.numel();
    return n;
  }

 private:
  std::vector<NamedParam> params_;
  std::vector<NamedBuffer> buffers_;
};

struct Conv2dLayer {
  Var w;
  Var b;  // null for the backbone convolutions
  int stride = 1, pad = 0, groups = 1;

  Conv2dLayer() = default;
  Conv2dLayer(Registry& reg, const std::string& prefix, int in_ch, int out_ch,
              int k, int stride_, int pad_, int groups_ = 1, bool bias = false)
      : stride(stride_), pad(pad_), groups(groups_) {
    w = reg.add_param(prefix + ".weight", {out_ch, in_ch / groups_, k, k});
    if (bias) b = reg.add_param(prefix + ".bias", {out_ch});
  }

  Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad, groups); }

  // He-normal fan-in initialization.
  void init(octlc::Rng& rng) {
    const int fan_in = w->value.dim(1) * w->value.dim(2) * w->value.dim(3);
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : w->value.data) v = static_cast<float>(rng.normal(0.0, stddev));
    if (b) b->value.fill(0.0f);
  }
};

struct BatchNorm2dLayer {
  Var gamma;
  Var beta;
  std::shared_ptr<Tensor> running_mean;
  std::shared_ptr<Tensor> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm2dLayer() = default;
  BatchNorm2dLayer(Registry& reg, const std::string& prefix, int channels) {
    gamma = reg.add_param(prefix + ".weight", {channels});
    beta = reg.add_param(prefix + ".bias", {channels});
    running_mean = reg.add_buffer(prefix + ".running_mean", {channels});
    running_var = reg.add_buffer(prefix + ".running_var", {channels});
    running_var->fill(1.0f);
  }

  Var operator()(const Var& x, bool train) const {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, train,
                       momentum, eps);
  }

  void init(octlc::Rng&) {
    gamma->value.fill(1.0f);
    beta->value.fill(0.0f);
    running_mean->fill(0.0f);
    running_var->fill(1.0f);
  }
};

struct LinearLayer {
  Var w;
  Var b;

  LinearLayer() = default;
  LinearLayer(Registry& reg, const std::string& prefix, int in_dim, int out_dim) {
    w = reg.add_param(prefix + ".weight", {out_dim, in_dim});
    b = reg.add_param(prefix + ".bias", {out_dim});
  }

  Var operator()(const Var& x) const { return linear(x, w, b); }

  // Uniform in +-1/sqrt(fan_in) for both weight and bias.
  void init(octlc::Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w->value.dim(1)));
    for (auto& v : w->value.data) v = static_cast<float>(rng.uniform(-bound, bound));
    for (auto& v : b->value.data) v = static_cast<float>(rng.uniform(-bound, bound));
  }
};

}  // namespace octlc::nn

#endif  // OCTLC_NN_MODULES_HPP_
