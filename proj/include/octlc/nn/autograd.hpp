#ifndef OCTLC_NN_AUTOGRAD_HPP_
#define OCTLC_NN_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "octlc/nn/kernels.hpp"
#include "octlc/nn/tensor.hpp"
#include "octlc/rng.hpp"

// Tape autograd over float tensors. Each op builds a node whose closure
// accumulates into the parents' grads; backward() walks the tape in
// reverse topological order. Nodes that no trainable leaf feeds are
// skipped entirely, so a frozen backbone costs only its forward pass.

namespace octlc::nn {

template <typename T>
struct NodeT;
template <typename T>
using VarT = std::shared_ptr<NodeT<T>>;

template <typename T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;
  bool requires_grad = false;
  std::vector<VarT<T>> parents;
  std::function<void(NodeT<T>&)> backward_fn;

  TensorT<T>& ensure_grad() {
    if (grad.shape != value.shape) grad = TensorT<T>(value.shape);
    return grad;
  }
  void zero_grad() {
    if (grad.shape == value.shape) grad.fill(T(0));
  }
};

using Node = NodeT<float>;
using Var = VarT<float>;

template <typename T>
VarT<T> make_leaf(TensorT<T> value, bool requires_grad) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <typename T>
VarT<T> make_node(TensorT<T> value, std::vector<VarT<T>> parents,
                  std::function<void(NodeT<T>&)> backward_fn) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const VarT<T>& p : n->parents) {
    if (p && p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

// Propagates root->grad (which the caller seeds) down the tape.
template <typename T>
void backward(const VarT<T>& root) {
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> seen;
  std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT<T>* parent = node->parents[next].get();
      ++next;
      if (parent != nullptr && parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* node = *it;
    if (node->requires_grad && node->backward_fn) node->backward_fn(*node);
  }
}

// ---- ops ----

template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b, int stride,
               int pad, int groups) {
  TensorT<T> y = conv2d_forward(x->value, w->value, b ? &b->value : nullptr,
                                stride, pad, groups);
  std::vector<VarT<T>> parents{x, w};
  if (b) parents.push_back(b);
  return make_node<T>(std::move(y), std::move(parents),
                      [x, w, b, stride, pad, groups](NodeT<T>& n) {
                        TensorT<T>* dx = x->requires_grad ? &x->ensure_grad() : nullptr;
                        TensorT<T>* dw = w->requires_grad ? &w->ensure_grad() : nullptr;
                        TensorT<T>* db =
                            (b && b->requires_grad) ? &b->ensure_grad() : nullptr;
                        conv2d_backward(x->value, w->value, n.grad, stride, pad,
                                        groups, dx, dw, db);
                      });
}

template <typename T>
VarT<T> linear(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b) {
  TensorT<T> y = linear_forward(x->value, w->value, b ? &b->value : nullptr);
  std::vector<VarT<T>> parents{x, w};
  if (b) parents.push_back(b);
  return make_node<T>(std::move(y), std::move(parents), [x, w, b](NodeT<T>& n) {
    TensorT<T>* dx = x->requires_grad ? &x->ensure_grad() : nullptr;
    TensorT<T>* dw = w->requires_grad ? &w->ensure_grad() : nullptr;
    TensorT<T>* db = (b && b->requires_grad) ? &b->ensure_grad() : nullptr;
    linear_backward(x->value, w->value, n.grad, dx, dw, db);
  });
}

// The layer's running statistics are updated in place during training
// forward passes; backward uses the saved batch statistics.
template <typename T>
VarT<T> batchnorm2d(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta,
                    const std::shared_ptr<TensorT<T>>& running_mean,
                    const std::shared_ptr<TensorT<T>>& running_var, bool train,
                    double momentum, double eps) {
  if (train) {
    auto save_mean = std::make_shared<TensorT<T>>(gamma->value.shape);
    auto save_invstd = std::make_shared<TensorT<T>>(gamma->value.shape);
    TensorT<T> y = batchnorm_forward_train(x->value, gamma->value, beta->value,
                                           eps, momentum, *running_mean,
                                           *running_var, *save_mean, *save_invstd);
    return make_node<T>(std::move(y), {x, gamma, beta},
                        [x, gamma, beta, save_mean, save_invstd](NodeT<T>& n) {
                          TensorT<T>* dx =
                              x->requires_grad ? &x->ensure_grad() : nullptr;
                          TensorT<T>* dg =
                              gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
                          TensorT<T>* db =
                              beta->requires_grad ? &beta->ensure_grad() : nullptr;
                          batchnorm_backward_train(x->value, gamma->value,
                                                   *save_mean, *save_invstd, n.grad,
                                                   dx, dg, db);
                        });
  }
  TensorT<T> y = batchnorm_forward_eval(x->value, gamma->value, beta->value,
                                        *running_mean, *running_var, eps);
  return make_node<T>(std::move(y), {x, gamma, beta},
                      [x, gamma, beta, running_mean, running_var, eps](NodeT<T>& n) {
                        TensorT<T>* dx =
                            x->requires_grad ? &x->ensure_grad() : nullptr;
                        TensorT<T>* dg =
                            gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
                        TensorT<T>* db =
                            beta->requires_grad ? &beta->ensure_grad() : nullptr;
                        batchnorm_backward_eval(x->value, gamma->value,
                                                *running_mean, *running_var, eps,
                                                n.grad, dx, dg, db);
                      });
}

template <typename T>
VarT<T> relu(const VarT<T>& x) {
  return make_node<T>(relu_forward(x->value), {x}, [x](NodeT<T>& n) {
    relu_backward(n.value, n.grad, &x->ensure_grad());
  });
}

template <typename T>
VarT<T> sigmoid(const VarT<T>& x) {
  return make_node<T>(sigmoid_forward(x->value), {x}, [x](NodeT<T>& n) {
    sigmoid_backward(n.value, n.grad, &x->ensure_grad());
  });
}

template <typename T>
VarT<T> maxpool2d(const VarT<T>& x, int k, int stride, int pad) {
  auto argmax = std::make_shared<std::vector<std::int32_t>>();
  TensorT<T> y = maxpool_forward(x->value, k, stride, pad, *argmax);
  auto shape = x->value.shape;
  return make_node<T>(std::move(y), {x}, [x, argmax, shape](NodeT<T>& n) {
    maxpool_backward(n.grad, *argmax, shape, &x->ensure_grad());
  });
}

template <typename T>
VarT<T> avgpool2d(const VarT<T>& x, int k, int stride) {
  TensorT<T> y = avgpool_forward(x->value, k, stride);
  auto shape = x->value.shape;
  return make_node<T>(std::move(y), {x}, [x, k, stride, shape](NodeT<T>& n) {
    avgpool_backward(n.grad, k, stride, shape, &x->ensure_grad());
  });
}

template <typename T>
VarT<T> global_avgpool(const VarT<T>& x) {
  TensorT<T> y = global_avgpool_forward(x->value);
  auto shape = x->value.shape;
  return make_node<T>(std::move(y), {x}, [x, shape](NodeT<T>& n) {
    global_avgpool_backward(n.grad, shape, &x->ensure_grad());
  });
}

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
  TensorT<T> y(a->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y.data[i] = a->value.data[i] + b->value.data[i];
  }
  return make_node<T>(std::move(y), {a, b}, [a, b](NodeT<T>& n) {
    if (a->requires_grad) {
      TensorT<T>& da = a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) da.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      TensorT<T>& db = b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) db.data[i] += n.grad.data[i];
    }
  });
}

// x [N, C, H, W] scaled per channel by s [N, C] (squeeze-excitation).
template <typename T>
VarT<T> channel_scale(const VarT<T>& x, const VarT<T>& s) {
  TensorT<T> y = channel_scale_forward(x->value, s->value);
  return make_node<T>(std::move(y), {x, s}, [x, s](NodeT<T>& n) {
    TensorT<T>* dx = x->requires_grad ? &x->ensure_grad() : nullptr;
    TensorT<T>* ds = s->requires_grad ? &s->ensure_grad() : nullptr;
    channel_scale_backward(x->value, s->value, n.grad, dx, ds);
  });
}

template <typename T>
VarT<T> concat_channels(const std::vector<VarT<T>>& xs) {
  const int n = xs[0]->value.dim(0);
  const int h = xs[0]->value.dim(2);
  const int w = xs[0]->value.dim(3);
  int c_total = 0;
  for (const VarT<T>& x : xs) c_total += x->value.dim(1);
  const std::size_t spatial = static_cast<std::size_t>(h) * w;

  TensorT<T> y({n, c_total, h, w});
  for (int ni = 0; ni < n; ++ni) {
    std::size_t dst = (static_cast<std::size_t>(ni) * c_total) * spatial;
    for (const VarT<T>& x : xs) {
      const std::size_t chunk = static_cast<std::size_t>(x->value.dim(1)) * spatial;
      const T* src = x->value.ptr() + static_cast<std::size_t>(ni) * chunk;
      std::copy(src, src + chunk, y.ptr() + dst);
      dst += chunk;
    }
  }
  std::vector<VarT<T>> parents(xs.begin(), xs.end());
  auto xs_copy = xs;
  return make_node<T>(std::move(y), std::move(parents),
                      [xs_copy, n, c_total, spatial](NodeT<T>& nd) {
                        for (int ni = 0; ni < n; ++ni) {
                          std::size_t src =
                              (static_cast<std::size_t>(ni) * c_total) * spatial;
                          for (const VarT<T>& x : xs_copy) {
                            const std::size_t chunk =
                                static_cast<std::size_t>(x->value.dim(1)) * spatial;
                            if (x->requires_grad) {
                              T* dst = x->ensure_grad().ptr() +
                                       static_cast<std::size_t>(ni) * chunk;
                              const T* g = nd.grad.ptr() + src;
                              for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
                            }
                            src += chunk;
                          }
                        }
                      });
}

// Inverted dropout; identity (same node) when not training or p == 0.
template <typename T>
VarT<T> dropout(const VarT<T>& x, double p, bool train, octlc::Rng& rng) {
  if (!train || p <= 0.0) return x;
  auto mask = std::make_shared<TensorT<T>>(x->value.shape);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  TensorT<T> y(x->value.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const T m = rng.bernoulli(p) ? T(0) : scale;
    mask->data[i] = m;
    y.data[i] = x->value.data[i] * m;
  }
  return make_node<T>(std::move(y), {x}, [x, mask](NodeT<T>& n) {
    TensorT<T>& dx = x->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) {
      dx.data[i] += n.grad.data[i] * mask->data[i];
    }
  });
}

}  // namespace octlc::nn

#endif  // OCTLC_NN_AUTOGRAD_HPP_
