#ifndef OCTLC_NN_KERNELS_HPP_
#define OCTLC_NN_KERNELS_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

#include "octlc/nn/tensor.hpp"

// Dense layer kernels, templated on the scalar so gradient formulas can be
// finite-difference checked in double while the engine runs float.
// Backward kernels ACCUMULATE into their output gradients; callers zero
// them first. Batch samples are independent except for batchnorm
// statistics and weight-gradient reduction, which are reduced in fixed
// order so results do not depend on thread count.

namespace octlc::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// col layout: [C*kh*kw, Ho*Wo] row major.
template <typename T>
void im2col(const T* x, int channels, int h, int w, int kh, int kw, int stride,
            int pad, T* col) {
  const int ho = conv_out_dim(h, kh, stride, pad);
  const int wo = conv_out_dim(w, kw, stride, pad);
  const std::size_t l = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * l;
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oi) * wo;
          if (ii < 0 || ii >= h) {
            for (int oj = 0; oj < wo; ++oj) dst[oj] = T(0);
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride - pad + kj;
            dst[oj] = (jj >= 0 && jj < w) ? src[jj] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a col buffer back onto the image; inverse map of im2col.
template <typename T>
void col2im(const T* col, int channels, int h, int w, int kh, int kw, int stride,
            int pad, T* x) {
  const int ho = conv_out_dim(h, kh, stride, pad);
  const int wo = conv_out_dim(w, kw, stride, pad);
  const std::size_t l = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c) * kh * kw + ki * kw + kj) * l;
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          const T* src = row + static_cast<std::size_t>(oi) * wo;
          T* dst = plane + static_cast<std::size_t>(ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride - pad + kj;
            if (jj >= 0 && jj < w) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

// x [N, Cin, H, W], w [Cout, Cin/groups, kh, kw], bias [Cout] or null.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w,
                          const TensorT<T>* bias, int stride, int pad,
                          int groups) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), cin_g = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (cin != cin_g * groups || cout % groups != 0) {
    throw ValidationError("conv2d: channel/group mismatch, x=" +
                          shape_str(x.shape) + " w=" + shape_str(w.shape));
  }
  const int ho = conv_out_dim(h, kh, stride, pad);
  const int wo = conv_out_dim(wd, kw, stride, pad);
  const int cout_g = cout / groups;
  const std::size_t k = static_cast<std::size_t>(cin_g) * kh * kw;
  const std::size_t l = static_cast<std::size_t>(ho) * wo;

  TensorT<T> y({n, cout, ho, wo});
#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    std::vector<T> col(k * l);
    for (int g = 0; g < groups; ++g) {
      const T* xg = x.ptr() + (static_cast<std::size_t>(ni) * cin +
                               static_cast<std::size_t>(g) * cin_g) * h * wd;
      im2col(xg, cin_g, h, wd, kh, kw, stride, pad, col.data());
      CMapM<T> wm(w.ptr() + static_cast<std::size_t>(g) * cout_g * k, cout_g,
                  static_cast<Eigen::Index>(k));
      CMapM<T> cm(col.data(), static_cast<Eigen::Index>(k),
                  static_cast<Eigen::Index>(l));
      MapM<T> ym(y.ptr() + (static_cast<std::size_t>(ni) * cout +
                            static_cast<std::size_t>(g) * cout_g) * l,
                 cout_g, static_cast<Eigen::Index>(l));
      ym.noalias() = wm * cm;
    }
    if (bias != nullptr) {
      for (int c = 0; c < cout; ++c) {
        T* dst = y.ptr() + (static_cast<std::size_t>(ni) * cout + c) * l;
        const T b = bias->data[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < l; ++i) dst[i] += b;
      }
    }
  }
  return y;
}

// Any of dx, dw, db may be null. dw is reduced over samples in index order.
template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w,
                     const TensorT<T>& dy, int stride, int pad, int groups,
                     TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), cin_g = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int ho = dy.dim(2), wo = dy.dim(3);
  const int cout_g = cout / groups;
  const std::size_t k = static_cast<std::size_t>(cin_g) * kh * kw;
  const std::size_t l = static_cast<std::size_t>(ho) * wo;

  std::vector<TensorT<T>> dw_partial;
  if (dw != nullptr) {
    dw_partial.assign(static_cast<std::size_t>(n), TensorT<T>(w.shape));
  }

#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    std::vector<T> col(k * l);
    std::vector<T> dcol(dx != nullptr ? k * l : 0);
    for (int g = 0; g < groups; ++g) {
      const std::size_t x_off = (static_cast<std::size_t>(ni) * cin +
                                 static_cast<std::size_t>(g) * cin_g) * h * wd;
      const std::size_t y_off = (static_cast<std::size_t>(ni) * cout +
                                 static_cast<std::size_t>(g) * cout_g) * l;
      CMapM<T> dym(dy.ptr() + y_off, cout_g, static_cast<Eigen::Index>(l));
      CMapM<T> wm(w.ptr() + static_cast<std::size_t>(g) * cout_g * k, cout_g,
                  static_cast<Eigen::Index>(k));

      if (dw != nullptr) {
        im2col(x.ptr() + x_off, cin_g, h, wd, kh, kw, stride, pad, col.data());
        CMapM<T> cm(col.data(), static_cast<Eigen::Index>(k),
                    static_cast<Eigen::Index>(l));
        MapM<T> dwm(dw_partial[static_cast<std::size_t>(ni)].ptr() +
                        static_cast<std::size_t>(g) * cout_g * k,
                    cout_g, static_cast<Eigen::Index>(k));
        dwm.noalias() = dym * cm.transpose();
      }
      if (dx != nullptr) {
        MapM<T> dcm(dcol.data(), static_cast<Eigen::Index>(k),
                    static_cast<Eigen::Index>(l));
        dcm.noalias() = wm.transpose() * dym;
        col2im(dcol.data(), cin_g, h, wd, kh, kw, stride, pad, dx->ptr() + x_off);
      }
    }
  }

  if (dw != nullptr) {
    for (int ni = 0; ni < n; ++ni) {
      const TensorT<T>& part = dw_partial[static_cast<std::size_t>(ni)];
      for (std::size_t i = 0; i < dw->numel(); ++i) dw->data[i] += part.data[i];
    }
  }
  if (db != nullptr) {
    for (int ni = 0; ni < n; ++ni) {
      for (int c = 0; c < cout; ++c) {
        const T* src = dy.ptr() + (static_cast<std::size_t>(ni) * cout + c) * l;
        double s = 0.0;
        for (std::size_t i = 0; i < l; ++i) s += src[i];
        db->data[static_cast<std::size_t>(c)] += static_cast<T>(s);
      }
    }
  }
}

// x [N, In], w [Out, In], b [Out] or null -> y [N, Out].
template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w,
                          const TensorT<T>* bias) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in) {
    throw ValidationError("linear: shape mismatch, x=" + shape_str(x.shape) +
                          " w=" + shape_str(w.shape));
  }
  TensorT<T> y({n, out});
  CMapM<T> xm(x.ptr(), n, in);
  CMapM<T> wm(w.ptr(), out, in);
  MapM<T> ym(y.ptr(), n, out);
  ym.noalias() = xm * wm.transpose();
  if (bias != nullptr) {
    for (int ni = 0; ni < n; ++ni) {
      for (int o = 0; o < out; ++o) {
        y.data[static_cast<std::size_t>(ni) * out + o] += bias->data[o];
      }
    }
  }
  return y;
}

template <typename T>
void linear_backward(const TensorT<T>& x, const TensorT<T>& w,
                     const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* dw,
                     TensorT<T>* db) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  CMapM<T> xm(x.ptr(), n, in);
  CMapM<T> wm(w.ptr(), out, in);
  CMapM<T> dym(dy.ptr(), n, out);
  if (dx != nullptr) {
    MapM<T> dxm(dx->ptr(), n, in);
    dxm.noalias() += dym * wm;
  }
  if (dw != nullptr) {
    MapM<T> dwm(dw->ptr(), out, in);
    dwm.noalias() += dym.transpose() * xm;
  }
  if (db != nullptr) {
    for (int ni = 0; ni < n; ++ni) {
      for (int o = 0; o < out; ++o) {
        db->data[static_cast<std::size_t>(o)] +=
            dy.data[static_cast<std::size_t>(ni) * out + o];
      }
    }
  }
}

// Batch statistics are accumulated in double, per channel, in fixed order.
template <typename T>
TensorT<T> batchnorm_forward_train(const TensorT<T>& x, const TensorT<T>& gamma,
                                   const TensorT<T>& beta, double eps,
                                   double momentum, TensorT<T>& running_mean,
                                   TensorT<T>& running_var,
                                   TensorT<T>& save_mean,
                                   TensorT<T>& save_invstd) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t spatial = static_cast<std::size_t>(h) * w;
  const double m = static_cast<double>(n) * static_cast<double>(spatial);
  TensorT<T> y(x.shape);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    double sum = 0.0, sum_sq = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* src = x.ptr() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double v = static_cast<double>(src[i]);
        sum += v;
        sum_sq += v * v;
      }
    }
    const double mean = sum / m;
    double var = sum_sq / m - mean * mean;
    if (var < 0.0) var = 0.0;
    const double invstd = 1.0 / std::sqrt(var + eps);
    const double g = static_cast<double>(gamma.data[ci]);
    const double b = static_cast<double>(beta.data[ci]);
    for (int ni = 0; ni < n; ++ni) {
      const T* src = x.ptr() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
      T* dst = y.ptr() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        dst[i] = static_cast<T>((static_cast<double>(src[i]) - mean) * invstd * g + b);
      }
    }
    const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
    running_mean.data[ci] = static_cast<T>(
        (1.0 - momentum) * static_cast<double>(running_mean.data[ci]) +
        momentum * mean);
    running_var.data[ci] = static_cast<T>(
        (1.0 - momentum) * static_cast<double>(running_var.data[ci]) +
        momentum * unbiased);
    save_mean.data[ci] = static_cast<T>(mean);
    save_invstd.data[ci] = static_cast<T>(invstd);
  }
  return y;
}

template <typename T>
TensorT<T> batchnorm_forward_eval(const TensorT<T>& x, const TensorT<T>& gamma,
                                  const TensorT<T>& beta,
                                  const TensorT<T>& running_mean,
                                  const TensorT<T>& running_var, double eps) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t spatial = static_cast<std::size_t>(h) * w;
  TensorT<T> y(x.shape);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const double mean = static_cast<double>(running_mean.data[ci]);
    const double invstd =
        1.0 / std::sqrt(static_cast<double>(running_var.data[ci]) + eps);
    const double g = static_cast<double>(gamma.data[ci]);
    const double b = static_cast<double>(beta.data[ci]);
    for (int ni = 0; ni < n; ++ni) {
      const T* src = x.ptr() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
      T* dst = y.ptr() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        dst[i] = static_cast<T>((static_cast<double>(src[i]) - mean) * invstd * g + b);
      }
    }
  }
  return y;
}

template <typename T>
void batchnorm_backward_train(const TensorT<T>& x, const TensorT<T>& gamma,
                              const TensorT<T>& save_mean,
                              const TensorT<T>& save_invstd,
                              const TensorT<T>& dy, TensorT<T>* dx,
                              TensorT<T>* dgamma, TensorT<T>* dbeta) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t spatial = static_cast<std::size_t>(h) * w;
  const double m = static_cast<double>(n) * static_cast<double>(spatial);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const double mean = static_cast<double>(save_mean.data[ci]);
    const double invstd = static_cast<double>(save_invstd.data[ci]);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
      const T* xs = x.ptr() + off;
      const T* dys = dy.ptr() + off;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double xhat = (static_cast<double>(xs[i]) - mean) * invstd;
        sum_dy += static_cast<double>(dys[i]);
        sum_dy_xhat += static_cast<double>(dys[i]) * xhat;
      }
    }
    if (dgamma != nullptr) dgamma->data[ci] += static_cast<T>(sum_dy_xhat);
    if (dbeta != nullptr) dbeta->data[ci] += static_cast<T>(sum_dy);
    if (dx != nullptr) {
      const double g = static_cast<double>(gamma.data[ci]);
      for (int ni = 0; ni < n; ++ni) {
        const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
        const T* xs = x.ptr() + off;
        const T* dys = dy.ptr() + off;
        T* dxs = dx->ptr() + off;
        for (std::size_t i = 0; i < spatial; ++i) {
          const double xhat = (static_cast<double>(xs[i]) - mean) * invstd;
          dxs[i] += static_cast<T>(
              g * invstd *
              (static_cast<double>(dys[i]) - sum_dy / m - xhat * sum_dy_xhat / m));
        }
      }
    }
  }
}

template <typename T>
void batchnorm_backward_eval(const TensorT<T>& x, const TensorT<T>& gamma,
                             const TensorT<T>& running_mean,
                             const TensorT<T>& running_var, double eps,
                             const TensorT<T>& dy, TensorT<T>* dx,
                             TensorT<T>* dgamma, TensorT<T>* dbeta) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t spatial = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const double mean = static_cast<double>(running_mean.data[ci]);
    const double invstd =
        1.0 / std::sqrt(static_cast<double>(running_var.data[ci]) + eps);
    const double g = static_cast<double>(gamma.data[ci]);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
      const T* xs = x.ptr() + off;
      const T* dys = dy.ptr() + off;
      T* dxs = dx != nullptr ? dx->ptr() + off : nullptr;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double xhat = (static_cast<double>(xs[i]) - mean) * invstd;
        sum_dy += static_cast<double>(dys[i]);
        sum_dy_xhat += static_cast<double>(dys[i]) * xhat;
        if (dxs != nullptr) {
          dxs[i] += static_cast<T>(static_cast<double>(dys[i]) * g * invstd);
        }
      }
    }
    if (dgamma != nullptr) dgamma->data[ci] += static_cast<T>(sum_dy_xhat);
    if (dbeta != nullptr) dbeta->data[ci] += static_cast<T>(sum_dy);
  }
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  }
  return y;
}

template <typename T>
void relu_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>* dx) {
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y.data[i] > T(0)) dx->data[i] += dy.data[i];
  }
}

template <typename T>
TensorT<T> sigmoid_forward(const TensorT<T>& x) {
  TensorT<T> y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    y.data[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data[i]))));
  }
  return y;
}

template <typename T>
void sigmoid_backward(const TensorT<T>& y, const TensorT<T>& dy, TensorT<T>* dx) {
  for (std::size_t i = 0; i < y.numel(); ++i) {
    dx->data[i] += dy.data[i] * y.data[i] * (T(1) - y.data[i]);
  }
}

// Ties resolve to the first element in scan order.
template <typename T>
TensorT<T> maxpool_forward(const TensorT<T>& x, int k, int stride, int pad,
                           std::vector<std::int32_t>& argmax) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = conv_out_dim(h, k, stride, pad);
  const int wo = conv_out_dim(w, k, stride, pad);
  TensorT<T> y({n, c, ho, wo});
  argmax.assign(y.numel(), -1);
#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = x.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                                     static_cast<std::size_t>(h) * w;
      const std::size_t out_off =
          (static_cast<std::size_t>(ni) * c + ci) * static_cast<std::size_t>(ho) * wo;
      for (int oi = 0; oi < ho; ++oi) {
        for (int oj = 0; oj < wo; ++oj) {
          T best = T(0);
          std::int32_t best_idx = -1;
          for (int ki = 0; ki < k; ++ki) {
            const int ii = oi * stride - pad + ki;
            if (ii < 0 || ii >= h) continue;
            for (int kj = 0; kj < k; ++kj) {
              const int jj = oj * stride - pad + kj;
              if (jj < 0 || jj >= w) continue;
              const T v = plane[static_cast<std::size_t>(ii) * w + jj];
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = static_cast<std::int32_t>(ii * w + jj);
              }
            }
          }
          y.data[out_off + static_cast<std::size_t>(oi) * wo + oj] = best;
          argmax[out_off + static_cast<std::size_t>(oi) * wo + oj] = best_idx;
        }
      }
    }
  }
  return y;
}

template <typename T>
void maxpool_backward(const TensorT<T>& dy, const std::vector<std::int32_t>& argmax,
                      const std::vector<int>& x_shape, TensorT<T>* dx) {
  const int c = x_shape[1], h = x_shape[2], w = x_shape[3];
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane =
      static_cast<std::size_t>(dy.dim(2)) * static_cast<std::size_t>(dy.dim(3));
  const int n = dy.dim(0);
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t out_off = (static_cast<std::size_t>(ni) * c + ci) * out_plane;
      T* dst = dx->ptr() + (static_cast<std::size_t>(ni) * c + ci) * plane;
      for (std::size_t i = 0; i < out_plane; ++i) {
        const std::int32_t idx = argmax[out_off + i];
        if (idx >= 0) dst[idx] += dy.data[out_off + i];
      }
    }
  }
}

// Non-padded average pooling (DenseNet transitions use k=2, s=2).
template <typename T>
TensorT<T> avgpool_forward(const TensorT<T>& x, int k, int stride) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = conv_out_dim(h, k, stride, 0);
  const int wo = conv_out_dim(w, k, stride, 0);
  TensorT<T> y({n, c, ho, wo});
  const T inv = T(1) / static_cast<T>(k * k);
#pragma omp parallel for schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = x.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                                     static_cast<std::size_t>(h) * w;
      T* out = y.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                             static_cast<std::size_t>(ho) * wo;
      for (int oi = 0; oi < ho; ++oi) {
        for (int oj = 0; oj < wo; ++oj) {
          T s = T(0);
          for (int ki = 0; ki < k; ++ki) {
            const T* src = plane + static_cast<std::size_t>(oi * stride + ki) * w +
                           oj * stride;
            for (int kj = 0; kj < k; ++kj) s += src[kj];
          }
          out[static_cast<std::size_t>(oi) * wo + oj] = s * inv;
        }
      }
    }
  }
  return y;
}

template <typename T>
void avgpool_backward(const TensorT<T>& dy, int k, int stride,
                      const std::vector<int>& x_shape, TensorT<T>* dx) {
  const int n = dy.dim(0), c = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
  const int h = x_shape[2], w = x_shape[3];
  const T inv = T(1) / static_cast<T>(k * k);
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* src = dy.ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                                    static_cast<std::size_t>(ho) * wo;
      T* dst = dx->ptr() + (static_cast<std::size_t>(ni) * c + ci) *
                               static_cast<std::size_t>(h) * w;
      for (int oi = 0; oi < ho; ++oi) {
        for (int oj = 0; oj < wo; ++oj) {
          const T g = src[static_cast<std::size_t>(oi) * wo + oj] * inv;
          for (int ki = 0; ki < k; ++ki) {
            T* row = dst + static_cast<std::size_t>(oi * stride + ki) * w + oj * stride;
            for (int kj = 0; kj < k; ++kj) row[kj] += g;
          }
        }
      }
    }
  }
}

// [N, C, H, W] -> [N, C]; mean accumulated in double.
template <typename T>
TensorT<T> global_avgpool_forward(const TensorT<T>& x) {
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t spatial =
      static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
  TensorT<T> y({n, c});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* src = x.ptr() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
      double s = 0.0;
      for (std::size_t i = 0; i < spatial; ++i) s += static_cast<double>(src[i]);
      y.data[static_cast<std::size_t>(ni) * c + ci] =
          static_cast<T>(s / static_cast<double>(spatial));
    }
  }
  return y;
}

template <typename T>
void global_avgpool_backward(const TensorT<T>& dy, const std::vector<int>& x_shape,
                             TensorT<T>* dx) {
  const int n = x_shape[0], c = x_shape[1];
  const std::size_t spatial =
      static_cast<std::size_t>(x_shape[2]) * static_cast<std::size_t>(x_shape[3]);
  const T inv = T(1) / static_cast<T>(spatial);
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T g = dy.data[static_cast<std::size_t>(ni) * c + ci] * inv;
      T* dst = dx->ptr() + (static_cast<std::size_t>(ni) * c + ci) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) dst[i] += g;
    }
  }
}

// x [N, C, H, W] scaled per channel by s [N, C].
template <typename T>
TensorT<T> channel_scale_forward(const TensorT<T>& x, const TensorT<T>& s) {
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t spatial =
      static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
  TensorT<T> y(x.shape);
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T f = s.data[static_cast<std::size_t>(ni) * c + ci];
      const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) y.data[off + i] = x.data[off + i] * f;
    }
  }
  return y;
}

template <typename T>
void channel_scale_backward(const TensorT<T>& x, const TensorT<T>& s,
                            const TensorT<T>& dy, TensorT<T>* dx, TensorT<T>* ds) {
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t spatial =
      static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t off = (static_cast<std::size_t>(ni) * c + ci) * spatial;
      const T f = s.data[static_cast<std::size_t>(ni) * c + ci];
      double grad_s = 0.0;
      for (std::size_t i = 0; i < spatial; ++i) {
        if (dx != nullptr) dx->data[off + i] += dy.data[off + i] * f;
        grad_s += static_cast<double>(dy.data[off + i]) *
                  static_cast<double>(x.data[off + i]);
      }
      if (ds != nullptr) {
        ds->data[static_cast<std::size_t>(ni) * c + ci] += static_cast<T>(grad_s);
      }
    }
  }
}

}  // namespace octlc::nn

#endif  // OCTLC_NN_KERNELS_HPP_
