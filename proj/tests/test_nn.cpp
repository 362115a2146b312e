#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <functional>

#include "octlc/nn/autograd.hpp"
#include "octlc/rng.hpp"

using namespace octlc;
using DTensor = nn::TensorT<double>;
using DVar = nn::VarT<double>;

namespace {

void fill_random(DTensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data) v = rng.uniform(lo, hi);
}

// Keeps values away from the relu/maxpool kinks so central differences
// stay valid.
void bump_from_zero(DTensor& t, double margin = 0.05) {
  for (auto& v : t.data) {
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
}

double weighted_sum(const DTensor& y, const DTensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y.data[i] * r.data[i];
  return s;
}

// Generic check: builds the graph, backpropagates a fixed random seed
// gradient, then compares every leaf gradient against central finite
// differences of the scalar loss sum(output * R).
void check_gradients(const std::function<DVar()>& build,
                     const std::vector<DVar>& leaves, Rng& rng,
                     double h = 1e-5, double abs_tol = 1e-5,
                     double rel_tol = 1e-4) {
  DVar out = build();
  DTensor r(out->value.shape);
  fill_random(r, rng);

  out->ensure_grad().data = r.data;
  nn::backward(out);

  std::vector<DTensor> analytic;
  for (const DVar& leaf : leaves) {
    REQUIRE(leaf->grad.shape == leaf->value.shape);
    analytic.push_back(leaf->grad);
  }

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    DTensor& value = leaves[li]->value;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double keep = value.data[i];
      value.data[i] = keep + h;
      const double up = weighted_sum(build()->value, r);
      value.data[i] = keep - h;
      const double down = weighted_sum(build()->value, r);
      value.data[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double got = analytic[li].data[i];
      const double err = std::abs(fd - got);
      if (err > abs_tol + rel_tol * std::abs(fd)) {
        CAPTURE(li);
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(got);
        REQUIRE(err <= abs_tol + rel_tol * std::abs(fd));
      }
    }
  }
}

DVar leaf(DTensor t, bool grad = true) { return nn::make_leaf(std::move(t), grad); }

// Direct convolution, no im2col, for a forward cross-check.
DTensor conv_naive(const DTensor& x, const DTensor& w, const DTensor* bias,
                   int stride, int pad, int groups) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), cin_g = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int ho = nn::conv_out_dim(h, kh, stride, pad);
  const int wo = nn::conv_out_dim(wd, kw, stride, pad);
  const int cout_g = cout / groups;
  DTensor y({n, cout, ho, wo});
  for (int ni = 0; ni < n; ++ni) {
    for (int co = 0; co < cout; ++co) {
      const int g = co / cout_g;
      for (int oi = 0; oi < ho; ++oi) {
        for (int oj = 0; oj < wo; ++oj) {
          double acc = bias != nullptr ? bias->data[co] : 0.0;
          for (int ci = 0; ci < cin_g; ++ci) {
            for (int ki = 0; ki < kh; ++ki) {
              for (int kj = 0; kj < kw; ++kj) {
                const int ii = oi * stride - pad + ki;
                const int jj = oj * stride - pad + kj;
                if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
                acc += x.data[((static_cast<std::size_t>(ni) * cin + g * cin_g + ci) * h +
                               ii) * wd +
                              jj] *
                       w.data[((static_cast<std::size_t>(co) * cin_g + ci) * kh + ki) * kw +
                              kj];
              }
            }
          }
          y.data[((static_cast<std::size_t>(ni) * cout + co) * ho + oi) * wo + oj] = acc;
        }
      }
    }
  }
  return y;
}

}  // namespace

TEST_CASE("conv2d forward agrees with direct convolution") {
  Rng rng(1);
  DTensor x({2, 3, 6, 7});
  DTensor w({4, 3, 3, 3});
  DTensor b({4});
  fill_random(x, rng);
  fill_random(w, rng);
  fill_random(b, rng);
  const DTensor fast = nn::conv2d_forward(x, w, &b, 2, 1, 1);
  const DTensor slow = conv_naive(x, w, &b, 2, 1, 1);
  REQUIRE(fast.shape == slow.shape);
  for (std::size_t i = 0; i < fast.numel(); ++i) {
    CHECK(fast.data[i] == doctest::Approx(slow.data[i]).epsilon(1e-12));
  }

  DTensor xg({1, 4, 5, 5});
  DTensor wg({6, 2, 3, 3});
  fill_random(xg, rng);
  fill_random(wg, rng);
  const DTensor fast_g = nn::conv2d_forward<double>(xg, wg, nullptr, 1, 1, 2);
  const DTensor slow_g = conv_naive(xg, wg, nullptr, 1, 1, 2);
  for (std::size_t i = 0; i < fast_g.numel(); ++i) {
    CHECK(fast_g.data[i] == doctest::Approx(slow_g.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("im2col and col2im are adjoint") {
  Rng rng(2);
  const int c = 3, h = 6, w = 5, k = 3, stride = 2, pad = 1;
  const int ho = nn::conv_out_dim(h, k, stride, pad);
  const int wo = nn::conv_out_dim(w, k, stride, pad);
  DTensor x({c, h, w});
  DTensor col({c * k * k, ho * wo});
  DTensor cvec({c * k * k, ho * wo});
  DTensor xback({c, h, w});
  fill_random(x, rng);
  fill_random(cvec, rng);

  nn::im2col(x.ptr(), c, h, w, k, k, stride, pad, col.ptr());
  nn::col2im(cvec.ptr(), c, h, w, k, k, stride, pad, xback.ptr());

  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < col.numel(); ++i) lhs += col.data[i] * cvec.data[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data[i] * xback.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(3);

  SUBCASE("3x3 stride 1 with bias") {
    DTensor xt({2, 3, 6, 7}), wt({4, 3, 3, 3}), bt({4});
    fill_random(xt, rng);
    fill_random(wt, rng);
    fill_random(bt, rng);
    DVar x = leaf(xt), w = leaf(wt), b = leaf(bt);
    check_gradients([&] { return nn::conv2d(x, w, b, 1, 1, 1); }, {x, w, b}, rng);
  }
  SUBCASE("3x3 stride 2 no bias") {
    DTensor xt({1, 3, 7, 7}), wt({2, 3, 3, 3});
    fill_random(xt, rng);
    fill_random(wt, rng);
    DVar x = leaf(xt), w = leaf(wt);
    check_gradients([&] { return nn::conv2d(x, w, DVar{}, 2, 1, 1); }, {x, w}, rng);
  }
  SUBCASE("grouped 3x3") {
    DTensor xt({2, 4, 6, 6}), wt({6, 2, 3, 3}), bt({6});
    fill_random(xt, rng);
    fill_random(wt, rng);
    fill_random(bt, rng);
    DVar x = leaf(xt), w = leaf(wt), b = leaf(bt);
    check_gradients([&] { return nn::conv2d(x, w, b, 1, 1, 2); }, {x, w, b}, rng);
  }
  SUBCASE("1x1") {
    DTensor xt({2, 4, 5, 5}), wt({3, 4, 1, 1});
    fill_random(xt, rng);
    fill_random(wt, rng);
    DVar x = leaf(xt), w = leaf(wt);
    check_gradients([&] { return nn::conv2d(x, w, DVar{}, 1, 0, 1); }, {x, w}, rng);
  }
  SUBCASE("7x7 stride 2 pad 3") {
    DTensor xt({1, 3, 15, 15}), wt({2, 3, 7, 7});
    fill_random(xt, rng);
    fill_random(wt, rng);
    DVar x = leaf(xt), w = leaf(wt);
    check_gradients([&] { return nn::conv2d(x, w, DVar{}, 2, 3, 1); }, {x, w}, rng);
  }
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(4);
  DTensor xt({3, 6}), wt({4, 6}), bt({4});
  fill_random(xt, rng);
  fill_random(wt, rng);
  fill_random(bt, rng);
  DVar x = leaf(xt), w = leaf(wt), b = leaf(bt);
  check_gradients([&] { return nn::linear(x, w, b); }, {x, w, b}, rng);
}

TEST_CASE("batchnorm training gradients match finite differences") {
  Rng rng(5);
  DTensor xt({3, 2, 4, 4}), gt({2}), bt({2});
  fill_random(xt, rng);
  fill_random(gt, rng, 0.5, 1.5);
  fill_random(bt, rng);
  DVar x = leaf(xt), g = leaf(gt), b = leaf(bt);
  auto rm = std::make_shared<DTensor>(DTensor({2}));
  auto rv = std::make_shared<DTensor>(DTensor({2}));
  rv->fill(1.0);
  check_gradients(
      [&] { return nn::batchnorm2d(x, g, b, rm, rv, true, 0.1, 1e-5); },
      {x, g, b}, rng);
}

TEST_CASE("batchnorm eval gradients match finite differences") {
  Rng rng(6);
  DTensor xt({2, 3, 3, 3}), gt({3}), bt({3});
  fill_random(xt, rng);
  fill_random(gt, rng, 0.5, 1.5);
  fill_random(bt, rng);
  DVar x = leaf(xt), g = leaf(gt), b = leaf(bt);
  auto rm = std::make_shared<DTensor>(DTensor({3}));
  auto rv = std::make_shared<DTensor>(DTensor({3}));
  fill_random(*rm, rng, -0.2, 0.2);
  fill_random(*rv, rng, 0.5, 1.5);
  check_gradients(
      [&] { return nn::batchnorm2d(x, g, b, rm, rv, false, 0.1, 1e-5); },
      {x, g, b}, rng);
}

TEST_CASE("batchnorm training updates running statistics") {
  Rng rng(7);
  DTensor xt({4, 1, 5, 5});
  fill_random(xt, rng, 2.0, 4.0);
  DVar x = leaf(xt, false);
  DVar g = leaf(DTensor({1}));
  DVar b = leaf(DTensor({1}));
  g->value.fill(1.0);
  auto rm = std::make_shared<DTensor>(DTensor({1}));
  auto rv = std::make_shared<DTensor>(DTensor({1}));
  rv->fill(1.0);

  nn::batchnorm2d(x, g, b, rm, rv, true, 1.0, 1e-5);
  double mean = 0.0;
  for (double v : xt.data) mean += v;
  mean /= static_cast<double>(xt.numel());
  CHECK(rm->data[0] == doctest::Approx(mean).epsilon(1e-9));
  CHECK(rv->data[0] > 0.0);

  // Eval mode must not touch the statistics.
  const double rm_before = rm->data[0];
  nn::batchnorm2d(x, g, b, rm, rv, false, 1.0, 1e-5);
  CHECK(rm->data[0] == rm_before);
}

TEST_CASE("pooling gradients match finite differences") {
  Rng rng(8);
  SUBCASE("maxpool 3x3 stride 2 pad 1") {
    DTensor xt({1, 2, 7, 7});
    fill_random(xt, rng);
    DVar x = leaf(xt);
    check_gradients([&] { return nn::maxpool2d(x, 3, 2, 1); }, {x}, rng, 1e-6);
  }
  SUBCASE("avgpool 2x2 stride 2") {
    DTensor xt({2, 3, 6, 6});
    fill_random(xt, rng);
    DVar x = leaf(xt);
    check_gradients([&] { return nn::avgpool2d(x, 2, 2); }, {x}, rng);
  }
  SUBCASE("global average pool") {
    DTensor xt({2, 4, 3, 5});
    fill_random(xt, rng);
    DVar x = leaf(xt);
    check_gradients([&] { return nn::global_avgpool(x); }, {x}, rng);
  }
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(9);
  SUBCASE("relu") {
    DTensor xt({3, 4});
    fill_random(xt, rng);
    bump_from_zero(xt);
    DVar x = leaf(xt);
    check_gradients([&] { return nn::relu(x); }, {x}, rng);
  }
  SUBCASE("sigmoid") {
    DTensor xt({3, 4});
    fill_random(xt, rng, -3.0, 3.0);
    DVar x = leaf(xt);
    check_gradients([&] { return nn::sigmoid(x); }, {x}, rng);
  }
  SUBCASE("channel scale") {
    DTensor xt({2, 3, 4, 4}), st({2, 3});
    fill_random(xt, rng);
    fill_random(st, rng, 0.2, 1.0);
    DVar x = leaf(xt), s = leaf(st);
    check_gradients([&] { return nn::channel_scale(x, s); }, {x, s}, rng);
  }
}

TEST_CASE("residual-style composite graph gradients") {
  Rng rng(10);
  DTensor xt({2, 3, 8, 8});
  DTensor w1t({4, 3, 3, 3});
  DTensor wdt({4, 3, 1, 1});  // downsample branch, shares x
  DTensor gt({4}), bt({4});
  DTensor wft({2, 4});
  DTensor bft({2});
  fill_random(xt, rng);
  bump_from_zero(xt);
  fill_random(w1t, rng, -0.4, 0.4);
  fill_random(wdt, rng, -0.4, 0.4);
  fill_random(gt, rng, 0.8, 1.2);
  fill_random(bt, rng, -0.1, 0.1);
  fill_random(wft, rng);
  fill_random(bft, rng);

  DVar x = leaf(xt, false);  // input never needs a gradient
  DVar w1 = leaf(w1t), wd = leaf(wdt), g = leaf(gt), b = leaf(bt);
  DVar wf = leaf(wft), bf = leaf(bft);
  auto rm = std::make_shared<DTensor>(DTensor({4}));
  auto rv = std::make_shared<DTensor>(DTensor({4}));
  rv->fill(1.0);

  auto build = [&] {
    DVar main = nn::conv2d(x, w1, DVar{}, 2, 1, 1);
    main = nn::batchnorm2d(main, g, b, rm, rv, true, 0.1, 1e-5);
    DVar skip = nn::conv2d(x, wd, DVar{}, 2, 0, 1);
    DVar merged = nn::relu(nn::add(main, skip));
    return nn::linear(nn::global_avgpool(merged), wf, bf);
  };
  check_gradients(build, {w1, wd, g, b, wf, bf}, rng, 1e-5, 2e-5, 2e-4);
}

TEST_CASE("dense-style composite graph gradients (concat reuse)") {
  Rng rng(11);
  DTensor xt({1, 3, 6, 6});
  DTensor w1t({2, 3, 3, 3});
  DTensor w2t({2, 5, 1, 1});
  fill_random(xt, rng);
  fill_random(w1t, rng, -0.4, 0.4);
  fill_random(w2t, rng, -0.4, 0.4);
  DVar x = leaf(xt);  // gradient flows through both concat branches
  DVar w1 = leaf(w1t), w2 = leaf(w2t);

  auto build = [&] {
    DVar grown = nn::conv2d(x, w1, DVar{}, 1, 1, 1);
    DVar cat = nn::concat_channels(std::vector<DVar>{x, grown});
    DVar mixed = nn::conv2d(cat, w2, DVar{}, 1, 0, 1);
    return nn::global_avgpool(nn::avgpool2d(mixed, 2, 2));
  };
  check_gradients(build, {x, w1, w2}, rng);
}

TEST_CASE("squeeze-excitation composite graph gradients") {
  Rng rng(12);
  DTensor xt({2, 4, 4, 4});
  DTensor w1t({2, 4});
  DTensor b1t({2});
  DTensor w2t({4, 2});
  DTensor b2t({4});
  fill_random(xt, rng);
  bump_from_zero(xt);
  fill_random(w1t, rng);
  fill_random(b1t, rng);
  fill_random(w2t, rng);
  fill_random(b2t, rng);
  DVar x = leaf(xt), w1 = leaf(w1t), b1 = leaf(b1t), w2 = leaf(w2t), b2 = leaf(b2t);

  auto build = [&] {
    DVar s = nn::global_avgpool(x);
    s = nn::sigmoid(nn::linear(nn::relu(nn::linear(s, w1, b1)), w2, b2));
    return nn::global_avgpool(nn::channel_scale(x, s));
  };
  check_gradients(build, {x, w1, b1, w2, b2}, rng);
}

TEST_CASE("frozen subgraphs are skipped entirely") {
  Rng rng(13);
  DTensor xt({1, 3, 6, 6}), wt({2, 3, 3, 3}), wft({2, 2}), bft({2});
  fill_random(xt, rng);
  fill_random(wt, rng);
  fill_random(wft, rng);
  fill_random(bft, rng);
  DVar x = leaf(xt, false);
  DVar w = leaf(wt, false);  // frozen backbone weight
  DVar wf = leaf(wft), bf = leaf(bft);

  DVar feats = nn::global_avgpool(nn::conv2d(x, w, DVar{}, 1, 1, 1));
  CHECK(!feats->requires_grad);
  DVar out = nn::linear(feats, wf, bf);
  CHECK(out->requires_grad);

  out->ensure_grad().fill(1.0);
  nn::backward(out);
  CHECK(wf->grad.numel() == wf->value.numel());
  CHECK(w->grad.numel() == 0);  // never allocated, never touched
}

TEST_CASE("forward results do not depend on the thread count") {
  Rng rng(14);
  nn::Tensor x({4, 3, 12, 12});
  nn::Tensor w({8, 3, 3, 3});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : w.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const nn::Tensor y1 = nn::conv2d_forward<float>(x, w, nullptr, 1, 1, 1);
  nn::Tensor dy(y1.shape);
  for (auto& v : dy.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  nn::Tensor dx1(x.shape), dw1(w.shape);
  nn::conv2d_backward<float>(x, w, dy, 1, 1, 1, &dx1, &dw1, nullptr);

  omp_set_num_threads(2);
  const nn::Tensor y2 = nn::conv2d_forward<float>(x, w, nullptr, 1, 1, 1);
  nn::Tensor dx2(x.shape), dw2(w.shape);
  nn::conv2d_backward<float>(x, w, dy, 1, 1, 1, &dx2, &dw2, nullptr);
  omp_set_num_threads(saved);

  CHECK(y1.data == y2.data);
  CHECK(dx1.data == dx2.data);
  CHECK(dw1.data == dw2.data);
}
