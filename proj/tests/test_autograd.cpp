// Copyright (c) the CVC Project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "cvc/autograd.hpp"
#include "cvc/nn.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvc;
using cvc::testutil::check_gradient;
using cvc::testutil::random_tensor;

TEST_SUITE_BEGIN("autograd");

TEST_CASE("conv2d matches finite differences") {
  Rng rng(7);
  auto x = ag::leaf(random_tensor({2, 6, 6}, rng), true);
  auto w = ag::leaf(random_tensor({3, 2, 3, 3}, rng), true);
  auto b = ag::leaf(random_tensor({3}, rng), true);
  auto f = [&] { return ag::sum_all(ag::square(ag::conv2d(x, w, b, 1, 1))); };
  CHECK(check_gradient(f, x) < 1e-6);
  CHECK(check_gradient(f, w) < 1e-6);
  CHECK(check_gradient(f, b) < 1e-6);

  // strided
  auto x2 = ag::leaf(random_tensor({2, 8, 8}, rng), true);
  auto w2 = ag::leaf(random_tensor({4, 2, 5, 5}, rng), true);
  auto b2 = ag::leaf(random_tensor({4}, rng), true);
  auto f2 = [&] { return ag::sum_all(ag::square(ag::conv2d(x2, w2, b2, 2, 2))); };
  CHECK(ag::conv2d(x2, w2, b2, 2, 2)->value.shape() == std::vector<int>{4, 4, 4});
  CHECK(check_gradient(f2, x2) < 1e-6);
  CHECK(check_gradient(f2, w2) < 1e-6);
}

TEST_CASE("conv_transpose2d doubles resolution and matches finite differences") {
  Rng rng(9);
  auto x = ag::leaf(random_tensor({3, 4, 4}, rng), true);
  auto w = ag::leaf(random_tensor({3, 2, 5, 5}, rng), true);
  auto b = ag::leaf(random_tensor({2}, rng), true);
  auto y = ag::conv_transpose2d(x, w, b, 2, 2, 8, 8);
  CHECK(y->value.shape() == std::vector<int>{2, 8, 8});
  auto f = [&] {
    return ag::sum_all(ag::square(ag::conv_transpose2d(x, w, b, 2, 2, 8, 8)));
  };
  CHECK(check_gradient(f, x) < 1e-6);
  CHECK(check_gradient(f, w) < 1e-6);
  CHECK(check_gradient(f, b) < 1e-6);
}

TEST_CASE("gdn closed forms") {
  // gamma = 0, beta = 1 -> identity
  Rng rng(3);
  auto x = ag::leaf(random_tensor({2, 3, 3}, rng), false);
  auto beta = ag::constant(Tensor({2}, 1.0));
  auto gamma = ag::constant(Tensor({2, 2}, 0.0));
  auto y = ag::gdn(x, beta, gamma, false);
  for (std::int64_t i = 0; i < y->value.numel(); ++i) {
    CHECK(y->value[i] == doctest::Approx(x->value[i]).epsilon(1e-12));
  }

  // C = 1, beta = 1, gamma = 3, x = 2 -> 2/sqrt(13)
  auto x1 = ag::constant(Tensor({1, 1, 1}, 2.0));
  auto b1 = ag::constant(Tensor({1}, 1.0));
  auto g1 = ag::constant(Tensor({1, 1}, 3.0));
  auto y1 = ag::gdn(x1, b1, g1, false);
  CHECK(y1->value[0] == doctest::Approx(2.0 / std::sqrt(13.0)).epsilon(1e-9));
  CHECK(y1->value[0] == doctest::Approx(0.5547).epsilon(1e-4));

  // inverse multiplies
  auto yi = ag::gdn(x1, b1, g1, true);
  CHECK(yi->value[0] == doctest::Approx(2.0 * std::sqrt(13.0)).epsilon(1e-9));
}

TEST_CASE("gdn gradients match finite differences") {
  Rng rng(11);
  auto x = ag::leaf(random_tensor({3, 4, 4}, rng), true);
  Tensor bt({3});
  for (int i = 0; i < 3; ++i) bt[i] = 0.5 + 0.5 * rng.uniform(0.0, 1.0);
  auto beta = ag::leaf(bt, true);
  Tensor gt({3, 3});
  for (std::int64_t i = 0; i < gt.numel(); ++i) gt[i] = rng.uniform(0.01, 0.5);
  auto gamma = ag::leaf(gt, true);
  for (bool inverse : {false, true}) {
    auto f = [&] { return ag::sum_all(ag::square(ag::gdn(x, beta, gamma, inverse))); };
    CHECK(check_gradient(f, x) < 1e-4);
    CHECK(check_gradient(f, beta) < 1e-4);
    CHECK(check_gradient(f, gamma) < 1e-4);
  }
}

TEST_CASE("gdn rejects invalid parameters") {
  auto x = ag::constant(Tensor({1, 1, 1}, 1.0));
  auto bad_beta = ag::constant(Tensor({1}, 0.0));
  auto gamma = ag::constant(Tensor({1, 1}, 0.1));
  CHECK_THROWS_AS(ag::gdn(x, bad_beta, gamma, false), ArgumentError);
  auto beta = ag::constant(Tensor({1}, 1.0));
  auto bad_gamma = ag::constant(Tensor({1, 1}, -0.1));
  CHECK_THROWS_AS(ag::gdn(x, beta, bad_gamma, false), ArgumentError);
}

TEST_CASE("warp_bilinear identity, shift and interpolation") {
  Rng rng(5);
  Tensor src = random_tensor({2, 5, 7}, rng);
  auto s = ag::constant(src);

  auto zero_flow = ag::constant(Tensor({2, 5, 7}, 0.0));
  auto y0 = ag::warp_bilinear(s, zero_flow);
  for (std::int64_t i = 0; i < src.numel(); ++i) CHECK(y0->value[i] == src[i]);

  // constant flow (1, 0): column j reads column j+1, last column replicated
  Tensor f1({2, 5, 7});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) f1.at(0, y, x) = 1.0;
  auto y1 = ag::warp_bilinear(s, ag::constant(f1));
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 7; ++x) {
        const int sx = std::min(x + 1, 6);
        CHECK(y1->value.at(c, y, x) == doctest::Approx(src.at(c, y, sx)).epsilon(1e-12));
      }
    }
  }

  // constant flow (0.5, 0) on a two-column ramp: interior value 0.5
  Tensor two({1, 2, 2});
  two.at(0, 0, 0) = 0.0;
  two.at(0, 0, 1) = 1.0;
  two.at(0, 1, 0) = 0.0;
  two.at(0, 1, 1) = 1.0;
  Tensor fh({2, 2, 2}, 0.0);
  fh.at(0, 0, 0) = 0.5;
  fh.at(0, 1, 0) = 0.5;
  auto yh = ag::warp_bilinear(ag::constant(two), ag::constant(fh));
  CHECK(yh->value.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(yh->value.at(0, 1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("warp_bilinear gradients match finite differences") {
  Rng rng(13);
  auto src = ag::leaf(random_tensor({2, 6, 6}, rng), true);
  // Non-integer flows away from the border so the sampling is smooth.
  Tensor ft({2, 6, 6});
  for (std::int64_t i = 0; i < ft.numel(); ++i) ft[i] = rng.uniform(-0.8, 0.8);
  for (std::int64_t i = 0; i < ft.numel(); ++i) {
    if (std::fabs(ft[i] - std::round(ft[i])) < 0.1) ft[i] += 0.17;
  }
  auto flow = ag::leaf(ft, true);
  auto f = [&] { return ag::sum_all(ag::square(ag::warp_bilinear(src, flow))); };
  CHECK(check_gradient(f, src) < 1e-4);
  CHECK(check_gradient(f, flow) < 1e-4);
}

TEST_CASE("warp_bilinear is linear in the source") {
  Rng rng(17);
  Tensor s1 = random_tensor({2, 6, 6}, rng);
  Tensor s2 = random_tensor({2, 6, 6}, rng);
  Tensor fl = random_tensor({2, 6, 6}, rng);
  const double a = 0.7, b = -1.3;
  Tensor mix({2, 6, 6});
  for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = a * s1[i] + b * s2[i];
  auto flow = ag::constant(fl);
  auto wm = ag::warp_bilinear(ag::constant(mix), flow);
  auto w1 = ag::warp_bilinear(ag::constant(s1), flow);
  auto w2 = ag::warp_bilinear(ag::constant(s2), flow);
  for (std::int64_t i = 0; i < mix.numel(); ++i) {
    CHECK(wm->value[i] ==
          doctest::Approx(a * w1->value[i] + b * w2->value[i]).epsilon(1e-6));
  }
}

TEST_CASE("quantization ops") {
  Tensor t({5});
  t[0] = 0.49;
  t[1] = -1.5;
  t[2] = 1.5;
  t[3] = -0.5;
  t[4] = 2.3;
  auto x = ag::leaf(t, true);
  auto r = ag::round_ste(x);
  CHECK(r->value[0] == 0.0);
  CHECK(r->value[1] == -2.0);  // ties away from zero
  CHECK(r->value[2] == 2.0);
  CHECK(r->value[3] == -1.0);
  CHECK(r->value[4] == 2.0);

  // idempotent
  auto rr = ag::round_ste(r);
  for (int i = 0; i < 5; ++i) CHECK(rr->value[i] == r->value[i]);

  // straight-through gradient
  auto loss = ag::sum_all(ag::mul(r, r));
  ag::backward(loss);
  CHECK(x->grad_ready);

  Rng rng(23);
  auto n = ag::uniform_noise(x, rng);
  for (int i = 0; i < 5; ++i) CHECK(std::fabs(n->value[i] - t[i]) <= 0.5);
}

TEST_CASE("laplace_bits closed form and gradients") {
  // mass(0; mu=0, sigma=1) = 1 - e^{-1/2}
  auto v = ag::leaf(Tensor({1}, 0.0), true);
  auto mu = ag::leaf(Tensor({1}, 0.0), true);
  auto sg = ag::leaf(Tensor({1}, 1.0), true);
  auto bits = ag::laplace_bits(v, mu, sg);
  const double mass = 1.0 - std::exp(-0.5);
  CHECK(bits->value[0] == doctest::Approx(-std::log2(mass)).epsilon(1e-12));

  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    auto vv = ag::leaf(random_tensor({4}, rng, -3.0, 3.0), true);
    auto mm = ag::leaf(random_tensor({4}, rng, -2.0, 2.0), true);
    Tensor st({4});
    for (int i = 0; i < 4; ++i) st[i] = rng.uniform(0.05, 2.0);
    auto ss = ag::leaf(st, true);
    auto f = [&] { return ag::sum_all(ag::laplace_bits(vv, mm, ss)); };
    CHECK(check_gradient(f, vv) < 1e-3);
    CHECK(check_gradient(f, mm) < 1e-3);
    CHECK(check_gradient(f, ss) < 1e-3);
  }

  // Far-tail values stay finite.
  auto vt = ag::constant(Tensor({1}, 500.0));
  auto mt = ag::constant(Tensor({1}, 0.0));
  auto st = ag::constant(Tensor({1}, 0.01));
  auto bt = ag::laplace_bits(vt, mt, st);
  CHECK(std::isfinite(bt->value[0]));
}

TEST_CASE("logistic_mass_bits gradients") {
  Rng rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor lo = random_tensor({6}, rng, -4.0, 3.0);
    Tensor hi = lo;
    for (int i = 0; i < 6; ++i) hi[i] += rng.uniform(0.3, 2.0);
    auto u = ag::leaf(hi, true);
    auto l = ag::leaf(lo, true);
    auto f = [&] { return ag::sum_all(ag::logistic_mass_bits(u, l)); };
    CHECK(check_gradient(f, u) < 1e-3);
    CHECK(check_gradient(f, l) < 1e-3);
  }
}

TEST_CASE("cwise_linear and factor_step gradients") {
  Rng rng(41);
  auto v = ag::leaf(random_tensor({2, 3, 4}, rng), true);
  auto w = ag::leaf(random_tensor({2, 5, 3}, rng), true);
  auto b = ag::leaf(random_tensor({2, 5}, rng), true);
  auto f = [&] { return ag::sum_all(ag::square(ag::cwise_linear(v, w, b))); };
  CHECK(check_gradient(f, v) < 1e-6);
  CHECK(check_gradient(f, w) < 1e-6);
  CHECK(check_gradient(f, b) < 1e-6);

  auto a = ag::leaf(random_tensor({2, 3}, rng), true);
  auto g = [&] { return ag::sum_all(ag::square(ag::factor_step(v, a))); };
  CHECK(check_gradient(g, v) < 1e-6);
  CHECK(check_gradient(g, a) < 1e-6);
}

TEST_CASE("pool, upsample and pointwise op gradients") {
  Rng rng(43);
  auto x = ag::leaf(random_tensor({2, 4, 4}, rng), true);
  auto f1 = [&] { return ag::sum_all(ag::square(ag::avg_pool2(x))); };
  CHECK(check_gradient(f1, x) < 1e-6);
  auto f2 = [&] { return ag::sum_all(ag::square(ag::upsample_bilinear2(x))); };
  CHECK(check_gradient(f2, x) < 1e-6);
  auto f3 = [&] {
    return ag::sum_all(ag::mul(ag::softplus(x), ag::tanh_(ag::leaky_relu(x, 0.1))));
  };
  CHECK(check_gradient(f3, x) < 1e-4);
}

TEST_CASE("masked conv is raster causal") {
  Rng rng(47);
  nn::MaskedConv2d mc(3, 4, 5, rng);
  Tensor xt = random_tensor({3, 6, 6}, rng);
  auto base = mc(ag::constant(xt));

  // Perturb a later raster position: output at earlier positions unchanged.
  const int py = 3, px = 3;
  Tensor xp = xt;
  xp.at(1, py, px) += 0.5;
  auto pert = mc(ag::constant(xp));
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        const bool at_or_before = (y < py) || (y == py && x <= px);
        if (at_or_before) {
          CHECK(pert->value.at(c, y, x) == base->value.at(c, y, x));
        }
      }
    }
  }
  // A perturbation strictly before (within the kernel support) does change it.
  Tensor xq = xt;
  xq.at(0, py, px - 1) += 0.5;
  auto pert2 = mc(ag::constant(xq));
  CHECK(pert2->value.at(0, py, px) != base->value.at(0, py, px));
}

TEST_CASE("no-grad mode records nothing") {
  Rng rng(53);
  auto x = ag::leaf(random_tensor({2, 3, 3}, rng), true);
  {
    ag::NoGradGuard ng;
    auto y = ag::square(x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  auto y2 = ag::square(x);
  CHECK(y2->requires_grad);
}

TEST_SUITE_END();
