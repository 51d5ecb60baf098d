#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sisc/tensor.hpp"
#include "support.hpp"

using namespace sisc;
using sisc::testing::central_difference;
using sisc::testing::inner;
using sisc::testing::naive_conv;
using sisc::testing::rel_error;

namespace {

ConvParams<double> random_conv(std::size_t cout, std::size_t cin, std::size_t k, std::size_t stride,
                               std::size_t pad, Rng& rng) {
  ConvParams<double> p;
  p.weights = Tensor<double>::random_normal(Shape{cout, cin, k, k}, rng);
  p.bias.resize(cout);
  for (auto& b : p.bias) b = rng.normal();
  p.stride = stride;
  p.padding = pad;
  return p;
}

constexpr std::size_t kProbes = 120;

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("tensor length invariant and shape errors") {
  Tensor<double> t(Shape{2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK_THROWS_AS(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>(3)), ConfigError);
  std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(ensure_finite<double>(bad, "probe"), NumericError);
}

TEST_CASE("conv2d_fwd scalar kernel doubles the input") {
  ConvParams<double> p;
  p.weights = Tensor<double>(Shape{1, 1, 1, 1}, 2.0);
  p.bias = {0.0};
  Tensor<double> x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = conv2d_fwd(x, p);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == 2.0 * x[i]);
}

TEST_CASE("conv2d_fwd with zero weights and bias is zero") {
  Rng rng(1);
  ConvParams<double> p;
  p.weights = Tensor<double>(Shape{3, 2, 3, 3});
  p.bias = {0, 0, 0};
  p.padding = 1;
  const auto x = Tensor<double>::random_normal(Shape{2, 2, 6, 6}, rng);
  for (double v : conv2d_fwd(x, p).data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d_fwd matches the nested-loop oracle") {
  Rng rng(2);
  for (auto [k, stride, pad] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 1, 1}, {3, 2, 1},
                                {1, 1, 0}, {5, 1, 2}, {2, 2, 0}}) {
    const auto p = random_conv(3, 2, k, stride, pad, rng);
    const auto x = Tensor<double>::random_normal(Shape{2, 2, 7, 7}, rng);
    const auto got = conv2d_fwd(x, p);
    const auto want = naive_conv(x, p.weights, p.bias, stride, pad);
    REQUIRE(got.shape() == want.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    CHECK(worst < 1e-12);
  }
  // the single-sample case named in the contract
  const auto p = random_conv(1, 2, 3, 1, 1, rng);
  const auto x = Tensor<double>::random_normal(Shape{1, 2, 5, 5}, rng);
  const auto got = conv2d_fwd(x, p);
  const auto want = naive_conv(x, p.weights, p.bias, 1, 1);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("conv2d_fwd rejects mismatched shapes") {
  Rng rng(3);
  const auto p = random_conv(2, 3, 3, 1, 1, rng);
  CHECK_THROWS_AS(conv2d_fwd(Tensor<double>(Shape{1, 2, 5, 5}), p), ConfigError);
  const auto big = random_conv(2, 3, 7, 1, 0, rng);
  CHECK_THROWS_AS(conv2d_fwd(Tensor<double>(Shape{1, 3, 5, 5}), big), ConfigError);
}

TEST_CASE("conv2d_fwd is linear without bias") {
  Rng rng(4);
  auto p = random_conv(3, 2, 3, 1, 1, rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  const auto x = Tensor<double>::random_normal(Shape{1, 2, 6, 6}, rng);
  const auto y = Tensor<double>::random_normal(Shape{1, 2, 6, 6}, rng);
  const double a = 1.7, b = -0.3;
  Tensor<double> combo(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) combo[i] = a * x[i] + b * y[i];
  const auto lhs = conv2d_fwd(combo, p);
  const auto cx = conv2d_fwd(x, p);
  const auto cy = conv2d_fwd(y, p);
  for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-10);
}

TEST_CASE("conv2d_bwd trivial cases") {
  Rng rng(5);
  const auto p = random_conv(2, 2, 3, 1, 1, rng);
  const auto x = Tensor<double>::random_normal(Shape{1, 2, 4, 4}, rng);
  const auto g = conv2d_bwd(x, p, Tensor<double>(Shape{1, 2, 4, 4}));
  for (double v : g.input.data()) CHECK(v == 0.0);
  for (double v : g.weights.data()) CHECK(v == 0.0);
  for (double v : g.bias) CHECK(v == 0.0);

  ConvParams<double> s;
  s.weights = Tensor<double>(Shape{1, 1, 1, 1}, 0.7);
  s.bias = {0.0};
  const auto xi = Tensor<double>::random_normal(Shape{1, 1, 3, 3}, rng);
  const auto go = Tensor<double>::random_normal(Shape{1, 1, 3, 3}, rng);
  const auto gs = conv2d_bwd(xi, s, go);
  for (std::size_t i = 0; i < 9; ++i) CHECK(gs.input[i] == doctest::Approx(0.7 * go[i]).epsilon(1e-15));
  CHECK(gs.weights[0] == doctest::Approx(inner(xi.data(), go.data())).epsilon(1e-13));
  CHECK_THROWS_AS(conv2d_bwd(xi, s, Tensor<double>(Shape{1, 1, 2, 2})), ConfigError);
}

TEST_CASE("conv2d_bwd matches central finite differences") {
  Rng rng(6);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}}) {
    auto p = random_conv(3, 2, 3, stride, pad, rng);
    auto x = Tensor<double>::random_normal(Shape{2, 2, 6, 6}, rng);
    const auto go = Tensor<double>::random_normal(p.output_shape(x.shape()), rng);
    const auto g = conv2d_bwd(x, p, go);
    auto loss = [&] { return inner(conv2d_fwd(x, p).data(), go.data()); };
    double worst = 0.0;
    for (std::size_t t = 0; t < kProbes; ++t) {
      const int which = static_cast<int>(rng.below(3));
      if (which == 0) {
        const auto i = rng.below(x.size());
        worst = std::max(worst, rel_error(g.input[i], central_difference(x[i], loss)));
      } else if (which == 1) {
        const auto i = rng.below(p.weights.size());
        worst = std::max(worst, rel_error(g.weights[i], central_difference(p.weights[i], loss)));
      } else {
        const auto i = rng.below(p.bias.size());
        worst = std::max(worst, rel_error(g.bias[i], central_difference(p.bias[i], loss)));
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("deconv_project equals the conv2d_bwd input gradient and is the adjoint") {
  Rng rng(7);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}, {1, 0}}) {
    const auto p = random_conv(4, 3, 3, stride, pad, rng);
    const auto x = Tensor<double>::random_normal(Shape{2, 3, 8, 8}, rng);
    const auto y = Tensor<double>::random_normal(p.output_shape(x.shape()), rng);
    const auto proj = deconv_project(y, p, std::pair<std::size_t, std::size_t>{8, 8});
    const auto g = conv2d_bwd(x, p, y);
    REQUIRE(proj.shape() == g.input.shape());
    CHECK(proj.values() == g.input.values());

    auto unbiased = p;
    std::fill(unbiased.bias.begin(), unbiased.bias.end(), 0.0);
    const double lhs = inner(conv2d_fwd(x, unbiased).data(), y.data());
    const double rhs = inner(x.data(), proj.data());
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("deconv_project trivial cases") {
  Rng rng(8);
  ConvParams<double> id;
  id.weights = Tensor<double>(Shape{1, 1, 1, 1}, 1.0);
  id.bias = {5.0};
  const auto f = Tensor<double>::random_normal(Shape{1, 1, 4, 4}, rng);
  CHECK(deconv_project(f, id).values() == f.values());
  const auto p = random_conv(2, 3, 3, 1, 1, rng);
  const auto zero = deconv_project(Tensor<double>(Shape{1, 2, 5, 5}), p);
  for (double v : zero.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(deconv_project(Tensor<double>(Shape{1, 3, 5, 5}), p), ConfigError);
}

TEST_CASE("maxpool_fwd basic, ties and oracle") {
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  auto r = maxpool_fwd(x, 2);
  CHECK(r.output[0] == 4.0);
  CHECK(r.switches.argmax[0] == 3);

  Tensor<double> c(Shape{1, 2, 4, 4}, 1.5);
  r = maxpool_fwd(c, 2);
  for (std::size_t o = 0; o < r.output.size(); ++o) {
    CHECK(r.output[o] == 1.5);
    const std::size_t ch = o / 4, oi = (o % 4) / 2, oj = o % 2;
    CHECK(r.switches.argmax[o] == c.index(0, ch, 2 * oi, 2 * oj));
  }

  Rng rng(9);
  const auto rx = Tensor<double>::random_normal(Shape{1, 1, 6, 6}, rng);
  r = maxpool_fwd(rx, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double best = -1e300;
      std::size_t at = 0;
      for (std::size_t u = 0; u < 2; ++u)
        for (std::size_t v = 0; v < 2; ++v)
          if (rx(0, 0, 2 * i + u, 2 * j + v) > best) {
            best = rx(0, 0, 2 * i + u, 2 * j + v);
            at = rx.index(0, 0, 2 * i + u, 2 * j + v);
          }
      CHECK(r.output(0, 0, i, j) == best);
      CHECK(r.switches.argmax[i * 3 + j] == at);
    }
  CHECK_THROWS_AS(maxpool_fwd(Tensor<double>(Shape{1, 1, 5, 4}), 2), ConfigError);
}

TEST_CASE("unpool places values at the switches") {
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  const auto r = maxpool_fwd(x, 2);
  const auto u = unpool(r.output, r.switches, x.shape());
  CHECK(u.values() == std::vector<double>{0, 0, 0, 4});
  const auto zero = unpool(Tensor<double>(Shape{1, 1, 1, 1}), r.switches, x.shape());
  for (double v : zero.data()) CHECK(v == 0.0);

  Rng rng(10);
  const auto rx = Tensor<double>::random_normal(Shape{2, 3, 8, 8}, rng);
  const auto rr = maxpool_fwd(rx, 2);
  const auto back = unpool(rr.output, rr.switches, rx.shape());
  std::vector<int> hits(rx.size(), 0);
  for (std::size_t idx : rr.switches.argmax) hits[idx] = 1;
  for (std::size_t i = 0; i < rx.size(); ++i) CHECK(back[i] == (hits[i] ? rx[i] : 0.0));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          int nonzero = 0;
          for (std::size_t u = 0; u < 2; ++u)
            for (std::size_t v = 0; v < 2; ++v) nonzero += back(n, c, 2 * i + u, 2 * j + v) != 0.0;
          CHECK(nonzero <= 1);
        }

  auto broken = rr.switches;
  broken.argmax[0] = rx.size() + 10;
  CHECK_THROWS_AS(unpool(rr.output, broken, rx.shape()), InternalError);
}

TEST_CASE("batchnorm forward properties") {
  Rng rng(11);
  const double eps = 1e-3;
  auto params = BatchNormParams<double>::identity(3, 0.99, eps);
  auto x = Tensor<double>::random_normal(Shape{4, 3, 5, 5}, rng, 2.0);
  for (double& v : x.data()) v += 3.0;

  const auto out = batchnorm_fwd(x, params, Mode::train);
  const std::size_t m = 4 * 25;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (double v : out.output.plane(n, c)) mean += v;
    mean /= m;
    for (std::size_t n = 0; n < 4; ++n)
      for (double v : out.output.plane(n, c)) var += (v - mean) * (v - mean);
    var /= m;
    CHECK(std::abs(mean) < 1e-10);
    const double batch_var = out.stats.var[c];
    CHECK(std::abs(var - batch_var / (batch_var + eps)) < 1e-6);
    // running stats moved by (1 - momentum) toward the batch
    CHECK(params.running_mean[c] == doctest::Approx(0.01 * out.stats.mean[c]).epsilon(1e-12));
    CHECK(params.running_var[c] == doctest::Approx(0.99 + 0.01 * batch_var).epsilon(1e-12));
  }

  // standardized input comes back scaled by 1/sqrt(1+eps)
  Tensor<double> z = x;
  const auto st = batch_stats(x);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (double& v : z.plane(n, c)) v = (v - st.mean[c]) / std::sqrt(st.var[c]);
  auto fresh = BatchNormParams<double>::identity(3, 0.99, eps);
  const auto zout = batchnorm_fwd(z, fresh, Mode::train);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(zout.output[i] - z[i] / std::sqrt(1 + eps)) < 1e-9);

  auto zero_gamma = BatchNormParams<double>::identity(3, 0.99, eps);
  zero_gamma.gamma = {0, 0, 0};
  zero_gamma.beta = {0.5, -1, 2};
  const auto b = batchnorm_fwd(x, zero_gamma, Mode::train);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (double v : b.output.plane(n, c)) CHECK(v == zero_gamma.beta[c]);

  // infer mode reads running stats and leaves them alone
  auto inf = params;
  const auto y = batchnorm_fwd(x, inf, Mode::infer);
  CHECK(inf.running_mean == params.running_mean);
  CHECK(y.stats.mean.empty());
  const double want = (x[0] - params.running_mean[0]) / std::sqrt(params.running_var[0] + eps);
  CHECK(y.output[0] == doctest::Approx(want).epsilon(1e-12));

  auto bad = BatchNormParams<double>::identity(3, 0.99, 0.0);
  CHECK_THROWS_AS(batchnorm_fwd(x, bad, Mode::train), ConfigError);
}

TEST_CASE("batchnorm_bwd matches central finite differences") {
  Rng rng(12);
  auto params = BatchNormParams<double>::identity(3, 0.99, 1e-3);
  for (std::size_t c = 0; c < 3; ++c) {
    params.gamma[c] = rng.uniform(0.5, 1.5);
    params.beta[c] = rng.normal();
  }
  auto x = Tensor<double>::random_normal(Shape{3, 3, 4, 4}, rng);
  const auto go = Tensor<double>::random_normal(x.shape(), rng);
  const auto g = batchnorm_bwd(x, params, go);

  auto loss = [&] {
    auto scratch = params;
    return inner(batchnorm_fwd(x, scratch, Mode::train).output.data(), go.data());
  };
  double worst = 0.0;
  for (std::size_t t = 0; t < kProbes; ++t) {
    const int which = static_cast<int>(rng.below(3));
    if (which == 0) {
      const auto i = rng.below(x.size());
      worst = std::max(worst, rel_error(g.input[i], central_difference(x[i], loss)));
    } else if (which == 1) {
      const auto c = rng.below(3);
      worst = std::max(worst, rel_error(g.gamma[c], central_difference(params.gamma[c], loss)));
    } else {
      const auto c = rng.below(3);
      worst = std::max(worst, rel_error(g.beta[c], central_difference(params.beta[c], loss)));
    }
  }
  CHECK(worst < 1e-4);

  // grad_beta is the per-channel sum of grad_out
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (double v : go.plane(n, c)) s += v;
    CHECK(g.beta[c] == doctest::Approx(s).epsilon(1e-12));
  }
  const auto z = batchnorm_bwd(x, params, Tensor<double>(x.shape()));
  for (double v : z.input.data()) CHECK(v == 0.0);
  for (double v : z.gamma) CHECK(v == 0.0);
}

TEST_CASE("relu forward, mask and gradient") {
  Tensor<double> x(Shape{1, 1, 1, 3}, {-1, 0, 2});
  const auto r = relu(x);
  CHECK(r.output.values() == std::vector<double>{0, 0, 2});
  CHECK(r.mask == Mask{0, 0, 1});

  Rng rng(13);
  auto in = Tensor<double>::random_normal(Shape{2, 2, 6, 6}, rng);
  for (double& v : in.data()) {
    if (std::abs(v) < 1e-3) v = 0.5;
  }
  const auto go = Tensor<double>::random_normal(in.shape(), rng);
  const auto g = relu_bwd(go, relu(in).mask);
  auto loss = [&] { return inner(relu(in).output.data(), go.data()); };
  double worst = 0.0;
  for (std::size_t t = 0; t < kProbes; ++t) {
    const auto i = rng.below(in.size());
    worst = std::max(worst, rel_error(g[i], central_difference(in[i], loss)));
  }
  CHECK(worst < 1e-4);

  Tensor<double> neg(Shape{1, 1, 2, 2}, -3.0);
  const auto cleared = relu(neg);
  for (double v : cleared.output.data()) CHECK(v == 0.0);
}

TEST_CASE("dropout modes and statistics") {
  Rng rng(14);
  const auto x = Tensor<double>::random_normal(Shape{1, 1, 10, 10}, rng);
  auto id = dropout(x, 0.0, rng, Mode::train);
  CHECK(id.output.values() == x.values());
  CHECK(std::all_of(id.mask.begin(), id.mask.end(), [](auto m) { return m == 1; }));
  CHECK(dropout(x, 0.6, rng, Mode::infer).output.values() == x.values());
  CHECK_THROWS_AS(dropout(x, 1.0, rng, Mode::train), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, rng, Mode::train), ConfigError);

  Tensor<double> ones(Shape{1, 1, 1000, 1000}, 1.0);
  Rng pinned(2024);
  const auto d = dropout(ones, 0.25, pinned, Mode::train);
  std::size_t kept = 0, wrong_scale = 0;
  for (std::size_t i = 0; i < ones.size(); ++i) {
    kept += d.mask[i];
    wrong_scale += d.output[i] != (d.mask[i] ? 1.0 / 0.75 : 0.0);
  }
  CHECK(wrong_scale == 0);
  const double frac = static_cast<double>(kept) / static_cast<double>(ones.size());
  CHECK(std::abs(frac - 0.75) < 0.005);

  const auto go = Tensor<double>::random_normal(Shape{1, 1, 10, 10}, rng);
  const auto dd = dropout(x, 0.3, rng, Mode::train);
  const auto gb = dropout_bwd(go, dd.mask, 0.3);
  for (std::size_t i = 0; i < go.size(); ++i) CHECK(gb[i] == doctest::Approx(dd.mask[i] ? go[i] / 0.7 : 0.0));
}

TEST_CASE("gap and its gradient") {
  Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(gap(x)[0] == 2.5);
  Tensor<double> c(Shape{2, 3, 3, 3}, 0.25);
  const auto pooled = gap(c);
  for (double v : pooled.data()) CHECK(v == 0.25);

  Rng rng(15);
  auto r = Tensor<double>::random_normal(Shape{2, 3, 5, 7}, rng);
  const auto g = gap(r);
  CHECK(g.shape() == Shape{2, 3, 1, 1});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const auto p = r.plane(n, ch);
      CHECK(std::abs(g(n, ch, 0, 0) - std::accumulate(p.begin(), p.end(), 0.0) / 35.0) < 1e-12);
    }
  const auto go = Tensor<double>::random_normal(g.shape(), rng);
  const auto gi = gap_bwd(go, r.shape());
  auto loss = [&] { return inner(gap(r).data(), go.data()); };
  double worst = 0.0;
  for (std::size_t t = 0; t < kProbes; ++t) {
    const auto i = rng.below(r.size());
    worst = std::max(worst, rel_error(gi[i], central_difference(r[i], loss)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("softmax cross-entropy") {
  Tensor<double> eq(Shape{1, 2, 1, 1}, {0.3, 0.3});
  const auto p = softmax(eq);
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);

  Tensor<double> wide(Shape{1, 2, 1, 1}, {20, -20});
  const std::vector<int> zero{0};
  const auto sx = softmax_xent(wide, zero);
  CHECK(std::isfinite(sx.loss));
  CHECK(sx.loss < 1e-15);

  Rng rng(16);
  for (double mag : {1.0, 100.0, 1e4}) {
    const auto l = Tensor<double>::random_normal(Shape{6, 4, 1, 1}, rng, mag);
    const auto pr = softmax(l);
    for (std::size_t n = 0; n < 6; ++n) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s += pr(n, c, 0, 0);
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }

  auto logits = Tensor<double>::random_normal(Shape{5, 3, 1, 1}, rng);
  const std::vector<int> labels{0, 2, 1, 1, 0};
  const auto ref = softmax_xent(logits, labels);
  auto loss = [&] { return softmax_xent(logits, labels).loss; };
  double worst = 0.0;
  for (std::size_t t = 0; t < kProbes; ++t) {
    const auto i = rng.below(logits.size());
    worst = std::max(worst, rel_error(ref.grad_logits[i], central_difference(logits[i], loss)));
  }
  CHECK(worst < 1e-4);
  const std::vector<int> out_of_range{0, 3, 1, 1, 0};
  CHECK_THROWS_AS(softmax_xent(logits, out_of_range), DataError);
}

TEST_CASE("dot is reproducible and accurate") {
  Rng rng(17);
  std::vector<double> a(1001), b(1001);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  CHECK(dot<double>(a, b) == dot<double>(a, b));
  CHECK(std::abs(dot<double>(a, b) - inner(a, b)) < 1e-10);
}

}  // TEST_SUITE
