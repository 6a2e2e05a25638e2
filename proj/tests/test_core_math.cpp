#include <doctest.h>

#include <cmath>
#include <random>

#include "hoigraph/autodiff.hpp"
#include "hoigraph/errors.hpp"
#include "hoigraph/gradcheck.hpp"
#include "support.hpp"

using namespace hoigraph;
using hoigraph::testing::random_tensor;

namespace {

Tensor eval_linear(const Tensor& x, const Tensor& w, const Tensor& b, Activation act) {
  Tape t;
  return ad::linear(t.constant(x), t.constant(w), t.constant(b), act).value();
}

Tensor eval_conv(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  Tape t;
  return ad::conv2d(t.constant(x), t.constant(k), Var{}, stride, pad).value();
}

// Direct cross-correlation, one output cell at a time.
Tensor naive_conv(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = k.dim(0), ks = k.dim(2);
  const std::size_t oh = (h + 2 * pad - ks) / stride + 1, ow = (w + 2 * pad - ks) / stride + 1;
  Tensor out({cout, oh, ow});
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x0 = 0; x0 < ow; ++x0) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t i = 0; i < ks; ++i) {
            for (std::size_t j = 0; j < ks; ++j) {
              const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long ix = static_cast<long>(x0 * stride + j) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += x[(c * h + iy) * w + ix] * k[((o * cin + c) * ks + i) * ks + j];
            }
          }
        }
        out[(o * oh + y) * ow + x0] = acc;
      }
    }
  }
  return out;
}

GradCheckReport check(ParamStore& store, const LossBuilder& fn) {
  return finite_difference_check(fn, store, {1e-5, 1e-4});
}

}  // namespace

TEST_CASE("linear map examples") {
  CHECK(eval_linear(Tensor::vector({1, 2}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}),
                    Activation::identity) == Tensor::vector({1, 2}));
  CHECK(eval_linear(Tensor::vector({5}), Tensor::matrix({{0}}), Tensor::vector({-3}), Activation::relu) ==
        Tensor::vector({0}));
  CHECK(eval_linear(Tensor::vector({1, 1}), Tensor::matrix({{1, 2}, {3, 4}}), Tensor::vector({1, 0}),
                    Activation::identity) == Tensor::vector({4, 7}));
}

TEST_CASE("linear rejects mismatched operands") {
  CHECK_THROWS_AS(eval_linear(Tensor::vector({1, 2, 3}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}),
                              Activation::identity),
                  ShapeError);
  CHECK_THROWS_AS(eval_linear(Tensor::vector({1, 2}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0}),
                              Activation::identity),
                  ShapeError);
  try {
    eval_linear(Tensor::vector({1, 2, 3}), Tensor::matrix({{1, 0}}), Tensor::vector({0}), Activation::identity);
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("x") != std::string::npos);
    CHECK(msg.find("W") != std::string::npos);
  }
}

TEST_CASE("batched linear rows match single-row evaluation bitwise") {
  std::mt19937_64 rng(11);
  const Tensor w = random_tensor({7, 13}, rng), b = random_tensor({7}, rng);
  const Tensor x = random_tensor({5, 13}, rng);
  const Tensor batch = eval_linear(x, w, b, Activation::sigmoid);
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> row(x.data() + r * 13, x.data() + (r + 1) * 13);
    const Tensor single = eval_linear(Tensor::vector(row), w, b, Activation::sigmoid);
    for (std::size_t o = 0; o < 7; ++o) CHECK(single[o] == batch[r * 7 + o]);
  }
}

TEST_CASE("softmax examples and errors") {
  Tape t;
  const Tensor u = ad::softmax(t.constant(Tensor::vector({1, 1, 1}))).value();
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Tensor s = ad::softmax(t.constant(Tensor::vector({0, std::log(2.0)}))).value();
  CHECK(s[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(ad::softmax(t.constant(Tensor({0}))), DomainError);
}

TEST_CASE("softmax sums to one and ignores constant shifts") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    Tensor v = random_tensor({n}, rng, 5.0);
    Tape t;
    const Tensor p = ad::softmax(t.constant(v)).value();
    double sum = 0.0;
    for (double x : p.values()) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    const double c = shift(rng);
    for (auto& x : v.values()) x += c;
    const Tensor q = ad::softmax(t.constant(v)).value();
    CHECK(hoigraph::testing::max_abs_diff(p, q) < 1e-12);
  }
}

TEST_CASE("softmax stays finite for large logits") {
  Tape t;
  const Tensor p = ad::softmax(t.constant(Tensor::vector({1000, 999, -1000}))).value();
  CHECK(p.all_finite());
  CHECK(p[0] > p[1]);
}

TEST_CASE("cosine similarity examples") {
  Tape t;
  auto cos = [&](Tensor a, Tensor b) { return ad::cosine_similarity(t.constant(a), t.constant(b)).value()[0]; };
  CHECK(cos(Tensor::vector({3, -4, 2}), Tensor::vector({3, -4, 2})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cos(Tensor::vector({1, 0}), Tensor::vector({0, 1})) == 0.0);
  CHECK(cos(Tensor::vector({3, -4, 2}), Tensor::vector({-3, 4, -2})) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cos(Tensor::vector({0, 0}), Tensor::vector({1, 2})) == 0.0);
  CHECK(cos(Tensor::vector({1e-13, 0}), Tensor::vector({1, 2})) == 0.0);
}

TEST_CASE("cosine similarity is symmetric, bounded and scale invariant") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> alpha(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor a = random_tensor({6}, rng), b = random_tensor({6}, rng);
    Tensor scaled = a;
    const double k = alpha(rng);
    for (auto& v : scaled.values()) v *= k;
    Tape t;
    const double ab = ad::cosine_similarity(t.constant(a), t.constant(b)).value()[0];
    const double ba = ad::cosine_similarity(t.constant(b), t.constant(a)).value()[0];
    const double sb = ad::cosine_similarity(t.constant(scaled), t.constant(b)).value()[0];
    CHECK(ab == ba);
    CHECK(std::abs(ab) <= 1.0 + 1e-12);
    CHECK(std::abs(ab - sb) < 1e-12);
  }
}

TEST_CASE("conv2d examples") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({1, 5, 4}, rng);
  CHECK(eval_conv(x, Tensor({1, 1, 1, 1}, 1.0), 1, 0) == x);
  CHECK(eval_conv(x, Tensor({2, 1, 3, 3}), 1, 1) == Tensor({2, 5, 4}));
  CHECK(eval_conv(Tensor({1, 3, 3}, 1.0), Tensor({1, 1, 2, 2}, 1.0), 1, 0) == Tensor({1, 2, 2}, 4.0));
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  CHECK_THROWS_AS(eval_conv(Tensor({1, 3, 3}), Tensor({1, 1, 5, 5}), 1, 0), ShapeError);
  CHECK_NOTHROW(eval_conv(Tensor({1, 3, 3}), Tensor({1, 1, 5, 5}), 1, 1));
  CHECK_THROWS_AS(eval_conv(Tensor({2, 3, 3}), Tensor({1, 1, 2, 2}), 1, 0), ShapeError);
}

TEST_CASE("conv2d matches direct cross-correlation and the output size formula") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> side(3, 12), ksz(1, 5), str(1, 3), pad(0, 2), ch(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = side(rng), w = side(rng), k = ksz(rng), s = str(rng), p = pad(rng);
    if (k > h + 2 * p || k > w + 2 * p) continue;
    const Tensor x = random_tensor({ch(rng), h, w}, rng);
    const Tensor kern = random_tensor({ch(rng), x.dim(0), k, k}, rng);
    const Tensor got = eval_conv(x, kern, s, p);
    const Tensor want = naive_conv(x, kern, s, p);
    REQUIRE(got.shape() == Shape{kern.dim(0), (h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1});
    CHECK(hoigraph::testing::max_abs_diff(got, want) < 1e-12);
    CHECK(eval_conv(x, Tensor({x.dim(0), x.dim(0), 1, 1}), 1, 0) == Tensor(x.shape()));
  }
}

TEST_CASE("conv2d identity kernel is the identity on every channel") {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({3, 6, 5}, rng);
  Tensor eye({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  CHECK(eval_conv(x, eye, 1, 0) == x);
}

TEST_CASE("batched conv2d equals per-item conv2d") {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor({3, 2, 9, 9}, rng);
  const Tensor k = random_tensor({4, 2, 3, 3}, rng);
  const Tensor batch = eval_conv(x, k, 2, 1);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor item({2, 9, 9}, std::vector<double>(x.data() + b * 162, x.data() + (b + 1) * 162));
    const Tensor one = eval_conv(item, k, 2, 1);
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i] == batch[b * one.size() + i]);
  }
}

TEST_CASE("reduce examples and errors") {
  Tape t;
  const Var a = t.constant(Tensor::vector({1, 5})), b = t.constant(Tensor::vector({3, 2}));
  const Var ab[] = {a, b};
  CHECK(ad::reduce(ReduceOp::max, ab).value() == Tensor::vector({3, 5}));
  const Var c = t.constant(Tensor::vector({2, 2})), d = t.constant(Tensor::vector({4, 6}));
  const Var cd[] = {c, d};
  CHECK(ad::reduce(ReduceOp::mean, cd).value() == Tensor::vector({3, 4}));
  const Var single[] = {a};
  CHECK(ad::reduce(ReduceOp::sum, single).value() == a.value());
  CHECK_THROWS_AS(ad::reduce(ReduceOp::max, std::span<const Var>{}), DomainError);
}

TEST_CASE("max reduction routes the whole gradient to the first maximal entry") {
  Tape t;
  const Var a = t.variable(Tensor::vector({2, 7, 1}));
  const Var b = t.variable(Tensor::vector({2, 3, 9}));
  const Var c = t.variable(Tensor::vector({2, 7, 0}));
  const Var in[] = {a, b, c};
  const Var y = ad::reduce(ReduceOp::max, in);
  const Var weights = t.constant(Tensor::vector({0.5, -2.0, 3.0}));
  t.propagate(ad::total(ad::mul(y, weights)));
  CHECK(t.grad(a) == Tensor::vector({0.5, -2.0, 0}));
  CHECK(t.grad(b) == Tensor::vector({0, 0, 3.0}));
  CHECK(t.grad(c) == Tensor::vector({0, 0, 0}));
}

TEST_CASE("backward examples") {
  {
    Tape t;
    const Var x = t.variable(Tensor::vector({1.5, -2, 3}));
    t.propagate(ad::total(ad::mul(x, x)));
    CHECK(t.grad(x) == Tensor::vector({3, -4, 6}));
  }
  {
    Tape t;
    const Var x = t.variable(Tensor::vector({0}));
    const Var y = ad::activate(x, Activation::sigmoid);
    CHECK(y.value()[0] == 0.5);
    t.propagate(y);
    CHECK(t.grad(x)[0] == 0.25);
  }
  {
    Tape t;
    const Var x = t.variable(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(t.propagate(x), DomainError);
    ParamStore store;
    CHECK_THROWS_AS(backward(t, x, store), DomainError);
  }
}

TEST_CASE("backward accumulates into parameters and ignores other leaves") {
  ParamStore store;
  store.add("w", Tensor::vector({2, -1}));
  Tape t;
  const Var w = t.param(store, "w");
  const Var x = t.variable(Tensor::vector({3, 4}));
  const Var loss = ad::total(ad::mul(w, x));
  backward(t, loss, store);
  CHECK(store.grad("w") == Tensor::vector({3, 4}));
  Tape t2;
  backward(t2, ad::total(ad::mul(t2.param(store, "w"), t2.constant(Tensor::vector({1, 1})))), store);
  CHECK(store.grad("w") == Tensor::vector({4, 5}));
  store.zero_grad();
  CHECK(store.grad("w") == Tensor::vector({0, 0}));
}

TEST_CASE("primitives reject non-finite results") {
  Tape t;
  CHECK_THROWS_AS(t.constant(Tensor::vector({1, std::nan("")})), DomainError);
  const Var big = t.constant(Tensor::vector({1e200}));
  CHECK_THROWS_AS(ad::mul(big, big), DomainError);
}

TEST_CASE("finite differences on a quadratic are exact up to rounding") {
  ParamStore store;
  std::mt19937_64 rng(1);
  store.add("a", random_tensor({5}, rng));
  store.add("m", random_tensor({3, 5}, rng));
  const GradCheckReport r = check(store, [](Tape& t, const ParamStore& p) {
    const Var a = t.param(p, "a");
    const Var z = ad::linear(a, t.param(p, "m"), t.constant(Tensor({3})), Activation::identity);
    return ad::add(ad::total(ad::mul(z, z)), ad::total(ad::mul(a, a)));
  });
  CHECK(r.checked == 20);
  CHECK(r.max_relative_error < 1e-7);
  CHECK(r.skipped.empty());
}

TEST_CASE("finite differences skip a ReLU kink and report it") {
  ParamStore store;
  store.add("x", Tensor::vector({0.0, 1.0}));
  const GradCheckReport r = check(store, [](Tape& t, const ParamStore& p) {
    return ad::total(ad::activate(t.param(p, "x"), Activation::relu));
  });
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].param == "x");
  CHECK(r.skipped[0].index == 0);
  CHECK(r.checked == 1);
  CHECK(r.max_relative_error < 1e-9);
}

TEST_CASE("finite differences report non-finite perturbed losses") {
  // x^8 overflows just above 3.4e38.
  ParamStore store;
  store.add("x", Tensor::vector({3.0e38}));
  const GradCheckReport r = finite_difference_check(
      [](Tape& t, const ParamStore& p) {
        const Var x = t.param(p, "x");
        const Var x4 = ad::mul(ad::mul(x, x), ad::mul(x, x));
        return ad::total(ad::mul(x4, x4));
      },
      store, {0.5e38, 1e-4});
  REQUIRE(r.non_finite.size() == 1);
  CHECK(r.non_finite[0].param == "x");
  CHECK(r.checked == 0);
  CHECK(store.value("x")[0] == 3.0e38);
}

TEST_CASE("every primitive passes the finite-difference check") {
  std::mt19937_64 rng(21);
  ParamStore store;
  store.add("v", random_tensor({4}, rng));
  store.add("u", random_tensor({4}, rng));
  store.add("w", random_tensor({3, 8}, rng));
  store.add("b", random_tensor({3}, rng));
  store.add("img", random_tensor({2, 2, 7, 7}, rng));
  store.add("k", random_tensor({3, 2, 3, 3}, rng, 0.5));
  store.add("kb", random_tensor({3}, rng));
  const GradCheckReport r = check(store, [](Tape& t, const ParamStore& p) {
    const Var v = t.param(p, "v"), u = t.param(p, "u");
    const Var cat = ad::concat(v, u);
    const Var hidden = ad::linear(cat, t.param(p, "w"), t.param(p, "b"), Activation::sigmoid);
    const Var sm = ad::softmax(hidden);
    const Var cs = ad::cosine_similarity(v, u);
    const Var trio[] = {ad::pick(sm, 0), cs, ad::pick(hidden, 2)};
    const Var stacked = ad::stack(trio);
    const Var pair[] = {v, ad::scale(u, 0.5)};
    const Var mx = ad::reduce(ReduceOp::max, pair);
    const Var mean = ad::reduce(ReduceOp::mean, pair);
    const Var conv = ad::conv2d(t.param(p, "img"), t.param(p, "k"), t.param(p, "kb"), 2, 1, Activation::sigmoid);
    const Var pooled = ad::max_pool2d(conv, 2, 2);
    const Var rows[] = {mx, mean};
    const Var mat = ad::stack_rows(rows);
    const Var terms[] = {ad::total(stacked), ad::total(ad::mul(mat, mat)), ad::total(ad::row(mat, 1)),
                         ad::scale_by(cs, ad::total(pooled)),
                         ad::binary_cross_entropy(ad::activate(v, Activation::sigmoid),
                                                  Tensor::vector({1, 0, 1, 0}))};
    return ad::sum(terms);
  });
  CHECK(r.checked > 100);
  CHECK(r.non_finite.empty());
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("max pooling forward picks window maxima") {
  Tape t;
  const Tensor x({1, 4, 4}, std::vector<double>{1, 2, 0, 0, 3, 4, 0, 9, 5, 0, 1, 1, 0, 0, 1, 2});
  CHECK(ad::max_pool2d(t.constant(x), 2, 2).value() == Tensor({1, 2, 2}, std::vector<double>{4, 9, 5, 2}));
}

TEST_CASE("binary cross-entropy clamps before the log") {
  Tape t;
  const Tensor exact = ad::binary_cross_entropy(t.constant(Tensor::vector({0, 1})), Tensor::vector({0, 1})).value();
  CHECK(exact[0] < 2e-7);
  const Tensor half = ad::binary_cross_entropy(t.constant(Tensor::vector({0.5, 0.5})), Tensor::vector({1, 0})).value();
  CHECK(half[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}
