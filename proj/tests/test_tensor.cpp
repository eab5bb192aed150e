#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ctpnet/errors.hpp"
#include "ctpnet/ops.hpp"
#include "oracles.hpp"

using namespace ctpnet;

namespace {

void expect_grad_ok(const std::function<Tensor()>& build, const std::vector<Tensor>& params) {
  for (auto p : params) p.zero_grad();
  build().backward();
  const auto res = oracle::finite_difference(
      [&] {
        NoGradGuard ng;
        return build().item();
      },
      params);
  CHECK(res.checked > 0);
  CHECK(res.max_rel_err < 1e-4);
}

// Random weights for a weighted sum so non-scalar outputs reduce to a scalar
// with non-trivial upstream gradients.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, oracle::random_tensor(y.shape(), rng)));
}

}  // namespace

TEST_CASE("matmul: identity, scalar and triple-loop oracle") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  CHECK(matmul(a, eye).to_vector() == std::vector<double>{1, 2, 3, 4});
  CHECK(matmul(Tensor({1, 1}, {2}), Tensor({1, 1}, {3})).item() == 6.0);

  std::mt19937_64 rng(7);
  const auto av = oracle::random_vec(12, rng), bv = oracle::random_vec(8, rng);
  const auto got = matmul(Tensor({3, 4}, av), Tensor({4, 2}, bv));
  const auto want = oracle::matmul(av, bv, 3, 4, 2);
  CHECK(got.shape() == Shape{3, 2});
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::fabs(got.data()[i] - want[i]) < 1e-12);
}

TEST_CASE("matmul: broadcast leading axes match per-batch oracle") {
  std::mt19937_64 rng(11);
  const auto a = oracle::random_tensor({2, 3, 4, 5}, rng);
  const auto b = oracle::random_tensor({3, 5, 2}, rng);
  const auto c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 4, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      oracle::Vec av(a.data().begin() + (i * 3 + j) * 20, a.data().begin() + (i * 3 + j + 1) * 20);
      oracle::Vec bv(b.data().begin() + j * 10, b.data().begin() + (j + 1) * 10);
      const auto want = oracle::matmul(av, bv, 4, 5, 2);
      for (std::size_t e = 0; e < 8; ++e) CHECK(std::fabs(c.data()[(i * 3 + j) * 8 + e] - want[e]) < 1e-12);
    }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeMismatch);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 2, 3}), Tensor::zeros({3, 3, 2})), ShapeMismatch);
}

TEST_CASE("softmax_last") {
  const auto u = softmax_last(Tensor({3}, {0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto big = softmax_last(Tensor({2}, {1000, 0}));
  CHECK(std::fabs(big.data()[0] - 1.0) < 1e-12);
  CHECK(std::fabs(big.data()[1]) < 1e-12);

  const auto s = softmax_last(Tensor({3}, {1, 2, 3}));
  CHECK(std::fabs(s.data()[0] - 0.09003057317038046) < 1e-12);
  CHECK(std::fabs(s.data()[1] - 0.24472847105479767) < 1e-12);
  CHECK(std::fabs(s.data()[2] - 0.6652409557748219) < 1e-12);

  std::mt19937_64 rng(3);
  const auto r = softmax_last(oracle::random_tensor({5, 7}, rng, false, -20, 20));
  for (std::size_t row = 0; row < 5; ++row) {
    double total = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
      const double v = r.data()[row * 7 + i];
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      total += v;
    }
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("layer_norm_last") {
  const auto one = Tensor::full({3}, 1.0), zero = Tensor::zeros({3});
  const auto y = layer_norm_last(Tensor({3}, {1, 2, 3}), one, zero);
  CHECK(y.data()[0] == doctest::Approx(-1.22474).epsilon(1e-4));
  CHECK(std::fabs(y.data()[1]) < 1e-12);
  CHECK(y.data()[2] == doctest::Approx(1.22474).epsilon(1e-4));

  const auto c = layer_norm_last(Tensor({3}, {5, 5, 5}), one, zero);
  for (double v : c.data()) CHECK(v == 0.0);

  // Two-pass mean/variance oracle on random rows with variance >> eps.
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor({4, 16}, rng, false, -30, 30);
  const auto n = layer_norm_last(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0;
    for (std::size_t i = 0; i < 16; ++i) m += n.data()[r * 16 + i];
    m /= 16;
    double v = 0.0;
    for (std::size_t i = 0; i < 16; ++i) v += (n.data()[r * 16 + i] - m) * (n.data()[r * 16 + i] - m);
    v /= 16;
    CHECK(std::fabs(m) < 1e-9);
    CHECK(std::fabs(v - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(layer_norm_last(x, Tensor::full({3}, 1.0), Tensor::zeros({16})), ShapeMismatch);
}

TEST_CASE("gelu uses the exact erf form") {
  const auto y = gelu(Tensor({3}, {0.0, 10.0, 1.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(std::fabs(y.data()[1] - 10.0) < 1e-6);
  CHECK(std::fabs(y.data()[2] - 0.8413447460685429) < 1e-6);
  const auto r = gelu(Tensor({5}, {-0.5, 0.0, 0.5, 1.0, 3.0}));
  for (std::size_t i = 1; i < 5; ++i) CHECK(r.data()[i] > r.data()[i - 1]);
}

TEST_CASE("transpose_last_two") {
  CHECK(transpose_last_two(Tensor::zeros({7, 4, 24})).shape() == Shape{7, 24, 4});
  CHECK(transpose_last_two(Tensor({2, 2}, {1, 2, 3, 4})).to_vector() == std::vector<double>{1, 3, 2, 4});
  std::mt19937_64 rng(9);
  const auto x = oracle::random_tensor({3, 5, 6}, rng);
  CHECK(transpose_last_two(transpose_last_two(x)).to_vector() == x.to_vector());
  CHECK_THROWS_AS(transpose_last_two(Tensor({3}, {1, 2, 3})), RankTooLow);
}

TEST_CASE("backward basics") {
  Tensor w({3}, {0.5, -1.0, 2.0}, true);
  sum(w).backward();
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{1, 1, 1});

  Tensor v({2}, {1, -2}, true);
  sum(mul(v, v)).backward();
  CHECK(std::vector<double>(v.grad().begin(), v.grad().end()) == std::vector<double>{2, -4});

  Tensor unused({2}, {3, 4}, true);
  Tensor u({2}, {1, 1}, true);
  sum(u).backward();
  for (double g : unused.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(mul(v, v).backward(), NotScalar);
}

TEST_CASE("no-grad mode records no history") {
  Tensor w({2}, {1, 2}, true);
  NoGradGuard ng;
  CHECK_FALSE(mul(w, w).requires_grad());
}

TEST_CASE("finite-difference gradient checks for every differentiable op") {
  std::mt19937_64 rng(42);
  auto a = oracle::random_tensor({2, 3, 4}, rng, true);
  auto b = oracle::random_tensor({2, 3, 4}, rng, true);
  auto row = oracle::random_tensor({4}, rng, true);
  auto col = oracle::random_tensor({2, 3, 1}, rng, true);

  SUBCASE("add/sub/mul with and without broadcasting") {
    expect_grad_ok([&] { return weighted_sum(add(a, b), 1); }, {a, b});
    expect_grad_ok([&] { return weighted_sum(sub(a, row), 2); }, {a, row});
    expect_grad_ok([&] { return weighted_sum(mul(a, col), 3); }, {a, col});
    expect_grad_ok([&] { return weighted_sum(mul(a, b), 4); }, {a, b});
  }
  SUBCASE("scalar ops, reductions, abs") {
    expect_grad_ok([&] { return mean(mul_scalar(add_scalar(a, 0.3), -1.7)); }, {a});
    expect_grad_ok([&] { return weighted_sum(neg(a), 5); }, {a});
    expect_grad_ok([&] { return mean(abs(a)); }, {a});
  }
  SUBCASE("reshape/slice/concat/stack/index_select/transpose") {
    expect_grad_ok([&] { return weighted_sum(reshape(a, {6, 4}), 6); }, {a});
    expect_grad_ok([&] { return weighted_sum(slice(a, 2, 1, 2), 7); }, {a});
    expect_grad_ok([&] { return weighted_sum(slice(a, 1, 0, 2), 8); }, {a});
    const std::vector<Tensor> parts{a, b};
    expect_grad_ok([&] { return weighted_sum(concat(parts, -1), 9); }, {a, b});
    expect_grad_ok([&] { return weighted_sum(concat(parts, 0), 10); }, {a, b});
    expect_grad_ok([&] { return weighted_sum(stack(parts), 11); }, {a, b});
    const std::vector<std::size_t> idx{3, 0, 3, 1, 2, 3};
    expect_grad_ok([&] { return weighted_sum(index_select(a, 2, idx), 12); }, {a});
    expect_grad_ok([&] { return weighted_sum(transpose_last_two(a), 13); }, {a});
  }
  SUBCASE("matmul, softmax, layer norm, gelu") {
    auto w = oracle::random_tensor({4, 5}, rng, true);
    auto bw = oracle::random_tensor({2, 4, 2}, rng, true);
    expect_grad_ok([&] { return weighted_sum(matmul(a, w), 14); }, {a, w});
    expect_grad_ok([&] { return weighted_sum(matmul(a, transpose_last_two(b)), 15); }, {a, b});
    expect_grad_ok([&] { return weighted_sum(matmul(slice(a, 1, 0, 1), bw), 16); }, {a, bw});
    expect_grad_ok([&] { return weighted_sum(softmax_last(mul_scalar(a, 3.0)), 17); }, {a});
    auto g = oracle::random_tensor({4}, rng, true);
    auto s = oracle::random_tensor({4}, rng, true);
    expect_grad_ok([&] { return weighted_sum(layer_norm_last(a, g, s), 18); }, {a, g, s});
    expect_grad_ok([&] { return weighted_sum(gelu(mul_scalar(a, 2.0)), 19); }, {a});
  }
}

TEST_CASE("ops are deterministic") {
  std::mt19937_64 r1(77), r2(77);
  const auto x1 = oracle::random_tensor({4, 6}, r1), x2 = oracle::random_tensor({4, 6}, r2);
  const auto w1 = oracle::random_tensor({6, 6}, r1), w2 = oracle::random_tensor({6, 6}, r2);
  CHECK(softmax_last(matmul(x1, w1)).to_vector() == softmax_last(matmul(x2, w2)).to_vector());
}

TEST_CASE("constructor validates shape") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeMismatch);
  CHECK_THROWS_AS(Tensor({0}, {}), ShapeMismatch);
  CHECK_THROWS_AS(Tensor({2}, {1, 2}).item(), NotScalar);
}
