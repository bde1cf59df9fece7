#include <doctest.h>

#include <cmath>

#include "brati/errors.hpp"
#include "brati/gradcheck.hpp"
#include "brati/rng.hpp"
#include "brati/tensor.hpp"

using namespace brati;

namespace {

Tensor rand_tensor(Shape shape, SplitMix64& rng, bool requires_grad,
                   double lo = -2.0, double hi = 2.0) {
  std::vector<double> data(shape_product(shape));
  for (auto& v : data) v = lo + (hi - lo) * rng.next_double();
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("matmul forward matches hand arithmetic") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.data()[i] == m.data()[i]);

  Tensor proj = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor s = matmul(proj, Tensor::from({2, 2}, {5, 6, 7, 8}));
  CHECK(s.at(0, 0) == 5.0);
  CHECK(s.at(0, 1) == 6.0);
  CHECK(s.at(1, 0) == 0.0);
  CHECK(s.at(1, 1) == 0.0);
}

TEST_CASE("matmul gradient of sum(a b)") {
  Tensor a = Tensor::from({1, 2}, {1, 1}, true);
  Tensor b = Tensor::from({2, 1}, {2, 3}, true);
  backward(sum_all(matmul(a, b)));
  REQUIRE(a.grad() != nullptr);
  CHECK((*a.grad())[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((*a.grad())[1] == doctest::Approx(3.0).epsilon(1e-12));

  // Same gradient by central differences.
  a.zero_grad();
  b.zero_grad();
  auto r = check_gradients({a, b}, [&] { return sum_all(matmul(a, b)); });
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 0.0));
  Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 0.0));
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul inner extents disagree: [2x3] x [2x2]",
                       ShapeError);
}

TEST_CASE("elementwise forward values") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(elu(Tensor::scalar(-1.0)).item() ==
        doctest::Approx(-0.63212055882855767).epsilon(1e-15));
  CHECK(elu(Tensor::scalar(1.5)).item() == 1.5);

  Tensor x = Tensor::from({1}, {0.0}, true);
  backward(tanh_op(x));
  CHECK((*x.grad())[0] == 1.0);  // tanh'(0) = 1
}

TEST_CASE("broadcast over a trailing singleton axis") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({2, 1}, {10, 20});
  Tensor r = add(a, b);
  CHECK(r.at(0, 2) == 13.0);
  CHECK(r.at(1, 0) == 24.0);

  Tensor bad = Tensor::from({3, 1}, {1, 2, 3});
  CHECK_THROWS_AS(add(a, bad), ShapeError);
  CHECK_THROWS_AS(mul(a, Tensor::from({2, 2}, {1, 2, 3, 4})), ShapeError);
}

TEST_CASE("softmax_lastaxis basics") {
  Tensor u = softmax_lastaxis(Tensor::from({1, 3}, {0, 0, 0}));
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(u.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Tensor sat = softmax_lastaxis(Tensor::from({1, 2}, {1000, 0}));
  CHECK(sat.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sat.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor logs = softmax_lastaxis(Tensor::from(
      {1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(logs.at(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-13));
  CHECK(logs.at(0, 1) == doctest::Approx(2.0 / 6).epsilon(1e-13));
  CHECK(logs.at(0, 2) == doctest::Approx(3.0 / 6).epsilon(1e-13));
}

TEST_CASE("softmax rows sum to one for large-magnitude inputs") {
  SplitMix64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = rand_tensor({3, 4}, rng, false, -1e4, 1e4);
    Tensor s = softmax_lastaxis(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        sum += s.at(r, j);
        CHECK(s.at(r, j) >= 0.0);
      }
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("structural ops compose to identity") {
  SplitMix64 rng(5);
  Tensor x = rand_tensor({4, 3}, rng, false);
  Tensor twice = reverse_timeaxis(reverse_timeaxis(x));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(twice.data()[i] == x.data()[i]);

  Tensor tt = transpose_last2(transpose_last2(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(tt.data()[i] == x.data()[i]);

  Tensor rr = reshape(reshape(x, {3, 4}), {4, 3});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(rr.data()[i] == x.data()[i]);

  Tensor c = concat_lastaxis({x, x});
  CHECK(c.shape() == Shape{4, 6});
}

TEST_CASE("gradient through reverse equals reversed upstream gradient") {
  Tensor x = Tensor::from({3, 1}, {1, 2, 3}, true);
  Tensor w = Tensor::from({3, 1}, {10, 20, 30});
  backward(sum_all(mul(reverse_timeaxis(x), w)));
  // d/dx_i of sum(rev(x) .* w) = w_{n-1-i}
  CHECK((*x.grad())[0] == 30.0);
  CHECK((*x.grad())[1] == 20.0);
  CHECK((*x.grad())[2] == 10.0);

  x.zero_grad();
  auto r = check_gradients(
      {x}, [&] { return sum_all(mul(reverse_timeaxis(x), w)); });
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("backward on sum gives ones") {
  Tensor x = Tensor::from({3}, {7, 8, 9}, true);
  backward(sum_all(x));
  for (double g : *x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward requires a scalar and accumulates across calls") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(x, x)), UsageError);

  backward(sum_all(mul(x, x)));
  backward(sum_all(mul(x, x)));
  CHECK((*x.grad())[0] == 4.0);  // 2 + 2
  CHECK((*x.grad())[1] == 8.0);
}

TEST_CASE("masked_fill passes gradient only through kept cells") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor keep = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor filled = masked_fill(x, keep, -5.0);
  CHECK(filled.at(0, 1) == -5.0);
  CHECK(filled.at(1, 1) == 4.0);
  backward(sum_all(filled));
  CHECK((*x.grad())[0] == 1.0);
  CHECK((*x.grad())[1] == 0.0);
  CHECK((*x.grad())[2] == 0.0);
  CHECK((*x.grad())[3] == 1.0);
}

TEST_CASE("forward evaluation is deterministic") {
  SplitMix64 rng_a(99), rng_b(99);
  Tensor a1 = rand_tensor({3, 3}, rng_a, false);
  Tensor a2 = rand_tensor({3, 3}, rng_b, false);
  Tensor r1 = softmax_lastaxis(matmul(a1, transpose_last2(a1)));
  Tensor r2 = softmax_lastaxis(matmul(a2, transpose_last2(a2)));
  for (std::size_t i = 0; i < r1.size(); ++i)
    CHECK(r1.data()[i] == r2.data()[i]);
}

// Every registered op against central finite differences on random small
// inputs (extents <= 5, values in [-2, 2]).
TEST_CASE("finite-difference property for all registered ops") {
  SplitMix64 rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5),
                      n = 1 + rng.below(5);
    auto up = [&](GradCheckResult r) { worst = std::max(worst, r.max_rel_err); };

    {
      Tensor a = rand_tensor({m, k}, rng, true), b = rand_tensor({k, n}, rng, true);
      Tensor w = rand_tensor({m, n}, rng, false);
      up(check_gradients({a, b}, [&] { return sum_all(mul(matmul(a, b), w)); }));
    }
    {
      Tensor a = rand_tensor({m, n}, rng, true), b = rand_tensor({m, n}, rng, true);
      up(check_gradients({a, b}, [&] { return sum_all(mul(add(a, b), sub(a, b))); }));
    }
    {
      // div with denominator bounded away from zero
      Tensor a = rand_tensor({m, n}, rng, true);
      Tensor b = rand_tensor({m, 1}, rng, true, 0.5, 2.0);
      up(check_gradients({a, b}, [&] { return sum_all(div(a, b)); }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      Tensor v = rand_tensor({n}, rng, true);
      up(check_gradients({x, v}, [&] {
        return sum_all(mul_rowvec(add_rowvec(x, v), v));
      }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      up(check_gradients({x}, [&] {
        return sum_all(add(sigmoid(x), add(tanh_op(x), elu(x))));
      }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      up(check_gradients({x}, [&] {
        return sum_all(add(exp_op(mul_scalar(x, 0.3)), neg(add_scalar(x, 0.7))));
      }));
    }
    {
      // abs away from its kink, sqrt on positive values
      Tensor x = rand_tensor({m, n}, rng, true, 0.2, 2.0);
      up(check_gradients({x}, [&] { return sum_all(add(abs_op(x), sqrt_op(x))); }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      Tensor w = rand_tensor({m, n}, rng, false);
      up(check_gradients({x}, [&] { return sum_all(mul(softmax_lastaxis(x), w)); }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      up(check_gradients({x}, [&] { return mul_scalar(sum_all(mean_lastaxis(x)), 0.5); }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      Tensor y = rand_tensor({m, n}, rng, true);
      Tensor w = rand_tensor({2 * m, n}, rng, false);
      up(check_gradients({x, y}, [&] {
        return sum_all(mul(concat_timeaxis({x, y}), w));
      }));
      Tensor w2 = rand_tensor({m, 2 * n}, rng, false);
      up(check_gradients({x, y}, [&] {
        return sum_all(mul(concat_lastaxis({x, y}), w2));
      }));
    }
    {
      Tensor x = rand_tensor({std::max<std::size_t>(m, 2), n}, rng, true);
      Tensor w = rand_tensor({1, n}, rng, false);
      up(check_gradients({x}, [&] {
        return sum_all(mul(slice_timeaxis(reverse_timeaxis(x), 0, 1), w));
      }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      Tensor w = rand_tensor({n, m}, rng, false);
      up(check_gradients({x}, [&] {
        return sum_all(mul(transpose_last2(reverse_lastaxis(x)), w));
      }));
    }
    {
      Tensor x = rand_tensor({m, n}, rng, true);
      std::vector<double> keep(m * n);
      for (auto& v : keep) v = rng.below(2) ? 1.0 : 0.0;
      Tensor mask = Tensor::from({m, n}, std::move(keep));
      up(check_gradients({x}, [&] {
        return sum_all(masked_fill(x, mask, 0.25));
      }));
    }
  }
  CHECK(worst < 1e-4);
  MESSAGE("worst relative error across ops: " << worst);
}
