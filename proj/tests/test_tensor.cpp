#include <doctest.h>

#include <cmath>
#include <vector>

#include "hywu/rng.hpp"
#include "hywu/tensor.hpp"

#include "fd_check.hpp"

using namespace hywu;

TEST_CASE("matmul identity and hand arithmetic") {
  Tape tape;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {3, -1, 2, 5});
  auto out = tape.matmul(eye, m);
  CHECK(out.data == m.data);

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 1});
  auto c = tape.matmul(a, b);
  CHECK(c.shape == Shape{2, 1});
  CHECK(c.data == std::vector<double>{3, 7});
}

TEST_CASE("matmul shape mismatch raises dimension error") {
  Tape tape;
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(tape.matmul(a, b), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  auto a0 = rng.gaussian_vector(12);
  auto b0 = rng.gaussian_vector(8);
  auto w0 = rng.gaussian_vector(6);  // fixed weighting so the loss is non-trivial

  auto loss_of = [&](const std::vector<double>& av, const std::vector<double>& bv) {
    Tape t;
    Tensor a({3, 4}, av);
    Tensor b({4, 2}, bv);
    auto c = t.matmul(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) acc += w0[i] * c.data[i];
    return acc;
  };

  Tape t;
  auto a = t.watch(Tensor({3, 4}, a0));
  auto b = t.watch(Tensor({4, 2}, b0));
  auto c = t.matmul(a, b);
  auto loss = t.sum(t.mul(c, Tensor({3, 2}, w0)));
  t.backward(loss);

  auto fd_a = fd_gradient([&](const std::vector<double>& v) { return loss_of(v, b0); }, a0);
  auto fd_b = fd_gradient([&](const std::vector<double>& v) { return loss_of(a0, v); }, b0);
  CHECK(max_rel_error(t.grad(a), fd_a) < 1e-6);
  CHECK(max_rel_error(t.grad(b), fd_b) < 1e-6);
}

TEST_CASE("elementwise identities") {
  Tape tape;
  Tensor x({3}, {1.5, -2.0, 0.25});
  auto same = tape.add(x, Tensor::zeros({3}));
  CHECK(same.data == x.data);

  auto zero = tape.scale(x, 0.0);
  CHECK(zero.data == std::vector<double>{0, 0, 0});
}

TEST_CASE("scale by zero sends zero gradient") {
  Tape tape;
  auto x = tape.watch(Tensor({2}, {1.0, -1.0}));
  auto loss = tape.sum(tape.scale(x, 0.0));
  tape.backward(loss);
  CHECK(tape.grad(x) == std::vector<double>{0, 0});
}

TEST_CASE("gelu and tanh gradients match finite differences") {
  Rng rng(3);
  auto x0 = rng.gaussian_vector(10);
  for (int which = 0; which < 2; ++which) {
    auto loss_of = [&](const std::vector<double>& v) {
      Tape t;
      Tensor x({10}, v);
      auto y = which == 0 ? t.gelu(x) : t.tanh(x);
      double acc = 0.0;
      for (auto e : y.data) acc += e;
      return acc;
    };
    Tape t;
    auto x = t.watch(Tensor({10}, x0));
    auto y = which == 0 ? t.gelu(x) : t.tanh(x);
    t.backward(t.sum(y));
    CHECK(max_rel_error(t.grad(x), fd_gradient(loss_of, x0)) < 1e-5);
  }
}

TEST_CASE("softmax rows") {
  Tape tape;
  Tensor c({2, 4}, std::vector<double>(8, 3.0));
  auto u = tape.softmax_rows(c);
  for (auto v : u.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  Tensor row({1, 2}, {0.0, std::log(3.0)});
  auto p = tape.softmax_rows(row);
  CHECK(p.data[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.data[1] == doctest::Approx(0.75).epsilon(1e-12));

  // Row sums are 1 within 1e-12 even for wild magnitudes.
  Tensor wild({1, 3}, {700.0, -700.0, 3.0});
  auto q = tape.softmax_rows(wild);
  CHECK(std::fabs(q.data[0] + q.data[1] + q.data[2] - 1.0) < 1e-12);
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(5);
  auto x0 = rng.gaussian_vector(6);
  auto w0 = rng.gaussian_vector(6);
  auto loss_of = [&](const std::vector<double>& v) {
    Tape t;
    auto y = t.softmax_rows(Tensor({2, 3}, v));
    double acc = 0.0;
    for (std::size_t i = 0; i < 6; ++i) acc += w0[i] * y.data[i];
    return acc;
  };
  Tape t;
  auto x = t.watch(Tensor({2, 3}, x0));
  auto loss = t.sum(t.mul(t.softmax_rows(x), Tensor({2, 3}, w0)));
  t.backward(loss);
  CHECK(max_rel_error(t.grad(x), fd_gradient(loss_of, x0)) < 1e-5);
}

TEST_CASE("reshape and permute round trips are bit-exact") {
  Rng rng(9);
  Tape tape;
  auto x0 = rng.gaussian_vector(6);
  Tensor x({2, 3}, x0);
  auto flat = tape.reshape(x, {6});
  auto back = tape.reshape(flat, {2, 3});
  CHECK(back.data == x0);

  auto y0 = rng.gaussian_vector(24);
  Tensor y({2, 3, 4}, y0);
  auto p = tape.permute(y, {2, 0, 1});
  auto q = tape.permute(p, {1, 2, 0});
  CHECK(q.data == y0);
}

TEST_CASE("gradient of sum(permute(x)) is all ones in original layout") {
  Tape tape;
  auto x = tape.watch(Tensor::full({2, 3, 4}, 0.5));
  auto loss = tape.sum(tape.permute(x, {2, 0, 1}));
  tape.backward(loss);
  CHECK(tape.grad(x) == std::vector<double>(24, 1.0));
}

TEST_CASE("rms_norm gradient matches finite differences") {
  Rng rng(13);
  auto x0 = rng.gaussian_vector(8);
  auto g0 = rng.gaussian_vector(4);
  auto w0 = rng.gaussian_vector(8);
  auto loss_of = [&](const std::vector<double>& xv, const std::vector<double>& gv) {
    Tape t;
    auto y = t.rms_norm(Tensor({2, 4}, xv), Tensor({4}, gv));
    double acc = 0.0;
    for (std::size_t i = 0; i < 8; ++i) acc += w0[i] * y.data[i];
    return acc;
  };
  Tape t;
  auto x = t.watch(Tensor({2, 4}, x0));
  auto g = t.watch(Tensor({4}, g0));
  auto loss = t.sum(t.mul(t.rms_norm(x, g), Tensor({2, 4}, w0)));
  t.backward(loss);
  auto fd_x = fd_gradient([&](const std::vector<double>& v) { return loss_of(v, g0); }, x0);
  auto fd_g = fd_gradient([&](const std::vector<double>& v) { return loss_of(x0, v); }, g0);
  CHECK(max_rel_error(t.grad(x), fd_x) < 1e-5);
  CHECK(max_rel_error(t.grad(g), fd_g) < 1e-5);
}

TEST_CASE("rope rotation is orthogonal and differentiable") {
  Rng rng(17);
  auto x0 = rng.gaussian_vector(6);
  std::vector<double> ang = {0.3, 1.1, -0.7};
  std::vector<double> c(3), s(3);
  for (int i = 0; i < 3; ++i) { c[i] = std::cos(ang[i]); s[i] = std::sin(ang[i]); }

  Tape t;
  auto x = t.watch(Tensor({6}, x0));
  auto y = t.rope(x, c, s);
  // Norm preserved per pair.
  for (int p = 0; p < 3; ++p) {
    double n0 = x0[2 * p] * x0[2 * p] + x0[2 * p + 1] * x0[2 * p + 1];
    double n1 = y.data[2 * p] * y.data[2 * p] + y.data[2 * p + 1] * y.data[2 * p + 1];
    CHECK(n1 == doctest::Approx(n0).epsilon(1e-12));
  }
  auto w0 = rng.gaussian_vector(6);
  auto loss = t.sum(t.mul(y, Tensor({6}, w0)));
  t.backward(loss);
  auto loss_of = [&](const std::vector<double>& v) {
    Tape tt;
    auto yy = tt.rope(Tensor({6}, v), c, s);
    double acc = 0.0;
    for (std::size_t i = 0; i < 6; ++i) acc += w0[i] * yy.data[i];
    return acc;
  };
  CHECK(max_rel_error(t.grad(x), fd_gradient(loss_of, x0)) < 1e-6);
}

TEST_CASE("backward basics") {
  Tape tape;
  auto x = tape.watch(Tensor::full({5}, 2.0));
  auto loss = tape.sum(x);
  tape.backward(loss);
  CHECK(tape.grad(x) == std::vector<double>(5, 1.0));
}

TEST_CASE("backward on non-scalar is a contract error") {
  Tape tape;
  auto x = tape.watch(Tensor::full({3}, 1.0));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("second backward on the same tape is forbidden") {
  Tape tape;
  auto x = tape.watch(Tensor::full({2}, 1.0));
  auto loss = tape.sum(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("constants never accumulate gradients") {
  Tape tape;
  Tensor frozen = Tensor::full({2, 2}, 1.0);  // not watched
  auto x = tape.watch(Tensor::full({2, 2}, 0.5));
  auto loss = tape.sum(tape.matmul(x, frozen));
  tape.backward(loss);
  CHECK_FALSE(frozen.requires_grad());
  CHECK_THROWS_AS(tape.grad(frozen), ContractError);
}

TEST_CASE("gradient sums over all uses of a node") {
  Tape tape;
  auto x = tape.watch(Tensor({1}, {3.0}));
  auto y = tape.mul(x, x);           // x^2
  auto loss = tape.sum(tape.add(y, x));  // x^2 + x -> d/dx = 2x + 1 = 7
  tape.backward(loss);
  CHECK(tape.grad(x)[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("ops are deterministic across repeated evaluation") {
  Rng rng(21);
  auto a0 = rng.gaussian_vector(20);
  auto b0 = rng.gaussian_vector(15);
  std::vector<double> first;
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    auto c = t.matmul(Tensor({4, 5}, a0), Tensor({5, 3}, b0));
    auto y = t.gelu(c);
    if (rep == 0) first = y.data;
    else CHECK(y.data == first);
  }
}
