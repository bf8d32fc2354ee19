#include <doctest.h>

#include <vector>

#include "hywu/rng.hpp"
#include "hywu/tokenizer.hpp"

#include "fd_check.hpp"

using namespace hywu;

namespace {

Adapters random_adapters(const AdapterLayout& layout, Rng& rng) {
  Adapters a = zero_adapters(layout);
  for (auto& layer : a.A)
    for (auto& t : layer) t.data = rng.gaussian_vector(t.size());
  for (auto& layer : a.B)
    for (auto& t : layer) t.data = rng.gaussian_vector(t.size());
  return a;
}

AdapterLayout random_layout(Rng& rng) {
  const std::size_t n_mod = 1 + rng.uniform_index(3);
  std::vector<ModuleSpec> specs;
  for (std::size_t j = 0; j < n_mod; ++j)
    specs.push_back({"m" + std::to_string(j), 2 + rng.uniform_index(11),
                     2 + rng.uniform_index(11)});
  const std::size_t ranks[] = {1, 2, 4};
  return plan_layout(specs, 1 + rng.uniform_index(4), ranks[rng.uniform_index(3)]);
}

}  // namespace

TEST_CASE("plan_layout forced arithmetic") {
  auto layout = plan_layout({{"proj", 4, 6}}, 1, 2);
  CHECK(layout.segment == 2);
  CHECK(layout.n == std::vector<std::size_t>{2});
  CHECK(layout.m == std::vector<std::size_t>{3});
  CHECK(layout.tokens_per_layer() == 5);
  CHECK_FALSE(layout.degenerate);
}

TEST_CASE("plan_layout degenerate d=1 is legal but flagged") {
  auto layout = plan_layout({{"odd", 3, 5}}, 1, 2);
  CHECK(layout.segment == 1);
  CHECK(layout.n == std::vector<std::size_t>{3});
  CHECK(layout.m == std::vector<std::size_t>{5});
  CHECK(layout.tokens_per_layer() == 8);
  CHECK(layout.degenerate);
}

TEST_CASE("plan_layout accepts a full-scale style configuration") {
  // l=32, s=24, r=16, d=128: one 1024x2048 module sliced at d=128 gives
  // n=8, m=16, s=24.
  auto layout = plan_layout({{"wqkv", 1024, 2048}}, 32, 16, 128);
  CHECK(layout.layers == 32);
  CHECK(layout.tokens_per_layer() == 24);
  CHECK(layout.rank == 16);
  CHECK(layout.segment == 128);
  CHECK(layout.total_scalars() == 32 * 24 * 16 * 128);
}

TEST_CASE("plan_layout rejects bad inputs") {
  CHECK_THROWS_AS(plan_layout({}, 1, 2), LayoutError);
  CHECK_THROWS_AS(plan_layout({{"m", 4, 6}}, 1, 2, 4), LayoutError);  // 4 !| 6
  CHECK_THROWS_AS(plan_layout({{"m", 4, 6}}, 0, 2), LayoutError);
}

TEST_CASE("token tags partition tokens, A-slices then B-slices per module") {
  auto layout = plan_layout({{"p", 4, 6}, {"q", 2, 2}}, 2, 2);
  REQUIRE(layout.tokens_per_layer() == 5 + 2);
  // Module 0: 2 A tokens, 3 B tokens; module 1: 1 A, 1 B.
  CHECK(layout.token_tags[0].kind == TokenKind::A);
  CHECK(layout.token_tags[1].kind == TokenKind::A);
  CHECK(layout.token_tags[2].kind == TokenKind::B);
  CHECK(layout.token_tags[4].kind == TokenKind::B);
  CHECK(layout.token_tags[5].kind == TokenKind::A);
  CHECK(layout.token_tags[5].module_index == 1);
  CHECK(layout.token_tags[6].kind == TokenKind::B);
}

TEST_CASE("zero adapters tokenize to a zero tensor") {
  auto layout = plan_layout({{"p", 4, 6}}, 2, 2);
  Tape tape;
  auto toks = tokenize(tape, zero_adapters(layout), layout);
  CHECK(toks.tensor.shape == Shape{2, 5, 2, 2});
  for (auto v : toks.tensor.data) CHECK(v == 0.0);
}

TEST_CASE("tokenize matches an index-by-index brute-force slicer") {
  auto layout = plan_layout({{"p", 4, 6}}, 1, 2);
  const std::size_t d = layout.segment, r = layout.rank, s = layout.tokens_per_layer();
  Adapters adapters = zero_adapters(layout);
  // A: 4x2 identity-patterned, B: 2x6 counting pattern.
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) adapters.A[0][0].data[i * 2 + j] = (i == j) ? 1.0 : 0.0;
  for (std::size_t i = 0; i < 12; ++i) adapters.B[0][0].data[i] = static_cast<double>(i + 1);

  Tape tape;
  auto toks = tokenize(tape, adapters, layout);
  // Independent slicer straight from the definition.
  for (std::size_t si = 0; si < s; ++si) {
    const auto& tag = layout.token_tags[si];
    for (std::size_t ri = 0; ri < r; ++ri) {
      for (std::size_t di = 0; di < d; ++di) {
        const double got = toks.tensor.data[((0 * s + si) * r + ri) * d + di];
        double want;
        if (tag.kind == TokenKind::A)
          want = adapters.A[0][0].data[(tag.slice_index * d + di) * r + ri];
        else
          want = adapters.B[0][0].data[ri * 6 + tag.slice_index * d + di];
        CHECK(got == want);
      }
    }
  }
}

TEST_CASE("round trip is bit-exact over 100 fuzzed layouts") {
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    auto layout = random_layout(rng);
    auto adapters = random_adapters(layout, rng);
    Tape tape;
    auto toks = tokenize(tape, adapters, layout);
    CHECK(toks.tensor.size() == layout.total_scalars());
    auto back = detokenize(tape, toks, layout);
    for (std::size_t li = 0; li < layout.layers; ++li) {
      for (std::size_t j = 0; j < layout.modules.size(); ++j) {
        CHECK(back.A[li][j].data == adapters.A[li][j].data);
        CHECK(back.B[li][j].data == adapters.B[li][j].data);
      }
    }
  }
}

TEST_CASE("tokenize rejects mismatched shapes") {
  auto layout = plan_layout({{"p", 4, 6}}, 1, 2);
  Adapters bad = zero_adapters(layout);
  bad.A[0][0] = Tensor::zeros({3, 2});
  Tape tape;
  CHECK_THROWS_AS(tokenize(tape, bad, layout), TokenizeError);
}

TEST_CASE("detokenize rejects mismatched token tensors") {
  auto layout = plan_layout({{"p", 4, 6}}, 1, 2);
  Tape tape;
  ParamTokens wrong{Tensor::zeros({2, 5, 2, 2})};
  CHECK_THROWS_AS(detokenize(tape, wrong, layout), TokenizeError);
}

TEST_CASE("detokenize gradients flow back into the token tensor") {
  auto layout = plan_layout({{"p", 4, 4}}, 1, 2);
  Rng rng(5);
  auto t0 = rng.gaussian_vector(layout.total_scalars());
  auto w0 = rng.gaussian_vector(4 * 2);  // weights over A entries

  auto loss_of = [&](const std::vector<double>& tv) {
    Tape t;
    ParamTokens toks{Tensor({1, 2, 2, 4}, tv)};
    auto ad = detokenize(t, toks, layout);
    double acc = 0.0;
    for (std::size_t i = 0; i < ad.A[0][0].size(); ++i) acc += w0[i] * ad.A[0][0].data[i];
    return acc;
  };

  Tape t;
  auto tok = t.watch(Tensor({1, 2, 2, 4}, t0));
  auto ad = detokenize(t, ParamTokens{tok}, layout);
  auto loss = t.sum(t.mul(ad.A[0][0], Tensor({4, 2}, w0)));
  t.backward(loss);
  CHECK(max_rel_error(t.grad(tok), fd_gradient(loss_of, t0)) < 1e-6);
}
