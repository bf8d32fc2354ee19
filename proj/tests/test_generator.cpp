#include <doctest.h>

#include <cmath>
#include <vector>

#include "hywu/backbone.hpp"
#include "hywu/generator.hpp"
#include "hywu/rng.hpp"

#include "fd_check.hpp"

using namespace hywu;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.blocks = 1;
  cfg.hidden = 16;
  cfg.heads = 2;
  cfg.cond_width = 6;
  return cfg;
}

AdapterLayout small_layout() { return plan_layout({{"proj", 4, 6}}, 2, 2); }

Tensor random_conditions(std::size_t n, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor({n, c}, rng.gaussian_vector(n * c));
}

}  // namespace

TEST_CASE("init is deterministic under the seed") {
  auto a = init_generator(small_config(), small_layout(), 5);
  auto b = init_generator(small_config(), small_layout(), 5);
  REQUIRE(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) CHECK(t.data == b.params.at(name).data);
  auto c = init_generator(small_config(), small_layout(), 6);
  CHECK(a.params.at("embed").data != c.params.at("embed").data);
}

TEST_CASE("B head starts exactly at zero") {
  auto state = init_generator(small_config(), small_layout(), 5);
  double abs_sum = 0.0;
  for (auto v : state.params.at("head_b.w").data) abs_sum += std::fabs(v);
  for (auto v : state.params.at("head_b.b").data) abs_sum += std::fabs(v);
  CHECK(abs_sum == 0.0);
}

TEST_CASE("fresh generator emits zero B tokens, hence zero weight updates") {
  auto layout = small_layout();
  auto state = init_generator(small_config(), layout, 7);
  Tape tape;
  auto toks = generate(tape, state, random_conditions(2, 6, 1));
  CHECK(toks.tensor.shape == Shape{2, 5, 2, 2});

  auto adapters = detokenize(tape, toks, layout);
  for (std::size_t li = 0; li < 2; ++li) {
    for (auto v : adapters.B[li][0].data) CHECK(v == 0.0);
    // Delta W = A * B is exactly zero even with nonzero A.
    auto dw = lora_delta(tape, adapters.A[li][0], adapters.B[li][0], 1.0);
    for (auto v : dw.data) CHECK(v == 0.0);
  }
}

TEST_CASE("zero-start equivalence on a real backbone forward") {
  // Square modules so the adapters inject into the backbone.
  auto layout = plan_layout({{"block", 6, 6}}, 2, 2);
  GeneratorConfig cfg = small_config();
  auto state = init_generator(cfg, layout, 11);
  BackboneConfig bcfg;
  bcfg.width = 6;
  bcfg.layers = 2;
  bcfg.seed = 3;
  auto bb = build_backbone(bcfg);

  Rng rng(13);
  Tensor x({4, 6}, rng.gaussian_vector(24));
  Tape tape;
  auto base = backbone_forward(tape, bb, x);
  auto toks = generate(tape, state, random_conditions(2, 6, 2));
  auto adapters = detokenize(tape, toks, layout);
  LayerDeltas deltas;
  for (std::size_t li = 0; li < 2; ++li)
    deltas.push_back(lora_delta(tape, adapters.A[li][0], adapters.B[li][0], 1.0));
  auto injected = backbone_forward(tape, bb, x, &deltas);
  CHECK(injected.data == base.data);  // exact 64-bit equality
}

TEST_CASE("generation is deterministic") {
  auto state = init_generator(small_config(), small_layout(), 19);
  auto u = random_conditions(2, 6, 3);
  Tape t1, t2;
  auto a = generate(t1, state, u);
  auto b = generate(t2, state, u);
  CHECK(a.tensor.data == b.tensor.data);
}

TEST_CASE("condition order does not matter") {
  auto state = init_generator(small_config(), small_layout(), 23);
  auto u = random_conditions(2, 6, 4);
  Tensor swapped({2, 6}, std::vector<double>(12));
  for (std::size_t i = 0; i < 6; ++i) {
    swapped.data[i] = u.data[6 + i];
    swapped.data[6 + i] = u.data[i];
  }
  Tape t1, t2;
  auto a = generate(t1, state, u);
  auto b = generate(t2, state, swapped);
  CHECK(a.tensor.data == b.tensor.data);
}

TEST_CASE("condition width mismatch is a dimension error") {
  auto state = init_generator(small_config(), small_layout(), 29);
  Tape tape;
  CHECK_THROWS_AS(generate(tape, state, random_conditions(2, 5, 5)), DimensionError);
}

TEST_CASE("intra-layer attention output is local to its layer") {
  auto layout = small_layout();
  auto cfg = small_config();
  auto state = init_generator(cfg, layout, 31);
  // Silence every path except intra attention, and open the B head so all
  // token rows are informative.
  state.params.at("blk0.inter.wo") = Tensor::zeros({16, 16});
  state.params.at("blk0.cross.wo") = Tensor::zeros({16, 16});
  state.params.at("blk0.ffn.w2") = Tensor::zeros({64, 16});
  state.params.at("blk0.ffn.b2") = Tensor::zeros({16});
  Rng rng(37);
  state.params.at("head_b.w") = Tensor({16, 2}, rng.gaussian_vector(32, 0.02));

  auto u = random_conditions(2, 6, 6);
  Tape t1;
  auto before = generate(t1, state, u);

  // Perturb every token of layer 1; layer 0 output must not move.
  const std::size_t s = layout.tokens_per_layer(), r = layout.rank, h = cfg.hidden;
  auto& embed = state.params.at("embed");
  for (std::size_t row = s * r; row < 2 * s * r; ++row)
    for (std::size_t c = 0; c < h; ++c) embed.data[row * h + c] += 0.5;

  Tape t2;
  auto after = generate(t2, state, u);
  const std::size_t layer_span = s * r * layout.segment;
  for (std::size_t i = 0; i < layer_span; ++i)
    CHECK(after.tensor.data[i] == before.tensor.data[i]);
  // And layer 1 itself did change.
  bool changed = false;
  for (std::size_t i = layer_span; i < 2 * layer_span; ++i)
    changed = changed || after.tensor.data[i] != before.tensor.data[i];
  CHECK(changed);
}

TEST_CASE("rank axis encoding breaks rank-swap equivariance") {
  auto layout = small_layout();
  for (int rank_band : {0, 2}) {
    GeneratorConfig cfg = small_config();
    cfg.rope_layer = 2;
    cfg.rope_token = 2;
    cfg.rope_rank = rank_band;
    auto state = init_generator(cfg, layout, 41);
    Rng rng(43);
    state.params.at("head_b.w") = Tensor({16, 2}, rng.gaussian_vector(32, 0.02));
    auto u = random_conditions(2, 6, 7);

    Tape t1;
    auto base = generate(t1, state, u);

    // Swap rank indices 0 and 1 in the embeddings everywhere.
    const std::size_t s = layout.tokens_per_layer(), r = layout.rank, h = cfg.hidden;
    auto swapped_state = state;
    auto& e = swapped_state.params.at("embed");
    for (std::size_t ls = 0; ls < 2 * s; ++ls)
      for (std::size_t c = 0; c < h; ++c)
        std::swap(e.data[(ls * r + 0) * h + c], e.data[(ls * r + 1) * h + c]);

    Tape t2;
    auto swapped_out = generate(t2, swapped_state, u);

    // Expected value if the generator were rank-equivariant: the output with
    // rank indices swapped back.
    double max_diff = 0.0;
    const std::size_t d = layout.segment;
    for (std::size_t ls = 0; ls < 2 * s; ++ls)
      for (std::size_t ri = 0; ri < r; ++ri)
        for (std::size_t di = 0; di < d; ++di) {
          const std::size_t a = (ls * r + ri) * d + di;
          const std::size_t b = (ls * r + (ri == 0 ? 1 : ri == 1 ? 0 : ri)) * d + di;
          max_diff = std::max(max_diff,
                              std::fabs(swapped_out.tensor.data[b] - base.tensor.data[a]));
        }
    if (rank_band == 0) CHECK(max_diff < 1e-9);
    else CHECK(max_diff > 1e-6);
  }
}

TEST_CASE("generator gradients match finite differences on a tiny setup") {
  auto layout = plan_layout({{"p", 2, 2}}, 1, 1);
  GeneratorConfig cfg;
  cfg.blocks = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.cond_width = 3;
  auto state = init_generator(cfg, layout, 47);
  auto u = random_conditions(2, 3, 8);

  for (const char* name : {"embed", "blk0.cross.wk", "head_a.w", "blk0.intra.wq",
                           "blk0.ffn.w1", "final.gain"}) {
    const Tensor& p0 = state.params.at(name);
    Rng rng(53);
    auto w0 = rng.gaussian_vector(layout.total_scalars());

    auto loss_of = [&](const std::vector<double>& v) {
      GeneratorState st = state;
      st.params.at(name).data = v;
      Tape t;
      auto toks = generate(t, st, u);
      double acc = 0.0;
      for (std::size_t i = 0; i < toks.tensor.size(); ++i)
        acc += w0[i] * toks.tensor.data[i];
      return acc;
    };

    Tape t;
    std::map<std::string, Tensor> watched{{name, t.watch(p0)}};
    auto toks = generate(t, state, u, &watched);
    auto loss = t.sum(t.mul(toks.tensor,
                            Tensor(toks.tensor.shape, w0)));
    t.backward(loss);
    CHECK(max_rel_error(t.grad(watched.at(name)), fd_gradient(loss_of, p0.data, 1e-4), 1e-5) <
          1e-4);
  }
}
