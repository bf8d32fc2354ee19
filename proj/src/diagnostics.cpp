#include "hywu/diagnostics.hpp"

#include <cmath>
#include <sstream>

#include "hywu/backbone.hpp"
#include "hywu/rng.hpp"

namespace hywu {

CheckResult check_roundtrip_fuzz(std::size_t layouts, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xf022));
  std::size_t tried = 0;
  for (std::size_t it = 0; it < layouts; ++it) {
    const std::size_t n_modules = 1 + rng.uniform_index(3);
    std::vector<ModuleSpec> specs;
    for (std::size_t m = 0; m < n_modules; ++m)
      specs.push_back({"m" + std::to_string(m), 2 + rng.uniform_index(11),
                       2 + rng.uniform_index(11)});
    const std::size_t rank = std::vector<std::size_t>{1, 2, 4}[rng.uniform_index(3)];
    const std::size_t layers = 1 + rng.uniform_index(4);
    auto layout = plan_layout(specs, layers, rank);

    std::size_t total = 0;
    for (std::size_t j = 0; j < specs.size(); ++j)
      total += layers * rank * (specs[j].d_in + specs[j].d_out);
    const std::size_t token_count =
        layout.layers * layout.tokens_per_layer() * layout.rank * layout.segment;
    if (token_count != total || total != layout.total_scalars()) {
      return {false, "token count conservation failed on layout " + std::to_string(it)};
    }

    Adapters adapters = zero_adapters(layout);
    for (auto& per_layer : adapters.A)
      for (auto& t : per_layer) t.data = rng.gaussian_vector(t.size());
    for (auto& per_layer : adapters.B)
      for (auto& t : per_layer) t.data = rng.gaussian_vector(t.size());

    Tape tape;
    auto tokens = tokenize(tape, adapters, layout);
    auto back = detokenize(tape, tokens, layout);
    for (std::size_t li = 0; li < layout.layers; ++li) {
      for (std::size_t j = 0; j < specs.size(); ++j) {
        if (back.A[li][j].data != adapters.A[li][j].data ||
            back.B[li][j].data != adapters.B[li][j].data)
          return {false, "round-trip mismatch on layout " + std::to_string(it)};
      }
    }
    ++tried;
  }
  return {true, std::to_string(tried) + " layouts round-tripped bit-exactly"};
}

CheckResult check_zero_init(std::size_t inputs, std::uint64_t seed) {
  const std::size_t w = 6, layers = 2;
  auto layout = plan_layout({{"block", w, w}}, layers, 2);
  GeneratorConfig gcfg;
  gcfg.blocks = 1;
  gcfg.hidden = 16;
  gcfg.heads = 2;
  gcfg.cond_width = 6;
  auto state = init_generator(gcfg, layout, derive_seed(seed, 0x21));

  BackboneConfig bcfg;
  bcfg.width = w;
  bcfg.layers = layers;
  bcfg.seed = derive_seed(seed, 0x22);
  auto bb = build_backbone(bcfg);

  Rng rng(derive_seed(seed, 0x23));
  for (std::size_t i = 0; i < inputs; ++i) {
    Tensor x({1, w}, rng.gaussian_vector(w));
    Tensor u({2, gcfg.cond_width}, rng.gaussian_vector(2 * gcfg.cond_width));
    Tape tape;
    Tensor base = backbone_forward(tape, bb, x);
    auto toks = generate(tape, state, u);
    auto adapters = detokenize(tape, toks, layout);
    LayerDeltas deltas;
    for (std::size_t li = 0; li < layers; ++li)
      deltas.push_back(lora_delta(tape, adapters.A[li][0], adapters.B[li][0], 1.0));
    Tensor injected = backbone_forward(tape, bb, x, &deltas);
    if (injected.data != base.data)
      return {false, "injected forward diverged from base on input " + std::to_string(i)};
  }
  return {true, std::to_string(inputs) + " inputs, injected == base with 64-bit equality"};
}

GradCheckResult check_end_to_end_gradients(double fd_step, double tolerance,
                                           std::uint64_t seed) {
  // l=2, s=5, r=2, d=2: one 4x6 module per layer (gcd(4,6)=2, so 2 A-slices
  // and 3 B-slices per layer).
  auto layout = plan_layout({{"m", 4, 6}}, 2, 2);
  GeneratorConfig gcfg;
  gcfg.blocks = 1;
  gcfg.hidden = 8;
  gcfg.heads = 1;
  gcfg.cond_width = 6;
  auto state = init_generator(gcfg, layout, derive_seed(seed, 0x31));

  Rng rng(derive_seed(seed, 0x32));
  const Tensor w1({4, 6}, rng.gaussian_vector(24, 0.3));
  const Tensor bridge({6, 4}, rng.gaussian_vector(24, 0.3));
  const Tensor w2({4, 6}, rng.gaussian_vector(24, 0.3));
  const Tensor x({1, 4}, rng.gaussian_vector(4));
  const Tensor target({1, 6}, rng.gaussian_vector(6));
  const Tensor u({2, 6}, rng.gaussian_vector(12));

  auto forward = [&](Tape& tape, const GeneratorState& st,
                     const std::map<std::string, Tensor>* watched) {
    auto toks = generate(tape, st, u, watched);
    auto adapters = detokenize(tape, toks, layout);
    Tensor eff1 = tape.add(w1, lora_delta(tape, adapters.A[0][0], adapters.B[0][0], 1.0));
    Tensor eff2 = tape.add(w2, lora_delta(tape, adapters.A[1][0], adapters.B[1][0], 1.0));
    Tensor h = tape.tanh(tape.matmul(x, eff1));
    h = tape.matmul(h, bridge);
    h = tape.matmul(h, eff2);
    Tensor diff = tape.sub(h, target);
    return tape.sum(tape.mul(diff, diff));
  };

  Tape tape;
  std::map<std::string, Tensor> watched;
  for (const auto& [name, value] : state.params) watched[name] = tape.watch(value);
  tape.backward(forward(tape, state, &watched));

  GradCheckResult res;
  res.passed = true;
  for (const auto& [name, value] : state.params) {
    auto analytic = tape.grad(watched.at(name));
    double an_inf = 0.0, err_inf = 0.0;
    GeneratorState probe = state;
    for (std::size_t i = 0; i < value.size(); ++i) {
      auto& slot = probe.params.at(name).data[i];
      const double keep = slot;
      slot = keep + fd_step;
      Tape tp;
      const double up = forward(tp, probe, nullptr).data[0];
      slot = keep - fd_step;
      Tape tm;
      const double down = forward(tm, probe, nullptr).data[0];
      slot = keep;
      const double fd = (up - down) / (2.0 * fd_step);
      an_inf = std::max(an_inf, std::fabs(analytic[i]));
      err_inf = std::max(err_inf, std::fabs(fd - analytic[i]));
    }
    const double rel = err_inf / std::max(an_inf, 1e-8);
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = name;
    }
    res.params_checked += value.size();
    if (rel > tolerance) res.passed = false;
  }
  return res;
}

}  // namespace hywu
