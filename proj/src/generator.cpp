#include "hywu/generator.hpp"

#include <cmath>

#include "hywu/rng.hpp"

namespace hywu {

RopeBands resolve_rope_bands(const GeneratorConfig& config) {
  if (config.heads == 0 || config.hidden % config.heads != 0)
    throw ContractError("generator: hidden must be divisible by heads");
  const std::size_t dh = config.hidden / config.heads;
  auto resolve = [&](int v) -> std::size_t {
    if (v < 0) {
      std::size_t third = dh / 3;
      return third - third % 2;
    }
    return static_cast<std::size_t>(v);
  };
  RopeBands bands{resolve(config.rope_layer), resolve(config.rope_token),
                  resolve(config.rope_rank)};
  if (bands.layer % 2 || bands.token % 2 || bands.rank % 2)
    throw ContractError("generator: rope band widths must be even");
  if (bands.layer + bands.token + bands.rank > dh)
    throw ContractError("generator: rope bands exceed the per-head width");
  return bands;
}

namespace {

// Angle tables for one factorized self-attention pass. The Q/K tensors are
// laid out [B*H, T, dh]; each feature pair gets the rotary angle of its axis
// band evaluated at that token's structural index.
void rope_tables(const AdapterLayout& layout, const GeneratorConfig& config,
                 bool intra, std::vector<double>& cosv, std::vector<double>& sinv) {
  const RopeBands bands = resolve_rope_bands(config);
  const std::size_t s = layout.tokens_per_layer(), r = layout.rank, l = layout.layers;
  const std::size_t H = config.heads, dh = config.hidden / H;
  const std::size_t bo = intra ? l : s * r;
  const std::size_t T = intra ? s * r : l;
  cosv.assign(bo * H * T * dh / 2, 1.0);
  sinv.assign(bo * H * T * dh / 2, 0.0);
  for (std::size_t b = 0; b < bo; ++b) {
    for (std::size_t hi = 0; hi < H; ++hi) {
      for (std::size_t t = 0; t < T; ++t) {
        std::size_t li, si, ri;
        if (intra) { li = b; si = t / r; ri = t % r; }
        else { li = t; si = b / r; ri = b % r; }
        for (std::size_t j = 0; j < dh / 2; ++j) {
          const std::size_t f = 2 * j;
          double pos;
          std::size_t band, off;
          if (f < bands.layer) { pos = double(li); band = bands.layer; off = f; }
          else if (f < bands.layer + bands.token) {
            pos = double(si); band = bands.token; off = f - bands.layer;
          } else if (f < bands.layer + bands.token + bands.rank) {
            pos = double(ri); band = bands.rank; off = f - bands.layer - bands.token;
          } else {
            continue;  // unrotated remainder
          }
          const double theta = pos * std::pow(10000.0, -double(off) / double(band));
          const std::size_t p = ((b * H + hi) * T + t) * (dh / 2) + j;
          cosv[p] = std::cos(theta);
          sinv[p] = std::sin(theta);
        }
      }
    }
  }
}

struct AttnParams {
  const Tensor& wq;
  const Tensor& wk;
  const Tensor& wv;
  const Tensor& wo;
};

// xq: [B, T, h]; xkv: [B, S, c]. Full non-causal attention.
Tensor mha(Tape& tape, const Tensor& xq, const Tensor& xkv, const AttnParams& p,
           std::size_t heads, const std::vector<double>* rope_cos,
           const std::vector<double>* rope_sin) {
  const std::size_t B = xq.shape[0], T = xq.shape[1], h = xq.shape[2];
  const std::size_t S = xkv.shape[1];
  const std::size_t dh = h / heads;

  auto split = [&](const Tensor& x, std::size_t len) {
    auto y = tape.reshape(x, {B, len, heads, dh});
    y = tape.permute(y, {0, 2, 1, 3});
    return tape.reshape(y, {B * heads, len, dh});
  };

  Tensor q = split(tape.matmul(xq, p.wq), T);
  Tensor k = split(tape.matmul(xkv, p.wk), S);
  Tensor v = split(tape.matmul(xkv, p.wv), S);
  if (rope_cos) {
    q = tape.rope(q, *rope_cos, *rope_sin);
    k = tape.rope(k, *rope_cos, *rope_sin);
  }

  Tensor scores = tape.scale(tape.matmul(q, tape.permute(k, {0, 2, 1})),
                             1.0 / std::sqrt(double(dh)));
  Tensor attn = tape.softmax_rows(scores);
  Tensor out = tape.matmul(attn, v);  // [B*H, T, dh]
  out = tape.reshape(out, {B, heads, T, dh});
  out = tape.permute(out, {0, 2, 1, 3});
  out = tape.reshape(out, {B, T, h});
  return tape.matmul(out, p.wo);
}

}  // namespace

GeneratorState init_generator(const GeneratorConfig& config, const AdapterLayout& layout,
                              std::uint64_t seed) {
  resolve_rope_bands(config);  // validates hidden/heads/bands
  if (config.cond_width < 1) throw ContractError("generator: cond_width must be >= 1");

  const std::size_t h = config.hidden, c = config.cond_width, d = layout.segment;
  const std::size_t P = layout.layers * layout.tokens_per_layer() * layout.rank;

  GeneratorState state;
  state.config = config;
  state.layout = layout;
  Rng rng(derive_seed(seed, 0x9e));
  constexpr double sigma = 0.02;

  auto gauss = [&](const std::string& name, Shape shape) {
    state.params[name] = Tensor(shape, rng.gaussian_vector(shape_numel(shape), sigma));
  };
  auto ones = [&](const std::string& name, Shape shape) {
    state.params[name] = Tensor::full(shape, 1.0);
  };

  gauss("embed", {P, h});
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string pre = "blk" + std::to_string(b) + ".";
    for (const char* axis : {"intra", "inter"}) {
      for (const char* w : {"wq", "wk", "wv", "wo"})
        gauss(pre + axis + "." + w, {h, h});
      ones(pre + axis + ".gain", {h});
    }
    gauss(pre + "cross.wq", {h, h});
    gauss(pre + "cross.wk", {c, h});
    gauss(pre + "cross.wv", {c, h});
    gauss(pre + "cross.wo", {h, h});
    ones(pre + "cross.gain", {h});
    gauss(pre + "ffn.w1", {h, 4 * h});
    gauss(pre + "ffn.b1", {4 * h});
    gauss(pre + "ffn.w2", {4 * h, h});
    gauss(pre + "ffn.b2", {h});
    ones(pre + "ffn.gain", {h});
  }
  ones("final.gain", {h});
  gauss("head_a.w", {h, d});
  gauss("head_a.b", {d});
  state.params["head_b.w"] = Tensor::zeros({h, d});
  state.params["head_b.b"] = Tensor::zeros({d});
  return state;
}

ParamTokens generate(Tape& tape, const GeneratorState& state, const Tensor& conditions,
                     const std::map<std::string, Tensor>* watched) {
  const auto& cfg = state.config;
  const auto& layout = state.layout;
  if (conditions.rank() != 2 || conditions.shape[1] != cfg.cond_width ||
      conditions.shape[0] < 1)
    throw DimensionError("generate: conditions must be [n_c x cond_width], n_c >= 1");

  auto param = [&](const std::string& name) -> const Tensor& {
    if (watched) {
      auto it = watched->find(name);
      if (it != watched->end()) return it->second;
    }
    auto it = state.params.find(name);
    if (it == state.params.end()) throw ContractError("generate: missing parameter " + name);
    return it->second;
  };

  const std::size_t l = layout.layers, s = layout.tokens_per_layer(), r = layout.rank;
  const std::size_t d = layout.segment, h = cfg.hidden;
  const std::size_t P = l * s * r;
  const std::size_t nc = conditions.shape[0];

  std::vector<double> cos_intra, sin_intra, cos_inter, sin_inter;
  rope_tables(layout, cfg, true, cos_intra, sin_intra);
  rope_tables(layout, cfg, false, cos_inter, sin_inter);

  Tensor u3 = tape.reshape(conditions, {1, nc, cfg.cond_width});
  Tensor x = param("embed");

  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::string pre = "blk" + std::to_string(b) + ".";

    // Within-layer attention along the (s*r) axis.
    {
      Tensor xn = tape.rms_norm(x, param(pre + "intra.gain"));
      Tensor x3 = tape.reshape(xn, {l, s * r, h});
      AttnParams p{param(pre + "intra.wq"), param(pre + "intra.wk"),
                   param(pre + "intra.wv"), param(pre + "intra.wo")};
      Tensor y = mha(tape, x3, x3, p, cfg.heads, &cos_intra, &sin_intra);
      x = tape.add(x, tape.reshape(y, {P, h}));
    }

    // Across-layer attention along the l axis.
    {
      Tensor xn = tape.rms_norm(x, param(pre + "inter.gain"));
      Tensor x3 = tape.permute(tape.reshape(xn, {l, s * r, h}), {1, 0, 2});
      AttnParams p{param(pre + "inter.wq"), param(pre + "inter.wk"),
                   param(pre + "inter.wv"), param(pre + "inter.wo")};
      Tensor y = mha(tape, x3, x3, p, cfg.heads, &cos_inter, &sin_inter);
      y = tape.permute(y, {1, 0, 2});
      x = tape.add(x, tape.reshape(y, {P, h}));
    }

    // Condition injection; conditions carry no positional encoding, so the
    // pass is permutation-invariant over condition tokens.
    {
      Tensor xn = tape.rms_norm(x, param(pre + "cross.gain"));
      Tensor q3 = tape.reshape(xn, {1, P, h});
      AttnParams p{param(pre + "cross.wq"), param(pre + "cross.wk"),
                   param(pre + "cross.wv"), param(pre + "cross.wo")};
      Tensor y = mha(tape, q3, u3, p, cfg.heads, nullptr, nullptr);
      x = tape.add(x, tape.reshape(y, {P, h}));
    }

    // Position-wise feed-forward.
    {
      Tensor xn = tape.rms_norm(x, param(pre + "ffn.gain"));
      Tensor y = tape.add_rows(tape.matmul(xn, param(pre + "ffn.w1")), param(pre + "ffn.b1"));
      y = tape.gelu(y);
      y = tape.add_rows(tape.matmul(y, param(pre + "ffn.w2")), param(pre + "ffn.b2"));
      x = tape.add(x, y);
    }
  }

  Tensor xf = tape.rms_norm(x, param("final.gain"));
  Tensor ta = tape.add_rows(tape.matmul(xf, param("head_a.w")), param("head_a.b"));
  Tensor tb = tape.add_rows(tape.matmul(xf, param("head_b.w")), param("head_b.b"));

  Tensor mask_a = Tensor::zeros({P, d});
  Tensor mask_b = Tensor::zeros({P, d});
  for (std::size_t li = 0; li < l; ++li)
    for (std::size_t si = 0; si < s; ++si)
      for (std::size_t ri = 0; ri < r; ++ri) {
        const std::size_t row = (li * s + si) * r + ri;
        auto& m = layout.token_tags[si].kind == TokenKind::A ? mask_a : mask_b;
        for (std::size_t di = 0; di < d; ++di) m.data[row * d + di] = 1.0;
      }

  Tensor toks = tape.add(tape.mul(ta, mask_a), tape.mul(tb, mask_b));
  return ParamTokens{tape.reshape(toks, {l, s, r, d})};
}

}  // namespace hywu
