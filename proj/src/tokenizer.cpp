#include "hywu/tokenizer.hpp"

#include <numeric>

namespace hywu {

std::size_t AdapterLayout::total_scalars() const {
  return layers * scalars_per_layer();
}

std::size_t AdapterLayout::scalars_per_layer() const {
  std::size_t per_layer = 0;
  for (std::size_t j = 0; j < modules.size(); ++j)
    per_layer += (n[j] + m[j]) * rank * segment;
  return per_layer;
}

AdapterLayout plan_layout(const std::vector<ModuleSpec>& specs, std::size_t layers,
                          std::size_t rank, std::optional<std::size_t> segment_override) {
  if (specs.empty()) throw LayoutError("plan_layout: empty module list");
  if (layers < 1 || rank < 1) throw LayoutError("plan_layout: layers and rank must be >= 1");
  for (const auto& ms : specs)
    if (ms.d_in < 1 || ms.d_out < 1)
      throw LayoutError("plan_layout: module dimensions must be >= 1");

  std::size_t d = 0;
  for (const auto& ms : specs) {
    d = std::gcd(d, ms.d_in);
    d = std::gcd(d, ms.d_out);
  }
  if (segment_override) {
    d = *segment_override;
    if (d < 1) throw LayoutError("plan_layout: segment override must be >= 1");
    for (const auto& ms : specs)
      if (ms.d_in % d != 0 || ms.d_out % d != 0)
        throw LayoutError("plan_layout: segment override " + std::to_string(d) +
                          " does not divide module '" + ms.name + "' (" +
                          std::to_string(ms.d_in) + "x" + std::to_string(ms.d_out) + ")");
  }

  AdapterLayout layout;
  layout.layers = layers;
  layout.modules = specs;
  layout.rank = rank;
  layout.segment = d;
  layout.degenerate = (d == 1);
  for (std::size_t j = 0; j < specs.size(); ++j) {
    layout.n.push_back(specs[j].d_in / d);
    layout.m.push_back(specs[j].d_out / d);
    for (std::size_t a = 0; a < layout.n[j]; ++a)
      layout.token_tags.push_back({TokenKind::A, j, a});
    for (std::size_t b = 0; b < layout.m[j]; ++b)
      layout.token_tags.push_back({TokenKind::B, j, b});
  }
  return layout;
}

Adapters zero_adapters(const AdapterLayout& layout) {
  Adapters out;
  out.A.resize(layout.layers);
  out.B.resize(layout.layers);
  for (std::size_t li = 0; li < layout.layers; ++li) {
    for (std::size_t j = 0; j < layout.modules.size(); ++j) {
      out.A[li].push_back(Tensor::zeros({layout.n[j] * layout.segment, layout.rank}));
      out.B[li].push_back(Tensor::zeros({layout.rank, layout.m[j] * layout.segment}));
    }
  }
  return out;
}

namespace {

void check_adapter_shapes(const Adapters& adapters, const AdapterLayout& layout,
                          const char* op) {
  if (adapters.A.size() != layout.layers || adapters.B.size() != layout.layers)
    throw TokenizeError(std::string(op) + ": layer count mismatch");
  for (std::size_t li = 0; li < layout.layers; ++li) {
    if (adapters.A[li].size() != layout.modules.size() ||
        adapters.B[li].size() != layout.modules.size())
      throw TokenizeError(std::string(op) + ": module count mismatch");
    for (std::size_t j = 0; j < layout.modules.size(); ++j) {
      const Shape want_a{layout.n[j] * layout.segment, layout.rank};
      const Shape want_b{layout.rank, layout.m[j] * layout.segment};
      if (adapters.A[li][j].shape != want_a)
        throw TokenizeError(std::string(op) + ": A shape mismatch at layer " +
                            std::to_string(li) + " module " + layout.modules[j].name);
      if (adapters.B[li][j].shape != want_b)
        throw TokenizeError(std::string(op) + ": B shape mismatch at layer " +
                            std::to_string(li) + " module " + layout.modules[j].name);
    }
  }
}

// Offset of module j's A (then B) block within one layer's flat adapter span.
struct ModuleOffsets {
  std::vector<std::size_t> a_base;
  std::vector<std::size_t> b_base;
  std::vector<std::size_t> tok_base;  // first token index of module j
};

ModuleOffsets module_offsets(const AdapterLayout& layout) {
  ModuleOffsets off;
  std::size_t flat = 0, tok = 0;
  for (std::size_t j = 0; j < layout.modules.size(); ++j) {
    off.a_base.push_back(flat);
    flat += layout.n[j] * layout.segment * layout.rank;
    off.b_base.push_back(flat);
    flat += layout.rank * layout.m[j] * layout.segment;
    off.tok_base.push_back(tok);
    tok += layout.n[j] + layout.m[j];
  }
  return off;
}

}  // namespace

Tensor flatten_adapters(Tape& tape, const Adapters& adapters, const AdapterLayout& layout) {
  check_adapter_shapes(adapters, layout, "flatten_adapters");
  std::vector<Tensor> parts;
  for (std::size_t li = 0; li < layout.layers; ++li) {
    for (std::size_t j = 0; j < layout.modules.size(); ++j) {
      parts.push_back(adapters.A[li][j]);
      parts.push_back(adapters.B[li][j]);
    }
  }
  return tape.concat(parts);
}

ParamTokens tokenize(Tape& tape, const Adapters& adapters, const AdapterLayout& layout) {
  check_adapter_shapes(adapters, layout, "tokenize");
  const std::size_t l = layout.layers, s = layout.tokens_per_layer();
  const std::size_t r = layout.rank, d = layout.segment;
  const std::size_t per_layer = layout.scalars_per_layer();
  const auto off = module_offsets(layout);

  Tensor flat = flatten_adapters(tape, adapters, layout);
  std::vector<std::size_t> idx(l * s * r * d);
  for (std::size_t li = 0; li < l; ++li) {
    for (std::size_t si = 0; si < s; ++si) {
      const TokenTag& tag = layout.token_tags[si];
      const std::size_t j = tag.module_index;
      for (std::size_t ri = 0; ri < r; ++ri) {
        for (std::size_t di = 0; di < d; ++di) {
          const std::size_t t = ((li * s + si) * r + ri) * d + di;
          std::size_t src;
          if (tag.kind == TokenKind::A) {
            // Row-block a of A, transposed into r x d: token[ri][di] = A[a d + di][ri].
            src = off.a_base[j] + (tag.slice_index * d + di) * r + ri;
          } else {
            // Column-block b of B, placed untransposed: token[ri][di] = B[ri][b d + di].
            src = off.b_base[j] + ri * (layout.m[j] * d) + tag.slice_index * d + di;
          }
          idx[t] = li * per_layer + src;
        }
      }
    }
  }
  return ParamTokens{tape.gather(flat, idx, {l, s, r, d})};
}

Adapters detokenize(Tape& tape, const ParamTokens& tokens, const AdapterLayout& layout) {
  const std::size_t l = layout.layers, s = layout.tokens_per_layer();
  const std::size_t r = layout.rank, d = layout.segment;
  if (tokens.tensor.shape != Shape{l, s, r, d})
    throw TokenizeError("detokenize: token tensor shape " + shape_str(tokens.tensor.shape) +
                        " does not match layout " + shape_str({l, s, r, d}));
  const auto off = module_offsets(layout);

  Adapters out;
  out.A.resize(l);
  out.B.resize(l);
  for (std::size_t li = 0; li < l; ++li) {
    for (std::size_t j = 0; j < layout.modules.size(); ++j) {
      const std::size_t nj = layout.n[j], mj = layout.m[j];
      std::vector<std::size_t> ia(nj * d * r);
      for (std::size_t row = 0; row < nj * d; ++row) {
        const std::size_t a = row / d, di = row % d;
        for (std::size_t ri = 0; ri < r; ++ri)
          ia[row * r + ri] = ((li * s + off.tok_base[j] + a) * r + ri) * d + di;
      }
      out.A[li].push_back(tape.gather(tokens.tensor, ia, {nj * d, r}));

      std::vector<std::size_t> ib(r * mj * d);
      for (std::size_t ri = 0; ri < r; ++ri) {
        for (std::size_t col = 0; col < mj * d; ++col) {
          const std::size_t b = col / d, di = col % d;
          ib[ri * mj * d + col] = ((li * s + off.tok_base[j] + nj + b) * r + ri) * d + di;
        }
      }
      out.B[li].push_back(tape.gather(tokens.tensor, ib, {r, mj * d}));
    }
  }
  return out;
}

}  // namespace hywu
