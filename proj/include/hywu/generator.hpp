#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hywu/tensor.hpp"
#include "hywu/tokenizer.hpp"

// The parameter generator: learnable parameter embeddings refined by N blocks
// of factorized self-attention (within-layer, then across-layer) plus
// cross-attention over condition tokens, emitting parameter tokens through
// separate A/B output heads with the B head zero-initialized.
namespace hywu {

struct GeneratorConfig {
  std::size_t blocks = 2;       // N
  std::size_t hidden = 32;      // h
  std::size_t heads = 4;        // H
  std::size_t cond_width = 16;  // width of each condition token
  // Disjoint rotary feature bands of the per-head width, one per structural
  // axis. -1 = equal thirds rounded down to even. 0 disables an axis.
  int rope_layer = -1;
  int rope_token = -1;
  int rope_rank = -1;
};

struct GeneratorState {
  GeneratorConfig config;
  AdapterLayout layout;
  // Name -> value; iteration order is the deterministic parameter order.
  std::map<std::string, Tensor> params;
};

// Resolved per-head rope band widths (features, all even).
struct RopeBands {
  std::size_t layer = 0, token = 0, rank = 0;
};
RopeBands resolve_rope_bands(const GeneratorConfig& config);

GeneratorState init_generator(const GeneratorConfig& config, const AdapterLayout& layout,
                              std::uint64_t seed);

// conditions: [n_c x cond_width], n_c >= 1. When `watched` is given, any
// parameter present there (tape-bound) replaces the stored value, so
// gradients flow to it.
ParamTokens generate(Tape& tape, const GeneratorState& state, const Tensor& conditions,
                     const std::map<std::string, Tensor>* watched = nullptr);

}  // namespace hywu
