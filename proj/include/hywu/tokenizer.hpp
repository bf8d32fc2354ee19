#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hywu/tensor.hpp"

// Rank-anchored 2D parameter tokenization: heterogeneous per-module LoRA
// matrices {A, B} are sliced along a common segment width d into uniform
// r x d tokens, and reassembled exactly by the inverse pass.
namespace hywu {

struct LayoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TokenizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModuleSpec {
  std::string name;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
};

enum class TokenKind { A, B };

struct TokenTag {
  TokenKind kind;
  std::size_t module_index;
  std::size_t slice_index;
};

struct AdapterLayout {
  std::size_t layers = 0;               // l
  std::vector<ModuleSpec> modules;      // identical across layers
  std::size_t rank = 0;                 // r
  std::size_t segment = 0;              // d
  std::vector<std::size_t> n;           // per module: d_in / d
  std::vector<std::size_t> m;           // per module: d_out / d
  std::vector<TokenTag> token_tags;     // length s
  bool degenerate = false;              // d == 1

  std::size_t tokens_per_layer() const { return token_tags.size(); }  // s
  std::size_t total_scalars() const;
  // Flat length of one layer's adapters laid out module by module, A then B.
  std::size_t scalars_per_layer() const;
};

// d defaults to the gcd over all module dimensions; an override must divide
// every d_in and d_out.
AdapterLayout plan_layout(const std::vector<ModuleSpec>& specs, std::size_t layers,
                          std::size_t rank,
                          std::optional<std::size_t> segment_override = {});

// Per-layer, per-module adapter matrices: A[(n_j d) x r], B[r x (m_j d)].
struct Adapters {
  std::vector<std::vector<Tensor>> A;  // [layer][module]
  std::vector<std::vector<Tensor>> B;  // [layer][module]
};

struct ParamTokens {
  Tensor tensor;  // l x s x r x d
};

Adapters zero_adapters(const AdapterLayout& layout);

// Both directions run on the tape, so gradients flow through either way.
ParamTokens tokenize(Tape& tape, const Adapters& adapters, const AdapterLayout& layout);
Adapters detokenize(Tape& tape, const ParamTokens& tokens, const AdapterLayout& layout);

// Flattens adapters in layout order (layer, module, A then B, row-major).
Tensor flatten_adapters(Tape& tape, const Adapters& adapters, const AdapterLayout& layout);

}  // namespace hywu
