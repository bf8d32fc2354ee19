#pragma once

#include <cstdint>
#include <vector>

#include "hywu/tensor.hpp"

// Frozen near-identity backbone with LoRA injection points. In strict-conflict
// mode the instruction never reaches the backbone input; in soft-conflict mode
// a fixed instruction embedding is concatenated to x before the first layer.
namespace hywu {

enum class ConflictMode { strict, soft };

struct BackboneConfig {
  std::size_t width = 8;
  std::size_t layers = 2;
  bool linear = false;           // identity nonlinearity, no residual
  ConflictMode mode = ConflictMode::strict;
  std::size_t instr_width = 0;   // soft mode only
  double noise = 0.01;           // eps in W = I + eps * G
  double lora_scale = 1.0;       // gamma
  std::uint64_t seed = 0;
};

struct FrozenBackbone {
  BackboneConfig config;
  std::vector<Tensor> weights;   // frozen, never watched

  std::size_t width() const { return config.width; }
  // Input rows/cols of layer t's adapted map.
  std::size_t layer_in(std::size_t t) const;
  std::size_t layer_out(std::size_t) const { return config.width; }
};

FrozenBackbone build_backbone(const BackboneConfig& config);

// Additive weight update for one layer; an empty tensor means no injection
// at that layer.
using LayerDeltas = std::vector<Tensor>;

// gamma * A * B on the tape.
Tensor lora_delta(Tape& tape, const Tensor& a, const Tensor& b, double gamma);

// x: [batch x width]. deltas (optional) holds per-layer additive updates;
// weights_override (optional, for the SFT arm) replaces the frozen weights.
// instr must be given in soft mode (length instr_width) and is ignored in
// strict mode.
Tensor backbone_forward(Tape& tape, const FrozenBackbone& backbone, const Tensor& x,
                        const LayerDeltas* deltas = nullptr,
                        const std::vector<Tensor>* weights_override = nullptr,
                        const std::vector<double>* instr = nullptr);

}  // namespace hywu
