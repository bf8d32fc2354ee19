#include "hywu/backbone.hpp"

#include "hywu/rng.hpp"

namespace hywu {

std::size_t FrozenBackbone::layer_in(std::size_t t) const {
  if (t == 0 && config.mode == ConflictMode::soft)
    return config.width + config.instr_width;
  return config.width;
}

FrozenBackbone build_backbone(const BackboneConfig& config) {
  if (config.width < 2) throw ContractError("build_backbone: width must be >= 2");
  if (config.layers < 1) throw ContractError("build_backbone: layers must be >= 1");
  if (config.mode == ConflictMode::soft && config.instr_width == 0)
    throw ContractError("build_backbone: soft mode needs instr_width > 0");

  FrozenBackbone bb;
  bb.config = config;
  Rng rng(derive_seed(config.seed, 0xbb));
  for (std::size_t t = 0; t < config.layers; ++t) {
    const std::size_t din = (t == 0 && config.mode == ConflictMode::soft)
                                ? config.width + config.instr_width
                                : config.width;
    const std::size_t dout = config.width;
    Tensor w = Tensor::zeros({din, dout});
    for (std::size_t i = 0; i < din; ++i)
      for (std::size_t j = 0; j < dout; ++j) {
        double v = config.noise * rng.gaussian();
        if (i == j) v += 1.0;  // identity part only on the leading square block
        w.data[i * dout + j] = v;
      }
    bb.weights.push_back(std::move(w));
  }
  return bb;
}

Tensor lora_delta(Tape& tape, const Tensor& a, const Tensor& b, double gamma) {
  return tape.scale(tape.matmul(a, b), gamma);
}

Tensor backbone_forward(Tape& tape, const FrozenBackbone& backbone, const Tensor& x,
                        const LayerDeltas* deltas, const std::vector<Tensor>* weights_override,
                        const std::vector<double>* instr) {
  const auto& cfg = backbone.config;
  if (x.rank() != 2 || x.shape[1] != cfg.width)
    throw DimensionError("backbone_forward: input must be [batch x width]");
  if (deltas && deltas->size() != cfg.layers)
    throw DimensionError("backbone_forward: delta count must match layers");
  if (weights_override && weights_override->size() != cfg.layers)
    throw DimensionError("backbone_forward: weight override count must match layers");

  Tensor h = x;
  if (cfg.mode == ConflictMode::soft) {
    if (!instr || instr->size() != cfg.instr_width)
      throw DimensionError("backbone_forward: soft mode needs an instruction embedding");
    const std::size_t batch = x.shape[0];
    Tensor cat = Tensor::zeros({batch, cfg.width + cfg.instr_width});
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < cfg.width; ++j)
        cat.data[i * (cfg.width + cfg.instr_width) + j] = x.data[i * cfg.width + j];
      for (std::size_t j = 0; j < cfg.instr_width; ++j)
        cat.data[i * (cfg.width + cfg.instr_width) + cfg.width + j] = (*instr)[j];
    }
    h = std::move(cat);
  }

  for (std::size_t t = 0; t < cfg.layers; ++t) {
    const Tensor& w = weights_override ? (*weights_override)[t] : backbone.weights[t];
    if (w.shape != Shape{backbone.layer_in(t), cfg.width})
      throw DimensionError("backbone_forward: layer weight shape mismatch");
    Tensor weff = w;
    if (deltas && (*deltas)[t].size() > 0) {
      if ((*deltas)[t].shape != w.shape)
        throw DimensionError("backbone_forward: delta shape mismatch at layer " +
                             std::to_string(t));
      weff = tape.add(w, (*deltas)[t]);
    }
    Tensor z = tape.matmul(h, weff);
    if (cfg.linear) {
      h = std::move(z);
    } else {
      // Residual block; the first soft-mode layer is rectangular, so the
      // residual only applies once widths agree.
      Tensor a = tape.tanh(z);
      if (h.shape == a.shape) h = tape.add(h, a);
      else h = std::move(a);
    }
  }
  return h;
}

}  // namespace hywu
