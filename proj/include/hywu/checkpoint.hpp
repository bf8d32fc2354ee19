#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "hywu/generator.hpp"
#include "hywu/training.hpp"

// Binary checkpoint container and typed save/load helpers for the trained
// artifacts. Layout: "HYWU" magic, u32 LE format version, u32 LE section
// count, then sections back to back. Each section is a u32-length-prefixed
// name, a one-byte kind tag, and either a tensor (u64 LE rank, extents, f64
// LE payload) or a UTF-8 text blob (u64 LE byte length). All integers are
// little-endian; read errors report the absolute file offset.
namespace hywu {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> texts;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Generator checkpoints carry the config and the layout inputs in a JSON
// metadata section; loading replans the layout and validates every parameter
// name and shape against a fresh initialization.
void save_generator(const std::string& path, const GeneratorState& state);
GeneratorState load_generator(const std::string& path);

void save_static_lora(const std::string& path, const StaticLoRA& lora);
StaticLoRA load_static_lora(const std::string& path);

}  // namespace hywu
