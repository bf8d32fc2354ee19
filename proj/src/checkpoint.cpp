#include "hywu/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hywu {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'H', 'Y', 'W', 'U'};
constexpr std::uint8_t kKindTensor = 0;
constexpr std::uint8_t kKindText = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw CheckpointError("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  template <class T>
  void scalar(T v) {
    bytes(&v, sizeof v);
  }
  void string(const std::string& s) {
    scalar<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw CheckpointError("write to '" + path + "' failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw CheckpointError("cannot open '" + path + "' for reading");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError("'" + path_ + "' truncated at offset " +
                            std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
    offset_ += n;
  }
  template <class T>
  T scalar() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string string() {
    const auto n = scalar<std::uint32_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t offset() const { return offset_; }
  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

json config_to_json(const GeneratorConfig& c) {
  return json{{"blocks", c.blocks},        {"hidden", c.hidden},
              {"heads", c.heads},          {"cond_width", c.cond_width},
              {"rope_layer", c.rope_layer}, {"rope_token", c.rope_token},
              {"rope_rank", c.rope_rank}};
}

GeneratorConfig config_from_json(const json& j) {
  GeneratorConfig c;
  c.blocks = j.at("blocks").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.cond_width = j.at("cond_width").get<std::size_t>();
  c.rope_layer = j.at("rope_layer").get<int>();
  c.rope_token = j.at("rope_token").get<int>();
  c.rope_rank = j.at("rope_rank").get<int>();
  return c;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.scalar<std::uint32_t>(kCheckpointVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size() + ckpt.texts.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.string(name);
    w.scalar<std::uint8_t>(kKindTensor);
    w.scalar<std::uint64_t>(t.shape.size());
    for (std::size_t e : t.shape) w.scalar<std::uint64_t>(e);
    w.bytes(t.data.data(), t.data.size() * sizeof(double));
  }
  for (const auto& [name, s] : ckpt.texts) {
    w.string(name);
    w.scalar<std::uint8_t>(kKindText);
    w.scalar<std::uint64_t>(s.size());
    w.bytes(s.data(), s.size());
  }
  w.finish(path);
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CheckpointError("'" + path + "' has a bad magic header (offset 0)");
  const auto version = r.scalar<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("'" + path + "' has unsupported format version " +
                          std::to_string(version));
  const auto sections = r.scalar<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::string name = r.string();
    const auto kind = r.scalar<std::uint8_t>();
    if (kind == kKindTensor) {
      const auto rank = r.scalar<std::uint64_t>();
      if (rank > 8)
        throw CheckpointError("'" + path + "' section '" + name + "': implausible rank " +
                              std::to_string(rank) + " at offset " + std::to_string(r.offset()));
      Shape shape(rank);
      std::size_t numel = 1;
      for (auto& e : shape) {
        e = static_cast<std::size_t>(r.scalar<std::uint64_t>());
        numel *= e;
      }
      std::vector<double> data(numel);
      r.bytes(data.data(), numel * sizeof(double));
      ckpt.tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
    } else if (kind == kKindText) {
      const auto n = r.scalar<std::uint64_t>();
      std::string text(n, '\0');
      r.bytes(text.data(), n);
      ckpt.texts.emplace(name, std::move(text));
    } else {
      throw CheckpointError("'" + path + "' section '" + name + "': unknown kind " +
                            std::to_string(kind) + " at offset " + std::to_string(r.offset()));
    }
  }
  if (!r.at_eof())
    throw CheckpointError("'" + path + "' has trailing bytes after offset " +
                          std::to_string(r.offset()));
  return ckpt;
}

void save_generator(const std::string& path, const GeneratorState& state) {
  Checkpoint ckpt;
  json meta;
  meta["kind"] = "generator";
  meta["config"] = config_to_json(state.config);
  meta["layout"]["layers"] = state.layout.layers;
  meta["layout"]["rank"] = state.layout.rank;
  meta["layout"]["segment"] = state.layout.segment;
  meta["layout"]["modules"] = json::array();
  for (const auto& m : state.layout.modules)
    meta["layout"]["modules"].push_back({{"name", m.name}, {"d_in", m.d_in}, {"d_out", m.d_out}});
  ckpt.texts["meta"] = meta.dump();
  for (const auto& [name, t] : state.params) ckpt.tensors["param/" + name] = t;
  write_checkpoint(path, ckpt);
}

GeneratorState load_generator(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.texts.at("meta"));
    if (meta.at("kind") != "generator")
      throw CheckpointError("'" + path + "' is not a generator checkpoint (kind '" +
                            meta.at("kind").get<std::string>() + "')");
  } catch (const json::exception& e) {
    throw CheckpointError("'" + path + "' has malformed metadata: " + e.what());
  }
  GeneratorConfig config = config_from_json(meta.at("config"));
  std::vector<ModuleSpec> specs;
  for (const auto& m : meta.at("layout").at("modules"))
    specs.push_back({m.at("name").get<std::string>(), m.at("d_in").get<std::size_t>(),
                     m.at("d_out").get<std::size_t>()});
  auto layout = plan_layout(specs, meta.at("layout").at("layers").get<std::size_t>(),
                            meta.at("layout").at("rank").get<std::size_t>(),
                            meta.at("layout").at("segment").get<std::size_t>());
  GeneratorState state = init_generator(config, layout, 0);
  for (auto& [name, value] : state.params) {
    auto it = ckpt.tensors.find("param/" + name);
    if (it == ckpt.tensors.end())
      throw CheckpointError("'" + path + "' is missing parameter '" + name + "'");
    if (it->second.shape != value.shape)
      throw CheckpointError("'" + path + "' parameter '" + name + "' has shape " +
                            shape_str(it->second.shape) + ", expected " +
                            shape_str(value.shape));
    value = it->second;
  }
  const std::size_t extra = ckpt.tensors.size() - state.params.size();
  if (extra != 0)
    throw CheckpointError("'" + path + "' carries " + std::to_string(extra) +
                          " unknown parameter section(s)");
  return state;
}

void save_static_lora(const std::string& path, const StaticLoRA& lora) {
  if (lora.A.size() != lora.B.size())
    throw CheckpointError("static adapter has mismatched A/B layer counts");
  Checkpoint ckpt;
  json meta;
  meta["kind"] = "static_lora";
  meta["layers"] = lora.A.size();
  ckpt.texts["meta"] = meta.dump();
  for (std::size_t i = 0; i < lora.A.size(); ++i) {
    ckpt.tensors["A/" + std::to_string(i)] = lora.A[i];
    ckpt.tensors["B/" + std::to_string(i)] = lora.B[i];
  }
  write_checkpoint(path, ckpt);
}

StaticLoRA load_static_lora(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.texts.at("meta"));
    if (meta.at("kind") != "static_lora")
      throw CheckpointError("'" + path + "' is not a static adapter checkpoint");
  } catch (const json::exception& e) {
    throw CheckpointError("'" + path + "' has malformed metadata: " + e.what());
  }
  const auto layers = meta.at("layers").get<std::size_t>();
  StaticLoRA lora;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string a_name = "A/" + std::to_string(i), b_name = "B/" + std::to_string(i);
    if (!ckpt.tensors.count(a_name) || !ckpt.tensors.count(b_name))
      throw CheckpointError("'" + path + "' is missing adapter layer " + std::to_string(i));
    lora.A.push_back(ckpt.tensors.at(a_name));
    lora.B.push_back(ckpt.tensors.at(b_name));
  }
  return lora;
}

}  // namespace hywu
