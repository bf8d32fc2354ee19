#include "hywu/tasks.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hywu {

namespace {

std::vector<double> instruction_embedding(std::size_t c_dim, std::uint64_t seed,
                                          std::size_t task_index) {
  Rng rng(derive_seed(seed, 0x1000 + task_index));
  return rng.gaussian_vector(c_dim);
}

Tensor identity_matrix(std::size_t w) {
  Tensor m = Tensor::zeros({w, w});
  for (std::size_t i = 0; i < w; ++i) m.data[i * w + i] = 1.0;
  return m;
}

// Unit-Frobenius random direction.
Tensor random_direction(std::size_t w, Rng& rng) {
  Tensor d = Tensor::zeros({w, w});
  d.data = rng.gaussian_vector(w * w);
  double norm = 0.0;
  for (auto v : d.data) norm += v * v;
  norm = std::sqrt(norm);
  for (auto& v : d.data) v /= norm;
  return d;
}

}  // namespace

std::pair<TaskSpec, TaskSpec> make_opposing_pair(PairKind kind, std::size_t w, double delta,
                                                 std::size_t c_dim, std::uint64_t seed) {
  // delta = 0 is the degenerate no-conflict case and is allowed.
  if (delta < 0.0 || delta >= 1.0)
    throw ParameterError("make_opposing_pair: delta must lie in [0, 1)");
  if (kind == PairKind::scale && w % 2 != 0)
    throw ParameterError("make_opposing_pair: scale pair needs even width");

  Tensor mp = identity_matrix(w), mm = identity_matrix(w);
  if (kind == PairKind::scale) {
    // Amplify vs suppress the upper half of the coordinates.
    for (std::size_t i = w / 2; i < w; ++i) {
      mp.data[i * w + i] += delta;
      mm.data[i * w + i] -= delta;
    }
  } else {
    const double phi = std::asin(delta);
    const double c = std::cos(phi), s = std::sin(phi);
    for (std::size_t p = 0; p + 1 < w; p += 2) {
      mp.data[p * w + p] = c;       mp.data[p * w + p + 1] = s;
      mp.data[(p + 1) * w + p] = -s; mp.data[(p + 1) * w + p + 1] = c;
      mm.data[p * w + p] = c;       mm.data[p * w + p + 1] = -s;
      mm.data[(p + 1) * w + p] = s;  mm.data[(p + 1) * w + p + 1] = c;
    }
  }
  TaskSpec plus{"plus", std::move(mp), instruction_embedding(c_dim, seed, 0)};
  TaskSpec minus{"minus", std::move(mm), instruction_embedding(c_dim, seed, 1)};
  return {std::move(plus), std::move(minus)};
}

std::vector<TaskSpec> make_separated_tasks(std::size_t count, std::size_t w, double delta,
                                           std::size_t rank, std::size_t c_dim,
                                           std::uint64_t seed) {
  if (count < 1) throw ParameterError("make_separated_tasks: count must be >= 1");
  if (rank < 1 || rank > w) throw ParameterError("make_separated_tasks: bad rank");
  std::vector<TaskSpec> tasks;
  for (std::size_t t = 0; t < count; ++t) {
    Rng rng(derive_seed(seed, 0x2000 + t));
    Tensor m = identity_matrix(w);
    for (std::size_t k = 0; k < rank; ++k) {
      auto u = rng.gaussian_vector(w);
      auto v = rng.gaussian_vector(w);
      double nu = 0.0, nv = 0.0;
      for (auto e : u) nu += e * e;
      for (auto e : v) nv += e * e;
      nu = std::sqrt(nu); nv = std::sqrt(nv);
      const double scale = delta / (std::sqrt(static_cast<double>(rank)) * nu * nv);
      for (std::size_t i = 0; i < w; ++i)
        for (std::size_t j = 0; j < w; ++j) m.data[i * w + j] += scale * u[i] * v[j];
    }
    tasks.push_back({"task" + std::to_string(t), std::move(m),
                     instruction_embedding(c_dim, seed, t)});
  }
  return tasks;
}

std::vector<TaskSpec> make_block_tasks(std::size_t per_block, std::size_t w, double delta,
                                       double jitter, std::size_t c_dim,
                                       std::uint64_t seed) {
  if (per_block < 1) throw ParameterError("make_block_tasks: per_block must be >= 1");
  Rng base_rng(derive_seed(seed, 0x3000));
  Tensor dir = random_direction(w, base_rng);
  std::vector<TaskSpec> tasks;
  for (std::size_t block = 0; block < 2; ++block) {
    const double sign = block == 0 ? 1.0 : -1.0;
    for (std::size_t t = 0; t < per_block; ++t) {
      const std::size_t index = block * per_block + t;
      Rng rng(derive_seed(seed, 0x4000 + index));
      Tensor jit = random_direction(w, rng);
      Tensor m = identity_matrix(w);
      for (std::size_t i = 0; i < w * w; ++i)
        m.data[i] += delta * (sign * dir.data[i] + jitter * jit.data[i]);
      tasks.push_back({"b" + std::to_string(block) + "t" + std::to_string(t), std::move(m),
                       instruction_embedding(c_dim, seed, index)});
    }
  }
  return tasks;
}

CompromiseOracle compromise_oracle(const TaskSpec& plus, const TaskSpec& minus,
                                   const BackboneConfig& backbone) {
  if (!backbone.linear)
    throw ContractError("compromise_oracle: bound only holds for the linear backbone");
  if (plus.op.shape != minus.op.shape)
    throw ParameterError("compromise_oracle: operator shapes differ");
  double half = 0.0, full = 0.0;
  for (std::size_t i = 0; i < plus.op.size(); ++i) {
    const double diff = plus.op.data[i] - minus.op.data[i];
    full += diff * diff;
    half += 0.25 * diff * diff;
  }
  return {half, full};
}

Instance sample_instance(const std::vector<TaskSpec>& tasks, std::size_t task, Rng& rng) {
  const auto& spec = tasks.at(task);
  const std::size_t w = spec.op.shape[0];
  Instance inst;
  inst.task = task;
  inst.x = rng.gaussian_vector(w);
  inst.y.assign(w, 0.0);
  for (std::size_t j = 0; j < w; ++j)
    for (std::size_t i = 0; i < w; ++i) inst.y[j] += inst.x[i] * spec.op.data[i * w + j];
  return inst;
}

Featurizer::Featurizer(std::size_t c_dim, std::size_t input_width, std::uint64_t seed)
    : c_dim_(c_dim), input_width_(input_width) {
  Rng rng(derive_seed(seed, 0xfea));
  sketch_ = rng.gaussian_vector(c_dim * input_width, 1.0 / std::sqrt(double(input_width)));
}

Tensor Featurizer::featurize(const Instance& instance,
                             const std::vector<TaskSpec>& tasks) const {
  const auto& spec = tasks.at(instance.task);
  if (spec.instruction.size() != c_dim_)
    throw ParameterError("featurize: instruction width mismatch");
  if (instance.x.size() != input_width_)
    throw ParameterError("featurize: input width mismatch");
  Tensor u = Tensor::zeros({2, c_dim_});
  for (std::size_t i = 0; i < c_dim_; ++i) u.data[i] = spec.instruction[i];
  for (std::size_t i = 0; i < c_dim_; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < input_width_; ++j)
      acc += sketch_[i * input_width_ + j] * instance.x[j];
    u.data[c_dim_ + i] = acc;
  }
  return u;
}

void write_dataset_csv(const std::string& path, const std::vector<Instance>& data,
                       const std::vector<TaskSpec>& tasks) {
  std::ofstream out(path);
  if (!out) throw ParameterError("write_dataset_csv: cannot open " + path);
  if (data.empty()) throw ParameterError("write_dataset_csv: empty dataset");
  const std::size_t w = data.front().x.size();
  out << "task_id";
  for (std::size_t i = 0; i < w; ++i) out << ",x" << i;
  for (std::size_t i = 0; i < w; ++i) out << ",y" << i;
  out << "\n";
  char buf[32];
  for (const auto& inst : data) {
    out << tasks.at(inst.task).id;
    for (auto v : inst.x) { std::snprintf(buf, sizeof buf, "%.17g", v); out << ',' << buf; }
    for (auto v : inst.y) { std::snprintf(buf, sizeof buf, "%.17g", v); out << ',' << buf; }
    out << "\n";
  }
}

std::vector<Instance> read_dataset_csv(const std::string& path,
                                       const std::vector<TaskSpec>& tasks) {
  std::ifstream in(path);
  if (!in) throw ParameterError("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParameterError("read_dataset_csv: empty file");
  std::size_t cols = 1;
  for (char c : line) if (c == ',') ++cols;
  const std::size_t w = (cols - 1) / 2;
  std::vector<Instance> data;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    Instance inst;
    inst.task = tasks.size();
    for (std::size_t t = 0; t < tasks.size(); ++t)
      if (tasks[t].id == cell) { inst.task = t; break; }
    if (inst.task == tasks.size())
      throw ParameterError("read_dataset_csv: unknown task id " + cell);
    for (std::size_t i = 0; i < w; ++i) {
      std::getline(ss, cell, ',');
      inst.x.push_back(std::stod(cell));
    }
    for (std::size_t i = 0; i < w; ++i) {
      std::getline(ss, cell, ',');
      inst.y.push_back(std::stod(cell));
    }
    data.push_back(std::move(inst));
  }
  return data;
}

}  // namespace hywu
