#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hywu/backbone.hpp"
#include "hywu/rng.hpp"
#include "hywu/tensor.hpp"

// Synthetic opposing-objective tasks with analytically known optima, plus the
// deterministic toy condition featurizer feeding the generator.
namespace hywu {

struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TaskSpec {
  std::string id;
  Tensor op;                        // M_t: w x w
  std::vector<double> instruction;  // e_t: c_dim, fixed and distinct per task
};

struct Instance {
  std::vector<double> x;  // w, Gaussian(0, I)
  std::size_t task;       // index into the task list
  std::vector<double> y;  // x * M_t
};

enum class PairKind { scale, rotation };

// scale: M = I +/- delta * P with P projecting onto the upper half of the
// coordinates; rotation: plane rotations by +/- asin(delta).
std::pair<TaskSpec, TaskSpec> make_opposing_pair(PairKind kind, std::size_t w, double delta,
                                                 std::size_t c_dim, std::uint64_t seed);

// K tasks M_t = I + delta * R_t with R_t a random rank-limited direction,
// pairwise well separated. Used for the manifold experiments.
std::vector<TaskSpec> make_separated_tasks(std::size_t count, std::size_t w, double delta,
                                           std::size_t rank, std::size_t c_dim,
                                           std::uint64_t seed);

// Two-block suite for the conflict-matrix experiment: tasks within a block
// share a base direction (plus small per-task jitter); the blocks oppose.
std::vector<TaskSpec> make_block_tasks(std::size_t per_block, std::size_t w, double delta,
                                       double jitter, std::size_t c_dim, std::uint64_t seed);

struct CompromiseOracle {
  double l_star;             // ||(M+ - M-)/2||_F^2
  double specialized_cross;  // ||M+ - M-||_F^2 = 4 * l_star
};

// Lower bound on per-task balanced loss of any single static operator under
// unit-Gaussian inputs. Only valid for the linear strict-conflict setting.
CompromiseOracle compromise_oracle(const TaskSpec& plus, const TaskSpec& minus,
                                   const BackboneConfig& backbone);

Instance sample_instance(const std::vector<TaskSpec>& tasks, std::size_t task, Rng& rng);

// Fixed random sketch of x plus the instruction embedding: two condition
// tokens of width c_dim.
class Featurizer {
 public:
  Featurizer(std::size_t c_dim, std::size_t input_width, std::uint64_t seed);
  // U: [2 x c_dim]; row 0 = instruction, row 1 = sketch of x.
  Tensor featurize(const Instance& instance, const std::vector<TaskSpec>& tasks) const;
  std::size_t c_dim() const { return c_dim_; }

 private:
  std::size_t c_dim_;
  std::size_t input_width_;
  std::vector<double> sketch_;  // c_dim x input_width
};

// CSV export/import; columns: task_id, x0.., y0..
void write_dataset_csv(const std::string& path, const std::vector<Instance>& data,
                       const std::vector<TaskSpec>& tasks);
std::vector<Instance> read_dataset_csv(const std::string& path,
                                       const std::vector<TaskSpec>& tasks);

}  // namespace hywu
