#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hywu/backbone.hpp"
#include "hywu/generator.hpp"
#include "hywu/tasks.hpp"
#include "hywu/tokenizer.hpp"

// On-the-fly training loop and the comparison arms: single LoRA, shared LoRA,
// SFT, conditional parameter generation (PG), Average PG, Shuffle PG.
namespace hywu {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Method { single, shared, sft, pg, avg_pg, shuffle_pg };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct OptimizerConfig {
  bool adam = true;  // false: plain gradient descent
  double lr = 0.001;  // constant; no schedule
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment update with bias correction; throws on non-finite
// gradients. State is keyed so one optimizer serves a whole parameter set.
class Optimizer {
 public:
  explicit Optimizer(const OptimizerConfig& config) : config_(config) {}
  void step(const std::string& key, std::vector<double>& param,
            const std::vector<double>& grad);

 private:
  struct Moments {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  OptimizerConfig config_;
  std::map<std::string, Moments> state_;
};

struct TrainConfig {
  Method method = Method::pg;
  std::size_t steps = 2000;
  std::size_t batch = 8;
  OptimizerConfig opt;
  std::uint64_t seed = 0;
  // Separate stream for the parameter init so several runs can share one
  // initialization while sampling differently; defaults to `seed`.
  std::optional<std::uint64_t> init_seed;
  std::size_t lora_rank = 4;
  double lora_gamma = 1.0;
  BackboneConfig backbone;
  GeneratorConfig generator;
};

struct RunResult {
  // curves[task][step]: mean batch loss of that task's instances; when a task
  // is absent from a step's batch the previous value is carried forward.
  std::vector<std::vector<double>> loss_curves;
  std::vector<double> final_losses;  // per task, from the held-out eval set
  std::size_t steps = 0;
};

// One LoRA pair per backbone layer (single adapted module per layer).
struct StaticLoRA {
  std::vector<Tensor> A;  // w x r
  std::vector<Tensor> B;  // r x w
};

struct TrainOutput {
  RunResult result;
  FrozenBackbone backbone;
  StaticLoRA lora;                  // method == single | shared
  std::vector<Tensor> sft_weights;  // method == sft
  GeneratorState generator;         // method == pg
};

// Trains per config.method. `single` and `shared` run the same loop; the
// difference is the task list the caller passes in.
TrainOutput train(const TrainConfig& config, const std::vector<TaskSpec>& tasks,
                  const Featurizer& featurizer);

// Mean generated tokens over >= 1 samples, detokenized once and frozen.
StaticLoRA derive_avg_pg(const GeneratorState& generator, const FrozenBackbone& backbone,
                         const Featurizer& featurizer, const std::vector<TaskSpec>& tasks,
                         const std::vector<Instance>& sample_set);

std::vector<Instance> make_eval_set(const std::vector<TaskSpec>& tasks,
                                    std::size_t per_task, std::uint64_t seed);

// Per-task mean squared error (summed over output dims) of one fixed adapter
// applied to everything.
std::vector<double> eval_lora(const FrozenBackbone& backbone, const StaticLoRA* lora,
                              double gamma, const std::vector<TaskSpec>& tasks,
                              const std::vector<Instance>& data);

std::vector<double> eval_sft(const FrozenBackbone& backbone,
                             const std::vector<Tensor>& weights,
                             const std::vector<TaskSpec>& tasks,
                             const std::vector<Instance>& data);

// shuffle applies a seeded derangement to the condition<->instance pairing.
std::vector<double> eval_pg(const FrozenBackbone& backbone, const GeneratorState& generator,
                            const Featurizer& featurizer, double gamma,
                            const std::vector<TaskSpec>& tasks,
                            const std::vector<Instance>& data, bool shuffle,
                            std::uint64_t shuffle_seed);

// Guard for the spec contract: shuffle only applies to PG.
std::vector<double> eval_method(Method method, const FrozenBackbone& backbone,
                                const StaticLoRA* lora, const std::vector<Tensor>* weights,
                                const GeneratorState* generator, const Featurizer* featurizer,
                                double gamma, const std::vector<TaskSpec>& tasks,
                                const std::vector<Instance>& data, bool shuffle,
                                std::uint64_t shuffle_seed);

// The full six-arm comparison on the strict-conflict opposing pair.
struct ConflictSuiteConfig {
  std::size_t width = 8;
  double delta = 0.5;
  std::size_t rank = 4;
  double backbone_noise = 1e-3;
  std::size_t cond_width = 8;
  std::uint64_t seed = 0;
  std::size_t static_steps = 1500;
  std::size_t pg_steps = 2000;
  std::size_t batch = 8;
  std::size_t eval_per_task = 200;
  std::size_t avg_samples = 128;
  OptimizerConfig opt;
  GeneratorConfig generator;  // cond_width is overwritten from this config
};

struct ConflictSuiteResult {
  double l_star = 0.0;
  double single_own = 0.0;     // mean own-task loss of the per-task adapters
  double single_cross = 0.0;   // mean wrong-task loss
  double shared_mean = 0.0;
  double sft_mean = 0.0;
  std::vector<double> pg_per_task;
  double pg_mean = 0.0;
  double avg_pg_mean = 0.0;
  double shuffle_pg_mean = 0.0;
  bool backbone_frozen_ok = false;  // bit-identical weights after all runs
};

ConflictSuiteResult run_conflict_suite(const ConflictSuiteConfig& config);

}  // namespace hywu
