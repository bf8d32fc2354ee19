#pragma once

#include <cstdint>
#include <vector>

#include "hywu/backbone.hpp"
#include "hywu/tasks.hpp"
#include "hywu/training.hpp"

// Gradient-level conflict diagnostics: per-sample gradient cosines, task-pair
// mean-cosine / conflict-ratio matrices, pair histograms, and spectral task
// clustering.
namespace hywu {

struct GradientSample {
  std::size_t task = 0;
  // Draw index of the x that produced this gradient; with shared-x collection
  // the same draw appears once per task, which is what paired cross-task
  // statistics match on.
  std::size_t draw = 0;
  std::vector<double> grad;  // flattened across adapted layers
};

struct CollectConfig {
  std::size_t samples_per_task = 50;
  // Reuse the same x across every task at the same sample index, which makes
  // cross-task pairs directly comparable (the strict-conflict identity
  // g_plus = -g_minus holds per shared x, not in expectation only).
  bool shared_x = false;
  std::uint64_t seed = 0;
  // Evaluation point: dW = gamma * A * B per layer; nullptr means dW = 0.
  const StaticLoRA* adapter_point = nullptr;
  double gamma = 1.0;
};

// Per-sample single-example loss gradients with respect to the dense additive
// layer updates dW, evaluated at the configured adapter point. Non-finite
// gradients are rejected and counted.
std::vector<GradientSample> collect_gradients(const FrozenBackbone& backbone,
                                              const std::vector<TaskSpec>& tasks,
                                              const CollectConfig& config,
                                              std::size_t* rejected = nullptr);

struct CosineStats {
  std::vector<std::vector<double>> mean_cos;        // K x K, symmetric
  std::vector<std::vector<double>> conflict_ratio;  // K x K, in [0, 1]
  std::size_t excluded_zero_norm = 0;
};

// Exhaustive pairwise statistics; diagonal entries use distinct intra-task
// pairs. With `paired_cross`, cross-task pairs are restricted to samples with
// equal draw index (the shared-x design). Requires >= 2 usable samples per
// task.
CosineStats cosine_statistics(const std::vector<GradientSample>& samples, std::size_t tasks,
                              bool paired_cross = false);

// Normalized-Laplacian spectral clustering of a symmetric similarity matrix in
// [-1, 1] (affinity (1 + s)/2), seeded k-means on the row-normalized embedding.
std::vector<std::size_t> spectral_cluster(const std::vector<std::vector<double>>& similarity,
                                          std::size_t k, std::uint64_t seed);

inline constexpr std::size_t kHistogramBins = 50;

// Cross-pair cosine counts over fixed bin edges -1 + 0.04*b. Zero-norm
// samples are excluded before pairing.
std::vector<std::size_t> pair_histogram(const std::vector<GradientSample>& samples,
                                        std::size_t task_i, std::size_t task_j);

struct PairHistogram {
  std::size_t task_i = 0, task_j = 0;
  std::vector<std::size_t> counts;
};

struct ConflictReport {
  std::size_t tasks = 0;
  CosineStats stats;
  std::vector<PairHistogram> histograms;  // all pairs i <= j
  std::vector<std::size_t> cluster_labels;
};

ConflictReport analyze_conflicts(const std::vector<GradientSample>& samples,
                                 std::size_t tasks, std::size_t clusters,
                                 std::uint64_t seed, bool paired_cross = false);

}  // namespace hywu
