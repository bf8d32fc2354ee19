#pragma once

#include <cstdint>
#include <vector>

#include "hywu/generator.hpp"
#include "hywu/tasks.hpp"
#include "hywu/training.hpp"

// Geometry of the generated update family: random projection with a
// Johnson-Lindenstrauss distortion audit, k-means, kNN condition-similarity
// statistics, 2D principal components, and spread comparisons.
namespace hywu {

struct ParamCloud {
  std::vector<std::vector<double>> deltas;      // n x D flattened updates
  std::vector<std::vector<double>> conditions;  // n x c
  std::vector<std::size_t> task_ids;            // n
};

struct ProjectionAudit {
  double max_distortion = 0.0;
  double mean_distortion = 0.0;
  std::size_t pairs = 0;
};

// Seeded Gaussian projection with entries ~ N(0, 1/k); `orthonormal` runs
// Gram-Schmidt over the rows first (exact distance preservation at k == D).
// The audit covers all pairs up to `audit_pair_cap` (0 = exhaustive).
std::vector<std::vector<double>> random_project(const std::vector<std::vector<double>>& vectors,
                                                std::size_t k, std::uint64_t seed,
                                                ProjectionAudit* audit = nullptr,
                                                bool orthonormal = false,
                                                std::size_t audit_pair_cap = 0);

struct KMeansResult {
  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> centroids;
  double objective = 0.0;  // within-cluster sum of squares
};

// Greedy farthest-first seeding, then Lloyd iterations to an assignment fixed
// point (at most 200); distance ties break to the lowest index.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t clusters,
                    std::uint64_t seed);

// Fraction of samples whose cluster's majority task matches their own.
double cluster_purity(const std::vector<std::size_t>& labels,
                      const std::vector<std::size_t>& task_ids);

struct KnnReport {
  double mean_knn = 0.0;
  double mean_random = 0.0;
  double margin = 0.0;  // mean_knn - mean_random
  std::vector<std::size_t> knn_hist;     // 50 bins over [-1, 1]
  std::vector<std::size_t> random_hist;  // same edges, equal pair count
  std::size_t distance_ties = 0;
};

// For each point, its k nearest neighbors by Euclidean distance in `points`;
// cosine similarity of the condition embeddings over those pairs, against an
// equal-size seeded random-pair control.
KnnReport knn_consistency(const std::vector<std::vector<double>>& points,
                          const std::vector<std::vector<double>>& conditions,
                          std::size_t k_neighbors, std::uint64_t seed);

// First two principal components via power iteration with deflation.
std::vector<std::vector<double>> pca_2d(const std::vector<std::vector<double>>& points);

struct SpreadReport {
  double pg_ratio = 0.0;   // inter-task centroid distance / mean intra spread
  double opt_ratio = 0.0;  // same statistic for the optimized checkpoints
  double pg_mean_displacement = 0.0;   // mean ||delta - init|| (init = 0)
  double opt_mean_displacement = 0.0;
  double pg_diameter = 0.0;  // max pairwise distance within the PG cloud
};

// Compares the PG update family against directly optimized per-task adapters
// flattened the same way. Needs >= 2 tasks on the PG side.
SpreadReport spread_comparison(const ParamCloud& pg_cloud,
                               const std::vector<std::vector<double>>& opt_vectors,
                               const std::vector<std::size_t>& opt_task_ids);

// One generated update per instance, flattened as the dense per-layer
// gamma*A*B updates; conditions are the flattened featurizer outputs.
ParamCloud build_pg_cloud(const GeneratorState& generator, const FrozenBackbone& backbone,
                          const Featurizer& featurizer, const std::vector<TaskSpec>& tasks,
                          const std::vector<Instance>& instances, double gamma);

// Manifold experiment: PG trained on several separated tasks, then cluster /
// kNN statistics of the generated update family, plus an isotropic null.
struct ManifoldSuiteConfig {
  std::size_t tasks = 4;
  std::size_t width = 8;
  double delta = 0.5;
  std::size_t task_rank = 2;   // rank of each task's random direction
  std::size_t lora_rank = 4;
  std::size_t cond_width = 8;
  std::size_t samples = 400;   // cloud size, split evenly over tasks
  std::size_t project_dim = 64;
  std::size_t k_neighbors = 5;
  std::size_t null_samples = 500;
  std::size_t pg_steps = 2000;
  std::size_t batch = 8;
  double backbone_noise = 1e-3;
  std::uint64_t seed = 0;
  OptimizerConfig opt;
  GeneratorConfig generator;
};

struct ManifoldSuiteResult {
  double purity = 0.0;
  KnnReport knn;
  KnnReport null_knn;
  ProjectionAudit audit;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> task_ids;
  std::vector<std::vector<double>> pca;
  std::vector<double> pg_final_losses;
};

ManifoldSuiteResult run_manifold_suite(const ManifoldSuiteConfig& config);

// Spread experiment on the strict-conflict pair: the PG update family against
// directly optimized per-task adapters (several sampling seeds, one shared
// initialization).
struct SpreadSuiteConfig {
  std::size_t width = 8;
  double delta = 0.5;
  std::size_t lora_rank = 4;
  std::size_t cond_width = 8;
  std::size_t cloud_samples = 100;  // per task
  std::size_t opt_seeds = 3;        // optimized runs per task
  std::size_t pg_steps = 2000;
  std::size_t opt_steps = 800;
  std::size_t batch = 8;
  double backbone_noise = 1e-3;
  std::uint64_t seed = 0;
  OptimizerConfig opt;
  GeneratorConfig generator;
};

struct SpreadSuiteResult {
  SpreadReport report;
  std::vector<double> pg_final_losses;
};

SpreadSuiteResult run_spread_suite(const SpreadSuiteConfig& config);

}  // namespace hywu
