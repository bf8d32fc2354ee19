#include "hywu/conflict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hywu/manifold.hpp"
#include "hywu/rng.hpp"

namespace hywu {

namespace {

std::size_t first_adapted_layer(const BackboneConfig& cfg) {
  return cfg.mode == ConflictMode::soft && cfg.instr_width > 0 ? 1 : 0;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Usable (finite-norm, nonzero) sample indices grouped by task.
std::vector<std::vector<std::size_t>> group_usable(const std::vector<GradientSample>& samples,
                                                   std::size_t tasks,
                                                   std::vector<double>& norms,
                                                   std::size_t& excluded) {
  std::vector<std::vector<std::size_t>> by_task(tasks);
  norms.assign(samples.size(), 0.0);
  excluded = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].task >= tasks)
      throw ParameterError("cosine_statistics: task id out of range");
    norms[i] = norm(samples[i].grad);
    if (norms[i] == 0.0) {
      ++excluded;
      continue;
    }
    by_task[samples[i].task].push_back(i);
  }
  return by_task;
}

}  // namespace

std::vector<GradientSample> collect_gradients(const FrozenBackbone& backbone,
                                              const std::vector<TaskSpec>& tasks,
                                              const CollectConfig& config,
                                              std::size_t* rejected) {
  if (tasks.empty()) throw ParameterError("collect_gradients: no tasks");
  if (config.samples_per_task == 0)
    throw ParameterError("collect_gradients: samples_per_task must be positive");
  const std::size_t w = backbone.width(), L = backbone.config.layers;
  const std::size_t from = first_adapted_layer(backbone.config);

  // The evaluation point as dense per-layer updates.
  std::vector<Tensor> point(L);
  for (std::size_t li = from; li < L; ++li) {
    if (config.adapter_point) {
      Tape tape;
      point[li] = lora_delta(tape, config.adapter_point->A[li - from],
                             config.adapter_point->B[li - from], config.gamma);
    } else {
      point[li] = Tensor::zeros({backbone.layer_in(li), w});
    }
  }

  Rng rng(derive_seed(config.seed, 0xc0f));
  std::size_t rejected_count = 0;
  std::vector<GradientSample> out;
  out.reserve(tasks.size() * config.samples_per_task);

  for (std::size_t s = 0; s < config.samples_per_task; ++s) {
    std::vector<double> shared(w);
    if (config.shared_x)
      for (auto& v : shared) v = rng.gaussian();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      Instance inst;
      if (config.shared_x) {
        inst.x = shared;
        inst.task = t;
        inst.y.assign(w, 0.0);
        for (std::size_t j = 0; j < w; ++j)
          for (std::size_t i = 0; i < w; ++i)
            inst.y[j] += inst.x[i] * tasks[t].op.data[i * w + j];
      } else {
        inst = sample_instance(tasks, t, rng);
      }

      Tape tape;
      LayerDeltas deltas(L);
      std::vector<Tensor> watched(L);
      for (std::size_t li = from; li < L; ++li) {
        watched[li] = tape.watch(point[li]);
        deltas[li] = watched[li];
      }
      const std::vector<double>* instr =
          backbone.config.mode == ConflictMode::soft ? &tasks[t].instruction : nullptr;
      Tensor x({1, w}, inst.x);
      Tensor yhat = backbone_forward(tape, backbone, x, &deltas, nullptr, instr);
      Tensor diff = tape.sub(yhat, Tensor({1, w}, inst.y));
      tape.backward(tape.sum(tape.mul(diff, diff)));

      GradientSample sample;
      sample.task = t;
      sample.draw = s;
      for (std::size_t li = from; li < L; ++li) {
        auto g = tape.grad(watched[li]);
        sample.grad.insert(sample.grad.end(), g.begin(), g.end());
      }
      if (!all_finite(sample.grad)) {
        ++rejected_count;
        continue;
      }
      out.push_back(std::move(sample));
    }
  }
  if (rejected) *rejected = rejected_count;
  return out;
}

CosineStats cosine_statistics(const std::vector<GradientSample>& samples, std::size_t tasks,
                              bool paired_cross) {
  if (tasks == 0) throw ParameterError("cosine_statistics: no tasks");
  CosineStats stats;
  std::vector<double> norms;
  auto by_task = group_usable(samples, tasks, norms, stats.excluded_zero_norm);
  for (const auto& idx : by_task)
    if (idx.size() < 2)
      throw ParameterError("cosine_statistics: need >= 2 usable samples per task");

  stats.mean_cos.assign(tasks, std::vector<double>(tasks, 0.0));
  stats.conflict_ratio.assign(tasks, std::vector<double>(tasks, 0.0));

  for (std::size_t i = 0; i < tasks; ++i) {
    for (std::size_t j = i; j < tasks; ++j) {
      double sum = 0.0;
      std::size_t negatives = 0, pairs = 0;
      for (std::size_t a : by_task[i]) {
        for (std::size_t b : by_task[j]) {
          if (i == j && b <= a) continue;  // distinct intra-task pairs only
          if (paired_cross && i != j && samples[a].draw != samples[b].draw) continue;
          const double c = dot(samples[a].grad, samples[b].grad) / (norms[a] * norms[b]);
          sum += c;
          negatives += c < 0.0 ? 1 : 0;
          ++pairs;
        }
      }
      if (pairs == 0)
        throw ParameterError("cosine_statistics: no usable pairs for a task pair");
      const double mean = sum / double(pairs);
      const double ratio = double(negatives) / double(pairs);
      stats.mean_cos[i][j] = stats.mean_cos[j][i] = mean;
      stats.conflict_ratio[i][j] = stats.conflict_ratio[j][i] = ratio;
    }
  }
  return stats;
}

std::vector<std::size_t> pair_histogram(const std::vector<GradientSample>& samples,
                                        std::size_t task_i, std::size_t task_j) {
  std::size_t tasks = std::max(task_i, task_j) + 1;
  for (const auto& s : samples) tasks = std::max(tasks, s.task + 1);
  std::vector<double> norms;
  std::size_t excluded = 0;
  auto by_task = group_usable(samples, tasks, norms, excluded);
  if (by_task[task_i].empty() || by_task[task_j].empty())
    throw ParameterError("pair_histogram: a requested task has no usable samples");

  std::vector<std::size_t> counts(kHistogramBins, 0);
  for (std::size_t a : by_task[task_i]) {
    for (std::size_t b : by_task[task_j]) {
      if (task_i == task_j && b <= a) continue;
      const double c = dot(samples[a].grad, samples[b].grad) / (norms[a] * norms[b]);
      // Fixed edges -1 + 0.04*b; cosine exactly 1 lands in the top bin.
      auto bin = std::size_t(std::floor((c + 1.0) / 0.04));
      counts[std::min(bin, kHistogramBins - 1)] += 1;
    }
  }
  return counts;
}

std::vector<std::size_t> spectral_cluster(const std::vector<std::vector<double>>& similarity,
                                          std::size_t k, std::uint64_t seed) {
  const std::size_t K = similarity.size();
  if (K == 0) throw ParameterError("spectral_cluster: empty similarity");
  if (k < 1 || k > K) throw ParameterError("spectral_cluster: bad cluster count");
  for (const auto& row : similarity)
    if (row.size() != K) throw ParameterError("spectral_cluster: matrix not square");
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j)
      if (std::fabs(similarity[i][j] - similarity[j][i]) > 1e-9)
        throw ParameterError("spectral_cluster: matrix not symmetric");

  // Affinity in [0,1], normalized Laplacian L = I - D^-1/2 A D^-1/2.
  std::vector<double> a(K * K), deg(K, 0.0);
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      a[i * K + j] = (1.0 + similarity[i][j]) / 2.0;
      deg[i] += a[i * K + j];
    }
  std::vector<double> lap(K * K, 0.0);
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      const double dij = deg[i] > 0.0 && deg[j] > 0.0
                             ? a[i * K + j] / std::sqrt(deg[i] * deg[j])
                             : 0.0;
      lap[i * K + j] = (i == j ? 1.0 : 0.0) - dij;
    }

  // Cyclic Jacobi sweep; the matrices here are tiny (K <= 64).
  std::vector<double> vecs(K * K, 0.0);
  for (std::size_t i = 0; i < K; ++i) vecs[i * K + i] = 1.0;
  for (std::size_t sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < K; ++p)
      for (std::size_t q = p + 1; q < K; ++q) off += lap[p * K + q] * lap[p * K + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < K; ++p) {
      for (std::size_t q = p + 1; q < K; ++q) {
        const double apq = lap[p * K + q];
        if (std::fabs(apq) < 1e-18) continue;
        const double app = lap[p * K + p], aqq = lap[q * K + q];
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t i = 0; i < K; ++i) {
          const double lip = lap[i * K + p], liq = lap[i * K + q];
          lap[i * K + p] = c * lip - s * liq;
          lap[i * K + q] = s * lip + c * liq;
        }
        for (std::size_t i = 0; i < K; ++i) {
          const double lpi = lap[p * K + i], lqi = lap[q * K + i];
          lap[p * K + i] = c * lpi - s * lqi;
          lap[q * K + i] = s * lpi + c * lqi;
        }
        for (std::size_t i = 0; i < K; ++i) {
          const double vip = vecs[i * K + p], viq = vecs[i * K + q];
          vecs[i * K + p] = c * vip - s * viq;
          vecs[i * K + q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return lap[x * K + x] < lap[y * K + y];
  });

  // Row-normalized bottom-k eigenvector embedding.
  std::vector<std::vector<double>> embed(K, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < K; ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      embed[i][j] = vecs[i * K + order[j]];
      n2 += embed[i][j] * embed[i][j];
    }
    if (n2 > 0.0)
      for (std::size_t j = 0; j < k; ++j) embed[i][j] /= std::sqrt(n2);
  }
  return kmeans(embed, k, derive_seed(seed, 0x5bec)).labels;
}

ConflictReport analyze_conflicts(const std::vector<GradientSample>& samples,
                                 std::size_t tasks, std::size_t clusters,
                                 std::uint64_t seed, bool paired_cross) {
  ConflictReport report;
  report.tasks = tasks;
  report.stats = cosine_statistics(samples, tasks, paired_cross);
  for (std::size_t i = 0; i < tasks; ++i)
    for (std::size_t j = i; j < tasks; ++j)
      report.histograms.push_back({i, j, pair_histogram(samples, i, j)});
  report.cluster_labels = spectral_cluster(report.stats.mean_cos, clusters, seed);
  return report;
}

}  // namespace hywu
