#include "hywu/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hywu/rng.hpp"

namespace hywu {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return num / std::sqrt(na * nb);
}

void check_rect(const std::vector<std::vector<double>>& vs, const char* who) {
  if (vs.empty()) throw ParameterError(std::string(who) + ": empty input");
  for (const auto& v : vs)
    if (v.size() != vs[0].size())
      throw ParameterError(std::string(who) + ": ragged input");
}

std::size_t similarity_bin(double c) {
  auto bin = std::size_t(std::floor((c + 1.0) / 0.04));
  return std::min<std::size_t>(bin, 49);
}

}  // namespace

std::vector<std::vector<double>> random_project(const std::vector<std::vector<double>>& vectors,
                                                std::size_t k, std::uint64_t seed,
                                                ProjectionAudit* audit, bool orthonormal,
                                                std::size_t audit_pair_cap) {
  check_rect(vectors, "random_project");
  const std::size_t n = vectors.size(), D = vectors[0].size();
  if (k < 1 || k > D) throw ParameterError("random_project: need 1 <= k <= D");
  if (n < 2) throw ParameterError("random_project: need at least two vectors");

  Rng rng(derive_seed(seed, 0x91));
  // Rows are the k projection directions in R^D.
  std::vector<std::vector<double>> P(k);
  for (auto& row : P) row = rng.gaussian_vector(D, 1.0 / std::sqrt(double(k)));
  if (orthonormal) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        double d = 0.0;
        for (std::size_t c = 0; c < D; ++c) d += P[i][c] * P[j][c];
        for (std::size_t c = 0; c < D; ++c) P[i][c] -= d * P[j][c];
      }
      double nrm = 0.0;
      for (double v : P[i]) nrm += v * v;
      nrm = std::sqrt(nrm);
      if (nrm == 0.0) throw ParameterError("random_project: degenerate direction");
      for (double& v : P[i]) v /= nrm;
    }
  }

  std::vector<std::vector<double>> out(n, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < k; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < D; ++c) acc += P[r][c] * vectors[i][c];
      out[i][r] = acc;
    }

  if (audit) {
    *audit = {};
    std::size_t counted = 0;
    double sum = 0.0, max = 0.0;
    for (std::size_t i = 0; i < n && (audit_pair_cap == 0 || counted < audit_pair_cap); ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double orig = std::sqrt(sq_dist(vectors[i], vectors[j]));
        if (orig == 0.0) continue;
        const double proj = std::sqrt(sq_dist(out[i], out[j]));
        const double distortion = std::fabs(proj / orig - 1.0);
        sum += distortion;
        max = std::max(max, distortion);
        ++counted;
        if (audit_pair_cap != 0 && counted >= audit_pair_cap) break;
      }
    }
    audit->pairs = counted;
    audit->max_distortion = max;
    audit->mean_distortion = counted > 0 ? sum / double(counted) : 0.0;
  }
  return out;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t clusters,
                    std::uint64_t seed) {
  check_rect(points, "kmeans");
  const std::size_t n = points.size(), dim = points[0].size();
  if (clusters < 1 || clusters > n) throw ParameterError("kmeans: need 1 <= K <= n");

  // Farthest-first seeding from a seeded start point.
  Rng rng(derive_seed(seed, 0x3a));
  std::vector<std::size_t> seeds{rng.uniform_index(n)};
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  while (seeds.size() < clusters) {
    for (std::size_t i = 0; i < n; ++i)
      dist[i] = std::min(dist[i], sq_dist(points[i], points[seeds.back()]));
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (dist[i] > dist[far]) far = i;  // ties keep the lowest index
    seeds.push_back(far);
  }

  KMeansResult res;
  res.centroids.reserve(clusters);
  for (std::size_t s : seeds) res.centroids.push_back(points[s]);
  res.labels.assign(n, 0);

  for (std::size_t iter = 0; iter < 200; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points[i], res.centroids[0]);
      for (std::size_t c = 1; c < clusters; ++c) {
        const double d = sq_dist(points[i], res.centroids[c]);
        if (d < best_d) {  // strict: ties stay at the lowest index
          best_d = d;
          best = c;
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(clusters, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) sums[res.labels[i]][d] += points[i][d];
      ++counts[res.labels[i]];
    }
    for (std::size_t c = 0; c < clusters; ++c)
      if (counts[c] > 0)
        for (std::size_t d = 0; d < dim; ++d)
          res.centroids[c][d] = sums[c][d] / double(counts[c]);
  }

  res.objective = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    res.objective += sq_dist(points[i], res.centroids[res.labels[i]]);
  return res;
}

double cluster_purity(const std::vector<std::size_t>& labels,
                      const std::vector<std::size_t>& task_ids) {
  if (labels.size() != task_ids.size() || labels.empty())
    throw ParameterError("cluster_purity: size mismatch");
  const std::size_t nc = *std::max_element(labels.begin(), labels.end()) + 1;
  const std::size_t nt = *std::max_element(task_ids.begin(), task_ids.end()) + 1;
  std::vector<std::vector<std::size_t>> table(nc, std::vector<std::size_t>(nt, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) table[labels[i]][task_ids[i]] += 1;
  std::size_t correct = 0;
  for (const auto& row : table) correct += *std::max_element(row.begin(), row.end());
  return double(correct) / double(labels.size());
}

KnnReport knn_consistency(const std::vector<std::vector<double>>& points,
                          const std::vector<std::vector<double>>& conditions,
                          std::size_t k_neighbors, std::uint64_t seed) {
  check_rect(points, "knn_consistency");
  check_rect(conditions, "knn_consistency");
  const std::size_t n = points.size();
  if (conditions.size() != n) throw ParameterError("knn_consistency: size mismatch");
  if (k_neighbors < 1 || k_neighbors >= n)
    throw ParameterError("knn_consistency: need 1 <= k < n");

  KnnReport report;
  report.knn_hist.assign(50, 0);
  report.random_hist.assign(50, 0);

  std::vector<std::pair<double, std::size_t>> by_dist(n);
  double knn_sum = 0.0;
  std::size_t pair_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) by_dist[j] = {sq_dist(points[i], points[j]), j};
    by_dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
    // Sorting the (distance, index) pairs breaks ties by index.
    std::sort(by_dist.begin(), by_dist.end());
    for (std::size_t k = 0; k + 1 < k_neighbors; ++k)
      if (by_dist[k].first == by_dist[k + 1].first) ++report.distance_ties;
    for (std::size_t k = 0; k < k_neighbors; ++k) {
      const double c = cosine(conditions[i], conditions[by_dist[k].second]);
      knn_sum += c;
      report.knn_hist[similarity_bin(c)] += 1;
      ++pair_count;
    }
  }

  Rng rng(derive_seed(seed, 0x4b));
  double random_sum = 0.0;
  for (std::size_t p = 0; p < pair_count; ++p) {
    const std::size_t a = rng.uniform_index(n);
    std::size_t b = rng.uniform_index(n - 1);
    if (b >= a) ++b;
    const double c = cosine(conditions[a], conditions[b]);
    random_sum += c;
    report.random_hist[similarity_bin(c)] += 1;
  }

  report.mean_knn = knn_sum / double(pair_count);
  report.mean_random = random_sum / double(pair_count);
  report.margin = report.mean_knn - report.mean_random;
  return report;
}

std::vector<std::vector<double>> pca_2d(const std::vector<std::vector<double>>& points) {
  check_rect(points, "pca_2d");
  const std::size_t n = points.size(), D = points[0].size();
  if (n < 2) throw ParameterError("pca_2d: need at least two points");

  std::vector<double> mean(D, 0.0);
  for (const auto& p : points)
    for (std::size_t d = 0; d < D; ++d) mean[d] += p[d];
  for (double& m : mean) m /= double(n);
  std::vector<std::vector<double>> centered(n, std::vector<double>(D));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < D; ++d) centered[i][d] = points[i][d] - mean[d];

  // Power iteration on the covariance (implicitly, via X^T X v), deflating the
  // first component out of the data before the second run.
  auto top_direction = [&](const std::vector<std::vector<double>>& x) {
    Rng rng(0x9ca2);
    std::vector<double> v = rng.gaussian_vector(D);
    for (std::size_t iter = 0; iter < 500; ++iter) {
      std::vector<double> next(D, 0.0);
      for (const auto& row : x) {
        double proj = 0.0;
        for (std::size_t d = 0; d < D; ++d) proj += row[d] * v[d];
        for (std::size_t d = 0; d < D; ++d) next[d] += proj * row[d];
      }
      double nrm = 0.0;
      for (double t : next) nrm += t * t;
      nrm = std::sqrt(nrm);
      if (nrm == 0.0) return std::vector<double>(D, 0.0);
      for (double& t : next) t /= nrm;
      double delta = 0.0;
      for (std::size_t d = 0; d < D; ++d) delta = std::max(delta, std::fabs(next[d] - v[d]));
      v = std::move(next);
      if (delta < 1e-12) break;
    }
    return v;
  };

  auto v1 = top_direction(centered);
  auto deflated = centered;
  for (auto& row : deflated) {
    double proj = 0.0;
    for (std::size_t d = 0; d < D; ++d) proj += row[d] * v1[d];
    for (std::size_t d = 0; d < D; ++d) row[d] -= proj * v1[d];
  }
  auto v2 = top_direction(deflated);

  std::vector<std::vector<double>> coords(n, std::vector<double>(2, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < D; ++d) {
      coords[i][0] += centered[i][d] * v1[d];
      coords[i][1] += centered[i][d] * v2[d];
    }
  return coords;
}

namespace {

// Inter-task centroid distance over mean intra-task spread.
double separation_ratio(const std::vector<std::vector<double>>& vectors,
                        const std::vector<std::size_t>& task_ids) {
  const std::size_t K = *std::max_element(task_ids.begin(), task_ids.end()) + 1;
  const std::size_t dim = vectors[0].size();
  std::vector<std::vector<double>> centroids(K, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) centroids[task_ids[i]][d] += vectors[i][d];
    ++counts[task_ids[i]];
  }
  for (std::size_t t = 0; t < K; ++t) {
    if (counts[t] == 0) throw ParameterError("spread: task without samples");
    for (double& v : centroids[t]) v /= double(counts[t]);
  }
  double inter = 0.0;
  std::size_t inter_pairs = 0;
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a + 1; b < K; ++b) {
      inter += std::sqrt(sq_dist(centroids[a], centroids[b]));
      ++inter_pairs;
    }
  inter /= double(inter_pairs);
  double intra = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i)
    intra += std::sqrt(sq_dist(vectors[i], centroids[task_ids[i]]));
  intra /= double(vectors.size());
  if (intra == 0.0) return std::numeric_limits<double>::infinity();
  return inter / intra;
}

double mean_norm(const std::vector<std::vector<double>>& vectors) {
  double s = 0.0;
  for (const auto& v : vectors) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    s += std::sqrt(n2);
  }
  return s / double(vectors.size());
}

}  // namespace

SpreadReport spread_comparison(const ParamCloud& pg_cloud,
                               const std::vector<std::vector<double>>& opt_vectors,
                               const std::vector<std::size_t>& opt_task_ids) {
  if (pg_cloud.deltas.size() != pg_cloud.task_ids.size() || pg_cloud.deltas.empty())
    throw ParameterError("spread_comparison: malformed PG cloud");
  const std::size_t K =
      *std::max_element(pg_cloud.task_ids.begin(), pg_cloud.task_ids.end()) + 1;
  if (K < 2) throw ContractError("spread_comparison: needs at least two tasks");
  if (opt_vectors.size() != opt_task_ids.size() || opt_vectors.empty())
    throw ParameterError("spread_comparison: malformed optimized set");

  SpreadReport report;
  report.pg_ratio = separation_ratio(pg_cloud.deltas, pg_cloud.task_ids);
  report.opt_ratio = separation_ratio(opt_vectors, opt_task_ids);
  report.pg_mean_displacement = mean_norm(pg_cloud.deltas);
  report.opt_mean_displacement = mean_norm(opt_vectors);
  for (std::size_t i = 0; i < pg_cloud.deltas.size(); ++i)
    for (std::size_t j = i + 1; j < pg_cloud.deltas.size(); ++j)
      report.pg_diameter =
          std::max(report.pg_diameter, std::sqrt(sq_dist(pg_cloud.deltas[i],
                                                         pg_cloud.deltas[j])));
  return report;
}

ParamCloud build_pg_cloud(const GeneratorState& generator, const FrozenBackbone& backbone,
                          const Featurizer& featurizer, const std::vector<TaskSpec>& tasks,
                          const std::vector<Instance>& instances, double gamma) {
  if (instances.empty()) throw ParameterError("build_pg_cloud: no instances");
  const std::size_t L = backbone.config.layers;
  const std::size_t from =
      backbone.config.mode == ConflictMode::soft && backbone.config.instr_width > 0 ? 1 : 0;

  ParamCloud cloud;
  for (const Instance& inst : instances) {
    Tape tape;
    Tensor u = featurizer.featurize(inst, tasks);
    auto toks = generate(tape, generator, u);
    auto adapters = detokenize(tape, toks, generator.layout);
    std::vector<double> flat;
    for (std::size_t li = from; li < L; ++li) {
      Tensor dw = lora_delta(tape, adapters.A[li - from][0], adapters.B[li - from][0], gamma);
      flat.insert(flat.end(), dw.data.begin(), dw.data.end());
    }
    cloud.deltas.push_back(std::move(flat));
    cloud.conditions.push_back(u.data);
    cloud.task_ids.push_back(inst.task);
  }
  return cloud;
}

ManifoldSuiteResult run_manifold_suite(const ManifoldSuiteConfig& config) {
  auto tasks = make_separated_tasks(config.tasks, config.width, config.delta,
                                    config.task_rank, config.cond_width,
                                    derive_seed(config.seed, 1));
  BackboneConfig bcfg;
  bcfg.width = config.width;
  bcfg.layers = 2;
  bcfg.linear = true;
  bcfg.noise = config.backbone_noise;
  bcfg.seed = derive_seed(config.seed, 2);
  Featurizer feat(config.cond_width, config.width, derive_seed(config.seed, 3));

  TrainConfig tcfg;
  tcfg.method = Method::pg;
  tcfg.steps = config.pg_steps;
  tcfg.batch = config.batch;
  tcfg.opt = config.opt;
  tcfg.seed = derive_seed(config.seed, 4);
  tcfg.lora_rank = config.lora_rank;
  tcfg.backbone = bcfg;
  tcfg.generator = config.generator;
  auto run = train(tcfg, tasks, feat);

  const std::size_t per_task = std::max<std::size_t>(1, config.samples / tasks.size());
  auto instances = make_eval_set(tasks, per_task, derive_seed(config.seed, 5));
  auto cloud = build_pg_cloud(run.generator, run.backbone, feat, tasks, instances, 1.0);

  ManifoldSuiteResult res;
  res.pg_final_losses = run.result.final_losses;
  res.task_ids = cloud.task_ids;
  auto projected = random_project(cloud.deltas, config.project_dim,
                                  derive_seed(config.seed, 6), &res.audit);
  res.labels = kmeans(projected, tasks.size(), derive_seed(config.seed, 7)).labels;
  res.purity = cluster_purity(res.labels, cloud.task_ids);
  res.knn = knn_consistency(projected, cloud.conditions, config.k_neighbors,
                            derive_seed(config.seed, 8));
  res.pca = pca_2d(projected);

  // Isotropic null: random cloud, random conditions, same analysis.
  Rng null_rng(derive_seed(config.seed, 9));
  std::vector<std::vector<double>> null_pts(config.null_samples),
      null_conds(config.null_samples);
  for (std::size_t i = 0; i < config.null_samples; ++i) {
    null_pts[i] = null_rng.gaussian_vector(config.project_dim);
    null_conds[i] = null_rng.gaussian_vector(cloud.conditions[0].size());
  }
  res.null_knn = knn_consistency(null_pts, null_conds, config.k_neighbors,
                                 derive_seed(config.seed, 10));
  return res;
}

SpreadSuiteResult run_spread_suite(const SpreadSuiteConfig& config) {
  auto pair = make_opposing_pair(PairKind::scale, config.width, config.delta,
                                 config.cond_width, derive_seed(config.seed, 1));
  std::vector<TaskSpec> tasks{pair.first, pair.second};
  BackboneConfig bcfg;
  bcfg.width = config.width;
  bcfg.layers = 2;
  bcfg.linear = true;
  bcfg.noise = config.backbone_noise;
  bcfg.seed = derive_seed(config.seed, 2);
  Featurizer feat(config.cond_width, config.width, derive_seed(config.seed, 3));

  TrainConfig pg_cfg;
  pg_cfg.method = Method::pg;
  pg_cfg.steps = config.pg_steps;
  pg_cfg.batch = config.batch;
  pg_cfg.opt = config.opt;
  pg_cfg.seed = derive_seed(config.seed, 4);
  pg_cfg.lora_rank = config.lora_rank;
  pg_cfg.backbone = bcfg;
  pg_cfg.generator = config.generator;
  auto pg_run = train(pg_cfg, tasks, feat);

  auto instances = make_eval_set(tasks, config.cloud_samples, derive_seed(config.seed, 5));
  auto cloud = build_pg_cloud(pg_run.generator, pg_run.backbone, feat, tasks, instances, 1.0);

  // Directly optimized per-task adapters: one shared init, several sampling
  // seeds, flattened the same dense way as the PG cloud.
  std::vector<std::vector<double>> opt_vectors;
  std::vector<std::size_t> opt_task_ids;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t s = 0; s < config.opt_seeds; ++s) {
      TrainConfig scfg;
      scfg.method = Method::single;
      scfg.steps = config.opt_steps;
      scfg.batch = config.batch;
      scfg.opt = config.opt;
      scfg.seed = derive_seed(config.seed, 0x100 + t * config.opt_seeds + s);
      scfg.init_seed = derive_seed(config.seed, 6);  // common initialization
      scfg.lora_rank = config.lora_rank;
      scfg.backbone = bcfg;
      auto run = train(scfg, {tasks[t]}, feat);
      std::vector<double> flat;
      Tape tape;
      for (std::size_t li = 0; li < run.lora.A.size(); ++li) {
        Tensor dw = lora_delta(tape, run.lora.A[li], run.lora.B[li], 1.0);
        flat.insert(flat.end(), dw.data.begin(), dw.data.end());
      }
      opt_vectors.push_back(std::move(flat));
      opt_task_ids.push_back(t);
    }
  }

  SpreadSuiteResult res;
  res.pg_final_losses = pg_run.result.final_losses;
  res.report = spread_comparison(cloud, opt_vectors, opt_task_ids);
  return res;
}

}  // namespace hywu
