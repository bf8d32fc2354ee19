#include "hywu/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hywu/rng.hpp"

namespace hywu {

std::string method_name(Method m) {
  switch (m) {
    case Method::single: return "single";
    case Method::shared: return "shared";
    case Method::sft: return "sft";
    case Method::pg: return "pg";
    case Method::avg_pg: return "avg-pg";
    case Method::shuffle_pg: return "shuffle-pg";
  }
  throw ParameterError("unknown method");
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::single, Method::shared, Method::sft, Method::pg, Method::avg_pg,
                   Method::shuffle_pg})
    if (method_name(m) == name) return m;
  throw ParameterError("unknown method: " + name);
}

void Optimizer::step(const std::string& key, std::vector<double>& param,
                     const std::vector<double>& grad) {
  if (param.size() != grad.size())
    throw TrainingError("optimizer: parameter/gradient size mismatch for " + key);
  for (double g : grad)
    if (!std::isfinite(g)) throw TrainingError("optimizer: non-finite gradient in " + key);

  const double lr = config_.lr;
  if (!config_.adam) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
    return;
  }
  auto& st = state_[key];
  if (st.m.empty()) {
    st.m.assign(param.size(), 0.0);
    st.v.assign(param.size(), 0.0);
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(st.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    st.m[i] = config_.beta1 * st.m[i] + (1.0 - config_.beta1) * grad[i];
    st.v[i] = config_.beta2 * st.v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    param[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + config_.eps);
  }
}

namespace {

bool is_static(Method m) { return m == Method::single || m == Method::shared; }

// First adapted layer: in soft-conflict mode layer 0 takes the widened
// [x, instr] input, which the uniform square token layout cannot cover, so it
// stays unadapted.
std::size_t adapt_from(const BackboneConfig& cfg) {
  return cfg.mode == ConflictMode::soft && cfg.instr_width > 0 ? 1 : 0;
}

std::vector<double> batch_losses_per_row(const Tensor& sq, std::size_t width) {
  std::vector<double> out(sq.shape[0], 0.0);
  for (std::size_t i = 0; i < sq.shape[0]; ++i)
    for (std::size_t j = 0; j < width; ++j) out[i] += sq.data[i * width + j];
  return out;
}

// Sattolo's algorithm: a uniformly random cyclic permutation, which is a
// derangement for n >= 2.
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ParameterError("shuffle needs at least two instances");
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xd37));
  for (std::size_t i = n - 1; i >= 1; --i)
    std::swap(p[i], p[rng.uniform_index(i)]);
  return p;
}

}  // namespace

std::vector<Instance> make_eval_set(const std::vector<TaskSpec>& tasks, std::size_t per_task,
                                    std::uint64_t seed) {
  if (tasks.empty()) throw ParameterError("make_eval_set: no tasks");
  Rng rng(derive_seed(seed, 0xe7a1));
  std::vector<Instance> data;
  data.reserve(tasks.size() * per_task);
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (std::size_t i = 0; i < per_task; ++i) data.push_back(sample_instance(tasks, t, rng));
  return data;
}

std::vector<double> eval_lora(const FrozenBackbone& backbone, const StaticLoRA* lora,
                              double gamma, const std::vector<TaskSpec>& tasks,
                              const std::vector<Instance>& data) {
  const std::size_t w = backbone.width(), L = backbone.config.layers;
  const std::size_t from = adapt_from(backbone.config);
  std::vector<double> loss(tasks.size(), 0.0);
  std::vector<std::size_t> count(tasks.size(), 0);

  // Group by task so soft-mode instruction concatenation stays per-task.
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::vector<double> xs, ys;
    for (const auto& inst : data) {
      if (inst.task != t) continue;
      xs.insert(xs.end(), inst.x.begin(), inst.x.end());
      ys.insert(ys.end(), inst.y.begin(), inst.y.end());
      ++count[t];
    }
    if (count[t] == 0) continue;
    Tape tape;
    Tensor X({count[t], w}, std::move(xs));
    LayerDeltas deltas(L);
    if (lora)
      for (std::size_t li = from; li < L; ++li)
        deltas[li] = lora_delta(tape, lora->A[li - from], lora->B[li - from], gamma);
    const std::vector<double>* instr =
        backbone.config.mode == ConflictMode::soft ? &tasks[t].instruction : nullptr;
    Tensor yhat = backbone_forward(tape, backbone, X, lora ? &deltas : nullptr, nullptr, instr);
    for (std::size_t i = 0; i < yhat.size(); ++i) {
      const double d = yhat.data[i] - ys[i];
      loss[t] += d * d;
    }
    loss[t] /= double(count[t]);
  }
  return loss;
}

std::vector<double> eval_sft(const FrozenBackbone& backbone, const std::vector<Tensor>& weights,
                             const std::vector<TaskSpec>& tasks,
                             const std::vector<Instance>& data) {
  const std::size_t w = backbone.width();
  std::vector<double> loss(tasks.size(), 0.0);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::vector<double> xs, ys;
    std::size_t count = 0;
    for (const auto& inst : data) {
      if (inst.task != t) continue;
      xs.insert(xs.end(), inst.x.begin(), inst.x.end());
      ys.insert(ys.end(), inst.y.begin(), inst.y.end());
      ++count;
    }
    if (count == 0) continue;
    Tape tape;
    Tensor X({count, w}, std::move(xs));
    const std::vector<double>* instr =
        backbone.config.mode == ConflictMode::soft ? &tasks[t].instruction : nullptr;
    Tensor yhat = backbone_forward(tape, backbone, X, nullptr, &weights, instr);
    for (std::size_t i = 0; i < yhat.size(); ++i) {
      const double d = yhat.data[i] - ys[i];
      loss[t] += d * d;
    }
    loss[t] /= double(count);
  }
  return loss;
}

std::vector<double> eval_pg(const FrozenBackbone& backbone, const GeneratorState& generator,
                            const Featurizer& featurizer, double gamma,
                            const std::vector<TaskSpec>& tasks,
                            const std::vector<Instance>& data, bool shuffle,
                            std::uint64_t shuffle_seed) {
  const std::size_t w = backbone.width(), L = backbone.config.layers;
  const std::size_t from = adapt_from(backbone.config);
  std::vector<std::size_t> cond_of(data.size());
  std::iota(cond_of.begin(), cond_of.end(), std::size_t{0});
  if (shuffle) cond_of = derangement(data.size(), shuffle_seed);

  std::vector<double> loss(tasks.size(), 0.0);
  std::vector<std::size_t> count(tasks.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Instance& inst = data[i];
    Tape tape;
    Tensor u = featurizer.featurize(data[cond_of[i]], tasks);
    auto toks = generate(tape, generator, u);
    auto adapters = detokenize(tape, toks, generator.layout);
    LayerDeltas deltas(L);
    for (std::size_t li = from; li < L; ++li)
      deltas[li] = lora_delta(tape, adapters.A[li - from][0], adapters.B[li - from][0], gamma);
    const std::vector<double>* instr =
        backbone.config.mode == ConflictMode::soft ? &tasks[inst.task].instruction : nullptr;
    Tensor x({1, w}, inst.x);
    Tensor yhat = backbone_forward(tape, backbone, x, &deltas, nullptr, instr);
    for (std::size_t j = 0; j < w; ++j) {
      const double d = yhat.data[j] - inst.y[j];
      loss[inst.task] += d * d;
    }
    ++count[inst.task];
  }
  for (std::size_t t = 0; t < tasks.size(); ++t)
    if (count[t] > 0) loss[t] /= double(count[t]);
  return loss;
}

std::vector<double> eval_method(Method method, const FrozenBackbone& backbone,
                                const StaticLoRA* lora, const std::vector<Tensor>* weights,
                                const GeneratorState* generator, const Featurizer* featurizer,
                                double gamma, const std::vector<TaskSpec>& tasks,
                                const std::vector<Instance>& data, bool shuffle,
                                std::uint64_t shuffle_seed) {
  const bool pg_like = method == Method::pg || method == Method::shuffle_pg;
  if (shuffle && !pg_like)
    throw ContractError("eval: shuffle only applies to the parameter-generation arm");
  switch (method) {
    case Method::single:
    case Method::shared:
    case Method::avg_pg:
      if (!lora) throw ParameterError("eval: missing adapter");
      return eval_lora(backbone, lora, gamma, tasks, data);
    case Method::sft:
      if (!weights) throw ParameterError("eval: missing weights");
      return eval_sft(backbone, *weights, tasks, data);
    case Method::pg:
    case Method::shuffle_pg:
      if (!generator || !featurizer) throw ParameterError("eval: missing generator");
      return eval_pg(backbone, *generator, *featurizer, gamma, tasks, data,
                     shuffle || method == Method::shuffle_pg, shuffle_seed);
  }
  throw ParameterError("eval: unknown method");
}

TrainOutput train(const TrainConfig& config, const std::vector<TaskSpec>& tasks,
                  const Featurizer& featurizer) {
  if (tasks.empty()) throw ParameterError("train: no tasks");
  if (config.steps == 0 || config.batch == 0)
    throw ParameterError("train: steps and batch must be positive");
  if (config.method == Method::avg_pg || config.method == Method::shuffle_pg)
    throw ParameterError("train: " + method_name(config.method) +
                         " is derived from a trained pg run, not trained directly");

  TrainOutput out;
  out.backbone = build_backbone(config.backbone);
  const FrozenBackbone& bb = out.backbone;
  const std::size_t w = bb.width(), L = config.backbone.layers, K = tasks.size();
  const std::size_t r = config.lora_rank;
  const std::size_t from = adapt_from(config.backbone);
  const double gamma = config.lora_gamma;
  const bool soft = config.backbone.mode == ConflictMode::soft;

  // Master parameter values; each step watches fresh copies on a new tape.
  std::map<std::string, Tensor> params;
  const std::uint64_t init_seed = config.init_seed.value_or(config.seed);
  if (is_static(config.method)) {
    Rng init(derive_seed(init_seed, 0x11));
    for (std::size_t li = from; li < L; ++li) {
      const std::size_t rows = bb.layer_in(li);
      params["A" + std::to_string(li)] =
          Tensor({rows, r}, init.gaussian_vector(rows * r, 1.0 / std::sqrt(double(rows))));
      params["B" + std::to_string(li)] = Tensor::zeros({r, w});
    }
  } else if (config.method == Method::sft) {
    for (std::size_t li = 0; li < L; ++li)
      params["W" + std::to_string(li)] = bb.weights[li];
  } else {
    auto layout = plan_layout({{"w", w, w}}, L - from, r);
    GeneratorConfig gcfg = config.generator;
    gcfg.cond_width = featurizer.c_dim();
    out.generator = init_generator(gcfg, layout, derive_seed(init_seed, 0x6e));
  }
  std::map<std::string, Tensor>& master =
      config.method == Method::pg ? out.generator.params : params;

  Optimizer opt(config.opt);
  Rng sample_rng(derive_seed(config.seed, 0x5a3));
  out.result.loss_curves.assign(K, std::vector<double>(config.steps, 0.0));

  for (std::size_t step = 0; step < config.steps; ++step) {
    Tape tape;
    std::map<std::string, Tensor> watched;
    for (const auto& [name, value] : master) watched[name] = tape.watch(value);

    // Exactly balanced task assignment within the batch; only x is random.
    std::vector<Instance> batch;
    batch.reserve(config.batch);
    for (std::size_t i = 0; i < config.batch; ++i)
      batch.push_back(sample_instance(tasks, i % K, sample_rng));

    std::vector<double> task_loss(K, 0.0);
    std::vector<std::size_t> task_count(K, 0);
    std::vector<Tensor> parts;

    if (config.method == Method::pg) {
      for (const Instance& inst : batch) {
        Tensor u = featurizer.featurize(inst, tasks);
        auto toks = generate(tape, out.generator, u, &watched);
        auto adapters = detokenize(tape, toks, out.generator.layout);
        LayerDeltas deltas(L);
        for (std::size_t li = from; li < L; ++li)
          deltas[li] =
              lora_delta(tape, adapters.A[li - from][0], adapters.B[li - from][0], gamma);
        const std::vector<double>* instr = soft ? &tasks[inst.task].instruction : nullptr;
        Tensor x({1, w}, inst.x);
        Tensor yhat = backbone_forward(tape, bb, x, &deltas, nullptr, instr);
        Tensor diff = tape.sub(yhat, Tensor({1, w}, inst.y));
        Tensor li_loss = tape.sum(tape.mul(diff, diff));
        task_loss[inst.task] += li_loss.data[0];
        ++task_count[inst.task];
        parts.push_back(li_loss);
      }
    } else {
      for (std::size_t t = 0; t < K; ++t) {
        std::vector<double> xs, ys;
        std::size_t count = 0;
        for (const auto& inst : batch) {
          if (inst.task != t) continue;
          xs.insert(xs.end(), inst.x.begin(), inst.x.end());
          ys.insert(ys.end(), inst.y.begin(), inst.y.end());
          ++count;
        }
        if (count == 0) continue;
        Tensor X({count, w}, std::move(xs));
        Tensor yhat;
        if (config.method == Method::sft) {
          std::vector<Tensor> weights;
          for (std::size_t li = 0; li < L; ++li)
            weights.push_back(watched.at("W" + std::to_string(li)));
          yhat = backbone_forward(tape, bb, X, nullptr, &weights,
                                  soft ? &tasks[t].instruction : nullptr);
        } else {
          LayerDeltas deltas(L);
          for (std::size_t li = from; li < L; ++li)
            deltas[li] = lora_delta(tape, watched.at("A" + std::to_string(li)),
                                    watched.at("B" + std::to_string(li)), gamma);
          yhat = backbone_forward(tape, bb, X, &deltas, nullptr,
                                  soft ? &tasks[t].instruction : nullptr);
        }
        Tensor diff = tape.sub(yhat, Tensor({count, w}, std::move(ys)));
        Tensor sq = tape.mul(diff, diff);
        parts.push_back(tape.sum(sq));
        for (double v : batch_losses_per_row(sq, w)) task_loss[t] += v;
        task_count[t] = count;
      }
    }

    Tensor total = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) total = tape.add(total, parts[i]);
    Tensor loss = tape.scale(total, 1.0 / double(config.batch));
    if (!std::isfinite(loss.data[0]))
      throw TrainingError("train: non-finite loss at step " + std::to_string(step));

    const double batch_mean = loss.data[0];
    for (std::size_t t = 0; t < K; ++t) {
      double v;
      if (task_count[t] > 0) v = task_loss[t] / double(task_count[t]);
      else v = step > 0 ? out.result.loss_curves[t][step - 1] : batch_mean;
      out.result.loss_curves[t][step] = v;
    }

    tape.backward(loss);
    for (auto& [name, value] : master) opt.step(name, value.data, tape.grad(watched.at(name)));
  }
  out.result.steps = config.steps;

  if (is_static(config.method)) {
    for (std::size_t li = from; li < L; ++li) {
      out.lora.A.push_back(master.at("A" + std::to_string(li)));
      out.lora.B.push_back(master.at("B" + std::to_string(li)));
    }
  } else if (config.method == Method::sft) {
    for (std::size_t li = 0; li < L; ++li)
      out.sft_weights.push_back(master.at("W" + std::to_string(li)));
  }

  auto eval_data = make_eval_set(tasks, 200, derive_seed(config.seed, 0xf1));
  out.result.final_losses =
      eval_method(config.method, bb, &out.lora, &out.sft_weights, &out.generator, &featurizer,
                  gamma, tasks, eval_data, false, 0);
  return out;
}

StaticLoRA derive_avg_pg(const GeneratorState& generator, const FrozenBackbone& backbone,
                         const Featurizer& featurizer, const std::vector<TaskSpec>& tasks,
                         const std::vector<Instance>& sample_set) {
  if (sample_set.empty()) throw ParameterError("derive_avg_pg: empty sample set");
  Tape tape;
  Tensor mean;
  for (const Instance& inst : sample_set) {
    Tensor u = featurizer.featurize(inst, tasks);
    auto toks = generate(tape, generator, u);
    if (mean.size() == 0) mean = toks.tensor;
    else mean = tape.add(mean, toks.tensor);
  }
  mean = tape.scale(mean, 1.0 / double(sample_set.size()));
  auto adapters = detokenize(tape, ParamTokens{mean}, generator.layout);

  const std::size_t from = adapt_from(backbone.config);
  StaticLoRA out;
  for (std::size_t li = from; li < backbone.config.layers; ++li) {
    out.A.push_back(adapters.A[li - from][0]);
    out.B.push_back(adapters.B[li - from][0]);
  }
  return out;
}

ConflictSuiteResult run_conflict_suite(const ConflictSuiteConfig& config) {
  auto pair = make_opposing_pair(PairKind::scale, config.width, config.delta,
                                 config.cond_width, derive_seed(config.seed, 1));
  std::vector<TaskSpec> tasks{pair.first, pair.second};

  BackboneConfig bcfg;
  bcfg.width = config.width;
  bcfg.layers = 2;
  bcfg.linear = true;
  bcfg.mode = ConflictMode::strict;
  bcfg.noise = config.backbone_noise;
  bcfg.seed = derive_seed(config.seed, 2);

  ConflictSuiteResult res;
  res.l_star = compromise_oracle(tasks[0], tasks[1], bcfg).l_star;

  Featurizer feat(config.cond_width, config.width, derive_seed(config.seed, 3));
  auto eval_data = make_eval_set(tasks, config.eval_per_task, derive_seed(config.seed, 4));
  const FrozenBackbone reference = build_backbone(bcfg);

  TrainConfig base;
  base.backbone = bcfg;
  base.lora_rank = config.rank;
  base.opt = config.opt;
  base.batch = config.batch;
  base.generator = config.generator;

  auto frozen_ok = [&](const FrozenBackbone& bb) {
    if (bb.weights.size() != reference.weights.size()) return false;
    for (std::size_t i = 0; i < bb.weights.size(); ++i)
      if (bb.weights[i].data != reference.weights[i].data) return false;
    return true;
  };
  bool all_frozen = true;

  // Per-task specialist adapters.
  double own = 0.0, cross = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    TrainConfig cfg = base;
    cfg.method = Method::single;
    cfg.steps = config.static_steps;
    cfg.seed = derive_seed(config.seed, 0x10 + t);
    auto run = train(cfg, {tasks[t]}, feat);
    all_frozen = all_frozen && frozen_ok(run.backbone);
    auto losses = eval_lora(run.backbone, &run.lora, base.lora_gamma, tasks, eval_data);
    own += losses[t];
    double c = 0.0;
    for (std::size_t j = 0; j < tasks.size(); ++j)
      if (j != t) c += losses[j];
    cross += c / double(tasks.size() - 1);
  }
  res.single_own = own / double(tasks.size());
  res.single_cross = cross / double(tasks.size());

  // One shared adapter across the balanced mixture.
  TrainConfig shared_cfg = base;
  shared_cfg.method = Method::shared;
  shared_cfg.steps = config.static_steps;
  shared_cfg.seed = derive_seed(config.seed, 0x20);
  auto shared_run = train(shared_cfg, tasks, feat);
  all_frozen = all_frozen && frozen_ok(shared_run.backbone);
  {
    auto losses = eval_lora(shared_run.backbone, &shared_run.lora, base.lora_gamma, tasks,
                            eval_data);
    for (double v : losses) res.shared_mean += v;
    res.shared_mean /= double(losses.size());
  }

  // Full fine-tune of the backbone copy.
  TrainConfig sft_cfg = base;
  sft_cfg.method = Method::sft;
  sft_cfg.steps = config.static_steps;
  sft_cfg.seed = derive_seed(config.seed, 0x30);
  auto sft_run = train(sft_cfg, tasks, feat);
  all_frozen = all_frozen && frozen_ok(sft_run.backbone);
  {
    auto losses = eval_sft(sft_run.backbone, sft_run.sft_weights, tasks, eval_data);
    for (double v : losses) res.sft_mean += v;
    res.sft_mean /= double(losses.size());
  }

  // Conditional parameter generation, plus its two ablations.
  TrainConfig pg_cfg = base;
  pg_cfg.method = Method::pg;
  pg_cfg.steps = config.pg_steps;
  pg_cfg.seed = derive_seed(config.seed, 0x40);
  auto pg_run = train(pg_cfg, tasks, feat);
  all_frozen = all_frozen && frozen_ok(pg_run.backbone);
  res.pg_per_task = eval_pg(pg_run.backbone, pg_run.generator, feat, base.lora_gamma, tasks,
                            eval_data, false, 0);
  for (double v : res.pg_per_task) res.pg_mean += v;
  res.pg_mean /= double(res.pg_per_task.size());

  const std::size_t per_task_avg =
      std::max<std::size_t>(1, config.avg_samples / tasks.size());
  auto avg_set = make_eval_set(tasks, per_task_avg, derive_seed(config.seed, 5));
  auto avg = derive_avg_pg(pg_run.generator, pg_run.backbone, feat, tasks, avg_set);
  {
    auto losses = eval_lora(pg_run.backbone, &avg, base.lora_gamma, tasks, eval_data);
    for (double v : losses) res.avg_pg_mean += v;
    res.avg_pg_mean /= double(losses.size());
  }

  {
    auto losses = eval_pg(pg_run.backbone, pg_run.generator, feat, base.lora_gamma, tasks,
                          eval_data, true, derive_seed(config.seed, 6));
    for (double v : losses) res.shuffle_pg_mean += v;
    res.shuffle_pg_mean /= double(losses.size());
  }

  res.backbone_frozen_ok = all_frozen && frozen_ok(build_backbone(bcfg));
  return res;
}

}  // namespace hywu
