#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hywu/checkpoint.hpp"
#include "hywu/config.hpp"
#include "hywu/conflict.hpp"
#include "hywu/diagnostics.hpp"
#include "hywu/kernels.hpp"
#include "hywu/manifold.hpp"
#include "hywu/report.hpp"
#include "hywu/rng.hpp"
#include "hywu/training.hpp"

namespace {

using hywu::Config;
using nlohmann::json;

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_format = true) {
  cmd->add_option("--config", opts.config_path, "INI config file");
  cmd->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--threads", opts.threads, "kernel threads (0 = library default)");
  if (with_format)
    cmd->add_option("--format", opts.format, "table format for results")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
}

Config load_config(const CommonOpts& opts) {
  if (opts.config_path.empty()) return Config::parse_string("", "<empty>");
  return Config::parse_file(opts.config_path);
}

std::string config_text(const CommonOpts& opts) {
  if (opts.config_path.empty()) return "";
  return hywu::read_text_file(opts.config_path);
}

void finish_run(const CommonOpts& opts, const std::string& command, std::uint64_t seed,
                const std::vector<std::string>& outputs) {
  hywu::RunManifest manifest;
  manifest.command = command;
  manifest.config_text = config_text(opts);
  manifest.seed = seed;
  manifest.output_files = outputs;
  hywu::write_manifest(opts.out_dir, manifest);
}

void reject_unread(const Config& cfg) {
  const auto unread = cfg.unread_keys();
  if (!unread.empty()) {
    std::string msg = "unrecognized config key(s):";
    for (const auto& k : unread) msg += " " + k;
    throw hywu::ConfigError(msg);
  }
}

struct Problem {
  std::vector<hywu::TaskSpec> tasks;
  hywu::BackboneConfig backbone;
  std::size_t cond_width = 8;
  std::uint64_t task_seed = 0;
};

Problem build_problem(const Config& cfg, std::uint64_t seed) {
  Problem p;
  const std::string kind = cfg.get_string("task", "kind", "scale");
  const std::size_t width = cfg.get_size("task", "width", 8);
  const double delta = cfg.get_double("task", "delta", 0.5);
  p.cond_width = cfg.get_size("task", "cond_width", 8);
  p.task_seed = cfg.get_u64("task", "task_seed", hywu::derive_seed(seed, 0x7a5c));
  if (kind == "scale" || kind == "rotation") {
    auto pair = hywu::make_opposing_pair(
        kind == "scale" ? hywu::PairKind::scale : hywu::PairKind::rotation, width, delta,
        p.cond_width, p.task_seed);
    p.tasks = {pair.first, pair.second};
  } else if (kind == "separated") {
    p.tasks = hywu::make_separated_tasks(cfg.get_size("task", "count", 4), width, delta,
                                         cfg.get_size("task", "task_rank", 2), p.cond_width,
                                         p.task_seed);
  } else if (kind == "blocks") {
    p.tasks = hywu::make_block_tasks(cfg.get_size("task", "per_block", 4), width, delta,
                                     cfg.get_double("task", "jitter", 0.05), p.cond_width,
                                     p.task_seed);
  } else {
    throw hywu::ConfigError("unknown task kind '" + kind +
                            "' (expected scale | rotation | separated | blocks)");
  }
  p.backbone.width = width;
  p.backbone.layers = cfg.get_size("backbone", "layers", 2);
  p.backbone.linear = cfg.get_bool("backbone", "linear", true);
  p.backbone.noise = cfg.get_double("backbone", "noise", 1e-3);
  p.backbone.seed = cfg.get_u64("backbone", "seed", hywu::derive_seed(seed, 0xbb));
  return p;
}

hywu::GeneratorConfig generator_config(const Config& cfg, std::size_t cond_width) {
  hywu::GeneratorConfig g;
  g.blocks = cfg.get_size("generator", "blocks", g.blocks);
  g.hidden = cfg.get_size("generator", "hidden", g.hidden);
  g.heads = cfg.get_size("generator", "heads", g.heads);
  g.cond_width = cond_width;
  return g;
}

hywu::OptimizerConfig optimizer_config(const Config& cfg) {
  hywu::OptimizerConfig o;
  o.adam = cfg.get_bool("optimizer", "adam", o.adam);
  o.lr = cfg.get_double("optimizer", "lr", o.lr);
  o.beta1 = cfg.get_double("optimizer", "beta1", o.beta1);
  o.beta2 = cfg.get_double("optimizer", "beta2", o.beta2);
  o.eps = cfg.get_double("optimizer", "eps", o.eps);
  return o;
}

void write_table(const std::string& base, const std::string& format,
                 const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows,
                 std::vector<std::string>& outputs) {
  if (format == "csv") {
    hywu::write_csv(base + ".csv", header, rows);
    outputs.push_back(base + ".csv");
  } else {
    json j = json::array();
    for (const auto& row : rows) {
      json r;
      for (std::size_t c = 0; c < header.size(); ++c) r[header[c]] = row[c];
      j.push_back(r);
    }
    hywu::write_json(base + ".json", j);
    outputs.push_back(base + ".json");
  }
}

int cmd_train(const CommonOpts& opts) {
  Config cfg = load_config(opts);
  const std::uint64_t seed = opts.seed.value_or(cfg.get_u64("train", "seed", 0));
  Problem problem = build_problem(cfg, seed);

  hywu::TrainConfig tc;
  const std::string method = cfg.get_string("train", "method", "pg");
  tc.method = hywu::method_from_name(method);
  if (tc.method == hywu::Method::avg_pg || tc.method == hywu::Method::shuffle_pg)
    throw hywu::ConfigError("'" + method + "' is derived from a pg run; train pg instead");
  tc.steps = cfg.get_size("train", "steps", 2000);
  tc.batch = cfg.get_size("train", "batch", 8);
  tc.seed = seed;
  tc.lora_rank = cfg.get_size("train", "rank", 4);
  tc.lora_gamma = cfg.get_double("train", "gamma", 1.0);
  tc.opt = optimizer_config(cfg);
  tc.backbone = problem.backbone;
  tc.generator = generator_config(cfg, problem.cond_width);
  reject_unread(cfg);

  hywu::Featurizer featurizer(problem.cond_width, problem.backbone.width,
                              hywu::derive_seed(problem.task_seed, 0xfea7));
  auto out = hywu::train(tc, problem.tasks, featurizer);

  std::filesystem::create_directories(opts.out_dir);
  std::vector<std::string> outputs;

  std::vector<std::string> header{"step"};
  std::vector<std::string> labels;
  for (const auto& t : problem.tasks) {
    header.push_back("loss_" + t.id);
    labels.push_back(t.id);
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t s = 0; s < out.result.steps; ++s) {
    std::vector<double> row{static_cast<double>(s)};
    for (const auto& curve : out.result.loss_curves) row.push_back(curve[s]);
    rows.push_back(std::move(row));
  }
  write_table(opts.out_dir + "/curves", opts.format, header, rows, outputs);

  const std::string plot_path = opts.out_dir + "/curves.svg";
  hywu::write_text_file(plot_path,
                        hywu::svg_line_plot(out.result.loss_curves, labels,
                                            method + " training loss"));
  outputs.push_back(plot_path);

  json summary;
  summary["method"] = method;
  summary["steps"] = out.result.steps;
  for (std::size_t t = 0; t < problem.tasks.size(); ++t)
    summary["final_losses"][problem.tasks[t].id] = out.result.final_losses[t];
  hywu::write_json(opts.out_dir + "/summary.json", summary);
  outputs.push_back(opts.out_dir + "/summary.json");

  const std::string ckpt_path = opts.out_dir + "/model.ckpt";
  if (tc.method == hywu::Method::pg) {
    hywu::save_generator(ckpt_path, out.generator);
  } else if (tc.method == hywu::Method::sft) {
    hywu::Checkpoint ckpt;
    ckpt.texts["meta"] = json{{"kind", "sft"}, {"layers", out.sft_weights.size()}}.dump();
    for (std::size_t i = 0; i < out.sft_weights.size(); ++i)
      ckpt.tensors["W/" + std::to_string(i)] = out.sft_weights[i];
    hywu::write_checkpoint(ckpt_path, ckpt);
  } else {
    hywu::save_static_lora(ckpt_path, out.lora);
  }
  outputs.push_back(ckpt_path);

  finish_run(opts, "train", seed, outputs);
  for (std::size_t t = 0; t < problem.tasks.size(); ++t)
    std::printf("final %-12s %.6e\n", problem.tasks[t].id.c_str(),
                out.result.final_losses[t]);
  std::printf("wrote %s\n", opts.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt_path, bool shuffle) {
  Config cfg = load_config(opts);
  const std::uint64_t seed = opts.seed.value_or(cfg.get_u64("eval", "seed", 0));
  Problem problem = build_problem(cfg, seed);
  const std::size_t per_task = cfg.get_size("eval", "per_task", 200);
  const double gamma = cfg.get_double("train", "gamma", 1.0);
  // No unread-key check here: eval deliberately accepts the train config
  // unchanged and ignores the training-only keys.

  auto backbone = hywu::build_backbone(problem.backbone);
  auto data = hywu::make_eval_set(problem.tasks, per_task, hywu::derive_seed(seed, 0xe7a1));
  hywu::Featurizer featurizer(problem.cond_width, problem.backbone.width,
                              hywu::derive_seed(problem.task_seed, 0xfea7));

  auto raw = hywu::read_checkpoint(ckpt_path);
  const std::string kind = json::parse(raw.texts.at("meta")).at("kind");
  std::vector<double> losses;
  if (kind == "generator") {
    auto generator = hywu::load_generator(ckpt_path);
    losses = hywu::eval_pg(backbone, generator, featurizer, gamma, problem.tasks, data,
                           shuffle, hywu::derive_seed(seed, 0x5f));
  } else if (kind == "static_lora") {
    if (shuffle) throw hywu::ConfigError("--shuffle only applies to generator checkpoints");
    auto lora = hywu::load_static_lora(ckpt_path);
    losses = hywu::eval_lora(backbone, &lora, gamma, problem.tasks, data);
  } else if (kind == "sft") {
    if (shuffle) throw hywu::ConfigError("--shuffle only applies to generator checkpoints");
    std::vector<hywu::Tensor> weights;
    const auto layers = json::parse(raw.texts.at("meta")).at("layers").get<std::size_t>();
    for (std::size_t i = 0; i < layers; ++i)
      weights.push_back(raw.tensors.at("W/" + std::to_string(i)));
    losses = hywu::eval_sft(backbone, weights, problem.tasks, data);
  } else {
    throw hywu::CheckpointError("'" + ckpt_path + "' has unknown kind '" + kind + "'");
  }

  std::filesystem::create_directories(opts.out_dir);
  std::vector<std::string> outputs;
  std::vector<std::string> header;
  std::vector<double> row;
  for (std::size_t t = 0; t < problem.tasks.size(); ++t) {
    header.push_back("loss_" + problem.tasks[t].id);
    row.push_back(losses[t]);
    std::printf("eval %-12s %.6e\n", problem.tasks[t].id.c_str(), losses[t]);
  }
  write_table(opts.out_dir + "/eval", opts.format, header, {row}, outputs);
  finish_run(opts, "eval", seed, outputs);
  return 0;
}

int cmd_conflict_suite(const CommonOpts& opts) {
  Config cfg = load_config(opts);
  hywu::ConflictSuiteConfig sc;
  sc.seed = opts.seed.value_or(cfg.get_u64("suite", "seed", 0));
  sc.width = cfg.get_size("suite", "width", sc.width);
  sc.delta = cfg.get_double("suite", "delta", sc.delta);
  sc.rank = cfg.get_size("suite", "rank", sc.rank);
  sc.backbone_noise = cfg.get_double("suite", "backbone_noise", sc.backbone_noise);
  sc.cond_width = cfg.get_size("suite", "cond_width", sc.cond_width);
  sc.static_steps = cfg.get_size("suite", "static_steps", sc.static_steps);
  sc.pg_steps = cfg.get_size("suite", "pg_steps", sc.pg_steps);
  sc.batch = cfg.get_size("suite", "batch", sc.batch);
  sc.eval_per_task = cfg.get_size("suite", "eval_per_task", sc.eval_per_task);
  sc.avg_samples = cfg.get_size("suite", "avg_samples", sc.avg_samples);
  sc.opt = optimizer_config(cfg);
  sc.generator = generator_config(cfg, sc.cond_width);
  reject_unread(cfg);

  auto res = hywu::run_conflict_suite(sc);

  std::filesystem::create_directories(opts.out_dir);
  json j;
  j["l_star"] = res.l_star;
  j["single_own"] = res.single_own;
  j["single_cross"] = res.single_cross;
  j["shared_mean"] = res.shared_mean;
  j["sft_mean"] = res.sft_mean;
  j["pg_per_task"] = res.pg_per_task;
  j["pg_mean"] = res.pg_mean;
  j["avg_pg_mean"] = res.avg_pg_mean;
  j["shuffle_pg_mean"] = res.shuffle_pg_mean;
  j["backbone_frozen_ok"] = res.backbone_frozen_ok;
  hywu::write_json(opts.out_dir + "/conflict_suite.json", j);
  finish_run(opts, "conflict-suite", sc.seed, {opts.out_dir + "/conflict_suite.json"});

  std::printf("l_star          %.6e\n", res.l_star);
  std::printf("single own      %.6e   cross %.6e\n", res.single_own, res.single_cross);
  std::printf("shared          %.6e\n", res.shared_mean);
  std::printf("sft             %.6e\n", res.sft_mean);
  std::printf("pg              %.6e\n", res.pg_mean);
  std::printf("avg-pg          %.6e\n", res.avg_pg_mean);
  std::printf("shuffle-pg      %.6e\n", res.shuffle_pg_mean);
  std::printf("backbone frozen %s\n", res.backbone_frozen_ok ? "yes" : "no");
  return 0;
}

int cmd_analyze_gradients(const CommonOpts& opts) {
  Config cfg = load_config(opts);
  const std::uint64_t seed = opts.seed.value_or(cfg.get_u64("gradients", "seed", 0));
  Problem problem = build_problem(cfg, seed);
  hywu::CollectConfig cc;
  cc.samples_per_task = cfg.get_size("gradients", "samples_per_task", 50);
  cc.shared_x = cfg.get_bool("gradients", "shared_x", false);
  cc.seed = hywu::derive_seed(seed, 0x9d);
  const bool paired = cfg.get_bool("gradients", "paired_cross", cc.shared_x);
  const std::size_t clusters =
      cfg.get_size("gradients", "clusters", std::min<std::size_t>(2, problem.tasks.size()));
  reject_unread(cfg);

  auto backbone = hywu::build_backbone(problem.backbone);
  std::size_t rejected = 0;
  auto samples = hywu::collect_gradients(backbone, problem.tasks, cc, &rejected);
  auto report = hywu::analyze_conflicts(samples, problem.tasks.size(), clusters,
                                        hywu::derive_seed(seed, 0xc1), paired);

  std::filesystem::create_directories(opts.out_dir);
  std::vector<std::string> outputs;
  json j;
  j["tasks"] = report.tasks;
  j["rejected_samples"] = rejected;
  j["excluded_zero_norm"] = report.stats.excluded_zero_norm;
  j["mean_cos"] = report.stats.mean_cos;
  j["conflict_ratio"] = report.stats.conflict_ratio;
  j["cluster_labels"] = report.cluster_labels;
  hywu::write_json(opts.out_dir + "/gradients.json", j);
  outputs.push_back(opts.out_dir + "/gradients.json");

  std::vector<std::string> header{"bin_left", "bin_right"};
  std::vector<std::vector<double>> rows(hywu::kHistogramBins);
  for (std::size_t b = 0; b < hywu::kHistogramBins; ++b)
    rows[b] = {-1.0 + 0.04 * static_cast<double>(b), -1.0 + 0.04 * static_cast<double>(b + 1)};
  for (const auto& h : report.histograms) {
    header.push_back("pair_" + std::to_string(h.task_i) + "_" + std::to_string(h.task_j));
    for (std::size_t b = 0; b < hywu::kHistogramBins; ++b)
      rows[b].push_back(static_cast<double>(h.counts[b]));
  }
  write_table(opts.out_dir + "/histograms", opts.format, header, rows, outputs);
  finish_run(opts, "analyze-gradients", seed, outputs);

  for (std::size_t i = 0; i < report.tasks; ++i)
    for (std::size_t k = i + 1; k < report.tasks; ++k)
      std::printf("pair (%zu,%zu)  mean_cos %+.4f  conflict_ratio %.4f\n", i, k,
                  report.stats.mean_cos[i][k], report.stats.conflict_ratio[i][k]);
  std::printf("cluster labels:");
  for (auto l : report.cluster_labels) std::printf(" %zu", l);
  std::printf("\n");
  return 0;
}

int cmd_analyze_manifold(const CommonOpts& opts, bool spread) {
  Config cfg = load_config(opts);
  const std::uint64_t seed = opts.seed.value_or(cfg.get_u64("manifold", "seed", 0));
  std::filesystem::create_directories(opts.out_dir);
  std::vector<std::string> outputs;

  if (spread) {
    hywu::SpreadSuiteConfig sc;
    sc.seed = seed;
    sc.width = cfg.get_size("manifold", "width", sc.width);
    sc.delta = cfg.get_double("manifold", "delta", sc.delta);
    sc.cloud_samples = cfg.get_size("manifold", "cloud_samples", sc.cloud_samples);
    sc.opt_seeds = cfg.get_size("manifold", "opt_seeds", sc.opt_seeds);
    sc.pg_steps = cfg.get_size("manifold", "pg_steps", sc.pg_steps);
    sc.opt_steps = cfg.get_size("manifold", "opt_steps", sc.opt_steps);
    sc.opt = optimizer_config(cfg);
    sc.generator = generator_config(cfg, sc.cond_width);
    reject_unread(cfg);
    auto res = hywu::run_spread_suite(sc);
    json j;
    j["pg_ratio"] = res.report.pg_ratio;
    j["opt_ratio"] = res.report.opt_ratio;
    j["pg_mean_displacement"] = res.report.pg_mean_displacement;
    j["opt_mean_displacement"] = res.report.opt_mean_displacement;
    j["pg_diameter"] = res.report.pg_diameter;
    j["pg_final_losses"] = res.pg_final_losses;
    hywu::write_json(opts.out_dir + "/spread.json", j);
    finish_run(opts, "analyze-manifold", seed, {opts.out_dir + "/spread.json"});
    std::printf("pg spread ratio  %.4f\n", res.report.pg_ratio);
    std::printf("opt spread ratio %.4f\n", res.report.opt_ratio);
    return 0;
  }

  hywu::ManifoldSuiteConfig mc;
  mc.seed = seed;
  mc.tasks = cfg.get_size("manifold", "tasks", mc.tasks);
  mc.width = cfg.get_size("manifold", "width", mc.width);
  mc.delta = cfg.get_double("manifold", "delta", mc.delta);
  mc.samples = cfg.get_size("manifold", "samples", mc.samples);
  mc.project_dim = cfg.get_size("manifold", "project_dim", mc.project_dim);
  mc.k_neighbors = cfg.get_size("manifold", "k_neighbors", mc.k_neighbors);
  mc.pg_steps = cfg.get_size("manifold", "pg_steps", mc.pg_steps);
  mc.opt = optimizer_config(cfg);
  mc.generator = generator_config(cfg, mc.cond_width);
  reject_unread(cfg);
  auto res = hywu::run_manifold_suite(mc);

  json j;
  j["purity"] = res.purity;
  j["knn_margin"] = res.knn.margin;
  j["knn_mean"] = res.knn.mean_knn;
  j["random_mean"] = res.knn.mean_random;
  j["null_margin"] = res.null_knn.margin;
  j["projection_max_distortion"] = res.audit.max_distortion;
  j["projection_mean_distortion"] = res.audit.mean_distortion;
  j["pg_final_losses"] = res.pg_final_losses;
  hywu::write_json(opts.out_dir + "/manifold.json", j);
  outputs.push_back(opts.out_dir + "/manifold.json");

  std::vector<std::string> header{"pc1", "pc2", "task", "cluster"};
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < res.pca.size(); ++i)
    rows.push_back({res.pca[i][0], res.pca[i][1], static_cast<double>(res.task_ids[i]),
                    static_cast<double>(res.labels[i])});
  write_table(opts.out_dir + "/embedding", opts.format, header, rows, outputs);
  finish_run(opts, "analyze-manifold", seed, outputs);

  std::printf("cluster purity %.4f\n", res.purity);
  std::printf("knn margin     %.4f (null %.4f)\n", res.knn.margin, res.null_knn.margin);
  return 0;
}

int cmd_selfcheck(const CommonOpts& opts) {
  const std::uint64_t seed = opts.seed.value_or(0);
  bool ok = true;
  auto line = [&](const char* name, bool passed, const std::string& detail) {
    std::printf("[%s] %-22s %s\n", passed ? "pass" : "FAIL", name, detail.c_str());
    ok = ok && passed;
  };
  auto fuzz = hywu::check_roundtrip_fuzz(120, seed);
  line("tokenizer-roundtrip", fuzz.passed, fuzz.detail);
  auto zero = hywu::check_zero_init(64, seed);
  line("zero-init", zero.passed, zero.detail);
  auto grad = hywu::check_end_to_end_gradients(1e-3, 1e-4, seed);
  line("gradient-check", grad.passed,
       "max rel error " + hywu::format_double(grad.max_rel_error) + " over " +
           std::to_string(grad.params_checked) + " parameters (worst: " + grad.worst_param +
           ")");
  return ok ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional low-rank parameter generation testbed"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_opts, suite_opts, grad_opts, mani_opts, check_opts;
  std::string eval_ckpt;
  bool eval_shuffle = false, mani_spread = false;

  auto* train_cmd = app.add_subcommand("train", "train one method on a synthetic task set");
  add_common(train_cmd, train_opts);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a held-out set");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();
  eval_cmd->add_flag("--shuffle", eval_shuffle, "derange the condition pairing (pg only)");
  auto* suite_cmd = app.add_subcommand("conflict-suite", "run the six-arm comparison");
  add_common(suite_cmd, suite_opts, false);
  auto* grad_cmd = app.add_subcommand("analyze-gradients", "gradient conflict statistics");
  add_common(grad_cmd, grad_opts);
  auto* mani_cmd = app.add_subcommand("analyze-manifold", "update-family geometry");
  add_common(mani_cmd, mani_opts);
  mani_cmd->add_flag("--spread", mani_spread, "run the spread comparison instead");
  auto* check_cmd = app.add_subcommand("selfcheck", "internal consistency checks");
  add_common(check_cmd, check_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      hywu::kernels::set_threads(train_opts.threads);
      return cmd_train(train_opts);
    }
    if (eval_cmd->parsed()) {
      hywu::kernels::set_threads(eval_opts.threads);
      return cmd_eval(eval_opts, eval_ckpt, eval_shuffle);
    }
    if (suite_cmd->parsed()) {
      hywu::kernels::set_threads(suite_opts.threads);
      return cmd_conflict_suite(suite_opts);
    }
    if (grad_cmd->parsed()) {
      hywu::kernels::set_threads(grad_opts.threads);
      return cmd_analyze_gradients(grad_opts);
    }
    if (mani_cmd->parsed()) {
      hywu::kernels::set_threads(mani_opts.threads);
      return cmd_analyze_manifold(mani_opts, mani_spread);
    }
    if (check_cmd->parsed()) {
      hywu::kernels::set_threads(check_opts.threads);
      return cmd_selfcheck(check_opts);
    }
  } catch (const hywu::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const hywu::ParameterError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitUsage;
}
