// xstack command line: unlearning, ACL calibration, pipeline runs and the
// guardrail service.
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "xstack/acl.hpp"
#include "xstack/checkpoint.hpp"
#include "xstack/dataset.hpp"
#include "xstack/error.hpp"
#include "xstack/hash.hpp"
#include "xstack/pipeline.hpp"
#include "xstack/sensitivity.hpp"
#include "xstack/service.hpp"
#include "xstack/unlearn.hpp"

namespace fs = std::filesystem;
using namespace xstack;

namespace {

struct TaskFile {
  ToyTaskConfig task;
  UnlearnConfig unlearn;
};

TaskFile load_task(const fs::path& path) {
  const auto j = read_json_file(path);
  TaskFile t{toy_task_config_from_json(j), {}};
  if (j.contains("unlearn")) t.unlearn = unlearn_config_from_json(j["unlearn"]);
  return t;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) seeds.push_back(std::stoull(item));
  if (seeds.empty()) throw InvalidArgument("no seeds given");
  return seeds;
}

void write_transcripts(const PipelineRuns& out, const fs::path& dir) {
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : out.runs) all.push_back(transcript_to_json(r));
  write_json_file(all, dir / "transcripts.json");
}

std::vector<ProtectedProfile> load_profiles(const fs::path& path) {
  const auto j = read_json_file(path);
  if (j.is_object() && j.contains("profiles")) return profiles_from_json(j["profiles"]);
  return profiles_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xstack: cross-stack identity protection toolkit"};
  app.require_subcommand(1);

  // score-sensitivity
  auto* score = app.add_subcommand("score-sensitivity", "Sensitivity scores and top-K column mask");
  fs::path score_config, score_model, score_out;
  score->add_option("--config", score_config, "toy task config (JSON)")->required()->check(CLI::ExistingFile);
  score->add_option("--model", score_model, "model checkpoint (default: train the task's model)");
  score->add_option("--out", score_out, "output directory")->required();

  // train-unlearn
  auto* train = app.add_subcommand("train-unlearn", "Train F-RMU adapters on the toy task");
  fs::path train_config, train_out, train_mask;
  train->add_option("--config", train_config, "toy task config (JSON, optional 'unlearn' section)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--mask", train_mask, "precomputed mask (default: score the model)");
  train->add_option("--out", train_out, "checkpoint directory")->required();

  // finalize
  auto* fin = app.add_subcommand("finalize", "Merge trained adapters into the backbone");
  fs::path fin_checkpoint, fin_out;
  fin->add_option("--checkpoint", fin_checkpoint, "directory written by train-unlearn")
      ->required()
      ->check(CLI::ExistingDirectory);
  fin->add_option("--out", fin_out, "merged model file")->required();

  // calibrate-acl
  auto* cal = app.add_subcommand("calibrate-acl", "Sweep FAR/FRR and pick the ACL threshold");
  fs::path cal_genuine, cal_impostor, cal_out, cal_emit;
  double cal_lambda = 0.5, cal_lmax = 50.0;
  std::size_t cal_points = 1001, cal_synthetic = 0;
  std::uint64_t cal_seed = 0;
  cal->add_option("--genuine", cal_genuine, "genuine embedding pairs (JSON)");
  cal->add_option("--impostor", cal_impostor, "impostor embedding pairs (JSON)");
  cal->add_option("--synthetic", cal_synthetic, "generate this many pairs of each kind instead");
  cal->add_option("--seed", cal_seed, "seed for --synthetic");
  cal->add_option("--emit-pairs", cal_emit, "write the synthetic pairs to this directory");
  cal->add_option("--lambda", cal_lambda, "FAR weight in the objective")->check(CLI::Range(0.0, 1.0));
  cal->add_option("--lmax-ms", cal_lmax, "P90 decision latency budget (ms)");
  cal->add_option("--grid", cal_points, "threshold grid points on [-1, 1]")->check(CLI::Range(2, 1000001));
  cal->add_option("--out", cal_out, "output directory")->required();

  // run-pipeline / run-ablation
  auto* pipe = app.add_subcommand("run-pipeline", "Run the scenario corpus under one defense config");
  fs::path pipe_scenarios, pipe_defense, pipe_out;
  std::uint64_t pipe_seed = 0;
  std::size_t pipe_workers = 1;
  pipe->add_option("--scenarios", pipe_scenarios, "scenario directory")->required()->check(CLI::ExistingDirectory);
  pipe->add_option("--defense", pipe_defense, "defense config (JSON)")->required()->check(CLI::ExistingFile);
  pipe->add_option("--seed", pipe_seed, "run seed");
  pipe->add_option("--workers", pipe_workers, "concurrent scenario runs");
  pipe->add_option("--out", pipe_out, "report directory")->required();

  auto* abl = app.add_subcommand("run-ablation", "Run the corpus under every ablation condition");
  fs::path abl_scenarios, abl_defense, abl_out;
  std::string abl_seeds = "0", abl_conditions;
  std::size_t abl_workers = 1;
  abl->add_option("--scenarios", abl_scenarios, "scenario directory")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--defense", abl_defense, "base defense config (JSON)")->required()->check(CLI::ExistingFile);
  abl->add_option("--seeds", abl_seeds, "comma-separated seeds");
  abl->add_option("--conditions", abl_conditions,
                  "comma-separated subset of full,no_guardrail,no_unlearn,no_acl,no_defense");
  abl->add_option("--workers", abl_workers, "concurrent scenario runs");
  abl->add_option("--out", abl_out, "report directory")->required();

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP guardrail service (bind address from XSTACK_BIND)");
  fs::path srv_defense, srv_profiles, srv_audit;
  srv->add_option("--defense", srv_defense, "defense config supplying population, whitelist and guardrail config")
      ->check(CLI::ExistingFile);
  srv->add_option("--profiles", srv_profiles, "profile store (JSON array or population file)")
      ->check(CLI::ExistingFile);
  srv->add_option("--audit-dir", srv_audit, "append-only per-session audit logs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*score) {
      const auto t = load_task(score_config);
      auto task = make_toy_task(t.task);
      if (!score_model.empty()) task.model = load_model(score_model);
      SensitivityReport report;
      const auto mask = score_and_mask(task.model, task.forget, t.unlearn, &report);
      write_text_file(export_heatmap(report), score_out / "sensitivity.csv");
      write_json_file(mask_to_json(mask, task.model), score_out / "mask.json");
      std::cout << "report_hash " << mask.report_hash << "\n";
    } else if (*train) {
      const auto t = load_task(train_config);
      auto task = make_toy_task(t.task);
      SensitivityReport report;
      const NeuronMask mask = train_mask.empty() ? score_and_mask(task.model, task.forget, t.unlearn, &report)
                                                 : mask_from_json(read_json_file(train_mask), task.model);
      AdaptedModel adapted(task.model, mask);
      const auto log = train_frmu(adapted, task.forget, task.retain, t.unlearn);
      save_model(adapted.backbone(), train_out / "backbone.json");
      write_json_file(adapters_to_json(adapted.backbone(), adapted.adapters()), train_out / "adapters.json");
      write_json_file(mask_to_json(mask, task.model), train_out / "mask.json");
      if (train_mask.empty()) write_text_file(export_heatmap(report), train_out / "sensitivity.csv");
      write_text_file(training_log_csv(log), train_out / "training_log.csv");
      const auto frozen_hash = parameter_hash(adapted.backbone());
      const auto merged = AdaptedModel::from_parts(adapted.backbone(), adapted.adapters()).finalize();
      const auto metrics = evaluate_unlearning(task.model, merged, task.forget, task.retain);
      auto mj = metrics_to_json(metrics);
      mj["status"] = to_string(log.status);
      mj["steps"] = log.steps.size();
      mj["frozen_parameter_hash"] = frozen_hash;
      if (!log.diagnostic.empty()) mj["diagnostic"] = log.diagnostic;
      write_json_file(mj, train_out / "metrics.json");
      write_text_file(feature_dump_csv(metrics), train_out / "features.csv");
      std::cout << "status " << to_string(log.status) << " steps " << log.steps.size() << " forget_cosine "
                << metrics.forget_cosine << " retain_cosine " << metrics.retain_cosine << "\n";
      if (log.status == TrainingStatus::aborted) {
        std::cerr << "error: training aborted: " << log.diagnostic << "\n";
        return 2;
      }
    } else if (*fin) {
      const auto backbone = load_model(fin_checkpoint / "backbone.json");
      auto adapters = adapters_from_json(backbone, read_json_file(fin_checkpoint / "adapters.json"));
      auto adapted = AdaptedModel::from_parts(backbone, std::move(adapters));
      const auto merged = adapted.finalize();
      save_model(merged, fin_out);
      std::cout << "parameter_hash " << parameter_hash(merged) << "\n";
    } else if (*cal) {
      std::vector<EmbeddingPair> genuine, impostor;
      if (cal_synthetic > 0) {
        const SyntheticEmbeddingProvider provider(16, cal_seed);
        const std::size_t ids = std::max<std::size_t>(2, cal_synthetic / 4);
        for (std::size_t i = 0; i < cal_synthetic; ++i) {
          const std::string a = "person-" + std::to_string(i % ids);
          const std::string b = "person-" + std::to_string((i + 1) % ids);
          genuine.push_back({provider.embed(a, 0.3, cal_seed * 7919 + 2 * i), provider.embed(a, 0.0, 0)});
          impostor.push_back({provider.embed(b, 0.3, cal_seed * 7919 + 2 * i + 1), provider.embed(a, 0.0, 0)});
        }
        if (!cal_emit.empty()) {
          write_json_file(pairs_to_json(genuine), cal_emit / "genuine.json");
          write_json_file(pairs_to_json(impostor), cal_emit / "impostor.json");
        }
      } else {
        if (cal_genuine.empty() || cal_impostor.empty())
          throw ConfigError("calibrate-acl needs --genuine and --impostor, or --synthetic");
        genuine = pairs_from_json(read_json_file(cal_genuine));
        impostor = pairs_from_json(read_json_file(cal_impostor));
      }
      const auto gs = pair_similarities(genuine);
      const auto is = pair_similarities(impostor);
      // decision latency measured on the genuine probes against their references
      std::vector<EnrollmentEntry> entries;
      std::vector<double> latency_ms;
      for (std::size_t i = 0; i < genuine.size(); ++i) entries.emplace_back("ref-" + std::to_string(i), genuine[i].reference);
      const auto whitelist = enroll(entries);
      for (const auto& p : genuine) latency_ms.push_back(decide(p.probe, whitelist, 0.0).latency_us / 1000.0);
      auto c = sweep_far_frr(gs, is, default_threshold_grid(cal_points));
      const auto outcome = calibrate_threshold(c, cal_lambda, latency_ms, cal_lmax);
      write_text_file(calibration_csv(c), cal_out / "calibration.csv");
      write_json_file(calibration_summary(c), cal_out / "summary.json");
      if (!outcome.feasible) {
        std::cerr << "error: latency P90 " << outcome.latency_p90_ms << " ms exceeds budget " << cal_lmax << " ms\n";
        return 3;
      }
      std::cout << "tau_star " << *outcome.tau << " objective " << outcome.objective << "\n";
    } else if (*pipe) {
      const auto scenarios = load_scenarios(pipe_scenarios);
      const auto config = load_defense_config(pipe_defense);
      const std::vector<std::uint64_t> seeds{pipe_seed};
      const auto out = run_pipeline(scenarios, config, seeds, pipe_workers);
      const auto emitted = emit_report(out.report, pipe_out);
      write_transcripts(out, pipe_out);
      write_json_file(population_to_json(load_artifacts(config).population), pipe_out / "population.json");
      std::cout << "report_hash " << emitted.report_hash << " leakage " << out.report.leakage_count << "\n";
    } else if (*abl) {
      const auto scenarios = load_scenarios(abl_scenarios);
      const auto config = load_defense_config(abl_defense);
      const auto seeds = parse_seeds(abl_seeds);
      std::vector<AblationCondition> conditions;
      if (abl_conditions.empty()) {
        conditions.assign(std::begin(kAblationConditions), std::end(kAblationConditions));
      } else {
        std::stringstream in(abl_conditions);
        std::string item;
        while (std::getline(in, item, ',')) conditions.push_back(parse_condition(item));
      }
      const auto out = run_ablation(scenarios, config, conditions, seeds, abl_workers);
      const auto emitted = emit_report(out.report, abl_out);
      write_transcripts(out, abl_out);
      for (const auto& row : out.report.ablation)
        std::cout << row.condition << " " << format_mean_sd(row.mean, row.sigma) << " leakage " << row.leakage
                  << "\n";
      for (const auto& w : out.report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "report_hash " << emitted.report_hash << "\n";
    } else if (*srv) {
      ServiceConfig sc;
      if (!srv_defense.empty()) {
        const auto config = load_defense_config(srv_defense);
        const auto artifacts = load_artifacts(config);
        sc.guardrail = config.guardrail;
        sc.profiles = artifacts.population.profiles;
        sc.whitelist = artifacts.whitelist;
        sc.acl_tau = artifacts.acl_tau;
      }
      if (!srv_profiles.empty()) sc.profiles = load_profiles(srv_profiles);
      if (sc.profiles.empty()) throw ConfigError("serve needs --defense or --profiles");
      if (!srv_audit.empty()) sc.audit_dir = srv_audit;
      Service service(std::move(sc));
      const auto [host, port] = bind_address_from_env();
      std::cout << "listening on " << host << ":" << port << std::endl;
      serve_http(service, host, port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
