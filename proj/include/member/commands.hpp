#pragma once

// Pipeline commands behind the `member` executable. Each returns normally
// or throws a member::Error; exit_code() maps errors to the process status.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "member/baselines.hpp"
#include "member/bundle.hpp"
#include "member/checkpoint.hpp"
#include "member/config.hpp"
#include "member/evaluator.hpp"
#include "member/gradcheck.hpp"
#include "member/synthetic.hpp"
#include "member/trainer.hpp"

namespace member {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitNumeric = 3, kExitIo = 4 };

inline int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitIo;
}

inline void cmd_prep(const std::string& raw_path, const RunConfig& cfg, const fs::path& out) {
  const auto log = load_interactions(raw_path, Schema{cfg.behaviors});
  const auto split = split_leave_one_out(log, cfg.train.seed, cfg.validation);
  write_bundle(out, log, split);
}

struct TrainOutcome {
  std::size_t epochs = 0;
  std::optional<double> best_val_hr10;
};

// Writes checkpoint.mbrx (best validation state, or the final state when
// there is no validation), checkpoint_final.mbrx and train_log.jsonl.
inline TrainOutcome cmd_train(const fs::path& bundle, const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const auto split = read_bundle(bundle);
  if (split.train.behaviors != cfg.behaviors)
    throw ConfigError("config behaviors do not match the bundle's behaviors");
  const auto graphs = TrainingGraphs::build(split.train);
  const auto tc = cfg.resolved();

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create '" + out.string() + "': " + ec.message());
  std::ofstream log(out / "train_log.jsonl");
  if (!log) throw IoError("cannot write train_log.jsonl");
  auto on_epoch = [&](const EpochLog& e) { log << to_json(e).dump() << '\n' << std::flush; };

  TrainOutcome outcome;
  auto finish = [&](const Checkpoint& best, const Checkpoint& last, const std::vector<EpochLog>& rows) {
    write_checkpoint((out / "checkpoint.mbrx").string(), best);
    write_checkpoint((out / "checkpoint_final.mbrx").string(), last);
    outcome.epochs = rows.size();
    for (const auto& r : rows)
      if (r.val_hr10 && (!outcome.best_val_hr10 || *r.val_hr10 > *outcome.best_val_hr10))
        outcome.best_val_hr10 = r.val_hr10;
  };

  auto run = [&]<typename T>() {
    if (is_member_kind(cfg.model)) {
      const auto fit_result = fit<T>(split, graphs, tc, on_epoch);
      finish(to_checkpoint(fit_result.best, cfg.model, tc.layers), to_checkpoint(fit_result.final, cfg.model, tc.layers),
             fit_result.log);
    } else {
      const auto fit_result = baseline_fit<T>(baseline_kind(cfg.model), split, graphs, tc, on_epoch);
      finish(to_checkpoint(fit_result.best), to_checkpoint(fit_result.final), fit_result.log);
    }
  };
  if (tc.precision == Precision::double_)
    run.template operator()<double>();
  else
    run.template operator()<float>();
  return outcome;
}

// Scorer for a checkpoint. The returned ranker may reference `graphs`.
inline std::unique_ptr<RankingModel> load_ranker(const Checkpoint& ckpt, const TrainingGraphs& graphs,
                                                 const RunConfig& cfg) {
  if (ckpt.num_users != graphs.num_users || ckpt.num_items != graphs.num_items)
    throw DimensionError("checkpoint universe does not match the bundle");
  const std::string name(to_string(ckpt.kind));
  if (is_member_kind(ckpt.kind)) {
    const auto tc = cfg.resolved();
    const auto [v, u] = member_params<double>(ckpt, Lambdas{tc.lambda_visited, tc.lambda_unvisited});
    const PlanSet plans(graphs, static_cast<int>(ckpt.layers));
    const Gate gate = ckpt.kind == ModelKind::member_avg_gate ? Gate::average : Gate::hard;
    return std::make_unique<MemberRanker<double>>(encode(v, plans), encode(u, plans),
                                                  Lambdas{v.lambda, u.lambda}, graphs.visited, gate, name);
  }
  auto model = std::make_shared<BaselineModel<double>>(
      baseline_params<double>(ckpt), baseline_plan(baseline_kind(ckpt.kind), graphs, static_cast<int>(ckpt.layers)));
  return std::make_unique<FunctionRanker>(name, graphs.num_items,
                                          [model](Index u, std::span<double> out) { model->score_all(u, out); });
}

// Evaluates on the test pairs and writes eval.jsonl plus a text table on
// stdout. `oracle` replaces the checkpoint with the held-out-first scorer.
inline EvalReport cmd_eval(const fs::path& bundle, const std::optional<std::string>& checkpoint, const RunConfig& cfg,
                           const fs::path& out, bool oracle, std::ostream& table = std::cout) {
  cfg.validate();
  const auto split = read_bundle(bundle);
  const auto graphs = TrainingGraphs::build(split.train);
  std::unique_ptr<RankingModel> model;
  if (oracle) {
    model = std::make_unique<FunctionRanker>(oracle_ranker(split.test, graphs.num_items));
  } else {
    if (!checkpoint) throw ConfigError("eval needs a checkpoint unless --oracle is given");
    model = load_ranker(read_checkpoint(*checkpoint), graphs, cfg);
  }
  const auto report = evaluate(*model, split.test, graphs.buys(), graphs.visited, cfg.protocols, cfg.ks);
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream file(out / "eval.jsonl");
  if (!file) throw IoError("cannot write eval.jsonl");
  write_jsonl(file, report);
  write_table(table, report);
  for (const auto& n : report.notes) std::cerr << "note: " << n << '\n';
  return report;
}

inline GapSummary cmd_analyze(const std::vector<std::string>& reports, const fs::path& out) {
  std::vector<EvalReport> loaded;
  for (const auto& path : reports) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report '" + path + "'");
    loaded.push_back(read_jsonl(in));
  }
  const auto gap = gap_analysis(loaded, 10);
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream file(out / "gap.json");
  if (!file) throw IoError("cannot write gap.json");
  file << to_json(gap).dump(2) << '\n';
  return gap;
}

// Returns kExitOk when every term passes, kExitCheckFailed otherwise.
inline int cmd_gradcheck(const RunConfig& cfg, bool sabotage, std::ostream& out = std::cout) {
  GradcheckConfig gc;
  gc.seed = cfg.train.seed;
  gc.layers = cfg.train.layers;
  gc.precision = cfg.train.precision;
  gc.sabotage = sabotage;
  const auto report = run_gradcheck(gc);
  for (const auto term : kAllLossTerms) {
    double worst = 0.0;
    bool ok = true;
    for (const auto& r : report.results)
      if (r.term == term) worst = std::max(worst, r.max_rel_error), ok = ok && r.passed;
    out << (ok ? "PASS " : "FAIL ") << to_string(term) << " max_rel_error=" << worst << '\n';
  }
  out << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << report.tolerance << ")\n";
  return report.passed() ? kExitOk : kExitCheckFailed;
}

// Writes a planted-cluster funnel log as tab-separated text.
inline void cmd_synth(const FunnelConfig& fc, const std::string& path) {
  const auto log = generate_funnel(fc);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_interactions(out, log);
}

}  // namespace member
