// member: prep / train / eval / analyze / gradcheck / synth

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "member/member.hpp"

namespace {

member::RunConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  member::RunConfig cfg = path.empty() ? member::RunConfig{} : member::load_config(path);
  if (seed) cfg.train.seed = *seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-behavior recommendation with visited/unvisited experts"};
  app.require_subcommand(1);

  std::string config_path, out_dir, model, protocols, ks, raw, bundle, checkpoint;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> reports;
  bool oracle = false, sabotage = false;
  std::string precision;

  auto* prep = app.add_subcommand("prep", "ingest a raw log and write a dataset bundle");
  prep->add_option("raw", raw, "raw interaction file")->required();
  prep->add_option("--config", config_path);
  prep->add_option("--seed", seed);
  prep->add_option("--out", out_dir)->required();

  auto* train = app.add_subcommand("train", "fit a model on a bundle");
  train->add_option("bundle", bundle)->required();
  train->add_option("--config", config_path);
  train->add_option("--seed", seed);
  train->add_option("--model", model);
  train->add_option("--out", out_dir)->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test pairs");
  eval->add_option("bundle", bundle)->required();
  eval->add_option("checkpoint", checkpoint);
  eval->add_option("--config", config_path);
  eval->add_option("--seed", seed);
  eval->add_option("--protocol", protocols, "comma list of standard,visited,unvisited");
  eval->add_option("--k", ks, "comma list of cutoffs");
  eval->add_option("--out", out_dir)->required();
  eval->add_flag("--oracle", oracle, "debug scorer placing each held-out item first");

  auto* analyze = app.add_subcommand("analyze", "visited/unvisited gap summary over eval reports");
  analyze->add_option("reports", reports)->required();
  analyze->add_option("--out", out_dir)->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
  gradcheck->add_option("--config", config_path);
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--precision", precision, "single or double");
  gradcheck->add_flag("--sabotage", sabotage, "flip one analytic gradient sign (negative control)");

  member::FunnelConfig funnel;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a planted-cluster funnel log");
  synth->add_option("--users", funnel.num_users);
  synth->add_option("--items", funnel.num_items);
  synth->add_option("--clicks", funnel.clicks_per_user);
  synth->add_option("--seed", funnel.seed);
  synth->add_option("--out", synth_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : member::kExitConfig;
  }

  try {
    if (*prep) {
      member::cmd_prep(raw, load(config_path, seed), out_dir);
    } else if (*train) {
      auto cfg = load(config_path, seed);
      if (!model.empty()) cfg.model = member::parse_model_kind(model);
      cfg.validate();
      const auto outcome = member::cmd_train(bundle, cfg, out_dir);
      std::cerr << "trained " << outcome.epochs << " epochs";
      if (outcome.best_val_hr10) std::cerr << ", best validation HR@10 " << *outcome.best_val_hr10;
      std::cerr << '\n';
    } else if (*eval) {
      auto cfg = load(config_path, seed);
      if (!protocols.empty()) cfg.protocols = member::parse_protocols(protocols);
      if (!ks.empty()) cfg.ks = member::parse_ks(ks);
      cfg.validate();
      std::optional<std::string> ckpt;
      if (!checkpoint.empty()) ckpt = checkpoint;
      member::cmd_eval(bundle, ckpt, cfg, out_dir, oracle);
    } else if (*analyze) {
      const auto gap = member::cmd_analyze(reports, out_dir);
      std::cout << member::to_json(gap).dump(2) << '\n';
    } else if (*gradcheck) {
      auto cfg = load(config_path, seed);
      if (precision == "single") cfg.train.precision = member::Precision::single;
      else if (precision == "double") cfg.train.precision = member::Precision::double_;
      else if (!precision.empty()) throw member::ConfigError("--precision must be single or double");
      return member::cmd_gradcheck(cfg, sabotage);
    } else if (*synth) {
      member::cmd_synth(funnel, synth_out);
    }
  } catch (const member::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return member::exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return member::kExitIo;
  }
  return member::kExitOk;
}
