#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "slotrl/gradcheck.hpp"
#include "slotrl/trainer.hpp"

namespace {

int cmd_train(const std::string& config_path, const std::string& task, long long seed,
              const std::string& out_dir, const std::vector<std::string>& overrides) {
  slotrl::RunConfig cfg;
  if (!config_path.empty()) cfg = slotrl::load_config_file(config_path);
  if (!task.empty()) cfg.task = task;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  for (const auto& kv : overrides) slotrl::apply_override(cfg, kv);
  cfg.validate();

  slotrl::TrainResult res = slotrl::train(cfg);
  std::printf("done: %lld env steps, %zu metric rows, checkpoint %s\n",
              static_cast<long long>(res.env_steps), res.rows.size(),
              res.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& task, int episodes,
             long long seed) {
  slotrl::EvalResult ev = slotrl::evaluate_checkpoint(checkpoint, task, episodes,
                                                      static_cast<std::uint64_t>(seed));
  std::printf("episodes %d  return %.4f +- %.4f  success %.4f\n", episodes, ev.return_mean,
              ev.return_std, ev.success_rate);
  return 0;
}

int cmd_oracle_check(const std::string& kind, int side, int objects) {
  slotrl::TaskSpec spec;
  spec.kind = kind == "pushing_no_agent" ? slotrl::TaskKind::pushing_no_agent
                                         : slotrl::TaskKind::navigation;
  spec.side = side;
  spec.object_count = objects;
  spec.max_steps = 100;
  slotrl::OracleCheckResult res = slotrl::cross_check_transitions(spec);
  std::printf("%s %dx%d, %d objects: %zu (state, action) pairs, %zu mismatches\n",
              kind.c_str(), side, side, objects, res.pairs, res.mismatches);
  if (res.mismatches) {
    std::printf("first mismatch: %s\n", res.first_mismatch.c_str());
    return 2;
  }
  std::printf("oracle check passed\n");
  return 0;
}

int cmd_grad_check(int instances, long long seed) {
  const double worst =
      slotrl::run_gradient_suite(instances, static_cast<std::uint64_t>(seed), true);
  std::printf("worst relative error %.3e (tolerance 1e-4)\n", worst);
  if (worst > 1e-4) {
    std::printf("grad check FAILED\n");
    return 2;
  }
  std::printf("grad check passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-centric model-based soft actor-critic over factored states"};
  app.require_subcommand(1);

  std::string config_path, task, out_dir, checkpoint;
  long long seed = -1;
  std::vector<std::string> overrides;
  int episodes = 30;
  int side = 3, objects = 2, instances = 20;
  std::string oracle_kind = "navigation";
  long long eval_seed = 0, gc_seed = 17;

  CLI::App* train = app.add_subcommand("train", "Train an agent");
  train->add_option("--config", config_path, "Config file (key = value lines)");
  train->add_option("--task", task, "Task name override");
  train->add_option("--seed", seed, "Seed override");
  train->add_option("--out", out_dir, "Output directory override");
  train->add_option("--set", overrides, "key=value overrides")->take_all();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval->add_option("--task", task, "Expected task name");
  eval->add_option("--episodes", episodes, "Evaluation episodes");
  eval->add_option("--seed", eval_seed, "Evaluation seed");

  CLI::App* oracle = app.add_subcommand("env-oracle-check",
                                        "Cross-check step() against the transition table");
  oracle->add_option("--kind", oracle_kind, "navigation or pushing_no_agent");
  oracle->add_option("--side", side, "Grid side length");
  oracle->add_option("--objects", objects, "Object count including the target");

  CLI::App* grad = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  grad->add_option("--instances", instances, "Randomized instances per family");
  grad->add_option("--seed", gc_seed, "Suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(train))
      return cmd_train(config_path, task, seed, out_dir, overrides);
    if (app.got_subcommand(eval)) return cmd_eval(checkpoint, task, episodes, eval_seed);
    if (app.got_subcommand(oracle)) return cmd_oracle_check(oracle_kind, side, objects);
    if (app.got_subcommand(grad)) return cmd_grad_check(instances, gc_seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const slotrl::TrainAbort& e) {
    std::fprintf(stderr, "aborted: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
