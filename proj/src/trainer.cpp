#include "slotrl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace slotrl {

namespace {

Action random_action(const TaskSpec& spec, Rng& rng) {
  const ActionSpace space = spec.action_space();
  if (space.discrete) return Action::index(static_cast<int>(rng.below(space.count)));
  std::vector<double> a(space.dim);
  for (auto& v : a) v = rng.uniform(space.low, space.high);
  return Action::move(std::move(a));
}

}  // namespace

EpisodeResult rollout_episode(GridState state, const PolicyFn& policy) {
  EpisodeResult out;
  for (;;) {
    const Action a = policy(encode(state));
    StepResult res = step(state, a);
    out.episode_return += res.reward;
    ++out.steps;
    state = std::move(res.next);
    if (res.done) break;
  }
  out.success = task_complete(state);
  return out;
}

EvalResult evaluate_policy(const TaskSpec& spec, const PolicyFn& policy, int episodes,
                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> returns;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    EpisodeResult r = rollout_episode(reset(spec, rng.next_u64()), policy);
    returns.push_back(r.episode_return);
    successes += r.success ? 1 : 0;
  }
  EvalResult out;
  for (double r : returns) out.return_mean += r;
  out.return_mean /= returns.size();
  double var = 0.0;
  for (double r : returns) var += (r - out.return_mean) * (r - out.return_mean);
  out.return_std = std::sqrt(var / returns.size());
  out.success_rate = static_cast<double>(successes) / episodes;
  return out;
}

EvalResult evaluate_agent(Agent& agent, int episodes, std::uint64_t seed) {
  Rng unused(0);
  return evaluate_policy(
      agent.task(),
      [&](const FactoredState& z) {
        return agent.select_action(z, PolicyMode::deterministic, unused);
      },
      episodes, seed);
}

EvalResult evaluate_checkpoint(const std::string& path, const std::string& task, int episodes,
                               std::uint64_t seed) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (!task.empty() && task != ck.task_name)
    throw std::invalid_argument("evaluate: checkpoint holds task '" + ck.task_name +
                                "', requested '" + task + "'");
  return evaluate_agent(*ck.agent, episodes, seed);
}

TrainResult train(const RunConfig& cfg) {
  cfg.validate();
  set_compute_threads(cfg.workers);
  const TaskSpec spec = TaskSpec::named(cfg.task);
  try {
    std::filesystem::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/metrics.csv", metrics_csv({}));
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: output directory '" + cfg.out_dir +
                                "' is not writable (" + e.what() + ")");
  }
  const std::string csv_path = cfg.out_dir + "/metrics.csv";
  const std::string jsonl_path = cfg.out_dir + "/metrics.jsonl";
  const std::string ckpt_path = cfg.out_dir + "/checkpoint.bin";

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  Rng master(cfg.seed);
  Rng init_rng = master.split(1);
  Rng action_rng = master.split(2);
  Rng update_rng = master.split(4);
  Rng prefill_rng = master.split(6);
  Rng eval_root = master.split(5);

  Agent agent(spec, cfg.agent, init_rng);
  ReplayBuffer replay(1000000);

  const int P = cfg.parallel_envs;
  std::vector<Rng> env_rngs;
  std::vector<GridState> envs;
  for (int i = 0; i < P; ++i) {
    env_rngs.push_back(master.split(100 + i));
    envs.push_back(reset(spec, env_rngs[i].next_u64()));
  }

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  std::int64_t steps = 0;
  double update_budget = 0.0;
  std::int64_t next_eval = cfg.eval_interval;
  int eval_index = 0;

  UpdateMetrics acc;
  std::int64_t acc_count = 0;

  auto step_env = [&](int i, const Action& a) {
    StepResult res = step(envs[i], a);
    TransitionRecord rec;
    rec.z = encode(envs[i]);
    rec.action = a;
    rec.reward = res.reward;
    rec.z_next = encode(res.next);
    rec.done = res.done;
    replay.push(std::move(rec));
    envs[i] = res.done ? reset(spec, env_rngs[i].next_u64()) : std::move(res.next);
  };

  auto emit_row = [&](std::int64_t at_step) {
    EvalResult ev = evaluate_agent(agent, cfg.eval_episodes, eval_root.split(eval_index).seed());
    ++eval_index;
    MetricsRow row;
    row.env_step = at_step;
    row.return_mean = ev.return_mean;
    row.return_std = ev.return_std;
    row.success_rate = ev.success_rate;
    const double n = acc_count > 0 ? static_cast<double>(acc_count) : 1.0;
    row.loss_world_model = acc.world_loss / n;
    row.loss_critic = acc.critic_loss / n;
    row.loss_actor = acc.actor_loss / n;
    row.loss_temperature = acc.temperature_loss / n;
    row.alpha = agent.alpha();
    row.entropy = acc_count > 0 ? acc.entropy / n : 0.0;
    row.wall_clock_seconds = elapsed();
    acc = UpdateMetrics{};
    acc_count = 0;
    result.rows.push_back(row);
    write_file(csv_path, metrics_csv(result.rows));
    write_file(jsonl_path, metrics_jsonl(result.rows));
    save_checkpoint(ckpt_path, agent, cfg, master);
    std::printf("step %lld  return %.3f +- %.3f  success %.2f  alpha %.4f\n",
                static_cast<long long>(row.env_step), row.return_mean, row.return_std,
                row.success_rate, row.alpha);
    std::fflush(stdout);
    return ev;
  };

  bool stopped_early = false;
  while (steps < cfg.total_steps && !stopped_early) {
    const bool prefilling = steps < cfg.agent.prefill;
    if (prefilling) {
      for (int i = 0; i < P && steps < cfg.total_steps; ++i) {
        step_env(i, random_action(spec, prefill_rng));
        ++steps;
      }
    } else {
      std::vector<FactoredState> zs;
      zs.reserve(P);
      for (int i = 0; i < P; ++i) zs.push_back(encode(envs[i]));
      std::vector<Action> actions = agent.select_actions(zs, PolicyMode::stochastic, action_rng);
      for (int i = 0; i < P && steps < cfg.total_steps; ++i) {
        step_env(i, actions[i]);
        ++steps;
      }
      update_budget += static_cast<double>(P) * cfg.agent.update_ratio;
      while (update_budget >= 1.0 &&
             replay.size() >= static_cast<std::size_t>(cfg.agent.batch_size)) {
        update_budget -= 1.0;
        UpdateMetrics m;
        try {
          m = agent.update(replay, update_rng);
        } catch (const std::runtime_error& e) {
          save_checkpoint(cfg.out_dir + "/diagnostic_checkpoint.bin", agent, cfg, master);
          throw TrainAbort(std::string(e.what()) + " (diagnostic checkpoint written)");
        }
        acc.world_loss += m.world_loss;
        acc.critic_loss += m.critic_loss;
        acc.actor_loss += m.actor_loss;
        acc.temperature_loss += m.temperature_loss;
        acc.entropy += m.entropy;
        ++acc_count;
      }
    }

    if (steps >= next_eval) {
      EvalResult ev = emit_row(steps);
      while (next_eval <= steps) next_eval += cfg.eval_interval;
      if (cfg.stop_at_success > 0.0 && ev.success_rate >= cfg.stop_at_success) {
        stopped_early = true;
        result.reached_stop_success = true;
      }
    }
  }

  if (result.rows.empty() || result.rows.back().env_step != steps) emit_row(steps);
  result.env_steps = steps;
  return result;
}

}  // namespace slotrl
