#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slotrl/agent.hpp"
#include "slotrl/checkpoint.hpp"
#include "slotrl/config.hpp"
#include "slotrl/metrics.hpp"

namespace slotrl {

using PolicyFn = std::function<Action(const FactoredState&)>;

struct EpisodeResult {
  double episode_return = 0.0;
  bool success = false;
  int steps = 0;
};

struct EvalResult {
  double return_mean = 0.0;
  double return_std = 0.0;
  double success_rate = 0.0;
};

// Thrown when training aborts mid-run (a diagnostic checkpoint is written
// first); the CLI maps it to exit code 2.
struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

EpisodeResult rollout_episode(GridState state, const PolicyFn& policy);

EvalResult evaluate_policy(const TaskSpec& spec, const PolicyFn& policy, int episodes,
                           std::uint64_t seed);
// Deterministic-mode policy rollouts.
EvalResult evaluate_agent(Agent& agent, int episodes, std::uint64_t seed);
EvalResult evaluate_checkpoint(const std::string& path, const std::string& task, int episodes,
                               std::uint64_t seed);

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::string checkpoint_path;
  std::int64_t env_steps = 0;
  bool reached_stop_success = false;
};

TrainResult train(const RunConfig& cfg);

}  // namespace slotrl
