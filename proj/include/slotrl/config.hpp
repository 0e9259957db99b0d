#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slotrl/agent.hpp"

namespace slotrl {

struct RunConfig {
  std::string task = "navigation5x5";
  std::uint64_t seed = 0;
  std::int64_t total_steps = 150000;
  int parallel_envs = 16;
  int eval_interval = 2000;
  int eval_episodes = 30;
  std::string out_dir = "run_out";
  double stop_at_success = 0.0;  // 0 disables early stopping
  int workers = 2;               // forward-bulk worker threads (bit-stable)
  AgentConfig agent;

  void validate() const;
  std::string canonical_text() const;  // reparseable key=value dump
  std::uint64_t hash() const;
};

// Flat `key = value` text, '#' comments. Unknown keys are config errors.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key_equals_value);

}  // namespace slotrl
