#pragma once

#include <memory>
#include <string>

#include "slotrl/agent.hpp"
#include "slotrl/config.hpp"

namespace slotrl {

// Versioned binary container: named little-endian float64 parameter arrays
// for the online and target stores, the four optimizer states, the master
// rng state, and the run-config hash.
void save_checkpoint(const std::string& path, const Agent& agent, const RunConfig& cfg,
                     const Rng& master_rng);

struct LoadedCheckpoint {
  std::string task_name;
  AgentConfig agent_config;
  std::uint64_t config_hash = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::unique_ptr<Agent> agent;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace slotrl
