#include "slotrl/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slotrl {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value '" + v + "' for " + key);
  }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::int64_t i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer value '" + v + "' for " + key);
  }
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  AgentConfig& a = cfg.agent;
  if (key == "task") cfg.task = value;
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "total_steps") cfg.total_steps = to_int(key, value);
  else if (key == "parallel_envs") cfg.parallel_envs = static_cast<int>(to_int(key, value));
  else if (key == "eval_interval") cfg.eval_interval = static_cast<int>(to_int(key, value));
  else if (key == "eval_episodes") cfg.eval_episodes = static_cast<int>(to_int(key, value));
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "stop_at_success") cfg.stop_at_success = to_double(key, value);
  else if (key == "workers") cfg.workers = static_cast<int>(to_int(key, value));
  else if (key == "agent.gamma") a.gamma = to_double(key, value);
  else if (key == "agent.tau") a.tau = to_double(key, value);
  else if (key == "agent.target_entropy") a.target_entropy = to_double(key, value);
  else if (key == "agent.beta_t") a.beta_t = to_double(key, value);
  else if (key == "agent.beta_r") a.beta_r = to_double(key, value);
  else if (key == "agent.lr_world") a.lr_world = to_double(key, value);
  else if (key == "agent.lr_critic") a.lr_critic = to_double(key, value);
  else if (key == "agent.lr_actor") a.lr_actor = to_double(key, value);
  else if (key == "agent.lr_alpha") a.lr_alpha = to_double(key, value);
  else if (key == "agent.critic_mode") a.critic_mode = critic_mode_from(value);
  else if (key == "agent.batch_size") a.batch_size = static_cast<int>(to_int(key, value));
  else if (key == "agent.update_ratio") a.update_ratio = to_double(key, value);
  else if (key == "agent.hidden_width") a.hidden_width = static_cast<int>(to_int(key, value));
  else if (key == "agent.prefill") a.prefill = static_cast<int>(to_int(key, value));
  else if (key == "agent.alpha_init") a.alpha_init = to_double(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  TaskSpec::named(task);  // throws for unknown names
  if (total_steps < 0) throw std::invalid_argument("config: total_steps < 0");
  if (parallel_envs < 1) throw std::invalid_argument("config: parallel_envs < 1");
  if (eval_interval < 1) throw std::invalid_argument("config: eval_interval < 1");
  if (eval_episodes < 1) throw std::invalid_argument("config: eval_episodes < 1");
  if (agent.batch_size < 1) throw std::invalid_argument("config: agent.batch_size < 1");
  if (agent.hidden_width < 1) throw std::invalid_argument("config: agent.hidden_width < 1");
  if (agent.prefill < 0) throw std::invalid_argument("config: agent.prefill < 0");
  if (agent.update_ratio < 0.0) throw std::invalid_argument("config: agent.update_ratio < 0");
  if (agent.tau < 0.0 || agent.tau > 1.0)
    throw std::invalid_argument("config: agent.tau outside [0,1]");
  if (agent.gamma < 0.0 || agent.gamma > 1.0)
    throw std::invalid_argument("config: agent.gamma outside [0,1]");
  if (out_dir.empty()) throw std::invalid_argument("config: out_dir empty");
  if (workers < 1) throw std::invalid_argument("config: workers < 1");
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os << "task = " << task << "\n";
  os << "seed = " << seed << "\n";
  os << "total_steps = " << total_steps << "\n";
  os << "parallel_envs = " << parallel_envs << "\n";
  os << "eval_interval = " << eval_interval << "\n";
  os << "eval_episodes = " << eval_episodes << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "stop_at_success = " << fmt(stop_at_success) << "\n";
  os << "workers = " << workers << "\n";
  os << "agent.gamma = " << fmt(agent.gamma) << "\n";
  os << "agent.tau = " << fmt(agent.tau) << "\n";
  os << "agent.target_entropy = " << fmt(agent.target_entropy) << "\n";
  os << "agent.beta_t = " << fmt(agent.beta_t) << "\n";
  os << "agent.beta_r = " << fmt(agent.beta_r) << "\n";
  os << "agent.lr_world = " << fmt(agent.lr_world) << "\n";
  os << "agent.lr_critic = " << fmt(agent.lr_critic) << "\n";
  os << "agent.lr_actor = " << fmt(agent.lr_actor) << "\n";
  os << "agent.lr_alpha = " << fmt(agent.lr_alpha) << "\n";
  os << "agent.critic_mode = " << critic_mode_name(agent.critic_mode) << "\n";
  os << "agent.batch_size = " << agent.batch_size << "\n";
  os << "agent.update_ratio = " << fmt(agent.update_ratio) << "\n";
  os << "agent.hidden_width = " << agent.hidden_width << "\n";
  os << "agent.prefill = " << agent.prefill << "\n";
  os << "agent.alpha_init = " << fmt(agent.alpha_init) << "\n";
  return os.str();
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : canonical_text()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config: empty key on line " +
                                                 std::to_string(lineno));
    set_key(cfg, key, value);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& key_equals_value) {
  const auto eq = key_equals_value.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("--set expects key=value, got '" + key_equals_value + "'");
  std::string key = trim(key_equals_value.substr(0, eq));
  std::string value = trim(key_equals_value.substr(eq + 1));
  set_key(cfg, key, value);
}

}  // namespace slotrl
