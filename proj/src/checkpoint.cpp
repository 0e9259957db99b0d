#include "slotrl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace slotrl {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'R', 'L', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& is) {
  const auto n = take<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor take_tensor(std::istream& is) {
  const auto rank = take<std::uint32_t>(is);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(take<std::uint64_t>(is));
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return t;
}

void put_store(std::ostream& os, const ParamStore& store) {
  put<std::uint64_t>(os, store.size());
  for (const auto& [name, tensor] : store) {
    put_string(os, name);
    put_tensor(os, tensor);
  }
}

void load_store(std::istream& is, ParamStore& store) {
  const auto count = take<std::uint64_t>(is);
  if (count != store.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (file " +
                             std::to_string(count) + ", model " + std::to_string(store.size()) +
                             ")");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = take_string(is);
    Tensor t = take_tensor(is);
    if (!store.contains(name))
      throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
    Tensor& dst = store.get(name);
    if (!dst.same_shape(t))
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    dst = std::move(t);
  }
}

void put_adam(std::ostream& os, const Adam& opt) {
  put<std::int64_t>(os, opt.step_count());
  std::uint64_t with_moments = 0;
  for (const auto& name : opt.param_names())
    if (opt.has_moments(name)) ++with_moments;
  put<std::uint64_t>(os, with_moments);
  for (const auto& name : opt.param_names()) {
    if (!opt.has_moments(name)) continue;
    put_string(os, name);
    put_tensor(os, opt.first_moment(name));
    put_tensor(os, opt.second_moment(name));
  }
}

void load_adam(std::istream& is, Adam& opt) {
  opt.set_step_count(take<std::int64_t>(is));
  const auto count = take<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = take_string(is);
    Tensor m = take_tensor(is);
    Tensor v = take_tensor(is);
    opt.set_moments(name, std::move(m), std::move(v));
  }
}

void put_agent_config(std::ostream& os, const AgentConfig& a) {
  put(os, a.gamma);
  put(os, a.tau);
  put(os, a.target_entropy);
  put(os, a.beta_t);
  put(os, a.beta_r);
  put(os, a.lr_world);
  put(os, a.lr_critic);
  put(os, a.lr_actor);
  put(os, a.lr_alpha);
  put<std::uint8_t>(os, a.critic_mode == CriticMode::composed ? 0 : 1);
  put<std::int32_t>(os, a.batch_size);
  put(os, a.update_ratio);
  put<std::int32_t>(os, a.hidden_width);
  put<std::int32_t>(os, a.prefill);
  put(os, a.alpha_init);
}

AgentConfig take_agent_config(std::istream& is) {
  AgentConfig a;
  a.gamma = take<double>(is);
  a.tau = take<double>(is);
  a.target_entropy = take<double>(is);
  a.beta_t = take<double>(is);
  a.beta_r = take<double>(is);
  a.lr_world = take<double>(is);
  a.lr_critic = take<double>(is);
  a.lr_actor = take<double>(is);
  a.lr_alpha = take<double>(is);
  a.critic_mode = take<std::uint8_t>(is) == 0 ? CriticMode::composed : CriticMode::direct;
  a.batch_size = take<std::int32_t>(is);
  a.update_ratio = take<double>(is);
  a.hidden_width = take<std::int32_t>(is);
  a.prefill = take<std::int32_t>(is);
  a.alpha_init = take<double>(is);
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const Agent& agent, const RunConfig& cfg,
                     const Rng& master_rng) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put<std::uint64_t>(os, cfg.hash());
  put_string(os, agent.task().name());
  put_agent_config(os, agent.config());
  put<std::uint64_t>(os, master_rng.seed());
  put<std::uint64_t>(os, master_rng.counter());
  put_store(os, agent.params());
  put_store(os, agent.target_params());
  Agent& mut = const_cast<Agent&>(agent);
  put_adam(os, mut.world_optimizer());
  put_adam(os, mut.critic_optimizer());
  put_adam(os, mut.actor_optimizer());
  put_adam(os, mut.alpha_optimizer());
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = take<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  LoadedCheckpoint out;
  out.config_hash = take<std::uint64_t>(is);
  out.task_name = take_string(is);
  out.agent_config = take_agent_config(is);
  out.rng_seed = take<std::uint64_t>(is);
  out.rng_counter = take<std::uint64_t>(is);

  const TaskSpec spec = TaskSpec::named(out.task_name);
  Rng scratch(0);
  out.agent = std::make_unique<Agent>(spec, out.agent_config, scratch);
  load_store(is, out.agent->params());
  load_store(is, out.agent->target_params());
  load_adam(is, out.agent->world_optimizer());
  load_adam(is, out.agent->critic_optimizer());
  load_adam(is, out.agent->actor_optimizer());
  load_adam(is, out.agent->alpha_optimizer());
  return out;
}

}  // namespace slotrl
