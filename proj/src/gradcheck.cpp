#include "slotrl/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "slotrl/agent.hpp"
#include "slotrl/graph.hpp"

namespace slotrl {

FdResult fd_compare(const std::function<double()>& f, Tensor& t, const Tensor& analytic,
                    const std::string& label, double h, std::size_t max_elems, Rng& rng,
                    FdResult acc) {
  return fd_compare_at(f, nullptr, t, &analytic, label, h, max_elems, 1e-8, false, rng, acc);
}

FdResult fd_compare_at(const std::function<double()>& f,
                       const std::function<Tensor()>& grad_fn, Tensor& t,
                       const Tensor* analytic, const std::string& label, double h,
                       std::size_t max_elems, double denom_floor, bool shift_probe, Rng& rng,
                       FdResult acc) {
  const std::size_t n = t.size();
  const std::size_t count = std::min(max_elems, n);
  auto central = [&](std::size_t i, double step) {
    const double saved = t.data[i];
    t.data[i] = saved + step;
    const double fp = f();
    t.data[i] = saved - step;
    const double fm = f();
    t.data[i] = saved;
    return (fp - fm) / (2.0 * step);
  };
  for (std::size_t e = 0; e < count; ++e) {
    const std::size_t i = count == n ? e : rng.below(n);
    const double saved = t.data[i];
    double g;
    if (shift_probe) {
      // Move off any kink the value happens to sit on, then differentiate
      // at the shifted point.
      t.data[i] += (rng.below(2) ? 1.0 : -1.0) * rng.uniform(2e-4, 1e-3);
      g = grad_fn().data[i];
    } else {
      g = analytic->data[i];
    }
    const double fd1 = central(i, h);
    const double fd2 = central(i, h * 0.1);
    t.data[i] = saved;
    const double fd_gap = std::abs(fd1 - fd2) / std::max({std::abs(fd1), std::abs(fd2), 1e-8});
    if (fd_gap > 3e-5) {
      ++acc.skipped;
      continue;
    }
    // Richardson extrapolation cancels the h^2 truncation term.
    const double fd = (100.0 * fd2 - fd1) / 99.0;
    const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), denom_floor});
    ++acc.checked;
    if (rel > acc.max_rel_err) {
      acc.max_rel_err = rel;
      acc.worst = label + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) +
                  " grad=" + std::to_string(g);
    }
  }
  return acc;
}

namespace {

constexpr double kFdStep = 1e-5;

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Keeps elementwise kinks (relu, minimum) away from the FD step.
void separate_from(Tensor& t, const Tensor& other, double margin) {
  for (std::size_t i = 0; i < t.size(); ++i)
    while (std::abs(t.data[i] - other.data[i]) < margin) t.data[i] += 3.0 * margin;
}

struct Family {
  FdResult result;
  void absorb(const FdResult& r) {
    result.checked += r.checked;
    result.skipped += r.skipped;
    if (r.max_rel_err > result.max_rel_err) {
      result.max_rel_err = r.max_rel_err;
      result.worst = r.worst;
    }
  }
};

// Scalar probe of a primitive: loss = sum(out * fixed random weights).
struct PrimitiveCase {
  Graph g;
  Bindings b;
  NodeId loss = -1;
  std::vector<std::pair<std::string, Tensor>> inputs;

  double eval() {
    for (auto& [name, tensor] : inputs) b[name] = &tensor;
    return g.evaluate(loss, b).item();
  }
};

FdResult check_case(PrimitiveCase& c, const std::string& label, Rng& rng) {
  FdResult acc;
  const double before = c.eval();
  (void)before;
  GradMap grads;
  {
    std::vector<std::string> names;
    for (auto& [name, tensor] : c.inputs) names.push_back(name);
    grads = c.g.gradient(c.loss, names);
  }
  for (auto& [name, tensor] : c.inputs) {
    Tensor& t = tensor;
    acc = fd_compare([&] { return c.eval(); }, t, grads.at(name), label + "/" + name, kFdStep,
                     12, rng, acc);
  }
  return acc;
}

void report(const char* name, const Family& fam, bool verbose, double* worst) {
  if (verbose) {
    std::printf("[grad] %-18s max rel err %.3e over %zu probes (%zu unstable skipped)\n", name,
                fam.result.max_rel_err, fam.result.checked, fam.result.skipped);
    if (fam.result.max_rel_err > 1e-4)
      std::printf("        worst: %s\n", fam.result.worst.c_str());
  }
  if (fam.result.max_rel_err > *worst) *worst = fam.result.max_rel_err;
}

double check_primitives(int instances, Rng& rng, bool verbose) {
  double worst = 0.0;

  struct Spec {
    const char* name;
    std::function<void(PrimitiveCase&, Rng&)> build;
  };

  auto project = [](PrimitiveCase& c, NodeId out, Rng& rng) {
    Tensor w = random_tensor(c.g.shape_of(out), rng);
    c.loss = c.g.sum_all(c.g.mul(out, c.g.constant(std::move(w))));
  };

  std::vector<Spec> specs;
  specs.push_back({"matmul", [&](PrimitiveCase& c, Rng& r) {
                     NodeId a = c.g.input("x0", {3, 4});
                     NodeId b = c.g.input("x1", {4, 2});
                     c.inputs = {{"x0", random_tensor({3, 4}, r)},
                                 {"x1", random_tensor({4, 2}, r)}};
                     project(c, c.g.matmul(a, b), r);
                   }});
  specs.push_back({"add", [&](PrimitiveCase& c, Rng& r) {
                     NodeId a = c.g.input("x0", {3, 5});
                     NodeId b = c.g.input("x1", {3, 5});
                     c.inputs = {{"x0", random_tensor({3, 5}, r)},
                                 {"x1", random_tensor({3, 5}, r)}};
                     project(c, c.g.add(a, b), r);
                   }});
  specs.push_back({"sub", [&](PrimitiveCase& c, Rng& r) {
                     NodeId a = c.g.input("x0", {2, 6});
                     NodeId b = c.g.input("x1", {2, 6});
                     c.inputs = {{"x0", random_tensor({2, 6}, r)},
                                 {"x1", random_tensor({2, 6}, r)}};
                     project(c, c.g.sub(a, b), r);
                   }});
  specs.push_back({"mul", [&](PrimitiveCase& c, Rng& r) {
                     NodeId a = c.g.input("x0", {4, 3});
                     NodeId b = c.g.input("x1", {4, 3});
                     c.inputs = {{"x0", random_tensor({4, 3}, r)},
                                 {"x1", random_tensor({4, 3}, r)}};
                     project(c, c.g.mul(a, b), r);
                   }});
  specs.push_back({"minimum", [&](PrimitiveCase& c, Rng& r) {
                     NodeId a = c.g.input("x0", {4, 4});
                     NodeId b = c.g.input("x1", {4, 4});
                     Tensor t0 = random_tensor({4, 4}, r);
                     Tensor t1 = random_tensor({4, 4}, r);
                     separate_from(t1, t0, 1e-3);
                     c.inputs = {{"x0", std::move(t0)}, {"x1", std::move(t1)}};
                     project(c, c.g.minimum(a, b), r);
                   }});
  specs.push_back({"relu", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 7});
                     Tensor t = random_tensor({3, 7}, r);
                     separate_from(t, Tensor({3, 7}, 0.0), 1e-3);
                     c.inputs = {{"x0", std::move(t)}};
                     project(c, c.g.relu(x), r);
                   }});
  specs.push_back({"tanh", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {2, 5});
                     c.inputs = {{"x0", random_tensor({2, 5}, r)}};
                     project(c, c.g.tanh_(x), r);
                   }});
  specs.push_back({"exp", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {2, 5});
                     c.inputs = {{"x0", random_tensor({2, 5}, r, -1.5, 1.5)}};
                     project(c, c.g.exp_(x), r);
                   }});
  specs.push_back({"log", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {2, 5});
                     c.inputs = {{"x0", random_tensor({2, 5}, r, 0.2, 3.0)}};
                     project(c, c.g.log_(x), r);
                   }});
  specs.push_back({"square", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 3});
                     c.inputs = {{"x0", random_tensor({3, 3}, r)}};
                     project(c, c.g.square(x), r);
                   }});
  specs.push_back({"scale", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {2, 4});
                     c.inputs = {{"x0", random_tensor({2, 4}, r)}};
                     project(c, c.g.scale(x, -1.7), r);
                   }});
  specs.push_back({"add_scalar", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {2, 4});
                     c.inputs = {{"x0", random_tensor({2, 4}, r)}};
                     project(c, c.g.add_scalar(x, 0.37), r);
                   }});
  specs.push_back({"add_rowvec", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 4});
                     NodeId v = c.g.input("x1", {4});
                     c.inputs = {{"x0", random_tensor({3, 4}, r)},
                                 {"x1", random_tensor({4}, r)}};
                     project(c, c.g.add_rowvec(x, v), r);
                   }});
  specs.push_back({"mul_rowvec", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 4});
                     NodeId v = c.g.input("x1", {4});
                     c.inputs = {{"x0", random_tensor({3, 4}, r)},
                                 {"x1", random_tensor({4}, r)}};
                     project(c, c.g.mul_rowvec(x, v), r);
                   }});
  specs.push_back({"sum_axis", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 4});
                     c.inputs = {{"x0", random_tensor({3, 4}, r)}};
                     project(c, c.g.sum_axis(x, static_cast<int>(r.below(2))), r);
                   }});
  specs.push_back({"mean_axis", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {4, 3});
                     c.inputs = {{"x0", random_tensor({4, 3}, r)}};
                     project(c, c.g.mean_axis(x, static_cast<int>(r.below(2))), r);
                   }});
  specs.push_back({"sum_all", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 4});
                     c.inputs = {{"x0", random_tensor({3, 4}, r)}};
                     c.loss = c.g.sum_all(x);
                   }});
  specs.push_back({"mean_all", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 4});
                     c.inputs = {{"x0", random_tensor({3, 4}, r)}};
                     c.loss = c.g.mean_all(x);
                   }});
  specs.push_back({"softmax", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 5});
                     c.inputs = {{"x0", random_tensor({3, 5}, r)}};
                     project(c, c.g.softmax(x), r);
                   }});
  specs.push_back({"log_softmax", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 5});
                     c.inputs = {{"x0", random_tensor({3, 5}, r)}};
                     project(c, c.g.log_softmax(x), r);
                   }});
  specs.push_back({"layer_norm", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 6});
                     c.inputs = {{"x0", random_tensor({3, 6}, r)}};
                     project(c, c.g.layer_norm(x), r);
                   }});
  specs.push_back({"concat_cols", [&](PrimitiveCase& c, Rng& r) {
                     NodeId a = c.g.input("x0", {3, 2});
                     NodeId b = c.g.input("x1", {3, 4});
                     c.inputs = {{"x0", random_tensor({3, 2}, r)},
                                 {"x1", random_tensor({3, 4}, r)}};
                     project(c, c.g.concat_cols({a, b}), r);
                   }});
  specs.push_back({"slice_cols", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 6});
                     c.inputs = {{"x0", random_tensor({3, 6}, r)}};
                     project(c, c.g.slice_cols(x, 1, 3), r);
                   }});
  specs.push_back({"gather_rows", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {4, 3});
                     c.inputs = {{"x0", random_tensor({4, 3}, r)}};
                     project(c, c.g.gather_rows(x, {2, 0, 2, 3, 1}), r);
                   }});
  specs.push_back({"segment_sum_rows", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {6, 3});
                     c.inputs = {{"x0", random_tensor({6, 3}, r)}};
                     project(c, c.g.segment_sum_rows(x, {0, 1, 1, 2, 0, 2}, 3), r);
                   }});
  specs.push_back({"reshape", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 4});
                     c.inputs = {{"x0", random_tensor({3, 4}, r)}};
                     project(c, c.g.reshape(x, {6, 2}), r);
                   }});
  specs.push_back({"broadcast_scalar", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {});
                     c.inputs = {{"x0", random_tensor({}, r)}};
                     project(c, c.g.broadcast_scalar(x, {3, 4}), r);
                   }});
  specs.push_back({"clamp", [&](PrimitiveCase& c, Rng& r) {
                     NodeId x = c.g.input("x0", {3, 5});
                     Tensor t = random_tensor({3, 5}, r);
                     // keep away from the clamp corners at +-1
                     for (auto& v : t.data)
                       if (std::abs(std::abs(v) - 1.0) < 1e-3) v += 5e-3;
                     c.inputs = {{"x0", std::move(t)}};
                     project(c, c.g.clamp(x, -1.0, 1.0), r);
                   }});

  for (const auto& spec : specs) {
    Family fam;
    for (int i = 0; i < instances; ++i) {
      PrimitiveCase c;
      spec.build(c, rng);
      fam.absorb(check_case(c, spec.name, rng));
    }
    report(spec.name, fam, verbose, &worst);
  }
  return worst;
}

std::vector<TransitionRecord> random_batch(const TaskSpec& spec, int batch, Rng& rng) {
  const int k = spec.object_count;
  const int d = feature_dim(spec);
  const ActionSpace space = spec.action_space();
  std::vector<TransitionRecord> out;
  for (int b = 0; b < batch; ++b) {
    TransitionRecord rec;
    rec.z.k = rec.z_next.k = k;
    rec.z.d = rec.z_next.d = d;
    rec.z.values.resize(static_cast<std::size_t>(k) * d);
    rec.z_next.values.resize(static_cast<std::size_t>(k) * d);
    for (auto& v : rec.z.values) v = rng.uniform(-1.0, 1.0);
    for (auto& v : rec.z_next.values) v = rng.uniform(-1.0, 1.0);
    if (space.discrete) {
      rec.action = Action::index(static_cast<int>(rng.below(space.count)));
    } else {
      std::vector<double> a(space.dim);
      for (auto& v : a) v = rng.uniform(-0.15, 0.15);
      rec.action = Action::move(std::move(a));
    }
    rec.reward = rng.uniform(-0.5, 1.0);
    rec.done = rng.below(5) == 0;
    out.push_back(std::move(rec));
  }
  return out;
}

// FD over a handful of elements in every parameter of the group. Probes are
// shifted off kinks and compared with a 1e-5 denominator floor: the 64-bit
// central-difference noise on O(1) losses sits above the 1e-8 floor that the
// shallow primitive checks use.
FdResult fd_over_params(Agent& agent, const std::vector<std::string>& names,
                        const std::function<GradMap()>& grads_fn,
                        const std::function<double()>& loss_fn, Rng& rng) {
  FdResult acc;
  for (const auto& name : names) {
    Tensor& p = agent.params().get(name);
    auto grad_of = [&]() { return grads_fn().at(name); };
    acc = fd_compare_at(loss_fn, grad_of, p, nullptr, name, kFdStep, 3, 1e-5, true, rng, acc);
  }
  return acc;
}

double check_losses(int instances, Rng& rng, bool verbose) {
  double worst = 0.0;
  const TaskSpec grid{TaskKind::navigation, 3, 3, 50};
  const TaskSpec cont = TaskSpec::named("point_reach");

  Family wm, critic_d, actor_d, temp_d, critic_c, actor_c, temp_c;
  for (int i = 0; i < instances; ++i) {
    AgentConfig cfg;
    cfg.hidden_width = 6;
    cfg.batch_size = 3;
    cfg.alpha_init = rng.uniform(0.3, 1.5);
    Rng init = rng.split(1000 + i);
    Agent agent(grid, cfg, init);
    auto batch = random_batch(grid, 3, rng);

    wm.absorb(fd_over_params(agent, agent.world_param_names(),
                             [&] { return agent.world_model_grads(batch); },
                             [&] { return agent.world_model_loss(batch); }, rng));

    critic_d.absorb(fd_over_params(agent, agent.critic_param_names(),
                                   [&] { return agent.critic_grads(batch); },
                                   [&] { return agent.critic_loss(batch); }, rng));

    actor_d.absorb(fd_over_params(agent, agent.nets().actor_names(),
                                  [&] { return agent.actor_grads(batch); },
                                  [&] { return agent.actor_loss(batch); }, rng));

    temp_d.absorb(fd_over_params(agent, {"log_alpha"},
                                 [&] { return agent.temperature_grads(batch); },
                                 [&] { return agent.temperature_loss(batch); }, rng));
  }
  for (int i = 0; i < instances; ++i) {
    AgentConfig cfg;
    cfg.hidden_width = 6;
    cfg.batch_size = 3;
    cfg.alpha_init = rng.uniform(0.3, 1.5);
    Rng init = rng.split(2000 + i);
    Agent agent(cont, cfg, init);
    auto batch = random_batch(cont, 3, rng);
    UpdateNoise noise = agent.sample_noise(3, rng);

    critic_c.absorb(fd_over_params(agent, agent.critic_param_names(),
                                   [&] { return agent.critic_grads(batch, &noise); },
                                   [&] { return agent.critic_loss(batch, &noise); }, rng));

    actor_c.absorb(fd_over_params(agent, agent.nets().actor_names(),
                                  [&] { return agent.actor_grads(batch, &noise); },
                                  [&] { return agent.actor_loss(batch, &noise); }, rng));

    temp_c.absorb(fd_over_params(agent, {"log_alpha"},
                                 [&] { return agent.temperature_grads(batch, &noise); },
                                 [&] { return agent.temperature_loss(batch, &noise); }, rng));
  }

  report("world_model", wm, verbose, &worst);
  report("critic/discrete", critic_d, verbose, &worst);
  report("actor/discrete", actor_d, verbose, &worst);
  report("temp/discrete", temp_d, verbose, &worst);
  report("critic/cont", critic_c, verbose, &worst);
  report("actor/cont", actor_c, verbose, &worst);
  report("temp/cont", temp_c, verbose, &worst);
  return worst;
}

}  // namespace

double run_gradient_suite(int instances, std::uint64_t seed, bool verbose) {
  Rng rng(seed);
  const double a = check_primitives(instances, rng, verbose);
  const double b = check_losses(instances, rng, verbose);
  return std::max(a, b);
}

}  // namespace slotrl
