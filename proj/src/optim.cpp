#include "slotrl/optim.hpp"

#include <cmath>

namespace slotrl {

void polyak_update(ParamStore& target, const ParamStore& online, double tau) {
  if (tau < 0.0 || tau > 1.0)
    throw std::invalid_argument("polyak_update: tau " + std::to_string(tau) +
                                " outside [0,1]");
  for (auto& [name, t] : target) {
    if (!online.contains(name))
      throw std::invalid_argument("polyak_update: online store lacks '" + name + "'");
    const Tensor& o = online.get(name);
    if (!o.same_shape(t))
      throw std::invalid_argument("polyak_update: '" + name + "' shape " + shape_str(t.shape) +
                                  " vs " + shape_str(o.shape));
    for (std::size_t i = 0; i < t.data.size(); ++i)
      t.data[i] = tau * o.data[i] + (1.0 - tau) * t.data[i];
  }
}

Adam::Adam(AdamConfig cfg, std::vector<std::string> param_names)
    : cfg_(cfg), names_(std::move(param_names)) {}

void Adam::step(ParamStore& params, const GradMap& grads) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (const auto& name : names_) {
    auto git = grads.find(name);
    if (git == grads.end())
      throw std::invalid_argument("Adam: missing gradient for '" + name + "'");
    const Tensor& g = git->second;
    Tensor& p = params.get(name);
    if (!g.same_shape(p))
      throw std::invalid_argument("Adam: gradient shape " + shape_str(g.shape) + " vs '" +
                                  name + "' " + shape_str(p.shape));
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor(p.shape)).first;
      v_.emplace(name, Tensor(p.shape));
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g.data[i];
      if (std::isnan(gi))
        throw std::runtime_error("Adam: NaN gradient in parameter '" + name + "'");
      m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gi;
      v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace slotrl
