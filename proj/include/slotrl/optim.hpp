#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slotrl/graph.hpp"
#include "slotrl/params.hpp"

namespace slotrl {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a fixed group of named parameters.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, std::vector<std::string> param_names);

  // Applies one update in place. Every grad must belong to the group and
  // match its parameter's shape; a NaN gradient aborts, naming the parameter.
  void step(ParamStore& params, const GradMap& grads);

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::string>& param_names() const { return names_; }

  // Moment access for checkpointing.
  const Tensor& first_moment(const std::string& name) const { return m_.at(name); }
  const Tensor& second_moment(const std::string& name) const { return v_.at(name); }
  Tensor& first_moment(const std::string& name) { return m_.at(name); }
  Tensor& second_moment(const std::string& name) { return v_.at(name); }
  void set_step_count(std::int64_t s) { step_ = s; }
  bool has_moments(const std::string& name) const { return m_.count(name) != 0; }
  void set_moments(const std::string& name, Tensor m, Tensor v) {
    m_[name] = std::move(m);
    v_[name] = std::move(v);
  }

 private:
  AdamConfig cfg_;
  std::vector<std::string> names_;
  std::map<std::string, Tensor> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace slotrl
