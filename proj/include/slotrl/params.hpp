#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "slotrl/tensor.hpp"

namespace slotrl {

// Named parameter collection. Ordered so that iteration, serialization and
// optimizer updates are deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    auto [it, fresh] = store_.emplace(name, std::move(t));
    if (!fresh) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    return it->second;
  }

  Tensor& get(const std::string& name) {
    auto it = store_.find(name);
    if (it == store_.end())
      throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  const Tensor& get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
  }

  bool contains(const std::string& name) const { return store_.count(name) != 0; }
  std::size_t size() const { return store_.size(); }

  auto begin() { return store_.begin(); }
  auto end() { return store_.end(); }
  auto begin() const { return store_.begin(); }
  auto end() const { return store_.end(); }

 private:
  std::map<std::string, Tensor> store_;
};

// target <- tau*online + (1-tau)*target for every name in target.
void polyak_update(ParamStore& target, const ParamStore& online, double tau);

}  // namespace slotrl
