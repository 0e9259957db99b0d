#pragma once

#include <span>
#include <vector>

#include "slotrl/env.hpp"
#include "slotrl/tensor.hpp"

namespace slotrl {

// Ground-truth factored state: K slots of D features, slot i bound to object
// id i for the whole episode. Grid layout per slot is
// [row one-hot | col one-hot | type one-hot | presence]; point_reach uses
// [x, y, type one-hot, presence]. Absent objects encode as all zeros.
struct FactoredState {
  int k = 0;
  int d = 0;
  std::vector<double> values;  // row-major K x D

  double at(int slot, int feature) const { return values[slot * d + feature]; }
  bool operator==(const FactoredState& o) const = default;
};

int feature_dim(const TaskSpec& spec);

FactoredState encode(const GridState& state);

// Stacked encodings, order preserved; shape {B, K, D}. Mixed specs reject.
Tensor encode_batch(std::span<const GridState> states);

Tensor to_tensor(const FactoredState& z);  // shape {K, D}

}  // namespace slotrl
