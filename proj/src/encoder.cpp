#include "slotrl/encoder.hpp"

#include <stdexcept>

namespace slotrl {

int feature_dim(const TaskSpec& spec) {
  if (spec.kind == TaskKind::point_reach) return 2 + spec.type_count() + 1;
  return 2 * spec.side + spec.type_count() + 1;
}

FactoredState encode(const GridState& state) {
  const TaskSpec& spec = state.spec;
  FactoredState z;
  z.k = spec.object_count;
  z.d = feature_dim(spec);
  z.values.assign(static_cast<std::size_t>(z.k) * z.d, 0.0);

  for (const auto& o : state.objects) {
    if (!o.present) continue;  // absent slot stays all-zero, presence bit 0
    double* slot = z.values.data() + static_cast<std::size_t>(o.id) * z.d;
    if (spec.kind == TaskKind::point_reach) {
      slot[0] = o.x;
      slot[1] = o.y;
      slot[2 + o.type] = 1.0;
      slot[z.d - 1] = 1.0;
    } else {
      slot[o.row] = 1.0;
      slot[spec.side + o.col] = 1.0;
      slot[2 * spec.side + o.type] = 1.0;
      slot[z.d - 1] = 1.0;
    }
  }
  return z;
}

Tensor encode_batch(std::span<const GridState> states) {
  if (states.empty()) throw std::invalid_argument("encode_batch: empty batch");
  const TaskSpec& spec = states[0].spec;
  for (const auto& s : states)
    if (!(s.spec == spec))
      throw std::invalid_argument("encode_batch: mixed task specs in one batch");

  const int k = spec.object_count;
  const int d = feature_dim(spec);
  Tensor out({states.size(), static_cast<std::size_t>(k), static_cast<std::size_t>(d)});
  for (std::size_t b = 0; b < states.size(); ++b) {
    const FactoredState z = encode(states[b]);
    std::copy(z.values.begin(), z.values.end(),
              out.data.begin() + b * static_cast<std::size_t>(k) * d);
  }
  return out;
}

Tensor to_tensor(const FactoredState& z) {
  Tensor t({static_cast<std::size_t>(z.k), static_cast<std::size_t>(z.d)});
  t.data = z.values;
  return t;
}

}  // namespace slotrl
