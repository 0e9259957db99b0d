#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slotrl/encoder.hpp"
#include "slotrl/env.hpp"
#include "slotrl/rng.hpp"

namespace slotrl {

struct TransitionRecord {
  FactoredState z;
  Action action;
  double reward = 0.0;
  FactoredState z_next;
  bool done = false;

  bool operator==(const TransitionRecord& o) const = default;
};

// Uniform FIFO experience store. Insertion beyond capacity evicts the oldest
// record; sampling is uniform with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(TransitionRecord record);
  std::vector<TransitionRecord> sample(std::size_t batch_size, Rng& rng) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  // i = 0 is the oldest retained record.
  const TransitionRecord& at(std::size_t i) const;

  void save(const std::string& path, std::uint64_t spec_hash) const;
  static ReplayBuffer load(const std::string& path, std::uint64_t expected_spec_hash);

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
  std::vector<TransitionRecord> ring_;
};

}  // namespace slotrl
