#include "slotrl/replay.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace slotrl {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'R', 'B', 'U', 'F', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("replay load: truncated file");
  return v;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> take_doubles(std::istream& is) {
  const auto n = take<std::uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("replay load: truncated file");
  return v;
}

void put_state(std::ostream& os, const FactoredState& z) {
  put<std::int32_t>(os, z.k);
  put<std::int32_t>(os, z.d);
  put_doubles(os, z.values);
}

FactoredState take_state(std::istream& is) {
  FactoredState z;
  z.k = take<std::int32_t>(is);
  z.d = take<std::int32_t>(is);
  z.values = take_doubles(is);
  return z;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
}

void ReplayBuffer::push(TransitionRecord record) {
  if (ring_.size() < capacity_ && size_ == ring_.size()) {
    ring_.push_back(std::move(record));
  } else {
    ring_[head_] = std::move(record);
  }
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

const TransitionRecord& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::invalid_argument("ReplayBuffer::at: index out of range");
  if (size_ < capacity_) return ring_[i];
  return ring_[(head_ + i) % capacity_];
}

std::vector<TransitionRecord> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (size_ < batch_size)
    throw std::runtime_error("ReplayBuffer::sample: " + std::to_string(size_) +
                             " records < batch " + std::to_string(batch_size));
  std::vector<TransitionRecord> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    batch.push_back(ring_[rng.below(size_)]);
  return batch;
}

void ReplayBuffer::save(const std::string& path, std::uint64_t spec_hash) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("replay save: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, spec_hash);
  put<std::uint64_t>(os, size_);
  for (std::size_t i = 0; i < size_; ++i) {
    const TransitionRecord& r = at(i);
    put_state(os, r.z);
    put<std::int32_t>(os, r.action.discrete);
    put_doubles(os, r.action.continuous);
    put(os, r.reward);
    put_state(os, r.z_next);
    put<std::uint8_t>(os, r.done ? 1 : 0);
  }
  if (!os) throw std::runtime_error("replay save: write failed for " + path);
}

ReplayBuffer ReplayBuffer::load(const std::string& path, std::uint64_t expected_spec_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("replay load: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("replay load: bad magic in " + path);
  const auto version = take<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("replay load: unsupported version " + std::to_string(version));
  const auto spec_hash = take<std::uint64_t>(is);
  if (spec_hash != expected_spec_hash)
    throw std::runtime_error("replay load: task spec hash mismatch");
  const auto count = take<std::uint64_t>(is);

  ReplayBuffer buf(count > 0 ? count : 1);
  for (std::uint64_t i = 0; i < count; ++i) {
    TransitionRecord r;
    r.z = take_state(is);
    r.action.discrete = take<std::int32_t>(is);
    r.action.continuous = take_doubles(is);
    r.reward = take<double>(is);
    r.z_next = take_state(is);
    r.done = take<std::uint8_t>(is) != 0;
    buf.push(std::move(r));
  }
  return buf;
}

}  // namespace slotrl
