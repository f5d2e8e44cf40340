#pragma once

#include <algorithm>
#include <unordered_set>
#include <vector>

#include "sensched/errors.hpp"
#include "sensched/rng.hpp"

namespace sensched {

/// Fixed-capacity ring buffer of transitions; overwrites the oldest record
/// once full. Batches are drawn uniformly without replacement.
template <typename Record>
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw DomainError("ReplayMemory: capacity must be positive");
    storage_.reserve(capacity_);
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(Record record) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(record));
    } else {
      storage_[head_] = std::move(record);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// Oldest-first logical indexing (index 0 is the oldest live record).
  const Record& operator[](std::size_t i) const {
    return storage_[(head_ + i) % storage_.size()];
  }

  /// Uniform sample of `batch` distinct records (Floyd's algorithm). The
  /// returned pointers stay valid until the next push.
  std::vector<const Record*> sample(std::size_t batch, Rng& rng) const {
    if (batch > storage_.size()) {
      throw DomainError("ReplayMemory::sample: batch larger than stored records");
    }
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(batch * 2);
    for (std::size_t j = storage_.size() - batch; j < storage_.size(); ++j) {
      std::size_t t = static_cast<std::size_t>(uniform_below(rng, static_cast<int>(j) + 1));
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<std::size_t> indices(chosen.begin(), chosen.end());
    std::sort(indices.begin(), indices.end());
    std::vector<const Record*> out;
    out.reserve(batch);
    for (std::size_t i : indices) out.push_back(&storage_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // physical slot of the oldest record once full
  std::vector<Record> storage_;
};

}  // namespace sensched
