#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "asyncps/dataset.hpp"
#include "asyncps/linalg.hpp"

namespace asyncps {

using Version = std::uint64_t;

// Reference-counted history of published model parameters.
//
// Every sample index remembers the version it was last evaluated at. A version
// stays alive while it is current or while at least one sample points at it;
// the moment its count reaches zero it is dropped. Version 0 is the initial
// model, so untouched samples always resolve.
class VersionStore {
 public:
  VersionStore(DenseVector initial, std::size_t samples) : last_touched_(samples, 0) {
    entries_.emplace(0, Entry{std::make_shared<const DenseVector>(std::move(initial)), samples + 1});
  }

  Version current_version() const noexcept { return current_; }

  std::shared_ptr<const DenseVector> current() const { return entries_.at(current_).value; }

  bool contains(Version v) const { return entries_.contains(v); }

  std::shared_ptr<const DenseVector> get(Version v) const {
    const auto it = entries_.find(v);
    if (it == entries_.end()) throw std::out_of_range("version " + std::to_string(v) + " is not live");
    return it->second.value;
  }

  Version publish(DenseVector w) {
    const Version v = current_ + 1;
    entries_.emplace(v, Entry{std::make_shared<const DenseVector>(std::move(w)), 1});
    const Version old = current_;
    current_ = v;
    release(old);
    return v;
  }

  std::size_t sample_count() const noexcept { return last_touched_.size(); }

  Version last_touched(std::size_t index) const { return last_touched_.at(index); }

  std::shared_ptr<const DenseVector> value_at(std::size_t index) const { return get(last_touched(index)); }

  // Marks `indices` as last evaluated at `v`. If `v` was already evicted (a slow
  // task computed against it) the caller must hand its parameters back in.
  void touch(std::span<const std::size_t> indices, Version v,
             std::shared_ptr<const DenseVector> value = nullptr) {
    if (indices.empty()) return;
    auto it = entries_.find(v);
    if (it == entries_.end()) {
      if (!value) throw std::out_of_range("touch: version " + std::to_string(v) + " is not live");
      if (v > current_) throw std::invalid_argument("touch: version from the future");
      it = entries_.emplace(v, Entry{std::move(value), 0}).first;
    }
    for (std::size_t idx : indices) {
      Version& slot = last_touched_.at(idx);
      if (slot == v) continue;
      const Version old = slot;
      slot = v;
      ++it->second.refs;
      release(old);
    }
    if (it->second.refs == 0) entries_.erase(it);
  }

  std::size_t refcount(Version v) const {
    const auto it = entries_.find(v);
    return it == entries_.end() ? 0 : it->second.refs;
  }

  std::size_t live_versions() const noexcept { return entries_.size(); }

  std::vector<Version> live_version_ids() const {
    std::vector<Version> out;
    for (const auto& [v, e] : entries_) out.push_back(v);
    return out;
  }

 private:
  struct Entry {
    std::shared_ptr<const DenseVector> value;
    std::size_t refs = 0;
  };

  void release(Version v) {
    auto it = entries_.find(v);
    if (it == entries_.end()) return;
    if (--it->second.refs == 0) entries_.erase(it);
  }

  std::map<Version, Entry> entries_;
  std::vector<Version> last_touched_;
  Version current_ = 0;
};

// Broadcast handle that can also resolve the parameters a sample was last evaluated at.
class DynamicBroadcast {
 public:
  DynamicBroadcast(std::shared_ptr<VersionStore> store, Version version)
      : store_(std::move(store)), version_(version), value_(store_->get(version)) {}

  Version version() const noexcept { return version_; }
  const DenseVector& value() const noexcept { return *value_; }
  const DenseVector& value(std::size_t index) const { return *store_->value_at(index); }

 private:
  std::shared_ptr<VersionStore> store_;
  Version version_;
  std::shared_ptr<const DenseVector> value_;
};

inline DynamicBroadcast async_broadcast(DenseVector w, const std::shared_ptr<VersionStore>& store) {
  const Version v = store->publish(std::move(w));
  return DynamicBroadcast(store, v);
}

// (1/|S|) sum_s grad f_s(w at the version sample s was last touched).
// `resolve(global_index)` returns the historical parameters for that sample.
template <class Resolve, Loss L = LeastSquares>
  requires std::invocable<Resolve&, std::size_t>
DenseVector recover_history_gradient(const DataPartition& part, std::span<const std::size_t> local,
                                     Resolve&& resolve, const L& loss = {}) {
  if (local.empty()) throw std::invalid_argument("recover_history_gradient: empty sample set");
  std::size_t dim = 0;
  GradientSum acc(0);
  for (std::size_t i : local) {
    const DenseVector& w = resolve(part.global_offsets.at(i));
    if (acc.count == 0) {
      dim = w.size();
      acc = GradientSum(dim);
    }
    acc.add(part.rows.at(i), w, loss);
  }
  return acc.mean();
}

template <Loss L = LeastSquares>
DenseVector recover_history_gradient(const DataPartition& part, std::span<const std::size_t> local,
                                     const VersionStore& store, const L& loss = {}) {
  return recover_history_gradient(
      part, local, [&](std::size_t g) -> const DenseVector& { return *store.value_at(g); }, loss);
}

}  // namespace asyncps
