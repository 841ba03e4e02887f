#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>

namespace asyncps {

// Unbounded multi-producer / single-consumer FIFO.
//
// push() stamps each item with a sequence number (arrival order). pop_wait()
// blocks until an item arrives, the queue is closed, or someone calls poke().
template <class T>
class MpscQueue {
 public:
  std::uint64_t push(T item) {
    std::uint64_t seq = 0;
    {
      std::lock_guard lock(mu_);
      seq = next_seq_++;
      stamp(item, seq);
      items_.push_back(std::move(item));
    }
    cv_.notify_one();
    return seq;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mu_);
    if (items_.empty()) return std::nullopt;
    T out = std::move(items_.front());
    items_.pop_front();
    return out;
  }

  // nullopt once closed and drained, or when woken by poke() with nothing queued.
  std::optional<T> pop_wait() {
    std::unique_lock lock(mu_);
    const std::uint64_t seen = pokes_;
    cv_.wait(lock, [&] { return !items_.empty() || closed_ || pokes_ != seen; });
    if (items_.empty()) return std::nullopt;
    T out = std::move(items_.front());
    items_.pop_front();
    return out;
  }

  // Poke counter; pass a value read before checking external state to
  // wait_activity() so a poke in between is not lost.
  std::uint64_t epoch() const {
    std::lock_guard lock(mu_);
    return pokes_;
  }

  // Blocks until the queue is nonempty, closed, or poked after `since`.
  void wait_activity(std::uint64_t since) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_ || pokes_ != since; });
  }

  template <class Rep, class Period>
  void wait_activity_for(std::uint64_t since, std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !items_.empty() || closed_ || pokes_ != since; });
  }

  void poke() {
    {
      std::lock_guard lock(mu_);
      ++pokes_;
    }
    cv_.notify_all();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  bool empty() const {
    std::lock_guard lock(mu_);
    return items_.empty();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  static void stamp(T& item, std::uint64_t seq) {
    if constexpr (requires { item.seq = seq; }) item.seq = seq;
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t pokes_ = 0;
  bool closed_ = false;
};

}  // namespace asyncps
