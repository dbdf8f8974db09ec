// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace wardpose {

// Multi-producer multi-consumer FIFO with a hard capacity. Occupancy never
// exceeds the capacity; max_occupancy() reports the high-water mark.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  // Blocks while full. Returns false once the queue is closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    enqueue(std::move(item));
    return true;
  }

  // Blocks while full for at most `timeout`; returns false if still full or closed.
  template <typename Duration>
  bool push_for(T& item, Duration timeout) {
    std::unique_lock lock(mu_);
    if (!not_full_.wait_for(lock, timeout, [&] { return closed_ || items_.size() < capacity_; })) return false;
    if (closed_) return false;
    enqueue(std::move(item));
    return true;
  }

  bool try_push(T& item) {
    std::lock_guard lock(mu_);
    if (closed_ || items_.size() >= capacity_) return false;
    enqueue(std::move(item));
    return true;
  }

  // Makes room by removing the oldest item when full; the evicted item is
  // returned. Returns nullopt when nothing was evicted.
  std::optional<T> push_evicting(T item) {
    std::lock_guard lock(mu_);
    std::optional<T> evicted;
    if (closed_) return evicted;
    if (items_.size() >= capacity_) {
      evicted.emplace(std::move(items_.front()));
      items_.pop_front();
    }
    enqueue(std::move(item));
    return evicted;
  }

  // Blocks until an item is available; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    return dequeue();
  }

  template <typename Duration>
  std::optional<T> pop_for(Duration timeout) {
    std::unique_lock lock(mu_);
    not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    return dequeue();
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mu_);
    return dequeue();
  }

  // Producers are refused afterwards; consumers drain what is left.
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  [[nodiscard]] bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }
  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t max_occupancy() const {
    std::lock_guard lock(mu_);
    return high_water_;
  }

 private:
  void enqueue(T&& item) {
    items_.push_back(std::move(item));
    if (items_.size() > high_water_) high_water_ = items_.size();
    not_empty_.notify_one();
  }

  std::optional<T> dequeue() {
    if (items_.empty()) return std::nullopt;
    std::optional<T> out(std::move(items_.front()));
    items_.pop_front();
    not_full_.notify_one();
    return out;
  }

  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  std::size_t high_water_ = 0;
  bool closed_ = false;
};

}  // namespace wardpose
