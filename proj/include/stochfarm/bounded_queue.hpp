#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace stochfarm {

/// Thrown from a blocked push/pop when the queue is cancelled.
class QueueCancelled : public std::runtime_error {
 public:
  QueueCancelled() : std::runtime_error("queue cancelled") {}
};

/**
 * Bounded blocking FIFO between one producer and one consumer.
 *
 * push() blocks while full, pop() blocks while empty. close() marks end of
 * stream: pop() drains what is left and then returns std::nullopt.
 * cancel() wakes every waiter with QueueCancelled and is used to tear down a
 * pipeline after an error.
 *
 * A side blocked on an empty (full) queue is woken once `batch` items (free
 * slots) are available rather than on every transfer, so producer and
 * consumer sharing a core do not ping-pong per item. Blocked waits also
 * re-check every kPatience, so progress never depends on reaching a batch.
 */
template <class T>
class BoundedQueue {
 public:
  static constexpr auto kPatience = std::chrono::microseconds(200);

  explicit BoundedQueue(std::size_t capacity)
      : capacity_(capacity), batch_(std::clamp<std::size_t>(capacity / 2, 1, 64)) {
    if (capacity == 0) throw std::invalid_argument("queue capacity must be >= 1");
  }

  BoundedQueue(const BoundedQueue&) = delete;
  BoundedQueue& operator=(const BoundedQueue&) = delete;

  void push(T item) {
    std::unique_lock lock(mu_);
    while (!cancelled_ && items_.size() >= capacity_)
      not_full_.wait_for(lock, kPatience, [&] {
        return cancelled_ || items_.size() + batch_ <= capacity_;
      });
    if (cancelled_) throw QueueCancelled();
    if (closed_) throw std::logic_error("push on closed queue");
    items_.push_back(std::move(item));
    peak_ = std::max(peak_, items_.size());
    const bool wake = items_.size() == batch_;
    lock.unlock();
    if (wake) not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    while (!cancelled_ && !closed_ && items_.empty())
      not_empty_.wait_for(lock, kPatience, [&] {
        return cancelled_ || closed_ || items_.size() >= batch_;
      });
    if (cancelled_) throw QueueCancelled();
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    const bool wake = items_.size() + batch_ == capacity_;
    lock.unlock();
    if (wake) not_full_.notify_one();
    return item;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    not_empty_.notify_all();
  }

  void cancel() {
    {
      std::lock_guard lock(mu_);
      cancelled_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t peak() const {
    std::lock_guard lock(mu_);
    return peak_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  std::size_t capacity_;
  std::size_t batch_;
  std::size_t peak_ = 0;
  bool closed_ = false;
  bool cancelled_ = false;
};

}  // namespace stochfarm
