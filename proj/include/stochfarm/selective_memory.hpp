#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "stochfarm/moments.hpp"
#include "stochfarm/ssa.hpp"

namespace stochfarm {

/// How a stream item is timed and folded into a Y-slice.
template <class Sample>
struct SampleTraits;

template <>
struct SampleTraits<TrajectoryPoint> {
  static double time(const TrajectoryPoint& p) { return p.time; }
  static void fold(MomentAccumulator& acc, const TrajectoryPoint& p) {
    acc.add(std::span<const Count>(p.counts));
  }
};

/// Exact integer moments of the currently held counts, updated as one
/// stream's held point is replaced. A slice then costs O(dim) instead of
/// O(streams * dim). Converting the exact totals to double gives the same
/// result as summing in any order whenever that summation is exact.
class HeldCountMoments {
 public:
  explicit HeldCountMoments(std::size_t dim) : sum_(dim, 0), sumsq_(dim, 0) {}

  void add(const TrajectoryPoint& p) { apply(p, 1); }
  void remove(const TrajectoryPoint& p) { apply(p, -1); }

  MomentAccumulator snapshot() const {
    std::vector<double> sum(sum_.size()), sumsq(sum_.size());
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      sum[i] = static_cast<double>(sum_[i]);
      sumsq[i] = static_cast<double>(sumsq_[i]);
    }
    return MomentAccumulator(static_cast<std::uint64_t>(n_), std::move(sum),
                             std::move(sumsq));
  }

 private:
  __extension__ using Wide = __int128;

  void apply(const TrajectoryPoint& p, int sign) {
    if (p.counts.size() != sum_.size())
      throw std::invalid_argument("sample dimension mismatch");
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      const Wide x = p.counts[i];
      sum_[i] += sign * x;
      sumsq_[i] += sign * x * x;
    }
    n_ += sign;
  }

  std::int64_t n_ = 0;
  std::vector<Wide> sum_;
  std::vector<Wide> sumsq_;
};

template <>
struct SampleTraits<AlignedPoint> {
  static double time(const AlignedPoint& p) { return p.time; }
  static void fold(MomentAccumulator& acc, const AlignedPoint& p) {
    acc.merge(p.acc);
  }
};

class BufferFull : public std::length_error {
 public:
  using std::length_error::length_error;
};

/**
 * Online time alignment and reduction of k monotone streams.
 *
 * Every distinct item time across the streams (a union time) becomes one
 * Y-slice once all open streams have delivered something at or beyond it.
 * Each stream contributes its zero-order-hold value at the slice time: the
 * latest item with time <= u. Streams that have not produced anything yet
 * contribute nothing. Successive Y-slices are then merged `thin` at a time
 * (X-reduction); the merged point sits at the mean of the grouped times.
 *
 * Items newer than the emission cursor are kept in a per-stream window of at
 * most `capacity` items; push() on a full stream throws BufferFull, so a
 * threaded driver must only pull from a stream while full() is false. The
 * stream with the smallest frontier is always drained by its own push, so a
 * driver that feeds the most lagging stream never stalls.
 */
template <class Sample>
class SelectiveMemory {
 public:
  static constexpr std::size_t kDefaultCapacity = 4096;
  using Traits = SampleTraits<Sample>;

  SelectiveMemory(std::size_t streams, std::size_t dim, std::uint64_t thin = 1,
                  std::size_t capacity = kDefaultCapacity)
      : dim_(dim),
        thin_(thin),
        capacity_(capacity),
        streams_(streams),
        next_(streams, kNever),
        gate_(streams, -kNever) {
    if (streams == 0) throw std::invalid_argument("need at least one stream");
    if (thin == 0) throw std::invalid_argument("thin factor must be >= 1");
    if (capacity == 0) throw std::invalid_argument("capacity must be >= 1");
    if constexpr (kIncremental) held_.emplace(dim);
  }

  std::size_t streams() const noexcept { return streams_.size(); }
  std::uint64_t thin() const noexcept { return thin_; }
  std::size_t capacity() const noexcept { return capacity_; }

  bool full(std::size_t s) const { return at(s).pending.size() >= capacity_; }
  bool closed(std::size_t s) const { return at(s).closed; }
  double frontier(std::size_t s) const { return at(s).frontier; }
  std::size_t buffered(std::size_t s) const { return at(s).pending.size(); }
  std::size_t buffered() const noexcept { return buffered_; }
  std::size_t peak_buffered() const noexcept { return peak_; }
  /// Time of the last emitted Y-slice.
  std::optional<double> cursor() const noexcept { return cursor_; }

  template <class Emit>
  void push(std::size_t s, Sample item, Emit&& emit) {
    auto& st = at(s);
    const double t = Traits::time(item);
    if (st.closed)
      throw std::logic_error("push on terminated stream " + std::to_string(s));
    if (!(t > st.frontier))
      throw std::invalid_argument("non-monotone push on stream " +
                                  std::to_string(s));
    if (t == kNever)
      throw std::invalid_argument("infinite time on stream " + std::to_string(s));
    if (st.pending.size() >= capacity_)
      throw BufferFull("stream " + std::to_string(s) + " buffer full");
    st.frontier = t;
    gate_[s] = t;
    if (st.pending.empty()) next_[s] = t;
    st.pending.push_back(std::move(item));
    ++buffered_;
    peak_ = std::max(peak_, buffered_);
    drain(emit);
  }

  std::vector<AlignedPoint> push(std::size_t s, Sample item) {
    std::vector<AlignedPoint> out;
    push(s, std::move(item), [&](AlignedPoint p) { out.push_back(std::move(p)); });
    return out;
  }

  /// Marks stream `s` as having delivered its last item. A closed stream no
  /// longer holds back the others.
  template <class Emit>
  void close(std::size_t s, Emit&& emit) {
    at(s).closed = true;
    gate_[s] = kNever;
    drain(emit);
  }

  std::vector<AlignedPoint> close(std::size_t s) {
    std::vector<AlignedPoint> out;
    close(s, [&](AlignedPoint p) { out.push_back(std::move(p)); });
    return out;
  }

  bool all_closed() const noexcept {
    return std::all_of(streams_.begin(), streams_.end(),
                       [](const Stream& st) { return st.closed; });
  }

  /// Emits every remaining slice and the trailing partial X-group. Every
  /// stream must have been closed.
  template <class Emit>
  void flush(Emit&& emit) {
    std::vector<std::size_t> lagging;
    for (std::size_t s = 0; s < streams_.size(); ++s)
      if (!streams_[s].closed) lagging.push_back(s);
    if (!lagging.empty()) {
      std::string msg = lagging.size() == 1 ? "stream " : "streams ";
      for (std::size_t i = 0; i < lagging.size(); ++i) {
        if (i) msg += ", ";
        msg += std::to_string(lagging[i]);
      }
      throw std::logic_error(msg + " not terminated");
    }
    drain(emit);
    if (carry_count_ > 0) emit_group(emit);
    for (auto& st : streams_) st.held.reset();
    if constexpr (kIncremental) held_.emplace(dim_);
  }

  std::vector<AlignedPoint> flush() {
    std::vector<AlignedPoint> out;
    flush([&](AlignedPoint p) { out.push_back(std::move(p)); });
    return out;
  }

 private:
  struct Stream {
    std::deque<Sample> pending;
    std::optional<Sample> held;
    double frontier = -std::numeric_limits<double>::infinity();
    bool closed = false;
  };

  Stream& at(std::size_t s) {
    if (s >= streams_.size())
      throw std::out_of_range("stream id " + std::to_string(s));
    return streams_[s];
  }
  const Stream& at(std::size_t s) const {
    if (s >= streams_.size())
      throw std::out_of_range("stream id " + std::to_string(s));
    return streams_[s];
  }

  // Replaces the held sample of stream s with its oldest pending one.
  void advance_held(std::size_t s) {
    auto& st = streams_[s];
    if constexpr (kIncremental)
      if (st.held) held_->remove(*st.held);
    st.held = std::move(st.pending.front());
    st.pending.pop_front();
    --buffered_;
    next_[s] = st.pending.empty() ? kNever : Traits::time(st.pending.front());
    if constexpr (kIncremental) held_->add(*st.held);
  }

  // next_ and gate_ mirror the streams in flat arrays so the per-slice scans
  // stay cheap: the time of each stream's oldest pending sample, and each
  // open stream's frontier (+inf once closed).
  template <class Emit>
  void drain(Emit& emit) {
    const double bound = *std::min_element(gate_.begin(), gate_.end());
    for (;;) {
      const double u = *std::min_element(next_.begin(), next_.end());
      if (u == kNever || u > bound) return;

      MomentAccumulator slice;
      for (std::size_t s = 0; s < next_.size(); ++s)
        if (next_[s] == u) advance_held(s);
      if constexpr (kIncremental) {
        slice = held_->snapshot();
      } else {
        slice = MomentAccumulator(dim_);
        for (const auto& st : streams_)
          if (st.held) Traits::fold(slice, *st.held);
      }
      cursor_ = u;
      if (slice.count() == 0) continue;
      if (thin_ == 1) {
        emit(AlignedPoint{u, std::move(slice)});
        continue;
      }
      if (carry_count_ == 0) {
        carry_ = MomentAccumulator(dim_);
        carry_time_sum_ = 0.0;
        carry_tmin_ = u;
      }
      carry_.merge(slice);
      carry_time_sum_ += u;
      carry_tmax_ = u;
      if (++carry_count_ == thin_) emit_group(emit);
    }
  }

  template <class Emit>
  void emit_group(Emit& emit) {
    double t = carry_time_sum_ / static_cast<double>(carry_count_);
    t = std::clamp(t, carry_tmin_, carry_tmax_);
    emit(AlignedPoint{t, std::move(carry_)});
    carry_ = MomentAccumulator(dim_);
    carry_count_ = 0;
  }

  static constexpr bool kIncremental = std::is_same_v<Sample, TrajectoryPoint>;
  static constexpr double kNever = std::numeric_limits<double>::infinity();

  std::size_t dim_;
  std::uint64_t thin_;
  std::size_t capacity_;
  std::vector<Stream> streams_;
  std::vector<double> next_;
  std::vector<double> gate_;
  std::size_t buffered_ = 0;
  std::size_t peak_ = 0;
  std::optional<double> cursor_;
  std::optional<HeldCountMoments> held_;

  MomentAccumulator carry_;
  std::uint64_t carry_count_ = 0;
  double carry_time_sum_ = 0.0;
  double carry_tmin_ = 0.0;
  double carry_tmax_ = 0.0;
};

}  // namespace stochfarm
