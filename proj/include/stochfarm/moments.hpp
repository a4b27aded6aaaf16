#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "stochfarm/model.hpp"

namespace stochfarm {

/// Per-species mean and population variance at one time.
struct ReducedPoint {
  double time = 0.0;
  std::uint64_t n = 0;
  std::vector<double> mean;
  std::vector<double> variance;
};

/**
 * Mergeable (n, sum, sum of squares) per species.
 *
 * merge() is componentwise addition, so it is associative and commutative and
 * partial results from any partition of the samples combine exactly (up to
 * floating-point summation order). A default-constructed accumulator has
 * dimension 0 and is the identity for merge().
 */
class MomentAccumulator {
 public:
  MomentAccumulator() = default;
  explicit MomentAccumulator(std::size_t dim) : sum_(dim, 0.0), sumsq_(dim, 0.0) {}
  MomentAccumulator(std::uint64_t n, std::vector<double> sum,
                    std::vector<double> sumsq);

  static MomentAccumulator from_counts(std::span<const Count> sample);

  void add(std::span<const Count> sample);
  void add(std::span<const double> sample);
  /// Throws std::invalid_argument when both sides have nonzero, different
  /// dimensions.
  void merge(const MomentAccumulator& other);

  std::uint64_t count() const noexcept { return n_; }
  std::size_t dim() const noexcept { return sum_.size(); }
  const std::vector<double>& sum() const noexcept { return sum_; }
  const std::vector<double>& sumsq() const noexcept { return sumsq_; }

  /// mean = sum/n, variance = sumsq/n - mean^2 floored at 0.
  ReducedPoint finalize(double time) const;

  friend bool operator==(const MomentAccumulator&,
                         const MomentAccumulator&) = default;

 private:
  std::uint64_t n_ = 0;
  std::vector<double> sum_;
  std::vector<double> sumsq_;
};

MomentAccumulator acc_merge(const MomentAccumulator& a,
                            const MomentAccumulator& b);

/// A time-aligned aggregate: what flows between reduction stages.
struct AlignedPoint {
  double time = 0.0;
  MomentAccumulator acc;
};

}  // namespace stochfarm
