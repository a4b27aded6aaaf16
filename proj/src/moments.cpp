#include "stochfarm/moments.hpp"

#include <algorithm>

namespace stochfarm {

MomentAccumulator::MomentAccumulator(std::uint64_t n, std::vector<double> sum,
                                     std::vector<double> sumsq)
    : n_(n), sum_(std::move(sum)), sumsq_(std::move(sumsq)) {
  if (sum_.size() != sumsq_.size())
    throw std::invalid_argument("sum and sumsq dimensions differ");
}

MomentAccumulator MomentAccumulator::from_counts(std::span<const Count> sample) {
  MomentAccumulator a(sample.size());
  a.add(sample);
  return a;
}

void MomentAccumulator::add(std::span<const Count> sample) {
  if (sum_.empty() && n_ == 0) {
    sum_.assign(sample.size(), 0.0);
    sumsq_.assign(sample.size(), 0.0);
  }
  if (sample.size() != sum_.size())
    throw std::invalid_argument("sample dimension mismatch");
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double x = static_cast<double>(sample[i]);
    sum_[i] += x;
    sumsq_[i] += x * x;
  }
  ++n_;
}

void MomentAccumulator::add(std::span<const double> sample) {
  if (sum_.empty() && n_ == 0) {
    sum_.assign(sample.size(), 0.0);
    sumsq_.assign(sample.size(), 0.0);
  }
  if (sample.size() != sum_.size())
    throw std::invalid_argument("sample dimension mismatch");
  for (std::size_t i = 0; i < sample.size(); ++i) {
    sum_[i] += sample[i];
    sumsq_[i] += sample[i] * sample[i];
  }
  ++n_;
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.sum_.empty()) {
    n_ += other.n_;
    return;
  }
  if (sum_.empty()) {
    const auto n = n_;
    *this = other;
    n_ += n;
    return;
  }
  if (other.sum_.size() != sum_.size())
    throw std::invalid_argument("accumulator dimension mismatch");
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i] += other.sum_[i];
    sumsq_[i] += other.sumsq_[i];
  }
  n_ += other.n_;
}

ReducedPoint MomentAccumulator::finalize(double time) const {
  ReducedPoint p;
  p.time = time;
  p.n = n_;
  p.mean.resize(sum_.size());
  p.variance.resize(sum_.size());
  const double n = static_cast<double>(n_);
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    const double mean = sum_[i] / n;
    p.mean[i] = mean;
    p.variance[i] = std::max(0.0, sumsq_[i] / n - mean * mean);
  }
  return p;
}

MomentAccumulator acc_merge(const MomentAccumulator& a,
                            const MomentAccumulator& b) {
  MomentAccumulator out = a;
  out.merge(b);
  return out;
}

}  // namespace stochfarm
