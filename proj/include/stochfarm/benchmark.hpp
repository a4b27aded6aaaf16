#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stochfarm/farm.hpp"

namespace stochfarm {

/// Reduced output of a run: one time-ordered series per ensemble group.
using ReducedSeries = std::vector<std::vector<ReducedPoint>>;

/// Runs `spec` and collects its reduced output in memory.
ReducedSeries collect_reduced(const EnsembleSpec& spec,
                              RunReport* report = nullptr);

/// Times must match bitwise, sample counts exactly, and every mean/variance
/// within `rel_tol` of the larger magnitude. On mismatch returns false and
/// describes the first difference in `why`.
bool same_reduced_output(const ReducedSeries& a, const ReducedSeries& b,
                         double rel_tol, std::string* why = nullptr);

struct BenchmarkRow {
  std::size_t workers = 0;
  double wall_seconds = 0.0;
  /// T(baseline) / T(workers); baseline is the first entry of the list.
  double scalability = 0.0;
  double events_per_second = 0.0;
  std::uint64_t events = 0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  bool invariant = true;
  std::string mismatch;
};

/// Runs the same ensemble once per worker count with full-trajectory output
/// disabled, and checks that every run reproduces the first one's reduced
/// output (times bitwise, stats within 1e-12 relative).
BenchmarkResult run_benchmark(EnsembleSpec spec,
                              std::span<const std::size_t> worker_counts);

std::string format_benchmark_table(const BenchmarkResult& r);

}  // namespace stochfarm
