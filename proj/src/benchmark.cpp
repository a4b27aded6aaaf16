#include "stochfarm/benchmark.hpp"

#include <bit>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <sstream>

namespace stochfarm {

ReducedSeries collect_reduced(const EnsembleSpec& spec, RunReport* report) {
  ReducedSeries out(spec.groups());
  auto r = run_farm(spec, [&](std::size_t g, const ReducedPoint& p) {
    out[g].push_back(p);
  });
  if (report) *report = r;
  return out;
}

namespace {

bool close_rel(double a, double b, double tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

bool same_reduced_output(const ReducedSeries& a, const ReducedSeries& b,
                         double rel_tol, std::string* why) {
  auto report = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (a.size() != b.size()) return report("group count differs");
  for (std::size_t g = 0; g < a.size(); ++g) {
    if (a[g].size() != b[g].size())
      return report("group " + std::to_string(g) + ": point count " +
                    std::to_string(a[g].size()) + " vs " +
                    std::to_string(b[g].size()));
    for (std::size_t i = 0; i < a[g].size(); ++i) {
      const auto& p = a[g][i];
      const auto& q = b[g][i];
      const std::string where =
          "group " + std::to_string(g) + " row " + std::to_string(i);
      if (std::bit_cast<std::uint64_t>(p.time) !=
          std::bit_cast<std::uint64_t>(q.time))
        return report(where + ": time differs");
      if (p.n != q.n) return report(where + ": sample count differs");
      if (p.mean.size() != q.mean.size())
        return report(where + ": dimension differs");
      for (std::size_t s = 0; s < p.mean.size(); ++s) {
        if (!close_rel(p.mean[s], q.mean[s], rel_tol))
          return report(where + ": mean of species " + std::to_string(s) +
                        " differs");
        if (!close_rel(p.variance[s], q.variance[s], rel_tol))
          return report(where + ": variance of species " + std::to_string(s) +
                        " differs");
      }
    }
  }
  return true;
}

namespace {

// Baseline output packed as rows of [time, n, mean..., variance...]. Later
// runs are compared point by point as they stream in, so only one run is
// ever held in memory.
class FlatSeries {
 public:
  explicit FlatSeries(std::size_t groups) : data_(groups), cursor_(groups, 0) {}

  void record(std::size_t g, const ReducedPoint& p) {
    auto& d = data_[g];
    d.push_back(p.time);
    d.push_back(static_cast<double>(p.n));
    d.insert(d.end(), p.mean.begin(), p.mean.end());
    d.insert(d.end(), p.variance.begin(), p.variance.end());
  }

  void rewind() { std::fill(cursor_.begin(), cursor_.end(), 0); }

  // Empty when p matches the next baseline row of group g.
  std::string compare(std::size_t g, const ReducedPoint& p) {
    const auto& d = data_[g];
    std::size_t& at = cursor_[g];
    const std::size_t width = 2 + 2 * p.mean.size();
    const std::string where =
        "group " + std::to_string(g) + " row " + std::to_string(at / width);
    if (at + width > d.size()) return where + ": extra point";
    const double* row = d.data() + at;
    at += width;
    if (std::bit_cast<std::uint64_t>(row[0]) !=
        std::bit_cast<std::uint64_t>(p.time))
      return where + ": time differs";
    if (row[1] != static_cast<double>(p.n)) return where + ": sample count differs";
    const std::size_t dim = p.mean.size();
    for (std::size_t s = 0; s < dim; ++s) {
      if (!close_rel(row[2 + s], p.mean[s], 1e-12))
        return where + ": mean of species " + std::to_string(s) + " differs";
      if (!close_rel(row[2 + dim + s], p.variance[s], 1e-12))
        return where + ": variance of species " + std::to_string(s) + " differs";
    }
    return {};
  }

  // Empty when every group was consumed to the end.
  std::string finish() const {
    for (std::size_t g = 0; g < data_.size(); ++g)
      if (cursor_[g] != data_[g].size())
        return "group " + std::to_string(g) + ": missing points";
    return {};
  }

 private:
  std::vector<std::vector<double>> data_;
  std::vector<std::size_t> cursor_;
};

}  // namespace

BenchmarkResult run_benchmark(EnsembleSpec spec,
                              std::span<const std::size_t> worker_counts) {
  if (worker_counts.empty())
    throw std::invalid_argument("empty worker list");
  spec.output = OutputMode::Reduced;
  spec.full_trajectory_dir.clear();

  BenchmarkResult result;
  FlatSeries baseline(spec.groups());
  for (std::size_t i = 0; i < worker_counts.size(); ++i) {
    spec.workers = worker_counts[i];
    std::string why;
    baseline.rewind();
    auto report = run_farm(spec, [&](std::size_t g, const ReducedPoint& p) {
      if (i == 0)
        baseline.record(g, p);
      else if (why.empty())
        why = baseline.compare(g, p);
    });
    if (i > 0 && why.empty()) why = baseline.finish();
    BenchmarkRow row;
    row.workers = worker_counts[i];
    row.wall_seconds = report.wall_seconds;
    row.events = report.events;
    row.events_per_second =
        report.wall_seconds > 0 ? report.events / report.wall_seconds : 0.0;
    result.rows.push_back(row);
    if (!why.empty() && result.invariant) {
      result.invariant = false;
      result.mismatch = "workers=" + std::to_string(worker_counts[i]) +
                        " vs workers=" + std::to_string(worker_counts[0]) +
                        ": " + why;
    }
  }
  const double t0 = result.rows.front().wall_seconds;
  for (auto& row : result.rows)
    row.scalability = row.wall_seconds > 0 ? t0 / row.wall_seconds : 0.0;
  return result;
}

std::string format_benchmark_table(const BenchmarkResult& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%8s %12s %12s %14s\n", "workers",
                "wall_s", "scalability", "events_per_s");
  os << line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%8zu %12.4f %12.3f %14.4g\n",
                  row.workers, row.wall_seconds, row.scalability,
                  row.events_per_second);
    os << line;
  }
  os << "invariance: " << (r.invariant ? "PASS" : "FAIL");
  if (!r.invariant) os << " (" << r.mismatch << ")";
  os << '\n';
  return os.str();
}

}  // namespace stochfarm
