#pragma once

#include <cstddef>
#include <fstream>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stochfarm/moments.hpp"
#include "stochfarm/ssa.hpp"

namespace stochfarm {

/// %.17g: enough digits to read back the identical double.
std::string format_csv_real(double v);

/// Streams reduced points as `time,<sp>_mean,<sp>_var,...,n`. Each row is
/// written to the stream as soon as it arrives.
class ReducedCsvWriter {
 public:
  ReducedCsvWriter(std::ostream& os, std::vector<std::string> species);

  void write(const ReducedPoint& p);
  std::size_t rows() const noexcept { return rows_; }

 private:
  std::ostream* os_;
  std::size_t dim_;
  std::size_t rows_ = 0;
  std::string line_;
};

/// Writes header plus one row per point; returns the row count. Throws
/// std::runtime_error if the stream fails.
std::size_t write_reduced_csv(std::span<const ReducedPoint> points,
                              std::ostream& os,
                              const std::vector<std::string>& species);

/// Full-trajectory dump: `time,<species...>`.
class TrajectoryCsvWriter {
 public:
  TrajectoryCsvWriter(const std::string& path,
                      const std::vector<std::string>& species);

  void write(const TrajectoryPoint& p);
  void close();

 private:
  std::string path_;
  std::ofstream os_;
  std::string line_;
};

struct ReducedCsv {
  std::vector<std::string> species;
  std::vector<ReducedPoint> points;
};

ReducedCsv read_reduced_csv(std::istream& is);
ReducedCsv read_reduced_csv(const std::string& path);

struct TrajectoryCsv {
  std::vector<std::string> species;
  std::vector<TrajectoryPoint> points;
};

TrajectoryCsv read_trajectory_csv(std::istream& is);
TrajectoryCsv read_trajectory_csv(const std::string& path);

std::vector<std::string> species_names(const ReactionNetwork& net);

}  // namespace stochfarm
