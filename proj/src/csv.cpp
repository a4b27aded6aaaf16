#include "stochfarm/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace stochfarm {

namespace {

void append_real(std::string& out, double v) {
  char buf[40];
  auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  (void)ec;
  out.append(buf, ptr);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos
                                       ? std::string_view::npos
                                       : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

double parse_real(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("malformed CSV number '" + std::string(s) + "'");
  return v;
}

template <class Int>
Int parse_int(std::string_view s) {
  Int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("malformed CSV integer '" + std::string(s) + "'");
  return v;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string format_csv_real(double v) {
  std::string s;
  append_real(s, v);
  return s;
}

std::vector<std::string> species_names(const ReactionNetwork& net) {
  std::vector<std::string> out;
  for (const auto& s : net.species()) out.push_back(s.name);
  return out;
}

ReducedCsvWriter::ReducedCsvWriter(std::ostream& os,
                                   std::vector<std::string> species)
    : os_(&os), dim_(species.size()) {
  std::string header = "time";
  for (const auto& s : species) header += "," + s + "_mean," + s + "_var";
  header += ",n\n";
  *os_ << header;
  if (!*os_) throw std::runtime_error("failed to write CSV header");
}

void ReducedCsvWriter::write(const ReducedPoint& p) {
  if (p.mean.size() != dim_ || p.variance.size() != dim_)
    throw std::invalid_argument("reduced point dimension mismatch");
  line_.clear();
  append_real(line_, p.time);
  for (std::size_t i = 0; i < dim_; ++i) {
    line_ += ',';
    append_real(line_, p.mean[i]);
    line_ += ',';
    append_real(line_, p.variance[i]);
  }
  line_ += ',';
  line_ += std::to_string(p.n);
  line_ += '\n';
  *os_ << line_;
  if (!*os_) throw std::runtime_error("failed to write CSV row");
  ++rows_;
}

std::size_t write_reduced_csv(std::span<const ReducedPoint> points,
                              std::ostream& os,
                              const std::vector<std::string>& species) {
  ReducedCsvWriter w(os, species);
  for (const auto& p : points) w.write(p);
  os.flush();
  if (!os) throw std::runtime_error("failed to flush CSV output");
  return w.rows();
}

TrajectoryCsvWriter::TrajectoryCsvWriter(
    const std::string& path, const std::vector<std::string>& species)
    : path_(path), os_(path, std::ios::binary | std::ios::trunc) {
  if (!os_) throw std::runtime_error("cannot open '" + path + "' for writing");
  std::string header = "time";
  for (const auto& s : species) header += "," + s;
  os_ << header << '\n';
}

void TrajectoryCsvWriter::write(const TrajectoryPoint& p) {
  line_.clear();
  append_real(line_, p.time);
  for (Count c : p.counts) {
    line_ += ',';
    line_ += std::to_string(c);
  }
  line_ += '\n';
  os_ << line_;
  if (!os_) throw std::runtime_error("failed to write '" + path_ + "'");
}

void TrajectoryCsvWriter::close() {
  os_.close();
  if (!os_) throw std::runtime_error("failed to close '" + path_ + "'");
}

ReducedCsv read_reduced_csv(std::istream& is) {
  ReducedCsv out;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV");
  line = strip_cr(line);
  auto cols = split(line);
  if (cols.size() < 2 || cols.front() != "time" || cols.back() != "n" ||
      (cols.size() - 2) % 2 != 0)
    throw std::runtime_error("not a reduced CSV header");
  for (std::size_t i = 1; i + 1 < cols.size(); i += 2) {
    auto name = std::string(cols[i]);
    const std::string suffix = "_mean";
    if (name.size() <= suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      throw std::runtime_error("unexpected column '" + name + "'");
    out.species.push_back(name.substr(0, name.size() - suffix.size()));
  }
  const std::size_t dim = out.species.size();
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != cols.size())
      throw std::runtime_error("CSV row has wrong number of fields");
    ReducedPoint p;
    p.time = parse_real(f[0]);
    p.mean.resize(dim);
    p.variance.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      p.mean[i] = parse_real(f[1 + 2 * i]);
      p.variance[i] = parse_real(f[2 + 2 * i]);
    }
    p.n = parse_int<std::uint64_t>(f.back());
    out.points.push_back(std::move(p));
  }
  return out;
}

ReducedCsv read_reduced_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_reduced_csv(in);
}

TrajectoryCsv read_trajectory_csv(std::istream& is) {
  TrajectoryCsv out;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV");
  line = strip_cr(line);
  auto cols = split(line);
  if (cols.empty() || cols.front() != "time")
    throw std::runtime_error("not a trajectory CSV header");
  for (std::size_t i = 1; i < cols.size(); ++i)
    out.species.emplace_back(cols[i]);
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != cols.size())
      throw std::runtime_error("CSV row has wrong number of fields");
    TrajectoryPoint p;
    p.time = parse_real(f[0]);
    for (std::size_t i = 1; i < f.size(); ++i)
      p.counts.push_back(parse_int<Count>(f[i]));
    out.points.push_back(std::move(p));
  }
  return out;
}

TrajectoryCsv read_trajectory_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_trajectory_csv(in);
}

}  // namespace stochfarm
