#include "stochfarm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "stochfarm/benchmark.hpp"
#include "stochfarm/bounded_queue.hpp"
#include "stochfarm/csv.hpp"
#include "stochfarm/farm.hpp"

namespace stochfarm {

namespace fs = std::filesystem;

std::string group_output_path(const std::string& path,
                              const std::string& param,
                              const std::string& label) {
  fs::path p(path);
  std::string name =
      p.stem().string() + "_" + param + "=" + label + p.extension().string();
  return (p.parent_path() / name).string();
}

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SweepArg {
  ParameterSweep sweep;
  std::vector<std::string> labels;
};

SweepArg parse_sweep(const std::string& text) {
  SweepArg out;
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("--sweep expects name=v1,v2,...");
  out.sweep.parameter = text.substr(0, eq);
  std::string_view rest(text);
  rest.remove_prefix(eq + 1);
  while (true) {
    auto comma = rest.find(',');
    auto tok = rest.substr(0, comma);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
      throw UsageError("bad sweep value '" + std::string(tok) + "'");
    out.sweep.values.push_back(v);
    out.labels.emplace_back(tok);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

/// Options shared by `simulate` and `benchmark`.
struct EnsembleArgs {
  std::string model;
  std::uint64_t trajectories = 1;
  std::uint64_t seed = 0;
  std::optional<double> horizon;
  std::optional<std::uint64_t> stride;
  std::optional<double> grid;
  std::optional<std::uint64_t> thin;
  std::size_t buffer = 4096;

  void attach(CLI::App& app) {
    app.add_option("model", model, "model file")->required();
    app.add_option("--trajectories,-R", trajectories,
                   "replicas per ensemble group")
        ->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "ensemble seed");
    app.add_option("--horizon", horizon,
                   "simulated end time (default: model horizon)");
    auto* s = app.add_option("--stride", stride,
                             "emit every s-th event (plus first/last)");
    auto* g = app.add_option("--grid", grid, "emit the held state every dt");
    s->excludes(g);
    app.add_option("--thin", thin,
                   "X-thinning factor (default: trajectories)")
        ->check(CLI::PositiveNumber);
    app.add_option("--buffer", buffer, "per-stream window and FIFO depth")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 24));
  }

  EnsembleSpec build(std::shared_ptr<const ReactionNetwork> net) const {
    EnsembleSpec spec;
    spec.horizon = horizon.value_or(net->default_horizon());
    spec.network = std::move(net);
    spec.replicas = trajectories;
    spec.seed = seed;
    if (stride)
      spec.policy = StrideSampling{*stride};
    else if (grid)
      spec.policy = GridSampling{*grid};
    spec.thin = thin.value_or(0);
    spec.buffer_capacity = buffer;
    return spec;
  }
};

std::shared_ptr<const ReactionNetwork> load(const std::string& path) {
  return std::make_shared<const ReactionNetwork>(load_model(path));
}

class OutputFiles {
 public:
  OutputFiles(std::vector<std::string> paths,
              const std::vector<std::string>& species, std::size_t depth)
      : paths_(std::move(paths)) {
    for (const auto& p : paths_) {
      auto f = std::make_unique<File>(depth);
      f->os.open(p, std::ios::binary | std::ios::trunc);
      if (!f->os) throw std::runtime_error("cannot open '" + p + "' for writing");
      f->writer.emplace(f->os, species);
      files_.push_back(std::move(f));
    }
    for (std::size_t g = 0; g < files_.size(); ++g)
      threads_.emplace_back([this, g] { drain(g); });
  }

  ~OutputFiles() {
    cancel();
    join();
  }

  void push(std::size_t g, const ReducedPoint& p) { files_[g]->queue.push(p); }

  /// Closes every queue, waits for the writers and reports the first write
  /// error, if any.
  void finish() {
    for (auto& f : files_) f->queue.close();
    join();
    for (auto& f : files_) {
      f->os.flush();
      if (!f->os) fail("write to output failed");
    }
    if (error_) throw std::runtime_error(*error_);
  }

  void cancel() {
    for (auto& f : files_) f->queue.cancel();
  }

  /// Renames every output to `<path>.invalid`.
  void invalidate() {
    join();
    for (auto& f : files_) f->os.close();
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::rename(p, p + ".invalid", ec);
    }
  }

  std::size_t rows(std::size_t g) const { return files_[g]->writer->rows(); }

 private:
  struct File {
    explicit File(std::size_t depth) : queue(depth) {}
    std::ofstream os;
    std::optional<ReducedCsvWriter> writer;
    BoundedQueue<ReducedPoint> queue;
  };

  void drain(std::size_t g) {
    try {
      while (auto p = files_[g]->queue.pop()) files_[g]->writer->write(*p);
    } catch (const QueueCancelled&) {
    } catch (const std::exception& e) {
      fail(e.what());
      files_[g]->queue.cancel();
    }
  }

  void fail(const std::string& msg) {
    std::lock_guard lock(mu_);
    if (!error_) error_ = msg;
  }

  void join() {
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

  std::vector<std::string> paths_;
  std::vector<std::unique_ptr<File>> files_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::optional<std::string> error_;
};

int simulate(const EnsembleArgs& ens, std::size_t workers,
             const std::optional<std::string>& sweep_text,
             const std::string& out_path,
             const std::optional<std::string>& full_dir, std::ostream& out,
             std::ostream& err) {
  std::shared_ptr<const ReactionNetwork> net;
  EnsembleSpec spec;
  std::vector<std::string> labels;
  try {
    net = load(ens.model);
    spec = ens.build(net);
    spec.workers = workers;
    if (sweep_text) {
      auto s = parse_sweep(*sweep_text);
      spec.sweep = std::move(s.sweep);
      labels = std::move(s.labels);
    }
    if (full_dir) {
      spec.output = OutputMode::ReducedAndFull;
      spec.full_trajectory_dir = *full_dir;
    }
    validate(spec);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  std::vector<std::string> paths;
  if (spec.sweep) {
    for (const auto& l : labels)
      paths.push_back(group_output_path(out_path, spec.sweep->parameter, l));
  } else {
    paths.push_back(out_path);
  }

  try {
    if (full_dir) fs::create_directories(*full_dir);
    OutputFiles files(paths, species_names(*net), spec.buffer_capacity);
    RunReport report;
    try {
      report = run_farm(spec, [&](std::size_t g, const ReducedPoint& p) {
        files.push(g, p);
      });
      files.finish();
    } catch (...) {
      files.cancel();
      files.invalidate();
      throw;
    }
    err << report.to_record() << '\n';
    for (std::size_t g = 0; g < paths.size(); ++g)
      out << paths[g] << ": " << files.rows(g) << " rows\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int benchmark(const EnsembleArgs& ens, const std::vector<std::size_t>& list,
              std::ostream& out, std::ostream& err) {
  EnsembleSpec spec;
  try {
    spec = ens.build(load(ens.model));
    if (list.empty()) throw UsageError("--workers-list is empty");
    for (auto w : list)
      if (w < 1) throw UsageError("worker counts must be >= 1");
    validate(spec);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  BenchmarkResult result;
  try {
    result = run_benchmark(spec, list);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  out << format_benchmark_table(result);
  return result.invariant ? kExitOk : kExitSelfCheck;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Parallel Gillespie ensembles with online time-aligned reduction",
               "stochfarm"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "run an ensemble and write reduced CSV");
  EnsembleArgs sim_args;
  sim_args.attach(*sim);
  std::size_t workers = 1;
  std::optional<std::string> sweep;
  std::string out_path;
  std::optional<std::string> full_dir;
  sim->add_option("--workers,-W", workers, "worker threads")
      ->check(CLI::PositiveNumber);
  sim->add_option("--sweep", sweep, "parameter sweep name=v1,v2,...");
  sim->add_option("--out,-o", out_path, "reduced CSV path")->required();
  sim->add_option("--full-traj", full_dir,
                  "also write traj_<taskid>.csv per trajectory here");

  auto* bench = app.add_subcommand("benchmark", "measure scalability over worker counts");
  EnsembleArgs bench_args;
  bench_args.attach(*bench);
  std::vector<std::size_t> list{1};
  bench->add_option("--workers-list", list, "comma-separated worker counts")
      ->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
    return kExitUsage;
  }

  if (sim->parsed())
    return simulate(sim_args, workers, sweep, out_path, full_dir, out, err);
  return benchmark(bench_args, list, out, err);
}

}  // namespace stochfarm
