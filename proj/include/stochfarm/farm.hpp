#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochfarm/model.hpp"
#include "stochfarm/moments.hpp"
#include "stochfarm/selective_memory.hpp"
#include "stochfarm/ssa.hpp"

namespace stochfarm {

struct ParameterSweep {
  std::string parameter;
  std::vector<double> values;
};

enum class OutputMode { Reduced, ReducedAndFull };

struct EnsembleSpec {
  std::shared_ptr<const ReactionNetwork> network;
  std::uint64_t replicas = 1;
  std::optional<ParameterSweep> sweep;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  SamplingPolicy policy = EveryEvent{};
  /// X-thinning factor applied by the collector; 0 means "replicas".
  std::uint64_t thin = 0;
  std::size_t workers = 1;
  OutputMode output = OutputMode::Reduced;
  /// Directory for traj_<taskid>.csv when output == ReducedAndFull.
  std::string full_trajectory_dir;
  /// Per-stream window of every SelectiveMemory and depth of every FIFO.
  std::size_t buffer_capacity = 4096;

  std::uint64_t effective_thin() const noexcept {
    return thin == 0 ? replicas : thin;
  }
  std::size_t groups() const noexcept {
    return sweep ? sweep->values.size() : 1;
  }
};

/// Throws std::invalid_argument describing the first problem found.
void validate(const EnsembleSpec& spec);

struct SimulationTask {
  std::uint64_t id = 0;
  std::size_t group = 0;
  std::uint64_t replica = 0;
  std::map<std::string, double> overrides;

  /// RNG stream index; keyed by task id so results do not depend on which
  /// worker runs the task.
  std::uint64_t stream() const noexcept { return id; }
};

/// R tasks per sweep value; group g, replica i gets id g*R + i.
std::vector<SimulationTask> unroll(const EnsembleSpec& spec);

/// Static dispatch: task id modulo worker count.
std::size_t worker_for(const SimulationTask& task, std::size_t workers);

struct WorkerStats {
  std::uint64_t tasks = 0;
  std::uint64_t events = 0;
  std::uint64_t points = 0;
};

struct RunReport {
  double wall_seconds = 0.0;
  std::uint64_t tasks = 0;
  std::uint64_t events = 0;
  /// Trajectory points produced by all workers after sampling.
  std::uint64_t trajectory_points = 0;
  /// Reduced points delivered to the sink.
  std::uint64_t reduced_points = 0;
  /// Largest number of items buffered by any single SelectiveMemory.
  std::size_t peak_buffered = 0;
  std::vector<WorkerStats> workers;

  /// Single-line `key=value ...` record.
  std::string to_record() const;
};

/// A trajectory or the collector failed; outputs of the run are incomplete.
class FarmError : public std::runtime_error {
 public:
  FarmError(const std::string& what, std::optional<std::uint64_t> task)
      : std::runtime_error(what), task_(task) {}
  std::optional<std::uint64_t> task() const noexcept { return task_; }

 private:
  std::optional<std::uint64_t> task_;
};

using ReducedSink = std::function<void(std::size_t group, const ReducedPoint&)>;

struct FarmHooks {
  /// Called from worker threads once per finished trajectory.
  std::function<void(const SimulationTask&, const TrajectorySummary&)>
      task_done;
};

/**
 * Runs the ensemble on an emitter thread, `spec.workers` worker threads and
 * a collector thread.
 *
 * Each worker interleaves its trajectories by simulation time and Y-reduces
 * them per group in a local SelectiveMemory (thin 1). The collector aligns
 * the per-worker aggregate streams in a second SelectiveMemory per group,
 * applies X-thinning and finalizes. Aggregates travel as accumulators, so the
 * output does not depend on the worker count. `sink` runs on the collector
 * thread and sees strictly increasing times within each group.
 */
RunReport run_farm(const EnsembleSpec& spec, const ReducedSink& sink,
                   const FarmHooks& hooks = {});

}  // namespace stochfarm
