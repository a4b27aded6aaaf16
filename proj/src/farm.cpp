#include "stochfarm/farm.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <queue>
#include <sstream>
#include <thread>

#include "stochfarm/bounded_queue.hpp"
#include "stochfarm/csv.hpp"

namespace stochfarm {

void validate(const EnsembleSpec& spec) {
  if (!spec.network) throw std::invalid_argument("ensemble has no network");
  if (spec.replicas < 1)
    throw std::invalid_argument("replica count must be >= 1");
  if (spec.workers < 1) throw std::invalid_argument("worker count must be >= 1");
  if (!(std::isfinite(spec.horizon) && spec.horizon >= 0.0))
    throw std::invalid_argument("horizon must be finite and non-negative");
  if (spec.buffer_capacity < 2)
    throw std::invalid_argument("buffer capacity must be >= 2");
  validate(spec.policy);
  if (spec.sweep) {
    if (!spec.network->parameter_index(spec.sweep->parameter))
      throw std::invalid_argument("sweep over undeclared parameter '" +
                                  spec.sweep->parameter + "'");
    if (spec.sweep->values.empty())
      throw std::invalid_argument("sweep has no values");
    for (double v : spec.sweep->values)
      if (!std::isfinite(v))
        throw std::invalid_argument("sweep value is not finite");
  }
  if (spec.output == OutputMode::ReducedAndFull &&
      spec.full_trajectory_dir.empty())
    throw std::invalid_argument("full-trajectory output needs a directory");
}

std::vector<SimulationTask> unroll(const EnsembleSpec& spec) {
  validate(spec);
  std::vector<SimulationTask> tasks;
  const std::size_t groups = spec.groups();
  tasks.reserve(groups * spec.replicas);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::uint64_t i = 0; i < spec.replicas; ++i) {
      SimulationTask t;
      t.id = g * spec.replicas + i;
      t.group = g;
      t.replica = i;
      if (spec.sweep) t.overrides[spec.sweep->parameter] = spec.sweep->values[g];
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

std::size_t worker_for(const SimulationTask& task, std::size_t workers) {
  return static_cast<std::size_t>(task.id % workers);
}

std::string RunReport::to_record() const {
  std::ostringstream os;
  os << "wall_s=" << wall_seconds << " tasks=" << tasks << " events=" << events
     << " trajectory_points=" << trajectory_points
     << " reduced_points=" << reduced_points
     << " peak_buffered=" << peak_buffered << " workers=" << workers.size();
  for (std::size_t w = 0; w < workers.size(); ++w)
    os << " w" << w << "_tasks=" << workers[w].tasks << " w" << w
       << "_events=" << workers[w].events;
  return os.str();
}

namespace {

using PointQueue = BoundedQueue<AlignedPoint>;
using TaskQueue = BoundedQueue<SimulationTask>;

class TaskFailure : public std::runtime_error {
 public:
  TaskFailure(std::uint64_t task, const std::string& what)
      : std::runtime_error("task " + std::to_string(task) + ": " + what),
        task_(task) {}
  std::uint64_t task() const noexcept { return task_; }

 private:
  std::uint64_t task_;
};

class Farm {
 public:
  Farm(const EnsembleSpec& spec, const ReducedSink& sink,
       const FarmHooks& hooks)
      : spec_(spec),
        sink_(sink),
        hooks_(hooks),
        tasks_(unroll(spec)),
        groups_(spec.groups()),
        dim_(spec.network->species().size()) {
    const std::size_t w_count = spec.workers;
    task_queues_.reserve(w_count);
    for (std::size_t w = 0; w < w_count; ++w)
      task_queues_.push_back(std::make_unique<TaskQueue>(64));
    out_.resize(groups_);
    for (auto& row : out_) row.resize(w_count);
    for (const auto& t : tasks_) {
      auto& q = out_[t.group][worker_for(t, w_count)];
      if (!q) q = std::make_unique<PointQueue>(spec.buffer_capacity);
    }
    stats_.resize(w_count);
    peak_.assign(w_count + 1, 0);
  }

  RunReport run() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    threads.emplace_back([this] { guarded(std::nullopt, [&] { emitter(); }); });
    for (std::size_t w = 0; w < spec_.workers; ++w)
      threads.emplace_back([this, w] { guarded(w, [&] { worker(w); }); });
    threads.emplace_back(
        [this] { guarded(std::nullopt, [&] { collector(); }); });
    for (auto& t : threads) t.join();
    const auto stop = std::chrono::steady_clock::now();

    if (error_) throw *error_;

    RunReport r;
    r.wall_seconds = std::chrono::duration<double>(stop - start).count();
    r.tasks = tasks_.size();
    r.workers = stats_;
    for (const auto& s : stats_) {
      r.events += s.events;
      r.trajectory_points += s.points;
    }
    r.reduced_points = reduced_points_;
    for (auto p : peak_) r.peak_buffered = std::max(r.peak_buffered, p);
    return r;
  }

 private:
  template <class Body>
  void guarded(std::optional<std::size_t> /*worker*/, Body&& body) {
    try {
      body();
    } catch (const QueueCancelled&) {
      // Another thread failed first.
    } catch (const TaskFailure& e) {
      fail(FarmError(e.what(), e.task()));
    } catch (const std::exception& e) {
      fail(FarmError(e.what(), std::nullopt));
    }
  }

  void fail(FarmError err) {
    {
      std::lock_guard lock(error_mu_);
      if (!error_) error_ = std::move(err);
    }
    for (auto& q : task_queues_) q->cancel();
    for (auto& row : out_)
      for (auto& q : row)
        if (q) q->cancel();
  }

  void emitter() {
    for (const auto& t : tasks_)
      task_queues_[worker_for(t, spec_.workers)]->push(t);
    for (auto& q : task_queues_) q->close();
  }

  struct Running {
    SimulationTask task;
    Trajectory traj;
    std::size_t group;
    std::size_t stream;
    std::unique_ptr<TrajectoryCsvWriter> dump;
  };

  void worker(std::size_t w) {
    const auto& net = *spec_.network;
    std::vector<Running> runs;
    std::vector<std::size_t> per_group(groups_, 0);
    while (auto t = task_queues_[w]->pop()) {
      const std::size_t g = t->group;
      std::unique_ptr<TrajectoryCsvWriter> dump;
      if (spec_.output == OutputMode::ReducedAndFull)
        dump = std::make_unique<TrajectoryCsvWriter>(
            spec_.full_trajectory_dir + "/traj_" + std::to_string(t->id) +
                ".csv",
            species_names(net));
      std::vector<double> params;
      try {
        params = net.parameter_values(t->overrides);
      } catch (const std::exception& e) {
        throw TaskFailure(t->id, e.what());
      }
      std::optional<Trajectory> traj;
      try {
        traj.emplace(net, std::move(params), spec_.horizon,
                     RngStream(spec_.seed, t->stream()), spec_.policy);
      } catch (const std::exception& e) {
        throw TaskFailure(t->id, e.what());
      }
      runs.push_back(Running{std::move(*t), std::move(*traj), g,
                             per_group[g]++, std::move(dump)});
    }
    stats_[w].tasks = runs.size();

    std::vector<std::optional<SelectiveMemory<TrajectoryPoint>>> local(groups_);
    std::vector<std::size_t> remaining = per_group;
    for (std::size_t g = 0; g < groups_; ++g)
      if (per_group[g] > 0)
        local[g].emplace(per_group[g], dim_, 1, spec_.buffer_capacity);

    // Always advance the trajectory that holds back its group's alignment.
    using Slot = std::pair<double, std::size_t>;
    std::priority_queue<Slot, std::vector<Slot>, std::greater<>> lagging;
    for (std::size_t i = 0; i < runs.size(); ++i)
      if (!runs[i].traj.finished()) lagging.emplace(runs[i].traj.frontier(), i);
    while (!lagging.empty()) {
      const std::size_t pick = lagging.top().second;
      lagging.pop();
      auto& run = runs[pick];
      auto& sm = *local[run.group];
      PointQueue& out = *out_[run.group][w];
      auto forward = [&](AlignedPoint p) { out.push(std::move(p)); };

      std::span<const TrajectoryPoint> points;
      try {
        points = run.traj.advance();
      } catch (const std::exception& e) {
        throw TaskFailure(run.task.id, e.what());
      }
      for (const auto& p : points) {
        if (run.dump) run.dump->write(p);
        sm.push(run.stream, p, forward);
      }
      peak_[w] = std::max(peak_[w], sm.peak_buffered());

      if (run.traj.finished())
        finish_run(w, run, local, remaining);
      else
        lagging.emplace(run.traj.frontier(), pick);
    }
  }

  void finish_run(std::size_t w, Running& run,
                  std::vector<std::optional<SelectiveMemory<TrajectoryPoint>>>& local,
                  std::vector<std::size_t>& remaining) {
    auto& sm = *local[run.group];
    PointQueue& out = *out_[run.group][w];
    auto forward = [&](AlignedPoint p) { out.push(std::move(p)); };
    const auto& summary = run.traj.summary();
    stats_[w].events += summary.events;
    stats_[w].points += summary.points;
    if (run.dump) run.dump->close();
    if (hooks_.task_done) hooks_.task_done(run.task, summary);
    sm.close(run.stream, forward);
    if (--remaining[run.group] == 0) {
      sm.flush(forward);
      out.close();
    }
  }

  void collector() {
    struct Input {
      std::size_t group;
      std::size_t stream;
      PointQueue* queue;
      double frontier = -std::numeric_limits<double>::infinity();
      bool done = false;
    };
    std::vector<Input> inputs;
    std::vector<std::optional<SelectiveMemory<AlignedPoint>>> global(groups_);
    std::vector<std::size_t> open(groups_, 0);
    for (std::size_t g = 0; g < groups_; ++g) {
      for (std::size_t w = 0; w < spec_.workers; ++w)
        if (out_[g][w]) inputs.push_back({g, open[g]++, out_[g][w].get()});
      global[g].emplace(open[g], dim_, spec_.effective_thin(),
                        spec_.buffer_capacity);
    }

    std::size_t active = inputs.size();
    while (active > 0) {
      // Pull from the stream that bounds the alignment wavefront.
      Input* in = nullptr;
      for (auto& i : inputs)
        if (!i.done && (!in || i.frontier < in->frontier)) in = &i;
      const std::size_t g = in->group;
      auto deliver = [&](AlignedPoint p) {
        try {
          sink_(g, p.acc.finalize(p.time));
        } catch (const QueueCancelled&) {
          // A cancelled downstream queue is a sink failure, not ours.
          throw std::runtime_error("reduced-output sink was cancelled");
        }
        ++reduced_points_;
      };
      auto item = in->queue->pop();
      auto& sm = *global[g];
      if (!item) {
        in->done = true;
        --active;
        sm.close(in->stream, deliver);
        if (--open[g] == 0) sm.flush(deliver);
        continue;
      }
      in->frontier = item->time;
      sm.push(in->stream, std::move(*item), deliver);
      peak_.back() = std::max(peak_.back(), sm.peak_buffered());
    }
  }

  const EnsembleSpec& spec_;
  const ReducedSink& sink_;
  const FarmHooks& hooks_;
  std::vector<SimulationTask> tasks_;
  std::size_t groups_;
  std::size_t dim_;

  std::vector<std::unique_ptr<TaskQueue>> task_queues_;
  // out_[group][worker]; null where the worker has no task in the group.
  std::vector<std::vector<std::unique_ptr<PointQueue>>> out_;

  std::vector<WorkerStats> stats_;
  std::vector<std::size_t> peak_;
  std::uint64_t reduced_points_ = 0;

  std::mutex error_mu_;
  std::optional<FarmError> error_;
};

}  // namespace

RunReport run_farm(const EnsembleSpec& spec, const ReducedSink& sink,
                   const FarmHooks& hooks) {
  Farm farm(spec, sink, hooks);
  return farm.run();
}

}  // namespace stochfarm
