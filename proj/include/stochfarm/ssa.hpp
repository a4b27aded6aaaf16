#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stochfarm/model.hpp"
#include "stochfarm/rng.hpp"

namespace stochfarm {

struct State {
  double time = 0.0;
  std::vector<Count> counts;
};

/// One sample on a trajectory's output stream.
struct TrajectoryPoint {
  double time = 0.0;
  std::vector<Count> counts;

  friend bool operator==(const TrajectoryPoint&,
                         const TrajectoryPoint&) = default;
};

/// Emit a point after every reaction event.
struct EveryEvent {};
/// Emit after every `stride`-th event.
struct StrideSampling {
  std::uint64_t stride = 1;
};
/// Emit the held state at 0, dt, 2dt, ... and the horizon.
struct GridSampling {
  double dt = 1.0;
};

/// First (t = 0) and last (t = horizon) points are emitted under every policy.
using SamplingPolicy = std::variant<EveryEvent, StrideSampling, GridSampling>;

void validate(const SamplingPolicy& policy);

struct StepChoice {
  double tau = 0.0;
  std::size_t reaction = 0;
};

/// Direct-method selection from precomputed propensities and two uniforms in
/// (0,1): tau = -ln(u1)/a0, reaction = smallest j with cumsum_j > u2*a0.
/// Empty when a0 == 0.
std::optional<StepChoice> select_step(std::span<const double> propensities,
                                      double u1, double u2);

/// One direct-method draw from `state`. Empty when every propensity is zero.
std::optional<StepChoice> gillespie_step(const ReactionNetwork& net,
                                         std::span<const double> params,
                                         const State& state, RngStream& rng);

struct TrajectorySummary {
  std::uint64_t events = 0;
  std::uint64_t points = 0;
  State final_state;
  /// Firing count per reaction, in network order.
  std::vector<std::uint64_t> firings;
  /// Time of each reaction's first firing; +inf if it never fired.
  std::vector<double> first_firing;
};

/**
 * Incremental Gillespie trajectory.
 *
 * advance() simulates until at least one point is emitted (or the horizon is
 * reached) and returns the points produced by that call. This lets a worker
 * interleave several trajectories by simulation time.
 *
 * Emitted times are strictly increasing. When several events land on the
 * same floating-point time, the point at that time carries the state after
 * all of them.
 */
class Trajectory {
 public:
  Trajectory(const ReactionNetwork& net, std::vector<double> params,
             double horizon, RngStream rng, SamplingPolicy policy);

  std::span<const TrajectoryPoint> advance();

  bool finished() const noexcept { return finished_; }
  /// Time of the last emitted point; -inf before the first.
  double frontier() const noexcept { return frontier_; }
  double time() const noexcept { return time_; }
  std::span<const Count> counts() const noexcept { return counts_; }
  const TrajectorySummary& summary() const noexcept { return summary_; }

 private:
  struct Term {
    std::uint32_t species;
    Count coefficient;
  };
  // Reactants and net change of each reaction live in the flat terms_ and
  // deltas_ arrays, addressed by [begin, end) ranges.
  struct CompiledRate {
    const Reaction* reaction;
    bool constant;
    bool mass_action;
    double k;
    std::uint32_t reactants_begin, reactants_end;
    // Unit-coefficient reactants with at most two distinct species take a
    // fast path: unit_arity is 0, 1 or 2, or 3 for the general loop.
    std::uint32_t unit_arity;
    std::uint32_t s0, s1;
    std::uint32_t delta_begin, delta_end;
  };

  void step_once();
  void finish();
  void emit(double t);
  double compute_propensities();
  double custom_rate(const CompiledRate& c) const;
  double bad_rate(const CompiledRate& c, double a) const;

  const ReactionNetwork* net_;
  std::vector<double> params_;
  double horizon_;
  RngStream rng_;
  SamplingPolicy policy_;

  std::vector<CompiledRate> rates_;
  std::vector<Term> terms_;
  std::vector<Term> deltas_;
  std::vector<double> a_;
  std::vector<Count> counts_;
  double time_ = 0.0;
  double frontier_ = -std::numeric_limits<double>::infinity();
  bool started_ = false;
  bool finished_ = false;
  bool pending_ = false;
  double pending_time_ = 0.0;
  std::uint64_t next_grid_ = 1;

  std::vector<TrajectoryPoint> out_;
  TrajectorySummary summary_;
};

/// Runs one trajectory to the horizon, handing every emitted point to `sink`.
/// A blocking sink applies backpressure to the simulation.
TrajectorySummary run_trajectory(
    const ReactionNetwork& net, const std::map<std::string, double>& overrides,
    double horizon, RngStream rng, const SamplingPolicy& policy,
    const std::function<void(const TrajectoryPoint&)>& sink);

}  // namespace stochfarm
