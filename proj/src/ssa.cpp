#include "stochfarm/ssa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stochfarm {

void validate(const SamplingPolicy& policy) {
  if (const auto* s = std::get_if<StrideSampling>(&policy); s && s->stride < 1)
    throw std::invalid_argument("stride must be a positive integer");
  if (const auto* g = std::get_if<GridSampling>(&policy);
      g && !(std::isfinite(g->dt) && g->dt > 0.0))
    throw std::invalid_argument("grid spacing must be positive and finite");
}

std::optional<StepChoice> select_step(std::span<const double> propensities,
                                      double u1, double u2) {
  double a0 = 0.0;
  for (double a : propensities) a0 += a;
  if (a0 == 0.0) return std::nullopt;

  StepChoice c;
  c.tau = -std::log(u1) / a0;
  const double target = u2 * a0;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < propensities.size(); ++j) {
    cumulative += propensities[j];
    if (propensities[j] > 0.0) last_positive = j;
    if (cumulative > target) {
      c.reaction = j;
      return c;
    }
  }
  // u2*a0 rounded up to a0.
  c.reaction = last_positive;
  return c;
}

std::optional<StepChoice> gillespie_step(const ReactionNetwork& net,
                                         std::span<const double> params,
                                         const State& state, RngStream& rng) {
  std::vector<double> a;
  a.reserve(net.reactions().size());
  for (const auto& r : net.reactions())
    a.push_back(propensity(r, state.counts, params, state.time));
  double a0 = 0.0;
  for (double x : a) a0 += x;
  if (a0 == 0.0) return std::nullopt;
  const double u1 = rng.uniform_open();
  const double u2 = rng.uniform_open();
  return select_step(a, u1, u2);
}

Trajectory::Trajectory(const ReactionNetwork& net, std::vector<double> params,
                       double horizon, RngStream rng, SamplingPolicy policy)
    : net_(&net),
      params_(std::move(params)),
      horizon_(horizon),
      rng_(rng),
      policy_(policy),
      counts_(net.initial_state()) {
  if (!(std::isfinite(horizon) && horizon >= 0.0))
    throw std::invalid_argument("horizon must be finite and non-negative");
  if (params_.size() != net.parameters().size())
    throw std::invalid_argument("parameter vector size mismatch");
  validate(policy_);

  const std::vector<Count> no_counts(counts_.size(), 0);
  for (const auto& r : net.reactions()) {
    CompiledRate c{};
    c.reaction = &r;
    c.constant = !r.rate.depends_on_state();
    c.mass_action = r.kind == RateKind::MassAction;
    if (c.constant) {
      try {
        c.k = eval_expr(r.rate, no_counts, params_, 0.0);
      } catch (const EvalError& e) {
        throw PropensityError("reaction '" + r.name + "': " + e.what());
      }
    }
    c.reactants_begin = static_cast<std::uint32_t>(terms_.size());
    for (const auto& t : r.reactants)
      terms_.push_back({static_cast<std::uint32_t>(t.species), t.coefficient});
    c.reactants_end = static_cast<std::uint32_t>(terms_.size());
    const bool unit = std::all_of(r.reactants.begin(), r.reactants.end(),
                                  [](const auto& t) { return t.coefficient == 1; });
    c.unit_arity = unit && r.reactants.size() <= 2
                       ? static_cast<std::uint32_t>(r.reactants.size())
                       : 3;
    if (!r.reactants.empty()) c.s0 = static_cast<std::uint32_t>(r.reactants[0].species);
    if (r.reactants.size() > 1) c.s1 = static_cast<std::uint32_t>(r.reactants[1].species);
    c.delta_begin = static_cast<std::uint32_t>(deltas_.size());
    for (const auto& d : r.delta)
      deltas_.push_back({static_cast<std::uint32_t>(d.species), d.coefficient});
    c.delta_end = static_cast<std::uint32_t>(deltas_.size());
    rates_.push_back(c);
  }
  a_.resize(rates_.size());
  summary_.firings.assign(rates_.size(), 0);
  summary_.first_firing.assign(rates_.size(),
                               std::numeric_limits<double>::infinity());
}

double Trajectory::compute_propensities() {
  double a0 = 0.0;
  const Count* x = counts_.data();
  const Term* terms = terms_.data();
  for (std::size_t j = 0; j < rates_.size(); ++j) {
    const auto& c = rates_[j];
    double h = 1.0;
    switch (c.unit_arity) {
      case 0:
        break;
      case 1:
        h = static_cast<double>(std::max<Count>(x[c.s0], 0));
        break;
      case 2:
        h = static_cast<double>(std::max<Count>(x[c.s0], 0)) *
            static_cast<double>(std::max<Count>(x[c.s1], 0));
        break;
      default:
        for (auto i = c.reactants_begin; i < c.reactants_end; ++i) {
          const Count n = x[terms[i].species];
          const Count m = terms[i].coefficient;
          if (n < m) {
            h = 0.0;
            break;
          }
          for (Count k = 0; k < m; ++k) h *= static_cast<double>(n - k);
        }
    }
    double a = 0.0;
    if (h != 0.0) {
      if (c.constant) {
        a = c.mass_action ? c.k * h : c.k;
      } else {
        a = custom_rate(c);
        if (c.mass_action) a *= h;
      }
      if (!(a >= 0.0 && a <= std::numeric_limits<double>::max()))
        a = bad_rate(c, a);
    }
    a_[j] = a;
    a0 += a;
  }
  return a0;
}

double Trajectory::custom_rate(const CompiledRate& c) const {
  try {
    return eval_expr(c.reaction->rate, counts_, params_, time_);
  } catch (const EvalError& e) {
    throw PropensityError("reaction '" + c.reaction->name + "': " + e.what());
  }
}

double Trajectory::bad_rate(const CompiledRate& c, double a) const {
  const std::string& name = c.reaction->name;
  if (!std::isfinite(a))
    throw PropensityError("reaction '" + name + "': propensity is not finite");
  warn_negative_propensity(name, a);
  return 0.0;
}

void Trajectory::emit(double t) {
  out_.push_back(TrajectoryPoint{t, counts_});
  frontier_ = t;
  ++summary_.points;
}

void Trajectory::finish() {
  if (const auto* g = std::get_if<GridSampling>(&policy_)) {
    for (;;) {
      const double gt = static_cast<double>(next_grid_) * g->dt;
      if (!(gt < horizon_)) break;
      emit(gt);
      ++next_grid_;
    }
  }
  if (pending_ && pending_time_ < horizon_) emit(pending_time_);
  pending_ = false;
  time_ = horizon_;
  emit(horizon_);
  finished_ = true;
  summary_.final_state = State{time_, counts_};
}

void Trajectory::step_once() {
  const double a0 = compute_propensities();
  if (a0 == 0.0) {
    finish();
    return;
  }
  const double u1 = rng_.uniform_open();
  const double u2 = rng_.uniform_open();
  const auto choice = select_step(a_, u1, u2);
  const double t_new = time_ + choice->tau;
  if (t_new > horizon_) {
    finish();
    return;
  }

  if (const auto* g = std::get_if<GridSampling>(&policy_)) {
    for (;;) {
      const double gt = static_cast<double>(next_grid_) * g->dt;
      if (!(gt < t_new && gt < horizon_)) break;
      emit(gt);
      ++next_grid_;
    }
  }
  if (pending_ && pending_time_ < t_new) {
    emit(pending_time_);
    pending_ = false;
  }

  const std::size_t j = choice->reaction;
  const auto& c = rates_[j];
  for (auto i = c.delta_begin; i < c.delta_end; ++i)
    counts_[deltas_[i].species] += deltas_[i].coefficient;
  time_ = t_new;
  ++summary_.events;
  if (summary_.firings[j]++ == 0) summary_.first_firing[j] = time_;

  if (!pending_) {
    bool sample = false;
    if (std::holds_alternative<EveryEvent>(policy_))
      sample = true;
    else if (const auto* s = std::get_if<StrideSampling>(&policy_))
      sample = summary_.events % s->stride == 0;
    if (sample) {
      pending_ = true;
      pending_time_ = time_;
    }
  }
  if (time_ >= horizon_) finish();
}

std::span<const TrajectoryPoint> Trajectory::advance() {
  out_.clear();
  if (finished_) return {};
  if (!started_) {
    started_ = true;
    if (horizon_ == 0.0) {
      emit(0.0);
      finished_ = true;
      summary_.final_state = State{0.0, counts_};
      return out_;
    }
    emit(0.0);
    return out_;
  }
  while (out_.empty() && !finished_) step_once();
  return out_;
}

TrajectorySummary run_trajectory(
    const ReactionNetwork& net, const std::map<std::string, double>& overrides,
    double horizon, RngStream rng, const SamplingPolicy& policy,
    const std::function<void(const TrajectoryPoint&)>& sink) {
  Trajectory traj(net, net.parameter_values(overrides), horizon, rng, policy);
  while (!traj.finished())
    for (const auto& p : traj.advance()) sink(p);
  return traj.summary();
}

}  // namespace stochfarm
