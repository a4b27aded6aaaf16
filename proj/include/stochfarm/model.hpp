#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stochfarm/expr.hpp"

namespace stochfarm {

using Count = std::int64_t;

/// Validation failure while building or parsing a model. `line` is 1-based,
/// 0 when the error is not tied to a source line.
class ModelError : public std::runtime_error {
 public:
  ModelError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " at line " + std::to_string(line)
                                : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when a propensity evaluates to NaN/inf or its expression fails.
class PropensityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Species {
  std::string name;
  std::size_t index = 0;
  Count initial_count = 0;
};

struct Parameter {
  std::string name;
  double value = 0.0;
};

struct StoichTerm {
  std::size_t species = 0;
  Count coefficient = 1;

  friend bool operator==(const StoichTerm&, const StoichTerm&) = default;
};

enum class RateKind : std::uint8_t {
  /// propensity = k(state) * number of ordered reactant combinations
  MassAction,
  /// propensity = expression value
  Custom,
};

struct Reaction {
  std::string name;
  std::vector<StoichTerm> reactants;
  std::vector<StoichTerm> products;
  RateKind kind = RateKind::MassAction;
  Expr rate;
  /// Nonzero entries of products minus reactants, ordered by species.
  std::vector<StoichTerm> delta;
};

/// Unvalidated reaction as written by a user or the model parser.
struct ReactionDecl {
  std::string name;
  std::vector<std::pair<std::string, Count>> reactants;
  std::vector<std::pair<std::string, Count>> products;
  RateKind kind = RateKind::MassAction;
  Expr rate;
  std::size_t line = 0;
};

class ReactionNetwork;

/// Collects declarations and validates them into an immutable network.
class NetworkBuilder {
 public:
  NetworkBuilder& parameter(std::string name, double value,
                            std::size_t line = 0);
  NetworkBuilder& species(std::string name, Count initial,
                          std::size_t line = 0);
  NetworkBuilder& reaction(ReactionDecl decl);
  NetworkBuilder& horizon(double h, std::size_t line = 0);

  ReactionNetwork build() const;

 private:
  struct Named {
    std::string name;
    std::size_t line;
  };
  std::vector<std::pair<Parameter, std::size_t>> params_;
  std::vector<std::pair<Species, std::size_t>> species_;
  std::vector<ReactionDecl> reactions_;
  std::optional<double> horizon_;
  std::size_t horizon_line_ = 0;
};

class ReactionNetwork {
 public:
  static constexpr double kDefaultHorizon = 100.0;

  const std::vector<Species>& species() const noexcept { return species_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  const std::vector<Reaction>& reactions() const noexcept {
    return reactions_;
  }
  double default_horizon() const noexcept { return horizon_; }

  std::optional<std::size_t> species_index(std::string_view name) const;
  std::optional<std::size_t> parameter_index(std::string_view name) const;

  std::vector<Count> initial_state() const;
  std::vector<double> parameter_values() const;
  /// Parameter vector with `overrides` applied; unknown names throw
  /// std::invalid_argument.
  std::vector<double> parameter_values(
      const std::map<std::string, double>& overrides) const;

  /// Dense species-by-reaction matrix rebuilt from the reaction deltas.
  std::vector<std::vector<Count>> stoichiometric_matrix() const;

  /// Structural identity: names, counts, parameters (bitwise), reactions and
  /// expression trees.
  friend bool operator==(const ReactionNetwork& a, const ReactionNetwork& b);

 private:
  friend class NetworkBuilder;
  ReactionNetwork() = default;

  std::vector<Species> species_;
  std::vector<Parameter> params_;
  std::vector<Reaction> reactions_;
  double horizon_ = kDefaultHorizon;
};

/// Parses the line-oriented model format:
///
///   [parameters]   name = real
///   [species]      name = count        (declaration order = state order)
///   [reactions]    name: 2 A + B -> C @ k_expr     (mass action)
///                  name: A -> 200 V @= a_expr      (full propensity)
///   [simulation]   horizon = real                  (optional)
///
/// `#` starts a comment; `0` denotes an empty side.
ReactionNetwork parse_model(std::string_view source);
ReactionNetwork load_model(const std::string& path);

/// Canonical text form accepted by parse_model.
std::string serialize_model(const ReactionNetwork& net);

/// Propensity of `r` in `counts`. Forced to zero when a reactant is below its
/// coefficient; negative expression values are clamped to zero (warned once
/// per reaction name). NaN/inf and evaluation failures raise
/// PropensityError naming the reaction.
double propensity(const Reaction& r, std::span<const Count> counts,
                  std::span<const double> params, double time);

/// Ordered reactant combinations: product of falling factorials x(x-1)..(x-m+1).
/// Zero when any count is below its coefficient.
double combinations(std::span<const StoichTerm> reactants,
                    std::span<const Count> counts);

/// Reports a clamped negative propensity; emits at most once per reaction
/// name per process.
void warn_negative_propensity(const std::string& reaction, double value);

}  // namespace stochfarm
