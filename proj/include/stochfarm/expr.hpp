#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stochfarm {

/// Syntax error in a propensity expression. `offset` is the 1-based byte
/// position where the problem was detected (one past the end for EOF).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SymbolKind : std::uint8_t { Unresolved, Parameter, Species, Time };

/// What a free identifier resolves to once an expression is attached to a
/// network. `index` is the position in the parameter or species vector.
struct SymbolBinding {
  SymbolKind kind;
  std::size_t index = 0;
};

/**
 * Immutable arithmetic expression over literals, parameters, species counts
 * and the simulation time `t`.
 *
 * Nodes are stored flat, children before parents, so evaluation walks a
 * contiguous array. Identifiers stay unresolved until bind() maps them onto
 * parameter/species slots.
 */
class Expr {
 public:
  enum class Op : std::uint8_t {
    Literal,
    Symbol,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Min,
    Max,
    Exp,
    Step
  };

  struct Node {
    Op op;
    SymbolKind kind = SymbolKind::Unresolved;
    std::uint32_t lhs = 0;
    std::uint32_t rhs = 0;
    // Literal value, or bound slot index for symbols.
    double value = 0.0;
    std::size_t index = 0;
    // Position in symbol_names_ for Symbol nodes.
    std::uint32_t name = 0;
  };

  Expr() = default;

  static Expr literal(double v);
  static Expr symbol(std::string name);
  static Expr unary(Op op, const Expr& operand);
  static Expr binary(Op op, const Expr& lhs, const Expr& rhs);

  bool empty() const noexcept { return nodes_.empty(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::uint32_t root() const noexcept {
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }
  const std::string& symbol_name(const Node& n) const {
    return symbol_names_[n.name];
  }

  /// Distinct identifiers referenced, in first-use order.
  std::vector<std::string> identifiers() const;

  /// Resolves every identifier through `resolve`; throws std::invalid_argument
  /// naming the first identifier it cannot resolve.
  Expr bind(const std::function<std::optional<SymbolBinding>(std::string_view)>&
                resolve) const;

  bool is_bound() const noexcept;
  /// True if the value can change with species counts or time.
  bool depends_on_state() const noexcept;

  friend bool operator==(const Expr& a, const Expr& b);

  // Parser builds nodes directly.
  friend class ExprParser;

 private:
  std::uint32_t push(Node n);
  std::uint32_t append(const Expr& other);
  std::uint32_t intern(std::string name);

  std::vector<Node> nodes_;
  std::vector<std::string> symbol_names_;
};

Expr parse_expr(std::string_view source);

/// Evaluates a bound expression. Throws EvalError on division by zero or on
/// an unresolved identifier.
double eval_expr(const Expr& e, std::span<const std::int64_t> counts,
                 std::span<const double> params, double time);

/// Infix rendering that reparses to a structurally identical tree.
std::string to_string(const Expr& e);

/// Fully parenthesized prefix form, e.g. "(- beta (* K F))". Test/debug aid.
std::string to_sexpr(const Expr& e);

/// Shortest decimal form of `v` that reads back bitwise identical.
std::string format_real(double v);

}  // namespace stochfarm
