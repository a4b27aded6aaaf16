#include "stochfarm/expr.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <unordered_map>

namespace stochfarm {

namespace {

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

int arity(Expr::Op op) {
  switch (op) {
    case Expr::Op::Literal:
    case Expr::Op::Symbol:
      return 0;
    case Expr::Op::Neg:
    case Expr::Op::Exp:
    case Expr::Op::Step:
      return 1;
    default:
      return 2;
  }
}

struct FunctionInfo {
  Expr::Op op;
  int args;
};

std::optional<FunctionInfo> lookup_function(std::string_view name) {
  if (name == "min") return FunctionInfo{Expr::Op::Min, 2};
  if (name == "max") return FunctionInfo{Expr::Op::Max, 2};
  if (name == "exp") return FunctionInfo{Expr::Op::Exp, 1};
  if (name == "step") return FunctionInfo{Expr::Op::Step, 1};
  return std::nullopt;
}

const char* function_name(Expr::Op op) {
  switch (op) {
    case Expr::Op::Min:
      return "min";
    case Expr::Op::Max:
      return "max";
    case Expr::Op::Exp:
      return "exp";
    case Expr::Op::Step:
      return "step";
    default:
      return nullptr;
  }
}

char infix_symbol(Expr::Op op) {
  switch (op) {
    case Expr::Op::Add:
      return '+';
    case Expr::Op::Sub:
      return '-';
    case Expr::Op::Mul:
      return '*';
    case Expr::Op::Div:
      return '/';
    default:
      return '\0';
  }
}

}  // namespace

std::uint32_t Expr::push(Node n) {
  nodes_.push_back(n);
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

std::uint32_t Expr::intern(std::string name) {
  for (std::uint32_t i = 0; i < symbol_names_.size(); ++i)
    if (symbol_names_[i] == name) return i;
  symbol_names_.push_back(std::move(name));
  return static_cast<std::uint32_t>(symbol_names_.size() - 1);
}

std::uint32_t Expr::append(const Expr& other) {
  const auto base = static_cast<std::uint32_t>(nodes_.size());
  for (Node n : other.nodes_) {
    if (n.op == Op::Symbol) {
      n.name = intern(other.symbol_names_[n.name]);
    } else {
      const int a = arity(n.op);
      if (a >= 1) n.lhs += base;
      if (a == 2) n.rhs += base;
    }
    nodes_.push_back(n);
  }
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Expr Expr::literal(double v) {
  Expr e;
  e.push(Node{.op = Op::Literal, .value = v});
  return e;
}

Expr Expr::symbol(std::string name) {
  Expr e;
  const auto id = e.intern(std::move(name));
  e.push(Node{.op = Op::Symbol, .name = id});
  return e;
}

Expr Expr::unary(Op op, const Expr& operand) {
  if (arity(op) != 1) throw std::invalid_argument("not a unary operator");
  Expr e;
  const auto a = e.append(operand);
  e.push(Node{.op = op, .lhs = a});
  return e;
}

Expr Expr::binary(Op op, const Expr& lhs, const Expr& rhs) {
  if (arity(op) != 2) throw std::invalid_argument("not a binary operator");
  Expr e;
  const auto a = e.append(lhs);
  const auto b = e.append(rhs);
  e.push(Node{.op = op, .lhs = a, .rhs = b});
  return e;
}

std::vector<std::string> Expr::identifiers() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) {
    if (n.op != Op::Symbol) continue;
    const auto& name = symbol_names_[n.name];
    bool seen = false;
    for (const auto& s : out) seen = seen || s == name;
    if (!seen) out.push_back(name);
  }
  return out;
}

Expr Expr::bind(
    const std::function<std::optional<SymbolBinding>(std::string_view)>&
        resolve) const {
  Expr out = *this;
  for (auto& n : out.nodes_) {
    if (n.op != Op::Symbol) continue;
    const auto& name = symbol_names_[n.name];
    auto b = resolve(name);
    if (!b || b->kind == SymbolKind::Unresolved)
      throw std::invalid_argument("unknown identifier '" + name + "'");
    n.kind = b->kind;
    n.index = b->index;
  }
  return out;
}

bool Expr::is_bound() const noexcept {
  for (const auto& n : nodes_)
    if (n.op == Op::Symbol && n.kind == SymbolKind::Unresolved) return false;
  return true;
}

bool Expr::depends_on_state() const noexcept {
  for (const auto& n : nodes_)
    if (n.op == Op::Symbol &&
        (n.kind == SymbolKind::Species || n.kind == SymbolKind::Time ||
         n.kind == SymbolKind::Unresolved))
      return true;
  return false;
}

namespace {

bool equal_at(const Expr& a, std::uint32_t ia, const Expr& b,
              std::uint32_t ib) {
  const auto& na = a.nodes()[ia];
  const auto& nb = b.nodes()[ib];
  if (na.op != nb.op) return false;
  switch (arity(na.op)) {
    case 0:
      if (na.op == Expr::Op::Literal)
        return std::bit_cast<std::uint64_t>(na.value) ==
               std::bit_cast<std::uint64_t>(nb.value);
      return a.symbol_name(na) == b.symbol_name(nb);
    case 1:
      return equal_at(a, na.lhs, b, nb.lhs);
    default:
      return equal_at(a, na.lhs, b, nb.lhs) && equal_at(a, na.rhs, b, nb.rhs);
  }
}

}  // namespace

bool operator==(const Expr& a, const Expr& b) {
  if (a.empty() || b.empty()) return a.empty() == b.empty();
  return equal_at(a, a.root(), b, b.root());
}

// Recursive descent over the grammar
//   expr  := term (('+' | '-') term)*
//   term  := unary (('*' | '/') unary)*
//   unary := '-' unary | primary
//   primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
class ExprParser {
 public:
  explicit ExprParser(std::string_view src) : src_(src) {}

  Expr parse() {
    skip_ws();
    if (at_end()) fail("empty expression", pos_);
    auto root = parse_sum();
    skip_ws();
    if (!at_end()) {
      if (peek() == ')') fail("unbalanced parenthesis", pos_);
      fail(std::string("unexpected '") + peek() + "'", pos_);
    }
    (void)root;
    return std::move(out_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg, std::size_t pos) const {
    throw ParseError(msg, pos + 1);
  }

  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  void skip_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r' ||
                         peek() == '\n'))
      ++pos_;
  }

  std::uint32_t node(Expr::Node n) { return out_.push(n); }

  std::uint32_t parse_sum() {
    auto lhs = parse_product();
    for (;;) {
      skip_ws();
      if (at_end() || (peek() != '+' && peek() != '-')) return lhs;
      const auto op = peek() == '+' ? Expr::Op::Add : Expr::Op::Sub;
      ++pos_;
      auto rhs = parse_product();
      lhs = node({.op = op, .lhs = lhs, .rhs = rhs});
    }
  }

  std::uint32_t parse_product() {
    auto lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (at_end() || (peek() != '*' && peek() != '/')) return lhs;
      const auto op = peek() == '*' ? Expr::Op::Mul : Expr::Op::Div;
      ++pos_;
      auto rhs = parse_unary();
      lhs = node({.op = op, .lhs = lhs, .rhs = rhs});
    }
  }

  std::uint32_t parse_unary() {
    skip_ws();
    if (!at_end() && peek() == '-') {
      ++pos_;
      auto operand = parse_unary();
      return node({.op = Expr::Op::Neg, .lhs = operand});
    }
    return parse_primary();
  }

  std::uint32_t parse_primary() {
    skip_ws();
    if (at_end()) fail("expected operand", pos_);
    const char c = peek();
    if (c == '(') {
      const auto open = pos_;
      ++pos_;
      auto inner = parse_sum();
      expect_close(open);
      return inner;
    }
    if (is_digit(c) || c == '.') return parse_number();
    if (is_ident_start(c)) return parse_identifier();
    if (c == ')') fail("unbalanced parenthesis", pos_);
    fail(std::string("unexpected '") + c + "', expected operand", pos_);
  }

  void expect_close(std::size_t /*open*/) {
    skip_ws();
    if (at_end()) fail("unbalanced parenthesis", pos_);
    if (peek() != ')')
      fail(std::string("expected ')' but found '") + peek() + "'", pos_);
    ++pos_;
  }

  std::uint32_t parse_number() {
    const auto start = pos_;
    while (!at_end() && (is_digit(peek()) || peek() == '.')) ++pos_;
    if (!at_end() && (peek() == 'e' || peek() == 'E')) {
      auto save = pos_;
      ++pos_;
      if (!at_end() && (peek() == '+' || peek() == '-')) ++pos_;
      if (at_end() || !is_digit(peek())) {
        pos_ = save;
      } else {
        while (!at_end() && is_digit(peek())) ++pos_;
      }
    }
    const auto text = src_.substr(start, pos_ - start);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
      fail("malformed number '" + std::string(text) + "'", start);
    if (!at_end() && is_ident_start(peek()))
      fail("malformed number '" + std::string(text) + peek() + "'", start);
    return node({.op = Expr::Op::Literal, .value = v});
  }

  std::uint32_t parse_identifier() {
    const auto start = pos_;
    while (!at_end() && is_ident_char(peek())) ++pos_;
    std::string name(src_.substr(start, pos_ - start));
    skip_ws();
    if (at_end() || peek() != '(') {
      const auto id = out_.intern(std::move(name));
      return node({.op = Expr::Op::Symbol, .name = id});
    }
    auto fn = lookup_function(name);
    if (!fn) fail("unknown function '" + name + "'", start);
    const auto open = pos_;
    ++pos_;
    std::vector<std::uint32_t> args;
    args.push_back(parse_sum());
    for (;;) {
      skip_ws();
      if (!at_end() && peek() == ',') {
        ++pos_;
        args.push_back(parse_sum());
        continue;
      }
      break;
    }
    expect_close(open);
    if (static_cast<int>(args.size()) != fn->args)
      fail("function '" + name + "' expects " + std::to_string(fn->args) +
               " argument" + (fn->args == 1 ? "" : "s"),
           start);
    return node({.op = fn->op,
                 .lhs = args[0],
                 .rhs = args.size() > 1 ? args[1] : 0u});
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Expr out_;
};

Expr parse_expr(std::string_view source) { return ExprParser(source).parse(); }

namespace {

double eval_at(const Expr& e, std::uint32_t i,
               std::span<const std::int64_t> counts,
               std::span<const double> params, double time) {
  const auto& n = e.nodes()[i];
  switch (n.op) {
    case Expr::Op::Literal:
      return n.value;
    case Expr::Op::Symbol:
      switch (n.kind) {
        case SymbolKind::Parameter:
          return params[n.index];
        case SymbolKind::Species:
          return static_cast<double>(counts[n.index]);
        case SymbolKind::Time:
          return time;
        default:
          throw EvalError("unresolved identifier '" + e.symbol_name(n) + "'");
      }
    case Expr::Op::Add:
      return eval_at(e, n.lhs, counts, params, time) +
             eval_at(e, n.rhs, counts, params, time);
    case Expr::Op::Sub:
      return eval_at(e, n.lhs, counts, params, time) -
             eval_at(e, n.rhs, counts, params, time);
    case Expr::Op::Mul:
      return eval_at(e, n.lhs, counts, params, time) *
             eval_at(e, n.rhs, counts, params, time);
    case Expr::Op::Div: {
      const double num = eval_at(e, n.lhs, counts, params, time);
      const double den = eval_at(e, n.rhs, counts, params, time);
      if (den == 0.0) throw EvalError("division by zero");
      return num / den;
    }
    case Expr::Op::Neg:
      return -eval_at(e, n.lhs, counts, params, time);
    case Expr::Op::Min: {
      const double a = eval_at(e, n.lhs, counts, params, time);
      const double b = eval_at(e, n.rhs, counts, params, time);
      return b < a ? b : a;
    }
    case Expr::Op::Max: {
      const double a = eval_at(e, n.lhs, counts, params, time);
      const double b = eval_at(e, n.rhs, counts, params, time);
      return a < b ? b : a;
    }
    case Expr::Op::Exp:
      return std::exp(eval_at(e, n.lhs, counts, params, time));
    case Expr::Op::Step:
      return eval_at(e, n.lhs, counts, params, time) > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

int precedence(Expr::Op op) {
  switch (op) {
    case Expr::Op::Add:
    case Expr::Op::Sub:
      return 1;
    case Expr::Op::Mul:
    case Expr::Op::Div:
      return 2;
    case Expr::Op::Neg:
      return 3;
    default:
      return 4;
  }
}

void render(const Expr& e, std::uint32_t i, std::string& out) {
  const auto& n = e.nodes()[i];
  switch (n.op) {
    case Expr::Op::Literal:
      out += format_real(n.value);
      return;
    case Expr::Op::Symbol:
      out += e.symbol_name(n);
      return;
    case Expr::Op::Neg: {
      out += '-';
      const bool wrap = precedence(e.nodes()[n.lhs].op) < 3;
      if (wrap) out += '(';
      render(e, n.lhs, out);
      if (wrap) out += ')';
      return;
    }
    default:
      break;
  }
  if (const char* fn = function_name(n.op)) {
    out += fn;
    out += '(';
    render(e, n.lhs, out);
    if (arity(n.op) == 2) {
      out += ", ";
      render(e, n.rhs, out);
    }
    out += ')';
    return;
  }
  const int p = precedence(n.op);
  const bool wrap_l = precedence(e.nodes()[n.lhs].op) < p;
  // Left-associative: an equal-precedence right operand needs parentheses.
  const bool wrap_r = precedence(e.nodes()[n.rhs].op) <= p;
  if (wrap_l) out += '(';
  render(e, n.lhs, out);
  if (wrap_l) out += ')';
  out += ' ';
  out += infix_symbol(n.op);
  out += ' ';
  if (wrap_r) out += '(';
  render(e, n.rhs, out);
  if (wrap_r) out += ')';
}

void render_sexpr(const Expr& e, std::uint32_t i, std::string& out) {
  const auto& n = e.nodes()[i];
  switch (n.op) {
    case Expr::Op::Literal:
      out += format_real(n.value);
      return;
    case Expr::Op::Symbol:
      out += e.symbol_name(n);
      return;
    default:
      break;
  }
  out += '(';
  if (n.op == Expr::Op::Neg)
    out += "neg";
  else if (const char* fn = function_name(n.op))
    out += fn;
  else
    out += infix_symbol(n.op);
  out += ' ';
  render_sexpr(e, n.lhs, out);
  if (arity(n.op) == 2) {
    out += ' ';
    render_sexpr(e, n.rhs, out);
  }
  out += ')';
}

}  // namespace

double eval_expr(const Expr& e, std::span<const std::int64_t> counts,
                 std::span<const double> params, double time) {
  if (e.empty()) throw EvalError("empty expression");
  const auto& nodes = e.nodes();
  constexpr std::size_t kInline = 48;
  if (nodes.size() > kInline) return eval_at(e, e.root(), counts, params, time);

  // Nodes are stored children-first and every node is reachable from the
  // root, so one forward pass evaluates the whole tree.
  double v[kInline];
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    switch (n.op) {
      case Expr::Op::Literal:
        v[i] = n.value;
        break;
      case Expr::Op::Symbol:
        switch (n.kind) {
          case SymbolKind::Parameter:
            v[i] = params[n.index];
            break;
          case SymbolKind::Species:
            v[i] = static_cast<double>(counts[n.index]);
            break;
          case SymbolKind::Time:
            v[i] = time;
            break;
          default:
            throw EvalError("unresolved identifier '" + e.symbol_name(n) + "'");
        }
        break;
      case Expr::Op::Add:
        v[i] = v[n.lhs] + v[n.rhs];
        break;
      case Expr::Op::Sub:
        v[i] = v[n.lhs] - v[n.rhs];
        break;
      case Expr::Op::Mul:
        v[i] = v[n.lhs] * v[n.rhs];
        break;
      case Expr::Op::Div:
        if (v[n.rhs] == 0.0) throw EvalError("division by zero");
        v[i] = v[n.lhs] / v[n.rhs];
        break;
      case Expr::Op::Neg:
        v[i] = -v[n.lhs];
        break;
      case Expr::Op::Min:
        v[i] = v[n.rhs] < v[n.lhs] ? v[n.rhs] : v[n.lhs];
        break;
      case Expr::Op::Max:
        v[i] = v[n.lhs] < v[n.rhs] ? v[n.rhs] : v[n.lhs];
        break;
      case Expr::Op::Exp:
        v[i] = std::exp(v[n.lhs]);
        break;
      case Expr::Op::Step:
        v[i] = v[n.lhs] > 0.0 ? 1.0 : 0.0;
        break;
    }
  }
  return v[nodes.size() - 1];
}

std::string to_string(const Expr& e) {
  std::string out;
  if (!e.empty()) render(e, e.root(), out);
  return out;
}

std::string to_sexpr(const Expr& e) {
  std::string out;
  if (!e.empty()) render_sexpr(e, e.root(), out);
  return out;
}

std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace stochfarm
