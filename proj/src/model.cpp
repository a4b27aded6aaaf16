#include "stochfarm/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace stochfarm {

namespace {

bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto start = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  };
  if (!start(s[0])) return false;
  return std::all_of(s.begin() + 1, s.end(), [&](char c) {
    return start(c) || (c >= '0' && c <= '9');
  });
}

bool reserved(std::string_view s) {
  return s == "t" || s == "min" || s == "max" || s == "exp" || s == "step";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

NetworkBuilder& NetworkBuilder::parameter(std::string name, double value,
                                          std::size_t line) {
  params_.push_back({Parameter{std::move(name), value}, line});
  return *this;
}

NetworkBuilder& NetworkBuilder::species(std::string name, Count initial,
                                        std::size_t line) {
  species_.push_back({Species{std::move(name), species_.size(), initial}, line});
  return *this;
}

NetworkBuilder& NetworkBuilder::reaction(ReactionDecl decl) {
  reactions_.push_back(std::move(decl));
  return *this;
}

NetworkBuilder& NetworkBuilder::horizon(double h, std::size_t line) {
  horizon_ = h;
  horizon_line_ = line;
  return *this;
}

ReactionNetwork NetworkBuilder::build() const {
  ReactionNetwork net;
  std::unordered_map<std::string, std::size_t> first_line;
  auto claim = [&](const std::string& name, std::size_t line,
                   const char* what) {
    if (!valid_identifier(name))
      throw ModelError(std::string("invalid ") + what + " name '" + name + "'",
                       line);
    if (reserved(name))
      throw ModelError("reserved name '" + name + "' used as " + what, line);
    auto [it, inserted] = first_line.emplace(name, line);
    if (!inserted)
      throw ModelError("duplicate name '" + name + "'", line);
  };

  for (const auto& [p, line] : params_) {
    claim(p.name, line, "parameter");
    if (!std::isfinite(p.value))
      throw ModelError("parameter '" + p.name + "' is not finite", line);
    net.params_.push_back(p);
  }
  for (const auto& [s, line] : species_) {
    claim(s.name, line, "species");
    if (s.initial_count < 0)
      throw ModelError("negative initial count for species '" + s.name + "'",
                       line);
    Species copy = s;
    copy.index = net.species_.size();
    net.species_.push_back(copy);
  }

  std::set<std::string> reaction_names;
  for (const auto& d : reactions_) {
    if (!valid_identifier(d.name))
      throw ModelError("invalid reaction name '" + d.name + "'", d.line);
    if (!reaction_names.insert(d.name).second)
      throw ModelError("duplicate reaction name '" + d.name + "'", d.line);

    Reaction r;
    r.name = d.name;
    r.kind = d.kind;
    auto side = [&](const std::vector<std::pair<std::string, Count>>& in,
                    std::vector<StoichTerm>& out) {
      for (const auto& [name, coeff] : in) {
        auto idx = net.species_index(name);
        if (!idx)
          throw ModelError("unknown species '" + name + "'", d.line);
        if (coeff < 1)
          throw ModelError("coefficient of '" + name + "' must be >= 1",
                           d.line);
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& t) {
          return t.species == *idx;
        });
        if (it != out.end())
          it->coefficient += coeff;
        else
          out.push_back({*idx, coeff});
      }
    };
    side(d.reactants, r.reactants);
    side(d.products, r.products);

    if (d.rate.empty())
      throw ModelError("reaction '" + d.name + "' has no rate expression",
                       d.line);
    try {
      r.rate = d.rate.bind([&](std::string_view id)
                               -> std::optional<SymbolBinding> {
        if (id == "t") return SymbolBinding{SymbolKind::Time, 0};
        if (auto p = net.parameter_index(id))
          return SymbolBinding{SymbolKind::Parameter, *p};
        if (auto s = net.species_index(id))
          return SymbolBinding{SymbolKind::Species, *s};
        return std::nullopt;
      });
    } catch (const std::invalid_argument& e) {
      throw ModelError(std::string(e.what()) + " in reaction '" + d.name + "'",
                       d.line);
    }

    std::vector<Count> dense(net.species_.size(), 0);
    for (const auto& t : r.reactants) dense[t.species] -= t.coefficient;
    for (const auto& t : r.products) dense[t.species] += t.coefficient;
    for (std::size_t i = 0; i < dense.size(); ++i)
      if (dense[i] != 0) r.delta.push_back({i, dense[i]});
    net.reactions_.push_back(std::move(r));
  }

  if (horizon_) {
    if (!std::isfinite(*horizon_) || *horizon_ < 0)
      throw ModelError("horizon must be finite and non-negative",
                       horizon_line_);
    net.horizon_ = *horizon_;
  }
  return net;
}

std::optional<std::size_t> ReactionNetwork::species_index(
    std::string_view name) const {
  for (const auto& s : species_)
    if (s.name == name) return s.index;
  return std::nullopt;
}

std::optional<std::size_t> ReactionNetwork::parameter_index(
    std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

std::vector<Count> ReactionNetwork::initial_state() const {
  std::vector<Count> out;
  out.reserve(species_.size());
  for (const auto& s : species_) out.push_back(s.initial_count);
  return out;
}

std::vector<double> ReactionNetwork::parameter_values() const {
  std::vector<double> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::vector<double> ReactionNetwork::parameter_values(
    const std::map<std::string, double>& overrides) const {
  auto out = parameter_values();
  for (const auto& [name, value] : overrides) {
    auto idx = parameter_index(name);
    if (!idx)
      throw std::invalid_argument("override of undeclared parameter '" + name +
                                  "'");
    out[*idx] = value;
  }
  return out;
}

std::vector<std::vector<Count>> ReactionNetwork::stoichiometric_matrix()
    const {
  std::vector<std::vector<Count>> m(species_.size(),
                                    std::vector<Count>(reactions_.size(), 0));
  for (std::size_t j = 0; j < reactions_.size(); ++j)
    for (const auto& d : reactions_[j].delta) m[d.species][j] = d.coefficient;
  return m;
}

bool operator==(const ReactionNetwork& a, const ReactionNetwork& b) {
  if (std::bit_cast<std::uint64_t>(a.horizon_) !=
      std::bit_cast<std::uint64_t>(b.horizon_))
    return false;
  if (a.species_.size() != b.species_.size() ||
      a.params_.size() != b.params_.size() ||
      a.reactions_.size() != b.reactions_.size())
    return false;
  for (std::size_t i = 0; i < a.species_.size(); ++i)
    if (a.species_[i].name != b.species_[i].name ||
        a.species_[i].initial_count != b.species_[i].initial_count)
      return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i)
    if (a.params_[i].name != b.params_[i].name ||
        std::bit_cast<std::uint64_t>(a.params_[i].value) !=
            std::bit_cast<std::uint64_t>(b.params_[i].value))
      return false;
  for (std::size_t i = 0; i < a.reactions_.size(); ++i) {
    const auto& ra = a.reactions_[i];
    const auto& rb = b.reactions_[i];
    if (ra.name != rb.name || ra.kind != rb.kind ||
        ra.reactants != rb.reactants || ra.products != rb.products ||
        ra.delta != rb.delta || !(ra.rate == rb.rate))
      return false;
  }
  return true;
}

namespace {

class ModelParser {
 public:
  explicit ModelParser(std::string_view src) : src_(src) {}

  ReactionNetwork parse() {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= src_.size()) {
      auto nl = src_.find('\n', pos);
      if (nl == std::string_view::npos) nl = src_.size();
      ++line_no;
      handle_line(src_.substr(pos, nl - pos), line_no);
      pos = nl + 1;
    }
    return builder_.build();
  }

 private:
  enum class Section { None, Parameters, Species, Reactions, Simulation };

  void handle_line(std::string_view raw, std::size_t line) {
    auto hash = raw.find('#');
    auto text = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (text.empty()) return;
    if (text.front() == '[') {
      if (text.back() != ']')
        throw ModelError("malformed section header", line);
      auto name = trim(text.substr(1, text.size() - 2));
      if (name == "parameters")
        section_ = Section::Parameters;
      else if (name == "species")
        section_ = Section::Species;
      else if (name == "reactions")
        section_ = Section::Reactions;
      else if (name == "simulation")
        section_ = Section::Simulation;
      else
        throw ModelError("unknown section '" + std::string(name) + "'", line);
      return;
    }
    switch (section_) {
      case Section::None:
        throw ModelError("declaration outside of a section", line);
      case Section::Parameters: {
        auto [name, value] = assignment(text, line);
        builder_.parameter(std::string(name), real(value, line), line);
        return;
      }
      case Section::Species: {
        auto [name, value] = assignment(text, line);
        builder_.species(std::string(name), count(value, line), line);
        return;
      }
      case Section::Simulation: {
        auto [name, value] = assignment(text, line);
        if (name != "horizon")
          throw ModelError("unknown simulation setting '" + std::string(name) +
                               "'",
                           line);
        builder_.horizon(real(value, line), line);
        return;
      }
      case Section::Reactions:
        builder_.reaction(reaction(text, line));
        return;
    }
  }

  static std::pair<std::string_view, std::string_view> assignment(
      std::string_view text, std::size_t line) {
    auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ModelError("expected '<name> = <value>'", line);
    auto name = trim(text.substr(0, eq));
    auto value = trim(text.substr(eq + 1));
    if (!valid_identifier(name))
      throw ModelError("invalid name '" + std::string(name) + "'", line);
    if (value.empty()) throw ModelError("missing value", line);
    return {name, value};
  }

  static double real(std::string_view s, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      throw ModelError("malformed real '" + std::string(s) + "'", line);
    return v;
  }

  static Count count(std::string_view s, std::size_t line) {
    Count v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ModelError("malformed integer count '" + std::string(s) + "'",
                       line);
    if (v < 0)
      throw ModelError("negative initial count '" + std::string(s) + "'",
                       line);
    return v;
  }

  static std::vector<std::pair<std::string, Count>> side(std::string_view s,
                                                         std::size_t line) {
    std::vector<std::pair<std::string, Count>> out;
    s = trim(s);
    if (s.empty()) throw ModelError("empty reaction side (use '0')", line);
    if (s == "0") return out;
    std::size_t pos = 0;
    while (true) {
      auto plus = s.find('+', pos);
      auto term = trim(s.substr(
          pos, plus == std::string_view::npos ? std::string_view::npos
                                              : plus - pos));
      if (term.empty()) throw ModelError("empty term in reaction side", line);
      std::size_t digits = 0;
      while (digits < term.size() && term[digits] >= '0' &&
             term[digits] <= '9')
        ++digits;
      Count coeff = 1;
      if (digits > 0) {
        auto [ptr, ec] =
            std::from_chars(term.data(), term.data() + digits, coeff);
        if (ec != std::errc())
          throw ModelError("malformed coefficient in '" + std::string(term) +
                               "'",
                           line);
        if (coeff < 1)
          throw ModelError("coefficient must be >= 1 in '" +
                               std::string(term) + "'",
                           line);
      }
      auto name = trim(term.substr(digits));
      if (!valid_identifier(name))
        throw ModelError("malformed species term '" + std::string(term) + "'",
                         line);
      out.emplace_back(std::string(name), coeff);
      if (plus == std::string_view::npos) break;
      pos = plus + 1;
    }
    return out;
  }

  static ReactionDecl reaction(std::string_view text, std::size_t line) {
    ReactionDecl d;
    d.line = line;
    auto colon = text.find(':');
    if (colon == std::string_view::npos)
      throw ModelError("expected '<name>: <reactants> -> <products> @ <rate>'",
                       line);
    auto name = trim(text.substr(0, colon));
    if (!valid_identifier(name))
      throw ModelError("invalid reaction name '" + std::string(name) + "'",
                       line);
    d.name = std::string(name);
    auto rest = text.substr(colon + 1);
    auto at = rest.find('@');
    if (at == std::string_view::npos)
      throw ModelError("missing '@' rate in reaction '" + d.name + "'", line);
    auto equation = rest.substr(0, at);
    auto rate = rest.substr(at + 1);
    if (!rate.empty() && rate.front() == '=') {
      d.kind = RateKind::Custom;
      rate.remove_prefix(1);
    }
    auto arrow = equation.find("->");
    if (arrow == std::string_view::npos)
      throw ModelError("missing '->' in reaction '" + d.name + "'", line);
    d.reactants = side(equation.substr(0, arrow), line);
    d.products = side(equation.substr(arrow + 2), line);
    try {
      d.rate = parse_expr(rate);
    } catch (const ParseError& e) {
      throw ModelError("bad rate expression in reaction '" + d.name +
                           "': " + e.what(),
                       line);
    }
    return d;
  }

  std::string_view src_;
  Section section_ = Section::None;
  NetworkBuilder builder_;
};

void write_side(std::ostream& os, const ReactionNetwork& net,
                const std::vector<StoichTerm>& terms) {
  if (terms.empty()) {
    os << '0';
    return;
  }
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) os << " + ";
    if (terms[i].coefficient != 1) os << terms[i].coefficient << ' ';
    os << net.species()[terms[i].species].name;
  }
}

}  // namespace

ReactionNetwork parse_model(std::string_view source) {
  return ModelParser(source).parse();
}

ReactionNetwork load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model file '" + path + "'", 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

std::string serialize_model(const ReactionNetwork& net) {
  std::ostringstream os;
  os << "[parameters]\n";
  for (const auto& p : net.parameters())
    os << p.name << " = " << format_real(p.value) << '\n';
  os << "\n[species]\n";
  for (const auto& s : net.species())
    os << s.name << " = " << s.initial_count << '\n';
  os << "\n[reactions]\n";
  for (const auto& r : net.reactions()) {
    os << r.name << ": ";
    write_side(os, net, r.reactants);
    os << " -> ";
    write_side(os, net, r.products);
    os << (r.kind == RateKind::Custom ? " @= " : " @ ") << to_string(r.rate)
       << '\n';
  }
  os << "\n[simulation]\nhorizon = " << format_real(net.default_horizon())
     << '\n';
  return os.str();
}

double combinations(std::span<const StoichTerm> reactants,
                    std::span<const Count> counts) {
  double h = 1.0;
  for (const auto& t : reactants) {
    const Count x = counts[t.species];
    if (x < t.coefficient) return 0.0;
    for (Count k = 0; k < t.coefficient; ++k)
      h *= static_cast<double>(x - k);
  }
  return h;
}

void warn_negative_propensity(const std::string& reaction, double value) {
  static std::mutex mu;
  static std::set<std::string> warned;
  std::lock_guard lock(mu);
  if (!warned.insert(reaction).second) return;
  std::cerr << "warning: negative propensity " << value << " in reaction '"
            << reaction << "' clamped to 0\n";
}

double propensity(const Reaction& r, std::span<const Count> counts,
                  std::span<const double> params, double time) {
  const double h = combinations(r.reactants, counts);
  if (h == 0.0) return 0.0;
  double value = 0.0;
  try {
    value = eval_expr(r.rate, counts, params, time);
  } catch (const EvalError& e) {
    throw PropensityError("reaction '" + r.name + "': " + e.what());
  }
  if (r.kind == RateKind::MassAction) value *= h;
  if (!std::isfinite(value))
    throw PropensityError("reaction '" + r.name +
                          "': propensity is not finite");
  if (value < 0.0) {
    warn_negative_propensity(r.name, value);
    return 0.0;
  }
  return value;
}

}  // namespace stochfarm
