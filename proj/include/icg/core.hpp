#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icg {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct parse_error : error {
  int line;
  parse_error(int line, const std::string& msg)
      : error("line " + std::to_string(line) + ": " + msg), line(line) {}
};

enum class rel_kind : std::uint8_t { extensional, intensional };

struct relation_info {
  int arity = 0;
  rel_kind kind = rel_kind::extensional;
};

class Signature {
 public:
  // Declares a relation, or checks consistency with an earlier declaration.
  void declare(const std::string& name, int arity, rel_kind kind = rel_kind::extensional) {
    auto it = rels_.find(name);
    if (it == rels_.end()) {
      rels_.emplace(name, relation_info{arity, kind});
      return;
    }
    if (it->second.arity != arity)
      throw error("arity mismatch for " + name + ": " + std::to_string(it->second.arity) +
                  " vs " + std::to_string(arity));
  }

  void set_kind(const std::string& name, rel_kind kind) { rels_.at(name).kind = kind; }

  bool contains(const std::string& name) const { return rels_.count(name) > 0; }
  int arity(const std::string& name) const { return rels_.at(name).arity; }
  rel_kind kind(const std::string& name) const { return rels_.at(name).kind; }
  bool is_intensional(const std::string& name) const {
    auto it = rels_.find(name);
    return it != rels_.end() && it->second.kind == rel_kind::intensional;
  }

  const std::map<std::string, relation_info>& relations() const { return rels_; }

  int max_arity(std::optional<rel_kind> kind = std::nullopt) const {
    int m = 0;
    for (auto& [n, r] : rels_)
      if (!kind || r.kind == *kind) m = std::max(m, r.arity);
    return m;
  }

  std::vector<std::string> names(rel_kind kind) const {
    std::vector<std::string> out;
    for (auto& [n, r] : rels_)
      if (r.kind == kind) out.push_back(n);
    return out;
  }

 private:
  std::map<std::string, relation_info> rels_;
};

struct Fact {
  std::string rel;
  std::vector<std::string> args;

  auto operator<=>(const Fact&) const = default;
  bool operator==(const Fact&) const = default;
};

inline std::string to_string(const Fact& f) {
  std::string s = f.rel + "(";
  for (size_t i = 0; i < f.args.size(); ++i) {
    if (i) s += ",";
    s += f.args[i];
  }
  return s + ")";
}

class Instance {
 public:
  Instance() = default;
  explicit Instance(std::vector<Fact> facts) {
    for (auto& f : facts) sig_.declare(f.rel, static_cast<int>(f.args.size()));
    std::sort(facts.begin(), facts.end());
    facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
    facts_ = std::move(facts);
  }

  const std::vector<Fact>& facts() const { return facts_; }
  const Signature& signature() const { return sig_; }
  size_t size() const { return facts_.size(); }
  bool empty() const { return facts_.empty(); }

  std::optional<size_t> index_of(const Fact& f) const {
    auto it = std::lower_bound(facts_.begin(), facts_.end(), f);
    if (it == facts_.end() || *it != f) return std::nullopt;
    return static_cast<size_t>(it - facts_.begin());
  }
  bool contains(const Fact& f) const { return index_of(f).has_value(); }

  std::vector<std::string> active_domain() const {
    std::vector<std::string> d;
    for (auto& f : facts_) d.insert(d.end(), f.args.begin(), f.args.end());
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    return d;
  }

 private:
  Signature sig_;
  std::vector<Fact> facts_;
};

using FactValuation = std::map<Fact, bool>;

// Subinstance of facts mapped to 1.
inline Instance apply_valuation(const Instance& inst, const FactValuation& v) {
  std::vector<Fact> kept;
  for (auto& f : inst.facts()) {
    auto it = v.find(f);
    if (it == v.end()) throw error("valuation not total: missing " + to_string(f));
    if (it->second) kept.push_back(f);
  }
  if (v.size() != inst.size()) throw error("valuation mentions facts outside the instance");
  return Instance(std::move(kept));
}

// Bit i of mask selects the i-th fact in sorted order.
inline Instance apply_valuation(const Instance& inst, const std::vector<bool>& keep) {
  if (keep.size() != inst.size()) throw error("valuation not total");
  std::vector<Fact> kept;
  for (size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) kept.push_back(inst.facts()[i]);
  return Instance(std::move(kept));
}

constexpr size_t max_table_variables = 20;

struct BooleanFunctionTable {
  std::vector<std::string> variables;
  // Row r assigns variable i the value of bit i of r.
  std::vector<std::uint8_t> table;

  bool at(std::uint64_t row) const { return table.at(row) != 0; }
  bool operator==(const BooleanFunctionTable&) const = default;
};

namespace detail {

inline bool is_lower_ident_start(char c) { return c >= 'a' && c <= 'z'; }
inline bool is_upper_ident_start(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Character cursor with line tracking, `%` comments skipped as whitespace.
class Lexer {
 public:
  explicit Lexer(std::string_view text) : s_(text) {}

  void skip_ws() {
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '%') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  bool eof() {
    skip_ws();
    return pos_ >= s_.size();
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  bool accept(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }
  std::string ident() {
    skip_ws();
    size_t b = pos_;
    if (pos_ < s_.size() && (is_ident_char(s_[pos_]) && !(s_[pos_] >= '0' && s_[pos_] <= '9'))) {
      while (pos_ < s_.size() && is_ident_char(s_[pos_])) ++pos_;
    }
    if (b == pos_) fail("expected identifier");
    return std::string(s_.substr(b, pos_ - b));
  }
  // Raw run of characters up to one of the stop characters.
  std::string until(std::string_view stops) {
    skip_ws();
    size_t b = pos_;
    while (pos_ < s_.size() && stops.find(s_[pos_]) == std::string_view::npos && s_[pos_] != '\n')
      ++pos_;
    return std::string(s_.substr(b, pos_ - b));
  }
  [[noreturn]] void fail(const std::string& msg) const {
    std::string near;
    if (pos_ < s_.size()) near = " near '" + std::string(s_.substr(pos_, 12)) + "'";
    throw parse_error(line_, msg + near);
  }
  int line() const { return line_; }

 private:
  std::string_view s_;
  size_t pos_ = 0;
  int line_ = 1;
};

inline Fact parse_fact(Lexer& lx) {
  Fact f;
  f.rel = lx.ident();
  if (!is_upper_ident_start(f.rel[0])) lx.fail("relation names start with an uppercase letter");
  lx.expect("(");
  if (!lx.accept(")")) {
    do {
      std::string c = lx.ident();
      if (!is_lower_ident_start(c[0])) lx.fail("constants start with a lowercase letter");
      f.args.push_back(std::move(c));
    } while (lx.accept(","));
    lx.expect(")");
  }
  if (f.args.empty()) lx.fail("facts need at least one argument");
  return f;
}

}  // namespace detail

inline Instance parse_instance(std::string_view text) {
  detail::Lexer lx(text);
  Signature sig;
  std::vector<Fact> facts;
  while (!lx.eof()) {
    int line = lx.line();
    Fact f = detail::parse_fact(lx);
    lx.expect(".");
    try {
      sig.declare(f.rel, static_cast<int>(f.args.size()));
    } catch (const error& e) {
      throw parse_error(line, e.what());
    }
    facts.push_back(std::move(f));
  }
  return Instance(std::move(facts));
}

inline std::string to_text(const Instance& inst) {
  std::string out;
  for (auto& f : inst.facts()) out += to_string(f) + ".\n";
  return out;
}

}  // namespace icg
