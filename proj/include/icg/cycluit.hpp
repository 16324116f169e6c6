#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "graph.hpp"

namespace icg {

using GateId = std::uint32_t;

enum class GateType : std::uint8_t { input, conj, disj, negation };

inline const char* gate_keyword(GateType t) {
  switch (t) {
    case GateType::input:
      return "input";
    case GateType::conj:
      return "AND";
    case GateType::disj:
      return "OR";
    case GateType::negation:
      return "NOT";
  }
  return "?";
}

// Boolean circuit whose wires may form cycles. An AND with no input is the constant 1, an OR with none is 0.
class Cycluit {
 public:
  GateId add_input(std::string name) {
    GateId g = reserve();
    type_[g] = GateType::input;
    names_[g] = std::move(name);
    defined_[g] = 1;
    return g;
  }
  GateId add_gate(GateType t, const std::vector<GateId>& ins) {
    GateId g = reserve();
    define(g, t, ins);
    return g;
  }
  GateId constant(bool v) { return add_gate(v ? GateType::conj : GateType::disj, {}); }

  // A gate whose type and inputs are supplied later with define().
  GateId reserve() {
    type_.push_back(GateType::disj);
    first_.push_back(0);
    count_.push_back(0);
    names_.emplace_back();
    defined_.push_back(0);
    return static_cast<GateId>(type_.size()) - 1;
  }
  void define(GateId g, GateType t, const std::vector<GateId>& ins) {
    if (defined_[g]) throw error("gate defined twice");
    if (t == GateType::input) throw error("use add_input for inputs");
    if (t == GateType::negation && ins.size() != 1) throw error("NOT gates take exactly one input");
    type_[g] = t;
    first_[g] = static_cast<std::uint32_t>(wires_.size());
    count_[g] = static_cast<std::uint32_t>(ins.size());
    wires_.insert(wires_.end(), ins.begin(), ins.end());
    defined_[g] = 1;
  }
  void set_name(GateId g, std::string n) { names_[g] = std::move(n); }
  void set_output(GateId g) { output_ = g; }

  size_t size() const { return type_.size(); }
  size_t wire_count() const {
    size_t n = 0;
    for (auto c : count_) n += c;
    return n;
  }
  GateType type(GateId g) const { return type_[g]; }
  bool is_defined(GateId g) const { return defined_[g] != 0; }
  const GateId* ins_begin(GateId g) const { return wires_.data() + first_[g]; }
  const GateId* ins_end(GateId g) const { return wires_.data() + first_[g] + count_[g]; }
  std::vector<GateId> inputs_of(GateId g) const { return {ins_begin(g), ins_end(g)}; }
  size_t fan_in(GateId g) const { return count_[g]; }
  const std::string& name(GateId g) const { return names_[g]; }
  GateId output() const { return output_; }

  std::vector<GateId> input_gates() const {
    std::vector<GateId> out;
    for (GateId g = 0; g < size(); ++g)
      if (type_[g] == GateType::input) out.push_back(g);
    return out;
  }
  bool is_monotone() const {
    return std::none_of(type_.begin(), type_.end(), [](GateType t) { return t == GateType::negation; });
  }
  void check_complete() const {
    for (GateId g = 0; g < size(); ++g)
      if (!defined_[g]) throw error("gate " + std::to_string(g) + " reserved but never defined");
    if (output_ >= size()) throw error("output gate missing");
  }

  // Wire list as (from, to) pairs.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> wire_edges() const {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
    for (GateId g = 0; g < size(); ++g)
      for (auto* p = ins_begin(g); p != ins_end(g); ++p) e.push_back({*p, g});
    return e;
  }
  Csr consumers() const { return Csr::from_edges(size(), wire_edges()); }

 private:
  std::vector<GateType> type_;
  std::vector<std::uint32_t> first_, count_;
  std::vector<GateId> wires_;
  std::vector<std::string> names_;
  std::vector<std::uint8_t> defined_;
  GateId output_ = 0;
};

using GateValuation = std::vector<std::uint8_t>;

struct cycluit_stratification_error : error {
  std::vector<GateId> cycle;
  explicit cycluit_stratification_error(std::vector<GateId> c)
      : error("cycle through a NOT gate: " + join(c)), cycle(std::move(c)) {}
  static std::string join(const std::vector<GateId>& c) {
    std::string s;
    for (size_t i = 0; i < c.size(); ++i) s += (i ? " -> g" : "g") + std::to_string(c[i]);
    return s;
  }
};

inline bool is_valid_stratification(const Cycluit& c, const std::vector<int>& s) {
  if (s.size() != c.size()) return false;
  for (GateId g = 0; g < c.size(); ++g) {
    if ((s[g] == 0) != (c.type(g) == GateType::input)) return false;
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p)
      if (c.type(g) == GateType::negation ? s[*p] >= s[g] : s[*p] > s[g]) return false;
  }
  return true;
}

// Inputs get 0; other gates the least level allowed by their inputs, at least 1.
inline std::vector<int> stratify_cycluit(const Cycluit& c) {
  const size_t n = c.size();
  auto edges = c.wire_edges();
  Csr g = Csr::from_edges(n, edges);
  auto scc = strongly_connected_components(g);
  for (GateId v = 0; v < n; ++v) {
    if (c.type(v) != GateType::negation) continue;
    GateId in = *c.ins_begin(v);
    if (scc.component[in] != scc.component[v]) continue;
    // Path v -> ... -> in inside the component closes the cycle.
    std::vector<std::int64_t> prev(n, -1);
    std::vector<GateId> queue{v};
    prev[v] = v;
    for (size_t i = 0; i < queue.size() && prev[in] < 0; ++i)
      for (auto* p = g.begin(queue[i]); p != g.end(queue[i]); ++p)
        if (prev[*p] < 0 && scc.component[*p] == scc.component[v]) {
          prev[*p] = queue[i];
          queue.push_back(*p);
        }
    std::vector<GateId> cycle{in};
    for (GateId x = in; x != v;) {
      x = static_cast<GateId>(prev[x]);
      cycle.push_back(x);
    }
    std::reverse(cycle.begin(), cycle.end());
    cycle.push_back(v);
    throw cycluit_stratification_error(cycle);
  }
  std::vector<std::vector<GateId>> members(scc.count);
  for (GateId v = 0; v < n; ++v) members[scc.component[v]].push_back(v);
  std::vector<int> level(scc.count, 0);
  for (size_t comp = scc.count; comp-- > 0;) {
    int l = 0;
    bool has_input = false;
    for (GateId v : members[comp]) {
      if (c.type(v) == GateType::input) {
        has_input = true;
        continue;
      }
      l = std::max(l, 1);
      for (auto* p = c.ins_begin(v); p != c.ins_end(v); ++p)
        if (scc.component[*p] != comp) l = std::max(l, level[scc.component[*p]] + (c.type(v) == GateType::negation));
    }
    level[comp] = has_input ? 0 : l;
  }
  std::vector<int> out(n);
  for (GateId v = 0; v < n; ++v) out[v] = level[scc.component[v]];
  return out;
}

inline bool is_acyclic(const Cycluit& c) {
  auto scc = strongly_connected_components(c.consumers());
  if (scc.count != c.size()) return false;
  for (GateId g = 0; g < c.size(); ++g)
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p)
      if (*p == g) return false;
  return true;
}

namespace detail {

inline void require_monotone(const Cycluit& c) {
  if (!c.is_monotone()) throw error("cycluit has NOT gates");
}

inline bool input_value(const Cycluit& c, GateId g, const GateValuation& v) {
  if (v.size() == c.size()) return v[g] != 0;
  throw error("valuation size does not match the cycluit");
}

}  // namespace detail

// Input valuations are indexed by gate id; entries of non-input gates are ignored.
inline GateValuation evaluate_monotone_naive(const Cycluit& c, const GateValuation& v) {
  detail::require_monotone(c);
  GateValuation val(c.size(), 0);
  for (GateId g = 0; g < c.size(); ++g)
    if (c.type(g) == GateType::input) val[g] = detail::input_value(c, g, v);
  for (bool changed = true; changed;) {
    changed = false;
    for (GateId g = 0; g < c.size(); ++g) {
      if (val[g] || c.type(g) == GateType::input) continue;
      bool now;
      if (c.type(g) == GateType::disj)
        now = std::any_of(c.ins_begin(g), c.ins_end(g), [&](GateId x) { return val[x] != 0; });
      else
        now = std::all_of(c.ins_begin(g), c.ins_end(g), [&](GateId x) { return val[x] != 0; });
      if (now) {
        val[g] = 1;
        changed = true;
      }
    }
  }
  return val;
}

struct EvaluationStats {
  size_t wires_visited = 0;  // wires carrying a 1 into a gate of their consumer's stratum
};

// Stratified least-fixpoint evaluation with per-AND counters; reuses the consumer lists across calls.
class CycluitEvaluator {
 public:
  explicit CycluitEvaluator(const Cycluit& c) : c_(c), out_(c.consumers()) {}

  GateValuation monotone(const GateValuation& v, EvaluationStats* stats = nullptr) const {
    detail::require_monotone(c_);
    std::vector<int> one(c_.size(), 1);
    for (GateId g = 0; g < c_.size(); ++g)
      if (c_.type(g) == GateType::input) one[g] = 0;
    return run(v, one, 1, stats);
  }

  GateValuation stratified(const GateValuation& v, const std::vector<int>* strat = nullptr,
                           EvaluationStats* stats = nullptr) const {
    if (strat) {
      if (!is_valid_stratification(c_, *strat)) throw error("invalid stratification");
      int m = 0;
      for (int s : *strat) m = std::max(m, s);
      return run(v, *strat, m, stats);
    }
    std::call_once(strat_once_, [&] { strat_ = stratify_cycluit(c_); });
    int m = 0;
    for (int s : *strat_) m = std::max(m, s);
    return run(v, *strat_, m, stats);
  }

  const Cycluit& cycluit() const { return c_; }

 private:
  GateValuation run(const GateValuation& v, const std::vector<int>& strat, int m, EvaluationStats* stats) const {
    const size_t n = c_.size();
    GateValuation val(n, 0);
    std::vector<std::vector<GateId>> by_stratum(m + 1);
    for (GateId g = 0; g < n; ++g) {
      if (c_.type(g) == GateType::input)
        val[g] = detail::input_value(c_, g, v);
      else
        by_stratum[strat[g]].push_back(g);
    }
    std::vector<std::uint32_t> missing(n, 0);
    std::vector<GateId> work;
    size_t visited = 0;
    for (int s = 1; s <= m; ++s) {
      work.clear();
      for (GateId g : by_stratum[s])
        if (c_.type(g) == GateType::negation) val[g] = !val[*c_.ins_begin(g)];
      for (GateId g : by_stratum[s]) {
        auto t = c_.type(g);
        if (t == GateType::negation) continue;
        std::uint32_t miss = 0;
        bool any = false;
        for (auto* p = c_.ins_begin(g); p != c_.ins_end(g); ++p) {
          bool fixed = strat[*p] < s || c_.type(*p) == GateType::negation;
          bool on = fixed && val[*p];
          any |= on;
          if (!on) ++miss;
          visited += on;
        }
        missing[g] = miss;
        if ((t == GateType::conj && miss == 0) || (t == GateType::disj && any)) {
          val[g] = 1;
          work.push_back(g);
        }
      }
      while (!work.empty()) {
        GateId g = work.back();
        work.pop_back();
        for (auto* p = out_.begin(g); p != out_.end(g); ++p) {
          GateId h = *p;
          if (strat[h] != s || c_.type(h) == GateType::negation) continue;
          ++visited;
          if (val[h]) continue;
          if (c_.type(h) == GateType::disj || --missing[h] == 0) {
            val[h] = 1;
            work.push_back(h);
          }
        }
      }
    }
    if (stats) stats->wires_visited = visited;
    return val;
  }

  const Cycluit& c_;
  Csr out_;
  mutable std::once_flag strat_once_;
  mutable std::optional<std::vector<int>> strat_;
};

inline GateValuation evaluate_monotone_linear(const Cycluit& c, const GateValuation& v,
                                              EvaluationStats* stats = nullptr) {
  return CycluitEvaluator(c).monotone(v, stats);
}

inline GateValuation evaluate_stratified(const Cycluit& c, const GateValuation& v,
                                         const std::vector<int>* strat = nullptr) {
  return CycluitEvaluator(c).stratified(v, strat);
}

// One hyperedge per gate and one per wire, for checking tree decompositions of the wire graph.
inline std::vector<std::vector<GateId>> wire_hyperedges(const Cycluit& c) {
  std::vector<std::vector<GateId>> out;
  for (GateId g = 0; g < c.size(); ++g) {
    out.push_back({g});
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) out.push_back({*p, g});
  }
  return out;
}

// Valuation of the input gates given in input_gates() order.
inline GateValuation valuation_from_inputs(const Cycluit& c, const std::vector<bool>& bits) {
  GateValuation v(c.size(), 0);
  auto ins = c.input_gates();
  if (bits.size() != ins.size()) throw error("expected " + std::to_string(ins.size()) + " input values");
  for (size_t i = 0; i < ins.size(); ++i) v[ins[i]] = bits[i];
  return v;
}

// ---------------------------------------------------------------------------
// Text format

inline std::vector<std::string> gate_names(const Cycluit& c) {
  std::vector<std::string> names(c.size());
  std::set<std::string> used;
  for (GateId g = 0; g < c.size(); ++g)
    if (!c.name(g).empty() && used.insert(c.name(g)).second) names[g] = c.name(g);
  for (GateId g = 0; g < c.size(); ++g) {
    if (!names[g].empty()) continue;
    std::string n = "g" + std::to_string(g);
    while (used.count(n)) n += "_";
    used.insert(n);
    names[g] = n;
  }
  return names;
}

inline std::string to_cycluit_text(const Cycluit& c) {
  auto names = gate_names(c);
  std::ostringstream os;
  for (GateId g = 0; g < c.size(); ++g) {
    if (c.type(g) == GateType::input) {
      os << "input " << names[g] << "\n";
      continue;
    }
    os << names[g] << " = " << gate_keyword(c.type(g)) << "(";
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) os << (p == c.ins_begin(g) ? "" : ", ") << names[*p];
    os << ")\n";
  }
  if (c.size()) os << "output " << names[c.output()] << "\n";
  return os.str();
}

inline Cycluit parse_cycluit(std::string_view text) {
  detail::Lexer lx(text);
  struct Decl {
    std::string name;
    GateType type;
    std::vector<std::string> ins;
    int line;
  };
  std::vector<Decl> decls;
  std::unordered_map<std::string, GateId> id;
  std::optional<std::string> out;
  while (!lx.eof()) {
    int line = lx.line();
    std::string head = lx.ident();
    if (head == "output") {
      if (out) lx.fail("second output declaration");
      out = lx.ident();
      continue;
    }
    Decl d{head, GateType::input, {}, line};
    if (head == "input") {
      d.name = lx.ident();
    } else {
      lx.expect("=");
      std::string kw = lx.ident();
      if (kw == "AND")
        d.type = GateType::conj;
      else if (kw == "OR")
        d.type = GateType::disj;
      else if (kw == "NOT")
        d.type = GateType::negation;
      else
        lx.fail("unknown gate type " + kw);
      lx.expect("(");
      if (!lx.accept(")")) {
        do d.ins.push_back(lx.ident());
        while (lx.accept(","));
        lx.expect(")");
      }
      if (d.type == GateType::negation && d.ins.size() != 1) lx.fail("NOT gates take exactly one input");
    }
    if (!id.emplace(d.name, static_cast<GateId>(decls.size())).second) lx.fail("gate " + d.name + " declared twice");
    decls.push_back(std::move(d));
  }
  // Gate ids follow declaration order.
  Cycluit c;
  for (auto& d : decls) {
    if (d.type == GateType::input)
      c.add_input(d.name);
    else
      c.set_name(c.reserve(), d.name);
  }
  for (size_t g = 0; g < decls.size(); ++g) {
    auto& d = decls[g];
    if (d.type == GateType::input) continue;
    std::vector<GateId> ins;
    for (auto& n : d.ins) {
      auto it = id.find(n);
      if (it == id.end()) throw parse_error(d.line, "gate " + n + " is used but never declared");
      ins.push_back(it->second);
    }
    c.define(static_cast<GateId>(g), d.type, ins);
  }
  if (!out) throw parse_error(lx.line(), "missing output declaration");
  auto it = id.find(*out);
  if (it == id.end()) throw parse_error(lx.line(), "unknown output gate " + *out);
  c.set_output(it->second);
  return c;
}

}  // namespace icg
