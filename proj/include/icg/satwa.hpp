#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "core.hpp"
#include "datalog.hpp"
#include "encoding.hpp"

namespace icg {

using StateId = std::uint32_t;

// Propositional formula over states, negation on variables only.
struct Formula {
  enum class Op : std::uint8_t { ff, tt, pos, neg, conj, disj };
  struct Node {
    Op op;
    StateId state = 0;
    std::vector<std::uint32_t> kids;
  };
  std::vector<Node> nodes;
  std::uint32_t root = 0;

  static Formula constant(bool v) {
    Formula f;
    f.nodes.push_back({v ? Op::tt : Op::ff, 0, {}});
    return f;
  }
  std::uint32_t add(Node n) {
    nodes.push_back(std::move(n));
    return static_cast<std::uint32_t>(nodes.size()) - 1;
  }
  std::uint32_t var(StateId q, bool positive = true) { return add({positive ? Op::pos : Op::neg, q, {}}); }
  std::uint32_t conj(std::vector<std::uint32_t> k) { return add({Op::conj, 0, std::move(k)}); }
  std::uint32_t disj(std::vector<std::uint32_t> k) { return add({Op::disj, 0, std::move(k)}); }

  bool is_constant(bool v) const { return nodes[root].op == (v ? Op::tt : Op::ff); }

  // `lit(q, positive)` gives the truth value of the literal.
  bool evaluate(const std::function<bool(StateId, bool)>& lit) const {
    std::function<bool(std::uint32_t)> go = [&](std::uint32_t i) -> bool {
      auto& n = nodes[i];
      switch (n.op) {
        case Op::ff:
          return false;
        case Op::tt:
          return true;
        case Op::pos:
          return lit(n.state, true);
        case Op::neg:
          return lit(n.state, false);
        case Op::conj:
          for (auto k : n.kids)
            if (!go(k)) return false;
          return true;
        case Op::disj:
          for (auto k : n.kids)
            if (go(k)) return true;
          return false;
      }
      return false;
    };
    return go(root);
  }

  template <class F>
  void for_each_literal(F&& f) const {
    for (auto& n : nodes)
      if (n.op == Op::pos || n.op == Op::neg) f(n.state, n.op == Op::pos);
  }

  std::string to_string(const std::function<std::string(StateId)>& name) const {
    std::function<std::string(std::uint32_t)> go = [&](std::uint32_t i) -> std::string {
      auto& n = nodes[i];
      switch (n.op) {
        case Op::ff:
          return "false";
        case Op::tt:
          return "true";
        case Op::pos:
          return name(n.state);
        case Op::neg:
          return "!" + name(n.state);
        case Op::conj:
        case Op::disj: {
          if (n.kids.empty()) return n.op == Op::conj ? "true" : "false";
          std::string s = "(";
          for (size_t j = 0; j < n.kids.size(); ++j) s += (j ? (n.op == Op::conj ? " & " : " | ") : "") + go(n.kids[j]);
          return s + ")";
        }
      }
      return "";
    };
    return go(root);
  }
};

// Stratified isotropic alternating two-way automaton over width-k encoding labels.
// Fact relations in labels index relations().
class Satwa {
 public:
  virtual ~Satwa() = default;
  virtual int width() const = 0;
  virtual const std::vector<std::string>& relations() const = 0;
  virtual StateId initial() const = 0;
  virtual int stratum(StateId q) const = 0;
  virtual const Formula& transition(StateId q, const EncodingLabel& l) const = 0;
  virtual size_t state_count() const = 0;
  virtual std::string state_name(StateId q) const { return "q" + std::to_string(q); }

  int relation_index(const std::string& r) const {
    auto& rs = relations();
    for (size_t i = 0; i < rs.size(); ++i)
      if (rs[i] == r) return static_cast<int>(i);
    return -1;
  }
};

namespace detail {

inline std::string label_key(const EncodingLabel& l) {
  std::string k(reinterpret_cast<const char*>(&l.d), sizeof l.d);
  k.push_back(static_cast<char>(l.rel + 1));
  for (auto a : l.args) k.push_back(static_cast<char>(a));
  return k;
}

// Thread-safe (state, label) -> formula memo with reference-stable entries.
class TransitionCache {
 public:
  template <class Make>
  const Formula& get(StateId q, const EncodingLabel& l, Make&& make) const {
    std::string key(reinterpret_cast<const char*>(&q), sizeof q);
    key += label_key(l);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(std::move(key), make()).first->second;
  }
  size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.size();
  }
  std::mutex& mutex() const { return mu_; }

 private:
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, Formula> cache_;
};

}  // namespace detail

// Automaton given by explicit state list and a transition callback.
class ExplicitSatwa : public Satwa {
 public:
  using Delta = std::function<Formula(StateId, const EncodingLabel&)>;
  ExplicitSatwa(int k, std::vector<std::string> relations, std::vector<int> strata, StateId initial, Delta delta)
      : k_(k), relations_(std::move(relations)), strata_(std::move(strata)), initial_(initial), delta_(std::move(delta)) {}

  int width() const override { return k_; }
  const std::vector<std::string>& relations() const override { return relations_; }
  StateId initial() const override { return initial_; }
  int stratum(StateId q) const override { return strata_.at(q); }
  size_t state_count() const override { return strata_.size(); }
  const Formula& transition(StateId q, const EncodingLabel& l) const override {
    return cache_.get(q, l, [&] { return delta_(q, l); });
  }

 private:
  int k_;
  std::vector<std::string> relations_;
  std::vector<int> strata_;
  StateId initial_;
  Delta delta_;
  detail::TransitionCache cache_;
};

// Annotated alphabet: bit 0 hides the node's fact.
class LiftedSatwa {
 public:
  explicit LiftedSatwa(const Satwa& base) : base_(base) {}
  const Satwa& base() const { return base_; }
  StateId initial() const { return base_.initial(); }
  int stratum(StateId q) const { return base_.stratum(q); }
  const Formula& transition(StateId q, const EncodingLabel& l, bool bit) const {
    if (bit || !l.has_fact()) return base_.transition(q, l);
    EncodingLabel bare{l.d, -1, {}};
    return base_.transition(q, bare);
  }

 private:
  const Satwa& base_;
};

inline LiftedSatwa lift_satwa(const Satwa& a) { return LiftedSatwa(a); }

// Number of partial valuations of `distinct_vars` variables over the width-k name pool.
inline std::uint64_t partial_valuation_count(int distinct_vars, int k) {
  std::uint64_t n = 1;
  for (int i = 0; i < distinct_vars; ++i) n *= static_cast<std::uint64_t>(2 * k + 3);
  return n;
}

// Automaton testing an ICG program on width-k encodings; states are built on first use.
class CompiledSatwa : public Satwa {
 public:
  enum class Kind : std::uint8_t { extensional, rule, intensional };

  CompiledSatwa(DatalogProgram p, int k) : p_(std::move(p)), k_(k) {
    if (k < 0) throw error("width must be nonnegative");
    if (2 * k + 2 > 32) throw error("width too large for the name pool");
    auto rep = validate_icg(p_);
    if (!rep.is_icg) throw error("program is not ICG: rule " + std::to_string(rep.failures[0].rule) + ", literal " +
                                 rep.failures[0].literal);
    body_size_ = rep.body_size;
    for (auto& r : p_.sig.names(rel_kind::extensional)) relations_.push_back(r);
    auto strata = p_.strata ? *p_.strata : stratify_program(p_);
    for (auto& [rel, s] : strata) rel_stratum_[rel] = s;
    for (auto& r : p_.rules) {
      RuleInfo info;
      info.vars = rule_vars(r);
      for (auto& l : r.body) {
        std::vector<std::uint8_t> idx;
        for (auto& v : l.atom.vars)
          idx.push_back(static_cast<std::uint8_t>(std::find(info.vars.begin(), info.vars.end(), v) - info.vars.begin()));
        info.lit_vars.push_back(idx);
        std::uint64_t mask = 0;
        for (auto i : idx) mask |= std::uint64_t{1} << i;
        info.lit_mask.push_back(mask);
      }
      for (auto& v : r.head.vars)
        info.head.push_back(static_cast<std::uint8_t>(std::find(info.vars.begin(), info.vars.end(), v) - info.vars.begin()));
      if (r.body.size() > 31) throw error("rule body too long");
      if (info.vars.size() > 64) throw error("too many variables in a rule");
      rules_.push_back(std::move(info));
      rules_by_head_[r.head.rel].push_back(rules_.size() - 1);
    }
    initial_ = intern({Kind::intensional, p_.goal, {}, 0, 0, {}});
  }

  int width() const override { return k_; }
  const std::vector<std::string>& relations() const override { return relations_; }
  StateId initial() const override { return initial_; }
  int stratum(StateId q) const override {
    std::lock_guard<std::mutex> lock(cache_.mutex());
    return states_.at(q).stratum;
  }
  size_t state_count() const override {
    std::lock_guard<std::mutex> lock(cache_.mutex());
    return states_.size();
  }
  size_t transition_count() const { return cache_.size(); }
  int body_size() const { return body_size_; }
  const DatalogProgram& program() const { return p_; }

  std::string state_name(StateId q) const override {
    std::lock_guard<std::mutex> lock(cache_.mutex());
    return name_locked(q);
  }

  const Formula& transition(StateId q, const EncodingLabel& l) const override {
    return cache_.get(q, l, [&] { return build(q, l); });
  }

  // Every materialized state with its stratum.
  std::string dump() const {
    std::lock_guard<std::mutex> lock(cache_.mutex());
    std::string out;
    for (StateId q = 0; q < states_.size(); ++q)
      out += "state " + std::to_string(q) + " " + name_locked(q) + " stratum " + std::to_string(states_[q].stratum) +
             "\n";
    return out;
  }

 private:
  static constexpr std::int8_t undef = -1;

  struct RuleInfo {
    std::vector<std::string> vars;
    std::vector<std::vector<std::uint8_t>> lit_vars;
    std::vector<std::uint64_t> lit_mask;
    std::vector<std::uint8_t> head;
  };

  struct State {
    Kind kind;
    std::string rel;                   // relation for extensional and intensional states
    std::vector<std::uint8_t> shape;   // extensional: distinct-variable index per position
    std::uint32_t rule = 0;            // rule states
    std::uint32_t lits = 0;            // rule states: literal subset
    std::vector<std::int8_t> val;      // valuation (undef or a name index), or the tuple for intensional states
    int stratum = 0;
  };

  static std::string key_of(const State& s) {
    std::string k(1, static_cast<char>(s.kind));
    k += s.rel;
    k.push_back('\0');
    for (auto c : s.shape) k.push_back(static_cast<char>(c));
    k.push_back('\0');
    k.append(reinterpret_cast<const char*>(&s.rule), sizeof s.rule);
    k.append(reinterpret_cast<const char*>(&s.lits), sizeof s.lits);
    for (auto v : s.val) k.push_back(static_cast<char>(v));
    return k;
  }

  int stratum_of(const std::string& rel) const {
    auto it = rel_stratum_.find(rel);
    return it == rel_stratum_.end() ? 1 : it->second;
  }

  // Caller holds the cache mutex or is the constructor.
  StateId intern(State s) const {
    switch (s.kind) {
      case Kind::extensional:
        s.stratum = 0;
        break;
      case Kind::rule:
        s.stratum = stratum_of(p_.rules[s.rule].head.rel);
        break;
      case Kind::intensional:
        s.stratum = stratum_of(s.rel);
        break;
    }
    auto key = key_of(s);
    auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    StateId id = static_cast<StateId>(states_.size());
    states_.push_back(std::move(s));
    ids_.emplace(std::move(key), id);
    return id;
  }

  std::string name_locked(StateId q) const {
    auto& s = states_.at(q);
    auto val = [](std::int8_t v) { return v == undef ? std::string("?") : name_of(v); };
    std::string out;
    if (s.kind == Kind::extensional) {
      out = s.rel + "(";
      for (size_t i = 0; i < s.shape.size(); ++i) out += (i ? "," : "") + val(s.val[s.shape[i]]);
      return out + ")";
    }
    if (s.kind == Kind::intensional) {
      out = "[" + s.rel + "(";
      for (size_t i = 0; i < s.val.size(); ++i) out += (i ? "," : "") + val(s.val[i]);
      return out + ")]";
    }
    auto& info = rules_[s.rule];
    out = "r" + std::to_string(s.rule + 1) + "{";
    bool first = true;
    for (size_t i = 0; i < p_.rules[s.rule].body.size(); ++i)
      if (s.lits >> i & 1u) {
        out += (first ? "" : ",") + std::to_string(i + 1);
        first = false;
      }
    out += "}";
    for (size_t v = 0; v < info.vars.size(); ++v)
      if (s.val[v] != undef) out += " " + info.vars[v] + "=" + val(s.val[v]);
    return out;
  }

  std::uint64_t vars_of(const RuleInfo& info, std::uint32_t lits) const {
    std::uint64_t m = 0;
    for (size_t i = 0; i < info.lit_mask.size(); ++i)
      if (lits >> i & 1u) m |= info.lit_mask[i];
    return m;
  }

  StateId rule_state(std::uint32_t r, std::uint32_t lits, std::vector<std::int8_t> val) const {
    std::uint64_t keep = vars_of(rules_[r], lits);
    for (size_t v = 0; v < val.size(); ++v)
      if (!(keep >> v & 1u)) val[v] = undef;
    return intern({Kind::rule, "", {}, r, lits, std::move(val)});
  }

  Formula build(StateId q, const EncodingLabel& l) const {
    const State s = states_[q];  // copy: interning may reallocate
    auto in_d = [&](std::int8_t v) { return v != undef && (l.d >> v & 1u); };
    std::vector<std::int8_t> names;
    for (int i = 0; i < 2 * k_ + 2; ++i)
      if (l.d >> i & 1u) names.push_back(static_cast<std::int8_t>(i));

    if (s.kind == Kind::extensional) {
      for (auto v : s.val)
        if (v != undef && !in_d(v)) return Formula::constant(false);
      bool total = std::find(s.val.begin(), s.val.end(), undef) == s.val.end();
      Formula f;
      if (!total) {
        std::vector<std::uint32_t> alts{f.var(q)};
        for (size_t j = 0; j < s.val.size(); ++j) {
          if (s.val[j] != undef) continue;
          for (auto a : names) {
            State t = s;
            t.val[j] = a;
            alts.push_back(f.var(intern(std::move(t))));
          }
        }
        f.root = f.disj(std::move(alts));
        return f;
      }
      bool match = l.has_fact() && relations_[l.rel] == s.rel && l.args.size() == s.shape.size();
      for (size_t i = 0; match && i < s.shape.size(); ++i) match = l.args[i] == static_cast<std::uint8_t>(s.val[s.shape[i]]);
      if (match) return Formula::constant(true);
      f.root = f.var(q);
      return f;
    }

    if (s.kind == Kind::intensional) {
      for (auto v : s.val)
        if (!in_d(v)) return Formula::constant(false);
      Formula f;
      std::vector<std::uint32_t> alts;
      auto it = rules_by_head_.find(s.rel);
      if (it != rules_by_head_.end())
        for (size_t r : it->second) {
          auto& info = rules_[r];
          std::vector<std::int8_t> val(info.vars.size(), undef);
          bool ok = true;
          for (size_t i = 0; i < info.head.size() && ok; ++i) {
            auto& slot = val[info.head[i]];
            if (slot == undef)
              slot = s.val[i];
            else if (slot != s.val[i])
              ok = false;
          }
          if (!ok) continue;
          std::uint32_t all = (std::uint32_t{1} << p_.rules[r].body.size()) - 1;
          alts.push_back(f.var(rule_state(static_cast<std::uint32_t>(r), all, std::move(val))));
        }
      f.root = f.disj(std::move(alts));
      return f;
    }

    auto& info = rules_[s.rule];
    auto& rule = p_.rules[s.rule];
    std::uint64_t vars = vars_of(info, s.lits);
    for (size_t v = 0; v < info.vars.size(); ++v)
      if ((vars >> v & 1u) && s.val[v] != undef && !in_d(s.val[v])) return Formula::constant(false);
    std::vector<int> members;
    for (size_t i = 0; i < rule.body.size(); ++i)
      if (s.lits >> i & 1u) members.push_back(static_cast<int>(i));
    Formula f;
    if (members.size() >= 2) {
      std::vector<std::uint32_t> alts{f.var(q)};
      int first = members[0];
      int rest = static_cast<int>(members.size()) - 1;
      // A1 always holds the first literal; the mask ranges over the others.
      for (std::uint32_t m = 0; m + 1 < (std::uint32_t{1} << rest); ++m) {
        std::uint32_t a1 = std::uint32_t{1} << first, a2 = 0;
        for (int j = 0; j < rest; ++j) (m >> j & 1u ? a1 : a2) |= std::uint32_t{1} << members[j + 1];
        std::uint64_t shared = vars_of(info, a1) & vars_of(info, a2);
        std::vector<int> open;
        for (size_t v = 0; v < info.vars.size(); ++v)
          if ((shared >> v & 1u) && s.val[v] == undef) open.push_back(static_cast<int>(v));
        if (!open.empty() && names.empty()) continue;
        std::vector<size_t> digit(open.size(), 0);
        for (;;) {
          auto val = s.val;
          for (size_t j = 0; j < open.size(); ++j) val[open[j]] = names[digit[j]];
          StateId q1 = rule_state(s.rule, a1, val), q2 = rule_state(s.rule, a2, std::move(val));
          alts.push_back(f.conj({f.var(q1), f.var(q2)}));
          size_t j = 0;
          while (j < open.size() && ++digit[j] == names.size()) digit[j++] = 0;
          if (j == open.size()) break;
        }
      }
      f.root = f.disj(std::move(alts));
      return f;
    }
    const Literal& lit = rule.body[members[0]];
    auto& lv = info.lit_vars[members[0]];
    if (!p_.sig.is_intensional(lit.atom.rel)) {
      State t{Kind::extensional, lit.atom.rel, {}, 0, 0, {}};
      std::vector<std::uint8_t> distinct;
      for (auto v : lv) {
        auto pos = std::find(distinct.begin(), distinct.end(), v);
        t.shape.push_back(static_cast<std::uint8_t>(pos - distinct.begin()));
        if (pos == distinct.end()) distinct.push_back(v);
      }
      for (auto v : distinct) t.val.push_back(s.val[v]);
      f.root = f.var(intern(std::move(t)));
      return f;
    }
    std::vector<std::uint8_t> open;
    for (auto v : lv)
      if (s.val[v] == undef && std::find(open.begin(), open.end(), v) == open.end()) open.push_back(v);
    if (open.size() == 1 && std::all_of(lv.begin(), lv.end(), [&](auto v) { return v == open[0]; })) {
      std::vector<std::uint32_t> alts{f.var(q)};
      for (auto a : names) {
        auto val = s.val;
        val[open[0]] = a;
        alts.push_back(f.var(rule_state(s.rule, s.lits, std::move(val))));
      }
      f.root = f.disj(std::move(alts));
      return f;
    }
    if (!open.empty()) return Formula::constant(false);
    State t{Kind::intensional, lit.atom.rel, {}, 0, 0, {}};
    for (auto v : lv) t.val.push_back(s.val[v]);
    f.root = f.var(intern(std::move(t)), !lit.negated);
    return f;
  }

  DatalogProgram p_;
  int k_;
  int body_size_ = 0;
  std::vector<std::string> relations_;
  std::map<std::string, int> rel_stratum_;
  std::vector<RuleInfo> rules_;
  std::map<std::string, std::vector<size_t>> rules_by_head_;
  StateId initial_ = 0;
  mutable std::vector<State> states_;
  mutable std::unordered_map<std::string, StateId> ids_;
  detail::TransitionCache cache_;
};

inline std::unique_ptr<CompiledSatwa> compile_program(const DatalogProgram& p, int k) {
  return std::make_unique<CompiledSatwa>(p, k);
}

}  // namespace icg
