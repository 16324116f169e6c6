#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "core.hpp"
#include "graph.hpp"

namespace icg {

struct Atom {
  std::string rel;
  std::vector<std::string> vars;

  auto operator<=>(const Atom&) const = default;
  bool operator==(const Atom&) const = default;
};

struct Literal {
  Atom atom;
  bool negated = false;

  auto operator<=>(const Literal&) const = default;
  bool operator==(const Literal&) const = default;
};

struct Rule {
  Atom head;
  std::vector<Literal> body;
};

struct DatalogProgram {
  Signature sig;
  std::vector<Rule> rules;
  std::string goal = "goal";
  std::optional<std::map<std::string, int>> strata;
};

inline std::string to_string(const Atom& a) {
  std::string s = a.rel + "(";
  for (size_t i = 0; i < a.vars.size(); ++i) {
    if (i) s += ",";
    s += a.vars[i];
  }
  return s + ")";
}

inline std::string to_string(const Literal& l) { return (l.negated ? "not " : "") + to_string(l.atom); }

inline std::string to_string(const Rule& r) {
  std::string s = to_string(r.head) + " :- ";
  for (size_t i = 0; i < r.body.size(); ++i) {
    if (i) s += ", ";
    s += to_string(r.body[i]);
  }
  return s + ".";
}

inline std::string to_text(const DatalogProgram& p) {
  std::string out;
  for (auto& r : p.rules) out += to_string(r) + "\n";
  return out;
}

inline std::vector<std::string> distinct_vars(const std::vector<std::string>& vs) {
  std::vector<std::string> out;
  for (auto& v : vs)
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  return out;
}

inline std::vector<std::string> rule_vars(const Rule& r) {
  std::vector<std::string> all;
  for (auto& l : r.body) all.insert(all.end(), l.atom.vars.begin(), l.atom.vars.end());
  return distinct_vars(all);
}

// Rebuilds the signature from the rules: head relations are intensional.
inline void infer_signature(DatalogProgram& p, const Signature* base = nullptr) {
  Signature sig;
  if (base)
    for (auto& [n, r] : base->relations()) sig.declare(n, r.arity, rel_kind::extensional);
  std::set<std::string> heads;
  for (auto& r : p.rules) {
    sig.declare(r.head.rel, static_cast<int>(r.head.vars.size()));
    heads.insert(r.head.rel);
    for (auto& l : r.body) sig.declare(l.atom.rel, static_cast<int>(l.atom.vars.size()));
  }
  if (!sig.contains(p.goal)) sig.declare(p.goal, 0);
  heads.insert(p.goal);
  for (auto& h : heads) sig.set_kind(h, rel_kind::intensional);
  p.sig = sig;
}

// Checks head safety, constant freeness and negation placement.
inline void check_program(const DatalogProgram& p) {
  for (size_t i = 0; i < p.rules.size(); ++i) {
    auto& r = p.rules[i];
    auto vars = rule_vars(r);
    for (auto& v : r.head.vars)
      if (std::find(vars.begin(), vars.end(), v) == vars.end())
        throw error("rule " + std::to_string(i + 1) + ": head variable " + v + " does not occur in the body");
    for (auto& l : r.body)
      if (l.negated && !p.sig.is_intensional(l.atom.rel))
        throw error("rule " + std::to_string(i + 1) + ": negated extensional atom " + to_string(l.atom));
    if (p.sig.arity(p.goal) != 0) throw error("goal relation must be 0-ary");
  }
}

inline DatalogProgram parse_program(std::string_view text) {
  detail::Lexer lx(text);
  DatalogProgram p;
  auto parse_atom = [&](bool head) {
    Atom a;
    a.rel = lx.ident();
    if (a.rel[0] == '_') lx.fail("relation names cannot start with '_'");
    lx.expect("(");
    if (!lx.accept(")")) {
      do {
        char c = lx.peek();
        if (c == '"' || c == '\'' || (c >= '0' && c <= '9')) lx.fail("constant found in atom");
        std::string v = lx.ident();
        if (detail::is_upper_ident_start(v[0])) lx.fail("constant found in atom (variables are lowercase)");
        a.vars.push_back(std::move(v));
      } while (lx.accept(","));
      lx.expect(")");
    }
    if (head && !a.vars.empty() && a.rel == p.goal) lx.fail("goal must be 0-ary");
    return a;
  };
  std::vector<int> lines;
  while (!lx.eof()) {
    lines.push_back(lx.line());
    Rule r;
    r.head = parse_atom(true);
    lx.expect(":-");
    do {
      Literal l;
      if (lx.accept("!")) {
        l.negated = true;
      } else {
        // `not` is a keyword only when followed by whitespace.
        if (lx.peek() == 'n' && lx.accept("not ")) l.negated = true;
      }
      l.atom = parse_atom(false);
      r.body.push_back(std::move(l));
    } while (lx.accept(","));
    lx.expect(".");
    p.rules.push_back(std::move(r));
  }
  try {
    infer_signature(p);
  } catch (const error& e) {
    throw parse_error(lx.line(), e.what());
  }
  for (size_t i = 0; i < p.rules.size(); ++i) {
    try {
      DatalogProgram one;
      one.sig = p.sig;
      one.goal = p.goal;
      one.rules = {p.rules[i]};
      check_program(one);
    } catch (const error& e) {
      throw parse_error(lines[i], e.what());
    }
  }
  return p;
}

struct stratification_error : error {
  std::vector<std::string> cycle;
  stratification_error(std::vector<std::string> c)
      : error("not stratifiable: negative cycle through " + join(c)), cycle(std::move(c)) {}
  static std::string join(const std::vector<std::string>& c) {
    std::string s;
    for (auto& x : c) s += (s.empty() ? "" : " -> ") + x;
    return s;
  }
};

// Minimal strata over intensional relations (extensional ones are implicitly 0).
inline std::map<std::string, int> stratify_program(const DatalogProgram& p) {
  auto names = p.sig.names(rel_kind::intensional);
  std::map<std::string, std::uint32_t> id;
  for (auto& n : names) id.emplace(n, static_cast<std::uint32_t>(id.size()));
  // Edge from body relation to head relation.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::tuple<std::uint32_t, std::uint32_t, bool>> labeled;
  for (auto& r : p.rules)
    for (auto& l : r.body) {
      if (!p.sig.is_intensional(l.atom.rel)) continue;
      std::uint32_t a = id.at(l.atom.rel), b = id.at(r.head.rel);
      edges.push_back({a, b});
      labeled.emplace_back(a, b, l.negated);
    }
  Csr g = Csr::from_edges(names.size(), edges);
  SccResult scc = strongly_connected_components(g);
  for (auto& [a, b, neg] : labeled) {
    if (!neg || scc.component[a] != scc.component[b]) continue;
    // Witness: path from b back to a inside the component.
    std::vector<int> prev(names.size(), -1);
    std::vector<std::uint32_t> queue{b};
    prev[b] = static_cast<int>(b);
    for (size_t qi = 0; qi < queue.size(); ++qi) {
      std::uint32_t v = queue[qi];
      for (auto it = g.begin(v); it != g.end(v); ++it)
        if (prev[*it] < 0 && scc.component[*it] == scc.component[a]) {
          prev[*it] = static_cast<int>(v);
          queue.push_back(*it);
        }
    }
    std::vector<std::string> cyc;
    for (std::uint32_t v = a;; v = static_cast<std::uint32_t>(prev[v])) {
      cyc.push_back(names[v]);
      if (v == b) break;
    }
    std::reverse(cyc.begin(), cyc.end());
    cyc.push_back(names[b]);
    throw stratification_error(cyc);
  }
  // Components in topological order are decreasing ids.
  std::vector<int> level(scc.count, 1);
  std::vector<std::vector<std::pair<std::uint32_t, bool>>> preds(scc.count);
  for (auto& [a, b, neg] : labeled)
    if (scc.component[a] != scc.component[b]) preds[scc.component[b]].push_back({scc.component[a], neg});
  for (size_t c = scc.count; c-- > 0;)
    for (auto& [src, neg] : preds[c]) level[c] = std::max(level[c], level[src] + (neg ? 1 : 0));
  std::map<std::string, int> out;
  for (auto& n : names) out[n] = level[scc.component[id.at(n)]];
  return out;
}

// Conditions on a stratification map: heads in their stratum, positive body <=, negative body <.
inline bool is_valid_stratification(const DatalogProgram& p, const std::map<std::string, int>& s) {
  for (auto& r : p.rules) {
    int h = s.at(r.head.rel);
    for (auto& l : r.body) {
      if (!p.sig.is_intensional(l.atom.rel)) continue;
      int b = s.at(l.atom.rel);
      if (l.negated ? b >= h : b > h) return false;
    }
  }
  return true;
}

struct IcgFailure {
  size_t rule = 0;  // 1-based
  std::string literal;
};

struct IcgReport {
  bool is_icg = true;
  int body_size = 0;
  int max_atoms = 0;
  int arity = 0;
  std::vector<IcgFailure> failures;
};

inline IcgReport validate_icg(const DatalogProgram& p) {
  IcgReport rep;
  rep.arity = std::max(p.sig.max_arity(rel_kind::extensional), p.sig.max_arity(rel_kind::intensional));
  for (size_t i = 0; i < p.rules.size(); ++i) {
    auto& r = p.rules[i];
    rep.max_atoms = std::max(rep.max_atoms, static_cast<int>(r.body.size()));
    std::set<std::pair<std::string, std::string>> covered;
    for (auto& l : r.body) {
      if (p.sig.is_intensional(l.atom.rel)) continue;
      for (auto& x : l.atom.vars)
        for (auto& y : l.atom.vars) covered.insert({x, y});
    }
    for (auto& l : r.body) {
      if (!p.sig.is_intensional(l.atom.rel)) continue;
      bool ok = true;
      for (auto& x : l.atom.vars)
        for (auto& y : l.atom.vars)
          if (x != y && !covered.count({x, y})) ok = false;
      if (!ok) {
        rep.is_icg = false;
        rep.failures.push_back({i + 1, to_string(l)});
      }
    }
  }
  rep.body_size = rep.max_atoms * rep.arity;
  return rep;
}

// Adds a unary guard for every variable that occurs in no positive literal.
// The guard relation holds exactly on the active domain.
inline DatalogProgram normalize_safety(const DatalogProgram& p) {
  bool needed = false;
  for (auto& r : p.rules) {
    std::set<std::string> pos;
    for (auto& l : r.body)
      if (!l.negated) pos.insert(l.atom.vars.begin(), l.atom.vars.end());
    for (auto& v : rule_vars(r))
      if (!pos.count(v)) needed = true;
  }
  if (!needed) return p;
  std::string adom = "Adom";
  for (int i = 1; p.sig.contains(adom); ++i) adom = "Adom" + std::to_string(i);
  DatalogProgram q = p;
  q.rules.clear();
  for (auto& r : p.rules) {
    std::set<std::string> pos;
    for (auto& l : r.body)
      if (!l.negated) pos.insert(l.atom.vars.begin(), l.atom.vars.end());
    Rule nr = r;
    for (auto& v : rule_vars(r))
      if (!pos.count(v)) nr.body.push_back({{adom, {v}}, false});
    q.rules.push_back(std::move(nr));
  }
  for (auto& [name, info] : p.sig.relations()) {
    if (info.kind != rel_kind::extensional) continue;
    for (int pos = 0; pos < info.arity; ++pos) {
      Atom a{name, {}};
      for (int j = 0; j < info.arity; ++j) a.vars.push_back(j == pos ? "x" : "_a" + std::to_string(j));
      q.rules.push_back({{adom, {"x"}}, {{a, false}}});
    }
  }
  infer_signature(q, &p.sig);
  if (q.strata) {
    (*q.strata)[adom] = 1;
  }
  return q;
}

namespace detail {

struct TupleHash {
  size_t operator()(const std::vector<int>& t) const {
    size_t h = t.size();
    for (int x : t) h = h * 1000003u ^ static_cast<size_t>(x + 0x9e3779b9);
    return h;
  }
};

// Append-only relation with lazily built hash indexes keyed by bound-position masks.
class Relation {
 public:
  explicit Relation(int arity = 0) : arity_(arity) {}

  bool insert(const std::vector<int>& t) {
    if (!set_.insert(t).second) return false;
    tuples_.push_back(t);
    size_t idx = tuples_.size() - 1;
    for (auto& [mask, index] : indexes_) index[key(t, mask)].push_back(static_cast<std::uint32_t>(idx));
    return true;
  }
  bool contains(const std::vector<int>& t) const { return set_.count(t) > 0; }
  size_t size() const { return tuples_.size(); }
  const std::vector<int>& operator[](size_t i) const { return tuples_[i]; }
  const std::vector<std::vector<int>>& tuples() const { return tuples_; }

  const std::vector<std::uint32_t>* lookup(std::uint32_t mask, const std::vector<int>& k) {
    auto it = indexes_.find(mask);
    if (it == indexes_.end()) {
      auto& index = indexes_[mask];
      for (size_t i = 0; i < tuples_.size(); ++i)
        index[key(tuples_[i], mask)].push_back(static_cast<std::uint32_t>(i));
      it = indexes_.find(mask);
    }
    auto f = it->second.find(k);
    return f == it->second.end() ? nullptr : &f->second;
  }

  std::vector<int> key(const std::vector<int>& t, std::uint32_t mask) const {
    std::vector<int> k;
    for (int i = 0; i < arity_; ++i)
      if (mask >> i & 1u) k.push_back(t[i]);
    return k;
  }

 private:
  int arity_;
  std::vector<std::vector<int>> tuples_;
  std::unordered_set<std::vector<int>, TupleHash> set_;
  std::unordered_map<std::uint32_t, std::unordered_map<std::vector<int>, std::vector<std::uint32_t>, TupleHash>>
      indexes_;
};

class Evaluator {
 public:
  Evaluator(const DatalogProgram& p, const Instance& inst) : p_(p) {
    for (auto& [name, info] : p.sig.relations()) rels_.emplace(name, Relation(info.arity));
    std::map<std::string, int> cid;
    for (auto& f : inst.facts()) {
      std::vector<int> t;
      for (auto& c : f.args) {
        auto [it, fresh] = cid.emplace(c, static_cast<int>(cid.size()));
        if (fresh) consts_.push_back(c);
        t.push_back(it->second);
      }
      auto r = rels_.find(f.rel);
      if (r == rels_.end()) r = rels_.emplace(f.rel, Relation(static_cast<int>(t.size()))).first;
      if (p.sig.is_intensional(f.rel)) throw error("instance mentions intensional relation " + f.rel);
      r->second.insert(t);
    }
    for (size_t i = 0; i < consts_.size(); ++i) adom_.push_back(static_cast<int>(i));
  }

  void run() {
    auto strata = p_.strata ? *p_.strata : stratify_program(p_);
    int top = 0;
    for (auto& [n, s] : strata) top = std::max(top, s);
    for (int s = 1; s <= top; ++s) run_stratum(s, strata);
  }

  bool holds(const std::string& rel, const std::vector<int>& t) const {
    auto it = rels_.find(rel);
    return it != rels_.end() && it->second.contains(t);
  }

  std::map<std::string, std::set<std::vector<std::string>>> derived() const {
    std::map<std::string, std::set<std::vector<std::string>>> out;
    for (auto& [name, r] : rels_) {
      if (!p_.sig.is_intensional(name)) continue;
      auto& dst = out[name];
      for (auto& t : r.tuples()) {
        std::vector<std::string> s;
        for (int c : t) s.push_back(consts_[c]);
        dst.insert(std::move(s));
      }
    }
    return out;
  }

 private:
  struct Plan {
    const Rule* rule;
    std::vector<std::string> vars;
    std::map<std::string, int> var_id;
  };

  void run_stratum(int s, const std::map<std::string, int>& strata) {
    std::vector<const Rule*> rules;
    for (auto& r : p_.rules)
      if (strata.at(r.head.rel) == s) rules.push_back(&r);
    std::set<std::string> here;
    for (auto* r : rules) here.insert(r->head.rel);
    std::map<std::string, std::pair<size_t, size_t>> delta;
    std::map<std::string, size_t> mark;
    for (auto& h : here) mark[h] = rels_.at(h).size();
    for (auto* r : rules) fire(*r, -1, delta);
    while (true) {
      bool any = false;
      for (auto& h : here) {
        size_t now = rels_.at(h).size();
        delta[h] = {mark[h], now};
        if (now > mark[h]) any = true;
        mark[h] = now;
      }
      if (!any) break;
      for (auto* r : rules)
        for (size_t i = 0; i < r->body.size(); ++i) {
          auto& l = r->body[i];
          if (l.negated || !here.count(l.atom.rel)) continue;
          auto d = delta[l.atom.rel];
          if (d.first == d.second) continue;
          fire(*r, static_cast<int>(i), delta);
        }
    }
  }

  // Evaluates one rule; literal `restricted` (if >= 0) ranges over its delta only.
  void fire(const Rule& r, int restricted, const std::map<std::string, std::pair<size_t, size_t>>& delta) {
    auto vars = rule_vars(r);
    std::map<std::string, int> vid;
    for (auto& v : vars) vid.emplace(v, static_cast<int>(vid.size()));
    std::vector<int> val(vars.size(), -1);
    // Order positive literals greedily by number of already bound variables.
    std::vector<int> order;
    std::vector<char> used(r.body.size(), 0);
    std::vector<char> bound(vars.size(), 0);
    if (restricted >= 0) {
      order.push_back(restricted);
      used[restricted] = 1;
      for (auto& v : r.body[restricted].atom.vars) bound[vid[v]] = 1;
    }
    while (true) {
      int best = -1, best_score = -1;
      for (size_t i = 0; i < r.body.size(); ++i) {
        if (used[i] || r.body[i].negated) continue;
        int sc = 0;
        for (auto& v : r.body[i].atom.vars) sc += bound[vid[v]];
        if (sc > best_score) best = static_cast<int>(i), best_score = sc;
      }
      if (best < 0) break;
      used[best] = 1;
      order.push_back(best);
      for (auto& v : r.body[best].atom.vars) bound[vid[v]] = 1;
    }
    std::vector<int> free_vars;
    for (size_t v = 0; v < vars.size(); ++v)
      if (!bound[v]) free_vars.push_back(static_cast<int>(v));
    std::vector<const Literal*> negs;
    for (auto& l : r.body)
      if (l.negated) negs.push_back(&l);

    std::vector<std::vector<int>> out;
    std::vector<std::vector<int>> var_idx(r.body.size());
    for (size_t i = 0; i < r.body.size(); ++i)
      for (auto& v : r.body[i].atom.vars) var_idx[i].push_back(vid[v]);

    std::function<void(size_t)> step_free;
    auto finish = [&]() {
      for (auto* l : negs) {
        std::vector<int> t;
        for (auto& v : l->atom.vars) t.push_back(val[vid[v]]);
        if (rels_.at(l->atom.rel).contains(t)) return;
      }
      std::vector<int> h;
      for (auto& v : r.head.vars) h.push_back(val[vid[v]]);
      out.push_back(std::move(h));
    };
    step_free = [&](size_t j) {
      if (j == free_vars.size()) return finish();
      for (int c : adom_) {
        val[free_vars[j]] = c;
        step_free(j + 1);
      }
      val[free_vars[j]] = -1;
    };
    std::function<void(size_t)> step = [&](size_t j) {
      if (j == order.size()) return step_free(0);
      int li = order[j];
      auto& lit = r.body[li];
      auto& rel = rels_.at(lit.atom.rel);
      auto& idx = var_idx[li];
      std::uint32_t mask = 0;
      std::vector<int> key;
      for (size_t a = 0; a < idx.size(); ++a)
        if (val[idx[a]] >= 0) {
          mask |= 1u << a;
          key.push_back(val[idx[a]]);
        }
      size_t lo = 0, hi = rel.size();
      if (li == restricted) std::tie(lo, hi) = delta.at(lit.atom.rel);
      auto try_tuple = [&](const std::vector<int>& t) {
        std::vector<int> set_here;
        bool ok = true;
        for (size_t a = 0; a < idx.size() && ok; ++a) {
          int& slot = val[idx[a]];
          if (slot < 0) {
            slot = t[a];
            set_here.push_back(idx[a]);
          } else if (slot != t[a]) {
            ok = false;
          }
        }
        if (ok) step(j + 1);
        for (int v : set_here) val[v] = -1;
      };
      if (mask == 0) {
        for (size_t i = lo; i < hi; ++i) {
          auto t = rel[i];
          try_tuple(t);
        }
      } else {
        auto* hits = rel.lookup(mask, key);
        if (!hits) return;
        std::vector<std::uint32_t> copy = *hits;
        for (auto i : copy)
          if (i >= lo && i < hi) {
            auto t = rel[i];
            try_tuple(t);
          }
      }
    };
    step(0);
    auto& head = rels_.at(r.head.rel);
    for (auto& t : out) head.insert(t);
  }

  const DatalogProgram& p_;
  std::map<std::string, Relation> rels_;
  std::vector<std::string> consts_;
  std::vector<int> adom_;
};

}  // namespace detail

// Active-domain stratified semantics.
inline bool naive_evaluate(const DatalogProgram& p, const Instance& inst) {
  detail::Evaluator ev(p, inst);
  ev.run();
  return ev.holds(p.goal, {});
}

inline std::map<std::string, std::set<std::vector<std::string>>> evaluate_program(const DatalogProgram& p,
                                                                                  const Instance& inst) {
  detail::Evaluator ev(p, inst);
  ev.run();
  return ev.derived();
}

inline BooleanFunctionTable brute_force_provenance(const DatalogProgram& p, const Instance& inst) {
  if (inst.size() > max_table_variables) throw error("too many facts for brute-force provenance");
  BooleanFunctionTable t;
  for (auto& f : inst.facts()) t.variables.push_back(to_string(f));
  size_t n = inst.size();
  t.table.resize(size_t{1} << n);
  std::vector<bool> keep(n);
  for (std::uint64_t row = 0; row < t.table.size(); ++row) {
    for (size_t i = 0; i < n; ++i) keep[i] = row >> i & 1u;
    t.table[row] = naive_evaluate(p, apply_valuation(inst, keep)) ? 1 : 0;
  }
  return t;
}

}  // namespace icg
