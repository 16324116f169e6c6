#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "icg/core.hpp"
#include "icg/datalog.hpp"
#include "icg/decomp.hpp"
#include "icg/cycluit.hpp"
#include "icg/frontends.hpp"
#include "icg/satwa.hpp"

namespace testing_support {

using namespace icg;

// Plain naive fixpoint: every rule re-enumerates all assignments over the active domain.
inline bool reference_evaluate(const DatalogProgram& p, const Instance& inst,
                               std::map<std::string, std::set<std::vector<std::string>>>* out = nullptr) {
  auto strata = stratify_program(p);
  std::map<std::string, std::set<std::vector<std::string>>> db;
  for (auto& f : inst.facts()) db[f.rel].insert(f.args);
  auto adom = inst.active_domain();
  int top = 0;
  for (auto& [n, s] : strata) top = std::max(top, s);
  for (int s = 1; s <= top; ++s) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& r : p.rules) {
        if (strata.at(r.head.rel) != s) continue;
        auto vars = rule_vars(r);
        std::map<std::string, std::string> nu;
        std::vector<std::vector<std::string>> found;
        std::function<void(size_t)> go = [&](size_t j) {
          if (j == vars.size()) {
            for (auto& l : r.body) {
              std::vector<std::string> t;
              for (auto& v : l.atom.vars) t.push_back(nu[v]);
              bool has = db[l.atom.rel].count(t) > 0;
              if (has == l.negated) return;
            }
            std::vector<std::string> h;
            for (auto& v : r.head.vars) h.push_back(nu[v]);
            found.push_back(h);
            return;
          }
          for (auto& c : adom) {
            nu[vars[j]] = c;
            go(j + 1);
          }
        };
        go(0);
        for (auto& h : found)
          if (db[r.head.rel].insert(h).second) changed = true;
      }
    }
  }
  if (out) {
    for (auto& [n, t] : db)
      if (p.sig.is_intensional(n)) (*out)[n] = t;
  }
  return db[p.goal].count({}) > 0;
}

struct ProgramShape {
  int max_intensional = 4;
  int max_strata = 3;
  int max_atoms = 4;  // with arity 2 this keeps body size <= 8
  bool allow_negation = true;
  bool allow_unsafe = true;
};

// Random stratified ICG program over R/2, S/2, U/1 with a 0-ary goal.
inline DatalogProgram random_icg_program(std::mt19937& rng, const ProgramShape& shape = {}) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
  struct Ext {
    std::string name;
    int arity;
  };
  std::vector<Ext> ext{{"R", 2}, {"S", 2}, {"U", 1}};
  int n_int = 1 + pick(shape.max_intensional);
  struct Int {
    std::string name;
    int arity;
    int stratum;
  };
  std::vector<Int> ints;
  for (int i = 0; i < n_int; ++i) ints.push_back({"P" + std::to_string(i), 1 + pick(2), 1 + pick(shape.max_strata)});
  int goal_stratum = 1;
  for (auto& q : ints) goal_stratum = std::max(goal_stratum, q.stratum);
  if (shape.allow_negation && pick(2) && goal_stratum < shape.max_strata) ++goal_stratum;
  ints.push_back({"goal", 0, goal_stratum});
  std::vector<std::string> pool{"x", "y", "z", "w"};

  DatalogProgram p;
  for (auto& head : ints) {
    int n_rules = 1 + pick(2);
    for (int ri = 0; ri < n_rules; ++ri) {
      Rule r;
      int n_ext = 1 + pick(2);
      std::vector<std::vector<std::string>> ext_vars;
      for (int e = 0; e < n_ext; ++e) {
        auto& rel = ext[pick(static_cast<int>(ext.size()))];
        Atom a{rel.name, {}};
        for (int j = 0; j < rel.arity; ++j) a.vars.push_back(pool[pick(3)]);
        ext_vars.push_back(a.vars);
        r.body.push_back({a, false});
      }
      int n_lit = pick(shape.max_atoms - n_ext + 1);
      for (int l = 0; l < n_lit; ++l) {
        std::vector<const Int*> cand_pos, cand_neg;
        for (auto& q : ints) {
          if (q.name == "goal") continue;
          if (q.stratum <= head.stratum) cand_pos.push_back(&q);
          if (q.stratum < head.stratum) cand_neg.push_back(&q);
        }
        bool neg = shape.allow_negation && !cand_neg.empty() && pick(2);
        auto& cands = neg ? cand_neg : cand_pos;
        if (cands.empty()) continue;
        const Int* q = cands[pick(static_cast<int>(cands.size()))];
        Atom a{q->name, {}};
        if (q->arity == 1 && neg && shape.allow_unsafe && pick(5) == 0) {
          a.vars.push_back("w");
        } else {
          auto& src = ext_vars[pick(static_cast<int>(ext_vars.size()))];
          for (int j = 0; j < q->arity; ++j) a.vars.push_back(src[pick(static_cast<int>(src.size()))]);
        }
        r.body.push_back({a, neg});
      }
      std::vector<std::string> bv;
      for (auto& l : r.body)
        for (auto& v : l.atom.vars)
          if (std::find(bv.begin(), bv.end(), v) == bv.end()) bv.push_back(v);
      for (int j = 0; j < head.arity; ++j) r.head.vars.push_back(bv[pick(static_cast<int>(bv.size()))]);
      r.head.rel = head.name;
      p.rules.push_back(std::move(r));
    }
  }
  infer_signature(p);
  for (auto& e : ext)
    if (!p.sig.contains(e.name)) p.sig.declare(e.name, e.arity);
  return p;
}

struct RandomInstance {
  Instance instance;
  std::vector<std::vector<std::string>> bags;  // a width-2 tree decomposition
  std::vector<int> parent;                     // -1 at the root
};

// Random instance over R/2, S/2, U/1 whose Gaifman graph is a partial 2-tree.
inline RandomInstance random_tw2_instance(std::mt19937& rng, int max_facts, int max_elems = 12) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
  RandomInstance out;
  int n_elems = 1 + pick(max_elems);
  std::vector<std::string> el;
  for (int i = 0; i < n_elems; ++i) el.push_back("c" + std::to_string(i));
  out.bags.push_back({el[0]});
  out.parent.push_back(-1);
  if (n_elems > 1) {
    out.bags.push_back({el[0], el[1]});
    out.parent.push_back(0);
  }
  for (int i = 2; i < n_elems; ++i) {
    int b = 1 + pick(static_cast<int>(out.bags.size()) - 1);
    auto base = out.bags[b];
    while (base.size() > 2) base.erase(base.begin() + pick(static_cast<int>(base.size())));
    if (base.size() == 2 && pick(3) == 0) base.erase(base.begin() + pick(2));
    base.push_back(el[i]);
    out.bags.push_back(base);
    out.parent.push_back(b);
  }
  std::vector<Fact> facts;
  int n_facts = pick(max_facts + 1);
  for (int f = 0; f < n_facts; ++f) {
    auto& bag = out.bags[pick(static_cast<int>(out.bags.size()))];
    int kind = pick(3);
    auto c = [&]() { return bag[pick(static_cast<int>(bag.size()))]; };
    if (kind == 2)
      facts.push_back({"U", {c()}});
    else
      facts.push_back({kind ? "S" : "R", {c(), c()}});
  }
  out.instance = Instance(facts);
  return out;
}

// Backtracking isomorphism test for small instances.
inline bool isomorphic(const Instance& a, const Instance& b) {
  if (a.size() != b.size()) return false;
  auto da = a.active_domain(), db = b.active_domain();
  if (da.size() != db.size()) return false;
  auto profile = [](const Instance& inst) {
    std::map<std::string, std::multiset<std::pair<std::string, size_t>>> p;
    for (auto& f : inst.facts())
      for (size_t i = 0; i < f.args.size(); ++i) p[f.args[i]].insert({f.rel, i});
    return p;
  };
  auto pa = profile(a), pb = profile(b);
  std::map<std::string, std::vector<const Fact*>> touching;
  for (auto& f : a.facts())
    for (auto& c : f.args) touching[c].push_back(&f);
  std::map<std::string, std::string> m;
  std::set<std::string> used;
  std::function<bool(size_t)> go = [&](size_t i) {
    if (i == da.size()) return true;
    auto& c = da[i];
    for (auto& d : db) {
      if (used.count(d) || pa[c] != pb[d]) continue;
      m[c] = d;
      bool ok = true;
      for (auto* f : touching[c]) {
        Fact g{f->rel, {}};
        bool complete = true;
        for (auto& x : f->args) {
          auto it = m.find(x);
          if (it == m.end()) {
            complete = false;
            break;
          }
          g.args.push_back(it->second);
        }
        if (complete && !b.contains(g)) {
          ok = false;
          break;
        }
      }
      if (ok) {
        used.insert(d);
        if (go(i + 1)) return true;
        used.erase(d);
      }
      m.erase(c);
    }
    return false;
  };
  return go(0);
}

// Exact treewidth of a small graph: best elimination ordering by exhaustive search.
inline int brute_treewidth(int n, const std::set<std::pair<int, int>>& edges) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  int best = n;
  do {
    std::vector<std::set<int>> adj(n);
    for (auto [a, b] : edges) {
      adj[a].insert(b);
      adj[b].insert(a);
    }
    int w = 0;
    std::vector<char> gone(n, 0);
    for (int v : perm) {
      std::vector<int> nb;
      for (int u : adj[v])
        if (!gone[u]) nb.push_back(u);
      w = std::max(w, static_cast<int>(nb.size()));
      for (int x : nb)
        for (int y : nb)
          if (x != y) adj[x].insert(y);
      gone[v] = 1;
    }
    best = std::min(best, w);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Alpha-acyclicity by searching all labelled trees on the atoms for the running intersection property.
inline bool has_join_tree(const std::vector<std::set<std::string>>& edges) {
  int m = static_cast<int>(edges.size());
  if (m <= 2) return true;
  std::vector<int> code(m - 2, 0);
  while (true) {
    // Decode the Pruefer sequence.
    std::vector<int> degree(m, 1);
    for (int c : code) ++degree[c];
    std::vector<std::pair<int, int>> tree;
    std::vector<int> deg = degree;
    for (int c : code) {
      for (int leaf = 0; leaf < m; ++leaf)
        if (deg[leaf] == 1) {
          tree.push_back({leaf, c});
          --deg[leaf];
          --deg[c];
          break;
        }
    }
    std::vector<int> last;
    for (int v = 0; v < m; ++v)
      if (deg[v] == 1) last.push_back(v);
    tree.push_back({last[0], last[1]});
    std::vector<std::vector<int>> adj(m);
    for (auto [a, b] : tree) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    bool ok = true;
    std::set<std::string> vars;
    for (auto& e : edges) vars.insert(e.begin(), e.end());
    for (auto& v : vars) {
      std::vector<int> holders;
      for (int i = 0; i < m; ++i)
        if (edges[i].count(v)) holders.push_back(i);
      std::set<int> seen{holders[0]};
      std::vector<int> stack{holders[0]};
      while (!stack.empty()) {
        int x = stack.back();
        stack.pop_back();
        for (int y : adj[x])
          if (!seen.count(y) && edges[y].count(v)) {
            seen.insert(y);
            stack.push_back(y);
          }
      }
      if (seen.size() != holders.size()) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
    int i = 0;
    while (i < m - 2 && ++code[i] == m) code[i++] = 0;
    if (i == m - 2) return false;
  }
}

inline TreeDecomposition restrict_to_domain(const std::vector<std::vector<std::string>>& bags,
                                            const std::vector<int>& parent, const Instance& inst) {
  auto adom = inst.active_domain();
  TreeDecomposition td;
  td.parent = parent;
  td.root = 0;
  for (auto& b : bags) {
    std::vector<std::string> kept;
    for (auto& c : b)
      if (std::binary_search(adom.begin(), adom.end(), c)) kept.push_back(c);
    td.bags.push_back(kept);
  }
  td.normalize_bags();
  return td;
}

struct RelSpec {
  std::string name;
  int arity;
};

// Uniform random facts over a small domain.
inline Instance random_instance(std::mt19937& rng, const std::vector<RelSpec>& rels, int n_elems, int n_facts) {
  std::vector<Fact> facts;
  for (int i = 0; i < n_facts; ++i) {
    auto& r = rels[rng() % rels.size()];
    Fact f{r.name, {}};
    for (int j = 0; j < r.arity; ++j) f.args.push_back("e" + std::to_string(rng() % n_elems));
    facts.push_back(f);
  }
  return Instance(facts);
}

inline ConjunctiveQuery random_cq(std::mt19937& rng, const std::vector<RelSpec>& rels, int n_atoms, int n_vars) {
  ConjunctiveQuery q;
  for (int i = 0; i < n_atoms; ++i) {
    auto& r = rels[rng() % rels.size()];
    Atom a{r.name, {}};
    for (int j = 0; j < r.arity; ++j) a.vars.push_back("v" + std::to_string(rng() % n_vars));
    q.atoms.push_back(a);
  }
  return q;
}

inline std::string random_regex(std::mt19937& rng, int depth) {
  static const char* letters[] = {"R", "S", "R-", "S-"};
  if (depth == 0 || rng() % 3 == 0) return letters[rng() % 4];
  switch (rng() % 4) {
    case 0:
      return "(" + random_regex(rng, depth - 1) + " | " + random_regex(rng, depth - 1) + ")";
    case 1:
      return "(" + random_regex(rng, depth - 1) + ")*";
    default:
      return random_regex(rng, depth - 1) + " " + random_regex(rng, depth - 1);
  }
}

using PairSet = std::set<std::pair<std::string, std::string>>;

// Language semantics computed bottom-up on the syntax tree, as binary relations over the active domain.
inline PairSet regex_pairs(const Regex& re, const Instance& inst) {
  auto dom = inst.active_domain();
  PairSet id;
  for (auto& d : dom) id.insert({d, d});
  std::function<PairSet(int)> go = [&](int i) -> PairSet {
    auto& n = re.nodes[i];
    PairSet out;
    switch (n.kind) {
      case Regex::Kind::letter:
        for (auto& f : inst.facts())
          if (f.rel == n.rel && f.args.size() == 2)
            out.insert(n.inverse ? std::make_pair(f.args[1], f.args[0]) : std::make_pair(f.args[0], f.args[1]));
        return out;
      case Regex::Kind::epsilon:
        return id;
      case Regex::Kind::alt: {
        out = go(n.left);
        auto r = go(n.right);
        out.insert(r.begin(), r.end());
        return out;
      }
      case Regex::Kind::concat: {
        auto l = go(n.left), r = go(n.right);
        for (auto& [a, b] : l)
          for (auto it = r.lower_bound({b, ""}); it != r.end() && it->first == b; ++it) out.insert({a, it->second});
        return out;
      }
      case Regex::Kind::star: {
        auto step = go(n.left);
        out = id;
        for (bool changed = true; changed;) {
          changed = false;
          PairSet next = out;
          for (auto& [a, b] : out)
            for (auto it = step.lower_bound({b, ""}); it != step.end() && it->first == b; ++it)
              if (next.insert({a, it->second}).second) changed = true;
          out = std::move(next);
        }
        return out;
      }
    }
    return out;
  };
  return go(re.root);
}

// Enumerates all variable assignments over the active domain.
inline bool sac2rpq_brute(const Sac2rpq& s, const Instance& inst) {
  std::vector<PairSet> rel;
  std::vector<std::string> vars;
  for (auto& e : s.edges) {
    rel.push_back(regex_pairs(e.regex, inst));
    for (auto& v : {e.from, e.to})
      if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
  }
  auto dom = inst.active_domain();
  if (dom.empty()) return false;
  std::map<std::string, std::string> h;
  std::function<bool(size_t)> go = [&](size_t i) {
    if (i == vars.size()) {
      for (size_t e = 0; e < s.edges.size(); ++e)
        if (!rel[e].count({h[s.edges[e].from], h[s.edges[e].to]})) return false;
      return true;
    }
    for (auto& d : dom) {
      h[vars[i]] = d;
      if (go(i + 1)) return true;
    }
    return false;
  };
  return go(0);
}


struct RandomCycluit {
  Cycluit circuit;
  std::vector<int> level;  // a valid stratification known by construction
};

// Gates get random levels; wires go to equal or higher levels, NOT gates read strictly lower ones.
inline RandomCycluit random_cycluit(std::mt19937& rng, int n_inputs, int n_gates, int max_level, double not_rate,
                                    int max_fan_in = 3) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
  RandomCycluit out;
  auto& c = out.circuit;
  for (int i = 0; i < n_inputs; ++i) {
    c.add_input("x" + std::to_string(i));
    out.level.push_back(0);
  }
  std::vector<GateId> gates;
  std::vector<GateType> types;
  for (int i = 0; i < n_gates; ++i) {
    gates.push_back(c.reserve());
    int l = 1 + pick(std::max(1, max_level));
    out.level.push_back(l);
    double r = std::uniform_real_distribution<double>(0, 1)(rng);
    types.push_back(r < not_rate ? GateType::negation : (pick(2) ? GateType::conj : GateType::disj));
  }
  for (int i = 0; i < n_gates; ++i) {
    GateId g = gates[i];
    int l = out.level[g];
    std::vector<GateId> below, upto;
    for (GateId h = 0; h < c.size(); ++h) {
      if (out.level[h] < l) below.push_back(h);
      if (out.level[h] <= l) upto.push_back(h);
    }
    if (types[i] == GateType::negation && below.empty()) types[i] = GateType::disj;
    if (types[i] == GateType::negation) {
      c.define(g, GateType::negation, {below[pick(static_cast<int>(below.size()))]});
      continue;
    }
    std::vector<GateId> ins;
    int fan = pick(max_fan_in + 1);
    for (int j = 0; j < fan; ++j) ins.push_back(upto[pick(static_cast<int>(upto.size()))]);
    c.define(g, types[i], ins);
  }
  c.set_output(gates.empty() ? 0 : gates[pick(n_gates)]);
  return out;
}

// Stratum by stratum: NOT gates from lower strata, then a plain fixpoint that only ever switches gates on.
inline GateValuation reference_stratified(const Cycluit& c, const std::vector<int>& level, const GateValuation& in) {
  GateValuation v(c.size(), 0);
  int top = 0;
  for (GateId g = 0; g < c.size(); ++g) {
    if (c.type(g) == GateType::input) v[g] = in[g];
    top = std::max(top, level[g]);
  }
  for (int l = 1; l <= top; ++l) {
    for (GateId g = 0; g < c.size(); ++g)
      if (level[g] == l && c.type(g) == GateType::negation) v[g] = !v[c.inputs_of(g)[0]];
    for (bool changed = true; changed;) {
      changed = false;
      for (GateId g = 0; g < c.size(); ++g) {
        if (level[g] != l || v[g] || c.type(g) == GateType::negation) continue;
        auto ins = c.inputs_of(g);
        bool on = c.type(g) == GateType::conj ? std::all_of(ins.begin(), ins.end(), [&](GateId x) { return v[x]; })
                                              : std::any_of(ins.begin(), ins.end(), [&](GateId x) { return v[x]; });
        if (on) {
          v[g] = 1;
          changed = true;
        }
      }
    }
  }
  return v;
}

// Acceptance by the run semantics: closes the reachable state set, then computes per stratum the least set
// of (state, node) pairs with a run, positive states resuming at any neighbour.
inline bool satwa_run_exists(const Satwa& a, const TreeEncoding& e, const std::vector<EncodingLabel>& labels) {
  const size_t n = e.size();
  std::vector<std::vector<int>> neigh(n);
  for (size_t w = 0; w < n; ++w) {
    neigh[w].push_back(static_cast<int>(w));
    if (!e.is_leaf(static_cast<int>(w)))
      for (int ch : e.children[w]) neigh[w].push_back(ch);
    if (e.parent[w] >= 0) neigh[w].push_back(e.parent[w]);
  }
  std::set<StateId> seen{a.initial()};
  std::vector<StateId> todo{a.initial()};
  while (!todo.empty()) {
    StateId q = todo.back();
    todo.pop_back();
    for (size_t w = 0; w < n; ++w)
      a.transition(q, labels[w]).for_each_literal([&](StateId r, bool) {
        if (seen.insert(r).second) todo.push_back(r);
      });
  }
  int top = 0;
  for (StateId q : seen) top = std::max(top, a.stratum(q));
  std::map<StateId, std::vector<char>> run;
  for (StateId q : seen) run[q].assign(n, 0);
  for (int s = 0; s <= top; ++s) {
    for (bool changed = true; changed;) {
      changed = false;
      for (StateId q : seen) {
        if (a.stratum(q) != s) continue;
        for (size_t w = 0; w < n; ++w) {
          if (run[q][w]) continue;
          bool ok = a.transition(q, labels[w]).evaluate([&](StateId r, bool positive) {
            if (!positive) return !run[r][w];
            for (int x : neigh[w])
              if (run[r][x]) return true;
            return false;
          });
          if (ok) {
            run[q][w] = 1;
            changed = true;
          }
        }
      }
    }
  }
  return run[a.initial()][e.root] != 0;
}

inline bool satwa_run_exists(const Satwa& a, const TreeEncoding& e) {
  std::vector<EncodingLabel> labels(e.size());
  for (size_t w = 0; w < e.size(); ++w) {
    labels[w] = e.labels[w];
    if (labels[w].has_fact()) {
      labels[w].rel = a.relation_index(e.relations[labels[w].rel]);
      if (labels[w].rel < 0) labels[w].args.clear();
    }
  }
  return satwa_run_exists(a, e, labels);
}

}  // namespace testing_support
