#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "core.hpp"
#include "datalog.hpp"
#include "decomp.hpp"

namespace icg {

namespace detail {

// Hands out intensional relation names that avoid the extensional ones.
class Namer {
 public:
  explicit Namer(std::set<std::string> taken) : taken_(std::move(taken)) {}
  std::string operator()(std::string base) {
    while (taken_.count(base)) base += "_";
    taken_.insert(base);
    return base;
  }

 private:
  std::set<std::string> taken_;
};

inline Literal pos(std::string rel, std::vector<std::string> vars) { return {{std::move(rel), std::move(vars)}, false}; }

inline DatalogProgram finish_program(std::vector<Rule> rules, const Signature* domain) {
  DatalogProgram p;
  p.rules = std::move(rules);
  infer_signature(p, domain);
  check_program(p);
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conjunctive queries

// Backtracking homomorphism search.
inline bool cq_holds(const ConjunctiveQuery& q, const Instance& inst) {
  std::map<std::string, std::vector<const Fact*>> by_rel;
  for (auto& f : inst.facts()) by_rel[f.rel].push_back(&f);
  std::vector<size_t> order(q.atoms.size());
  std::iota(order.begin(), order.end(), 0);
  // Atoms sharing variables with earlier ones come first.
  std::set<std::string> seen;
  for (size_t i = 0; i < order.size(); ++i) {
    size_t best = i;
    int best_score = -1;
    for (size_t j = i; j < order.size(); ++j) {
      int score = 0;
      for (auto& v : q.atoms[order[j]].vars) score += seen.count(v) ? 1 : 0;
      if (score > best_score) best_score = score, best = j;
    }
    std::swap(order[i], order[best]);
    for (auto& v : q.atoms[order[i]].vars) seen.insert(v);
  }
  std::map<std::string, std::string> h;
  std::function<bool(size_t)> go = [&](size_t i) {
    if (i == order.size()) return true;
    const Atom& a = q.atoms[order[i]];
    auto it = by_rel.find(a.rel);
    if (it == by_rel.end()) return false;
    for (const Fact* f : it->second) {
      if (f->args.size() != a.vars.size()) continue;
      std::vector<std::string> bound;
      bool ok = true;
      for (size_t j = 0; j < a.vars.size() && ok; ++j) {
        auto hv = h.find(a.vars[j]);
        if (hv == h.end()) {
          h[a.vars[j]] = f->args[j];
          bound.push_back(a.vars[j]);
        } else if (hv->second != f->args[j]) {
          ok = false;
        }
      }
      if (ok && go(i + 1)) return true;
      for (auto& v : bound) h.erase(v);
    }
    return false;
  };
  return go(0);
}

struct DegreeBounded {
  TreeDecomposition tree;
  std::vector<int> origin;  // bag of the input tree, -1 for interface copies
};

// Groups the children of every bag by interface and hangs each group below a chain of interface copies.
inline DegreeBounded bound_degree(const TreeDecomposition& t) {
  DegreeBounded out;
  auto& nt = out.tree;
  auto add = [&](std::vector<std::string> bag, int parent, int origin) {
    nt.bags.push_back(std::move(bag));
    nt.parent.push_back(parent);
    out.origin.push_back(origin);
    return static_cast<int>(nt.bags.size()) - 1;
  };
  if (t.size() == 0) return out;
  auto ch = t.children();
  std::vector<int> id(t.size(), -1);
  id[t.root] = add(t.bags[t.root], -1, t.root);
  nt.root = id[t.root];
  for (int b : t.preorder()) {
    std::map<std::vector<std::string>, std::vector<int>> groups;
    for (int c : ch[b]) {
      std::vector<std::string> s;
      std::set_intersection(t.bags[b].begin(), t.bags[b].end(), t.bags[c].begin(), t.bags[c].end(),
                            std::back_inserter(s));
      groups[s].push_back(c);
    }
    for (auto& [s, members] : groups) {
      int prev = id[b];
      for (int c : members) {
        int link = add(s, prev, -1);
        id[c] = add(t.bags[c], link, c);
        prev = link;
      }
    }
  }
  return out;
}

struct CqTranslation {
  DatalogProgram program;
  TreeDecomposition tree;  // after degree bounding, rooting and scrubbing
  int width = 0;           // width of the input decomposition
  int atoms_per_bag = 0;   // measured g
  size_t max_children = 0;
};

inline long long cq_body_bound(int max_arity, int k, int atoms_per_bag) {
  long long kk = k;
  return static_cast<long long>(std::max<long long>(max_arity, kk + 1)) *
         (atoms_per_bag + (1LL << (kk + 1)) * (kk * (kk + 1) / 2 + 1));
}

inline CqTranslation cq_to_icg_detailed(const ConjunctiveQuery& q, const TreeDecomposition& t) {
  if (q.atoms.empty()) throw error("empty query");
  if (auto rep = validate_simplicial(t, q); !rep.is_simplicial)
    throw error("decomposition is not simplicial: interface of bags " + std::to_string(rep.parent + 1) + " and " +
                std::to_string(rep.child + 1) + " is not a clique");
  CqTranslation res;
  res.width = t.width();
  auto bounded = bound_degree(t);
  TreeDecomposition tree = std::move(bounded.tree);

  {
    auto ch = tree.children();
    if (!tree.bags[tree.root].empty() || ch[tree.root].size() != 1) {
      tree.bags.push_back({});
      tree.parent.push_back(-1);
      int r = static_cast<int>(tree.bags.size()) - 1;
      tree.parent[tree.root] = r;
      tree.root = r;
    }
  }
  const size_t n = tree.size();
  auto ch = tree.children();
  auto order = tree.preorder();
  std::vector<int> depth(n, 0);
  for (int b : order)
    if (tree.parent[b] >= 0) depth[b] = depth[tree.parent[b]] + 1;

  std::vector<std::vector<size_t>> assigned(n);
  for (size_t i = 0; i < q.atoms.size(); ++i) {
    auto vs = distinct_vars(q.atoms[i].vars);
    std::sort(vs.begin(), vs.end());
    int best = -1;
    for (size_t b = 0; b < n; ++b) {
      if (static_cast<int>(b) == tree.root) continue;
      if (!std::includes(tree.bags[b].begin(), tree.bags[b].end(), vs.begin(), vs.end())) continue;
      if (best < 0 || depth[b] < depth[best]) best = static_cast<int>(b);
    }
    assigned[best].push_back(i);
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int b = *it;
    std::set<std::string> keep;
    for (size_t i : assigned[b]) keep.insert(q.atoms[i].vars.begin(), q.atoms[i].vars.end());
    for (int c : ch[b]) keep.insert(tree.bags[c].begin(), tree.bags[c].end());
    std::vector<std::string> nb;
    for (auto& v : tree.bags[b])
      if (keep.count(v)) nb.push_back(v);
    tree.bags[b] = std::move(nb);
  }

  std::vector<std::vector<std::string>> iface(n);
  for (size_t b = 0; b < n; ++b) {
    int p = tree.parent[b];
    if (p < 0) continue;
    std::set_intersection(tree.bags[b].begin(), tree.bags[b].end(), tree.bags[p].begin(), tree.bags[p].end(),
                          std::back_inserter(iface[b]));
  }
  std::vector<char> trivial(n, 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int b = *it;
    trivial[b] = assigned[b].empty();
    for (int c : ch[b])
      if (!trivial[c]) trivial[b] = 0;
  }

  std::map<std::pair<std::string, std::string>, size_t> mu;
  for (size_t i = 0; i < q.atoms.size(); ++i)
    for (auto& x : q.atoms[i].vars)
      for (auto& y : q.atoms[i].vars)
        if (x != y) mu.emplace(std::make_pair(x, y), i);

  std::set<std::string> ext;
  for (auto& a : q.atoms) ext.insert(a.rel);
  ext.insert("goal");
  detail::Namer namer(ext);
  std::vector<std::string> pred(n);
  int top = ch[tree.root][0];
  int counter = 0;
  for (int b : order) {
    if (b == tree.root || trivial[b]) continue;
    pred[b] = b == top ? std::string("goal") : namer("P" + std::to_string(++counter));
  }

  int fresh = 0;
  std::vector<Rule> rules;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int b = *it;
    if (b == tree.root || trivial[b]) continue;
    Rule r;
    r.head = {pred[b], iface[b]};
    for (size_t i : assigned[b]) r.body.push_back({q.atoms[i], false});
    for (int c : ch[b]) {
      if (trivial[c]) continue;
      auto& s = iface[c];
      for (size_t x = 0; x < s.size(); ++x)
        for (size_t y = x + 1; y < s.size(); ++y) {
          const Atom& a = q.atoms[mu.at({s[x], s[y]})];
          Atom g{a.rel, {}};
          for (auto& z : a.vars) g.vars.push_back(z == s[x] || z == s[y] ? z : "_g" + std::to_string(++fresh));
          r.body.push_back({g, false});
        }
      r.body.push_back(detail::pos(pred[c], s));
    }
    rules.push_back(std::move(r));
  }
  for (int b : order)
    if (b != tree.root) {
      res.atoms_per_bag = std::max(res.atoms_per_bag, static_cast<int>(assigned[b].size()));
      res.max_children = std::max(res.max_children, ch[b].size());
    }
  res.program = detail::finish_program(std::move(rules), nullptr);
  res.tree = std::move(tree);
  return res;
}

inline DatalogProgram cq_to_icg(const ConjunctiveQuery& q, const TreeDecomposition& t) {
  return cq_to_icg_detailed(q, t).program;
}

// ---------------------------------------------------------------------------
// Regular path queries

struct Regex {
  enum class Kind { letter, concat, alt, star, epsilon };
  struct Node {
    Kind kind;
    std::string rel;
    bool inverse = false;
    int left = -1, right = -1;
  };
  std::vector<Node> nodes;
  int root = -1;

  std::set<std::string> relations() const {
    std::set<std::string> out;
    for (auto& n : nodes)
      if (n.kind == Kind::letter) out.insert(n.rel);
    return out;
  }
  bool two_way() const {
    return std::any_of(nodes.begin(), nodes.end(), [](const Node& n) { return n.inverse; });
  }
};

// Alternation `|`, concatenation by juxtaposition, postfix `*`, `+`, `?`,
// letters are relation names, `R-` is the inverse of R.
inline Regex parse_regex(std::string_view text) {
  Regex re;
  size_t pos = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw parse_error(1, "regex: " + msg + " at column " + std::to_string(pos + 1));
  };
  auto skip = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n')) ++pos;
  };
  auto node = [&](Regex::Node n) {
    re.nodes.push_back(std::move(n));
    return static_cast<int>(re.nodes.size()) - 1;
  };
  std::function<int()> alt;
  auto primary = [&]() -> int {
    skip();
    if (pos >= text.size()) fail("unexpected end");
    if (text[pos] == '(') {
      ++pos;
      skip();
      if (pos < text.size() && text[pos] == ')') {
        ++pos;
        return node({Regex::Kind::epsilon, ""});
      }
      int e = alt();
      skip();
      if (pos >= text.size() || text[pos] != ')') fail("expected ')'");
      ++pos;
      return e;
    }
    if (!detail::is_upper_ident_start(text[pos])) fail("expected a relation name");
    size_t b = pos;
    while (pos < text.size() && detail::is_ident_char(text[pos])) ++pos;
    Regex::Node n{Regex::Kind::letter, std::string(text.substr(b, pos - b))};
    if (pos < text.size() && text[pos] == '-') {
      n.inverse = true;
      ++pos;
    } else if (text.substr(pos, 3) == "⁻") {
      n.inverse = true;
      pos += 3;
    }
    return node(n);
  };
  auto postfix = [&]() -> int {
    int e = primary();
    for (;;) {
      skip();
      if (pos >= text.size()) break;
      char c = text[pos];
      if (c == '*') {
        e = node({Regex::Kind::star, "", false, e});
      } else if (c == '+') {
        int s = node({Regex::Kind::star, "", false, e});
        e = node({Regex::Kind::concat, "", false, e, s});
      } else if (c == '?') {
        int eps = node({Regex::Kind::epsilon, ""});
        e = node({Regex::Kind::alt, "", false, e, eps});
      } else {
        break;
      }
      ++pos;
    }
    return e;
  };
  auto concat = [&]() -> int {
    int e = postfix();
    for (;;) {
      skip();
      if (pos >= text.size() || text[pos] == '|' || text[pos] == ')') break;
      int r = postfix();
      e = node({Regex::Kind::concat, "", false, e, r});
    }
    return e;
  };
  alt = [&]() -> int {
    int e = concat();
    for (;;) {
      skip();
      if (pos >= text.size() || text[pos] != '|') break;
      ++pos;
      int r = concat();
      e = node({Regex::Kind::alt, "", false, e, r});
    }
    return e;
  };
  re.root = alt();
  skip();
  if (pos != text.size()) fail("unexpected character");
  return re;
}

inline std::string to_string(const Regex& re) {
  std::function<std::string(int, int)> go = [&](int i, int prec) -> std::string {
    auto& n = re.nodes[i];
    switch (n.kind) {
      case Regex::Kind::letter:
        return n.rel + (n.inverse ? "-" : "");
      case Regex::Kind::epsilon:
        return "()";
      case Regex::Kind::star:
        return go(n.left, 3) + "*";
      case Regex::Kind::concat: {
        std::string s = go(n.left, 2) + " " + go(n.right, 2);
        return prec > 2 ? "(" + s + ")" : s;
      }
      case Regex::Kind::alt: {
        std::string s = go(n.left, 1) + " | " + go(n.right, 1);
        return prec > 1 ? "(" + s + ")" : s;
      }
    }
    return "";
  };
  return go(re.root, 0);
}

struct Nfa {
  struct Transition {
    int from, to;
    std::string rel;  // empty for epsilon
    bool inverse = false;
  };
  int states = 0;
  int initial = 0, final_state = 0;
  std::vector<Transition> transitions;
};

// Thompson's construction: one initial and one final state.
inline Nfa thompson(const Regex& re) {
  Nfa a;
  auto state = [&] { return a.states++; };
  auto eps = [&](int f, int t) { a.transitions.push_back({f, t, "", false}); };
  std::function<std::pair<int, int>(int)> go = [&](int i) -> std::pair<int, int> {
    auto& n = re.nodes[i];
    int s = state(), f = state();
    switch (n.kind) {
      case Regex::Kind::letter:
        a.transitions.push_back({s, f, n.rel, n.inverse});
        break;
      case Regex::Kind::epsilon:
        eps(s, f);
        break;
      case Regex::Kind::concat: {
        auto [s1, f1] = go(n.left);
        auto [s2, f2] = go(n.right);
        eps(s, s1);
        eps(f1, s2);
        eps(f2, f);
        break;
      }
      case Regex::Kind::alt: {
        auto [s1, f1] = go(n.left);
        auto [s2, f2] = go(n.right);
        eps(s, s1);
        eps(s, s2);
        eps(f1, f);
        eps(f2, f);
        break;
      }
      case Regex::Kind::star: {
        auto [s1, f1] = go(n.left);
        eps(s, s1);
        eps(f1, s1);
        eps(f1, f);
        eps(s, f);
        break;
      }
    }
    return {s, f};
  };
  auto [s, f] = go(re.root);
  a.initial = s;
  a.final_state = f;
  return a;
}

// Automaton for paths read in the opposite direction: transitions reversed, letters inverted.
inline Nfa reverse_nfa(const Nfa& a) {
  Nfa r = a;
  std::swap(r.initial, r.final_state);
  for (auto& t : r.transitions) {
    std::swap(t.from, t.to);
    if (!t.rel.empty()) t.inverse = !t.inverse;
  }
  return r;
}

namespace detail {

inline Signature path_signature(const std::set<std::string>& rels, const Signature* domain) {
  Signature sig;
  if (domain)
    for (auto& [n, r] : domain->relations())
      if (r.kind == rel_kind::extensional) sig.declare(n, r.arity, rel_kind::extensional);
  for (auto& r : rels) {
    if (sig.contains(r) && sig.arity(r) != 2) throw error("relation " + r + " used in a path expression is not binary");
    sig.declare(r, 2, rel_kind::extensional);
  }
  return sig;
}

// head(x) for every element x of the active domain.
inline void domain_rules(std::vector<Rule>& rules, const std::string& head, const Signature& sig) {
  for (auto& [n, r] : sig.relations()) {
    std::vector<std::string> vs;
    for (int i = 0; i < r.arity; ++i) vs.push_back("x" + std::to_string(i + 1));
    for (int i = 0; i < r.arity; ++i) rules.push_back({{head, {vs[i]}}, {pos(n, vs)}});
  }
}

inline void automaton_rules(std::vector<Rule>& rules, const Nfa& a, const std::vector<std::string>& st) {
  for (auto& t : a.transitions) {
    if (t.rel.empty())
      rules.push_back({{st[t.to], {"x"}}, {pos(st[t.from], {"x"})}});
    else
      rules.push_back({{st[t.to], {"y"}},
                       {pos(st[t.from], {"x"}), pos(t.rel, t.inverse ? std::vector<std::string>{"y", "x"}
                                                                     : std::vector<std::string>{"x", "y"})}});
  }
}

// head(x) :- parts_1(x), ..., parts_m(x) as a chain of two-atom rules.
inline void conjunction_chain(std::vector<Rule>& rules, Namer& namer, const std::string& head,
                              const std::vector<std::string>& parts, const std::vector<std::string>& vars) {
  if (parts.size() == 1) {
    rules.push_back({{head, vars}, {pos(parts[0], vars)}});
    return;
  }
  std::vector<std::string> link(parts.size());
  for (size_t i = 0; i < parts.size(); ++i) link[i] = namer(head + "_c" + std::to_string(i + 1));
  rules.push_back({{link.back(), vars}, {pos(parts.back(), vars)}});
  for (size_t i = parts.size() - 1; i-- > 0;)
    rules.push_back({{link[i], vars}, {pos(link[i + 1], vars), pos(parts[i], vars)}});
  rules.push_back({{head, vars}, {pos(link[0], vars)}});
}

}  // namespace detail

// `domain` optionally lists further extensional relations whose elements count as path endpoints.
inline DatalogProgram rpq_to_icg(const Regex& re, const Signature* domain = nullptr) {
  Signature sig = detail::path_signature(re.relations(), domain);
  std::set<std::string> ext;
  for (auto& [n, r] : sig.relations()) ext.insert(n);
  ext.insert("goal");
  detail::Namer namer(ext);
  Nfa a = thompson(re);
  std::vector<std::string> st(a.states);
  for (int q = 0; q < a.states; ++q) st[q] = namer("Q" + std::to_string(q));
  std::vector<Rule> rules;
  rules.push_back({{"goal", {}}, {detail::pos(st[a.final_state], {"x"})}});
  detail::domain_rules(rules, st[a.initial], sig);
  detail::automaton_rules(rules, a, st);
  return detail::finish_program(std::move(rules), &sig);
}

inline DatalogProgram rpq_to_icg(std::string_view regex, const Signature* domain = nullptr) {
  return rpq_to_icg(parse_regex(regex), domain);
}

namespace detail {

// Pairs (a, b) such that some path from a to b spells a word of the automaton.
inline std::set<std::pair<std::string, std::string>> nfa_pairs(const Nfa& a, const Instance& inst) {
  auto dom = inst.active_domain();
  std::map<std::string, size_t> id;
  for (size_t i = 0; i < dom.size(); ++i) id[dom[i]] = i;
  // Element moves per letter.
  std::map<std::pair<std::string, bool>, std::vector<std::vector<size_t>>> step;
  for (auto& f : inst.facts()) {
    if (f.args.size() != 2) continue;
    for (bool inv : {false, true}) {
      auto& m = step[{f.rel, inv}];
      m.resize(dom.size());
      size_t s = id[f.args[inv ? 1 : 0]], t = id[f.args[inv ? 0 : 1]];
      m[s].push_back(t);
    }
  }
  std::vector<std::vector<const Nfa::Transition*>> out(a.states);
  for (auto& t : a.transitions) out[t.from].push_back(&t);
  std::set<std::pair<std::string, std::string>> res;
  for (size_t src = 0; src < dom.size(); ++src) {
    std::vector<char> seen(dom.size() * a.states, 0);
    std::vector<std::pair<size_t, int>> stack{{src, a.initial}};
    seen[src * a.states + a.initial] = 1;
    while (!stack.empty()) {
      auto [e, q] = stack.back();
      stack.pop_back();
      if (q == a.final_state) res.insert({dom[src], dom[e]});
      auto push = [&](size_t e2, int q2) {
        if (!seen[e2 * a.states + q2]) {
          seen[e2 * a.states + q2] = 1;
          stack.push_back({e2, q2});
        }
      };
      for (auto* t : out[q]) {
        if (t->rel.empty()) {
          push(e, t->to);
          continue;
        }
        auto it = step.find({t->rel, t->inverse});
        if (it == step.end()) continue;
        for (size_t e2 : it->second[e]) push(e2, t->to);
      }
    }
  }
  return res;
}

}  // namespace detail

// Product reachability between the instance and the Thompson automaton.
inline bool rpq_holds(const Regex& re, const Instance& inst) {
  return !detail::nfa_pairs(thompson(re), inst).empty();
}

// Conjunction of two-way path queries whose variable graph is a forest.
struct Sac2rpq {
  struct Edge {
    std::string from, to;
    Regex regex;
  };
  std::vector<Edge> edges;
};

// Edges `x -[ regex ]-> y`, separated by commas or newlines, optional final period.
inline Sac2rpq parse_sac2rpq(std::string_view text) {
  Sac2rpq s;
  detail::Lexer lx(text);
  while (!lx.eof()) {
    Sac2rpq::Edge e;
    e.from = lx.ident();
    lx.expect("-[");
    std::string body = lx.until("]");
    lx.expect("]->");
    e.to = lx.ident();
    for (auto& v : {e.from, e.to})
      if (!detail::is_lower_ident_start(v[0])) lx.fail("variables start with a lowercase letter");
    try {
      e.regex = parse_regex(body);
    } catch (const parse_error& err) {
      lx.fail(err.what());
    }
    s.edges.push_back(std::move(e));
    if (lx.accept(".")) break;
    lx.accept(",");
  }
  if (!lx.eof()) lx.fail("trailing input");
  if (s.edges.empty()) throw parse_error(1, "empty path query");
  return s;
}

namespace detail {

struct ForestShape {
  std::vector<std::string> vars;
  std::vector<int> parent, parent_edge;  // -1 at roots
  std::vector<int> roots;
  std::vector<std::vector<int>> children;
};

inline ForestShape sac_forest(const Sac2rpq& s) {
  ForestShape f;
  std::map<std::string, int> id;
  auto var = [&](const std::string& v) {
    auto [it, fresh] = id.emplace(v, static_cast<int>(f.vars.size()));
    if (fresh) f.vars.push_back(v);
    return it->second;
  };
  std::vector<std::vector<std::pair<int, int>>> adj;
  std::set<std::pair<int, int>> pairs;
  for (size_t i = 0; i < s.edges.size(); ++i) {
    auto& e = s.edges[i];
    if (e.from == e.to) throw error("loop on variable " + e.from);
    int a = var(e.from), b = var(e.to);
    adj.resize(f.vars.size());
    if (!pairs.insert({std::min(a, b), std::max(a, b)}).second)
      throw error("multiple edges between " + e.from + " and " + e.to);
    adj[a].push_back({b, static_cast<int>(i)});
    adj[b].push_back({a, static_cast<int>(i)});
  }
  size_t n = f.vars.size();
  f.parent.assign(n, -1);
  f.parent_edge.assign(n, -1);
  f.children.assign(n, {});
  std::vector<char> seen(n, 0);
  for (size_t r = 0; r < n; ++r) {
    if (seen[r]) continue;
    f.roots.push_back(static_cast<int>(r));
    seen[r] = 1;
    std::vector<int> stack{static_cast<int>(r)};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (auto [w, e] : adj[v]) {
        if (e == f.parent_edge[v]) continue;
        if (seen[w]) throw error("variable graph has a cycle through " + f.vars[w]);
        seen[w] = 1;
        f.parent[w] = v;
        f.parent_edge[w] = e;
        f.children[v].push_back(w);
        stack.push_back(w);
      }
    }
  }
  return f;
}

}  // namespace detail

inline DatalogProgram sac2rpq_to_icg(const Sac2rpq& s, const Signature* domain = nullptr) {
  auto f = detail::sac_forest(s);
  std::set<std::string> rels;
  for (auto& e : s.edges) {
    auto r = e.regex.relations();
    rels.insert(r.begin(), r.end());
  }
  Signature sig = detail::path_signature(rels, domain);
  std::set<std::string> ext;
  for (auto& [n, r] : sig.relations()) ext.insert(n);
  ext.insert("goal");
  detail::Namer namer(ext);
  const size_t n = f.vars.size();
  std::vector<std::string> node(n), link(n);  // link[v]: node(parent) restricted to the branch through v
  for (size_t v = 0; v < n; ++v) {
    node[v] = namer("N" + std::to_string(v));
    if (f.parent[v] >= 0) link[v] = namer("E" + std::to_string(f.parent[v]) + "_" + std::to_string(v));
  }
  std::vector<Rule> rules;
  std::vector<std::string> comps;
  for (size_t i = 0; i < f.roots.size(); ++i) {
    if (f.roots.size() == 1) {
      comps.push_back("goal");
    } else {
      comps.push_back(namer("G" + std::to_string(i + 1)));
    }
    rules.push_back({{comps.back(), {}}, {detail::pos(node[f.roots[i]], {"x"})}});
  }
  if (f.roots.size() > 1) detail::conjunction_chain(rules, namer, "goal", comps, {});
  for (size_t v = 0; v < n; ++v) {
    if (f.children[v].empty()) {
      detail::domain_rules(rules, node[v], sig);
    } else {
      std::vector<std::string> parts;
      for (int c : f.children[v]) parts.push_back(link[c]);
      detail::conjunction_chain(rules, namer, node[v], parts, {"x"});
    }
    if (f.parent[v] < 0) continue;
    auto& e = s.edges[f.parent_edge[v]];
    Nfa a = thompson(e.regex);
    // Derivations travel from the child variable up to its parent.
    if (e.from != f.vars[v]) a = reverse_nfa(a);
    std::vector<std::string> st(a.states);
    for (int q = 0; q < a.states; ++q)
      st[q] = namer("Q" + std::to_string(f.parent_edge[v]) + "_" + std::to_string(q));
    rules.push_back({{st[a.initial], {"x"}}, {detail::pos(node[v], {"x"})}});
    detail::automaton_rules(rules, a, st);
    rules.push_back({{link[v], {"x"}}, {detail::pos(st[a.final_state], {"x"})}});
  }
  return detail::finish_program(std::move(rules), &sig);
}

// Per-edge reachable pairs joined along the forest.
inline bool sac2rpq_holds(const Sac2rpq& s, const Instance& inst) {
  auto f = detail::sac_forest(s);
  auto dom = inst.active_domain();
  const size_t n = f.vars.size();
  // ok[v]: elements where the subtree below v has a match.
  std::vector<std::set<std::string>> ok(n);
  std::vector<int> order;
  for (int r : f.roots) {
    std::vector<int> stack{r};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      order.push_back(v);
      for (int c : f.children[v]) stack.push_back(c);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int v = *it;
    ok[v] = {dom.begin(), dom.end()};
    for (int c : f.children[v]) {
      auto& e = s.edges[f.parent_edge[c]];
      auto pairs = detail::nfa_pairs(thompson(e.regex), inst);
      std::set<std::string> reach;
      for (auto& [a, b] : pairs) {
        // The edge runs from e.from to e.to.
        const std::string& child_val = e.from == f.vars[c] ? a : b;
        const std::string& self_val = e.from == f.vars[c] ? b : a;
        if (ok[c].count(child_val)) reach.insert(self_val);
      }
      std::set<std::string> next;
      for (auto& x : ok[v])
        if (reach.count(x)) next.insert(x);
      ok[v] = std::move(next);
    }
  }
  for (int r : f.roots)
    if (ok[r].empty()) return false;
  return true;
}

}  // namespace icg
