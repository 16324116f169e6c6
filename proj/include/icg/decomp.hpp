#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "core.hpp"
#include "datalog.hpp"

namespace icg {

template <class E>
struct BasicTreeDecomposition {
  std::vector<std::vector<E>> bags;  // each sorted, duplicate-free
  std::vector<int> parent;           // -1 at the root
  int root = 0;

  size_t size() const { return bags.size(); }

  int width() const {
    size_t m = 0;
    for (auto& b : bags) m = std::max(m, b.size());
    return static_cast<int>(m) - 1;
  }

  std::vector<std::vector<int>> children() const {
    std::vector<std::vector<int>> ch(bags.size());
    for (size_t i = 0; i < parent.size(); ++i)
      if (parent[i] >= 0) ch[parent[i]].push_back(static_cast<int>(i));
    return ch;
  }

  // Bags in an order where parents precede children.
  std::vector<int> preorder() const {
    auto ch = children();
    std::vector<int> order;
    if (bags.empty()) return order;
    order.push_back(root);
    for (size_t i = 0; i < order.size(); ++i)
      for (int c : ch[order[i]]) order.push_back(c);
    return order;
  }

  void normalize_bags() {
    for (auto& b : bags) {
      std::sort(b.begin(), b.end());
      b.erase(std::unique(b.begin(), b.end()), b.end());
    }
  }
};

using TreeDecomposition = BasicTreeDecomposition<std::string>;
using GateDecomposition = BasicTreeDecomposition<std::uint32_t>;

struct DecompositionCheck {
  bool ok = true;
  std::string reason;
  explicit operator bool() const { return ok; }
};

// Checks tree shape, coverage of every hyperedge, connectedness of occurrences and the bag-size bound.
template <class E>
DecompositionCheck validate_decomposition(const BasicTreeDecomposition<E>& t,
                                          const std::vector<std::vector<E>>& hyperedges,
                                          std::optional<int> k = std::nullopt) {
  auto fail = [](std::string r) { return DecompositionCheck{false, std::move(r)}; };
  size_t n = t.bags.size();
  if (n == 0) return fail("no bags");
  if (t.parent.size() != n) return fail("parent array size mismatch");
  if (t.root < 0 || static_cast<size_t>(t.root) >= n || t.parent[t.root] != -1) return fail("bad root");
  for (size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) != t.root && (t.parent[i] < 0 || static_cast<size_t>(t.parent[i]) >= n))
      return fail("bag " + std::to_string(i) + " has no valid parent");
    if (!std::is_sorted(t.bags[i].begin(), t.bags[i].end()) ||
        std::adjacent_find(t.bags[i].begin(), t.bags[i].end()) != t.bags[i].end())
      return fail("bag " + std::to_string(i) + " not a sorted set");
  }
  if (t.preorder().size() != n) return fail("parent links do not form a tree");
  if (k && t.width() > *k) return fail("width " + std::to_string(t.width()) + " exceeds " + std::to_string(*k));
  auto in = [&](int b, const E& e) { return std::binary_search(t.bags[b].begin(), t.bags[b].end(), e); };
  // Each element must have exactly one occurrence whose parent lacks it.
  std::map<E, int> tops;
  for (size_t i = 0; i < n; ++i)
    for (auto& e : t.bags[i])
      if (t.parent[i] < 0 || !in(t.parent[i], e)) ++tops[e];
  for (auto& [e, c] : tops)
    if (c != 1) {
      std::ostringstream os;
      os << "occurrences of element " << e << " are not connected";
      return fail(os.str());
    }
  std::map<E, std::vector<int>> where;
  for (size_t i = 0; i < n; ++i)
    for (auto& e : t.bags[i]) where[e].push_back(static_cast<int>(i));
  for (size_t h = 0; h < hyperedges.size(); ++h) {
    auto& edge = hyperedges[h];
    bool covered = false;
    if (edge.empty()) continue;
    auto it = where.find(edge[0]);
    if (it != where.end())
      for (int b : it->second) {
        bool all = true;
        for (auto& e : edge)
          if (!in(b, e)) all = false;
        if (all) {
          covered = true;
          break;
        }
      }
    if (!covered) return fail("hyperedge " + std::to_string(h) + " not covered");
  }
  return {};
}

inline std::vector<std::vector<std::string>> fact_hyperedges(const Instance& inst) {
  std::vector<std::vector<std::string>> out;
  for (auto& f : inst.facts()) out.push_back(f.args);
  for (auto& c : inst.active_domain()) out.push_back({c});
  return out;
}

inline DecompositionCheck validate_decomposition(const TreeDecomposition& t, const Instance& inst,
                                                 std::optional<int> k = std::nullopt) {
  auto adom = inst.active_domain();
  for (auto& b : t.bags)
    for (auto& e : b)
      if (!std::binary_search(adom.begin(), adom.end(), e))
        return {false, "bag mentions " + e + " outside the active domain"};
  return validate_decomposition(t, fact_hyperedges(inst), k);
}

struct width_exceeded : error {
  int width;
  width_exceeded(int w, int k)
      : error("achieved width " + std::to_string(w) + " exceeds " + std::to_string(k)), width(w) {}
};

// Min-fill greedy elimination on an undirected graph over 0..n-1.
// Vertices of degree above 256 are scored by their pair count instead of their exact fill.
// With `max_width`, throws width_exceeded once a bag would exceed it.
inline BasicTreeDecomposition<std::uint32_t> min_fill_decomposition(
    size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
    std::optional<int> max_width = std::nullopt) {
  BasicTreeDecomposition<std::uint32_t> td;
  if (n == 0) {
    td.bags.push_back({});
    td.parent.push_back(-1);
    return td;
  }
  std::vector<std::unordered_set<std::uint32_t>> adj(n);
  for (auto& [a, b] : edges)
    if (a != b) {
      adj[a].insert(b);
      adj[b].insert(a);
    }
  auto fill_of = [&](std::uint32_t v) {
    std::uint64_t d = adj[v].size();
    if (d > 256) return d * (d - 1) / 2;
    std::uint64_t missing = 0;
    std::vector<std::uint32_t> nb(adj[v].begin(), adj[v].end());
    for (size_t i = 0; i < nb.size(); ++i)
      for (size_t j = i + 1; j < nb.size(); ++j)
        if (!adj[nb[i]].count(nb[j])) ++missing;
    return missing;
  };
  using Key = std::tuple<std::uint64_t, std::uint64_t, std::uint32_t>;  // fill, degree, vertex
  std::priority_queue<Key, std::vector<Key>, std::greater<Key>> pq;
  std::vector<std::uint64_t> cur_fill(n);
  std::vector<char> gone(n, 0);
  for (std::uint32_t v = 0; v < n; ++v) {
    cur_fill[v] = fill_of(v);
    pq.push({cur_fill[v], adj[v].size(), v});
  }
  std::vector<std::uint32_t> pos(n);
  std::vector<std::uint32_t> order;
  std::vector<std::vector<std::uint32_t>> bag_of(n);
  while (!pq.empty()) {
    auto [f, d, v] = pq.top();
    pq.pop();
    if (gone[v] || f != cur_fill[v] || d != adj[v].size()) continue;
    if (max_width && d > static_cast<std::uint64_t>(*max_width)) throw width_exceeded(static_cast<int>(d), *max_width);
    gone[v] = 1;
    pos[v] = static_cast<std::uint32_t>(order.size());
    order.push_back(v);
    std::vector<std::uint32_t> nb(adj[v].begin(), adj[v].end());
    bag_of[v] = nb;
    bag_of[v].push_back(v);
    std::set<std::uint32_t> touched(nb.begin(), nb.end());
    for (size_t i = 0; i < nb.size(); ++i)
      for (size_t j = i + 1; j < nb.size(); ++j)
        if (adj[nb[i]].insert(nb[j]).second) {
          adj[nb[j]].insert(nb[i]);
          auto& small = adj[nb[i]].size() < adj[nb[j]].size() ? adj[nb[i]] : adj[nb[j]];
          auto& large = &small == &adj[nb[i]] ? adj[nb[j]] : adj[nb[i]];
          for (auto w : small)
            if (large.count(w)) touched.insert(w);
        }
    for (auto u : nb) adj[u].erase(v);
    adj[v].clear();
    for (auto u : touched) {
      if (gone[u]) continue;
      cur_fill[u] = fill_of(u);
      pq.push({cur_fill[u], adj[u].size(), u});
    }
  }
  // Bag of v hangs below the bag of its earliest-eliminated later neighbour.
  td.bags.resize(n);
  td.parent.assign(n, -1);
  for (std::uint32_t v : order) {
    td.bags[v] = bag_of[v];
    std::uint32_t best = UINT32_MAX;
    for (auto u : bag_of[v])
      if (u != v && (best == UINT32_MAX || pos[u] < pos[best])) best = u;
    if (best != UINT32_MAX) td.parent[v] = static_cast<int>(best);
  }
  // Component roots hang below the first one.
  int root = -1;
  for (std::uint32_t v : order)
    if (td.parent[v] < 0) {
      if (root < 0)
        root = static_cast<int>(v);
      else
        td.parent[v] = root;
    }
  td.root = root;
  td.normalize_bags();
  return td;
}

// Contracts every bag contained in its parent.
template <class E>
BasicTreeDecomposition<E> compress_decomposition(const BasicTreeDecomposition<E>& t) {
  size_t n = t.size();
  std::vector<int> rep(n);
  auto order = t.preorder();
  for (int b : order) {
    rep[b] = b;
    int p = t.parent[b];
    if (p < 0) continue;
    int target = rep[p];
    if (std::includes(t.bags[target].begin(), t.bags[target].end(), t.bags[b].begin(), t.bags[b].end()))
      rep[b] = target;
  }
  BasicTreeDecomposition<E> out;
  std::vector<int> id(n, -1);
  for (int b : order) {
    if (rep[b] != b) continue;
    id[b] = static_cast<int>(out.bags.size());
    out.bags.push_back(t.bags[b]);
    out.parent.push_back(t.parent[b] < 0 ? -1 : id[rep[t.parent[b]]]);
  }
  out.root = 0;
  return out;
}

inline TreeDecomposition heuristic_decomposition(const Instance& inst, std::optional<int> k = std::nullopt) {
  auto adom = inst.active_domain();
  std::map<std::string, std::uint32_t> id;
  for (auto& c : adom) id.emplace(c, static_cast<std::uint32_t>(id.size()));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (auto& f : inst.facts())
    for (size_t i = 0; i < f.args.size(); ++i)
      for (size_t j = i + 1; j < f.args.size(); ++j) edges.push_back({id[f.args[i]], id[f.args[j]]});
  auto raw = compress_decomposition(min_fill_decomposition(adom.size(), edges));
  TreeDecomposition td;
  td.root = raw.root;
  td.parent = raw.parent;
  for (auto& b : raw.bags) {
    std::vector<std::string> names;
    for (auto e : b) names.push_back(adom[e]);
    td.bags.push_back(std::move(names));
  }
  td.normalize_bags();
  if (k && td.width() > *k) throw width_exceeded(td.width(), *k);
  return td;
}

// Element-set file: `s td <#bags> <max_bag> <#elements>`, `b <id> <elem>...`, `<id1> <id2>`; root is bag 1.
inline TreeDecomposition parse_td(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  long n_bags = -1;
  std::map<long, std::vector<std::string>> bags;
  std::vector<std::pair<long, long>> edges;
  while (std::getline(in, line)) {
    ++line_no;
    auto cut = line.find('%');
    if (cut != std::string::npos) line = line.substr(0, cut);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head) || head == "c") continue;
    if (head == "s") {
      std::string kind;
      long mb, ne;
      if (!(ls >> kind >> n_bags >> mb >> ne) || kind != "td") throw parse_error(line_no, "bad header");
    } else if (head == "b") {
      long id;
      if (!(ls >> id)) throw parse_error(line_no, "bag line needs an id");
      std::vector<std::string> elems;
      std::string e;
      while (ls >> e) elems.push_back(e);
      if (!bags.emplace(id, elems).second) throw parse_error(line_no, "duplicate bag id");
    } else {
      long a, b;
      try {
        a = std::stol(head);
      } catch (...) {
        throw parse_error(line_no, "unexpected token " + head);
      }
      if (!(ls >> b)) throw parse_error(line_no, "edge line needs two ids");
      edges.push_back({a, b});
    }
  }
  if (n_bags < 0) throw parse_error(1, "missing header");
  if (static_cast<long>(bags.size()) != n_bags) throw parse_error(line_no, "bag count mismatch");
  for (long i = 1; i <= n_bags; ++i)
    if (!bags.count(i)) throw parse_error(line_no, "bags must be numbered 1..n");
  if (static_cast<long>(edges.size()) != n_bags - 1) throw parse_error(line_no, "a tree needs #bags-1 edges");
  TreeDecomposition td;
  for (auto& [id, b] : bags) td.bags.push_back(b);
  td.normalize_bags();
  std::vector<std::vector<int>> adj(n_bags);
  for (auto [a, b] : edges) {
    if (a < 1 || b < 1 || a > n_bags || b > n_bags) throw parse_error(line_no, "edge to unknown bag");
    adj[a - 1].push_back(static_cast<int>(b - 1));
    adj[b - 1].push_back(static_cast<int>(a - 1));
  }
  td.parent.assign(n_bags, -2);
  td.root = 0;
  td.parent[0] = -1;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (td.parent[w] == -2) {
        td.parent[w] = v;
        stack.push_back(w);
      }
  }
  for (auto p : td.parent)
    if (p == -2) throw parse_error(line_no, "edges do not connect all bags");
  return td;
}

template <class E>
std::string to_td_text(const BasicTreeDecomposition<E>& t) {
  // Bag 1 must be the root: renumber in preorder.
  auto order = t.preorder();
  std::vector<int> num(t.size());
  for (size_t i = 0; i < order.size(); ++i) num[order[i]] = static_cast<int>(i) + 1;
  std::set<E> elems;
  size_t mb = 0;
  for (auto& b : t.bags) {
    elems.insert(b.begin(), b.end());
    mb = std::max(mb, b.size());
  }
  std::ostringstream os;
  os << "s td " << t.size() << " " << mb << " " << elems.size() << "\n";
  for (int b : order) {
    os << "b " << num[b];
    for (auto& e : t.bags[b]) os << " " << e;
    os << "\n";
  }
  for (int b : order)
    if (t.parent[b] >= 0) os << num[t.parent[b]] << " " << num[b] << "\n";
  return os.str();
}

struct ConjunctiveQuery {
  std::vector<Atom> atoms;
};

inline ConjunctiveQuery parse_cq(std::string_view text) {
  detail::Lexer lx(text);
  // Accept an optional `goal() :-` prefix.
  ConjunctiveQuery q;
  bool first = true;
  while (!lx.eof()) {
    Atom a;
    a.rel = lx.ident();
    lx.expect("(");
    if (!lx.accept(")")) {
      do {
        std::string v = lx.ident();
        if (detail::is_upper_ident_start(v[0])) lx.fail("constants are not allowed in queries");
        a.vars.push_back(v);
      } while (lx.accept(","));
      lx.expect(")");
    }
    if (first && lx.accept(":-")) {
      first = false;
      continue;
    }
    first = false;
    q.atoms.push_back(std::move(a));
    if (lx.accept(".") || lx.eof()) break;
    lx.expect(",");
  }
  if (!lx.eof()) lx.fail("trailing input after query");
  return q;
}

inline std::string to_string(const ConjunctiveQuery& q) {
  std::string s;
  for (size_t i = 0; i < q.atoms.size(); ++i) s += (i ? ", " : "") + to_string(q.atoms[i]);
  return s + ".";
}

inline std::vector<std::string> cq_variables(const ConjunctiveQuery& q) {
  std::set<std::string> vs;
  for (auto& a : q.atoms) vs.insert(a.vars.begin(), a.vars.end());
  return {vs.begin(), vs.end()};
}

inline std::set<std::pair<std::string, std::string>> primal_edges(const ConjunctiveQuery& q) {
  std::set<std::pair<std::string, std::string>> e;
  for (auto& a : q.atoms)
    for (auto& x : a.vars)
      for (auto& y : a.vars)
        if (x != y) e.insert({x, y});
  return e;
}

struct SimplicialReport {
  bool is_simplicial = true;
  int parent = -1, child = -1;
};

inline SimplicialReport validate_simplicial(const TreeDecomposition& t, const ConjunctiveQuery& q) {
  std::vector<std::vector<std::string>> hyper;
  for (auto& a : q.atoms) {
    auto vs = distinct_vars(a.vars);
    std::sort(vs.begin(), vs.end());
    hyper.push_back(vs);
  }
  for (auto& v : cq_variables(q)) hyper.push_back({v});
  if (auto chk = validate_decomposition(t, hyper); !chk) throw error("not a decomposition of the query: " + chk.reason);
  auto edges = primal_edges(q);
  for (size_t b = 0; b < t.size(); ++b) {
    int p = t.parent[b];
    if (p < 0) continue;
    std::vector<std::string> inter;
    std::set_intersection(t.bags[b].begin(), t.bags[b].end(), t.bags[p].begin(), t.bags[p].end(),
                          std::back_inserter(inter));
    for (auto& x : inter)
      for (auto& y : inter)
        if (x != y && !edges.count({x, y})) return {false, p, static_cast<int>(b)};
  }
  return {};
}

struct not_acyclic : error {
  not_acyclic() : error("query is not alpha-acyclic") {}
};

// GYO ear removal; bags are the atoms' variable sets.
inline TreeDecomposition gyo_join_tree(const ConjunctiveQuery& q) {
  size_t m = q.atoms.size();
  TreeDecomposition td;
  if (m == 0) {
    td.bags.push_back({});
    td.parent.push_back(-1);
    return td;
  }
  std::vector<std::set<std::string>> cur(m);
  for (size_t i = 0; i < m; ++i) cur[i] = {q.atoms[i].vars.begin(), q.atoms[i].vars.end()};
  std::vector<char> alive(m, 1);
  std::vector<int> parent(m, -1);
  size_t n_alive = m;
  bool progress = true;
  while (progress && n_alive > 1) {
    progress = false;
    std::map<std::string, int> count;
    for (size_t i = 0; i < m; ++i)
      if (alive[i])
        for (auto& v : cur[i]) ++count[v];
    for (size_t i = 0; i < m; ++i) {
      if (!alive[i]) continue;
      for (auto it = cur[i].begin(); it != cur[i].end();)
        if (count[*it] == 1) {
          it = cur[i].erase(it);
          progress = true;
        } else {
          ++it;
        }
    }
    for (size_t i = 0; i < m && n_alive > 1; ++i) {
      if (!alive[i]) continue;
      for (size_t j = 0; j < m; ++j) {
        if (i == j || !alive[j]) continue;
        if (std::includes(cur[j].begin(), cur[j].end(), cur[i].begin(), cur[i].end())) {
          alive[i] = 0;
          parent[i] = static_cast<int>(j);
          --n_alive;
          progress = true;
          break;
        }
      }
    }
  }
  if (n_alive > 1) throw not_acyclic();
  for (size_t i = 0; i < m; ++i) {
    auto vs = distinct_vars(q.atoms[i].vars);
    td.bags.push_back(vs);
    if (alive[i]) td.root = static_cast<int>(i);
  }
  td.parent = parent;
  td.normalize_bags();
  return td;
}

}  // namespace icg
