#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cycluit.hpp"
#include "decomp.hpp"

namespace icg {

// Min-fill decomposition of the wire graph.
inline GateDecomposition cycluit_decomposition(const Cycluit& c, std::optional<int> max_width = std::nullopt) {
  return compress_decomposition(min_fill_decomposition(c.size(), c.wire_edges(), max_width));
}

namespace detail {

inline void require_decomposition(const Cycluit& c, const GateDecomposition& t) {
  auto check = validate_decomposition(t, wire_hyperedges(c));
  if (!check) throw error("invalid decomposition: " + check.reason);
}

inline std::vector<int> bag_depths(const GateDecomposition& t) {
  std::vector<int> d(t.size(), 0);
  for (int b : t.preorder())
    if (t.parent[b] >= 0) d[b] = d[t.parent[b]] + 1;
  return d;
}

// Bags on the tree path between a and b, both ends included.
inline void for_path(const std::vector<int>& parent, const std::vector<int>& depth, int a, int b,
                     const std::function<void(int)>& f) {
  while (depth[a] > depth[b]) {
    f(a);
    a = parent[a];
  }
  while (depth[b] > depth[a]) {
    f(b);
    b = parent[b];
  }
  while (a != b) {
    f(a);
    f(b);
    a = parent[a];
    b = parent[b];
  }
  f(a);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quadratic unfolding

struct Unfolding {
  Cycluit circuit;
  std::vector<GateId> image;  // gate of the circuit computing each original gate
  size_t layers = 0;          // iteration layers materialized over all components
};

// Each strongly connected component with m gates becomes m+1 layers of its fixpoint iteration.
inline Unfolding unfold_decycle(const Cycluit& c) {
  c.check_complete();
  stratify_cycluit(c);
  auto cons = c.consumers();
  auto scc = strongly_connected_components(cons);
  std::vector<std::vector<GateId>> members(scc.count);
  for (GateId g = 0; g < c.size(); ++g) members[scc.component[g]].push_back(g);
  Unfolding out;
  auto& o = out.circuit;
  out.image.assign(c.size(), 0);
  for (GateId g : c.input_gates()) out.image[g] = o.add_input(c.name(g));
  std::optional<GateId> zero;
  auto copy = [&](GateId g, const std::function<GateId(GateId)>& read) {
    std::vector<GateId> ins;
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) ins.push_back(read(*p));
    return o.add_gate(c.type(g), ins);
  };
  for (size_t comp = scc.count; comp-- > 0;) {
    auto& ms = members[comp];
    if (ms.size() == 1 && c.type(ms[0]) == GateType::input) continue;
    bool loop = ms.size() > 1 || std::find(c.ins_begin(ms[0]), c.ins_end(ms[0]), ms[0]) != c.ins_end(ms[0]);
    if (!loop) {
      out.image[ms[0]] = copy(ms[0], [&](GateId x) { return out.image[x]; });
      ++out.layers;
      continue;
    }
    if (!zero) zero = o.constant(false);
    std::unordered_map<GateId, GateId> cur;
    for (GateId g : ms) cur[g] = *zero;
    for (size_t t = 1; t <= ms.size(); ++t) {
      std::unordered_map<GateId, GateId> next;
      for (GateId g : ms)
        next[g] = copy(g, [&](GateId x) {
          auto it = cur.find(x);
          return it != cur.end() ? it->second : out.image[x];
        });
      cur = std::move(next);
    }
    out.layers += ms.size() + 1;
    for (GateId g : ms) out.image[g] = cur[g];
  }
  o.set_output(out.image[c.output()]);
  return out;
}

// ---------------------------------------------------------------------------
// Arity two

struct ArityTwo {
  Cycluit circuit;  // original gates keep their ids, fresh gates follow
  GateDecomposition decomposition;
};

namespace detail {

// Self-wires removed and fan-in split into binary trees laid along the decomposition. NOT gates are kept.
inline ArityTwo binarize(const Cycluit& c, const GateDecomposition& t) {
  c.check_complete();
  require_decomposition(c, t);
  const size_t n = c.size();
  ArityTwo out;
  auto& o = out.circuit;
  for (GateId g = 0; g < n; ++g) {
    if (c.type(g) == GateType::input)
      o.add_input(c.name(g));
    else
      o.reserve();
    if (!c.name(g).empty()) o.set_name(g, c.name(g));
  }
  o.set_output(c.output());
  auto bags = t.bags;
  auto depth = bag_depths(t);
  std::vector<std::vector<int>> occ(n);
  for (size_t b = 0; b < t.size(); ++b)
    for (auto g : t.bags[b]) occ[g].push_back(static_cast<int>(b));
  auto in_bag = [&](int b, GateId g) { return std::binary_search(t.bags[b].begin(), t.bags[b].end(), g); };

  for (GateId g = 0; g < n; ++g) {
    auto type = c.type(g);
    if (type == GateType::input) continue;
    auto ins = c.inputs_of(g);
    std::sort(ins.begin(), ins.end());
    ins.erase(std::unique(ins.begin(), ins.end()), ins.end());
    if (type != GateType::negation) {
      auto self = std::find(ins.begin(), ins.end(), g);
      if (self != ins.end()) {
        if (type == GateType::conj) {
          o.define(g, GateType::disj, {});
          continue;
        }
        ins.erase(self);
      }
    }
    if (ins.size() <= 2) {
      o.define(g, type, ins);
      continue;
    }
    // Each wire goes to a bag holding both ends; the tree spanning those bags carries partial gates upward.
    std::map<int, std::vector<GateId>> items;
    for (GateId x : ins) {
      int where = -1;
      for (int b : occ[g])
        if (in_bag(b, x)) {
          where = b;
          break;
        }
      items[where].push_back(x);
    }
    int top = items.begin()->first;
    for (auto& [b, _] : items) {
      int a = b, z = top;
      while (depth[a] > depth[z]) a = t.parent[a];
      while (depth[z] > depth[a]) z = t.parent[z];
      while (a != z) {
        a = t.parent[a];
        z = t.parent[z];
      }
      top = a;
    }
    std::vector<int> span;
    for (auto& [b, _] : items)
      for (int a = b; a != top; a = t.parent[a]) {
        if (std::find(span.begin(), span.end(), a) != span.end()) break;
        span.push_back(a);
      }
    std::sort(span.begin(), span.end(), [&](int x, int y) { return depth[x] > depth[y]; });
    span.push_back(top);
    auto fold = [&](int b, std::vector<GateId> xs, std::optional<GateId> root) -> GateId {
      size_t i = 0;
      while (xs.size() - i > 2) {
        GateId h = o.add_gate(type, {xs[i], xs[i + 1]});
        bags[b].push_back(h);
        xs.push_back(h);
        i += 2;
      }
      std::vector<GateId> last(xs.begin() + static_cast<long>(i), xs.end());
      if (root) {
        o.define(*root, type, last);
        return *root;
      }
      if (last.size() == 1) return last[0];
      GateId h = o.add_gate(type, last);
      bags[b].push_back(h);
      return h;
    };
    for (int b : span) {
      auto& xs = items[b];
      if (b == top) {
        fold(b, xs, g);
        break;
      }
      GateId part = fold(b, xs, std::nullopt);
      bags[t.parent[b]].push_back(part);
      items[t.parent[b]].push_back(part);
    }
  }
  out.decomposition.bags = std::move(bags);
  out.decomposition.parent = t.parent;
  out.decomposition.root = t.root;
  out.decomposition.normalize_bags();
  return out;
}

}  // namespace detail

inline ArityTwo to_arity_two(const Cycluit& c, const GateDecomposition& t) {
  detail::require_monotone(c);
  return detail::binarize(c, t);
}

// ---------------------------------------------------------------------------
// Regrouped and normal-form decompositions

// Each bag also receives the inputs of its gates.
inline GateDecomposition regroup_decomposition(const Cycluit& c, const GateDecomposition& t) {
  for (GateId g = 0; g < c.size(); ++g)
    if (c.fan_in(g) > 2) throw error("gate " + std::to_string(g) + " has fan-in " + std::to_string(c.fan_in(g)));
  auto out = t;
  for (size_t b = 0; b < t.size(); ++b)
    for (auto g : t.bags[b]) out.bags[b].insert(out.bags[b].end(), c.ins_begin(g), c.ins_end(g));
  out.normalize_bags();
  return out;
}

inline std::vector<GateId> gate_and_inputs(const Cycluit& c, GateId g) {
  std::vector<GateId> s(c.ins_begin(g), c.ins_end(g));
  s.push_back(g);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

// First bag holding the gate together with all of its inputs.
inline std::optional<int> witness_bag(const Cycluit& c, const GateDecomposition& t, GateId g) {
  auto need = gate_and_inputs(c, g);
  for (size_t b = 0; b < t.size(); ++b)
    if (std::includes(t.bags[b].begin(), t.bags[b].end(), need.begin(), need.end())) return static_cast<int>(b);
  return std::nullopt;
}

struct NormalFormDecomposition {
  GateDecomposition tree;  // stored rooted; degrees count the parent link
  std::vector<int> phi;    // leaf bag of each gate
  bool scrubbed = false;

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(tree.size());
    for (size_t b = 0; b < tree.size(); ++b)
      if (tree.parent[b] >= 0) {
        adj[b].push_back(tree.parent[b]);
        adj[tree.parent[b]].push_back(static_cast<int>(b));
      }
    return adj;
  }
};

inline NormalFormDecomposition normalize_decomposition(const Cycluit& c, const GateDecomposition& t) {
  const size_t n = c.size();
  for (GateId g = 0; g < n; ++g)
    if (c.fan_in(g) > 2) throw error("gate " + std::to_string(g) + " has fan-in > 2");
  detail::require_decomposition(c, t);
  std::vector<std::vector<GateId>> witnessed(t.size());
  {
    std::vector<char> done(n, 0);
    for (size_t b = 0; b < t.size(); ++b)
      for (auto g : t.bags[b]) {
        if (done[g]) continue;
        auto need = gate_and_inputs(c, g);
        if (std::includes(t.bags[b].begin(), t.bags[b].end(), need.begin(), need.end())) {
          witnessed[b].push_back(g);
          done[g] = 1;
        }
      }
    for (GateId g = 0; g < n; ++g)
      if (!done[g]) throw error("decomposition is not regrouped: gate " + std::to_string(g) + " has no witness bag");
  }
  NormalFormDecomposition nf;
  auto& bags = nf.tree.bags;
  auto& parent = nf.tree.parent;
  bags = t.bags;
  parent = t.parent;
  nf.phi.assign(n, -1);
  int root = t.root;
  auto add = [&](std::vector<GateId> dom, int p) {
    bags.push_back(std::move(dom));
    parent.push_back(p);
    return static_cast<int>(bags.size()) - 1;
  };
  // A chain of copies above each witness bag, each copy with the gate's leaf as second child.
  for (size_t b = 0; b < t.size(); ++b) {
    int above = t.parent[b];
    int first = -1;
    for (GateId g : witnessed[b]) {
      int w = add(t.bags[b], above);
      if (first < 0) first = w;
      nf.phi[g] = add(gate_and_inputs(c, g), w);
      above = w;
    }
    parent[b] = above;
    if (static_cast<int>(b) == t.root && first >= 0) root = first;
  }
  // At most two children per bag.
  {
    std::vector<std::vector<int>> ch(bags.size());
    for (size_t b = 0; b < bags.size(); ++b)
      if (parent[b] >= 0) ch[parent[b]].push_back(static_cast<int>(b));
    size_t limit = bags.size();
    for (size_t b = 0; b < limit; ++b) {
      int cur = static_cast<int>(b);
      auto kids = ch[b];
      while (kids.size() > 2) {
        int copy = add(bags[cur], cur);
        for (size_t i = 1; i < kids.size(); ++i) parent[kids[i]] = copy;
        kids.erase(kids.begin());
        cur = copy;
      }
    }
  }
  nf.tree.root = root;
  // Scrubbing.
  std::vector<int> owner(bags.size(), -1);
  for (GateId g = 0; g < n; ++g) owner[nf.phi[g]] = static_cast<int>(g);
  auto ch = nf.tree.children();
  auto order = nf.tree.preorder();
  for (size_t b = 0; b < bags.size(); ++b)
    if (ch[b].empty() && owner[b] < 0) bags[b].clear();
  std::vector<std::vector<std::uint8_t>> count(bags.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int b = *it;
    if (ch[b].empty()) continue;
    std::vector<GateId> kept;
    for (auto g : bags[b]) {
      std::uint8_t k = 0;
      for (int x : ch[b]) k += std::binary_search(bags[x].begin(), bags[x].end(), g);
      if (k == 0) continue;
      kept.push_back(g);
      count[b].push_back(k);
    }
    bags[b] = std::move(kept);
  }
  for (int b : order) {
    if (ch[b].empty()) continue;
    std::vector<GateId> kept;
    for (size_t i = 0; i < bags[b].size(); ++i) {
      GateId g = bags[b][i];
      int p = parent[b];
      bool top = p < 0 || !std::binary_search(bags[p].begin(), bags[p].end(), g);
      if (top && count[b][i] == 1) continue;
      kept.push_back(g);
    }
    bags[b] = std::move(kept);
  }
  // Degrees 1 or 3.
  size_t limit = bags.size();
  for (size_t b = 0; b < limit; ++b) {
    size_t deg = ch[b].size() + (parent[b] >= 0);
    if (deg == 2) add({}, static_cast<int>(b));
  }
  nf.scrubbed = true;
  return nf;
}

// Degrees, leaf images and the scrubbed condition, checked from scratch.
inline DecompositionCheck check_normal_form(const Cycluit& c, const NormalFormDecomposition& nf) {
  auto fail = [](std::string r) { return DecompositionCheck{false, std::move(r)}; };
  auto& t = nf.tree;
  if (auto v = validate_decomposition(t, wire_hyperedges(c)); !v) return v;
  auto adj = nf.adjacency();
  for (size_t b = 0; b < t.size(); ++b)
    if (t.size() > 1 && adj[b].size() != 1 && adj[b].size() != 3)
      return fail("bag " + std::to_string(b) + " has degree " + std::to_string(adj[b].size()));
  if (nf.phi.size() != c.size()) return fail("phi is not total");
  std::vector<int> owner(t.size(), -1);
  for (GateId g = 0; g < c.size(); ++g) {
    int b = nf.phi[g];
    if (b < 0 || static_cast<size_t>(b) >= t.size() || adj[b].size() > 1)
      return fail("gate " + std::to_string(g) + " is not mapped to a leaf");
    if (owner[b] >= 0) return fail("phi is not injective");
    owner[b] = static_cast<int>(g);
    if (t.bags[b] != gate_and_inputs(c, g)) return fail("leaf of gate " + std::to_string(g) + " has the wrong domain");
  }
  if (!nf.scrubbed) return {};
  std::vector<std::vector<int>> occurrences(c.size());
  for (GateId g = 0; g < c.size(); ++g) {
    occurrences[g].push_back(nf.phi[g]);
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) occurrences[*p].push_back(nf.phi[g]);
  }
  // Component of the tree without b that contains x, identified by the neighbor leading to it.
  auto toward = [&](int b, int x) {
    std::vector<int> from(t.size(), -2);
    std::vector<int> stack;
    for (int nb : adj[b]) {
      from[nb] = nb;
      stack.push_back(nb);
    }
    from[b] = -1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (v == x) return from[v];
      for (int w : adj[v])
        if (from[w] == -2) {
          from[w] = from[v];
          stack.push_back(w);
        }
    }
    return -1;
  };
  for (size_t b = 0; b < t.size(); ++b)
    for (auto g : t.bags[b]) {
      auto& occ = occurrences[g];
      if (adj[b].size() <= 1) {
        if (std::find(occ.begin(), occ.end(), static_cast<int>(b)) == occ.end())
          return fail("leaf " + std::to_string(b) + " holds gate " + std::to_string(g) + " outside its occurrences");
        continue;
      }
      std::set<int> dirs;
      for (int x : occ)
        if (x != static_cast<int>(b)) dirs.insert(toward(static_cast<int>(b), x));
      if (dirs.size() < 2) return fail("gate " + std::to_string(g) + " is not scrubbed at bag " + std::to_string(b));
    }
  return {};
}

namespace detail {

// Preorder intervals of the stored rooting, for side-of-edge tests.
struct TreeIndex {
  std::vector<int> parent, tin, tout;

  explicit TreeIndex(const GateDecomposition& t) : parent(t.parent), tin(t.size()), tout(t.size()) {
    auto ch = t.children();
    int clock = 0;
    std::vector<std::pair<int, size_t>> stack{{t.root, 0}};
    tin[t.root] = clock++;
    while (!stack.empty()) {
      auto& [v, k] = stack.back();
      if (k < ch[v].size()) {
        int w = ch[v][k++];
        tin[w] = clock++;
        stack.push_back({w, 0});
      } else {
        tout[v] = clock - 1;
        stack.pop_back();
      }
    }
  }
  bool in_subtree(int v, int x) const { return tin[v] <= tin[x] && tin[x] <= tout[v]; }
  // Whether x lies on b's side of the edge b - p; every bag does when p is -1.
  bool on_side(int b, int p, int x) const {
    if (p < 0) return true;
    return parent[b] == p ? in_subtree(b, x) : !in_subtree(p, x);
  }
};

}  // namespace detail

struct BagSplit {
  std::vector<GateId> up, down;
};

// Seen from bag b with `toward` as its parent: inputs, constants and gates whose leaf lies below b are upward.
inline BagSplit split_bag(const Cycluit& c, const NormalFormDecomposition& nf, int b, int toward) {
  detail::TreeIndex idx(nf.tree);
  BagSplit s;
  for (auto g : nf.tree.bags[b]) {
    if (c.type(g) == GateType::input || c.fan_in(g) == 0 || idx.on_side(b, toward, nf.phi[g]))
      s.up.push_back(g);
    else
      s.down.push_back(g);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Partition-based evaluation

struct EvaluationPartition {
  std::vector<GateId> part[2];      // G1, G2
  std::vector<GateId> frontier[2];  // F_j: gates of the other part feeding part j
  size_t frontier_size() const { return frontier[0].size() + frontier[1].size(); }
};

inline bool is_internal_gate(const Cycluit& c, GateId g) { return c.type(g) != GateType::input && c.fan_in(g) > 0; }

// side[g] picks the part of each internal gate; other entries are ignored.
inline EvaluationPartition make_partition(const Cycluit& c, const std::vector<int>& side) {
  if (side.size() != c.size()) throw error("partition size does not match the cycluit");
  EvaluationPartition p;
  for (GateId g = 0; g < c.size(); ++g)
    if (is_internal_gate(c, g)) p.part[side[g] ? 1 : 0].push_back(g);
  for (int j = 0; j < 2; ++j) {
    std::set<GateId> f;
    for (GateId g : p.part[j])
      for (auto* x = c.ins_begin(g); x != c.ins_end(g); ++x)
        if (is_internal_gate(c, *x) && (side[*x] ? 1 : 0) != j) f.insert(*x);
    p.frontier[j].assign(f.begin(), f.end());
  }
  return p;
}

inline GateValuation partition_evaluate(const Cycluit& c, const GateValuation& v, const EvaluationPartition& p,
                                        size_t* iterations = nullptr) {
  detail::require_monotone(c);
  const size_t n = c.size();
  std::vector<int> side(n, -1);
  for (int j = 0; j < 2; ++j)
    for (GateId g : p.part[j]) {
      if (g >= n || !is_internal_gate(c, g) || side[g] >= 0) throw error("partition does not cover internal gates");
      side[g] = j;
    }
  for (GateId g = 0; g < n; ++g)
    if (is_internal_gate(c, g) && side[g] < 0) throw error("partition does not cover internal gates");
  GateValuation cst(n, 0);
  for (GateId g = 0; g < n; ++g) {
    if (c.type(g) == GateType::input)
      cst[g] = detail::input_value(c, g, v);
    else if (c.fan_in(g) == 0)
      cst[g] = c.type(g) == GateType::conj;
  }
  auto sub_eval = [&](GateValuation z, const std::vector<GateId>& gs) {
    for (bool changed = true; changed;) {
      changed = false;
      for (GateId g : gs) {
        if (z[g]) continue;
        bool now = c.type(g) == GateType::disj
                       ? std::any_of(c.ins_begin(g), c.ins_end(g), [&](GateId x) { return z[x] != 0; })
                       : std::all_of(c.ins_begin(g), c.ins_end(g), [&](GateId x) { return z[x] != 0; });
        if (now) {
          z[g] = 1;
          changed = true;
        }
      }
    }
    return z;
  };
  size_t rounds = p.frontier_size() + 2;
  GateValuation t = cst;
  for (size_t i = 1; i <= rounds; ++i) {
    GateValuation next = cst;
    for (int j = 0; j < 2; ++j) {
      GateValuation z = cst;
      for (GateId g : p.frontier[j]) z[g] = t[g];
      auto vj = sub_eval(std::move(z), p.part[j]);
      for (GateId g : p.part[j]) next[g] |= vj[g];
    }
    t = std::move(next);
  }
  if (iterations) *iterations = rounds;
  return t;
}

// ---------------------------------------------------------------------------
// Treewidth-preserving cycle removal

struct decycle_limit : error {
  using error::error;
};

struct DecycleOptions {
  size_t max_gates = 20'000'000;
  size_t max_frontier = 20;  // largest set of frontier gates guessed at one bag
};

struct DecycleResult {
  Cycluit circuit;
  GateDecomposition decomposition;  // skeleton of the normal-form decomposition
  std::vector<std::int64_t> image;  // gate computing each original gate, -1 when not materialized
  int input_width = 0;
  int normal_width = 0;  // width after arity two, regrouping and normal form
};

namespace detail {

// Acyclic gate builder with constant folding and per-bag structural sharing.
class CircuitBuilder {
 public:
  explicit CircuitBuilder(size_t limit) : limit_(limit) {}

  Cycluit circuit;
  std::vector<int> home;  // bag of each gate

  GateId input(const std::string& name, int bag) { return track(circuit.add_input(name), bag, -1); }
  GateId constant(bool v) {
    auto& slot = v ? one_ : zero_;
    if (!slot) slot = track(circuit.constant(v), -1, v);
    return *slot;
  }
  int value(GateId g) const { return konst_[g]; }

  GateId make(int bag, GateType t, std::vector<GateId> ins) {
    if (t == GateType::negation) {
      int k = konst_[ins[0]];
      if (k >= 0) return constant(!k);
    } else {
      bool absorb = t == GateType::disj;  // value that decides the gate
      std::vector<GateId> kept;
      for (GateId x : ins) {
        int k = konst_[x];
        if (k < 0) {
          kept.push_back(x);
        } else if (k == absorb) {
          return constant(absorb);
        }
      }
      std::sort(kept.begin(), kept.end());
      kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
      if (kept.empty()) return constant(!absorb);
      if (kept.size() == 1) return kept[0];
      ins = std::move(kept);
    }
    Key key{bag, t, ins};
    auto it = seen_.find(key);
    if (it != seen_.end()) return it->second;
    if (circuit.size() >= limit_) throw decycle_limit("decycled circuit exceeds " + std::to_string(limit_) + " gates");
    GateId g = track(circuit.add_gate(t, ins), bag, -1);
    seen_.emplace(std::move(key), g);
    return g;
  }

 private:
  struct Key {
    int bag;
    GateType t;
    std::vector<GateId> ins;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    size_t operator()(const Key& k) const {
      size_t h = std::hash<int>()(k.bag) * 31 + static_cast<size_t>(k.t);
      for (auto x : k.ins) h = h * 1000003u ^ x;
      return h;
    }
  };
  GateId track(GateId g, int bag, int k) {
    home.push_back(bag);
    konst_.push_back(static_cast<std::int8_t>(k));
    return g;
  }
  size_t limit_;
  std::vector<std::int8_t> konst_;
  std::optional<GateId> zero_, one_;
  std::unordered_map<Key, GateId, KeyHash> seen_;
};

// Tables g_b^{S+,gamma} for every orientation of every bag, built on demand for one stratum.
class StratumRewriter {
 public:
  StratumRewriter(const Cycluit& c, const NormalFormDecomposition& nf, const std::vector<std::vector<int>>& adj,
                  const detail::TreeIndex& idx, CircuitBuilder& out,
                  const std::vector<std::int64_t>& ext, std::function<bool(GateId)> internal,
                  const DecycleOptions& opt)
      : c_(c), nf_(nf), adj_(adj), idx_(idx), out_(out), ext_(ext), internal_(std::move(internal)),
        opt_(opt) {
    offset_.assign(adj.size() + 1, 0);
    for (size_t b = 0; b < adj.size(); ++b) offset_[b + 1] = offset_[b] + static_cast<int>(adj[b].size());
    ctx_of_.assign(offset_.back() + adj.size(), -1);
  }

  // Gate of the output circuit emulating internal gate g.
  GateId emulate(GateId g) {
    int leaf = nf_.phi[g];
    int r = context(offset_.back() + leaf, leaf, -1);
    return layer(r, 0, g, ctxs_[r].layers);
  }

 private:
  struct MemoKey {
    std::uint64_t mask;
    GateId gamma;
    std::uint32_t round;  // UINT32_MAX for leaf tables
    bool operator==(const MemoKey&) const = default;
  };
  struct MemoHash {
    size_t operator()(const MemoKey& k) const {
      return std::hash<std::uint64_t>()(k.mask * 0x9E3779B97F4A7C15ull ^ (std::uint64_t{k.gamma} << 20) ^ k.round);
    }
  };

  struct Context {
    int bag, toward;                  // orientation bag -> toward; toward -1 for a root at a leaf
    bool leaf = false;
    int side[2] = {-1, -1};           // contexts of the two other orientations feeding this one
    std::vector<GateId> down, up;     // sorted
    std::vector<GateId> cand[2];      // gates of side j's down set found on the other side
    std::vector<std::pair<int, int>> remap[2];  // per child down gate: (0, index in down) or (1, index in cand)
    size_t layers = 0;
    std::unordered_map<MemoKey, GateId, MemoHash> memo;
  };

  bool external(GateId g) const { return ext_[g] >= 0; }
  bool member(GateId g) const { return external(g) || internal_(g); }

  int edge_id(int b, int p) const {
    auto& a = adj_[b];
    return offset_[b] + static_cast<int>(std::find(a.begin(), a.end(), p) - a.begin());
  }

  int context(int id, int b, int p) {
    if (ctx_of_[id] >= 0) return ctx_of_[id];
    Context x;
    x.bag = b;
    x.toward = p;
    for (auto g : nf_.tree.bags[b]) {
      if (!member(g)) continue;
      if (external(g) || idx_.on_side(b, p, nf_.phi[g]))
        x.up.push_back(g);
      else
        x.down.push_back(g);
    }
    if (x.down.size() > 62) throw decycle_limit("bag with " + std::to_string(x.down.size()) + " downward gates");
    if (p < 0) {
      int nb = adj_[b][0];
      x.side[0] = context(edge_id(b, nb), b, nb);
      x.side[1] = context(edge_id(nb, b), nb, b);
    } else if (adj_[b].size() == 1) {
      x.leaf = true;
    } else {
      int j = 0;
      for (int nb : adj_[b])
        if (nb != p) x.side[j++] = context(edge_id(nb, b), nb, b);
    }
    if (!x.leaf) {
      size_t total = 0;
      for (int j = 0; j < 2; ++j) {
        if (x.side[j] < 0) continue;
        auto& sd = ctxs_[x.side[j]];
        for (GateId g : sd.down) {
          auto d = std::lower_bound(x.down.begin(), x.down.end(), g);
          if (d != x.down.end() && *d == g) {
            x.remap[j].push_back({0, static_cast<int>(d - x.down.begin())});
          } else {
            x.remap[j].push_back({1, static_cast<int>(x.cand[j].size())});
            x.cand[j].push_back(g);
          }
        }
        if (x.cand[j].size() > opt_.max_frontier)
          throw decycle_limit("frontier of " + std::to_string(x.cand[j].size()) + " gates at one bag");
        total += x.cand[j].size();
      }
      x.layers = total + 2;
    }
    int r = static_cast<int>(ctxs_.size());
    ctxs_.push_back(std::move(x));
    ctx_of_[id] = r;
    return r;
  }

  // Value of gate gamma in the cycluit of a subtree with its downward gates fixed by mask.
  GateId table(int ci, std::uint64_t mask, GateId gamma) {
    if (external(gamma)) return static_cast<GateId>(ext_[gamma]);
    auto& x = ctxs_[ci];
    if (!x.leaf) return layer(ci, mask, gamma, x.layers);
    if (nf_.phi[gamma] != x.bag) throw error("leaf table requested for a gate of another leaf");
    MemoKey key{mask, gamma, UINT32_MAX};
    if (auto it = x.memo.find(key); it != x.memo.end()) return it->second;
    std::vector<GateId> ins;
    for (auto* p = c_.ins_begin(gamma); p != c_.ins_end(gamma); ++p) {
      if (external(*p)) {
        ins.push_back(static_cast<GateId>(ext_[*p]));
        continue;
      }
      auto d = std::lower_bound(x.down.begin(), x.down.end(), *p);
      if (d == x.down.end() || *d != *p) throw error("leaf bag misses an input of its gate");
      ins.push_back(out_.constant((mask >> (d - x.down.begin())) & 1));
    }
    GateId r = out_.make(x.bag, c_.type(gamma), ins);
    ctxs_[ci].memo.emplace(key, r);
    return r;
  }

  GateId layer(int ci, std::uint64_t mask, GateId gamma, size_t i) {
    if (external(gamma)) return static_cast<GateId>(ext_[gamma]);
    if (i == 0) return out_.constant(false);
    MemoKey key{mask, gamma, static_cast<std::uint32_t>(i)};
    if (auto it = ctxs_[ci].memo.find(key); it != ctxs_[ci].memo.end()) return it->second;
    auto holds = [&](int j) {
      auto& up = ctxs_[ctxs_[ci].side[j]].up;
      return std::binary_search(up.begin(), up.end(), gamma);
    };
    int j = holds(0) ? 0 : 1;
    if (j == 1 && !holds(1)) throw error("gate " + std::to_string(gamma) + " has no side below its bag");
    int child = ctxs_[ci].side[j];
    std::vector<GateId> cand = ctxs_[ci].cand[j];
    auto remap = ctxs_[ci].remap[j];
    int bag = ctxs_[ci].bag;
    // Guessed frontier gates already false in the previous round cannot help.
    std::vector<GateId> prev(cand.size());
    std::vector<int> live;
    for (size_t t = 0; t < cand.size(); ++t) {
      prev[t] = layer(ci, mask, cand[t], i - 1);
      if (out_.value(prev[t]) != 0) live.push_back(static_cast<int>(t));
    }
    std::vector<GateId> terms;
    for (std::uint64_t sub = 0; sub < (1ull << live.size()); ++sub) {
      std::uint64_t guess = 0;
      std::vector<GateId> conj;
      for (size_t t = 0; t < live.size(); ++t)
        if ((sub >> t) & 1) {
          guess |= 1ull << live[t];
          conj.push_back(prev[live[t]]);
        }
      std::uint64_t child_mask = 0;
      for (size_t d = 0; d < remap.size(); ++d) {
        auto [kind, idx] = remap[d];
        bool bit = kind == 0 ? (mask >> idx) & 1 : (guess >> idx) & 1;
        if (bit) child_mask |= 1ull << d;
      }
      GateId v = table(child, child_mask, gamma);
      if (out_.value(v) == 0) continue;
      conj.push_back(v);
      terms.push_back(out_.make(bag, GateType::conj, conj));
    }
    GateId r = out_.make(bag, GateType::disj, terms);
    ctxs_[ci].memo.emplace(key, r);
    return r;
  }

  const Cycluit& c_;
  const NormalFormDecomposition& nf_;
  const std::vector<std::vector<int>>& adj_;
  const detail::TreeIndex& idx_;
  CircuitBuilder& out_;
  const std::vector<std::int64_t>& ext_;
  std::function<bool(GateId)> internal_;
  const DecycleOptions& opt_;
  std::vector<int> offset_;
  std::vector<int> ctx_of_;
  std::vector<Context> ctxs_;
};

inline DecycleResult decycle(const Cycluit& c, const std::optional<GateDecomposition>& td, bool all_gates,
                             const DecycleOptions& opt) {
  c.check_complete();
  stratify_cycluit(c);
  GateDecomposition t = td ? *td : cycluit_decomposition(c);
  require_decomposition(c, t);
  auto a2 = binarize(c, t);
  const Cycluit& b = a2.circuit;
  auto nf = normalize_decomposition(b, regroup_decomposition(b, a2.decomposition));
  auto strat = stratify_cycluit(b);
  auto adj = nf.adjacency();
  const auto& tree = nf.tree;
  TreeIndex idx(tree);

  DecycleResult res;
  res.input_width = t.width();
  res.normal_width = tree.width();
  CircuitBuilder out(opt.max_gates);
  std::vector<std::int64_t> ext(b.size(), -1);
  for (GateId g : b.input_gates()) ext[g] = out.input(b.name(g), nf.phi[g]);

  std::vector<char> needed(b.size(), 0);
  needed[b.output()] = 1;
  for (GateId g = 0; g < b.size(); ++g) {
    if (all_gates && g < c.size()) needed[g] = 1;
    for (auto* p = b.ins_begin(g); p != b.ins_end(g); ++p)
      if (b.type(g) == GateType::negation || strat[*p] < strat[g]) needed[*p] = 1;
  }
  int top = 0;
  for (int s : strat) top = std::max(top, s);
  std::vector<std::vector<GateId>> by_stratum(top + 1);
  for (GateId g = 0; g < b.size(); ++g) by_stratum[strat[g]].push_back(g);
  for (int s = 1; s <= top; ++s) {
    for (GateId g : by_stratum[s]) {
      if (b.type(g) == GateType::negation)
        ext[g] = out.make(nf.phi[g], GateType::negation, {static_cast<GateId>(ext[*b.ins_begin(g)])});
      else if (b.fan_in(g) == 0)
        ext[g] = out.constant(b.type(g) == GateType::conj);
    }
    auto internal = [&, s](GateId g) { return strat[g] == s && is_internal_gate(b, g) && b.type(g) != GateType::negation; };
    StratumRewriter rw(b, nf, adj, idx, out, ext, internal, opt);
    std::vector<std::pair<GateId, GateId>> done;
    for (GateId g : by_stratum[s])
      if (needed[g] && internal(g)) done.push_back({g, rw.emulate(g)});
    for (auto [g, e] : done) ext[g] = e;
  }
  out.circuit.set_output(static_cast<GateId>(ext[b.output()]));

  // Each gate sits in its home bag and on the path to every bag using it.
  auto& o = out.circuit;
  auto& dec = res.decomposition;
  dec.bags.assign(tree.size(), {});
  dec.parent = tree.parent;
  dec.root = tree.root;
  auto depth = bag_depths(tree);
  for (GateId g = 0; g < o.size(); ++g)
    if (out.home[g] < 0) out.home[g] = tree.root;
  for (GateId g = 0; g < o.size(); ++g) {
    dec.bags[out.home[g]].push_back(g);
    for (auto* p = o.ins_begin(g); p != o.ins_end(g); ++p)
      for_path(tree.parent, depth, out.home[*p], out.home[g], [&](int x) { dec.bags[x].push_back(*p); });
  }
  dec.normalize_bags();
  res.image.assign(c.size(), -1);
  for (GateId g = 0; g < c.size(); ++g) res.image[g] = ext[g];
  res.circuit = std::move(o);
  return res;
}

}  // namespace detail

// Equivalent acyclic circuit for the output gate of a monotone cycluit.
inline DecycleResult decycle_monotone(const Cycluit& c, const std::optional<GateDecomposition>& td = std::nullopt,
                                     const DecycleOptions& opt = {}) {
  detail::require_monotone(c);
  return detail::decycle(c, td, false, opt);
}

// Acyclic circuit with one gate per original gate, each with the same value under every valuation.
inline DecycleResult emulate_decycle(const Cycluit& c, const std::optional<GateDecomposition>& td = std::nullopt,
                                    const DecycleOptions& opt = {}) {
  detail::require_monotone(c);
  return detail::decycle(c, td, true, opt);
}

// Strata are rewritten in order, lower strata feeding the next one as inputs.
inline DecycleResult decycle_stratified(const Cycluit& c, const std::optional<GateDecomposition>& td = std::nullopt,
                                       const DecycleOptions& opt = {}) {
  return detail::decycle(c, td, false, opt);
}

// ---------------------------------------------------------------------------
// Simplification

struct Simplified {
  Cycluit circuit;                  // inputs first, in the original order
  std::vector<std::int64_t> image;  // gate of each original gate, -1 when removed
};

// Constant propagation under three-valued bounds, alias collapsing and removal of gates the output does not read.
inline Simplified simplify_cycluit(const Cycluit& c) {
  c.check_complete();
  const size_t n = c.size();
  auto strat = stratify_cycluit(c);
  auto cons = c.consumers();
  int top = 0;
  for (int s : strat) top = std::max(top, s);
  std::vector<std::vector<GateId>> by_stratum(top + 1);
  for (GateId g = 0; g < n; ++g) by_stratum[strat[g]].push_back(g);
  // lo: true under every valuation, hi: true under some valuation.
  GateValuation lo(n, 0), hi(n, 0);
  for (GateId g : by_stratum[0]) hi[g] = c.type(g) == GateType::input;
  auto closure = [&](int s, GateValuation& val) {
    std::vector<std::uint32_t> missing(n, 0);
    std::vector<GateId> work;
    for (GateId g : by_stratum[s]) {
      auto t = c.type(g);
      if (t == GateType::negation) continue;
      std::uint32_t miss = 0;
      bool any = false;
      for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) {
        bool fixed = strat[*p] < s || c.type(*p) == GateType::negation;
        bool on = fixed && val[*p];
        any |= on;
        miss += !on;
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
      for (auto* p = cons.begin(g); p != cons.end(g); ++p) {
        GateId h = *p;
        if (strat[h] != s || c.type(h) == GateType::negation || val[h]) continue;
        if (c.type(h) == GateType::disj || --missing[h] == 0) {
          val[h] = 1;
          work.push_back(h);
        }
      }
    }
  };
  for (int s = 1; s <= top; ++s) {
    for (GateId g : by_stratum[s])
      if (c.type(g) == GateType::negation) {
        GateId x = *c.ins_begin(g);
        lo[g] = !hi[x];
        hi[g] = !lo[x];
      }
    closure(s, lo);
    closure(s, hi);
  }
  // Working form: constant, alias or gate.
  std::vector<int> konst(n, -1);
  std::vector<GateId> alias(n);
  std::vector<std::vector<GateId>> ins(n);
  for (GateId g = 0; g < n; ++g) {
    alias[g] = g;
    if (c.type(g) == GateType::input) continue;
    if (lo[g]) {
      konst[g] = 1;
    } else if (!hi[g]) {
      konst[g] = 0;
    } else {
      for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) {
        if (c.type(g) == GateType::conj && lo[*p]) continue;
        if (c.type(g) == GateType::disj && !hi[*p]) continue;
        ins[g].push_back(*p);
      }
    }
  }
  auto find = [&](GateId g) {
    while (alias[g] != g) g = alias[g];
    return g;
  };
  auto live = [&](GateId g) { return c.type(g) != GateType::input && konst[g] < 0 && alias[g] == g; };
  // Gates of one type that reach each other through that type only: an OR cycle is one OR of
  // what enters it, an AND cycle never becomes true.
  auto collapse = [&](GateType t) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (GateId g = 0; g < n; ++g)
      if (live(g) && c.type(g) == t)
        for (GateId x : ins[g]) {
          GateId y = find(x);
          if (y != g && live(y) && c.type(y) == t) edges.push_back({g, y});
        }
    if (edges.empty()) return false;
    auto scc = strongly_connected_components(Csr::from_edges(n, edges));
    std::vector<std::vector<GateId>> members(scc.count);
    for (GateId g = 0; g < n; ++g)
      if (live(g) && c.type(g) == t) members[scc.component[g]].push_back(g);
    bool any = false;
    for (auto& m : members) {
      if (m.size() < 2) continue;
      any = true;
      if (t == GateType::conj) {
        for (GateId g : m) konst[g] = 0;
        continue;
      }
      GateId r = m[0];
      std::vector<GateId> outside;
      for (GateId g : m)
        for (GateId x : ins[g]) {
          GateId y = find(x);
          if (!std::binary_search(m.begin(), m.end(), y)) outside.push_back(y);
        }
      for (GateId g : m)
        if (g != r) alias[g] = r;
      ins[r] = std::move(outside);
    }
    return any;
  };
  // Gates whose function changed while their consumer kept its value.
  std::vector<char> inexact(n, 0);
  auto is_monotone_gate = [&](GateId g) { return c.type(g) == GateType::conj || c.type(g) == GateType::disj; };
  // x AND NOT x is false, x OR NOT x is true.
  auto complements = [&]() {
    bool any = false;
    for (GateId g = 0; g < n; ++g) {
      if (!live(g) || !is_monotone_gate(g)) continue;
      std::vector<GateId> now;
      for (GateId x : ins[g]) now.push_back(find(x));
      std::sort(now.begin(), now.end());
      for (GateId x : now)
        if (live(x) && c.type(x) == GateType::negation && std::binary_search(now.begin(), now.end(), find(ins[x][0]))) {
          konst[g] = c.type(g) == GateType::disj;
          any = true;
          break;
        }
    }
    return any;
  };
  // A gate read only by g, directly or through other such gates, sees g as false inside g's
  // own least fixpoint; those gates change function but g keeps its value.
  auto private_feedback = [&]() {
    std::vector<std::uint32_t> uses(n, 0);
    GateId root = find(c.output());
    uses[root] = 2;
    for (GateId g = 0; g < n; ++g)
      if (live(g)) {
        std::vector<GateId> now;
        for (GateId x : ins[g]) now.push_back(find(x));
        std::sort(now.begin(), now.end());
        now.erase(std::unique(now.begin(), now.end()), now.end());
        for (GateId x : now) ++uses[x];
      }
    bool any = false;
    std::vector<GateId> cone, stack;
    for (GateId g = 0; g < n; ++g) {
      if (!live(g) || !is_monotone_gate(g)) continue;
      cone.clear();
      stack.assign(1, g);
      while (!stack.empty()) {
        GateId h = stack.back();
        stack.pop_back();
        for (GateId x : ins[h]) {
          GateId y = find(x);
          if (y == g || !live(y) || !is_monotone_gate(y) || uses[y] != 1) continue;
          cone.push_back(y);
          stack.push_back(y);
        }
      }
      bool hit = false;
      for (GateId h : cone) {
        auto self = std::find_if(ins[h].begin(), ins[h].end(), [&](GateId x) { return find(x) == g; });
        if (self == ins[h].end()) continue;
        hit = true;
        if (c.type(h) == GateType::conj) {
          konst[h] = 0;
        } else {
          ins[h].erase(std::remove_if(ins[h].begin(), ins[h].end(), [&](GateId x) { return find(x) == g; }),
                       ins[h].end());
        }
      }
      if (hit) {
        for (GateId h : cone) inexact[h] = 1;
        any = true;
      }
    }
    return any;
  };
  // Gates with the same type and inputs take the same value in every iteration.
  auto merge_duplicates = [&]() {
    std::map<std::pair<GateType, std::vector<GateId>>, GateId> seen;
    bool any = false;
    for (GateId g = 0; g < n; ++g) {
      if (!live(g)) continue;
      std::vector<GateId> now;
      for (GateId x : ins[g]) now.push_back(find(x));
      std::sort(now.begin(), now.end());
      now.erase(std::unique(now.begin(), now.end()), now.end());
      auto [it, fresh] = seen.emplace(std::make_pair(c.type(g), now), g);
      if (!fresh) {
        alias[g] = it->second;
        any = true;
      }
    }
    return any;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (GateId g = 0; g < n; ++g) {
      if (!live(g)) continue;
      std::vector<GateId> now;
      int decided = -1;
      for (GateId x : ins[g]) {
        GateId y = find(x);
        int k = konst[y];
        if (k < 0) {
          now.push_back(y);
        } else if (c.type(g) == GateType::negation) {
          decided = !k;
        } else if (k == (c.type(g) == GateType::disj)) {
          decided = k;
        }
      }
      if (decided >= 0) {
        konst[g] = decided;
        changed = true;
        continue;
      }
      std::sort(now.begin(), now.end());
      now.erase(std::unique(now.begin(), now.end()), now.end());
      if (c.type(g) != GateType::negation) {
        auto self = std::find(now.begin(), now.end(), g);
        if (self != now.end()) {
          if (c.type(g) == GateType::conj) {
            konst[g] = 0;
            changed = true;
            continue;
          }
          now.erase(self);
        }
        if (now.empty()) {
          konst[g] = c.type(g) == GateType::conj;
          changed = true;
          continue;
        }
        if (now.size() == 1) {
          alias[g] = now[0];
          changed = true;
          continue;
        }
      }
      if (now != ins[g]) {
        ins[g] = std::move(now);
        changed = true;
      }
    }
    if (!changed) changed = complements();
    if (!changed) changed = private_feedback();
    if (!changed) changed = collapse(GateType::disj) | collapse(GateType::conj);
    if (!changed) changed = merge_duplicates();
  }
  Simplified res;
  auto& o = res.circuit;
  std::vector<std::int64_t> id(n, -1);
  for (GateId g : c.input_gates()) id[g] = o.add_input(c.name(g));
  GateId root = find(c.output());
  std::vector<char> keep(n, 0);
  std::vector<GateId> stack{root};
  keep[root] = 1;
  while (!stack.empty()) {
    GateId g = stack.back();
    stack.pop_back();
    if (konst[g] >= 0) continue;
    for (GateId x : ins[g]) {
      GateId y = find(x);
      if (!keep[y]) {
        keep[y] = 1;
        stack.push_back(y);
      }
    }
  }
  for (GateId g = 0; g < n; ++g)
    if (keep[g] && id[g] < 0) id[g] = o.reserve();
  for (GateId g = 0; g < n; ++g) {
    if (!keep[g] || c.type(g) == GateType::input) continue;
    if (konst[g] >= 0) {
      o.define(static_cast<GateId>(id[g]), konst[g] ? GateType::conj : GateType::disj, {});
      continue;
    }
    std::vector<GateId> xs;
    for (GateId x : ins[g]) xs.push_back(static_cast<GateId>(id[find(x)]));
    o.define(static_cast<GateId>(id[g]), c.type(g), xs);
  }
  o.set_output(static_cast<GateId>(id[root]));
  res.image.assign(n, -1);
  for (GateId g = 0; g < n; ++g) {
    GateId r = find(g);
    if (id[r] >= 0 && !inexact[g]) res.image[g] = id[r];
  }
  return res;
}

}  // namespace icg
