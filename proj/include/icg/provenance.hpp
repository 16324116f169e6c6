#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cycluit.hpp"
#include "datalog.hpp"
#include "decomp.hpp"
#include "encoding.hpp"
#include "satwa.hpp"

namespace icg {

struct ProvenanceCycluit {
  Cycluit circuit;
  GateDecomposition decomposition;  // skeleton is the encoding tree
  std::vector<std::int64_t> node_input;  // input gate of each encoding node, -1 when the node has none
  size_t pairs = 0;                      // (node, state) gates materialized
};

// `node_input(w)` supplies the input gate annotating node w, or nullopt for nodes whose
// annotation is irrelevant (their two transitions coincide).
inline ProvenanceCycluit build_provenance_cycluit(
    const LiftedSatwa& a, const TreeEncoding& e,
    const std::function<std::optional<GateId>(Cycluit&, int)>& node_input = nullptr) {
  const Satwa& base = a.base();
  if (e.k > base.width())
    throw error("alphabet mismatch: encoding width " + std::to_string(e.k) + " exceeds automaton width " +
                std::to_string(base.width()));
  ProvenanceCycluit out;
  Cycluit& c = out.circuit;
  const size_t n = e.size();
  std::vector<int> rel_map(e.relations.size());
  for (size_t r = 0; r < e.relations.size(); ++r) rel_map[r] = base.relation_index(e.relations[r]);
  std::vector<EncodingLabel> labels(n);
  for (size_t w = 0; w < n; ++w) {
    labels[w] = e.labels[w];
    if (labels[w].has_fact()) {
      labels[w].rel = rel_map[labels[w].rel];
      if (labels[w].rel < 0) labels[w].args.clear();
    }
  }
  std::vector<std::vector<int>> neigh(n);
  for (size_t w = 0; w < n; ++w) {
    neigh[w].push_back(static_cast<int>(w));
    if (!e.is_leaf(static_cast<int>(w)))
      for (int ch : e.children[w]) neigh[w].push_back(ch);
    if (e.parent[w] >= 0) neigh[w].push_back(e.parent[w]);
  }

  // Inputs first, so that input_gates() follows node order or the caller's order.
  out.node_input.assign(n, -1);
  std::vector<std::int64_t> negated(n, -1);
  for (size_t w = 0; w < n; ++w) {
    if (node_input) {
      if (auto g = node_input(c, static_cast<int>(w))) out.node_input[w] = *g;
    } else {
      out.node_input[w] = c.add_input("n" + std::to_string(w));
    }
  }
  std::vector<int> owner;  // node of each gate, -1 for shared gates
  auto own = [&](GateId g, int w) {
    if (owner.size() <= g) owner.resize(g + 1, -1);
    owner[g] = w;
    return g;
  };
  // An input serving a single node belongs to it; inputs shared by several nodes float.
  std::vector<int> input_node;
  for (size_t w = 0; w < n; ++w) {
    if (out.node_input[w] < 0) continue;
    auto g = static_cast<GateId>(out.node_input[w]);
    if (input_node.size() <= g) input_node.resize(g + 1, -2);
    input_node[g] = input_node[g] == -2 ? static_cast<int>(w) : -1;
  }
  for (GateId g = 0; g < input_node.size(); ++g)
    if (input_node[g] != -2) own(g, input_node[g]);
  std::optional<GateId> zero, one;
  auto constant = [&](bool v) {
    auto& slot = v ? one : zero;
    if (!slot) slot = own(c.constant(v), -1);
    return *slot;
  };

  std::unordered_map<std::uint64_t, GateId> gate_of;
  std::vector<std::pair<int, StateId>> work;
  auto key = [](int w, StateId q) { return (static_cast<std::uint64_t>(w) << 32) | q; };
  auto state_gate = [&](int w, StateId q) {
    auto [it, fresh] = gate_of.emplace(key(w, q), 0);
    if (fresh) {
      it->second = own(c.reserve(), w);
      work.push_back({w, q});
    }
    return it->second;
  };
  auto dead = [&](int w, StateId q) {
    return a.transition(q, labels[w], true).is_constant(false) && a.transition(q, labels[w], false).is_constant(false);
  };
  auto make = [&](int w, GateType t, std::vector<GateId> ins) -> GateId {
    if (ins.size() == 1 && t != GateType::negation) return ins[0];
    if (ins.empty()) return constant(t == GateType::conj);
    return own(c.add_gate(t, ins), w);
  };

  // Gate for formula node i at node w; writes into `target` when given.
  std::function<GateId(const Formula&, std::uint32_t, int, std::optional<GateId>)> translate =
      [&](const Formula& f, std::uint32_t i, int w, std::optional<GateId> target) -> GateId {
    auto& nd = f.nodes[i];
    GateType t = GateType::disj;
    std::vector<GateId> ins;
    switch (nd.op) {
      case Formula::Op::ff:
        t = GateType::disj;
        break;
      case Formula::Op::tt:
        t = GateType::conj;
        break;
      case Formula::Op::pos:
        for (int v : neigh[w])
          if (!dead(v, nd.state)) ins.push_back(state_gate(v, nd.state));
        break;
      case Formula::Op::neg:
        t = GateType::negation;
        ins.push_back(state_gate(w, nd.state));
        break;
      case Formula::Op::conj:
      case Formula::Op::disj:
        t = nd.op == Formula::Op::conj ? GateType::conj : GateType::disj;
        for (auto k : nd.kids) ins.push_back(translate(f, k, w, std::nullopt));
        break;
    }
    if (target) {
      c.define(*target, t, ins);
      return *target;
    }
    if (t == GateType::negation) return own(c.add_gate(t, ins), w);
    return make(w, t, std::move(ins));
  };

  GateId root = state_gate(e.root, a.initial());
  while (!work.empty()) {
    auto [w, q] = work.back();
    work.pop_back();
    GateId g = gate_of.at(key(w, q));
    ++out.pairs;
    const Formula& f1 = a.transition(q, labels[w], true);
    const Formula& f0 = a.transition(q, labels[w], false);
    if (&f1 == &f0 || out.node_input[w] < 0) {
      translate(f1, f1.root, w, g);
      continue;
    }
    GateId x = static_cast<GateId>(out.node_input[w]);
    std::vector<GateId> branch;
    if (!f1.is_constant(false)) {
      GateId body = translate(f1, f1.root, w, std::nullopt);
      branch.push_back(f1.is_constant(true) ? x : make(w, GateType::conj, {x, body}));
    }
    if (!f0.is_constant(false)) {
      if (negated[w] < 0) negated[w] = own(c.add_gate(GateType::negation, {x}), w);
      GateId nx = static_cast<GateId>(negated[w]);
      GateId body = translate(f0, f0.root, w, std::nullopt);
      branch.push_back(f0.is_constant(true) ? nx : make(w, GateType::conj, {nx, body}));
    }
    c.define(g, GateType::disj, branch);
  }
  c.set_output(root);

  // Bags: own gates, plus the child-side endpoint of every wire crossing a tree edge.
  auto& td = out.decomposition;
  td.bags.assign(n, {});
  td.parent = e.parent;
  td.root = e.root;
  owner.resize(c.size(), -1);
  for (GateId g = 0; g < c.size(); ++g)
    if (owner[g] >= 0) td.bags[owner[g]].push_back(g);
  // Shared gates (inputs, constants) go wherever they are used.
  auto place = [&](GateId u, GateId v) {
    int a1 = owner[u], a2 = owner[v];
    if (a1 < 0 && a2 < 0) return;
    if (a1 < 0) {
      td.bags[a2].push_back(u);
      return;
    }
    if (a2 < 0) {
      td.bags[a1].push_back(v);
      return;
    }
    if (a1 == a2) return;
    if (e.parent[a1] == a2)
      td.bags[a2].push_back(u);
    else
      td.bags[a1].push_back(v);
  };
  for (GateId g = 0; g < c.size(); ++g)
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) place(*p, g);
  // Constants may be used anywhere, so they join every bag.
  for (auto cst : {zero, one})
    if (cst)
      for (auto& b : td.bags) b.push_back(*cst);
  td.normalize_bags();
  std::vector<char> placed(c.size(), 0);
  for (auto& b : td.bags)
    for (auto g : b) placed[g] = 1;
  for (GateId g = 0; g < c.size(); ++g)
    if (!placed[g]) td.bags[e.root].push_back(g);
  td.normalize_bags();
  return out;
}

// Acceptance via the provenance cycluit evaluated with every annotation set to 1.
inline bool satwa_accepts(const Satwa& a, const TreeEncoding& e) {
  auto lifted = lift_satwa(a);
  auto prov = build_provenance_cycluit(lifted, e);
  GateValuation v(prov.circuit.size(), 0);
  for (auto g : prov.circuit.input_gates()) v[g] = 1;
  return CycluitEvaluator(prov.circuit).stratified(v)[prov.circuit.output()] != 0;
}

struct ProgramProvenance {
  ProvenanceCycluit prov;
  std::vector<GateId> fact_input;  // input gate of each instance fact, in instance order
  size_t states = 0;
  int width = 0;
  size_t encoding_nodes = 0;
};

// Provenance of the program over the facts of the instance: inputs are named f<i> after the fact index.
inline ProgramProvenance program_provenance(const DatalogProgram& p, const Instance& inst, const TreeDecomposition& t,
                                            std::optional<int> k = std::nullopt) {
  int width = k ? *k : std::max(0, t.width());
  auto enc = encode_instance(inst, t, width);
  // Variables outside positive literals get an active-domain guard.
  CompiledSatwa a(normalize_safety(p), width);
  ProgramProvenance out;
  out.width = width;
  out.encoding_nodes = enc.size();
  out.fact_input.resize(inst.size());
  auto lifted = lift_satwa(a);
  // Fact inputs are created in instance order before any other gate.
  bool first = true;
  out.prov = build_provenance_cycluit(lifted, enc, [&](Cycluit& c, int w) -> std::optional<GateId> {
    if (first) {
      for (size_t i = 0; i < inst.size(); ++i) out.fact_input[i] = c.add_input("f" + std::to_string(i));
      first = false;
    }
    int f = enc.source_fact[w];
    if (f < 0) return std::nullopt;
    return out.fact_input[f];
  });
  out.states = a.state_count();
  return out;
}

inline bool evaluate_query(const DatalogProgram& p, const Instance& inst, const TreeDecomposition& t,
                           std::optional<int> k = std::nullopt) {
  auto pp = program_provenance(p, inst, t, k);
  auto& c = pp.prov.circuit;
  GateValuation v(c.size(), 0);
  for (auto g : c.input_gates()) v[g] = 1;
  return CycluitEvaluator(c).stratified(v)[c.output()] != 0;
}

// Circuit valuation from a fact valuation given in instance order.
inline GateValuation fact_valuation(const ProgramProvenance& pp, const std::vector<bool>& facts) {
  GateValuation v(pp.prov.circuit.size(), 0);
  for (size_t i = 0; i < facts.size(); ++i) v[pp.fact_input.at(i)] = facts[i];
  return v;
}

inline std::string provenance_text(const ProgramProvenance& pp, const Instance& inst) {
  std::string head;
  for (size_t i = 0; i < inst.size(); ++i) head += "% f" + std::to_string(i) + " : " + to_string(inst.facts()[i]) + "\n";
  return head + to_cycluit_text(pp.prov.circuit);
}

}  // namespace icg
