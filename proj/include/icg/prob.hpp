#pragma once

#include <gmpxx.h>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "decycle.hpp"
#include "provenance.hpp"

namespace icg {

using Rational = mpq_class;

inline std::string to_string(const Rational& q) { return q.get_str(); }

struct TidInstance {
  Instance instance;
  std::vector<Rational> pi;  // probability of each fact, in instance order
};

inline Rational parse_probability(const std::string& s) {
  auto bad = [&]() -> Rational { throw error("bad probability '" + s + "'"); };
  if (s.empty()) return bad();
  Rational q;
  auto dot = s.find('.');
  if (dot != std::string::npos) {
    std::string whole = s.substr(0, dot), frac = s.substr(dot + 1);
    if (whole.empty() && frac.empty()) return bad();
    for (char ch : whole + frac)
      if (ch < '0' || ch > '9') return bad();
    mpz_class num(whole.empty() ? "0" : whole), den = 1;
    for (char ch : frac) {
      num = num * 10 + (ch - '0');
      den *= 10;
    }
    q = Rational(num, den);
  } else {
    auto slash = s.find('/');
    for (size_t i = 0; i < s.size(); ++i)
      if (i != slash && (s[i] < '0' || s[i] > '9')) return bad();
    if (slash == 0 || slash + 1 == s.size()) return bad();
    try {
      q = Rational(s);
    } catch (const std::exception&) {
      return bad();
    }
    if (q.get_den() == 0) return bad();
  }
  q.canonicalize();
  if (q < 0 || q > 1) throw error("probability " + q.get_str() + " outside [0,1]");
  return q;
}

// Lines `R(a,b) : 1/2.` or `R(a,b) : 0.5.`; a fact without a probability is certain.
inline TidInstance parse_tid(std::string_view text) {
  detail::Lexer lx(text);
  std::vector<std::pair<Fact, Rational>> rows;
  Signature sig;
  while (!lx.eof()) {
    int line = lx.line();
    Fact f = detail::parse_fact(lx);
    Rational p = 1;
    if (lx.accept(":")) {
      std::string raw = lx.until(" \t\r%");
      // A trailing '.' ends the line; a decimal like "0.5." keeps its own dot.
      if (!raw.empty() && raw.back() == '.')
        raw.pop_back();
      else
        lx.expect(".");
      try {
        p = parse_probability(raw);
      } catch (const error& e) {
        throw parse_error(line, e.what());
      }
    } else {
      lx.expect(".");
    }
    try {
      sig.declare(f.rel, static_cast<int>(f.args.size()));
    } catch (const error& e) {
      throw parse_error(line, e.what());
    }
    rows.push_back({std::move(f), p});
  }
  std::vector<Fact> facts;
  for (auto& r : rows) facts.push_back(r.first);
  TidInstance t{Instance(std::move(facts)), {}};
  t.pi.assign(t.instance.size(), Rational(-1));
  for (auto& [f, p] : rows) {
    auto& slot = t.pi[*t.instance.index_of(f)];
    if (slot >= 0 && slot != p) throw error("conflicting probabilities for " + to_string(f));
    slot = p;
  }
  return t;
}

inline std::string to_text(const TidInstance& t) {
  std::string out;
  for (size_t i = 0; i < t.instance.size(); ++i)
    out += to_string(t.instance.facts()[i]) + " : " + t.pi[i].get_str() + ".\n";
  return out;
}

inline void check_tid(const TidInstance& t) {
  if (t.pi.size() != t.instance.size()) throw error("probabilities do not cover the facts");
  for (auto& p : t.pi)
    if (p < 0 || p > 1) throw error("probability " + p.get_str() + " outside [0,1]");
}

constexpr size_t brute_force_fact_limit = 20;

// Sum of the probabilities of the possible worlds satisfying the program.
inline Rational brute_force_pqe(const DatalogProgram& p, const TidInstance& tid) {
  check_tid(tid);
  size_t n = tid.instance.size();
  if (n > brute_force_fact_limit)
    throw error("too many facts for brute force: " + std::to_string(n) + " > " +
                std::to_string(brute_force_fact_limit));
  Rational total = 0;
  std::vector<bool> keep(n);
  for (std::uint64_t m = 0; m < (1ull << n); ++m) {
    Rational w = 1;
    for (size_t i = 0; i < n && w != 0; ++i) {
      keep[i] = (m >> i) & 1;
      w *= keep[i] ? tid.pi[i] : 1 - tid.pi[i];
    }
    if (w != 0 && naive_evaluate(p, apply_valuation(tid.instance, keep))) total += w;
  }
  total.canonicalize();
  return total;
}

// Exhaustive weighted sum over input valuations; `pi` follows input_gates() order.
inline Rational enumerate_circuit_probability(const Cycluit& c, const std::vector<Rational>& pi) {
  auto ins = c.input_gates();
  if (pi.size() != ins.size()) throw error("probabilities do not cover the inputs");
  if (ins.size() > 24) throw error("too many inputs to enumerate");
  CycluitEvaluator ev(c);
  Rational total = 0;
  std::vector<bool> bits(ins.size());
  for (std::uint64_t m = 0; m < (1ull << ins.size()); ++m) {
    Rational w = 1;
    for (size_t i = 0; i < ins.size(); ++i) {
      bits[i] = (m >> i) & 1;
      w *= bits[i] ? pi[i] : 1 - pi[i];
    }
    if (w != 0 && ev.stratified(valuation_from_inputs(c, bits))[c.output()]) total += w;
  }
  total.canonicalize();
  return total;
}

struct probability_infeasible : error {
  using error::error;
};

struct ProbabilityOptions {
  size_t max_entries = 1u << 21;  // nonzero table entries per bag
};

struct ProbabilityStats {
  int width = 0;          // after adding witness bags
  size_t max_entries = 0; // largest bag table
};

namespace detail {

// Extends bags along tree paths until every gate shares a bag with all its inputs.
inline GateDecomposition complete_witnesses(const Cycluit& c, GateDecomposition t) {
  auto depth = bag_depths(t);
  std::vector<std::vector<int>> where(c.size());
  for (size_t b = 0; b < t.size(); ++b)
    for (auto g : t.bags[b]) where[g].push_back(static_cast<int>(b));
  auto holds = [&](int b, GateId g) { return std::binary_search(t.bags[b].begin(), t.bags[b].end(), g); };
  for (GateId g = 0; g < c.size(); ++g) {
    if (c.fan_in(g) == 0 || witness_bag(c, t, g)) continue;
    // Pick the occurrence of g already holding the most inputs.
    int home = where[g][0], best = -1;
    for (int b : where[g]) {
      int k = 0;
      for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) k += holds(b, *p);
      if (k > best) best = k, home = b;
    }
    for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p) {
      if (holds(home, *p)) continue;
      int meet = -1;
      for (int b : where[g])
        if (holds(b, *p)) {
          meet = b;
          break;
        }
      for_path(t.parent, depth, meet, home, [&](int b) {
        auto& bag = t.bags[b];
        auto it = std::lower_bound(bag.begin(), bag.end(), *p);
        if (it == bag.end() || *it != *p) {
          bag.insert(it, *p);
          where[*p].push_back(b);
        }
      });
    }
  }
  return t;
}

}  // namespace detail

// Probability that the output of an acyclic circuit is true when each input is independently
// true with its probability (`pi` in input_gates() order). Tables are sparse maps from bag
// valuations to weights, so only consistent valuations are stored.
inline Rational circuit_probability(const Cycluit& c, const GateDecomposition& td, const std::vector<Rational>& pi,
                                    const ProbabilityOptions& opt = {}, ProbabilityStats* stats = nullptr) {
  c.check_complete();
  if (!is_acyclic(c)) throw error("circuit is cyclic");
  detail::require_decomposition(c, td);
  auto inputs = c.input_gates();
  if (pi.size() != inputs.size()) throw error("probabilities do not cover the inputs");
  for (auto& p : pi)
    if (p < 0 || p > 1) throw error("probability " + p.get_str() + " outside [0,1]");
  if (td.size() == 0) throw error("empty decomposition");
  auto t = detail::complete_witnesses(c, td);
  if (t.width() + 1 > 64) throw probability_infeasible("bag of " + std::to_string(t.width() + 1) + " gates");
  if (stats) stats->width = t.width();

  // Topological rank: inputs of a gate come first.
  std::vector<std::uint32_t> rank(c.size(), 0);
  {
    auto cons = c.consumers();
    std::vector<std::uint32_t> pending(c.size());
    std::vector<GateId> order;
    for (GateId g = 0; g < c.size(); ++g)
      if ((pending[g] = static_cast<std::uint32_t>(c.fan_in(g))) == 0) order.push_back(g);
    for (size_t i = 0; i < order.size(); ++i)
      for (auto* u = cons.begin(order[i]); u != cons.end(order[i]); ++u)
        if (--pending[*u] == 0) order.push_back(*u);
    for (size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<std::uint32_t>(i);
  }
  // Each gate's semantics and each input's weight are enforced at exactly one bag, as deep as possible
  // so that tables stay small on the way up.
  std::vector<int> factor_at(c.size(), -1);
  auto pre = t.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it)
    for (auto g : t.bags[*it]) {
      int b = *it;
      if (factor_at[g] >= 0) continue;
      bool all = true;
      for (auto* p = c.ins_begin(g); p != c.ins_end(g) && all; ++p)
        all = std::binary_search(t.bags[b].begin(), t.bags[b].end(), *p);
      if (all) factor_at[g] = b;
    }
  for (GateId g = 0; g < c.size(); ++g)
    if (factor_at[g] < 0) throw error("gate " + c.name(g) + " has no bag holding its inputs");
  std::vector<Rational> weight1(c.size()), weight0(c.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    weight1[inputs[i]] = pi[i];
    weight0[inputs[i]] = 1 - pi[i];
  }

  struct Message {
    std::vector<GateId> vars;  // separator gates
    std::unordered_map<std::uint64_t, Rational> table;
  };
  std::vector<Message> msg(t.size());
  auto ch = t.children();
  auto order = t.preorder();
  Rational result = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int b = *it;
    std::vector<GateId> vars = t.bags[b];
    std::sort(vars.begin(), vars.end(), [&](GateId x, GateId y) { return rank[x] < rank[y]; });
    std::unordered_map<GateId, int> local;
    for (size_t i = 0; i < vars.size(); ++i) local[vars[i]] = static_cast<int>(i);

    // Entries share the same set of assigned positions.
    std::vector<std::pair<std::uint64_t, Rational>> rows{{0, Rational(1)}};
    std::uint64_t assigned = 0;
    auto cap = [&]() {
      if (rows.size() > opt.max_entries)
        throw probability_infeasible("more than " + std::to_string(opt.max_entries) + " table entries");
    };
    for (int child : ch[b]) {
      auto& m = msg[child];
      std::uint64_t smask = 0;
      std::vector<int> pos;
      for (auto g : m.vars) {
        pos.push_back(local.at(g));
        smask |= 1ull << pos.back();
      }
      std::uint64_t overlap = smask & assigned;
      // Child entries re-encoded in this bag's positions, grouped by their overlap bits.
      std::unordered_map<std::uint64_t, std::vector<std::pair<std::uint64_t, const Rational*>>> group;
      for (auto& [key, w] : m.table) {
        std::uint64_t bits = 0;
        for (size_t i = 0; i < pos.size(); ++i)
          if ((key >> i) & 1) bits |= 1ull << pos[i];
        group[bits & overlap].push_back({bits, &w});
      }
      std::vector<std::pair<std::uint64_t, Rational>> next;
      for (auto& [bits, w] : rows) {
        auto g = group.find(bits & overlap);
        if (g == group.end()) continue;
        for (auto& [cb, cw] : g->second) next.push_back({bits | cb, w * *cw});
        if (next.size() > opt.max_entries) {
          rows.swap(next);
          cap();
        }
      }
      rows.swap(next);
      assigned |= smask;
      msg[child] = {};
    }

    auto check = [&](GateId g, std::uint64_t bits) {
      if (c.type(g) == GateType::input) return true;
      bool v = (bits >> local.at(g)) & 1;
      bool r;
      if (c.type(g) == GateType::negation) {
        r = !((bits >> local.at(c.inputs_of(g)[0])) & 1);
      } else {
        bool conj = c.type(g) == GateType::conj;
        r = conj;
        for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p)
          if ((((bits >> local.at(*p)) & 1) != 0) != conj) {
            r = !conj;
            break;
          }
      }
      return v == r;
    };
    auto ready = [&](GateId g) {
      if (factor_at[g] != b) return false;
      for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p)
        if (!((assigned >> local.at(*p)) & 1)) return false;
      return true;
    };
    std::vector<char> done(vars.size(), 0);
    // Applies every factor of this bag whose gates are now all assigned.
    auto apply = [&]() {
      for (size_t i = 0; i < vars.size(); ++i) {
        GateId g = vars[i];
        if (done[i] || !((assigned >> i) & 1) || !ready(g)) continue;
        done[i] = 1;
        bool in = c.type(g) == GateType::input;
        std::vector<std::pair<std::uint64_t, Rational>> kept;
        kept.reserve(rows.size());
        for (auto& row : rows) {
          bool v = (row.first >> i) & 1;
          if (g == c.output() && !v) continue;
          if (in) {
            row.second *= v ? weight1[g] : weight0[g];
            if (row.second == 0) continue;
          } else if (!check(g, row.first)) {
            continue;
          }
          kept.push_back(std::move(row));
        }
        rows.swap(kept);
      }
    };
    apply();
    for (size_t i = 0; i < vars.size(); ++i) {
      if ((assigned >> i) & 1) continue;
      GateId g = vars[i];
      bool determined = c.type(g) != GateType::input && ready(g);
      assigned |= 1ull << i;
      if (determined) {
        // The gate's value follows from inputs already assigned here.
        for (auto& row : rows) {
          bool v;
          if (c.type(g) == GateType::negation) {
            v = !((row.first >> local.at(c.inputs_of(g)[0])) & 1);
          } else {
            bool conj = c.type(g) == GateType::conj;
            v = conj;
            for (auto* p = c.ins_begin(g); p != c.ins_end(g); ++p)
              if ((((row.first >> local.at(*p)) & 1) != 0) != conj) {
                v = !conj;
                break;
              }
          }
          if (v) row.first |= 1ull << i;
        }
      } else {
        size_t n = rows.size();
        rows.reserve(2 * n);
        for (size_t r = 0; r < n; ++r) rows.push_back({rows[r].first | (1ull << i), rows[r].second});
        cap();
      }
      apply();
    }
    if (stats) stats->max_entries = std::max(stats->max_entries, rows.size());

    if (t.parent[b] < 0) {
      for (auto& row : rows) result += row.second;
      continue;
    }
    auto& up = t.bags[t.parent[b]];
    Message out;
    std::vector<int> pos;
    for (size_t i = 0; i < vars.size(); ++i)
      if (std::binary_search(up.begin(), up.end(), vars[i])) {
        out.vars.push_back(vars[i]);
        pos.push_back(static_cast<int>(i));
      }
    for (auto& [bits, w] : rows) {
      std::uint64_t key = 0;
      for (size_t j = 0; j < pos.size(); ++j)
        if ((bits >> pos[j]) & 1) key |= 1ull << j;
      out.table[key] += w;
    }
    msg[b] = std::move(out);
  }
  result.canonicalize();
  return result;
}

struct BinaryCircuit {
  Cycluit circuit;  // same gates and inputs, wide gates split into chains of fresh gates
  GateDecomposition decomposition;
};

// Fan-in at most two, with a min-fill decomposition of the graph where each gate and its inputs form a clique.
inline BinaryCircuit binary_moral_decomposition(const Cycluit& c, std::optional<int> max_width = std::nullopt) {
  c.check_complete();
  BinaryCircuit out;
  auto& o = out.circuit;
  for (GateId g = 0; g < c.size(); ++g) {
    if (c.type(g) == GateType::input)
      o.add_input(c.name(g));
    else
      o.reserve();
    o.set_name(g, c.name(g));
  }
  for (GateId g = 0; g < c.size(); ++g) {
    if (c.type(g) == GateType::input) continue;
    std::vector<GateId> ins = c.inputs_of(g);
    while (ins.size() > 2) {
      GateId h = o.add_gate(c.type(g), {ins[0], ins[1]});
      ins.erase(ins.begin(), ins.begin() + 2);
      ins.push_back(h);
    }
    o.define(g, c.type(g), ins);
  }
  o.set_output(c.output());
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (GateId g = 0; g < o.size(); ++g) {
    auto ins = o.inputs_of(g);
    for (auto x : ins) edges.push_back({x, g});
    if (ins.size() == 2) edges.push_back({ins[0], ins[1]});
  }
  out.decomposition = compress_decomposition(min_fill_decomposition(o.size(), edges, max_width));
  return out;
}

struct PqeOptions {
  int max_cycluit_width = 8;  // widest simplified provenance cycluit sent to cycle removal
  size_t max_circuit_gates = 20000;  // largest decycled circuit sent to message passing
  int max_circuit_width = 30;
  DecycleOptions decycle{2'000'000, 14};
  ProbabilityOptions probability{1 << 18};
  bool allow_fallback = true;
};

struct PqeResult {
  Rational probability;
  bool fallback = false;       // computed by world enumeration
  std::string fallback_reason;
  size_t provenance_gates = 0;
  int cycluit_width = -1;
  size_t circuit_gates = 0;
  int circuit_width = -1;
  size_t max_entries = 0;
};

// Provenance cycluit, cycle removal, then message passing on the acyclic circuit.
inline PqeResult pqe_pipeline(const DatalogProgram& p, const TidInstance& tid, const TreeDecomposition& t,
                              const PqeOptions& opt = {}) {
  check_tid(tid);
  PqeResult out;
  auto fallback = [&](const std::string& why) {
    if (!opt.allow_fallback || tid.instance.size() > brute_force_fact_limit)
      throw probability_infeasible(why + " (" + std::to_string(tid.instance.size()) + " facts)");
    out.fallback = true;
    out.fallback_reason = why;
    out.probability = brute_force_pqe(p, tid);
    return out;
  };
  auto pp = program_provenance(p, tid.instance, t);
  out.provenance_gates = pp.prov.circuit.size();
  auto simple = simplify_cycluit(pp.prov.circuit);
  const Cycluit& c = simple.circuit;
  // Inputs keep instance order through simplification.
  std::vector<Rational> pi;
  {
    std::unordered_map<GateId, size_t> fact_of;
    for (size_t i = 0; i < pp.fact_input.size(); ++i) fact_of[pp.fact_input[i]] = i;
    auto orig = pp.prov.circuit.input_gates();
    for (auto g : orig) pi.push_back(tid.pi[fact_of.at(g)]);
    if (c.input_gates().size() != orig.size()) throw error("simplification changed the inputs");
  }
  GateDecomposition ctd;
  try {
    ctd = cycluit_decomposition(c, opt.max_cycluit_width);
  } catch (const width_exceeded& e) {
    out.cycluit_width = e.width;
    return fallback("provenance cycluit width above " + std::to_string(opt.max_cycluit_width));
  }
  out.cycluit_width = ctd.width();
  DecycleResult d;
  try {
    d = decycle_stratified(c, ctd, opt.decycle);
  } catch (const decycle_limit& e) {
    return fallback(std::string("cycle removal: ") + e.what());
  }
  out.circuit_gates = d.circuit.size();
  if (d.circuit.size() > opt.max_circuit_gates)
    return fallback("acyclic circuit has " + std::to_string(d.circuit.size()) + " gates, limit " +
                    std::to_string(opt.max_circuit_gates));
  // Message passing runs on the narrower of the emitted decomposition and a fresh one of the split circuit.
  BinaryCircuit bin;
  bool fresh = true;
  try {
    bin = binary_moral_decomposition(d.circuit, opt.max_circuit_width);
    fresh = bin.decomposition.width() < d.decomposition.width();
  } catch (const width_exceeded&) {
    fresh = false;
  }
  if (!fresh && d.decomposition.width() > opt.max_circuit_width)
    return fallback("acyclic circuit width above " + std::to_string(opt.max_circuit_width));
  ProbabilityStats st;
  try {
    out.probability = fresh ? circuit_probability(bin.circuit, bin.decomposition, pi, opt.probability, &st)
                            : circuit_probability(d.circuit, d.decomposition, pi, opt.probability, &st);
  } catch (const probability_infeasible& e) {
    out.circuit_width = st.width;
    return fallback(std::string("message passing: ") + e.what());
  }
  out.circuit_width = st.width;
  out.max_entries = st.max_entries;
  return out;
}

}  // namespace icg
