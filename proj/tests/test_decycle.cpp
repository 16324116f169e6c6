#include <gtest/gtest.h>

#include <random>

#include "icg/decycle.hpp"
#include "support.hpp"

using namespace icg;
using namespace testing_support;

namespace {

// Calls f(bits, valuation of c) for every assignment of the inputs of c.
template <class F>
void for_each_valuation(const Cycluit& c, F f) {
  size_t k = c.input_gates().size();
  for (std::uint64_t m = 0; m < (1ull << k); ++m) {
    std::vector<bool> bits(k);
    for (size_t i = 0; i < k; ++i) bits[i] = (m >> i) & 1;
    f(bits, valuation_from_inputs(c, bits));
  }
}

// Output of `out` agrees with the output of `c`, and each mapped gate with its original, on every valuation.
::testing::AssertionResult equivalent(const Cycluit& c, const Cycluit& out,
                                      const std::vector<std::int64_t>* image = nullptr) {
  CycluitEvaluator ec(c), eo(out);
  ::testing::AssertionResult r = ::testing::AssertionSuccess();
  bool ok = true;
  for_each_valuation(c, [&](const std::vector<bool>& bits, const GateValuation& v) {
    if (!ok) return;
    auto a = ec.stratified(v);
    auto b = eo.stratified(valuation_from_inputs(out, bits));
    if (a[c.output()] != b[out.output()]) {
      ok = false;
      r = ::testing::AssertionFailure() << "outputs differ";
      return;
    }
    if (image)
      for (GateId g = 0; g < c.size(); ++g)
        if ((*image)[g] >= 0 && a[g] != b[(*image)[g]]) {
          ok = false;
          r = ::testing::AssertionFailure() << "gate " << g << " differs";
          return;
        }
  });
  return r;
}

std::vector<std::int64_t> widen(const std::vector<GateId>& v) { return {v.begin(), v.end()}; }

Cycluit two_gate_loop() {
  Cycluit c;
  GateId x = c.add_input("x");
  GateId g1 = c.reserve(), g2 = c.reserve();
  c.define(g1, GateType::disj, {x, g2});
  c.define(g2, GateType::disj, {g1});
  c.set_output(g2);
  return c;
}

// Blocks of two mutually dependent gates, each block reading the previous one: width stays fixed as n grows.
Cycluit cycle_chain(int n, bool negate) {
  Cycluit c;
  std::vector<GateId> x, y;
  for (int i = 0; i < n; ++i) {
    x.push_back(c.add_input("x" + std::to_string(i)));
    y.push_back(c.add_input("y" + std::to_string(i)));
  }
  GateId prev = c.constant(false);
  for (int i = 0; i < n; ++i) {
    GateId a = c.reserve(), b = c.reserve();
    GateId from = prev;
    if (negate && i % 3 == 2) from = c.add_gate(GateType::negation, {prev});
    c.define(a, GateType::disj, {x[i], b, from});
    c.define(b, GateType::conj, {a, y[i]});
    prev = b;
  }
  c.set_output(prev);
  return c;
}

size_t count_type(const Cycluit& c, GateType t) {
  size_t n = 0;
  for (GateId g = 0; g < c.size(); ++g) n += c.type(g) == t;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Unfolding

TEST(Unfold, TwoGateLoop) {
  auto c = two_gate_loop();
  auto u = unfold_decycle(c);
  EXPECT_TRUE(is_acyclic(u.circuit));
  EXPECT_TRUE(equivalent(c, u.circuit, nullptr));
  EXPECT_EQ(u.layers, 3u);
}

TEST(Unfold, AcyclicInputKeepsItsShape) {
  Cycluit c;
  GateId x = c.add_input("x"), y = c.add_input("y");
  GateId a = c.add_gate(GateType::conj, {x, y});
  GateId n = c.add_gate(GateType::negation, {a});
  c.set_output(c.add_gate(GateType::disj, {n, x}));
  auto u = unfold_decycle(c);
  EXPECT_EQ(u.circuit.size(), c.size());
  EXPECT_EQ(u.layers, 3u);
  EXPECT_TRUE(equivalent(c, u.circuit));
}

TEST(Unfold, NonStratifiableRejected) {
  Cycluit c;
  GateId g = c.reserve();
  GateId n = c.add_gate(GateType::negation, {g});
  c.define(g, GateType::disj, {n});
  c.set_output(g);
  EXPECT_THROW(unfold_decycle(c), cycluit_stratification_error);
}

TEST(Unfold, RandomStratifiedAllValuations) {
  std::mt19937 rng(5);
  for (int t = 0; t < 60; ++t) {
    int inputs = 1 + static_cast<int>(rng() % 14);
    auto rc = random_cycluit(rng, inputs, 3 + static_cast<int>(rng() % 12), 3, 0.2);
    auto u = unfold_decycle(rc.circuit);
    ASSERT_TRUE(is_acyclic(u.circuit));
    auto image = widen(u.image);
    ASSERT_TRUE(equivalent(rc.circuit, u.circuit, &image)) << t << "\n" << to_cycluit_text(rc.circuit);
  }
}

// ---------------------------------------------------------------------------
// Arity two, regrouping, normal form

TEST(ArityTwo, AlreadyBinaryKeepsFunction) {
  auto c = two_gate_loop();
  auto a = to_arity_two(c, cycluit_decomposition(c));
  EXPECT_EQ(a.circuit.size(), c.size());
  EXPECT_TRUE(equivalent(c, a.circuit));
}

TEST(ArityTwo, AndSelfLoopBecomesZero) {
  Cycluit c;
  GateId g = c.reserve();
  c.define(g, GateType::conj, {g});
  c.set_output(g);
  auto a = to_arity_two(c, cycluit_decomposition(c));
  EXPECT_EQ(a.circuit.type(g), GateType::disj);
  EXPECT_EQ(a.circuit.fan_in(g), 0u);
}

TEST(ArityTwo, OrSelfLoopDropped) {
  Cycluit c;
  GateId x = c.add_input("x");
  GateId g = c.reserve();
  c.define(g, GateType::disj, {g, x});
  c.set_output(g);
  auto a = to_arity_two(c, cycluit_decomposition(c));
  EXPECT_EQ(a.circuit.inputs_of(g), std::vector<GateId>{x});
  EXPECT_TRUE(equivalent(c, a.circuit));
}

TEST(ArityTwo, WideOrBecomesBinaryTree) {
  Cycluit c;
  std::vector<GateId> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(c.add_input("x" + std::to_string(i)));
  c.set_output(c.add_gate(GateType::disj, xs));
  auto a = to_arity_two(c, cycluit_decomposition(c));
  for (GateId g = 0; g < a.circuit.size(); ++g) EXPECT_LE(a.circuit.fan_in(g), 2u);
  EXPECT_TRUE(equivalent(c, a.circuit));
  EXPECT_TRUE(validate_decomposition(a.decomposition, wire_hyperedges(a.circuit)));
}

TEST(ArityTwo, Errors) {
  Cycluit c;
  GateId x = c.add_input("x");
  c.set_output(c.add_gate(GateType::negation, {x}));
  EXPECT_THROW(to_arity_two(c, cycluit_decomposition(c)), error);
  auto d = two_gate_loop();
  GateDecomposition bad;
  bad.bags = {{0, 1}};
  bad.parent = {-1};
  EXPECT_THROW(to_arity_two(d, bad), error);
}

TEST(ArityTwo, RandomMonotone) {
  std::mt19937 rng(8);
  for (int t = 0; t < 150; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 8), 2 + static_cast<int>(rng() % 12), 1, 0.0, 6);
    auto& c = rc.circuit;
    auto td = cycluit_decomposition(c);
    auto a = to_arity_two(c, td);
    for (GateId g = 0; g < a.circuit.size(); ++g) {
      ASSERT_LE(a.circuit.fan_in(g), 2u);
      auto ins = a.circuit.inputs_of(g);
      ASSERT_EQ(std::count(ins.begin(), ins.end(), g), 0);
    }
    ASSERT_TRUE(validate_decomposition(a.decomposition, wire_hyperedges(a.circuit)));
    int k = td.width() + 1;
    ASSERT_LE(a.decomposition.width() + 1, k * (k + 4));
    auto image = std::vector<std::int64_t>(c.size());
    for (GateId g = 0; g < c.size(); ++g) image[g] = g;
    ASSERT_TRUE(equivalent(c, a.circuit, &image)) << t;
  }
}

TEST(Regroup, EveryGateHasAWitness) {
  std::mt19937 rng(9);
  for (int t = 0; t < 100; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 12), 2, 0.2);
    auto td = cycluit_decomposition(rc.circuit);
    auto a = detail::binarize(rc.circuit, td);
    auto r = regroup_decomposition(a.circuit, a.decomposition);
    ASSERT_TRUE(validate_decomposition(r, wire_hyperedges(a.circuit)));
    for (GateId g = 0; g < a.circuit.size(); ++g) ASSERT_TRUE(witness_bag(a.circuit, r, g)) << g;
    for (size_t b = 0; b < r.size(); ++b) ASSERT_LE(r.bags[b].size(), 3 * a.decomposition.bags[b].size());
  }
}

TEST(Regroup, WideGateRejected) {
  Cycluit c;
  std::vector<GateId> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(c.add_input("x" + std::to_string(i)));
  c.set_output(c.add_gate(GateType::disj, xs));
  EXPECT_THROW(regroup_decomposition(c, cycluit_decomposition(c)), error);
}

TEST(NormalForm, SingleGate) {
  Cycluit c;
  c.set_output(c.add_input("x"));
  GateDecomposition td;
  td.bags = {{0}};
  td.parent = {-1};
  auto nf = normalize_decomposition(c, td);
  EXPECT_TRUE(check_normal_form(c, nf)) << check_normal_form(c, nf).reason;
  auto adj = nf.adjacency();
  EXPECT_EQ(adj[nf.phi[0]].size(), 1u);
  for (size_t b = 0; b < nf.tree.size(); ++b)
    if (static_cast<int>(b) != nf.phi[0]) {
      EXPECT_TRUE(nf.tree.bags[b].empty());
    }
}

TEST(NormalForm, NotRegroupedRejected) {
  Cycluit c;
  GateId x = c.add_input("x"), y = c.add_input("y");
  c.set_output(c.add_gate(GateType::conj, {x, y}));
  GateDecomposition td;
  td.bags = {{0, 2}, {1, 2}};
  td.parent = {-1, 0};
  EXPECT_THROW(normalize_decomposition(c, td), error);
}

TEST(NormalForm, RandomOutputsAreNormalAndScrubbed) {
  std::mt19937 rng(10);
  for (int t = 0; t < 150; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 14), 2, 0.2);
    auto a = detail::binarize(rc.circuit, cycluit_decomposition(rc.circuit));
    auto& c = a.circuit;
    auto r = regroup_decomposition(c, a.decomposition);
    auto nf = normalize_decomposition(c, r);
    auto check = check_normal_form(c, nf);
    ASSERT_TRUE(check) << check.reason;
    ASSERT_LE(nf.tree.width(), r.width());
    // Occurrences of each gate are exactly the bags on paths between its leaf occurrences.
    auto adj = nf.adjacency();
    for (GateId g = 0; g < c.size(); ++g) {
      std::set<int> marks{nf.phi[g]};
      for (GateId h = 0; h < c.size(); ++h) {
        auto ins = c.inputs_of(h);
        if (std::find(ins.begin(), ins.end(), g) != ins.end()) marks.insert(nf.phi[h]);
      }
      // Steiner tree of the marks: repeatedly strip unmarked leaves.
      std::vector<std::set<int>> live(adj.size());
      for (size_t b = 0; b < adj.size(); ++b) live[b] = {adj[b].begin(), adj[b].end()};
      std::set<int> alive;
      for (size_t b = 0; b < adj.size(); ++b) alive.insert(static_cast<int>(b));
      for (bool changed = true; changed;) {
        changed = false;
        for (int b : std::vector<int>(alive.begin(), alive.end()))
          if (!marks.count(b) && live[b].size() <= 1) {
            for (int w : live[b]) live[w].erase(b);
            alive.erase(b);
            changed = true;
          }
      }
      std::set<int> holds;
      for (size_t b = 0; b < nf.tree.size(); ++b)
        if (std::binary_search(nf.tree.bags[b].begin(), nf.tree.bags[b].end(), g)) holds.insert(static_cast<int>(b));
      ASSERT_EQ(holds, alive) << t << " gate " << g;
    }
  }
}

TEST(NormalForm, UpwardGatesHaveLeavesBelow) {
  std::mt19937 rng(12);
  for (int t = 0; t < 40; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 5), 2 + static_cast<int>(rng() % 10), 1, 0.0);
    auto a = to_arity_two(rc.circuit, cycluit_decomposition(rc.circuit));
    auto& c = a.circuit;
    auto nf = normalize_decomposition(c, regroup_decomposition(c, a.decomposition));
    auto adj = nf.adjacency();
    for (size_t b = 0; b < adj.size(); ++b)
      for (int p : adj[b]) {
        // Bags reachable from b without crossing p.
        std::set<int> below{static_cast<int>(b)};
        std::vector<int> stack{static_cast<int>(b)};
        while (!stack.empty()) {
          int v = stack.back();
          stack.pop_back();
          for (int w : adj[v])
            if (w != p && !below.count(w) && !(v == static_cast<int>(b) && w == p)) {
              below.insert(w);
              stack.push_back(w);
            }
        }
        auto split = split_bag(c, nf, static_cast<int>(b), p);
        for (auto g : split.up)
          ASSERT_TRUE(c.type(g) == GateType::input || c.fan_in(g) == 0 || below.count(nf.phi[g]));
        for (auto g : split.down) ASSERT_FALSE(below.count(nf.phi[g]));
        ASSERT_EQ(split.up.size() + split.down.size(), nf.tree.bags[b].size());
      }
  }
}

// ---------------------------------------------------------------------------
// Partition-based evaluation

TEST(Partition, EmptySecondPartIsPlainFixpoint) {
  std::mt19937 rng(13);
  for (int t = 0; t < 50; ++t) {
    auto rc = random_cycluit(rng, 3, 8, 1, 0.0);
    auto& c = rc.circuit;
    auto p = make_partition(c, std::vector<int>(c.size(), 0));
    EXPECT_EQ(p.frontier_size(), 0u);
    for_each_valuation(c, [&](const std::vector<bool>&, const GateValuation& v) {
      ASSERT_EQ(partition_evaluate(c, v, p), evaluate_monotone_naive(c, v));
    });
  }
}

TEST(Partition, RandomPartitionsMatchNaive) {
  std::mt19937 rng(14);
  for (int t = 0; t < 1000; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 14), 1, 0.0);
    auto& c = rc.circuit;
    std::vector<int> side(c.size());
    for (auto& s : side) s = static_cast<int>(rng() % 2);
    auto p = make_partition(c, side);
    std::vector<bool> bits(c.input_gates().size());
    for (size_t i = 0; i < bits.size(); ++i) bits[i] = rng() % 2;
    auto v = valuation_from_inputs(c, bits);
    size_t rounds = 0;
    ASSERT_EQ(partition_evaluate(c, v, p, &rounds), evaluate_monotone_naive(c, v)) << t;
    ASSERT_EQ(rounds, p.frontier_size() + 2);
  }
}

TEST(Partition, FrontierFollowsDefinition) {
  Cycluit c;
  GateId x = c.add_input("x");
  GateId a = c.reserve(), b = c.reserve(), d = c.reserve();
  c.define(a, GateType::disj, {x, b});
  c.define(b, GateType::disj, {a});
  c.define(d, GateType::conj, {b, x});
  c.set_output(d);
  std::vector<int> side(c.size(), 0);
  side[b] = 1;
  auto p = make_partition(c, side);
  EXPECT_EQ(p.frontier[0], (std::vector<GateId>{b}));
  EXPECT_EQ(p.frontier[1], (std::vector<GateId>{a}));
}

TEST(Partition, Errors) {
  auto c = two_gate_loop();
  EvaluationPartition p;
  p.part[0] = {1};
  EXPECT_THROW(partition_evaluate(c, GateValuation(c.size(), 0), p), error);
  p.part[1] = {1, 2};
  EXPECT_THROW(partition_evaluate(c, GateValuation(c.size(), 0), p), error);
}

// ---------------------------------------------------------------------------
// Treewidth-preserving rewriting

TEST(DecycleMonotone, TwoGateLoop) {
  auto c = two_gate_loop();
  auto r = decycle_monotone(c);
  EXPECT_TRUE(is_acyclic(r.circuit));
  EXPECT_TRUE(equivalent(c, r.circuit));
  EXPECT_TRUE(validate_decomposition(r.decomposition, wire_hyperedges(r.circuit)));
}

TEST(DecycleMonotone, AcyclicInput) {
  std::mt19937 rng(15);
  for (int t = 0; t < 30; ++t) {
    Cycluit c;
    int k = 1 + static_cast<int>(rng() % 14);
    for (int i = 0; i < k; ++i) c.add_input("x" + std::to_string(i));
    for (int i = 0; i < 8; ++i) {
      std::vector<GateId> ins;
      for (int j = 0; j < 2; ++j) ins.push_back(static_cast<GateId>(rng() % c.size()));
      c.add_gate(rng() % 2 ? GateType::conj : GateType::disj, ins);
    }
    c.set_output(static_cast<GateId>(c.size() - 1));
    auto r = decycle_monotone(c);
    ASSERT_TRUE(is_acyclic(r.circuit));
    ASSERT_TRUE(equivalent(c, r.circuit)) << t;
  }
}

TEST(DecycleMonotone, RandomCyclic) {
  std::mt19937 rng(16);
  int cyclic = 0;
  for (int t = 0; t < 80; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 8), 2 + static_cast<int>(rng() % 8), 1, 0.0);
    cyclic += !is_acyclic(rc.circuit);
    auto r = decycle_monotone(rc.circuit);
    ASSERT_TRUE(is_acyclic(r.circuit));
    ASSERT_TRUE(equivalent(rc.circuit, r.circuit)) << t << "\n" << to_cycluit_text(rc.circuit);
    auto v = validate_decomposition(r.decomposition, wire_hyperedges(r.circuit));
    ASSERT_TRUE(v) << v.reason;
  }
  EXPECT_GE(cyclic, 40);
}

TEST(DecycleMonotone, RejectsNegation) {
  Cycluit c;
  GateId x = c.add_input("x");
  c.set_output(c.add_gate(GateType::negation, {x}));
  EXPECT_THROW(decycle_monotone(c), error);
}

TEST(Emulate, SingleGate) {
  Cycluit c;
  GateId x = c.add_input("x");
  c.set_output(c.add_gate(GateType::disj, {x}));
  auto r = emulate_decycle(c);
  EXPECT_TRUE(equivalent(c, r.circuit, &r.image));
  EXPECT_GE(r.image[1], 0);
}

TEST(Emulate, EveryGateAgrees) {
  std::mt19937 rng(17);
  for (int t = 0; t < 60; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 12), 2 + static_cast<int>(rng() % 8), 1, 0.0);
    auto r = emulate_decycle(rc.circuit);
    for (GateId g = 0; g < rc.circuit.size(); ++g) ASSERT_GE(r.image[g], 0);
    ASSERT_TRUE(is_acyclic(r.circuit));
    ASSERT_TRUE(equivalent(rc.circuit, r.circuit, &r.image)) << t << "\n" << to_cycluit_text(rc.circuit);
    ASSERT_TRUE(validate_decomposition(r.decomposition, wire_hyperedges(r.circuit)));
  }
}

TEST(Emulate, SizeLinearAtFixedWidth) {
  auto a = emulate_decycle(cycle_chain(40, false));
  auto b = emulate_decycle(cycle_chain(80, false));
  double ratio = static_cast<double>(b.circuit.size()) / static_cast<double>(a.circuit.size());
  RecordProperty("ratio", std::to_string(ratio));
  EXPECT_LE(ratio, 2.5);
  EXPECT_EQ(a.decomposition.width(), b.decomposition.width());
}

TEST(DecycleStratified, MonotoneAgreesWithMonotoneRewriting) {
  std::mt19937 rng(18);
  for (int t = 0; t < 30; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 8), 1, 0.0);
    auto s = decycle_stratified(rc.circuit);
    auto m = decycle_monotone(rc.circuit);
    CycluitEvaluator es(s.circuit), em(m.circuit);
    for_each_valuation(rc.circuit, [&](const std::vector<bool>& bits, const GateValuation&) {
      ASSERT_EQ(es.stratified(valuation_from_inputs(s.circuit, bits))[s.circuit.output()],
                em.stratified(valuation_from_inputs(m.circuit, bits))[m.circuit.output()]);
    });
  }
}

TEST(DecycleStratified, NegatedCycle) {
  auto c = two_gate_loop();
  GateId n = c.add_gate(GateType::negation, {c.output()});
  c.set_output(n);
  auto r = decycle_stratified(c);
  EXPECT_TRUE(is_acyclic(r.circuit));
  EXPECT_TRUE(equivalent(c, r.circuit));
}

TEST(DecycleStratified, RandomAllValuations) {
  std::mt19937 rng(19);
  int wide = 0, cyclic = 0;
  for (int t = 0; t < 80; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 12), 2 + static_cast<int>(rng() % 9), 3, 0.25);
    auto& c = rc.circuit;
    cyclic += !is_acyclic(c);
    DecycleResult r;
    try {
      r = decycle_stratified(c);
    } catch (const decycle_limit&) {
      ++wide;
      continue;
    }
    ASSERT_TRUE(is_acyclic(r.circuit));
    ASSERT_LE(count_type(r.circuit, GateType::negation), count_type(c, GateType::negation));
    auto v = validate_decomposition(r.decomposition, wire_hyperedges(r.circuit));
    ASSERT_TRUE(v) << v.reason;
    ASSERT_TRUE(equivalent(c, r.circuit)) << t << "\n" << to_cycluit_text(c);
  }
  EXPECT_LE(wide, 4);
  EXPECT_GE(cyclic, 30);
  RecordProperty("cyclic", cyclic);
}

TEST(DecycleStratified, LargerRandom) {
  std::mt19937 rng(21);
  int done = 0;
  for (int t = 0; t < 40; ++t) {
    auto rc = random_cycluit(rng, 4 + static_cast<int>(rng() % 8), 10 + static_cast<int>(rng() % 15), 3, 0.15);
    DecycleResult r;
    try {
      r = decycle_stratified(rc.circuit);
    } catch (const decycle_limit&) {
      continue;
    }
    ++done;
    ASSERT_TRUE(is_acyclic(r.circuit));
    ASSERT_TRUE(equivalent(rc.circuit, r.circuit)) << t << "\n" << to_cycluit_text(rc.circuit);
  }
  RecordProperty("completed", done);
  EXPECT_GE(done, 30);
}

TEST(DecycleStratified, SuppliedDecomposition) {
  auto c = cycle_chain(5, true);
  auto td = cycluit_decomposition(c);
  auto r = decycle_stratified(c, td);
  EXPECT_EQ(r.input_width, td.width());
  EXPECT_TRUE(equivalent(c, r.circuit));
  GateDecomposition bad;
  bad.bags = {{0}};
  bad.parent = {-1};
  EXPECT_THROW(decycle_stratified(c, bad), error);
}

TEST(DecycleStratified, SizeDoublingRatio) {
  std::vector<size_t> sizes;
  std::vector<int> widths;
  for (int n : {50, 100, 200}) {
    auto r = decycle_stratified(cycle_chain(n, true));
    sizes.push_back(r.circuit.size());
    widths.push_back(r.decomposition.width());
  }
  for (size_t i = 1; i < sizes.size(); ++i) {
    double ratio = static_cast<double>(sizes[i]) / static_cast<double>(sizes[i - 1]);
    EXPECT_LE(ratio, 2.5);
    EXPECT_EQ(widths[i], widths[0]);
  }
}

TEST(DecycleStratified, NotStratifiable) {
  Cycluit c;
  GateId g = c.reserve();
  GateId n = c.add_gate(GateType::negation, {g});
  c.define(g, GateType::disj, {n});
  c.set_output(g);
  EXPECT_THROW(decycle_stratified(c), cycluit_stratification_error);
}

// ---------------------------------------------------------------------------
// Simplification

TEST(Simplify, PreservesEveryKeptGate) {
  std::mt19937 rng(20);
  for (int t = 0; t < 200; ++t) {
    auto rc = random_cycluit(rng, 1 + static_cast<int>(rng() % 8), 2 + static_cast<int>(rng() % 16), 3, 0.2);
    auto s = simplify_cycluit(rc.circuit);
    ASSERT_EQ(s.circuit.input_gates().size(), rc.circuit.input_gates().size());
    ASSERT_LE(s.circuit.size(), rc.circuit.size() + 1);
    ASSERT_TRUE(equivalent(rc.circuit, s.circuit, &s.image)) << t << "\n" << to_cycluit_text(rc.circuit);
  }
}

TEST(Simplify, BareCycleBecomesConstant) {
  Cycluit c;
  c.add_input("x");
  GateId a = c.reserve(), b = c.reserve();
  c.define(a, GateType::disj, {b});
  c.define(b, GateType::disj, {a});
  c.set_output(a);
  auto s = simplify_cycluit(c);
  EXPECT_EQ(s.circuit.size(), 2u);
  EXPECT_EQ(s.circuit.fan_in(s.circuit.output()), 0u);
  EXPECT_EQ(s.circuit.type(s.circuit.output()), GateType::disj);
}
