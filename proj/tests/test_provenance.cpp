#include <gtest/gtest.h>

#include <random>

#include "icg/provenance.hpp"
#include "support.hpp"

using namespace icg;
using namespace testing_support;

namespace {

// Labels seen by the automaton when node w carries annotation bit w of `mask`.
std::vector<EncodingLabel> annotated_labels(const Satwa& a, const TreeEncoding& e, std::uint64_t mask) {
  std::vector<EncodingLabel> out(e.size());
  for (size_t w = 0; w < e.size(); ++w) {
    auto l = e.labels[w];
    if (l.has_fact()) l.rel = a.relation_index(e.relations[l.rel]);
    if (l.rel < 0 || !(mask >> w & 1u)) l = {l.d, -1, {}};
    out[w] = l;
  }
  return out;
}

GateValuation node_valuation(const ProvenanceCycluit& p, std::uint64_t mask) {
  GateValuation v(p.circuit.size(), 0);
  for (size_t w = 0; w < p.node_input.size(); ++w)
    if (p.node_input[w] >= 0) v[p.node_input[w]] = mask >> w & 1u;
  return v;
}

std::uint64_t label_hash(StateId q, const EncodingLabel& l) {
  std::uint64_t h = 1469598103934665603ull ^ q;
  for (char c : detail::label_key(l)) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  return h;
}

// Random stratified automaton whose transitions depend on the state, the label and a seed.
ExplicitSatwa random_satwa(std::uint64_t seed, int n_states, int k, std::vector<std::string> rels) {
  std::vector<int> strata(n_states);
  std::mt19937 rng(static_cast<unsigned>(seed));
  for (auto& s : strata) s = static_cast<int>(rng() % 3);
  strata[0] = 2;
  auto delta = [seed, strata, n_states](StateId q, const EncodingLabel& l) {
    std::mt19937 r(static_cast<unsigned>(label_hash(q, l) ^ seed));
    Formula f;
    int roll = static_cast<int>(r() % 10);
    if (roll == 0) return Formula::constant(true);
    if (roll == 1) return Formula::constant(false);
    if (l.has_fact() && roll < 4) return Formula::constant(true);
    std::vector<std::uint32_t> kids;
    int n_kids = 1 + static_cast<int>(r() % 3);
    for (int i = 0; i < n_kids; ++i) {
      StateId t = static_cast<StateId>(r() % n_states);
      if (strata[t] < strata[q] && r() % 2)
        kids.push_back(f.var(t, false));
      else if (strata[t] <= strata[q])
        kids.push_back(f.var(t));
    }
    if (kids.empty()) return Formula::constant(false);
    f.root = r() % 2 ? f.conj(kids) : f.disj(kids);
    return f;
  };
  return ExplicitSatwa(k, std::move(rels), strata, 0, delta);
}

void expect_valid_decomposition(const ProvenanceCycluit& p) {
  auto chk = validate_decomposition(p.decomposition, wire_hyperedges(p.circuit));
  EXPECT_TRUE(chk) << chk.reason;
}

}  // namespace

TEST(Build, TautologyGivesConstantOne) {
  ExplicitSatwa a(1, {"R"}, {1}, 0, [](StateId, const EncodingLabel&) { return Formula::constant(true); });
  Instance inst({{"R", {"a", "b"}}, {"R", {"b", "c"}}});
  auto e = encode_instance(inst, heuristic_decomposition(inst), 1);
  auto p = build_provenance_cycluit(lift_satwa(a), e);
  ASSERT_LE(e.size(), 12u);
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << e.size()); ++m)
    EXPECT_EQ(evaluate_stratified(p.circuit, node_valuation(p, m))[p.circuit.output()], 1);
}

TEST(Build, SingleNodeGivesItsInput) {
  ExplicitSatwa a(0, {"R"}, {1}, 0,
                  [](StateId, const EncodingLabel& l) { return Formula::constant(l.has_fact()); });
  Instance inst(std::vector<Fact>{Fact{"R", {"a"}}});
  auto e = encode_instance(inst, heuristic_decomposition(inst), 0);
  ASSERT_EQ(e.size(), 1u);
  auto p = build_provenance_cycluit(lift_satwa(a), e);
  for (std::uint64_t m = 0; m < 2; ++m)
    EXPECT_EQ(evaluate_stratified(p.circuit, node_valuation(p, m))[p.circuit.output()], m);
}

TEST(Build, RandomAutomataMatchRunSemantics) {
  std::mt19937 rng(12);
  int accepted = 0, total = 0;
  for (int t = 0; t < 150; ++t) {
    auto ri = random_tw2_instance(rng, 5, 4);
    auto td = restrict_to_domain(ri.bags, ri.parent, ri.instance);
    auto e = encode_instance(ri.instance, td, 2);
    if (e.size() > 10) continue;
    auto a = random_satwa(rng(), 2 + static_cast<int>(rng() % 5), 2, {"R", "S", "U"});
    auto p = build_provenance_cycluit(lift_satwa(a), e);
    ASSERT_TRUE(is_valid_stratification(p.circuit, stratify_cycluit(p.circuit)));
    expect_valid_decomposition(p);
    CycluitEvaluator ev(p.circuit);
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << e.size()); ++m) {
      bool want = satwa_run_exists(a, e, annotated_labels(a, e, m));
      ASSERT_EQ(ev.stratified(node_valuation(p, m))[p.circuit.output()] != 0, want) << t << " " << m;
      accepted += want;
      ++total;
    }
  }
  EXPECT_GT(accepted, total / 20);
  EXPECT_LT(accepted, total - total / 20);
}

TEST(Build, CompiledAutomataMatchRunSemantics) {
  std::mt19937 rng(31);
  int checked = 0;
  for (int t = 0; t < 200 && checked < 60; ++t) {
    auto p = normalize_safety(random_icg_program(rng));
    auto ri = random_tw2_instance(rng, 5, 4);
    auto td = restrict_to_domain(ri.bags, ri.parent, ri.instance);
    auto e = encode_instance(ri.instance, td, 2);
    if (e.size() > 10) continue;
    ++checked;
    CompiledSatwa a(p, 2);
    auto prov = build_provenance_cycluit(lift_satwa(a), e);
    expect_valid_decomposition(prov);
    CycluitEvaluator ev(prov.circuit);
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << e.size()); ++m)
      ASSERT_EQ(ev.stratified(node_valuation(prov, m))[prov.circuit.output()] != 0,
                satwa_run_exists(a, e, annotated_labels(a, e, m)))
          << t << " " << m;
  }
  EXPECT_EQ(checked, 60);
}

TEST(Build, AlphabetMismatch) {
  ExplicitSatwa a(0, {"R"}, {1}, 0, [](StateId, const EncodingLabel&) { return Formula::constant(true); });
  Instance inst({{"R", {"a", "b"}}});
  auto e = encode_instance(inst, heuristic_decomposition(inst));
  EXPECT_THROW(build_provenance_cycluit(lift_satwa(a), e), error);
}

TEST(Lift, AllOnesIsTheOriginalAutomaton) {
  std::mt19937 rng(6);
  for (int t = 0; t < 40; ++t) {
    auto p = normalize_safety(random_icg_program(rng));
    auto ri = random_tw2_instance(rng, 10, 6);
    auto td = restrict_to_domain(ri.bags, ri.parent, ri.instance);
    auto e = encode_instance(ri.instance, td, 2);
    CompiledSatwa a(p, 2);
    EXPECT_EQ(satwa_accepts(a, e), satwa_run_exists(a, e));
  }
}

TEST(Program, SingleFact) {
  auto p = parse_program("goal() :- R(x,y).");
  Instance inst({{"R", {"a", "b"}}});
  auto pp = program_provenance(p, inst, heuristic_decomposition(inst));
  auto& c = pp.prov.circuit;
  ASSERT_EQ(c.input_gates(), (std::vector<GateId>{pp.fact_input[0]}));
  EXPECT_EQ(c.name(pp.fact_input[0]), "f0");
  for (bool b : {false, true}) EXPECT_EQ(evaluate_stratified(c, fact_valuation(pp, {b}))[c.output()], b);
  EXPECT_TRUE(evaluate_query(p, inst, heuristic_decomposition(inst)));
}

TEST(Program, EmptyInstance) {
  std::mt19937 rng(1);
  Instance empty;
  TreeDecomposition td{{{}}, {-1}, 0};
  for (int t = 0; t < 50; ++t) {
    auto p = random_icg_program(rng);
    EXPECT_EQ(evaluate_query(p, empty, td), naive_evaluate(p, empty));
  }
}

TEST(Program, MatchesBruteForceProvenance) {
  std::mt19937 rng(77);
  for (int t = 0; t < 40; ++t) {
    auto p = random_icg_program(rng);
    auto ri = random_tw2_instance(rng, 9, 6);
    auto td = restrict_to_domain(ri.bags, ri.parent, ri.instance);
    auto pp = program_provenance(p, ri.instance, td, 2);
    auto table = brute_force_provenance(p, ri.instance);
    CycluitEvaluator ev(pp.prov.circuit);
    size_t n = ri.instance.size();
    std::vector<bool> bits(n);
    for (std::uint64_t row = 0; row < table.table.size(); ++row) {
      for (size_t i = 0; i < n; ++i) bits[i] = row >> i & 1u;
      ASSERT_EQ(ev.stratified(fact_valuation(pp, bits))[pp.prov.circuit.output()], table.table[row])
          << t << " row " << row << "\n" << to_text(p) << to_text(ri.instance);
    }
    expect_valid_decomposition(pp.prov);
  }
}

TEST(Program, MonotoneProgramsGiveMonotoneProvenance) {
  std::mt19937 rng(8);
  ProgramShape shape;
  shape.allow_negation = false;
  for (int t = 0; t < 30; ++t) {
    auto p = random_icg_program(rng, shape);
    auto ri = random_tw2_instance(rng, 8, 6);
    auto td = restrict_to_domain(ri.bags, ri.parent, ri.instance);
    auto pp = program_provenance(p, ri.instance, td, 2);
    CycluitEvaluator ev(pp.prov.circuit);
    size_t n = ri.instance.size();
    std::vector<std::uint8_t> out(size_t{1} << n);
    std::vector<bool> bits(n);
    for (std::uint64_t row = 0; row < out.size(); ++row) {
      for (size_t i = 0; i < n; ++i) bits[i] = row >> i & 1u;
      out[row] = ev.stratified(fact_valuation(pp, bits))[pp.prov.circuit.output()];
    }
    for (std::uint64_t row = 0; row < out.size(); ++row)
      for (size_t i = 0; i < n; ++i) ASSERT_LE(out[row], out[row | (std::uint64_t{1} << i)]);
  }
}

TEST(Program, EvaluateQueryMatchesNaive) {
  std::mt19937 rng(500);
  for (int t = 0; t < 500; ++t) {
    auto p = random_icg_program(rng);
    auto ri = random_tw2_instance(rng, 30, 12);
    auto td = restrict_to_domain(ri.bags, ri.parent, ri.instance);
    ASSERT_EQ(evaluate_query(p, ri.instance, td, 2), naive_evaluate(p, ri.instance))
        << t << "\n" << to_text(p) << to_text(ri.instance);
  }
}

TEST(Program, SizeAndWidthBounds) {
  std::mt19937 rng(3);
  double worst = 0;
  for (int t = 0; t < 40; ++t) {
    auto p = random_icg_program(rng);
    auto ri = random_tw2_instance(rng, 30, 12);
    auto td = restrict_to_domain(ri.bags, ri.parent, ri.instance);
    auto pp = program_provenance(p, ri.instance, td, 2);
    auto& c = pp.prov.circuit;
    ASSERT_TRUE(is_valid_stratification(c, stratify_cycluit(c)));
    expect_valid_decomposition(pp.prov);
    // Gates per materialized (node, state) pair.
    worst = std::max(worst, static_cast<double>(c.size()) / static_cast<double>(std::max<size_t>(1, pp.prov.pairs)));
    EXPECT_LE(static_cast<size_t>(pp.prov.decomposition.width() + 1), c.size());
  }
  RecordProperty("gates_per_pair", std::to_string(worst));
  EXPECT_LE(worst, 40.0);
}

TEST(Program, TextHasFactComments) {
  auto p = parse_program("goal() :- R(x,y), S(y,z).");
  Instance inst({{"R", {"a", "b"}}, {"S", {"b", "c"}}});
  auto pp = program_provenance(p, inst, heuristic_decomposition(inst));
  auto text = provenance_text(pp, inst);
  EXPECT_NE(text.find("% f0 : R(a,b)"), std::string::npos);
  EXPECT_NE(text.find("% f1 : S(b,c)"), std::string::npos);
  auto back = parse_cycluit(text);
  EXPECT_EQ(back.input_gates().size(), 2u);
  for (std::uint64_t m = 0; m < 4; ++m)
    EXPECT_EQ(evaluate_stratified(back, valuation_from_inputs(back, {bool(m & 1), bool(m & 2)}))[back.output()], m == 3);
}
