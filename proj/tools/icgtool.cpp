// Command-line driver for the query evaluation pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "icg/frontends.hpp"
#include "icg/prob.hpp"

using namespace icg;
using json = nlohmann::ordered_json;

namespace {

// Error raised by a named pipeline stage; reported with exit code 2.
struct stage_error : std::runtime_error {
  stage_error(const std::string& stage, const std::string& msg) : std::runtime_error(stage + ": " + msg) {}
};

template <class F>
auto stage(const std::string& name, F f) -> decltype(f()) {
  try {
    return f();
  } catch (const stage_error&) {
    throw;
  } catch (const std::exception& e) {
    throw stage_error(name, e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw stage_error("read", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw stage_error("write", "cannot open " + path);
  out << text;
  if (!out) throw stage_error("write", "failed writing " + path);
}

struct Options {
  std::string report = "text";
  unsigned seed = 1;
  unsigned jobs = 1;
  std::string program, instance, td, tid, query, regex, in, out, td_out, method = "treewidth", mode = "eval";
  int width = -1;
  bool verify = false;
  bool no_fallback = false;
  size_t samples = 256;
  std::vector<std::string> relations;  // Name/arity
};

struct Report {
  json doc;
  std::vector<std::string> lines;  // text mode output
  int code = 0;

  Report(const std::string& command) {
    doc["command"] = command;
    doc["inputs"] = json::object();
    doc["result"] = nullptr;
    doc["metrics"] = json::object();
  }
  json& metrics() { return doc["metrics"]; }
};

DatalogProgram load_program(const Options& o) {
  if (o.program.empty()) throw stage_error("arguments", "--program is required");
  auto text = read_file(o.program);
  return stage("parse program", [&] { return parse_program(text); });
}

Instance load_instance(const Options& o) {
  if (o.instance.empty()) throw stage_error("arguments", "--instance is required");
  auto text = read_file(o.instance);
  return stage("parse instance", [&] { return parse_instance(text); });
}

// Decomposition from --td when given, otherwise the min-fill heuristic (bounded by --width when set).
TreeDecomposition instance_decomposition(const Options& o, const Instance& inst) {
  if (!o.td.empty()) {
    auto text = read_file(o.td);
    auto t = stage("parse decomposition", [&] { return parse_td(text); });
    auto check = validate_decomposition(t, inst);
    if (!check) throw stage_error("decomposition", check.reason);
    if (o.width >= 0 && t.width() > o.width)
      throw stage_error("decomposition", "width " + std::to_string(t.width()) + " exceeds " + std::to_string(o.width));
    return t;
  }
  return stage("decompose", [&] {
    return heuristic_decomposition(inst, o.width >= 0 ? std::optional<int>(o.width) : std::nullopt);
  });
}

std::optional<int> width_opt(const Options& o) { return o.width >= 0 ? std::optional<int>(o.width) : std::nullopt; }

// Runs f(i) for i in [0, n) over `jobs` threads; returns the first index where f failed, or n.
size_t parallel_find_failure(size_t n, unsigned jobs, const std::function<bool(size_t)>& ok) {
  std::atomic<size_t> next{0}, first_bad{n};
  auto work = [&] {
    for (size_t i; (i = next.fetch_add(1)) < n;) {
      if (i >= first_bad.load()) break;
      if (!ok(i)) {
        size_t cur = first_bad.load();
        while (i < cur && !first_bad.compare_exchange_weak(cur, i)) {
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < std::max(1u, jobs); ++j) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return first_bad.load();
}

std::string fact_list(const Instance& inst, const std::vector<bool>& keep) {
  std::string s;
  for (size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) s += (s.empty() ? "" : " ") + to_string(inst.facts()[i]);
  return "{" + s + "}";
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_check(const Options& o, Report& r) {
  auto p = load_program(o);
  r.doc["inputs"]["program"] = o.program;
  std::string strat;
  bool stratified = true;
  try {
    auto s = stratify_program(p);
    int top = 0;
    for (auto& [rel, k] : s) {
      top = std::max(top, k);
      r.doc["result"]["strata"][rel] = k;
    }
    r.metrics()["strata"] = top;
  } catch (const stratification_error& e) {
    stratified = false;
    strat = e.what();
  }
  auto icg = validate_icg(p);
  r.doc["result"]["stratified"] = stratified;
  r.doc["result"]["icg"] = icg.is_icg;
  r.doc["result"]["failures"] = json::array();
  for (auto& f : icg.failures) r.doc["result"]["failures"].push_back({{"rule", f.rule}, {"literal", f.literal}});
  r.metrics()["rules"] = p.rules.size();
  r.metrics()["body_size"] = icg.body_size;
  r.metrics()["arity"] = icg.arity;
  std::string line = std::string("stratified: ") + (stratified ? "yes" : "no");
  if (!stratified) line += " (" + strat + ")";
  line += "; ICG: ";
  if (icg.is_icg)
    line += "yes (body size " + std::to_string(icg.body_size) + ")";
  else
    line += "no (rule " + std::to_string(icg.failures[0].rule) + ", literal " + icg.failures[0].literal + ")";
  r.lines.push_back(line);
  for (size_t i = 1; i < icg.failures.size(); ++i)
    r.lines.push_back("  also rule " + std::to_string(icg.failures[i].rule) + ", literal " + icg.failures[i].literal);
}

void cmd_decompose(const Options& o, Report& r) {
  auto inst = load_instance(o);
  r.doc["inputs"]["instance"] = o.instance;
  auto t = instance_decomposition(o, inst);
  auto text = to_td_text(t);
  r.metrics()["width"] = t.width();
  r.metrics()["bags"] = t.size();
  r.metrics()["facts"] = inst.size();
  if (!o.out.empty()) {
    write_file(o.out, text);
    r.doc["result"] = {{"td", o.out}};
    r.lines.push_back(o.out);
  } else {
    r.doc["result"] = {{"td", text}};
    r.lines.push_back(text);
  }
}

void cmd_encode(const Options& o, Report& r) {
  auto inst = load_instance(o);
  r.doc["inputs"]["instance"] = o.instance;
  auto t = instance_decomposition(o, inst);
  auto e = stage("encode", [&] { return encode_instance(inst, t, width_opt(o)); });
  auto text = to_encoding_text(e);
  r.metrics()["nodes"] = e.size();
  r.metrics()["width"] = e.k;
  if (!o.out.empty()) {
    write_file(o.out, text + "\n");
    r.doc["result"] = {{"encoding", o.out}};
    r.lines.push_back(o.out);
  } else {
    r.doc["result"] = {{"encoding", text}};
    r.lines.push_back(text);
  }
}

void emit_program(const Options& o, Report& r, const DatalogProgram& p) {
  auto text = to_text(p);
  auto rep = validate_icg(p);
  r.metrics()["rules"] = p.rules.size();
  r.metrics()["body_size"] = rep.body_size;
  r.metrics()["icg"] = rep.is_icg;
  if (!o.out.empty()) {
    write_file(o.out, text);
    r.doc["result"] = {{"program", o.out}};
    r.lines.push_back(o.out);
  } else {
    r.doc["result"] = {{"program", text}};
    r.lines.push_back(text);
  }
}

void cmd_translate_cq(const Options& o, Report& r) {
  if (o.query.empty()) throw stage_error("arguments", "--query is required");
  auto q = stage("parse query", [&] { return parse_cq(read_file(o.query)); });
  r.doc["inputs"]["query"] = o.query;
  TreeDecomposition t;
  if (!o.td.empty()) {
    r.doc["inputs"]["td"] = o.td;
    t = stage("parse decomposition", [&] { return parse_td(read_file(o.td)); });
  } else {
    t = stage("join tree", [&] { return gyo_join_tree(q); });
  }
  auto p = stage("translate", [&] { return cq_to_icg(q, t); });
  r.metrics()["query_width"] = t.width();
  emit_program(o, r, p);
}

void cmd_translate_rpq(const Options& o, Report& r) {
  if (o.regex.empty()) throw stage_error("arguments", "--regex is required");
  r.doc["inputs"]["regex"] = o.regex;
  Signature sig;
  for (auto& entry : o.relations) {
    auto slash = entry.find('/');
    int arity = 0;
    try {
      if (slash == std::string::npos || slash == 0) throw std::invalid_argument(entry);
      arity = std::stoi(entry.substr(slash + 1));
    } catch (const std::exception&) {
      throw stage_error("arguments", "relation '" + entry + "' is not Name/arity");
    }
    if (arity < 1) throw stage_error("arguments", "relation '" + entry + "' needs a positive arity");
    sig.declare(entry.substr(0, slash), arity);
  }
  if (!o.relations.empty()) r.doc["inputs"]["relations"] = o.relations;
  auto p = stage("translate", [&] { return rpq_to_icg(o.regex, o.relations.empty() ? nullptr : &sig); });
  emit_program(o, r, p);
}

void cmd_compile(const Options& o, Report& r) {
  auto p = load_program(o);
  r.doc["inputs"]["program"] = o.program;
  int k = o.width;
  std::optional<Instance> inst;
  std::optional<TreeDecomposition> t;
  if (!o.instance.empty()) {
    inst = load_instance(o);
    t = instance_decomposition(o, *inst);
    if (k < 0) k = std::max(0, t->width());
    r.doc["inputs"]["instance"] = o.instance;
  }
  if (k < 0) throw stage_error("arguments", "--width or --instance is required");
  auto a = stage("compile", [&] { return compile_program(normalize_safety(p), k); });
  // States are materialized on demand; running on an instance fills in the ones it reaches.
  if (inst) stage("provenance", [&] { return build_provenance_cycluit(lift_satwa(*a), encode_instance(*inst, *t, k)); });
  r.metrics()["width"] = k;
  r.metrics()["states"] = a->state_count();
  r.metrics()["transitions"] = a->transition_count();
  r.metrics()["body_size"] = a->body_size();
  auto dump = a->dump();
  if (!o.out.empty()) {
    write_file(o.out, dump);
    r.doc["result"] = {{"automaton", o.out}};
    r.lines.push_back(o.out);
  } else {
    r.doc["result"] = {{"automaton", dump}};
    r.lines.push_back(dump);
  }
}

// Checks the provenance cycluit against the brute-force oracle on every valuation (or a seeded sample).
void verify_provenance(const Options& o, Report& r, const DatalogProgram& p, const Instance& inst,
                       const ProgramProvenance& pp) {
  size_t n = inst.size();
  bool exhaustive = n <= 16;
  size_t count = exhaustive ? (size_t{1} << n) : o.samples;
  std::vector<std::vector<bool>> vals(count, std::vector<bool>(n));
  std::mt19937 rng(o.seed);
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < n; ++j) vals[i][j] = exhaustive ? ((i >> j) & 1) : (rng() & 1);
  CycluitEvaluator ev(pp.prov.circuit);
  auto out = pp.prov.circuit.output();
  size_t bad = parallel_find_failure(count, o.jobs, [&](size_t i) {
    bool circuit = ev.stratified(fact_valuation(pp, vals[i]))[out] != 0;
    return circuit == naive_evaluate(p, apply_valuation(inst, vals[i]));
  });
  r.metrics()["verified_valuations"] = count;
  r.metrics()["verification"] = exhaustive ? "exhaustive" : "sampled";
  if (bad < count)
    throw stage_error("verify", "provenance disagrees with the oracle on " + fact_list(inst, vals[bad]));
  r.doc["result"]["verified"] = true;
  r.lines.push_back("verified");
}

void cmd_provenance(const Options& o, Report& r) {
  auto p = load_program(o);
  auto inst = load_instance(o);
  r.doc["inputs"]["program"] = o.program;
  r.doc["inputs"]["instance"] = o.instance;
  auto t = instance_decomposition(o, inst);
  auto pp = stage("provenance", [&] { return program_provenance(p, inst, t, width_opt(o)); });
  r.metrics()["gates"] = pp.prov.circuit.size();
  r.metrics()["states"] = pp.states;
  r.metrics()["width"] = pp.width;
  r.metrics()["encoding_nodes"] = pp.encoding_nodes;
  r.metrics()["decomposition_width"] = pp.prov.decomposition.width();
  auto text = provenance_text(pp, inst);
  if (!o.out.empty()) {
    write_file(o.out, text);
    r.doc["result"]["cycluit"] = o.out;
    r.lines.push_back(o.out);
  } else {
    r.doc["result"]["cycluit"] = text;
    r.lines.push_back(text);
  }
  if (!o.td_out.empty()) {
    auto names = gate_names(pp.prov.circuit);
    TreeDecomposition named;
    named.parent = pp.prov.decomposition.parent;
    named.root = pp.prov.decomposition.root;
    for (auto& b : pp.prov.decomposition.bags) {
      named.bags.emplace_back();
      for (auto g : b) named.bags.back().push_back(names[g]);
    }
    named.normalize_bags();
    write_file(o.td_out, to_td_text(named));
    r.doc["result"]["td"] = o.td_out;
  }
  if (o.verify) verify_provenance(o, r, p, inst, pp);
}

void cmd_eval(const Options& o, Report& r) {
  auto p = load_program(o);
  auto inst = load_instance(o);
  r.doc["inputs"]["program"] = o.program;
  r.doc["inputs"]["instance"] = o.instance;
  auto t = instance_decomposition(o, inst);
  auto pp = stage("provenance", [&] { return program_provenance(p, inst, t, width_opt(o)); });
  auto& c = pp.prov.circuit;
  bool answer = stage("evaluate", [&] {
    GateValuation v(c.size(), 0);
    for (auto g : c.input_gates()) v[g] = 1;
    return CycluitEvaluator(c).stratified(v)[c.output()] != 0;
  });
  r.metrics()["width"] = pp.width;
  r.metrics()["states"] = pp.states;
  r.metrics()["gates"] = c.size();
  r.metrics()["facts"] = inst.size();
  r.doc["result"]["answer"] = answer;
  r.lines.push_back(answer ? "true" : "false");
  if (o.verify) {
    bool expected = stage("verify", [&] { return naive_evaluate(p, inst); });
    if (expected != answer)
      throw stage_error("verify", std::string("naive evaluation gives ") + (expected ? "true" : "false"));
    r.doc["result"]["verified"] = true;
    r.lines.push_back("verified");
  }
  r.code = answer ? 0 : 1;
}

void cmd_decycle(const Options& o, Report& r) {
  if (o.in.empty()) throw stage_error("arguments", "--in is required");
  r.doc["inputs"]["in"] = o.in;
  auto c = stage("parse cycluit", [&] { return parse_cycluit(read_file(o.in)); });
  Cycluit out;
  std::optional<GateDecomposition> out_td;
  if (o.method == "unfold") {
    auto u = stage("decycle", [&] { return unfold_decycle(c); });
    out = std::move(u.circuit);
    out.set_output(u.image[c.output()]);
    r.metrics()["layers"] = u.layers;
  } else if (o.method == "treewidth") {
    std::optional<GateDecomposition> td;
    if (!o.td.empty()) {
      r.doc["inputs"]["td"] = o.td;
      auto named = stage("parse decomposition", [&] { return parse_td(read_file(o.td)); });
      auto names = gate_names(c);
      std::unordered_map<std::string, GateId> id;
      for (GateId g = 0; g < c.size(); ++g) id[names[g]] = g;
      GateDecomposition t;
      t.parent = named.parent;
      t.root = named.root;
      for (auto& b : named.bags) {
        t.bags.emplace_back();
        for (auto& e : b) {
          auto it = id.find(e);
          if (it == id.end()) throw stage_error("decomposition", "unknown gate " + e);
          t.bags.back().push_back(it->second);
        }
      }
      t.normalize_bags();
      td = std::move(t);
    }
    auto d = stage("decycle", [&] { return decycle_stratified(c, td); });
    r.metrics()["input_width"] = d.input_width;
    r.metrics()["normal_width"] = d.normal_width;
    r.metrics()["output_width"] = d.decomposition.width();
    out = std::move(d.circuit);
    out_td = std::move(d.decomposition);
  } else {
    throw stage_error("arguments", "unknown method " + o.method);
  }
  r.metrics()["gates_in"] = c.size();
  r.metrics()["gates_out"] = out.size();
  r.metrics()["acyclic"] = is_acyclic(out);
  auto text = to_cycluit_text(out);
  if (!o.out.empty()) {
    write_file(o.out, text);
    r.doc["result"]["circuit"] = o.out;
    r.lines.push_back(o.out);
  } else {
    r.doc["result"]["circuit"] = text;
    r.lines.push_back(text);
  }
  if (!o.td_out.empty() && out_td) {
    auto names = gate_names(out);
    TreeDecomposition named;
    named.parent = out_td->parent;
    named.root = out_td->root;
    for (auto& b : out_td->bags) {
      named.bags.emplace_back();
      for (auto g : b) named.bags.back().push_back(names[g]);
    }
    named.normalize_bags();
    write_file(o.td_out, to_td_text(named));
    r.doc["result"]["td"] = o.td_out;
  }
  if (o.verify) {
    size_t k = c.input_gates().size();
    bool exhaustive = k <= 16;
    size_t count = exhaustive ? (size_t{1} << k) : o.samples;
    std::mt19937 rng(o.seed);
    std::vector<std::vector<bool>> vals(count, std::vector<bool>(k));
    for (size_t i = 0; i < count; ++i)
      for (size_t j = 0; j < k; ++j) vals[i][j] = exhaustive ? ((i >> j) & 1) : (rng() & 1);
    CycluitEvaluator ec(c), eo(out);
    size_t bad = parallel_find_failure(count, o.jobs, [&](size_t i) {
      return ec.stratified(valuation_from_inputs(c, vals[i]))[c.output()] ==
             eo.stratified(valuation_from_inputs(out, vals[i]))[out.output()];
    });
    r.metrics()["verified_valuations"] = count;
    if (bad < count) throw stage_error("verify", "output differs on valuation " + std::to_string(bad));
    if (!is_acyclic(out)) throw stage_error("verify", "output is cyclic");
    r.doc["result"]["verified"] = true;
    r.lines.push_back("verified");
  }
}

TidInstance load_tid(const Options& o) {
  if (o.tid.empty()) throw stage_error("arguments", "--tid is required");
  auto text = read_file(o.tid);
  return stage("parse tid", [&] { return parse_tid(text); });
}

void cmd_prob(const Options& o, Report& r) {
  auto p = load_program(o);
  auto tid = load_tid(o);
  r.doc["inputs"]["program"] = o.program;
  r.doc["inputs"]["tid"] = o.tid;
  auto t = instance_decomposition(o, tid.instance);
  PqeOptions opt;
  opt.allow_fallback = !o.no_fallback;
  auto res = stage("probability", [&] { return pqe_pipeline(p, tid, t, opt); });
  r.doc["result"]["probability"] = res.probability.get_str();
  r.doc["result"]["method"] = res.fallback ? "enumeration" : "circuit";
  r.metrics()["provenance_gates"] = res.provenance_gates;
  r.metrics()["cycluit_width"] = res.cycluit_width;
  r.metrics()["circuit_gates"] = res.circuit_gates;
  r.metrics()["circuit_width"] = res.circuit_width;
  r.metrics()["max_table_entries"] = res.max_entries;
  if (res.fallback) r.metrics()["fallback_reason"] = res.fallback_reason;
  r.lines.push_back(res.probability.get_str());
  if (o.verify) {
    auto expected = stage("verify", [&] { return brute_force_pqe(p, tid); });
    if (expected != res.probability) throw stage_error("verify", "enumeration gives " + expected.get_str());
    r.doc["result"]["verified"] = true;
    r.lines.push_back("verified");
  }
}

void cmd_oracle(const Options& o, Report& r) {
  auto p = load_program(o);
  r.doc["inputs"]["program"] = o.program;
  r.doc["inputs"]["mode"] = o.mode;
  if (o.mode == "eval") {
    auto inst = load_instance(o);
    bool v = stage("naive evaluation", [&] { return naive_evaluate(p, inst); });
    r.doc["result"]["answer"] = v;
    r.lines.push_back(v ? "true" : "false");
    r.code = v ? 0 : 1;
  } else if (o.mode == "provenance") {
    auto inst = load_instance(o);
    if (inst.size() > 20) throw stage_error("arguments", "too many facts for the provenance table");
    auto table = stage("brute-force provenance", [&] { return brute_force_provenance(p, inst); });
    json rows = json::array();
    std::string text;
    for (size_t m = 0; m < table.table.size(); ++m) {
      if (!table.table[m]) continue;
      std::vector<bool> keep(inst.size());
      for (size_t i = 0; i < inst.size(); ++i) keep[i] = (m >> i) & 1;
      auto s = fact_list(inst, keep);
      rows.push_back(s);
      text += s + "\n";
    }
    r.doc["result"]["satisfying_subinstances"] = rows;
    r.metrics()["satisfying"] = rows.size();
    r.metrics()["subinstances"] = table.table.size();
    r.lines.push_back(text);
  } else if (o.mode == "pqe") {
    auto tid = load_tid(o);
    auto v = stage("world enumeration", [&] { return brute_force_pqe(p, tid); });
    r.doc["result"]["probability"] = v.get_str();
    r.lines.push_back(v.get_str());
  } else {
    throw stage_error("arguments", "unknown oracle mode " + o.mode);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query evaluation over treelike instances"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--report", o.report, "Output format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--seed", o.seed, "Seed for sampled verification");
  app.add_option("--jobs", o.jobs, "Threads for verification")->check(CLI::Range(1u, 256u));

  auto program = [&](CLI::App* s) { s->add_option("--program", o.program, "Datalog program file"); };
  auto instance = [&](CLI::App* s) {
    s->add_option("--instance", o.instance, "Instance file");
    s->add_option("--td", o.td, "Tree decomposition file");
    s->add_option("--width", o.width, "Encoding width");
  };
  auto output = [&](CLI::App* s) { s->add_option("--out", o.out, "Output file"); };
  auto verify = [&](CLI::App* s) {
    s->add_flag("--verify", o.verify, "Cross-check against a brute-force oracle");
    s->add_option("--samples", o.samples, "Sampled valuations when exhaustive checking is too large");
  };

  std::map<std::string, std::function<void(const Options&, Report&)>> handlers;
  auto sub = [&](const std::string& name, const std::string& help, auto handler) {
    handlers[name] = handler;
    return app.add_subcommand(name, help);
  };
  auto* check = sub("check", "Stratification and ICG report", cmd_check);
  program(check);
  auto* decompose = sub("decompose", "Tree decomposition of an instance", cmd_decompose);
  instance(decompose);
  output(decompose);
  auto* encode = sub("encode", "Tree encoding of an instance", cmd_encode);
  instance(encode);
  output(encode);
  auto* tcq = sub("translate-cq", "Conjunctive query to ICG-Datalog", cmd_translate_cq);
  tcq->add_option("--query", o.query, "Query file");
  tcq->add_option("--td", o.td, "Query decomposition");
  output(tcq);
  auto* trpq = sub("translate-rpq", "Regular path query to ICG-Datalog", cmd_translate_rpq);
  trpq->add_option("--regex", o.regex, "Regular expression");
  trpq->add_option("--relations", o.relations, "Relations of the domain, as Name/arity")->delimiter(',');
  output(trpq);
  auto* compile = sub("compile", "Automaton for a program", cmd_compile);
  program(compile);
  instance(compile);
  output(compile);
  auto* prov = sub("provenance", "Provenance cycluit", cmd_provenance);
  program(prov);
  instance(prov);
  output(prov);
  prov->add_option("--td-out", o.td_out, "Decomposition of the cycluit");
  verify(prov);
  auto* eval = sub("eval", "Evaluate a program through its provenance", cmd_eval);
  program(eval);
  instance(eval);
  verify(eval);
  auto* decycle = sub("decycle", "Remove cycles from a cycluit", cmd_decycle);
  decycle->add_option("--method", o.method, "unfold or treewidth")->check(CLI::IsMember({"unfold", "treewidth"}));
  decycle->add_option("--in", o.in, "Cycluit file");
  decycle->add_option("--td", o.td, "Decomposition of the cycluit");
  decycle->add_option("--td-out", o.td_out, "Decomposition of the output");
  output(decycle);
  verify(decycle);
  auto* prob = sub("prob", "Probability of a program on a tuple-independent instance", cmd_prob);
  program(prob);
  prob->add_option("--tid", o.tid, "Probabilistic instance file");
  prob->add_option("--td", o.td, "Tree decomposition file");
  prob->add_flag("--no-fallback", o.no_fallback, "Fail instead of enumerating worlds");
  prob->add_flag("--verify", o.verify, "Compare with world enumeration");
  auto* oracle = sub("oracle", "Brute-force evaluation, provenance or probability", cmd_oracle);
  program(oracle);
  oracle->add_option("--instance", o.instance, "Instance file");
  oracle->add_option("--tid", o.tid, "Probabilistic instance file");
  oracle->add_option("--mode", o.mode, "eval, provenance or pqe")->check(CLI::IsMember({"eval", "provenance", "pqe"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto* chosen = app.get_subcommands().front();
  Report r(chosen->get_name());
  r.doc["seed"] = o.seed;
  auto start = std::chrono::steady_clock::now();
  int code;
  try {
    handlers.at(chosen->get_name())(o, r);
    code = r.code;
    r.doc["status"] = "ok";
  } catch (const std::exception& e) {
    code = 2;
    r.doc["status"] = "error";
    r.doc["error"] = e.what();
    r.lines = {std::string("error: ") + e.what()};
  }
  r.metrics()["wall_time_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (o.report == "json") {
    std::cout << r.doc.dump(2) << "\n";
  } else {
    auto& stream = code == 2 ? std::cerr : std::cout;
    for (auto& l : r.lines) {
      stream << l;
      if (l.empty() || l.back() != '\n') stream << "\n";
    }
  }
  return code;
}
