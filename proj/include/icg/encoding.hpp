#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core.hpp"
#include "decomp.hpp"

namespace icg {

// Label (d, s): d is a bitmask over the names a_1..a_{2k+2}; s is an optional fact over names in d.
struct EncodingLabel {
  std::uint32_t d = 0;
  int rel = -1;  // index into TreeEncoding::relations, -1 when s is empty
  std::vector<std::uint8_t> args;

  bool has_fact() const { return rel >= 0; }
  bool operator==(const EncodingLabel&) const = default;
};

struct TreeEncoding {
  int k = 0;
  std::vector<std::string> relations;
  std::vector<int> arities;
  std::vector<EncodingLabel> labels;
  std::vector<std::array<int, 2>> children;  // {-1,-1} at leaves
  std::vector<int> parent;
  int root = 0;
  // Index of the instance fact coded at each node, or -1.
  std::vector<int> source_fact;

  size_t size() const { return labels.size(); }
  int names() const { return 2 * k + 2; }
  bool is_leaf(int n) const { return children[n][0] < 0; }

  int relation_id(const std::string& r, int arity) {
    for (size_t i = 0; i < relations.size(); ++i)
      if (relations[i] == r) return static_cast<int>(i);
    relations.push_back(r);
    arities.push_back(arity);
    return static_cast<int>(relations.size()) - 1;
  }

  int add_node(EncodingLabel l) {
    labels.push_back(std::move(l));
    children.push_back({-1, -1});
    parent.push_back(-1);
    source_fact.push_back(-1);
    return static_cast<int>(labels.size()) - 1;
  }
  void attach(int p, int a, int b) {
    children[p] = {a, b};
    parent[a] = p;
    parent[b] = p;
  }

  // Nodes with parents before children.
  std::vector<int> preorder() const {
    std::vector<int> order{root};
    for (size_t i = 0; i < order.size(); ++i)
      if (!is_leaf(order[i]))
        for (int c : children[order[i]]) order.push_back(c);
    return order;
  }
};

inline std::string name_of(int i) { return "a" + std::to_string(i + 1); }

inline std::string label_text(const TreeEncoding& e, int n) {
  auto& l = e.labels[n];
  if (l.d == 0 && !l.has_fact()) return "(-)";
  std::string s = "({";
  bool first = true;
  for (int i = 0; i < e.names(); ++i)
    if (l.d >> i & 1u) {
      s += (first ? "" : ",") + name_of(i);
      first = false;
    }
  s += "}";
  if (l.has_fact()) {
    s += ", " + e.relations[l.rel] + "(";
    for (size_t j = 0; j < l.args.size(); ++j) s += (j ? "," : "") + name_of(l.args[j]);
    s += ")";
  }
  return s + ")";
}

struct encoding_error : error {
  using error::error;
};

// Replicates each bag once per fact, renames bag elements into D_k and pads to a full binary tree.
// When `trace` is given it receives, per node and name, the constant coded there ("" when absent).
inline TreeEncoding encode_instance(const Instance& inst, const TreeDecomposition& t, std::optional<int> k_opt = {},
                                    std::vector<std::vector<std::string>>* trace = nullptr) {
  int width = std::max(0, t.width());
  int k = k_opt ? *k_opt : width;
  if (t.width() > k) throw encoding_error("decomposition width exceeds k");
  if (2 * k + 2 > 32) throw encoding_error("width too large for the name pool");
  if (auto chk = validate_decomposition(t, inst); !chk) throw encoding_error("invalid decomposition: " + chk.reason);
  TreeEncoding e;
  e.k = k;
  for (auto& [name, info] : inst.signature().relations()) e.relation_id(name, info.arity);
  if (inst.empty()) {
    e.root = e.add_node({});
    if (trace) trace->assign(1, std::vector<std::string>(e.names()));
    return e;
  }
  size_t nb = t.size();
  // Occurrence lists for fact placement.
  std::map<std::string, std::vector<int>> where;
  for (size_t b = 0; b < nb; ++b)
    for (auto& c : t.bags[b]) where[c].push_back(static_cast<int>(b));
  std::vector<std::vector<int>> facts_at(nb);
  for (size_t fi = 0; fi < inst.size(); ++fi) {
    auto& f = inst.facts()[fi];
    auto& cand = where.at(f.args[0]);
    int chosen = -1;
    for (int b : cand) {
      bool all = true;
      for (auto& a : f.args)
        if (!std::binary_search(t.bags[b].begin(), t.bags[b].end(), a)) all = false;
      if (all) {
        chosen = b;
        break;
      }
    }
    facts_at[chosen].push_back(static_cast<int>(fi));
  }
  // Names per bag.
  auto order = t.preorder();
  auto ch = t.children();
  std::vector<std::vector<std::uint8_t>> names(nb);
  for (int b : order) {
    auto& bag = t.bags[b];
    names[b].assign(bag.size(), 0);
    std::uint32_t taken = 0, parent_used = 0;
    std::vector<char> set(bag.size(), 0);
    int p = t.parent[b];
    if (p >= 0) {
      auto& pb = t.bags[p];
      for (size_t i = 0; i < pb.size(); ++i) parent_used |= 1u << names[p][i];
      for (size_t i = 0; i < bag.size(); ++i) {
        auto it = std::lower_bound(pb.begin(), pb.end(), bag[i]);
        if (it != pb.end() && *it == bag[i]) {
          names[b][i] = names[p][it - pb.begin()];
          taken |= 1u << names[b][i];
          set[i] = 1;
        }
      }
    }
    for (size_t i = 0; i < bag.size(); ++i) {
      if (set[i]) continue;
      int nm = 0;
      while ((parent_used | taken) >> nm & 1u) ++nm;
      names[b][i] = static_cast<std::uint8_t>(nm);
      taken |= 1u << nm;
    }
  }
  auto label_for = [&](int b, int fi) {
    EncodingLabel l;
    auto& bag = t.bags[b];
    for (auto nm : names[b]) l.d |= 1u << nm;
    if (fi >= 0) {
      auto& f = inst.facts()[fi];
      l.rel = e.relation_id(f.rel, static_cast<int>(f.args.size()));
      for (auto& a : f.args) l.args.push_back(names[b][std::lower_bound(bag.begin(), bag.end(), a) - bag.begin()]);
    }
    return l;
  };
  // Build chains bottom-up so child tops exist before their parents attach them.
  std::vector<int> top(nb, -1);
  std::vector<int> bag_of_node;
  auto note = [&](int n, int b) {
    if (bag_of_node.size() <= static_cast<size_t>(n)) bag_of_node.resize(n + 1, -1);
    bag_of_node[n] = b;
    return n;
  };
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int b = *it;
    std::vector<int> chain;
    if (facts_at[b].empty()) {
      chain.push_back(note(e.add_node(label_for(b, -1)), b));
    } else {
      for (int fi : facts_at[b]) {
        int n = note(e.add_node(label_for(b, fi)), b);
        e.source_fact[n] = fi;
        chain.push_back(n);
      }
    }
    for (size_t i = 0; i + 1 < chain.size(); ++i) e.attach(chain[i], chain[i + 1], e.add_node({}));
    // Hang the children of b below the last replica, adding replicas when more than two remain.
    std::vector<int> pending;
    for (int c : ch[b]) pending.push_back(top[c]);
    int host = chain.back();
    size_t next = 0;
    while (pending.size() - next > 2) {
      int rep = note(e.add_node(label_for(b, -1)), b);
      e.attach(host, pending[next++], rep);
      host = rep;
    }
    if (pending.size() - next == 1) e.attach(host, pending[next], e.add_node({}));
    if (pending.size() - next == 2) e.attach(host, pending[next], pending[next + 1]);
    top[b] = chain.front();
  }
  e.root = top[t.root];
  if (trace) {
    bag_of_node.resize(e.size(), -1);
    trace->assign(e.size(), std::vector<std::string>(e.names()));
    for (size_t n = 0; n < e.size(); ++n) {
      int b = bag_of_node[n];
      if (b < 0) continue;
      for (size_t i = 0; i < t.bags[b].size(); ++i) (*trace)[n][names[b][i]] = t.bags[b][i];
    }
  }
  return e;
}

struct DecodedInstance {
  Instance instance;
  // Element of each name at each node (-1 when the name is absent).
  std::vector<std::vector<int>> element;
  std::vector<std::string> element_names;
};

// Elements are maximal connected occurrences of a name; fresh constants e1, e2, ...
inline DecodedInstance decode_encoding(const TreeEncoding& e) {
  DecodedInstance out;
  out.element.assign(e.size(), std::vector<int>(e.names(), -1));
  std::vector<Fact> facts;
  for (int n : e.preorder()) {
    auto& l = e.labels[n];
    int p = e.parent[n];
    for (int a = 0; a < e.names(); ++a) {
      if (!(l.d >> a & 1u)) continue;
      if (p >= 0 && (e.labels[p].d >> a & 1u)) {
        out.element[n][a] = out.element[p][a];
      } else {
        out.element[n][a] = static_cast<int>(out.element_names.size());
        out.element_names.push_back("e" + std::to_string(out.element_names.size() + 1));
      }
    }
    if (l.has_fact()) {
      Fact f{e.relations[l.rel], {}};
      for (auto a : l.args) {
        if (!(l.d >> a & 1u)) throw encoding_error("fact uses a name outside its node's domain");
        f.args.push_back(out.element_names[out.element[n][a]]);
      }
      facts.push_back(std::move(f));
    }
  }
  out.instance = Instance(std::move(facts));
  return out;
}

inline std::string to_encoding_text(const TreeEncoding& e) {
  // One node per line; internal nodes open a bracket closed after their second child.
  std::string out = "k " + std::to_string(e.k) + "\n";
  std::vector<std::pair<int, int>> stack{{e.root, 0}};
  while (!stack.empty()) {
    auto& [n, state] = stack.back();
    if (state == 0) {
      out += label_text(e, n);
      if (e.is_leaf(n)) {
        out += "\n";
        stack.pop_back();
        continue;
      }
      out += " [\n";
      state = 1;
      stack.push_back({e.children[n][0], 0});
    } else if (state == 1) {
      state = 2;
      stack.push_back({e.children[n][1], 0});
    } else {
      out += "]\n";
      stack.pop_back();
    }
  }
  return out;
}

inline TreeEncoding parse_encoding(std::string_view text) {
  detail::Lexer lx(text);
  TreeEncoding e;
  lx.expect("k");
  std::string kt = lx.until(" \t\n");
  try {
    e.k = std::stoi(kt);
  } catch (...) {
    lx.fail("bad width");
  }
  if (e.k < 0 || 2 * e.k + 2 > 32) lx.fail("width out of range");
  auto parse_name = [&]() {
    std::string nm = lx.ident();
    if (nm.size() < 2 || nm[0] != 'a') lx.fail("names are a1..a" + std::to_string(e.names()));
    int v = 0;
    for (size_t i = 1; i < nm.size(); ++i) {
      if (nm[i] < '0' || nm[i] > '9') lx.fail("bad name " + nm);
      v = v * 10 + (nm[i] - '0');
    }
    if (v < 1 || v > e.names()) lx.fail("name out of range: " + nm);
    return static_cast<std::uint8_t>(v - 1);
  };
  auto parse_label = [&]() {
    EncodingLabel l;
    lx.expect("(");
    if (lx.accept("-")) {
      lx.expect(")");
      return l;
    }
    lx.expect("{");
    if (!lx.accept("}")) {
      do l.d |= 1u << parse_name();
      while (lx.accept(","));
      lx.expect("}");
    }
    if (lx.accept(",")) {
      std::string rel = lx.ident();
      lx.expect("(");
      do l.args.push_back(parse_name());
      while (lx.accept(","));
      lx.expect(")");
      l.rel = e.relation_id(rel, static_cast<int>(l.args.size()));
      if (e.arities[l.rel] != static_cast<int>(l.args.size())) lx.fail("arity mismatch for " + rel);
      for (auto a : l.args)
        if (!(l.d >> a & 1u)) lx.fail("fact uses a name outside d");
    }
    lx.expect(")");
    return l;
  };
  // Each open node waits for two children.
  std::vector<std::pair<int, std::vector<int>>> open;
  bool have_root = false;
  while (!lx.eof()) {
    if (lx.accept("]")) {
      if (open.empty() || open.back().second.size() != 2) lx.fail("internal nodes need exactly two children");
      auto [n, kids] = open.back();
      open.pop_back();
      e.attach(n, kids[0], kids[1]);
      continue;
    }
    int n = e.add_node(parse_label());
    if (open.empty()) {
      if (have_root) lx.fail("more than one root");
      have_root = true;
      e.root = n;
    } else {
      open.back().second.push_back(n);
      if (open.back().second.size() > 2) lx.fail("internal nodes need exactly two children");
    }
    if (lx.accept("[")) open.push_back({n, {}});
  }
  if (!open.empty()) lx.fail("unclosed node");
  if (!have_root) lx.fail("empty encoding");
  return e;
}

}  // namespace icg
