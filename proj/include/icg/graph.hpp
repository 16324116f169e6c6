#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace icg {

// Compressed adjacency lists.
struct Csr {
  std::vector<std::uint32_t> offset{0};
  std::vector<std::uint32_t> target;

  size_t size() const { return offset.size() - 1; }
  const std::uint32_t* begin(size_t v) const { return target.data() + offset[v]; }
  const std::uint32_t* end(size_t v) const { return target.data() + offset[v + 1]; }
  size_t degree(size_t v) const { return offset[v + 1] - offset[v]; }

  static Csr from_edges(size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
    Csr g;
    g.offset.assign(n + 1, 0);
    for (auto& e : edges) ++g.offset[e.first + 1];
    for (size_t i = 0; i < n; ++i) g.offset[i + 1] += g.offset[i];
    g.target.resize(edges.size());
    std::vector<std::uint32_t> fill(g.offset.begin(), g.offset.end() - 1);
    for (auto& e : edges) g.target[fill[e.first]++] = e.second;
    return g;
  }
};

struct SccResult {
  std::vector<std::uint32_t> component;  // vertex -> component id
  // Components are numbered in reverse topological order: edges go from higher ids to lower or equal.
  size_t count = 0;
};

// Iterative Tarjan.
inline SccResult strongly_connected_components(const Csr& g) {
  const size_t n = g.size();
  const std::uint32_t unvisited = UINT32_MAX;
  SccResult r;
  r.component.assign(n, unvisited);
  std::vector<std::uint32_t> index(n, unvisited), low(n, 0), stack;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> call;  // vertex, next edge offset
  std::vector<char> on_stack(n, 0);
  std::uint32_t counter = 0;
  for (std::uint32_t s = 0; s < n; ++s) {
    if (index[s] != unvisited) continue;
    call.push_back({s, g.offset[s]});
    index[s] = low[s] = counter++;
    stack.push_back(s);
    on_stack[s] = 1;
    while (!call.empty()) {
      auto& [v, e] = call.back();
      if (e < g.offset[v + 1]) {
        std::uint32_t w = g.target[e++];
        if (index[w] == unvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, g.offset[w]});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      std::uint32_t done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
      if (low[done] == index[done]) {
        std::uint32_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          r.component[w] = static_cast<std::uint32_t>(r.count);
        } while (w != done);
        ++r.count;
      }
    }
  }
  return r;
}

}  // namespace icg
