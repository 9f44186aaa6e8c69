#pragma once

// Independent reference implementations used only by tests. None of these
// share code paths with the library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "member/member.hpp"

namespace oracle {

using member::Index;
using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense matmul(const Dense& a, const Dense& b) {
  Dense out = zeros(a.size(), b.empty() ? 0 : b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

// Symmetric normalized adjacency of the bipartite graph over users then items.
inline Dense normalized_adjacency(const member::BehaviorGraph& g) {
  const std::size_t n = g.num_users + g.num_items;
  Dense a = zeros(n, n);
  std::vector<double> deg(n, 0.0);
  for (const auto& e : g.edges) {
    deg[e.user] += 1;
    deg[g.num_users + e.item] += 1;
  }
  for (const auto& e : g.edges) {
    const double c = 1.0 / std::sqrt(deg[e.user] * deg[g.num_users + e.item]);
    a[e.user][g.num_users + e.item] = c;
    a[g.num_users + e.item][e.user] = c;
  }
  return a;
}

// (1/(L+1)) sum_{l=0..L} A^l X with X stacked as [users; items].
inline Dense dense_propagate(const member::BehaviorGraph& g, int layers, const Dense& x) {
  const Dense a = normalized_adjacency(g);
  Dense power = x, acc = x;
  for (int l = 1; l <= layers; ++l) {
    power = matmul(a, power);
    for (std::size_t i = 0; i < acc.size(); ++i)
      for (std::size_t j = 0; j < acc[i].size(); ++j) acc[i][j] += power[i][j];
  }
  for (auto& row : acc)
    for (auto& v : row) v /= static_cast<double>(layers + 1);
  return acc;
}

template <typename T>
Dense stack(const member::EmbeddingPair<T>& p) {
  Dense out;
  for (std::size_t r = 0; r < p.num_users(); ++r) {
    const auto row = p.users.row(r);
    out.emplace_back(row.begin(), row.end());
  }
  for (std::size_t r = 0; r < p.num_items(); ++r) {
    const auto row = p.items.row(r);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

// Rank (1-based) of target among pool items by explicit sort on
// (-score, id). Returns 0 when target is not in the pool.
inline std::size_t brute_rank(Index target, const std::vector<double>& scores, const std::vector<char>& pool) {
  std::vector<std::pair<double, Index>> entries;
  for (Index i = 0; i < scores.size(); ++i)
    if (pool[i]) entries.emplace_back(-scores[i], i);
  std::sort(entries.begin(), entries.end());
  for (std::size_t k = 0; k < entries.size(); ++k)
    if (entries[k].second == target) return k + 1;
  return 0;
}

inline double brute_hr(std::size_t rank, int k) { return rank >= 1 && rank <= static_cast<std::size_t>(k) ? 1.0 : 0.0; }
inline double brute_ndcg(std::size_t rank, int k) {
  return rank >= 1 && rank <= static_cast<std::size_t>(k) ? 1.0 / std::log2(1.0 + static_cast<double>(rank)) : 0.0;
}

using EdgeSet = std::set<std::pair<Index, Index>>;

inline EdgeSet edges_of(const member::InteractionLog& log, std::function<bool(Index)> keep_behavior) {
  EdgeSet s;
  for (const auto& r : log.records)
    if (keep_behavior(r.behavior)) s.emplace(r.user, r.item);
  return s;
}

inline EdgeSet edges_of(const member::BehaviorGraph& g) {
  EdgeSet s;
  for (const auto& e : g.edges) s.emplace(e.user, e.item);
  return s;
}

// Central finite difference of f at x along coordinate k.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

inline member::InteractionLog parse(const std::string& text, std::vector<std::string> behaviors = {"click", "cart",
                                                                                                   "buy"}) {
  std::istringstream in(text);
  return member::parse_interactions(in, member::Schema{std::move(behaviors)});
}

}  // namespace oracle

namespace fixture {

// Random training log where every user buys at least once and every item is
// touched, plus graphs and plans over it.
struct Toy {
  member::InteractionLog log;
  member::TrainingGraphs graphs;
  member::PlanSet plans;

  static Toy make(std::uint64_t seed, std::size_t users, std::size_t items, std::size_t extra,
                  std::vector<std::string> behaviors = {"click", "cart", "buy"}, int layers = 2) {
    member::CounterRng rng(seed);
    std::ostringstream text;
    for (std::size_t u = 0; u < users; ++u) text << 'u' << u << "\ti" << (u % items) << "\tbuy\n";
    for (std::size_t i = 0; i < items; ++i) text << 'u' << (i % users) << "\ti" << i << '\t' << behaviors[0] << '\n';
    for (std::size_t k = 0; k < extra; ++k)
      text << 'u' << rng.uniform_index(users) << "\ti" << rng.uniform_index(items) << '\t'
           << behaviors[rng.uniform_index(behaviors.size())] << '\n';
    Toy t;
    t.log = oracle::parse(text.str(), behaviors);
    t.graphs = member::TrainingGraphs::build(t.log);
    t.plans = member::PlanSet(t.graphs, layers);
    return t;
  }
};

template <typename T = double>
member::ExpertParams<T> random_expert(member::ExpertRole role, std::size_t nu, std::size_t ni, std::size_t d,
                                      double lambda, member::CounterRng rng) {
  auto p = member::ExpertParams<T>::xavier(role, nu, ni, d, lambda, rng);
  for (auto* m : p.tables())
    for (auto& v : m->flat()) v = static_cast<T>(rng.uniform(-1, 1));
  return p;
}

}  // namespace fixture
