#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "member/interactions.hpp"
#include "member/matrix.hpp"

namespace member {

// Degree-normalized bipartite operator of one graph, stored twice (by user
// and by item) so propagation gathers along one layout and the adjoint
// scatters along the other.
struct PropagationPlan {
  std::string label;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  int layers = 0;

  std::vector<std::size_t> user_offsets;  // CSR user -> items
  std::vector<Index> user_items;
  std::vector<double> user_coef;

  std::vector<std::size_t> item_offsets;  // CSR item -> users
  std::vector<Index> item_users;
  std::vector<double> item_coef;

  std::size_t num_edges() const { return user_items.size(); }

  // Coefficient 1/sqrt(|N_u| |N_i|) of edge (u, i), or 0 if absent.
  double coefficient(Index u, Index i) const {
    for (auto k = user_offsets[u]; k < user_offsets[u + 1]; ++k)
      if (user_items[k] == i) return user_coef[k];
    return 0.0;
  }
};

inline PropagationPlan prepare(const BehaviorGraph& graph, int layers) {
  if (layers < 0) throw ConfigError("layer count must be non-negative");
  PropagationPlan plan;
  plan.label = graph.label;
  plan.num_users = graph.num_users;
  plan.num_items = graph.num_items;
  plan.layers = layers;

  const auto coef = [&](const Edge& e) {
    return 1.0 / std::sqrt(static_cast<double>(graph.user_degrees[e.user]) *
                           static_cast<double>(graph.item_degrees[e.item]));
  };

  // graph.edges is sorted by (user, item): user CSR is a straight copy.
  plan.user_offsets.assign(graph.num_users + 1, 0);
  for (const auto& e : graph.edges) ++plan.user_offsets[e.user + 1];
  for (std::size_t u = 0; u < graph.num_users; ++u) plan.user_offsets[u + 1] += plan.user_offsets[u];
  plan.user_items.reserve(graph.num_edges());
  plan.user_coef.reserve(graph.num_edges());
  for (const auto& e : graph.edges) {
    plan.user_items.push_back(e.item);
    plan.user_coef.push_back(coef(e));
  }

  plan.item_offsets.assign(graph.num_items + 1, 0);
  for (const auto& e : graph.edges) ++plan.item_offsets[e.item + 1];
  for (std::size_t i = 0; i < graph.num_items; ++i) plan.item_offsets[i + 1] += plan.item_offsets[i];
  plan.item_users.resize(graph.num_edges());
  plan.item_coef.resize(graph.num_edges());
  std::vector<std::size_t> cursor(plan.item_offsets.begin(), plan.item_offsets.end() - 1);
  for (const auto& e : graph.edges) {
    const auto slot = cursor[e.item]++;
    plan.item_users[slot] = e.user;
    plan.item_coef[slot] = coef(e);
  }
  return plan;
}

namespace detail {

template <typename T>
void check_dims(const PropagationPlan& plan, const EmbeddingPair<T>& x) {
  if (x.num_users() != plan.num_users || x.num_items() != plan.num_items)
    throw DimensionError("embedding tables (" + std::to_string(x.num_users()) + ", " +
                         std::to_string(x.num_items()) + ") do not match graph '" + plan.label + "' (" +
                         std::to_string(plan.num_users) + ", " + std::to_string(plan.num_items) + ")");
}

}  // namespace detail

// LightGCN encoding: mean over layers 0..L of repeated neighbor aggregation.
// Accumulates in double regardless of T.
template <typename T>
EmbeddingPair<T> propagate(const PropagationPlan& plan, const EmbeddingPair<T>& init) {
  detail::check_dims(plan, init);
  const auto d = init.dim();
  EmbeddingPair<double> layer = init.template cast<double>();
  EmbeddingPair<double> sum = layer;
  EmbeddingPair<double> next(plan.num_users, plan.num_items, d);

  for (int l = 0; l < plan.layers; ++l) {
    next.set_zero();
    for (std::size_t u = 0; u < plan.num_users; ++u) {
      auto out = next.users.row(u);
      for (auto k = plan.user_offsets[u]; k < plan.user_offsets[u + 1]; ++k)
        axpy(plan.user_coef[k], layer.items.row(plan.user_items[k]), out);
    }
    for (std::size_t i = 0; i < plan.num_items; ++i) {
      auto out = next.items.row(i);
      for (auto k = plan.item_offsets[i]; k < plan.item_offsets[i + 1]; ++k)
        axpy(plan.item_coef[k], layer.users.row(plan.item_users[k]), out);
    }
    std::swap(layer, next);
    axpy(1.0, layer.users.flat(), sum.users.flat());
    axpy(1.0, layer.items.flat(), sum.items.flat());
  }

  const double scale = 1.0 / (plan.layers + 1);
  EmbeddingPair<T> out(plan.num_users, plan.num_items, d);
  for (std::size_t k = 0; k < sum.users.size(); ++k) out.users.flat()[k] = static_cast<T>(scale * sum.users.flat()[k]);
  for (std::size_t k = 0; k < sum.items.size(); ++k) out.items.flat()[k] = static_cast<T>(scale * sum.items.flat()[k]);
  return out;
}

// Adjoint of propagate: maps d(loss)/d(output) to d(loss)/d(init). Written
// as the transposed (scatter) traversal rather than a call to propagate, so
// the symmetry of the operator is something tests can check, not assume.
inline EmbeddingPair<double> transport_gradient(const PropagationPlan& plan, const EmbeddingPair<double>& out_grad) {
  detail::check_dims(plan, out_grad);
  const auto d = out_grad.dim();
  EmbeddingPair<double> layer = out_grad;
  EmbeddingPair<double> sum = layer;
  EmbeddingPair<double> next(plan.num_users, plan.num_items, d);

  for (int l = 0; l < plan.layers; ++l) {
    next.set_zero();
    // E_u = sum_i c_ui H_i  =>  dH_i += c_ui dE_u
    for (std::size_t u = 0; u < plan.num_users; ++u) {
      const auto g = layer.users.row(u);
      for (auto k = plan.user_offsets[u]; k < plan.user_offsets[u + 1]; ++k)
        axpy(plan.user_coef[k], g, next.items.row(plan.user_items[k]));
    }
    // H_i = sum_u c_ui E_u  =>  dE_u += c_ui dH_i
    for (std::size_t i = 0; i < plan.num_items; ++i) {
      const auto g = layer.items.row(i);
      for (auto k = plan.item_offsets[i]; k < plan.item_offsets[i + 1]; ++k)
        axpy(plan.item_coef[k], g, next.users.row(plan.item_users[k]));
    }
    std::swap(layer, next);
    axpy(1.0, layer.users.flat(), sum.users.flat());
    axpy(1.0, layer.items.flat(), sum.items.flat());
  }

  const double scale = 1.0 / (plan.layers + 1);
  for (auto& v : sum.users.flat()) v *= scale;
  for (auto& v : sum.items.flat()) v *= scale;
  return sum;
}

}  // namespace member
