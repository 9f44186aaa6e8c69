#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "member/interactions.hpp"
#include "member/propagation.hpp"
#include "member/random.hpp"

namespace member {

enum class ExpertRole { visited, unvisited };

// hard: visited items take the visited expert, the rest the unvisited one.
// average: ablation toggle, mean of both.
enum class Gate { hard, average };

inline std::string_view to_string(ExpertRole r) { return r == ExpertRole::visited ? "visited" : "unvisited"; }

// Propagation plans keyed by graph label: every behavior name plus
// "global", "V" and "R".
class PlanSet {
 public:
  PlanSet() = default;

  PlanSet(const TrainingGraphs& graphs, int layers) : behaviors_(graphs.behaviors) {
    for (const auto& g : graphs.behavior_graphs) insert(prepare(g, layers));
    insert(prepare(graphs.global, layers));
    insert(prepare(graphs.visited_purchases, layers));
    insert(prepare(graphs.remaining, layers));
  }

  void insert(PropagationPlan plan) {
    auto label = plan.label;
    plans_.insert_or_assign(std::move(label), std::move(plan));
  }
  void erase(std::string_view label) {
    if (auto it = plans_.find(label); it != plans_.end()) plans_.erase(it);
  }
  void set_behaviors(std::vector<std::string> behaviors) { behaviors_ = std::move(behaviors); }

  bool contains(std::string_view label) const { return plans_.find(label) != plans_.end(); }

  const PropagationPlan& at(std::string_view label) const {
    auto it = plans_.find(label);
    if (it == plans_.end()) throw SchemaError("no propagation plan for graph '" + std::string(label) + "'");
    return it->second;
  }

  const std::vector<std::string>& behaviors() const { return behaviors_; }

 private:
  std::vector<std::string> behaviors_;
  std::map<std::string, PropagationPlan, std::less<>> plans_;
};

template <typename T>
Matrix<T> xavier_uniform(std::size_t rows, std::size_t cols, CounterRng& rng) {
  Matrix<T> m(rows, cols);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (auto& v : m.flat()) v = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

// The four trainable tables of one expert plus its mixing coefficient.
template <typename T>
struct ExpertParams {
  ExpertRole role = ExpertRole::visited;
  EmbeddingPair<T> global_init;
  EmbeddingPair<T> local_init;  // shared across all behavior graphs
  double lambda = 0.5;
  std::uint64_t version = 0;

  static ExpertParams xavier(ExpertRole role, std::size_t num_users, std::size_t num_items, std::size_t dim,
                             double lambda, CounterRng rng) {
    ExpertParams p;
    p.role = role;
    p.lambda = lambda;
    p.global_init = {xavier_uniform<T>(num_users, dim, rng), xavier_uniform<T>(num_items, dim, rng)};
    p.local_init = {xavier_uniform<T>(num_users, dim, rng), xavier_uniform<T>(num_items, dim, rng)};
    p.validate();
    return p;
  }

  void validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("expert lambda must lie in (0, 1)");
    if (!global_init.same_shape(local_init)) throw DimensionError("global and local tables differ in shape");
  }

  // Tables in checkpoint order.
  std::vector<const Matrix<T>*> tables() const {
    return {&global_init.users, &global_init.items, &local_init.users, &local_init.items};
  }
  std::vector<Matrix<T>*> tables() {
    return {&global_init.users, &global_init.items, &local_init.users, &local_init.items};
  }

  bool operator==(const ExpertParams&) const = default;
};

// Snapshot of every view one expert produces from one parameter version.
template <typename T>
struct EncodedExpert {
  ExpertRole role = ExpertRole::visited;
  std::uint64_t version = 0;
  EmbeddingPair<T> global;                     // f(global init, E_global)
  EmbeddingPair<T> local;                      // mean of per_behavior
  std::vector<EmbeddingPair<T>> per_behavior;  // f(local init, E_m)
  EmbeddingPair<T> partition;                  // V-view or R-view
};

// The V-view reads the visited expert's local init while the R-view reads
// the unvisited expert's global init.
inline std::string_view partition_label(ExpertRole role) {
  return role == ExpertRole::visited ? kVisitedPurchaseLabel : kRemainingLabel;
}

template <typename T>
EncodedExpert<T> encode(const ExpertParams<T>& params, const PlanSet& plans) {
  const auto& behaviors = plans.behaviors();
  if (behaviors.empty()) throw SchemaError("plan set declares no behaviors");
  const auto& global_plan = plans.at(kGlobalLabel);
  const auto& partition_plan = plans.at(partition_label(params.role));
  std::vector<const PropagationPlan*> behavior_plans;
  for (const auto& b : behaviors) behavior_plans.push_back(&plans.at(b));

  EncodedExpert<T> enc;
  enc.role = params.role;
  enc.version = params.version;
  enc.global = propagate(global_plan, params.global_init);

  const auto nu = params.local_init.num_users(), ni = params.local_init.num_items(), d = params.local_init.dim();
  EmbeddingPair<double> mean(nu, ni, d);
  const double w = 1.0 / static_cast<double>(behaviors.size());
  for (const auto* plan : behavior_plans) {
    enc.per_behavior.push_back(propagate(*plan, params.local_init));
    axpy(w, enc.per_behavior.back().users.flat(), mean.users.flat());
    axpy(w, enc.per_behavior.back().items.flat(), mean.items.flat());
  }
  enc.local = mean.template cast<T>();
  enc.partition = propagate(partition_plan,
                            params.role == ExpertRole::visited ? params.local_init : params.global_init);
  return enc;
}

namespace detail {

template <typename T>
void check_pair(const EncodedExpert<T>& enc, Index u, Index i) {
  if (u >= enc.global.num_users()) throw IndexError("user index " + std::to_string(u) + " out of range");
  if (i >= enc.global.num_items()) throw IndexError("item index " + std::to_string(i) + " out of range");
}

}  // namespace detail

// s_ui = lambda <E_u^global, H_i^global> + (1 - lambda) <E_u^local, H_i^local>
template <typename T>
double score(const EncodedExpert<T>& enc, double lambda, Index u, Index i) {
  detail::check_pair(enc, u, i);
  return lambda * dot(enc.global.users.row(u), enc.global.items.row(i)) +
         (1.0 - lambda) * dot(enc.local.users.row(u), enc.local.items.row(i));
}

// Batched form: one user against an item slate.
template <typename T>
void score_items(const EncodedExpert<T>& enc, double lambda, Index u, std::span<const Index> items,
                 std::span<double> out) {
  if (items.size() != out.size()) throw DimensionError("score slate and output differ in length");
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = score(enc, lambda, u, items[k]);
}

// Scores against every item; out.size() must equal the item count.
template <typename T>
void score_all(const EncodedExpert<T>& enc, double lambda, Index u, std::span<double> out) {
  if (out.size() != enc.global.num_items()) throw DimensionError("score buffer size mismatch");
  if (u >= enc.global.num_users()) throw IndexError("user index " + std::to_string(u) + " out of range");
  const auto eg = enc.global.users.row(u);
  const auto el = enc.local.users.row(u);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = lambda * dot(eg, enc.global.items.row(i)) + (1.0 - lambda) * dot(el, enc.local.items.row(i));
}

struct Lambdas {
  double visited = 0.5;
  double unvisited = 0.5;
};

// s*_ui: the visited expert's score if i was visited by u, otherwise the
// unvisited expert's. Exactly one expert is evaluated.
template <typename T>
double gated_score(const EncodedExpert<T>& visited_enc, const EncodedExpert<T>& unvisited_enc, Lambdas lambdas,
                   const VisitedIndex& index, Index u, Index i, Gate gate = Gate::hard) {
  if (gate == Gate::average)
    return 0.5 * (score(visited_enc, lambdas.visited, u, i) + score(unvisited_enc, lambdas.unvisited, u, i));
  return index.visited(u, i) ? score(visited_enc, lambdas.visited, u, i)
                             : score(unvisited_enc, lambdas.unvisited, u, i);
}

}  // namespace member
