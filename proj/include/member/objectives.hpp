#pragma once

// Losses of the two-expert model and their exact gradients with respect to
// each expert's four initial embedding tables.
//
// Gradients are produced in two stages: every loss first accumulates its
// derivative with respect to the encoded views (ViewGradients), then
// backpropagate() pushes those through the adjoint of each propagation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "member/expert.hpp"
#include "member/matrix.hpp"

namespace member {

struct Triplet {
  Index user = 0;
  Index pos = 0;
  Index neg = 0;
  bool operator==(const Triplet&) const = default;
};

enum class CosineMode {
  strict,   // zero-norm row is an error
  floored,  // norms clamped below at kNormFloor
};

inline constexpr double kNormFloor = 1e-12;

struct LossWeights {
  double gamma1 = 0.1;     // visit-filtering contrastive
  double gamma2 = 0.1;     // novelty-inferring contrastive
  double gamma3 = 0.1;     // behavior-generative
  double tau = 0.2;        // visited expert temperature
  double tau_prime = 0.2;  // unvisited expert temperature
};

struct LossBreakdown {
  double bpr = 0.0;
  double cl_visited = 0.0;
  double cl_unvisited = 0.0;
  double gen = 0.0;
  double total_visited_objective = 0.0;
  double total_unvisited_objective = 0.0;

  void finalize(const LossWeights& w) {
    total_visited_objective = bpr + w.gamma1 * cl_visited;
    total_unvisited_objective = bpr + w.gamma2 * cl_unvisited + w.gamma3 * gen;
  }

  bool finite() const {
    return std::isfinite(bpr) && std::isfinite(cl_visited) && std::isfinite(cl_unvisited) && std::isfinite(gen) &&
           std::isfinite(total_visited_objective) && std::isfinite(total_unvisited_objective);
  }

  // Name of the first non-finite component, for diagnostics.
  std::string_view first_nonfinite() const {
    if (!std::isfinite(bpr)) return "bpr";
    if (!std::isfinite(cl_visited)) return "cl_v";
    if (!std::isfinite(cl_unvisited)) return "cl_u";
    if (!std::isfinite(gen)) return "gen";
    if (!std::isfinite(total_visited_objective)) return "objective_v";
    if (!std::isfinite(total_unvisited_objective)) return "objective_u";
    return "";
  }
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Derivative of a loss with respect to one expert's encoded views.
struct ViewGradients {
  EmbeddingPair<double> global;
  EmbeddingPair<double> local;
  EmbeddingPair<double> partition;
  std::vector<EmbeddingPair<double>> per_behavior;

  ViewGradients() = default;
  ViewGradients(std::size_t num_users, std::size_t num_items, std::size_t dim, std::size_t num_behaviors)
      : global(num_users, num_items, dim),
        local(num_users, num_items, dim),
        partition(num_users, num_items, dim),
        per_behavior(num_behaviors, EmbeddingPair<double>(num_users, num_items, dim)) {}

  template <typename T>
  static ViewGradients like(const EncodedExpert<T>& enc) {
    return ViewGradients(enc.global.num_users(), enc.global.num_items(), enc.global.dim(), enc.per_behavior.size());
  }
};

// Gradient tables mirroring one expert's parameters.
struct ExpertGradients {
  EmbeddingPair<double> global_init;
  EmbeddingPair<double> local_init;

  ExpertGradients() = default;
  ExpertGradients(std::size_t num_users, std::size_t num_items, std::size_t dim)
      : global_init(num_users, num_items, dim), local_init(num_users, num_items, dim) {}

  void set_zero() {
    global_init.set_zero();
    local_init.set_zero();
  }

  bool all_zero() const {
    for (const auto* m : tables())
      for (double v : m->flat())
        if (v != 0.0) return false;
    return true;
  }

  std::vector<const Matrix<double>*> tables() const {
    return {&global_init.users, &global_init.items, &local_init.users, &local_init.items};
  }
  std::vector<Matrix<double>*> tables() {
    return {&global_init.users, &global_init.items, &local_init.users, &local_init.items};
  }
};

// Per-step gradient storage for both experts.
class GradAccumulator {
 public:
  GradAccumulator() = default;
  GradAccumulator(std::size_t num_users, std::size_t num_items, std::size_t dim)
      : visited_(num_users, num_items, dim), unvisited_(num_users, num_items, dim) {}

  ExpertGradients& expert(ExpertRole r) { return r == ExpertRole::visited ? visited_ : unvisited_; }
  const ExpertGradients& expert(ExpertRole r) const { return r == ExpertRole::visited ? visited_ : unvisited_; }

  void set_zero() {
    visited_.set_zero();
    unvisited_.set_zero();
  }

 private:
  ExpertGradients visited_;
  ExpertGradients unvisited_;
};

namespace detail {

// d s_ui / d views, scaled by coeff, added into vg.
template <typename T>
void add_score_gradient(ViewGradients& vg, const EncodedExpert<T>& enc, double lambda, Index u, Index i,
                        double coeff) {
  axpy(coeff * lambda, enc.global.items.row(i), vg.global.users.row(u));
  axpy(coeff * lambda, enc.global.users.row(u), vg.global.items.row(i));
  axpy(coeff * (1.0 - lambda), enc.local.items.row(i), vg.local.users.row(u));
  axpy(coeff * (1.0 - lambda), enc.local.users.row(u), vg.local.items.row(i));
}

}  // namespace detail

// Mean over triplets of -log sigma(s*_u,pos - s*_u,neg) under the gate.
// A null gradient sink masks that expert out: its share of the derivative
// is dropped, which is how each expert's objective sees only its own
// parameters.
template <typename T>
double bpr_loss(std::span<const Triplet> triplets, const EncodedExpert<T>& visited_enc,
                const EncodedExpert<T>& unvisited_enc, Lambdas lambdas, const VisitedIndex& index, Gate gate,
                ViewGradients* visited_grad = nullptr, ViewGradients* unvisited_grad = nullptr,
                double weight = 1.0) {
  if (triplets.empty()) throw EmptyInputError("BPR batch is empty");
  const double n = static_cast<double>(triplets.size());

  auto route = [&](Index u, Index i, double coeff) {
    if (gate == Gate::average) {
      if (visited_grad) detail::add_score_gradient(*visited_grad, visited_enc, lambdas.visited, u, i, 0.5 * coeff);
      if (unvisited_grad)
        detail::add_score_gradient(*unvisited_grad, unvisited_enc, lambdas.unvisited, u, i, 0.5 * coeff);
    } else if (index.visited(u, i)) {
      if (visited_grad) detail::add_score_gradient(*visited_grad, visited_enc, lambdas.visited, u, i, coeff);
    } else {
      if (unvisited_grad) detail::add_score_gradient(*unvisited_grad, unvisited_enc, lambdas.unvisited, u, i, coeff);
    }
  };

  double total = 0.0;
  for (const auto& t : triplets) {
    const double x = gated_score(visited_enc, unvisited_enc, lambdas, index, t.user, t.pos, gate) -
                     gated_score(visited_enc, unvisited_enc, lambdas, index, t.user, t.neg, gate);
    total += softplus(-x);
    if (visited_grad || unvisited_grad) {
      const double g = -sigmoid(-x) * weight / n;  // d loss / d x
      route(t.user, t.pos, g);
      route(t.user, t.neg, -g);
    }
  }
  return total / n;
}

// Mean over anchors k in `batch` of
//   -log( exp(cos(a_k, b_k)/tau) / sum_{k' in batch} exp(cos(a_k, b_k')/tau) ).
template <typename T>
double info_nce(const Matrix<T>& anchor, const Matrix<T>& positive, std::span<const Index> batch, double tau,
                CosineMode mode = CosineMode::strict, Matrix<double>* anchor_grad = nullptr,
                Matrix<double>* positive_grad = nullptr, double weight = 1.0) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (batch.empty()) throw EmptyInputError("contrastive batch is empty");
  if (!anchor.same_shape(positive)) throw DimensionError("contrastive views differ in shape");
  const std::size_t n = batch.size(), d = anchor.cols();

  // Unit rows and norms of both views restricted to the batch.
  Matrix<double> a_hat(n, d), b_hat(n, d);
  std::vector<double> a_norm(n), b_norm(n);
  auto normalize = [&](const Matrix<T>& src, Matrix<double>& dst, std::vector<double>& norms) {
    for (std::size_t k = 0; k < n; ++k) {
      if (batch[k] >= src.rows()) throw IndexError("contrastive batch index out of range");
      const auto row = src.row(batch[k]);
      double nrm = norm(row);
      if (nrm == 0.0 && mode == CosineMode::strict)
        throw NumericError("cosine undefined: zero-norm embedding row " + std::to_string(batch[k]));
      nrm = std::max(nrm, kNormFloor);
      norms[k] = nrm;
      for (std::size_t c = 0; c < d; ++c) dst(k, c) = static_cast<double>(row[c]) / nrm;
    }
  };
  normalize(anchor, a_hat, a_norm);
  normalize(positive, b_hat, b_norm);

  const bool want_grad = anchor_grad || positive_grad;
  Matrix<double> cosines(n, n);
  std::vector<double> probs(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      cosines(k, j) = dot(a_hat.row(k), b_hat.row(j));
      peak = std::max(peak, cosines(k, j) / tau);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(cosines(k, j) / tau - peak);
    total += -(cosines(k, k) / tau - peak) + std::log(denom);
    if (!want_grad) continue;

    for (std::size_t j = 0; j < n; ++j) probs[j] = std::exp(cosines(k, j) / tau - peak) / denom;
    for (std::size_t j = 0; j < n; ++j) {
      // d loss / d cos(a_k, b_j)
      const double g = weight * (probs[j] - (j == k ? 1.0 : 0.0)) / (tau * static_cast<double>(n));
      if (g == 0.0) continue;
      const double c = cosines(k, j);
      const bool a_floored = a_norm[k] == kNormFloor, b_floored = b_norm[j] == kNormFloor;
      if (anchor_grad) {
        // d cos / d a = (b_hat - c a_hat) / |a|
        auto out = anchor_grad->row(batch[k]);
        for (std::size_t q = 0; q < d; ++q)
          out[q] += g * (b_hat(j, q) - (a_floored ? 0.0 : c * a_hat(k, q))) / a_norm[k];
      }
      if (positive_grad) {
        auto out = positive_grad->row(batch[j]);
        for (std::size_t q = 0; q < d; ++q)
          out[q] += g * (a_hat(k, q) - (b_floored ? 0.0 : c * b_hat(j, q))) / b_norm[j];
      }
    }
  }
  return total / static_cast<double>(n);
}

// Visit-filtering contrastive loss of the visited expert: full local view
// against the view encoded on visited purchases, averaged over the user and
// item sides.
template <typename T>
double cl_visited(const EncodedExpert<T>& enc, double tau, std::span<const Index> users, std::span<const Index> items,
                  CosineMode mode = CosineMode::strict, ViewGradients* grad = nullptr, double weight = 1.0) {
  if (enc.role != ExpertRole::visited) throw SchemaError("cl_visited needs the visited expert's encoding");
  const double user_loss = info_nce(enc.local.users, enc.partition.users, users, tau, mode,
                                    grad ? &grad->local.users : nullptr, grad ? &grad->partition.users : nullptr,
                                    0.5 * weight);
  const double item_loss = info_nce(enc.local.items, enc.partition.items, items, tau, mode,
                                    grad ? &grad->local.items : nullptr, grad ? &grad->partition.items : nullptr,
                                    0.5 * weight);
  return 0.5 * (user_loss + item_loss);
}

// Novelty-inferring contrastive loss of the unvisited expert: full global
// view against the view encoded on the remaining edges. The item-side
// denominator runs over items.
template <typename T>
double cl_unvisited(const EncodedExpert<T>& enc, double tau_prime, std::span<const Index> users,
                    std::span<const Index> items, CosineMode mode = CosineMode::strict,
                    ViewGradients* grad = nullptr, double weight = 1.0) {
  if (enc.role != ExpertRole::unvisited) throw SchemaError("cl_unvisited needs the unvisited expert's encoding");
  const double user_loss = info_nce(enc.global.users, enc.partition.users, users, tau_prime, mode,
                                    grad ? &grad->global.users : nullptr, grad ? &grad->partition.users : nullptr,
                                    0.5 * weight);
  const double item_loss = info_nce(enc.global.items, enc.partition.items, items, tau_prime, mode,
                                    grad ? &grad->global.items : nullptr, grad ? &grad->partition.items : nullptr,
                                    0.5 * weight);
  return 0.5 * (user_loss + item_loss);
}

// Supervision targets of one user in one (earlier) behavior m.
struct UserTargets {
  Index user = 0;
  std::vector<Index> positives;  // items of I_u^(m)
  std::vector<Index> negatives;  // sampled outside I_u^(m)
};

// Indexed by target behavior m in funnel order.
struct GenerativeBatch {
  std::vector<std::vector<UserTargets>> by_behavior;
};

inline std::size_t ordered_pair_count(std::size_t num_behaviors) {
  return num_behaviors < 2 ? 0 : num_behaviors * (num_behaviors - 1) / 2;
}

// Behavior-generative loss: for each pair m before n in funnel order,
// binary cross-entropy of sigma(<E_u^(n), H_i^(n)>) against the edges of
// behavior m. Each user's terms are averaged, users are averaged within a
// pair, and pairs are combined with weight 2 / (|M| (|M| - 1)).
template <typename T>
double generative_loss(const EncodedExpert<T>& enc, const GenerativeBatch& batch, ViewGradients* grad = nullptr,
                       double weight = 1.0) {
  const std::size_t num_behaviors = enc.per_behavior.size();
  if (num_behaviors < 2) throw SchemaError("generative loss needs at least two behaviors");
  if (batch.by_behavior.size() != num_behaviors) throw DimensionError("generative batch covers wrong behavior count");
  const double pair_weight = 1.0 / static_cast<double>(ordered_pair_count(num_behaviors));

  double total = 0.0;
  for (std::size_t m = 0; m < num_behaviors; ++m) {
    const auto& targets = batch.by_behavior[m];
    std::size_t active = 0;
    for (const auto& t : targets) active += t.positives.empty() ? 0 : 1;
    if (active == 0) continue;
    for (std::size_t n = m + 1; n < num_behaviors; ++n) {
      const auto& view = enc.per_behavior[n];
      double pair_loss = 0.0;
      for (const auto& t : targets) {
        if (t.positives.empty()) continue;
        const double terms = static_cast<double>(t.positives.size() + t.negatives.size());
        const double coeff = weight * pair_weight / (static_cast<double>(active) * terms);
        const auto eu = view.users.row(t.user);
        double user_loss = 0.0;
        auto accumulate = [&](Index i, bool positive) {
          const double s = dot(eu, view.items.row(i));
          user_loss += positive ? softplus(-s) : softplus(s);
          if (grad) {
            const double g = coeff * (positive ? sigmoid(s) - 1.0 : sigmoid(s));
            axpy(g, view.items.row(i), grad->per_behavior[n].users.row(t.user));
            axpy(g, eu, grad->per_behavior[n].items.row(i));
          }
        };
        for (Index i : t.positives) accumulate(i, true);
        for (Index j : t.negatives) accumulate(j, false);
        pair_loss += user_loss / terms;
      }
      total += pair_weight * pair_loss / static_cast<double>(active);
    }
  }
  return total;
}

// Transports view gradients of one expert back to its initial tables.
// The local view is the mean over behavior views, so each behavior graph
// receives 1/|M| of its gradient plus any direct per-behavior gradient.
inline ExpertGradients backpropagate(const ViewGradients& vg, const PlanSet& plans, ExpertRole role) {
  const auto& behaviors = plans.behaviors();
  ExpertGradients out;
  out.global_init = transport_gradient(plans.at(kGlobalLabel), vg.global);
  out.local_init = EmbeddingPair<double>(vg.local.num_users(), vg.local.num_items(), vg.local.dim());
  const double w = 1.0 / static_cast<double>(behaviors.size());
  for (std::size_t m = 0; m < behaviors.size(); ++m) {
    EmbeddingPair<double> g = vg.per_behavior.at(m);
    axpy(w, vg.local.users.flat(), g.users.flat());
    axpy(w, vg.local.items.flat(), g.items.flat());
    const auto back = transport_gradient(plans.at(behaviors[m]), g);
    axpy(1.0, back.users.flat(), out.local_init.users.flat());
    axpy(1.0, back.items.flat(), out.local_init.items.flat());
  }
  const auto back = transport_gradient(plans.at(partition_label(role)), vg.partition);
  auto& target = role == ExpertRole::visited ? out.local_init : out.global_init;
  axpy(1.0, back.users.flat(), target.users.flat());
  axpy(1.0, back.items.flat(), target.items.flat());
  return out;
}

// Distinct users and items touched by a triplet batch; these form the
// contrastive batches.
inline std::pair<std::vector<Index>, std::vector<Index>> batch_entities(std::span<const Triplet> triplets) {
  std::vector<Index> users, items;
  for (const auto& t : triplets) {
    users.push_back(t.user);
    items.push_back(t.pos);
    items.push_back(t.neg);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return {std::move(users), std::move(items)};
}

// Everything one objective evaluation reads. Encodings must come from the
// referenced parameters' current version.
template <typename T>
struct ObjectiveInputs {
  const ExpertParams<T>* visited_params = nullptr;
  const ExpertParams<T>* unvisited_params = nullptr;
  const EncodedExpert<T>* visited = nullptr;
  const EncodedExpert<T>* unvisited = nullptr;
  const PlanSet* plans = nullptr;
  const VisitedIndex* index = nullptr;
  std::span<const Triplet> triplets;
  std::span<const Index> cl_users;
  std::span<const Index> cl_items;
  const GenerativeBatch* generative = nullptr;
  LossWeights weights;
  Gate gate = Gate::hard;
  CosineMode cosine = CosineMode::strict;

  Lambdas lambdas() const { return {visited_params->lambda, unvisited_params->lambda}; }

  // The generative term is dropped when no batch is supplied or fewer than
  // two behaviors exist.
  bool generative_active() const { return generative != nullptr && unvisited->per_behavior.size() >= 2; }
  double gen(ViewGradients* grad = nullptr, double weight = 1.0) const {
    return generative_active() ? generative_loss(*unvisited, *generative, grad, weight) : 0.0;
  }

  void check_fresh() const {
    if (visited->version != visited_params->version || unvisited->version != unvisited_params->version)
      throw StaleSnapshotError("encoding was built from parameter version " + std::to_string(visited->version) +
                               "/" + std::to_string(unvisited->version) + " but parameters are at " +
                               std::to_string(visited_params->version) + "/" +
                               std::to_string(unvisited_params->version));
  }
};

// Loss terms that can be evaluated (and gradient-checked) on their own.
enum class LossTerm { bpr, cl_visited, cl_unvisited, generative, objective_visited, objective_unvisited };

inline constexpr LossTerm kAllLossTerms[] = {LossTerm::bpr,          LossTerm::cl_visited,
                                             LossTerm::cl_unvisited, LossTerm::generative,
                                             LossTerm::objective_visited, LossTerm::objective_unvisited};

inline std::string_view to_string(LossTerm t) {
  switch (t) {
    case LossTerm::bpr: return "bpr";
    case LossTerm::cl_visited: return "cl_visited";
    case LossTerm::cl_unvisited: return "cl_unvisited";
    case LossTerm::generative: return "generative";
    case LossTerm::objective_visited: return "objective_visited";
    case LossTerm::objective_unvisited: return "objective_unvisited";
  }
  return "?";
}

// Value of one term and, when acc is given, its gradient added into acc
// for every expert the term depends on.
template <typename T>
double loss_term(const ObjectiveInputs<T>& in, LossTerm term, GradAccumulator* acc = nullptr) {
  in.check_fresh();
  const bool grads = acc != nullptr;
  ViewGradients gv, gu;
  if (grads) {
    gv = ViewGradients::like(*in.visited);
    gu = ViewGradients::like(*in.unvisited);
  }
  bool touch_v = false, touch_u = false;
  double value = 0.0;
  const auto& w = in.weights;

  switch (term) {
    case LossTerm::bpr:
      value = bpr_loss(in.triplets, *in.visited, *in.unvisited, in.lambdas(), *in.index, in.gate,
                       grads ? &gv : nullptr, grads ? &gu : nullptr);
      touch_v = touch_u = true;
      break;
    case LossTerm::cl_visited:
      value = cl_visited(*in.visited, w.tau, in.cl_users, in.cl_items, in.cosine, grads ? &gv : nullptr);
      touch_v = true;
      break;
    case LossTerm::cl_unvisited:
      value = cl_unvisited(*in.unvisited, w.tau_prime, in.cl_users, in.cl_items, in.cosine, grads ? &gu : nullptr);
      touch_u = true;
      break;
    case LossTerm::generative:
      value = in.gen(grads ? &gu : nullptr);
      touch_u = true;
      break;
    case LossTerm::objective_visited:
      value = bpr_loss(in.triplets, *in.visited, *in.unvisited, in.lambdas(), *in.index, in.gate,
                       grads ? &gv : nullptr, nullptr) +
              w.gamma1 * cl_visited(*in.visited, w.tau, in.cl_users, in.cl_items, in.cosine, grads ? &gv : nullptr,
                                    w.gamma1);
      touch_v = true;
      break;
    case LossTerm::objective_unvisited:
      value = bpr_loss(in.triplets, *in.visited, *in.unvisited, in.lambdas(), *in.index, in.gate, nullptr,
                       grads ? &gu : nullptr) +
              w.gamma2 * cl_unvisited(*in.unvisited, w.tau_prime, in.cl_users, in.cl_items, in.cosine,
                                      grads ? &gu : nullptr, w.gamma2) +
              w.gamma3 * in.gen(grads ? &gu : nullptr, w.gamma3);
      touch_u = true;
      break;
  }

  if (grads) {
    auto add = [&](ExpertRole role, const ViewGradients& vg) {
      const auto back = backpropagate(vg, *in.plans, role);
      auto& dst = acc->expert(role);
      auto src_tables = back.tables();
      auto dst_tables = dst.tables();
      for (std::size_t k = 0; k < src_tables.size(); ++k) axpy(1.0, src_tables[k]->flat(), dst_tables[k]->flat());
    };
    if (touch_v) add(ExpertRole::visited, gv);
    if (touch_u) add(ExpertRole::unvisited, gu);
  }
  return value;
}

// One masked gradient pass: the visited pass differentiates
// bpr + gamma1 cl_visited with respect to the visited expert only, the
// unvisited pass bpr + gamma2 cl_unvisited + gamma3 gen with respect to the
// unvisited expert only. The other expert's slots in acc are never written.
// Returned breakdown carries the components this pass computed.
template <typename T>
LossBreakdown accumulate_gradients(const ObjectiveInputs<T>& in, ExpertRole which, GradAccumulator& acc) {
  in.check_fresh();
  const auto& w = in.weights;
  LossBreakdown out;
  ViewGradients vg = ViewGradients::like(which == ExpertRole::visited ? *in.visited : *in.unvisited);
  if (which == ExpertRole::visited) {
    out.bpr = bpr_loss(in.triplets, *in.visited, *in.unvisited, in.lambdas(), *in.index, in.gate, &vg, nullptr);
    out.cl_visited = cl_visited(*in.visited, w.tau, in.cl_users, in.cl_items, in.cosine, &vg, w.gamma1);
  } else {
    out.bpr = bpr_loss(in.triplets, *in.visited, *in.unvisited, in.lambdas(), *in.index, in.gate, nullptr, &vg);
    out.cl_unvisited = cl_unvisited(*in.unvisited, w.tau_prime, in.cl_users, in.cl_items, in.cosine, &vg, w.gamma2);
    out.gen = in.gen(&vg, w.gamma3);
  }
  const auto back = backpropagate(vg, *in.plans, which);
  auto src = back.tables();
  auto dst = acc.expert(which).tables();
  for (std::size_t k = 0; k < src.size(); ++k) axpy(1.0, src[k]->flat(), dst[k]->flat());
  out.finalize(w);
  return out;
}

// All loss values without gradients.
template <typename T>
LossBreakdown evaluate_losses(const ObjectiveInputs<T>& in) {
  in.check_fresh();
  const auto& w = in.weights;
  LossBreakdown out;
  out.bpr = bpr_loss(in.triplets, *in.visited, *in.unvisited, in.lambdas(), *in.index, in.gate);
  out.cl_visited = cl_visited(*in.visited, w.tau, in.cl_users, in.cl_items, in.cosine);
  out.cl_unvisited = cl_unvisited(*in.unvisited, w.tau_prime, in.cl_users, in.cl_items, in.cosine);
  out.gen = in.gen();
  out.finalize(w);
  return out;
}

}  // namespace member
