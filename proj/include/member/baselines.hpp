#pragma once

// Single-score comparison models: matrix factorization with BPR, LightGCN
// on the buy graph, and LightGCN on the union graph of all behaviors.

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "member/evaluator.hpp"
#include "member/propagation.hpp"
#include "member/trainer.hpp"

namespace member {

enum class BaselineKind { mf_bpr, lgcn_buy, lgcn_global };

inline std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::mf_bpr: return "mf_bpr";
    case BaselineKind::lgcn_buy: return "lgcn_buy";
    case BaselineKind::lgcn_global: return "lgcn_global";
  }
  return "?";
}

inline std::optional<BaselineKind> parse_baseline_kind(std::string_view s) {
  if (s == "mf_bpr") return BaselineKind::mf_bpr;
  if (s == "lgcn_buy") return BaselineKind::lgcn_buy;
  if (s == "lgcn_global") return BaselineKind::lgcn_global;
  return std::nullopt;
}

inline constexpr std::size_t kBaselineDefaultDim = 64;

template <typename T>
struct BaselineParams {
  BaselineKind kind = BaselineKind::mf_bpr;
  EmbeddingPair<T> table;
  int layers = 0;  // ignored by mf_bpr

  void validate() const {
    if (!all_finite(table.users) || !all_finite(table.items)) throw NumericError("non-finite baseline parameter");
  }
  bool operator==(const BaselineParams&) const = default;
};

// The graph a baseline propagates over, or none for mf_bpr.
inline std::optional<PropagationPlan> baseline_plan(BaselineKind kind, const TrainingGraphs& graphs, int layers) {
  switch (kind) {
    case BaselineKind::mf_bpr: return std::nullopt;
    case BaselineKind::lgcn_buy: return prepare(graphs.buys(), layers);
    case BaselineKind::lgcn_global: return prepare(graphs.global, layers);
  }
  return std::nullopt;
}

// Parameters plus the embeddings scores are read from.
template <typename T>
class BaselineModel {
 public:
  BaselineModel(BaselineParams<T> params, std::optional<PropagationPlan> plan)
      : params_(std::move(params)), plan_(std::move(plan)) {
    if (params_.kind != BaselineKind::mf_bpr && !plan_) throw SchemaError("graph baseline needs a propagation plan");
    refresh();
  }

  void refresh() { views_ = plan_ ? propagate(*plan_, params_.table) : params_.table; }

  const BaselineParams<T>& params() const { return params_; }
  BaselineParams<T>& params() { return params_; }
  const EmbeddingPair<T>& views() const { return views_; }
  const std::optional<PropagationPlan>& plan() const { return plan_; }

  double score(Index u, Index i) const {
    if (u >= views_.num_users()) throw IndexError("user index " + std::to_string(u) + " out of range");
    if (i >= views_.num_items()) throw IndexError("item index " + std::to_string(i) + " out of range");
    return dot(views_.users.row(u), views_.items.row(i));
  }

  void score_all(Index u, std::span<double> out) const {
    if (u >= views_.num_users()) throw IndexError("user index " + std::to_string(u) + " out of range");
    const auto eu = views_.users.row(u);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(eu, views_.items.row(i));
  }

  // BPR loss on this model's scores; adds d loss / d table into grad.
  double bpr(std::span<const Triplet> triplets, EmbeddingPair<double>* grad) const {
    if (triplets.empty()) throw EmptyInputError("BPR batch is empty");
    const double n = static_cast<double>(triplets.size());
    EmbeddingPair<double> vg;
    if (grad) vg = EmbeddingPair<double>(views_.num_users(), views_.num_items(), views_.dim());
    double total = 0.0;
    for (const auto& t : triplets) {
      const double x = score(t.user, t.pos) - score(t.user, t.neg);
      total += softplus(-x);
      if (!grad) continue;
      const double g = -sigmoid(-x) / n;
      axpy(g, views_.items.row(t.pos), vg.users.row(t.user));
      axpy(-g, views_.items.row(t.neg), vg.users.row(t.user));
      axpy(g, views_.users.row(t.user), vg.items.row(t.pos));
      axpy(-g, views_.users.row(t.user), vg.items.row(t.neg));
    }
    if (grad) {
      const auto back = plan_ ? transport_gradient(*plan_, vg) : vg;
      axpy(1.0, back.users.flat(), grad->users.flat());
      axpy(1.0, back.items.flat(), grad->items.flat());
    }
    return total / n;
  }

 private:
  BaselineParams<T> params_;
  std::optional<PropagationPlan> plan_;
  EmbeddingPair<T> views_;
};

template <typename T>
double baseline_score(const BaselineModel<T>& model, Index u, Index i) {
  return model.score(u, i);
}

// Same scorer under every protocol.
template <typename T>
std::unique_ptr<RankingModel> make_baseline_ranker(const BaselineModel<T>& model, std::string name = {}) {
  if (name.empty()) name = std::string(to_string(model.params().kind));
  const auto* m = &model;
  return std::make_unique<FunctionRanker>(std::move(name), model.views().num_items(),
                                          [m](Index u, std::span<double> out) { m->score_all(u, out); });
}

template <typename T>
BaselineParams<T> init_baseline(BaselineKind kind, std::size_t num_users, std::size_t num_items,
                                const TrainConfig& cfg) {
  CounterRng rng = CounterRng(cfg.seed).split("init").split(to_string(kind));
  BaselineParams<T> p;
  p.kind = kind;
  p.layers = kind == BaselineKind::mf_bpr ? 0 : cfg.layers;
  p.table = {xavier_uniform<T>(num_users, cfg.dim, rng), xavier_uniform<T>(num_items, cfg.dim, rng)};
  return p;
}

template <typename T>
struct BaselineFit {
  BaselineParams<T> best;
  BaselineParams<T> final;
  std::vector<EpochLog> log;
};

namespace detail {

template <typename T>
class BaselineLearner {
 public:
  BaselineLearner(BaselineModel<T>& model, const TrainConfig& cfg)
      : model_(model), cfg_(cfg), best_(model.params()), moments_(2) {}

  void begin_epoch(std::size_t) {}

  LossBreakdown step(std::span<const Triplet> batch) {
    auto& p = model_.params();
    EmbeddingPair<double> grad(p.table.num_users(), p.table.num_items(), p.table.dim());
    LossBreakdown out;
    out.bpr = model_.bpr(batch, &grad);
    if (!std::isfinite(out.bpr))
      throw NumericError("non-finite baseline BPR loss at step " + std::to_string(step_ + 1));
    ++step_;
    adam_update(p.table.users, grad.users, moments_[0], step_, cfg_);
    adam_update(p.table.items, grad.items, moments_[1], step_, cfg_);
    model_.refresh();
    return out;
  }

  std::unique_ptr<RankingModel> ranker() const { return make_baseline_ranker(model_); }
  void save_best() { best_ = model_.params(); }
  const BaselineParams<T>& best() const { return best_; }

 private:
  BaselineModel<T>& model_;
  const TrainConfig& cfg_;
  BaselineParams<T> best_;
  std::vector<AdamMoments> moments_;
  std::uint64_t step_ = 0;
};

}  // namespace detail

// BPR training with the same sampler, optimizer and stopping rule as the
// two-expert trainer. Only the loss weights for bpr apply.
template <typename T>
BaselineFit<T> baseline_fit(BaselineKind kind, const Split& split, const TrainingGraphs& graphs,
                            const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  TrainConfig bpr_only = cfg;
  bpr_only.gamma1 = bpr_only.gamma2 = bpr_only.gamma3 = 0.0;
  BaselineModel<T> model(init_baseline<T>(kind, graphs.num_users, graphs.num_items, cfg),
                         baseline_plan(kind, graphs, cfg.layers));
  detail::BaselineLearner<T> learner(model, bpr_only);
  BaselineFit<T> out;
  out.log = run_schedule(learner, split, graphs, bpr_only, on_epoch);
  out.final = model.params();
  out.best = split.validation.empty() ? model.params() : learner.best();
  return out;
}

}  // namespace member
