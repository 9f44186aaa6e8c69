#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "member/evaluator.hpp"
#include "member/expert.hpp"
#include "member/objectives.hpp"

namespace member {

enum class Precision { single, double_ };
enum class ContrastiveMode { batch, full };

struct TrainConfig {
  std::size_t dim = 16;
  int layers = 2;
  double lambda_visited = 0.5;
  double lambda_unvisited = 0.5;
  double tau = 0.2;
  double tau_prime = 0.2;
  double gamma1 = 0.1;
  double gamma2 = 0.1;
  double gamma3 = 0.1;
  double learning_rate = 5e-3;
  std::size_t batch_size = 1024;
  std::size_t gen_negatives_k = 1;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  bool early_stopping = true;
  std::uint64_t seed = 0;
  Precision precision = Precision::double_;
  ContrastiveMode contrastive_mode = ContrastiveMode::batch;
  Gate gate = Gate::hard;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (layers < 0) throw ConfigError("layers must be >= 0");
    if (gamma1 < 0 || gamma2 < 0 || gamma3 < 0) throw ConfigError("gamma weights must be >= 0");
    if (!(tau > 0) || !(tau_prime > 0)) throw ConfigError("temperatures must be > 0");
    for (double l : {lambda_visited, lambda_unvisited})
      if (!(l > 0.0 && l < 1.0)) throw ConfigError("lambda must lie in (0, 1)");
  }

  LossWeights weights() const { return {gamma1, gamma2, gamma3, tau, tau_prime}; }
};

struct AdamMoments {
  Matrix<double> first;
  Matrix<double> second;
};

// Adaptive-moment update with bias correction; `step` is 1-based.
template <typename T>
void adam_update(Matrix<T>& param, const Matrix<double>& grad, AdamMoments& moments, std::uint64_t step,
                 const TrainConfig& cfg) {
  if (moments.first.empty()) {
    moments.first = Matrix<double>(param.rows(), param.cols());
    moments.second = Matrix<double>(param.rows(), param.cols());
  }
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  auto p = param.flat();
  auto g = grad.flat();
  auto m = moments.first.flat();
  auto v = moments.second.flat();
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k] = b1 * m[k] + (1.0 - b1) * g[k];
    v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
    const double update = cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_epsilon);
    p[k] = static_cast<T>(static_cast<double>(p[k]) - update);
  }
}

template <typename T>
struct ModelState {
  ExpertParams<T> visited;
  ExpertParams<T> unvisited;
  std::vector<AdamMoments> moments;  // visited tables then unvisited tables
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t version = 0;
  std::uint64_t seed = 0;
};

template <typename T>
ModelState<T> init_model_state(std::size_t num_users, std::size_t num_items, const TrainConfig& cfg) {
  const CounterRng root = CounterRng(cfg.seed).split("init");
  ModelState<T> s;
  s.visited = ExpertParams<T>::xavier(ExpertRole::visited, num_users, num_items, cfg.dim, cfg.lambda_visited,
                                      root.split("visited"));
  s.unvisited = ExpertParams<T>::xavier(ExpertRole::unvisited, num_users, num_items, cfg.dim, cfg.lambda_unvisited,
                                        root.split("unvisited"));
  s.moments.resize(8);
  s.seed = cfg.seed;
  return s;
}

// Uniform training buy edge as positive, uniform non-bought item as
// negative (rejection sampled). Users whose buys cover every item cannot
// yield a negative; their draws are dropped and counted in `skipped`.
inline std::vector<Triplet> sample_bpr_batch(const BehaviorGraph& buys, std::size_t batch_size, CounterRng& rng,
                                             std::size_t* skipped = nullptr) {
  if (buys.num_edges() == 0) throw EmptyInputError("no training buys to sample from");
  std::vector<Triplet> batch;
  batch.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const auto& e = buys.edges[rng.uniform_index(buys.num_edges())];
    if (buys.user_degrees[e.user] >= buys.num_items) {
      if (skipped) ++*skipped;
      continue;
    }
    Index neg;
    do {
      neg = static_cast<Index>(rng.uniform_index(buys.num_items));
    } while (buys.contains({e.user, neg}));
    batch.push_back({e.user, e.item, neg});
  }
  return batch;
}

inline constexpr Index kNoItem = std::numeric_limits<Index>::max();

// Negatives for the generative loss, drawn once per epoch: k per edge of
// each behavior graph, aligned with that graph's sorted edge list.
struct GenerativeNegatives {
  std::size_t k = 1;
  std::vector<std::vector<Index>> per_behavior;
};

inline GenerativeNegatives sample_generative_negatives(const TrainingGraphs& graphs, std::size_t k, CounterRng rng) {
  GenerativeNegatives out;
  out.k = k;
  for (const auto& g : graphs.behavior_graphs) {
    std::vector<Index> negs(g.num_edges() * k, kNoItem);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      const auto u = g.edges[e].user;
      if (g.user_degrees[u] >= g.num_items) continue;
      for (std::size_t r = 0; r < k; ++r) {
        Index j;
        do {
          j = static_cast<Index>(rng.uniform_index(g.num_items));
        } while (g.contains({u, j}));
        negs[e * k + r] = j;
      }
    }
    out.per_behavior.push_back(std::move(negs));
  }
  return out;
}

inline GenerativeBatch build_generative_batch(const TrainingGraphs& graphs, const GenerativeNegatives& negatives,
                                              std::span<const Index> users) {
  GenerativeBatch batch;
  batch.by_behavior.resize(graphs.behavior_graphs.size());
  for (std::size_t m = 0; m < graphs.behavior_graphs.size(); ++m) {
    const auto& g = graphs.behavior_graphs[m];
    for (Index u : users) {
      const auto edges = g.user_edges(u);
      if (edges.empty()) continue;
      UserTargets t;
      t.user = u;
      const auto first = static_cast<std::size_t>(edges.data() - g.edges.data());
      for (std::size_t e = first; e < first + edges.size(); ++e) {
        t.positives.push_back(g.edges[e].item);
        for (std::size_t r = 0; r < negatives.k; ++r) {
          const auto j = negatives.per_behavior[m][e * negatives.k + r];
          if (j != kNoItem) t.negatives.push_back(j);
        }
      }
      batch.by_behavior[m].push_back(std::move(t));
    }
  }
  return batch;
}

inline std::vector<Index> iota_indices(std::size_t n) {
  std::vector<Index> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<Index>(k);
  return v;
}

// One optimizer step: encode both experts from the current snapshot,
// accumulate the visited objective's gradient into the visited expert and
// the unvisited objective's gradient into the unvisited expert, then apply
// both updates.
template <typename T>
LossBreakdown train_step(ModelState<T>& state, const PlanSet& plans, const TrainingGraphs& graphs,
                         std::span<const Triplet> triplets, const GenerativeNegatives& negatives,
                         const TrainConfig& cfg) {
  const auto enc_v = encode(state.visited, plans);
  const auto enc_u = encode(state.unvisited, plans);

  std::vector<Index> users, items;
  if (cfg.contrastive_mode == ContrastiveMode::full) {
    users = iota_indices(graphs.num_users);
    items = iota_indices(graphs.num_items);
  } else {
    std::tie(users, items) = batch_entities(triplets);
  }
  const auto gen = build_generative_batch(graphs, negatives, users);

  ObjectiveInputs<T> in;
  in.visited_params = &state.visited;
  in.unvisited_params = &state.unvisited;
  in.visited = &enc_v;
  in.unvisited = &enc_u;
  in.plans = &plans;
  in.index = &graphs.visited;
  in.triplets = triplets;
  in.cl_users = users;
  in.cl_items = items;
  in.generative = graphs.behaviors.size() >= 2 ? &gen : nullptr;
  in.weights = cfg.weights();
  in.gate = cfg.gate;
  in.cosine = CosineMode::floored;

  GradAccumulator acc(graphs.num_users, graphs.num_items, cfg.dim);
  const auto part_v = accumulate_gradients(in, ExpertRole::visited, acc);
  const auto part_u = accumulate_gradients(in, ExpertRole::unvisited, acc);

  LossBreakdown losses;
  losses.bpr = part_v.bpr;
  losses.cl_visited = part_v.cl_visited;
  losses.cl_unvisited = part_u.cl_unvisited;
  losses.gen = part_u.gen;
  losses.finalize(in.weights);
  if (!losses.finite())
    throw NumericError("non-finite loss component '" + std::string(losses.first_nonfinite()) + "' at step " +
                       std::to_string(state.step + 1) + " (bpr=" + std::to_string(losses.bpr) +
                       " cl_v=" + std::to_string(losses.cl_visited) + " cl_u=" + std::to_string(losses.cl_unvisited) +
                       " gen=" + std::to_string(losses.gen) + ")");

  ++state.step;
  auto params_v = state.visited.tables();
  auto params_u = state.unvisited.tables();
  const auto grads_v = acc.expert(ExpertRole::visited).tables();
  const auto grads_u = acc.expert(ExpertRole::unvisited).tables();
  for (std::size_t k = 0; k < 4; ++k) {
    adam_update(*params_v[k], *grads_v[k], state.moments[k], state.step, cfg);
    adam_update(*params_u[k], *grads_u[k], state.moments[4 + k], state.step, cfg);
  }
  ++state.version;
  state.visited.version = state.version;
  state.unvisited.version = state.version;
  return losses;
}

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  LossBreakdown losses;  // means over the epoch's steps
  std::optional<double> val_hr10;
  double elapsed_s = 0.0;
};

inline nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"bpr", e.losses.bpr},
          {"cl_v", e.losses.cl_visited},
          {"cl_u", e.losses.cl_unvisited},
          {"gen", e.losses.gen},
          {"objective_v", e.losses.total_visited_objective},
          {"objective_u", e.losses.total_unvisited_objective},
          {"val_hr10", e.val_hr10 ? nlohmann::json(*e.val_hr10) : nlohmann::json(nullptr)},
          {"elapsed_s", e.elapsed_s}};
}

inline std::size_t steps_per_epoch(const TrainingGraphs& graphs, const TrainConfig& cfg) {
  return (graphs.buys().num_edges() + cfg.batch_size - 1) / cfg.batch_size;
}

// Validation HR@10 under the standard protocol.
inline double validation_hr10(const RankingModel& model, const Split& split, const TrainingGraphs& graphs) {
  static constexpr Protocol protocols[] = {Protocol::standard};
  static constexpr int ks[] = {10};
  const auto report = evaluate(model, split.validation, graphs.buys(), graphs.visited, protocols, ks);
  return report.rows.front().value.value_or(0.0);
}

// Epoch loop with patience-based early stopping on validation HR@10,
// shared by the two-expert model and the baselines. A Learner provides
//   void begin_epoch(std::size_t epoch);
//   LossBreakdown step(std::span<const Triplet>);
//   std::unique_ptr<RankingModel> ranker() const;
//   void save_best();
template <typename Learner>
std::vector<EpochLog> run_schedule(Learner& learner, const Split& split, const TrainingGraphs& graphs,
                                   const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (cfg.early_stopping && split.validation.empty())
    throw ConfigError("early stopping needs validation pairs; prepare the bundle with validation enabled");

  std::vector<EpochLog> log;
  if (cfg.max_epochs == 0) return log;
  const auto start = std::chrono::steady_clock::now();
  const CounterRng bpr_root = CounterRng(cfg.seed).split("bpr");
  const std::size_t steps = steps_per_epoch(graphs, cfg);
  double best = -1.0;
  std::size_t since_best = 0;
  std::uint64_t global_step = 0;
  std::size_t skipped_total = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    learner.begin_epoch(epoch);
    EpochLog row;
    row.epoch = epoch;
    row.steps = steps;
    for (std::size_t s = 0; s < steps; ++s) {
      CounterRng rng = bpr_root.split(++global_step);
      std::size_t skipped = 0;
      const auto batch = sample_bpr_batch(graphs.buys(), cfg.batch_size, rng, &skipped);
      skipped_total += skipped;
      if (batch.empty()) continue;
      const auto l = learner.step(batch);
      row.losses.bpr += l.bpr / steps;
      row.losses.cl_visited += l.cl_visited / steps;
      row.losses.cl_unvisited += l.cl_unvisited / steps;
      row.losses.gen += l.gen / steps;
    }
    row.losses.finalize(cfg.weights());

    if (!split.validation.empty()) {
      row.val_hr10 = validation_hr10(*learner.ranker(), split, graphs);
      if (*row.val_hr10 > best) {
        best = *row.val_hr10;
        since_best = 0;
        learner.save_best();
      } else {
        ++since_best;
      }
    }
    row.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (cfg.early_stopping && since_best >= cfg.patience) break;
  }
  if (skipped_total > 0)
    std::cerr << "warning: " << skipped_total << " BPR draws skipped (user bought every item)\n";
  return log;
}

template <typename T>
struct FitResult {
  ModelState<T> best;   // best validation snapshot (final state without validation)
  ModelState<T> final;
  std::vector<EpochLog> log;
};

template <typename T>
std::unique_ptr<RankingModel> make_member_ranker(const ModelState<T>& state, const PlanSet& plans,
                                                 const TrainingGraphs& graphs, Gate gate, std::string name = "member") {
  return std::make_unique<MemberRanker<T>>(encode(state.visited, plans), encode(state.unvisited, plans),
                                           Lambdas{state.visited.lambda, state.unvisited.lambda}, graphs.visited, gate,
                                           std::move(name));
}

namespace detail {

template <typename T>
class MemberLearner {
 public:
  MemberLearner(ModelState<T>& state, const PlanSet& plans, const TrainingGraphs& graphs, const TrainConfig& cfg)
      : state_(state), best_(state), plans_(plans), graphs_(graphs), cfg_(cfg) {}

  void begin_epoch(std::size_t epoch) {
    state_.epoch = epoch;
    negatives_ = sample_generative_negatives(graphs_, cfg_.gen_negatives_k,
                                             CounterRng(cfg_.seed).split("gen").split(epoch));
  }
  LossBreakdown step(std::span<const Triplet> batch) {
    return train_step(state_, plans_, graphs_, batch, negatives_, cfg_);
  }
  std::unique_ptr<RankingModel> ranker() const { return make_member_ranker(state_, plans_, graphs_, cfg_.gate); }
  void save_best() { best_ = state_; }
  const ModelState<T>& best() const { return best_; }

 private:
  ModelState<T>& state_;
  ModelState<T> best_;
  const PlanSet& plans_;
  const TrainingGraphs& graphs_;
  const TrainConfig& cfg_;
  GenerativeNegatives negatives_;
};

}  // namespace detail

template <typename T>
FitResult<T> fit(const Split& split, const TrainingGraphs& graphs, const TrainConfig& cfg,
                 const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (graphs.behaviors.size() < 2 && cfg.gamma3 > 0)
    throw ConfigError("behavior-generative loss needs at least two behaviors (set gamma3=0)");
  const PlanSet plans(graphs, cfg.layers);
  ModelState<T> state = init_model_state<T>(graphs.num_users, graphs.num_items, cfg);
  detail::MemberLearner<T> learner(state, plans, graphs, cfg);
  FitResult<T> result;
  result.log = run_schedule(learner, split, graphs, cfg, on_epoch);
  result.final = state;
  result.best = split.validation.empty() ? state : learner.best();
  return result;
}

}  // namespace member
