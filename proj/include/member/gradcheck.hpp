#pragma once

// Finite-difference verification of every loss term's analytic gradient
// on small random instances.

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "member/objectives.hpp"
#include "member/synthetic.hpp"
#include "member/trainer.hpp"

namespace member {

struct GradcheckConfig {
  std::size_t users = 8;
  std::size_t items = 12;
  std::size_t dim = 4;
  int layers = 2;
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  Precision precision = Precision::double_;
  bool sabotage = false;  // test hook: flips the sign of one analytic entry per term
  LossWeights weights{0.7, 0.6, 0.5, 0.3, 0.4};

  double tolerance() const { return precision == Precision::double_ ? 1e-4 : 1e-2; }
  double step() const { return precision == Precision::double_ ? 1e-5 : 1e-2; }
  // Entries where both gradients are below this magnitude are compared
  // against it instead of their own size.
  double floor() const { return precision == Precision::double_ ? 1e-6 : 1e-2; }
};

struct GradcheckResult {
  LossTerm term = LossTerm::bpr;
  std::uint64_t instance_seed = 0;
  double max_rel_error = 0.0;
  double max_abs_gradient = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckResult> results;
  double tolerance = 0.0;

  bool passed() const {
    for (const auto& r : results)
      if (!r.passed) return false;
    return !results.empty();
  }
  double worst() const {
    double w = 0.0;
    for (const auto& r : results) w = std::max(w, r.max_rel_error);
    return w;
  }
};

inline nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json j;
  j["tolerance"] = r.tolerance;
  j["passed"] = r.passed();
  for (const auto& x : r.results)
    j["results"].push_back({{"term", std::string(to_string(x.term))},
                            {"seed", x.instance_seed},
                            {"max_rel_error", x.max_rel_error},
                            {"passed", x.passed}});
  return j;
}

// A random instance small enough for exhaustive finite differences.
template <typename T>
struct GradcheckInstance {
  TrainingGraphs graphs;
  PlanSet plans;
  ModelState<T> state;
  std::vector<Triplet> triplets;
  std::vector<Index> users;
  std::vector<Index> items;
  GenerativeBatch generative;

  static GradcheckInstance make(const GradcheckConfig& cfg, std::uint64_t seed) {
    CounterRng rng = CounterRng(seed).split("gradcheck");
    const std::vector<std::string> behaviors = {"click", "cart", "buy"};
    // Every user and item appears, every user buys something, and there are
    // both visited and unvisited purchases.
    std::ostringstream text;
    for (Index u = 0; u < cfg.users; ++u) {
      text << 'u' << u << "\ti" << (u % cfg.items) << "\tbuy\n";
      text << 'u' << u << "\ti" << ((u + 1) % cfg.items) << "\tclick\n";
    }
    for (Index i = 0; i < cfg.items; ++i) text << 'u' << (i % cfg.users) << "\ti" << i << "\tcart\n";
    for (std::size_t k = 0; k < 3 * (cfg.users + cfg.items); ++k)
      text << 'u' << rng.uniform_index(cfg.users) << "\ti" << rng.uniform_index(cfg.items) << '\t'
           << behaviors[rng.uniform_index(behaviors.size())] << '\n';
    std::istringstream in(text.str());
    const auto log = parse_interactions(in, Schema{behaviors});

    GradcheckInstance g;
    g.graphs = TrainingGraphs::build(log);
    g.plans = PlanSet(g.graphs, cfg.layers);
    TrainConfig tc;
    tc.dim = cfg.dim;
    tc.seed = seed;
    tc.lambda_visited = 0.3 + 0.4 * rng.uniform();
    tc.lambda_unvisited = 0.3 + 0.4 * rng.uniform();
    g.state = init_model_state<T>(g.graphs.num_users, g.graphs.num_items, tc);
    // Larger entries than the Xavier scale so no loss sits in a flat region.
    for (auto* p : {&g.state.visited, &g.state.unvisited})
      for (auto* m : p->tables())
        for (auto& v : m->flat()) v = static_cast<T>(rng.uniform(-1.0, 1.0));

    CounterRng batch_rng = rng.split("batch");
    g.triplets = sample_bpr_batch(g.graphs.buys(), 16, batch_rng);
    std::tie(g.users, g.items) = batch_entities(g.triplets);
    const auto negatives = sample_generative_negatives(g.graphs, 2, rng.split("gen"));
    g.generative = build_generative_batch(g.graphs, negatives, iota_indices(g.graphs.num_users));
    return g;
  }

  ObjectiveInputs<T> inputs(const EncodedExpert<T>& ev, const EncodedExpert<T>& eu, const LossWeights& w) const {
    ObjectiveInputs<T> in;
    in.visited_params = &state.visited;
    in.unvisited_params = &state.unvisited;
    in.visited = &ev;
    in.unvisited = &eu;
    in.plans = &plans;
    in.index = &graphs.visited;
    in.triplets = triplets;
    in.cl_users = users;
    in.cl_items = items;
    in.generative = &generative;
    in.weights = w;
    in.cosine = CosineMode::strict;
    return in;
  }

  double value(LossTerm term, const LossWeights& w) const {
    const auto ev = encode(state.visited, plans);
    const auto eu = encode(state.unvisited, plans);
    return loss_term(inputs(ev, eu, w), term);
  }

  GradAccumulator gradient(LossTerm term, const LossWeights& w) const {
    const auto ev = encode(state.visited, plans);
    const auto eu = encode(state.unvisited, plans);
    GradAccumulator acc(graphs.num_users, graphs.num_items, state.visited.global_init.dim());
    loss_term(inputs(ev, eu, w), term, &acc);
    return acc;
  }
};

// The composite objectives each train one expert only, so they are checked
// against that expert's parameters.
inline std::vector<ExpertRole> checked_roles(LossTerm term) {
  switch (term) {
    case LossTerm::objective_visited: return {ExpertRole::visited};
    case LossTerm::objective_unvisited: return {ExpertRole::unvisited};
    default: return {ExpertRole::visited, ExpertRole::unvisited};
  }
}

// Central differences over every parameter entry of the checked experts.
template <typename T>
GradcheckResult check_term(GradcheckInstance<T>& g, LossTerm term, const GradcheckConfig& cfg) {
  auto acc = g.gradient(term, cfg.weights);
  const double h = cfg.step();
  GradcheckResult r;
  r.term = term;

  std::vector<Matrix<T>*> params;
  std::vector<Matrix<double>*> grads;
  for (auto role : checked_roles(term)) {
    auto& p = role == ExpertRole::visited ? g.state.visited : g.state.unvisited;
    for (auto* m : p.tables()) params.push_back(m);
    for (auto* m : acc.expert(role).tables()) grads.push_back(m);
  }
  if (cfg.sabotage) {
    // Flip the largest analytic entry.
    Matrix<double>* where = grads[0];
    std::size_t at = 0;
    double big = -1.0;
    for (auto* m : grads)
      for (std::size_t k = 0; k < m->size(); ++k)
        if (std::abs(m->flat()[k]) > big) big = std::abs(m->flat()[k]), where = m, at = k;
    where->flat()[at] = -where->flat()[at];
  }

  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t]->flat();
    const auto a = grads[t]->flat();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T saved = p[k];
      p[k] = static_cast<T>(static_cast<double>(saved) + h);
      const double up = g.value(term, cfg.weights);
      const double h_up = static_cast<double>(p[k]) - static_cast<double>(saved);
      p[k] = static_cast<T>(static_cast<double>(saved) - h);
      const double down = g.value(term, cfg.weights);
      const double h_down = static_cast<double>(saved) - static_cast<double>(p[k]);
      p[k] = saved;
      const double fd = (up - down) / (h_up + h_down);
      const double err = std::abs(a[k] - fd) / std::max(cfg.floor(), std::abs(a[k]) + std::abs(fd));
      r.max_rel_error = std::max(r.max_rel_error, err);
      r.max_abs_gradient = std::max(r.max_abs_gradient, std::abs(a[k]));
    }
  }
  r.passed = r.max_rel_error <= cfg.tolerance();
  return r;
}

template <typename T>
GradcheckReport run_gradcheck_as(const GradcheckConfig& cfg) {
  GradcheckReport report;
  report.tolerance = cfg.tolerance();
  const CounterRng root = CounterRng(cfg.seed).split("instances");
  for (std::size_t n = 0; n < cfg.instances; ++n) {
    CounterRng s = root.split(n);
    const std::uint64_t seed = s();
    auto g = GradcheckInstance<T>::make(cfg, seed);
    for (auto term : kAllLossTerms) {
      auto r = check_term(g, term, cfg);
      r.instance_seed = seed;
      report.results.push_back(r);
    }
  }
  return report;
}

inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  return cfg.precision == Precision::double_ ? run_gradcheck_as<double>(cfg) : run_gradcheck_as<float>(cfg);
}

}  // namespace member
