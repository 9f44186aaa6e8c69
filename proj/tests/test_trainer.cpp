#include <catch_amalgamated.hpp>

#include <map>

#include "oracles.hpp"

using namespace member;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

template <typename T>
bool same_params(const ExpertParams<T>& a, const ExpertParams<T>& b) {
  auto ta = const_cast<ExpertParams<T>&>(a).tables();
  auto tb = const_cast<ExpertParams<T>&>(b).tables();
  for (std::size_t k = 0; k < ta.size(); ++k)
    if (!(*ta[k] == *tb[k])) return false;
  return true;
}

// BPR over the hard-gated score, computed from dense propagation and a
// visited set rebuilt from the raw log.
struct DenseBpr {
  const InteractionLog& log;
  std::vector<Triplet> triplets;
  int layers;

  oracle::Dense view(const BehaviorGraph& g, const EmbeddingPair<double>& x) const {
    return oracle::dense_propagate(g, layers, oracle::stack(x));
  }

  double score(const ExpertParams<double>& p, const TrainingGraphs& graphs, Index u, Index i) const {
    const auto g = view(graphs.global, p.global_init);
    oracle::Dense local = oracle::zeros(g.size(), g[0].size());
    for (const auto& bg : graphs.behavior_graphs) {
      const auto v = view(bg, p.local_init);
      for (std::size_t r = 0; r < v.size(); ++r)
        for (std::size_t c = 0; c < v[r].size(); ++c) local[r][c] += v[r][c] / graphs.behavior_graphs.size();
    }
    const std::size_t ii = log.num_users + i;
    double dg = 0, dl = 0;
    for (std::size_t c = 0; c < g[0].size(); ++c) dg += g[u][c] * g[ii][c], dl += local[u][c] * local[ii][c];
    return p.lambda * dg + (1 - p.lambda) * dl;
  }

  double operator()(const ExpertParams<double>& v, const ExpertParams<double>& w, const TrainingGraphs& graphs) const {
    const Index buy = static_cast<Index>(log.buy_behavior());
    const auto aux = oracle::edges_of(log, [&](Index b) { return b != buy; });
    auto s = [&](Index u, Index i) { return aux.count({u, i}) ? score(v, graphs, u, i) : score(w, graphs, u, i); };
    double total = 0;
    for (const auto& t : triplets) total += std::log1p(std::exp(-(s(t.user, t.pos) - s(t.user, t.neg))));
    return total / triplets.size();
  }
};

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.dim = 3;
  cfg.layers = 2;
  cfg.batch_size = 16;
  cfg.seed = 5;
  return cfg;
}

Split funnel_split(std::size_t users, std::size_t items, std::uint64_t seed) {
  FunnelConfig f;
  f.num_users = users;
  f.num_items = items;
  f.clicks_per_user = 10;
  f.seed = seed;
  return split_leave_one_out(generate_funnel(f), seed, true);
}

}  // namespace

TEST_CASE("sampler: forced complement and skipped users", "[trainer]") {
  // u0 bought everything except i2; u1 bought every item.
  const auto log = oracle::parse("u0\ti0\tbuy\nu0\ti1\tbuy\nu0\ti3\tbuy\nu1\ti0\tbuy\nu1\ti1\tbuy\nu1\ti2\tbuy\n"
                                 "u1\ti3\tbuy\n",
                                 {"buy"});
  const auto g = TrainingGraphs::build(log);
  CounterRng rng(1);
  std::size_t skipped = 0;
  const auto batch = sample_bpr_batch(g.buys(), 400, rng, &skipped);
  CHECK(batch.size() + skipped == 400);
  CHECK(skipped > 0);
  for (const auto& t : batch) {
    CHECK(t.user == 0);
    CHECK(log.item_ids[t.neg] == "i2");
    CHECK(g.buys().contains({t.user, t.pos}));
  }
  CHECK_THROWS_AS(sample_bpr_batch(BehaviorGraph::from_edges("buy", 2, 2, {}), 4, rng), EmptyInputError);
}

TEST_CASE("sampler: deterministic and uniform over the complement", "[trainer][property]") {
  const auto log = oracle::parse("a\tx0\tbuy\nb\tx1\tbuy\nb\tx2\tbuy\nb\tx3\tbuy\nb\tx4\tbuy\nb\tx5\tbuy\n", {"buy"});
  const auto g = TrainingGraphs::build(log);
  CounterRng r1(9), r2(9);
  CHECK(sample_bpr_batch(g.buys(), 50, r1) == sample_bpr_batch(g.buys(), 50, r2));

  // Only user a's draws: five eligible negatives out of six items.
  const auto only_a = BehaviorGraph::from_edges("buy", 1, 6, {{0, 0}});
  CounterRng rng(10);
  std::map<Index, int> counts;
  const int n = 10000;
  for (const auto& t : sample_bpr_batch(only_a, n, rng)) ++counts[t.neg];
  CHECK(counts.count(0) == 0);
  const double sd = std::sqrt(n * 0.2 * 0.8);
  for (Index j = 1; j < 6; ++j) CHECK(std::abs(counts[j] - n / 5.0) < 3 * sd);
}

TEST_CASE("generative negatives avoid the behavior's own edges", "[trainer]") {
  const auto toy = fixture::Toy::make(3, 6, 9, 40);
  const auto negs = sample_generative_negatives(toy.graphs, 3, CounterRng(2));
  REQUIRE(negs.per_behavior.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& g = toy.graphs.behavior_graphs[m];
    REQUIRE(negs.per_behavior[m].size() == 3 * g.num_edges());
    for (std::size_t e = 0; e < g.num_edges(); ++e)
      for (std::size_t r = 0; r < 3; ++r) {
        const Index j = negs.per_behavior[m][3 * e + r];
        REQUIRE(j != kNoItem);
        CHECK_FALSE(g.contains({g.edges[e].user, j}));
      }
  }
  const auto again = sample_generative_negatives(toy.graphs, 3, CounterRng(2));
  CHECK(again.per_behavior == negs.per_behavior);
}

TEST_CASE("adam: first step closed form", "[trainer]") {
  Matrix<double> p(1, 2), g(1, 2);
  p(0, 0) = 1.0, p(0, 1) = -1.0;
  g(0, 0) = 2.0, g(0, 1) = -0.5;
  AdamMoments m;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  adam_update(p, g, m, 1, cfg);
  CHECK_THAT(p(0, 0), WithinRel(1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-12));
  CHECK_THAT(p(0, 1), WithinRel(-1.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-12));
  CHECK(m.first(0, 0) == (1 - 0.9) * 2.0);
}

TEST_CASE("train_step: zero learning rate leaves parameters untouched", "[trainer]") {
  const auto toy = fixture::Toy::make(4, 6, 8, 40);
  auto cfg = small_config();
  cfg.learning_rate = 0.0;
  auto state = init_model_state<double>(6, 8, cfg);
  const auto before = state;
  CounterRng rng(3);
  const auto batch = sample_bpr_batch(toy.graphs.buys(), 10, rng);
  const auto negs = sample_generative_negatives(toy.graphs, 1, CounterRng(4));
  for (int s = 0; s < 3; ++s) train_step(state, toy.plans, toy.graphs, batch, negs, cfg);
  CHECK(same_params(state.visited, before.visited));
  CHECK(same_params(state.unvisited, before.unvisited));
  CHECK(state.version == 3);
  CHECK(state.step == 3);
}

TEST_CASE("train_step: first step matches a dense BPR recomputation", "[trainer]") {
  const auto log = oracle::parse("a\tp\tclick\na\tq\tbuy\na\tp\tbuy\nb\tq\tcart\nb\tr\tbuy\nc\ts\tbuy\nc\tp\tclick\n"
                                 "d\tr\tclick\nd\ts\tbuy\nd\tt\tcart\n");
  const auto graphs = TrainingGraphs::build(log);
  const PlanSet plans(graphs, 2);
  auto cfg = small_config();
  cfg.gamma1 = cfg.gamma2 = cfg.gamma3 = 0.0;
  cfg.learning_rate = 1e-3;
  cfg.lambda_visited = 0.4;
  cfg.lambda_unvisited = 0.7;
  auto state = init_model_state<double>(graphs.num_users, graphs.num_items, cfg);
  for (auto* p : {&state.visited, &state.unvisited})
    for (auto* m : p->tables())
      for (auto& x : m->flat()) x *= 4.0;
  const auto before = state;

  CounterRng rng(6);
  const auto batch = sample_bpr_batch(graphs.buys(), 12, rng);
  const auto negs = sample_generative_negatives(graphs, 1, CounterRng(7));
  train_step(state, plans, graphs, batch, negs, cfg);

  DenseBpr loss{log, batch, 2};
  auto v = before.visited, w = before.unvisited;
  auto f = [&] { return loss(v, w, graphs); };
  std::size_t checked = 0;
  for (int which = 0; which < 2; ++which) {
    auto& p = which == 0 ? v : w;
    const auto& after = which == 0 ? state.visited : state.unvisited;
    const auto& orig = which == 0 ? before.visited : before.unvisited;
    auto pt = p.tables();
    auto at = const_cast<ExpertParams<double>&>(after).tables();
    auto ot = const_cast<ExpertParams<double>&>(orig).tables();
    for (std::size_t t = 0; t < pt.size(); ++t)
      for (std::size_t k = 0; k < pt[t]->size(); ++k) {
        const double g = oracle::central_difference(f, pt[t]->flat()[k], 1e-6);
        const double step = ot[t]->flat()[k] - at[t]->flat()[k];
        if (std::abs(g) < 1e-5) {
          CHECK(std::abs(step) <= cfg.learning_rate * (1 + 1e-9));
          continue;
        }
        ++checked;
        CHECK_THAT(step, WithinRel(cfg.learning_rate * g / (std::abs(g) + 1e-8), 1e-3));
      }
  }
  CHECK(checked > 20);
}

TEST_CASE("train_step: small steps descend the objectives", "[trainer]") {
  const auto toy = fixture::Toy::make(8, 10, 12, 60);
  auto cfg = small_config();
  cfg.learning_rate = 1e-4;
  auto state = init_model_state<double>(10, 12, cfg);
  CounterRng rng(8);
  const auto batch = sample_bpr_batch(toy.graphs.buys(), 20, rng);
  const auto negs = sample_generative_negatives(toy.graphs, 1, CounterRng(9));
  const auto first = train_step(state, toy.plans, toy.graphs, batch, negs, cfg);
  LossBreakdown last;
  for (int s = 0; s < 5; ++s) last = train_step(state, toy.plans, toy.graphs, batch, negs, cfg);
  CHECK(last.total_visited_objective < first.total_visited_objective);
  CHECK(last.total_unvisited_objective < first.total_unvisited_objective);
  CHECK(state.version == 6);
  CHECK(state.visited.version == 6);
}

TEST_CASE("train_step: each expert's delta ignores the other expert's weights", "[trainer][property]") {
  const auto toy = fixture::Toy::make(10, 8, 10, 50);
  const auto negs = sample_generative_negatives(toy.graphs, 1, CounterRng(12));
  auto cfg = small_config();
  auto state = init_model_state<double>(8, 10, cfg);
  for (std::uint64_t s = 1; s <= 10; ++s) {
    CounterRng rng = CounterRng(11).split(s);
    const auto batch = sample_bpr_batch(toy.graphs.buys(), 16, rng);
    auto with = [&](double g1, double g2, double g3) {
      auto c = cfg;
      c.gamma1 = g1, c.gamma2 = g2, c.gamma3 = g3;
      auto next = state;
      train_step(next, toy.plans, toy.graphs, batch, negs, c);
      return next;
    };
    const auto g1_off = with(0, 0.1, 0.1), g1_on = with(1, 0.1, 0.1);
    CHECK(same_params(g1_off.unvisited, g1_on.unvisited));
    CHECK_FALSE(same_params(g1_off.visited, g1_on.visited));
    const auto u_off = with(0.1, 0, 0), u_on = with(0.1, 1, 1);
    CHECK(same_params(u_off.visited, u_on.visited));
    CHECK_FALSE(same_params(u_off.unvisited, u_on.unvisited));
    train_step(state, toy.plans, toy.graphs, batch, negs, cfg);
  }
}

TEST_CASE("train_step: trajectories stay isolated without mixed triplets", "[trainer][property]") {
  // When no triplet pairs a visited with an unvisited item, neither expert's
  // BPR gradient reads the other expert's scores.
  const auto toy = fixture::Toy::make(13, 8, 10, 60);
  const auto negs = sample_generative_negatives(toy.graphs, 1, CounterRng(14));
  const auto& idx = toy.graphs.visited;
  std::vector<std::vector<Triplet>> batches;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    CounterRng rng = CounterRng(15).split(s);
    std::vector<Triplet> keep;
    for (const auto& t : sample_bpr_batch(toy.graphs.buys(), 40, rng))
      if (idx.visited(t.user, t.pos) == idx.visited(t.user, t.neg)) keep.push_back(t);
    REQUIRE_FALSE(keep.empty());
    batches.push_back(keep);
  }
  auto run = [&](double g1, double g2, double g3) {
    auto cfg = small_config();
    cfg.gamma1 = g1, cfg.gamma2 = g2, cfg.gamma3 = g3;
    auto state = init_model_state<double>(8, 10, cfg);
    for (const auto& b : batches) train_step(state, toy.plans, toy.graphs, b, negs, cfg);
    return state;
  };
  CHECK(same_params(run(0, 0.1, 0.1).unvisited, run(1, 0.1, 0.1).unvisited));
  CHECK(same_params(run(0.1, 0, 0).visited, run(0.1, 1, 1).visited));
}

TEST_CASE("fit: zero epochs, determinism and configuration errors", "[trainer]") {
  const auto split = funnel_split(60, 40, 1);
  const auto graphs = TrainingGraphs::build(split.train);
  auto cfg = small_config();
  cfg.max_epochs = 0;
  const auto none = fit<double>(split, graphs, cfg);
  CHECK(none.log.empty());
  const auto init = init_model_state<double>(graphs.num_users, graphs.num_items, cfg);
  CHECK(same_params(none.final.visited, init.visited));

  cfg.max_epochs = 2;
  cfg.early_stopping = false;
  const auto a = fit<double>(split, graphs, cfg);
  const auto b = fit<double>(split, graphs, cfg);
  CHECK(a.log.size() == 2);
  CHECK(same_params(a.final.visited, b.final.visited));
  CHECK(same_params(a.final.unvisited, b.final.unvisited));
  CHECK(a.log[1].val_hr10 == b.log[1].val_hr10);

  auto no_valid = split;
  no_valid.validation.clear();
  cfg.early_stopping = true;
  CHECK_THROWS_AS(fit<double>(no_valid, graphs, cfg), ConfigError);
  cfg.early_stopping = false;
  CHECK_NOTHROW(fit<double>(no_valid, graphs, cfg));

  auto bad = cfg;
  bad.lambda_visited = 1.0;
  CHECK_THROWS_AS(fit<double>(split, graphs, bad), ConfigError);

  const auto buys_only = oracle::parse("a\tx\tbuy\t1\na\ty\tbuy\t2\nb\ty\tbuy\t1\nb\tx\tbuy\t2\n", {"buy"});
  const auto s1 = split_leave_one_out(buys_only, 0, false);
  const auto g1 = TrainingGraphs::build(s1.train);
  cfg.gamma3 = 0.1;
  CHECK_THROWS_AS(fit<double>(s1, g1, cfg), ConfigError);
  cfg.gamma3 = 0.0;
  CHECK_NOTHROW(fit<double>(s1, g1, cfg));
}

TEST_CASE("fit: early stopping respects patience", "[trainer]") {
  const auto split = funnel_split(60, 40, 2);
  const auto graphs = TrainingGraphs::build(split.train);
  auto cfg = small_config();
  cfg.learning_rate = 0.0;  // validation never improves after epoch 1
  cfg.max_epochs = 50;
  cfg.patience = 3;
  const auto r = fit<double>(split, graphs, cfg);
  CHECK(r.log.size() == 4);
}

TEST_CASE("fit: training improves validation hit ratio on funnel data", "[trainer]") {
  const auto split = funnel_split(300, 120, 3);
  const auto graphs = TrainingGraphs::build(split.train);
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.batch_size = 256;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 15;
  cfg.early_stopping = false;
  cfg.seed = 4;
  const auto r = fit<double>(split, graphs, cfg);
  REQUIRE(r.log.size() == 15);
  const double start = *r.log.front().val_hr10, end = *r.log.back().val_hr10;
  INFO("val HR@10 " << start << " -> " << end);
  CHECK(end > start);
  CHECK(r.log.back().losses.bpr < r.log.front().losses.bpr);

  auto cf = cfg;
  cf.precision = Precision::single;
  cf.max_epochs = 3;
  const auto rf = fit<float>(split, graphs, cf);
  CHECK(rf.log.back().losses.finite());
}
