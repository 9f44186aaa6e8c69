#include <catch_amalgamated.hpp>

#include <sstream>

#include "oracles.hpp"

using namespace member;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

FunctionRanker matrix_ranker(const std::vector<std::vector<double>>& m, std::string name = "m") {
  return FunctionRanker(std::move(name), m.empty() ? 0 : m[0].size(), [&m](Index u, std::span<double> out) {
    std::copy(m[u].begin(), m[u].end(), out.begin());
  });
}

constexpr Protocol kAll[] = {Protocol::standard, Protocol::visited, Protocol::unvisited};
constexpr int kKs[] = {1, 5, 10, 20};

}  // namespace

TEST_CASE("rank_standard: order and ties", "[evaluator]") {
  const std::vector<double> s = {0.1, 0.9, 0.5};
  CHECK(rank_standard(s, std::span<const Index>{}) == std::vector<Index>{1, 2, 0});
  const std::vector<double> tie = {0.5, 0.5};
  CHECK(rank_standard(tie, std::span<const Index>{}) == std::vector<Index>{0, 1});
  const std::vector<Index> ex = {1};
  CHECK(rank_standard(s, ex) == std::vector<Index>{2, 0});
}

TEST_CASE("rank_standard matches a stable sort", "[evaluator][property]") {
  CounterRng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> s(50);
    // Coarse values so ties occur.
    for (auto& x : s) x = std::floor(rng.uniform() * 10) / 10;
    std::vector<Index> expect(50);
    std::iota(expect.begin(), expect.end(), Index{0});
    std::stable_sort(expect.begin(), expect.end(), [&](Index a, Index b) { return s[a] > s[b]; });
    CHECK(rank_standard(s, std::span<const Index>{}) == expect);
  }
}

TEST_CASE("rank_typed restricts the pool", "[evaluator]") {
  const std::vector<double> s = {0.3, 0.1, 0.2, 0.9, 0.4, 0.8};
  std::vector<char> mask(6, 0);
  mask[2] = mask[5] = 1;
  const std::vector<Index> none;
  CHECK(rank_typed(s, ItemType::visited, mask, none) == std::vector<Index>{5, 2});
  const std::vector<Index> ex5 = {5};
  CHECK(rank_typed(s, ItemType::visited, mask, ex5) == std::vector<Index>{2});
  const std::vector<char> empty(6, 0);
  CHECK(rank_typed(s, ItemType::unvisited, empty, none).size() == 6);
  CHECK(rank_typed(s, ItemType::unvisited, mask, none) == std::vector<Index>{3, 4, 0, 1});
}

TEST_CASE("metrics: closed forms", "[evaluator]") {
  CHECK(hit_ratio(1, 10) == 1.0);
  CHECK(ndcg(1, 10) == 1.0);
  CHECK_THAT(ndcg(2, 10), WithinAbs(0.63093, 1e-5));
  CHECK(hit_ratio(11, 10) == 0.0);
  CHECK(ndcg(11, 10) == 0.0);
  CHECK(hit_ratio(10, 10) == 1.0);
  CHECK_THROWS_AS(hit_ratio(0, 10), IndexError);
  CHECK_THROWS_AS(ndcg(0, 10), IndexError);
  CHECK_THROWS_AS(ndcg(1, 0), ConfigError);
}

TEST_CASE("evaluate: mean over users and absent values", "[evaluator]") {
  // Item 0 always scores highest; user 1's target is last of 12.
  std::vector<std::vector<double>> m(2, std::vector<double>(12));
  for (auto& row : m)
    for (std::size_t i = 0; i < 12; ++i) row[i] = 12.0 - i;
  const auto r = matrix_ranker(m);
  const std::vector<HeldOutPair> pairs = {{0, 0, ItemType::unvisited}, {1, 11, ItemType::unvisited}};
  const auto buys = BehaviorGraph::from_edges("buy", 2, 12, {});
  const VisitedIndex idx(12, {{}, {}});
  const auto rep = evaluate(r, pairs, buys, idx, kAll, kKs);
  CHECK(rep.value("m", Protocol::standard, Metric::hr, 10) == 0.5);
  CHECK(rep.value("m", Protocol::unvisited, Metric::hr, 10) == 0.5);
  // No visited pairs: absent, not zero.
  const auto* row = rep.find("m", Protocol::visited, Metric::hr, 10);
  REQUIRE(row != nullptr);
  CHECK_FALSE(row->value.has_value());
  CHECK(row->n == 0);
  CHECK_THROWS_AS(evaluate(r, pairs, buys, idx, kAll, std::span<const int>{}), ConfigError);
}

TEST_CASE("evaluate: training buys are excluded and empty pools skipped", "[evaluator]") {
  std::vector<std::vector<double>> m = {{5, 4, 3, 2}};
  const auto r = matrix_ranker(m);
  const auto buys = BehaviorGraph::from_edges("buy", 1, 4, {{0, 0}, {0, 1}});
  const VisitedIndex idx(4, {{3}});
  const std::vector<HeldOutPair> pairs = {{0, 2, ItemType::unvisited}};
  const auto rep = evaluate(r, pairs, buys, idx, kAll, kKs);
  CHECK(rep.value("m", Protocol::standard, Metric::hr, 1) == 1.0);
  CHECK(rep.value("m", Protocol::unvisited, Metric::hr, 1) == 1.0);

  // Held-out item among training buys: nothing to rank, recorded as skipped.
  const std::vector<HeldOutPair> bad = {{0, 0, ItemType::unvisited}};
  const auto skipped = evaluate(r, bad, buys, idx, kAll, kKs);
  CHECK_FALSE(skipped.value("m", Protocol::standard, Metric::hr, 10).has_value());
  CHECK(skipped.notes.size() == 2);
}

TEST_CASE("evaluate: oracle scorer is perfect under every protocol", "[evaluator]") {
  const auto toy = fixture::Toy::make(3, 20, 30, 200);
  std::vector<HeldOutPair> pairs;
  CounterRng rng(4);
  for (Index u = 0; u < 20; ++u) {
    Index i;
    do i = static_cast<Index>(rng.uniform_index(30));
    while (toy.graphs.buys().contains({u, i}));
    pairs.push_back({u, i, toy.graphs.visited.type_of(u, i)});
  }
  const auto r = oracle_ranker(pairs, 30);
  const auto rep = evaluate(r, pairs, toy.graphs.buys(), toy.graphs.visited, kAll, kKs);
  for (const auto& row : rep.rows)
    if (row.n > 0) CHECK(row.value == 1.0);
  CHECK(rep.find("oracle", Protocol::visited, Metric::hr, 10)->n +
            rep.find("oracle", Protocol::unvisited, Metric::hr, 10)->n ==
        20);
}

TEST_CASE("evaluate matches a brute-force evaluator", "[evaluator][property]") {
  CounterRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nu = 1 + rng.uniform_index(12), ni = 2 + rng.uniform_index(30);
    std::vector<std::vector<double>> m(nu, std::vector<double>(ni));
    for (auto& row : m)
      for (auto& x : row) x = std::round(rng.uniform(-3, 3) * 4) / 4;
    std::vector<std::vector<Index>> visited(nu);
    std::vector<Edge> bought;
    for (Index u = 0; u < nu; ++u)
      for (Index i = 0; i < ni; ++i) {
        const double x = rng.uniform();
        if (x < 0.2) visited[u].push_back(i);
        else if (x < 0.3) bought.push_back({u, i});
      }
    const auto buys = BehaviorGraph::from_edges("buy", nu, ni, bought);
    const VisitedIndex idx(ni, visited);
    std::vector<HeldOutPair> pairs;
    for (Index u = 0; u < nu; ++u) {
      const Index i = static_cast<Index>(rng.uniform_index(ni));
      pairs.push_back({u, i, idx.type_of(u, i)});
    }
    const auto r = matrix_ranker(m);
    const auto rep = evaluate(r, pairs, buys, idx, kAll, kKs);

    for (auto p : kAll)
      for (int k : kKs) {
        double hr = 0, nd = 0;
        std::size_t n = 0;
        for (const auto& pr : pairs) {
          if (p == Protocol::visited && pr.label != ItemType::visited) continue;
          if (p == Protocol::unvisited && pr.label != ItemType::unvisited) continue;
          std::vector<char> pool(ni, 1);
          for (Index i = 0; i < ni; ++i) {
            if (buys.contains({pr.user, i})) pool[i] = 0;
            if (p == Protocol::visited && !idx.visited(pr.user, i)) pool[i] = 0;
            if (p == Protocol::unvisited && idx.visited(pr.user, i)) pool[i] = 0;
          }
          const auto rank = oracle::brute_rank(pr.item, m[pr.user], pool);
          if (rank == 0) continue;
          ++n;
          hr += oracle::brute_hr(rank, k);
          nd += oracle::brute_ndcg(rank, k);
        }
        const auto* hr_row = rep.find("m", p, Metric::hr, k);
        const auto* nd_row = rep.find("m", p, Metric::ndcg, k);
        REQUIRE(hr_row);
        REQUIRE(nd_row);
        CHECK(hr_row->n == n);
        if (n == 0) {
          CHECK_FALSE(hr_row->value.has_value());
          continue;
        }
        CHECK(*hr_row->value == hr / n);
        CHECK_THAT(*nd_row->value, WithinAbs(nd / n, 1e-15));
      }
  }
}

TEST_CASE("evaluate: metrics are monotone in K and bounded", "[evaluator][property]") {
  CounterRng rng(6);
  std::vector<std::vector<double>> m(40, std::vector<double>(60));
  for (auto& row : m)
    for (auto& x : row) x = rng.uniform();
  std::vector<HeldOutPair> pairs;
  for (Index u = 0; u < 40; ++u) pairs.push_back({u, static_cast<Index>(rng.uniform_index(60)), ItemType::unvisited});
  const auto r = matrix_ranker(m);
  const int ks[] = {1, 2, 5, 10, 20, 40, 60};
  const auto rep = evaluate(r, pairs, BehaviorGraph::from_edges("buy", 40, 60, {}), VisitedIndex(60, std::vector<std::vector<Index>>(40)), kAll,
                            ks);
  for (auto metric : {Metric::hr, Metric::ndcg}) {
    double prev = 0;
    for (int k : ks) {
      const double v = *rep.value("m", Protocol::standard, metric, k);
      CHECK(v >= prev);
      CHECK(v <= 1.0);
      prev = v;
    }
  }
  CHECK(rep.value("m", Protocol::standard, Metric::hr, 60) == 1.0);
}

TEST_CASE("evaluate: random scores give the null hit ratio", "[evaluator][property]") {
  const std::size_t users = 200, items = 100;
  const auto buys = BehaviorGraph::from_edges("buy", users, items, {});
  const VisitedIndex idx(items, std::vector<std::vector<Index>>(users));
  const double sd = std::sqrt(0.1 * 0.9 / users);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CounterRng rng(100 + seed);
    std::vector<std::vector<double>> m(users, std::vector<double>(items));
    for (auto& row : m)
      for (auto& x : row) x = rng.uniform();
    std::vector<HeldOutPair> pairs;
    for (Index u = 0; u < users; ++u)
      pairs.push_back({u, static_cast<Index>(rng.uniform_index(items)), ItemType::unvisited});
    const Protocol std_only[] = {Protocol::standard};
    const int k10[] = {10};
    const auto rep = evaluate(matrix_ranker(m), pairs, buys, idx, std_only, k10);
    CHECK_THAT(*rep.value("m", Protocol::standard, Metric::hr, 10), WithinAbs(0.1, 3 * sd));
  }
}

TEST_CASE("typed rankings merge back into the standard ranking", "[evaluator][property]") {
  const auto toy = fixture::Toy::make(7, 15, 25, 120);
  const auto v = fixture::random_expert(ExpertRole::visited, 15, 25, 4, 0.4, CounterRng(1));
  const auto w = fixture::random_expert(ExpertRole::unvisited, 15, 25, 4, 0.6, CounterRng(2));
  const MemberRanker<double> model(encode(v, toy.plans), encode(w, toy.plans), {0.4, 0.6}, toy.graphs.visited);
  for (Index u = 0; u < 15; ++u) {
    std::vector<Index> excluded;
    for (const auto& e : toy.graphs.buys().user_edges(u)) excluded.push_back(e.item);
    const auto vis = rank_typed(model, u, ItemType::visited, toy.graphs.visited, excluded);
    const auto unv = rank_typed(model, u, ItemType::unvisited, toy.graphs.visited, excluded);
    std::vector<double> sv(25), su(25);
    model.score_typed(u, ItemType::visited, sv);
    model.score_typed(u, ItemType::unvisited, su);
    std::vector<Index> merged;
    std::size_t a = 0, b = 0;
    while (a < vis.size() || b < unv.size()) {
      bool take_v = b == unv.size();
      if (a < vis.size() && b < unv.size()) {
        const double x = sv[vis[a]], y = su[unv[b]];
        take_v = x > y || (x == y && vis[a] < unv[b]);
      }
      merged.push_back(take_v ? vis[a++] : unv[b++]);
    }
    CHECK(merged == rank_standard(model, u, excluded));
  }
}

TEST_CASE("gap analysis", "[evaluator]") {
  auto row = [](std::string m, Protocol p, double v) { return MetricRow{m, p, Metric::hr, 10, v, 5}; };
  EvalReport same;
  same.rows = {row("a", Protocol::visited, 0.4), row("a", Protocol::unvisited, 0.4),
               row("b", Protocol::visited, 0.3), row("b", Protocol::unvisited, 0.3)};
  const auto g = gap_analysis(std::vector<EvalReport>{same});
  REQUIRE(g.models.size() == 2);
  CHECK(g.models[0].ratio == 1.0);
  CHECK(g.rankings.at(Protocol::visited) == g.rankings.at(Protocol::unvisited));
  CHECK_FALSE(g.rank_divergence);

  EvalReport a, b;
  a.rows = {row("a", Protocol::visited, 0.6), row("a", Protocol::unvisited, 0.1)};
  b.rows = {row("b", Protocol::visited, 0.4), row("b", Protocol::unvisited, 0.2)};
  const auto d = gap_analysis(std::vector<EvalReport>{a, b});
  CHECK(d.rank_divergence);
  CHECK(d.rankings.at(Protocol::visited).front() == "a");
  CHECK(d.rankings.at(Protocol::unvisited).front() == "b");
  CHECK_THAT(*d.models[0].ratio, WithinRel(6.0, 1e-12));

  EvalReport partial;
  partial.rows = {row("c", Protocol::visited, 0.5)};
  const auto p = gap_analysis(std::vector<EvalReport>{a, partial});
  CHECK(p.models.size() == 1);
  CHECK_FALSE(p.notes.empty());

  EvalReport zero;
  zero.rows = {row("z", Protocol::visited, 0.5), row("z", Protocol::unvisited, 0.0)};
  CHECK_FALSE(gap_analysis(std::vector<EvalReport>{zero}).models[0].ratio.has_value());
}

TEST_CASE("report rows survive a jsonl roundtrip", "[evaluator]") {
  EvalReport r;
  r.rows = {{"member", Protocol::visited, Metric::ndcg, 20, 0.125, 17},
            {"mf_bpr", Protocol::unvisited, Metric::hr, 10, std::nullopt, 0}};
  std::stringstream buf;
  write_jsonl(buf, r);
  CHECK(read_jsonl(buf).rows == r.rows);
  std::stringstream bad("{\"model\":1}\n");
  CHECK_THROWS_AS(read_jsonl(bad), ParseError);
  std::ostringstream table;
  write_table(table, r);
  CHECK(table.str().find("0.1250") != std::string::npos);
}
