#pragma once

// Synthetic interaction logs: a planted-cluster purchase funnel for
// end-to-end checks, and small unstructured random logs for property tests.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "member/interactions.hpp"
#include "member/random.hpp"

namespace member {

struct FunnelConfig {
  std::size_t num_users = 500;
  std::size_t num_items = 200;
  std::size_t clusters = 2;
  std::size_t clicks_per_user = 15;
  std::size_t carts_per_user = 4;
  std::size_t min_buys = 3;
  std::size_t max_buys = 6;
  double unvisited_buy_fraction = 0.3;  // buys with no click/cart precursor
  double in_cluster = 0.9;              // chance a draw stays in the user's cluster
  double popularity_skew = 0.8;         // Zipf exponent inside a cluster
  std::uint64_t seed = 0;
};

namespace detail {

// Draws from a discrete distribution given by cumulative weights.
inline std::size_t draw_cumulative(std::span<const double> cumulative, CounterRng& rng) {
  const double x = rng.uniform() * cumulative.back();
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
}

}  // namespace detail

// Users and items are split into clusters (index mod clusters). Each user
// clicks popular items of its own cluster, carts a few clicked items and
// buys mostly clicked items; a fixed share of buys goes to unclicked items
// of the cluster. Auxiliary records precede all buys in time and the buy
// order is random, so the latest buy is a uniform pick among a user's buys.
inline InteractionLog generate_funnel(const FunnelConfig& cfg) {
  if (cfg.clusters == 0 || cfg.num_items < cfg.clusters) throw ConfigError("funnel needs clusters <= items");
  if (cfg.min_buys > cfg.max_buys) throw ConfigError("min_buys exceeds max_buys");
  const std::size_t per_cluster = cfg.num_items / cfg.clusters;
  if (cfg.clicks_per_user + cfg.max_buys > per_cluster) throw ConfigError("cluster too small for the funnel");

  const CounterRng root = CounterRng(cfg.seed).split("funnel");
  std::vector<std::vector<Index>> members(cfg.clusters);
  for (Index i = 0; i < cfg.num_items; ++i) members[i % cfg.clusters].push_back(i);
  std::vector<std::vector<double>> cumulative(cfg.clusters);
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < members[c].size(); ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), cfg.popularity_skew);
      cumulative[c].push_back(acc);
    }
  }

  std::ostringstream text;
  for (Index u = 0; u < cfg.num_users; ++u) {
    CounterRng rng = root.split(u);
    const std::size_t c = u % cfg.clusters;
    std::vector<char> clicked(cfg.num_items, 0), bought(cfg.num_items, 0);
    std::vector<Index> clicks;
    auto draw_item = [&](bool stay) -> Index {
      const std::size_t cl = stay ? c : rng.uniform_index(cfg.clusters);
      return members[cl][detail::draw_cumulative(cumulative[cl], rng)];
    };
    while (clicks.size() < cfg.clicks_per_user) {
      const Index i = draw_item(rng.uniform() < cfg.in_cluster);
      if (clicked[i]) continue;
      clicked[i] = 1;
      clicks.push_back(i);
    }
    std::int64_t ts = 0;
    for (Index i : clicks) text << 'u' << u << "\ti" << i << "\tclick\t" << ts++ << '\n';
    std::vector<Index> carts(clicks.begin(), clicks.end());
    shuffle(carts.begin(), carts.end(), rng);
    carts.resize(std::min(cfg.carts_per_user, carts.size()));
    for (Index i : carts) text << 'u' << u << "\ti" << i << "\tcart\t" << ts++ << '\n';

    const std::size_t num_buys = cfg.min_buys + rng.uniform_index(cfg.max_buys - cfg.min_buys + 1);
    std::vector<Index> buys;
    while (buys.size() < num_buys) {
      Index i;
      if (rng.uniform() < cfg.unvisited_buy_fraction) {
        i = draw_item(true);
        if (clicked[i]) continue;
      } else {
        // Carted items are twice as likely to convert.
        i = rng.uniform() < 0.5 && !carts.empty() ? carts[rng.uniform_index(carts.size())]
                                                  : clicks[rng.uniform_index(clicks.size())];
      }
      if (bought[i]) continue;
      bought[i] = 1;
      buys.push_back(i);
    }
    shuffle(buys.begin(), buys.end(), rng);
    ts = 1000;
    for (Index i : buys) text << 'u' << u << "\ti" << i << "\tbuy\t" << ts++ << '\n';
  }
  std::istringstream in(text.str());
  return parse_interactions(in, Schema{{"click", "cart", "buy"}});
}

// Unstructured log: up to max_edges records over at most max_users users
// and max_items items, behaviors drawn uniformly, optional timestamps with
// deliberate ties and duplicate records.
inline InteractionLog random_log(CounterRng& rng, std::size_t max_users, std::size_t max_items, std::size_t max_edges,
                                 const std::vector<std::string>& behaviors, bool timestamps) {
  const std::size_t nu = 1 + rng.uniform_index(max_users);
  const std::size_t ni = 1 + rng.uniform_index(max_items);
  const std::size_t n = 1 + rng.uniform_index(max_edges);
  std::ostringstream text;
  for (std::size_t k = 0; k < n; ++k) {
    text << 'u' << rng.uniform_index(nu) << "\ti" << rng.uniform_index(ni) << '\t'
         << behaviors[rng.uniform_index(behaviors.size())];
    if (timestamps) text << '\t' << rng.uniform_index(n / 2 + 1);
    text << '\n';
  }
  std::istringstream in(text.str());
  return parse_interactions(in, Schema{behaviors});
}

}  // namespace member
