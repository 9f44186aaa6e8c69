#pragma once

// Interaction store: ingestion, per-behavior graphs, visited/unvisited item
// sets, the visited-purchase / remaining edge partition and leave-one-out
// splits. Everything here is immutable once built.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "member/error.hpp"
#include "member/random.hpp"

namespace member {

using Index = std::uint32_t;

inline constexpr std::string_view kTargetBehavior = "buy";
inline constexpr std::string_view kGlobalLabel = "global";
inline constexpr std::string_view kVisitedPurchaseLabel = "V";
inline constexpr std::string_view kRemainingLabel = "R";

enum class ItemType { visited, unvisited };

inline std::string_view to_string(ItemType t) { return t == ItemType::visited ? "visited" : "unvisited"; }

struct Interaction {
  Index user = 0;
  Index item = 0;
  Index behavior = 0;
  std::optional<std::int64_t> timestamp;

  bool operator==(const Interaction&) const = default;
};

struct InteractionLog {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::string> behaviors;  // funnel order, earliest first
  std::vector<Interaction> records;
  std::vector<std::string> user_ids;   // index -> raw id
  std::vector<std::string> item_ids;
  std::vector<std::size_t> raw_counts;  // per behavior, before dedup

  std::optional<std::size_t> find_behavior(std::string_view name) const {
    for (std::size_t b = 0; b < behaviors.size(); ++b)
      if (behaviors[b] == name) return b;
    return std::nullopt;
  }

  std::size_t behavior_index(std::string_view name) const {
    if (auto b = find_behavior(name)) return *b;
    throw SchemaError("unknown behavior '" + std::string(name) + "'");
  }

  std::size_t buy_behavior() const { return behavior_index(kTargetBehavior); }

  std::vector<std::size_t> dedup_counts() const {
    std::vector<std::size_t> counts(behaviors.size(), 0);
    for (const auto& r : records) ++counts[r.behavior];
    return counts;
  }

  bool has_timestamps() const {
    return !records.empty() &&
           std::all_of(records.begin(), records.end(), [](const auto& r) { return r.timestamp.has_value(); });
  }

  bool operator==(const InteractionLog&) const = default;
};

// Declared behavior set in funnel order (e.g. click, collect, cart, buy).
struct Schema {
  std::vector<std::string> behaviors;

  void validate() const {
    if (behaviors.empty()) throw SchemaError("schema declares no behaviors");
    bool has_buy = false;
    for (std::size_t a = 0; a < behaviors.size(); ++a) {
      const auto& name = behaviors[a];
      if (name.empty()) throw SchemaError("empty behavior name");
      if (name == kGlobalLabel || name == kVisitedPurchaseLabel || name == kRemainingLabel)
        throw SchemaError("behavior name '" + name + "' is reserved");
      for (std::size_t b = a + 1; b < behaviors.size(); ++b)
        if (behaviors[b] == name) throw SchemaError("duplicate behavior '" + name + "'");
      has_buy |= name == kTargetBehavior;
    }
    if (!has_buy) throw SchemaError("schema must declare the 'buy' behavior");
  }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  const bool tabbed = line.find('\t') != std::string_view::npos;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    if (tabbed) {
      const auto end = line.find('\t', pos);
      fields.push_back(line.substr(pos, end == std::string_view::npos ? line.size() - pos : end - pos));
      if (end == std::string_view::npos) break;
      pos = end + 1;
    } else {
      while (pos < line.size() && (line[pos] == ' ')) ++pos;
      if (pos >= line.size()) break;
      auto end = line.find(' ', pos);
      if (end == std::string_view::npos) end = line.size();
      fields.push_back(line.substr(pos, end - pos));
      pos = end;
    }
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

}  // namespace detail

// Parses `user item behavior [timestamp]` lines, tab separated (a line with
// no tab is split on spaces). Lines starting with '#' and blank lines are
// skipped. Ids are remapped to 0-based indices in order of first appearance;
// duplicate (user, item, behavior) triples keep the earliest timestamp.
inline InteractionLog parse_interactions(std::istream& in, const Schema& schema) {
  schema.validate();
  InteractionLog log;
  log.behaviors = schema.behaviors;
  log.raw_counts.assign(schema.behaviors.size(), 0);

  std::unordered_map<std::string, Index> user_index, item_index;
  std::unordered_map<std::string_view, Index> behavior_index;
  for (std::size_t b = 0; b < log.behaviors.size(); ++b)
    behavior_index.emplace(log.behaviors[b], static_cast<Index>(b));

  struct KeyHash {
    std::size_t operator()(const std::tuple<Index, Index, Index>& k) const {
      const auto [u, i, b] = k;
      return mix64((static_cast<std::uint64_t>(u) << 32 | i) ^ (static_cast<std::uint64_t>(b) << 58));
    }
  };
  std::unordered_map<std::tuple<Index, Index, Index>, std::size_t, KeyHash> seen;

  auto intern = [](std::unordered_map<std::string, Index>& map, std::vector<std::string>& names,
                   std::string_view raw) {
    auto [it, inserted] = map.try_emplace(std::string(raw), static_cast<Index>(names.size()));
    if (inserted) names.emplace_back(raw);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  std::size_t data_lines = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    ++data_lines;
    const auto fields = detail::split_fields(text);
    if (fields.size() != 3 && fields.size() != 4)
      throw ParseError(line_no, "expected 3 or 4 fields, got " + std::to_string(fields.size()));
    for (auto f : fields)
      if (f.empty()) throw ParseError(line_no, "empty field");

    const auto bit = behavior_index.find(fields[2]);
    if (bit == behavior_index.end())
      throw SchemaError("line " + std::to_string(line_no) + ": unknown behavior '" + std::string(fields[2]) + "'");

    std::optional<std::int64_t> ts;
    if (fields.size() == 4) {
      std::int64_t value = 0;
      std::istringstream parse{std::string(fields[3])};
      if (!(parse >> value) || !parse.eof())
        throw ParseError(line_no, "malformed timestamp '" + std::string(fields[3]) + "'");
      ts = value;
    }

    const Index u = intern(user_index, log.user_ids, fields[0]);
    const Index i = intern(item_index, log.item_ids, fields[1]);
    const Index b = bit->second;
    ++log.raw_counts[b];

    auto [it, inserted] = seen.try_emplace({u, i, b}, log.records.size());
    if (inserted) {
      log.records.push_back({u, i, b, ts});
    } else if (ts) {
      auto& kept = log.records[it->second].timestamp;
      if (!kept || *ts < *kept) kept = ts;
    }
  }
  if (data_lines == 0) throw EmptyInputError("no interaction records in input");
  log.num_users = log.user_ids.size();
  log.num_items = log.item_ids.size();
  return log;
}

inline InteractionLog load_interactions(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_interactions(in, schema);
}

// Writes records with their raw ids; parse_interactions on the output
// reproduces the same log except for raw_counts, which become dedup counts.
inline void write_interactions(std::ostream& out, const InteractionLog& log) {
  for (const auto& r : log.records) {
    out << log.user_ids[r.user] << '\t' << log.item_ids[r.item] << '\t' << log.behaviors[r.behavior];
    if (r.timestamp) out << '\t' << *r.timestamp;
    out << '\n';
  }
}

struct Edge {
  Index user = 0;
  Index item = 0;
  auto operator<=>(const Edge&) const = default;
};

// One bipartite edge set with degree tables. Edges are kept sorted and unique.
struct BehaviorGraph {
  std::string label;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Edge> edges;
  std::vector<std::size_t> user_degrees;
  std::vector<std::size_t> item_degrees;

  static BehaviorGraph from_edges(std::string label, std::size_t num_users, std::size_t num_items,
                                  std::vector<Edge> edges) {
    BehaviorGraph g;
    g.label = std::move(label);
    g.num_users = num_users;
    g.num_items = num_items;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    g.user_degrees.assign(num_users, 0);
    g.item_degrees.assign(num_items, 0);
    for (const auto& e : edges) {
      if (e.user >= num_users || e.item >= num_items) throw IndexError("edge endpoint outside universe");
      ++g.user_degrees[e.user];
      ++g.item_degrees[e.item];
    }
    g.edges = std::move(edges);
    return g;
  }

  std::size_t num_edges() const { return edges.size(); }

  bool contains(Edge e) const { return std::binary_search(edges.begin(), edges.end(), e); }

  // Items of user u; edges are sorted by (user, item) so this is a range.
  std::span<const Edge> user_edges(Index u) const {
    auto lo = std::lower_bound(edges.begin(), edges.end(), Edge{u, 0});
    auto hi = std::lower_bound(lo, edges.end(), Edge{u + 1, 0});
    return {edges.data() + (lo - edges.begin()), static_cast<std::size_t>(hi - lo)};
  }
};

inline BehaviorGraph build_behavior_graph(const InteractionLog& log, std::string_view behavior) {
  const auto b = log.behavior_index(behavior);
  std::vector<Edge> edges;
  for (const auto& r : log.records)
    if (r.behavior == b) edges.push_back({r.user, r.item});
  return BehaviorGraph::from_edges(std::string(behavior), log.num_users, log.num_items, std::move(edges));
}

inline BehaviorGraph build_global_graph(std::span<const BehaviorGraph> graphs) {
  if (graphs.empty()) throw EmptyInputError("global graph needs at least one behavior graph");
  std::vector<Edge> edges;
  for (const auto& g : graphs) {
    if (g.num_users != graphs[0].num_users || g.num_items != graphs[0].num_items)
      throw DimensionError("behavior graphs span different universes");
    edges.insert(edges.end(), g.edges.begin(), g.edges.end());
  }
  return BehaviorGraph::from_edges(std::string(kGlobalLabel), graphs[0].num_users, graphs[0].num_items,
                                   std::move(edges));
}

// Visited items per user: anything touched through an auxiliary behavior.
class VisitedIndex {
 public:
  VisitedIndex() = default;
  VisitedIndex(std::size_t num_items, std::vector<std::vector<Index>> per_user)
      : num_items_(num_items), visited_(std::move(per_user)) {
    for (auto& items : visited_) {
      std::sort(items.begin(), items.end());
      items.erase(std::unique(items.begin(), items.end()), items.end());
    }
  }

  std::size_t num_users() const { return visited_.size(); }
  std::size_t num_items() const { return num_items_; }

  bool visited(Index u, Index i) const {
    const auto& items = visited_.at(u);
    return std::binary_search(items.begin(), items.end(), i);
  }
  ItemType type_of(Index u, Index i) const { return visited(u, i) ? ItemType::visited : ItemType::unvisited; }

  std::span<const Index> visited_items(Index u) const { return visited_.at(u); }
  std::size_t visited_count(Index u) const { return visited_.at(u).size(); }
  std::size_t unvisited_count(Index u) const { return num_items_ - visited_count(u); }

  // Dense membership row for user u, 1 where visited.
  std::vector<char> mask(Index u) const {
    std::vector<char> m(num_items_, 0);
    for (Index i : visited_.at(u)) m[i] = 1;
    return m;
  }

 private:
  std::size_t num_items_ = 0;
  std::vector<std::vector<Index>> visited_;
};

inline VisitedIndex derive_visited_index(const InteractionLog& train) {
  const auto buy = train.find_behavior(kTargetBehavior);
  std::vector<std::vector<Index>> per_user(train.num_users);
  for (const auto& r : train.records)
    if (!buy || r.behavior != *buy) per_user[r.user].push_back(r.item);
  return VisitedIndex(train.num_items, std::move(per_user));
}

// E_V = E_buy ∩ (∪ auxiliary edges);  E_R = E_global \ E_V.
inline std::pair<BehaviorGraph, BehaviorGraph> derive_ssl_partitions(const InteractionLog& train) {
  std::vector<BehaviorGraph> graphs;
  for (const auto& name : train.behaviors) graphs.push_back(build_behavior_graph(train, name));
  const auto buy = train.buy_behavior();
  const auto global = build_global_graph(graphs);

  std::vector<Edge> auxiliary;
  for (std::size_t b = 0; b < graphs.size(); ++b)
    if (b != buy) auxiliary.insert(auxiliary.end(), graphs[b].edges.begin(), graphs[b].edges.end());
  std::sort(auxiliary.begin(), auxiliary.end());
  auxiliary.erase(std::unique(auxiliary.begin(), auxiliary.end()), auxiliary.end());

  std::vector<Edge> visited_purchases;
  std::set_intersection(graphs[buy].edges.begin(), graphs[buy].edges.end(), auxiliary.begin(), auxiliary.end(),
                        std::back_inserter(visited_purchases));
  std::vector<Edge> remaining;
  std::set_difference(global.edges.begin(), global.edges.end(), visited_purchases.begin(),
                      visited_purchases.end(), std::back_inserter(remaining));
  return {BehaviorGraph::from_edges(std::string(kVisitedPurchaseLabel), train.num_users, train.num_items,
                                    std::move(visited_purchases)),
          BehaviorGraph::from_edges(std::string(kRemainingLabel), train.num_users, train.num_items,
                                    std::move(remaining))};
}

struct HeldOutPair {
  Index user = 0;
  Index item = 0;
  ItemType label = ItemType::unvisited;
  bool operator==(const HeldOutPair&) const = default;
};

struct Split {
  InteractionLog train;
  std::vector<HeldOutPair> validation;
  std::vector<HeldOutPair> test;
  std::vector<Index> sparse_users;  // held-out users left with no training buy

  bool operator==(const Split&) const = default;
};

// Per user with at least two buys, the latest buy is held out for test and,
// with `valid`, the second latest for validation. Order comes from timestamps
// when every record has one; otherwise from a seeded shuffle (which also
// breaks timestamp ties).
inline Split split_leave_one_out(const InteractionLog& log, std::uint64_t seed, bool valid) {
  const auto buy = log.find_behavior(kTargetBehavior);
  if (!buy) throw SchemaError("log has no 'buy' behavior");
  const bool use_time = log.has_timestamps();
  const CounterRng root = CounterRng(seed).split("split");

  std::vector<std::vector<std::size_t>> buys(log.num_users);
  for (std::size_t k = 0; k < log.records.size(); ++k)
    if (log.records[k].behavior == *buy) buys[log.records[k].user].push_back(k);

  std::vector<char> held(log.records.size(), 0);
  std::vector<std::pair<Index, Index>> test_pairs, valid_pairs;
  std::vector<Index> sparse;
  for (Index u = 0; u < log.num_users; ++u) {
    auto& order = buys[u];
    if (order.size() < 2) continue;
    CounterRng rng = root.split(u);
    shuffle(order.begin(), order.end(), rng);
    if (use_time)
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return *log.records[a].timestamp < *log.records[b].timestamp;
      });
    const auto test_rec = order.back();
    held[test_rec] = 1;
    test_pairs.emplace_back(u, log.records[test_rec].item);
    std::size_t remaining = order.size() - 1;
    if (valid) {
      const auto valid_rec = order[order.size() - 2];
      held[valid_rec] = 1;
      valid_pairs.emplace_back(u, log.records[valid_rec].item);
      --remaining;
    }
    if (remaining == 0) sparse.push_back(u);
  }

  Split split;
  split.train = log;
  split.train.records.clear();
  for (std::size_t k = 0; k < log.records.size(); ++k)
    if (!held[k]) split.train.records.push_back(log.records[k]);

  const auto index = derive_visited_index(split.train);
  for (auto [u, i] : test_pairs) split.test.push_back({u, i, index.type_of(u, i)});
  for (auto [u, i] : valid_pairs) split.validation.push_back({u, i, index.type_of(u, i)});
  split.sparse_users = std::move(sparse);
  return split;
}

// Everything the model needs from a training log, derived once.
struct TrainingGraphs {
  std::vector<std::string> behaviors;
  std::vector<BehaviorGraph> behavior_graphs;  // same order as behaviors
  BehaviorGraph global;
  BehaviorGraph visited_purchases;  // E_V
  BehaviorGraph remaining;          // E_R
  VisitedIndex visited;
  std::size_t buy_behavior = 0;
  std::size_t num_users = 0;
  std::size_t num_items = 0;

  static TrainingGraphs build(const InteractionLog& train) {
    TrainingGraphs t;
    t.behaviors = train.behaviors;
    t.num_users = train.num_users;
    t.num_items = train.num_items;
    t.buy_behavior = train.buy_behavior();
    for (const auto& name : train.behaviors) t.behavior_graphs.push_back(build_behavior_graph(train, name));
    t.global = build_global_graph(t.behavior_graphs);
    std::tie(t.visited_purchases, t.remaining) = derive_ssl_partitions(train);
    t.visited = derive_visited_index(train);
    return t;
  }

  const BehaviorGraph& buys() const { return behavior_graphs[buy_behavior]; }
};

}  // namespace member
