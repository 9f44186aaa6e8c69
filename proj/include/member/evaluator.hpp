#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "member/expert.hpp"
#include "member/interactions.hpp"

namespace member {

enum class Protocol { standard, visited, unvisited };
enum class Metric { hr, ndcg };

inline std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::standard: return "standard";
    case Protocol::visited: return "visited";
    case Protocol::unvisited: return "unvisited";
  }
  return "?";
}
inline std::string_view to_string(Metric m) { return m == Metric::hr ? "HR" : "NDCG"; }

inline Protocol parse_protocol(std::string_view s) {
  if (s == "standard") return Protocol::standard;
  if (s == "visited") return Protocol::visited;
  if (s == "unvisited") return Protocol::unvisited;
  throw ConfigError("unknown protocol '" + std::string(s) + "'");
}
inline Metric parse_metric(std::string_view s) {
  if (s == "HR") return Metric::hr;
  if (s == "NDCG") return Metric::ndcg;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

// Anything that can score a user against the full item set. Typed scores
// are used by the visited/unvisited protocols; single-score models return
// the same vector for both.
class RankingModel {
 public:
  virtual ~RankingModel() = default;
  virtual std::string name() const = 0;
  virtual std::size_t num_items() const = 0;
  virtual void score_standard(Index u, std::span<double> out) const = 0;
  virtual void score_typed(Index u, ItemType type, std::span<double> out) const = 0;
};

// Two-expert model. Under the hard gate the standard score of a visited
// item is the visited expert's score, otherwise the unvisited expert's;
// typed protocols read the corresponding expert directly.
template <typename T>
class MemberRanker : public RankingModel {
 public:
  MemberRanker(EncodedExpert<T> visited, EncodedExpert<T> unvisited, Lambdas lambdas, const VisitedIndex& index,
               Gate gate = Gate::hard, std::string name = "member")
      : visited_(std::move(visited)),
        unvisited_(std::move(unvisited)),
        lambdas_(lambdas),
        index_(&index),
        gate_(gate),
        name_(std::move(name)) {}

  std::string name() const override { return name_; }
  std::size_t num_items() const override { return visited_.global.num_items(); }

  void score_standard(Index u, std::span<double> out) const override {
    std::vector<double> other(out.size());
    score_all(visited_, lambdas_.visited, u, out);
    score_all(unvisited_, lambdas_.unvisited, u, other);
    if (gate_ == Gate::average) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (out[i] + other[i]);
      return;
    }
    const auto mask = index_->mask(u);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!mask[i]) out[i] = other[i];
  }

  void score_typed(Index u, ItemType type, std::span<double> out) const override {
    if (gate_ == Gate::average) return score_standard(u, out);
    if (type == ItemType::visited)
      score_all(visited_, lambdas_.visited, u, out);
    else
      score_all(unvisited_, lambdas_.unvisited, u, out);
  }

  const EncodedExpert<T>& visited() const { return visited_; }
  const EncodedExpert<T>& unvisited() const { return unvisited_; }

 private:
  EncodedExpert<T> visited_;
  EncodedExpert<T> unvisited_;
  Lambdas lambdas_;
  const VisitedIndex* index_;
  Gate gate_;
  std::string name_;
};

// Single-score model built from a callback; used by baselines and tests.
class FunctionRanker : public RankingModel {
 public:
  using ScoreFn = std::function<void(Index, std::span<double>)>;
  FunctionRanker(std::string name, std::size_t num_items, ScoreFn fn)
      : name_(std::move(name)), num_items_(num_items), fn_(std::move(fn)) {}

  std::string name() const override { return name_; }
  std::size_t num_items() const override { return num_items_; }
  void score_standard(Index u, std::span<double> out) const override { fn_(u, out); }
  void score_typed(Index u, ItemType, std::span<double> out) const override { fn_(u, out); }

 private:
  std::string name_;
  std::size_t num_items_;
  ScoreFn fn_;
};

// Debug scorer placing each user's held-out item first (+inf).
inline FunctionRanker oracle_ranker(std::span<const HeldOutPair> pairs, std::size_t num_items) {
  std::map<Index, Index> target;
  for (const auto& p : pairs) target[p.user] = p.item;
  return FunctionRanker("oracle", num_items, [target](Index u, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    if (auto it = target.find(u); it != target.end()) out[it->second] = std::numeric_limits<double>::infinity();
  });
}

// Items sorted by score descending, ties by ascending id; `excluded` items
// are removed first.
inline std::vector<Index> rank_standard(std::span<const double> scores, std::span<const Index> excluded) {
  std::vector<char> drop(scores.size(), 0);
  for (Index i : excluded) drop.at(i) = 1;
  std::vector<Index> order;
  for (Index i = 0; i < scores.size(); ++i)
    if (!drop[i]) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  return order;
}

// Ranking restricted to the user's items of one type.
inline std::vector<Index> rank_typed(std::span<const double> scores, ItemType type, std::span<const char> visited_mask,
                                     std::span<const Index> excluded) {
  std::vector<Index> dropped(excluded.begin(), excluded.end());
  const char want = type == ItemType::visited ? 1 : 0;
  for (Index i = 0; i < scores.size(); ++i)
    if (visited_mask[i] != want) dropped.push_back(i);
  return rank_standard(scores, dropped);
}

inline std::vector<Index> rank_standard(const RankingModel& model, Index u, std::span<const Index> excluded) {
  std::vector<double> scores(model.num_items());
  model.score_standard(u, scores);
  return rank_standard(scores, excluded);
}

inline std::vector<Index> rank_typed(const RankingModel& model, Index u, ItemType type, const VisitedIndex& index,
                                     std::span<const Index> excluded) {
  std::vector<double> scores(model.num_items());
  model.score_typed(u, type, scores);
  const auto mask = index.mask(u);
  return rank_typed(scores, type, mask, excluded);
}

// 1-based position of `target` in the ranking of pool items (pool[i] != 0),
// computed by counting items ahead of it under the same ordering rule.
inline std::size_t rank_of(Index target, std::span<const double> scores, std::span<const char> pool) {
  const double s = scores[target];
  std::size_t ahead = 0;
  for (Index i = 0; i < scores.size(); ++i)
    if (pool[i] && i != target && (scores[i] > s || (scores[i] == s && i < target))) ++ahead;
  return ahead + 1;
}

inline void check_rank(std::size_t rank, int k) {
  if (rank < 1) throw IndexError("rank must be at least 1");
  if (k < 1) throw ConfigError("K must be at least 1");
}

inline double hit_ratio(std::size_t rank, int k) {
  check_rank(rank, k);
  return rank <= static_cast<std::size_t>(k) ? 1.0 : 0.0;
}

// Single relevant item, so the ideal DCG is 1.
inline double ndcg(std::size_t rank, int k) {
  check_rank(rank, k);
  return rank <= static_cast<std::size_t>(k) ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

struct MetricRow {
  std::string model;
  Protocol protocol = Protocol::standard;
  Metric metric = Metric::hr;
  int k = 10;
  std::optional<double> value;  // absent when no user was evaluable
  std::size_t n = 0;

  bool operator==(const MetricRow&) const = default;
};

struct EvalReport {
  std::vector<MetricRow> rows;
  std::vector<std::string> notes;

  std::optional<double> value(std::string_view model, Protocol p, Metric m, int k) const {
    for (const auto& r : rows)
      if (r.model == model && r.protocol == p && r.metric == m && r.k == k) return r.value;
    return std::nullopt;
  }

  const MetricRow* find(std::string_view model, Protocol p, Metric m, int k) const {
    for (const auto& r : rows)
      if (r.model == model && r.protocol == p && r.metric == m && r.k == k) return &r;
    return nullptr;
  }

  std::vector<std::string> models() const {
    std::vector<std::string> names;
    for (const auto& r : rows)
      if (std::find(names.begin(), names.end(), r.model) == names.end()) names.push_back(r.model);
    return names;
  }

  void append(const EvalReport& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    notes.insert(notes.end(), other.notes.begin(), other.notes.end());
  }
};

inline const std::vector<Protocol>& all_protocols() {
  static const std::vector<Protocol> p = {Protocol::standard, Protocol::visited, Protocol::unvisited};
  return p;
}

// Metrics over held-out pairs. The standard protocol ranks every item not
// bought in training; typed protocols rank only items of the pair's own
// type with that type's scores, and only pairs carrying that label count.
// `train_buys` lists each user's training purchases (excluded everywhere).
inline EvalReport evaluate(const RankingModel& model, std::span<const HeldOutPair> pairs,
                           const BehaviorGraph& train_buys, const VisitedIndex& index,
                           std::span<const Protocol> protocols, std::span<const int> ks) {
  if (ks.empty()) throw ConfigError("no cutoffs requested");
  for (int k : ks)
    if (k < 1) throw ConfigError("K must be at least 1");
  const std::size_t num_items = model.num_items();

  struct Sums {
    std::vector<double> hr, ndcg;
    std::size_t n = 0, skipped = 0;
  };
  std::map<Protocol, Sums> sums;
  for (auto p : protocols) sums[p] = Sums{std::vector<double>(ks.size(), 0.0), std::vector<double>(ks.size(), 0.0)};

  std::vector<double> scores(num_items);
  std::vector<char> pool(num_items);
  for (const auto& pair : pairs) {
    const auto bought = train_buys.user_edges(pair.user);
    for (auto p : protocols) {
      if (p != Protocol::standard && (p == Protocol::visited) != (pair.label == ItemType::visited)) continue;
      auto& s = sums[p];
      if (p == Protocol::standard) {
        model.score_standard(pair.user, scores);
        std::fill(pool.begin(), pool.end(), 1);
      } else {
        const auto type = p == Protocol::visited ? ItemType::visited : ItemType::unvisited;
        model.score_typed(pair.user, type, scores);
        const auto mask = index.mask(pair.user);
        for (std::size_t i = 0; i < num_items; ++i) pool[i] = (mask[i] != 0) == (type == ItemType::visited);
      }
      for (const auto& e : bought) pool[e.item] = 0;
      if (!pool[pair.item]) {
        ++s.skipped;
        continue;
      }
      const auto rank = rank_of(pair.item, scores, pool);
      ++s.n;
      for (std::size_t q = 0; q < ks.size(); ++q) {
        s.hr[q] += hit_ratio(rank, ks[q]);
        s.ndcg[q] += ndcg(rank, ks[q]);
      }
    }
  }

  EvalReport report;
  for (auto p : protocols) {
    const auto& s = sums[p];
    for (std::size_t q = 0; q < ks.size(); ++q) {
      for (auto m : {Metric::hr, Metric::ndcg}) {
        MetricRow row{model.name(), p, m, ks[q], std::nullopt, s.n};
        if (s.n > 0) row.value = (m == Metric::hr ? s.hr[q] : s.ndcg[q]) / static_cast<double>(s.n);
        report.rows.push_back(row);
      }
    }
    if (s.skipped > 0)
      report.notes.push_back(model.name() + ": " + std::to_string(s.skipped) + " users skipped in " +
                             std::string(to_string(p)) + " protocol (empty candidate pool)");
  }
  return report;
}

struct ModelGap {
  std::string model;
  double visited_hr = 0.0;
  double unvisited_hr = 0.0;
  std::optional<double> ratio;  // visited / unvisited; absent if unvisited is 0
};

struct GapSummary {
  int k = 10;
  std::vector<ModelGap> models;
  std::map<Protocol, std::vector<std::string>> rankings;  // best first
  bool rank_divergence = false;
  std::vector<std::string> notes;
};

// Visited-vs-unvisited comparison across models: per-model HR@K ratio,
// model rankings per protocol, and whether the best model differs between
// the two typed protocols.
inline GapSummary gap_analysis(std::span<const EvalReport> reports, int k = 10) {
  EvalReport all;
  for (const auto& r : reports) all.append(r);
  GapSummary out;
  out.k = k;
  std::map<Protocol, std::vector<std::pair<double, std::string>>> by_protocol;
  for (const auto& name : all.models()) {
    const auto v = all.value(name, Protocol::visited, Metric::hr, k);
    const auto u = all.value(name, Protocol::unvisited, Metric::hr, k);
    if (const auto s = all.value(name, Protocol::standard, Metric::hr, k)) by_protocol[Protocol::standard].emplace_back(*s, name);
    if (!v || !u) {
      out.notes.push_back(name + ": missing typed HR@" + std::to_string(k) + " values, omitted from gap summary");
      continue;
    }
    ModelGap gap{name, *v, *u, std::nullopt};
    if (*u > 0.0) gap.ratio = *v / *u;
    out.models.push_back(gap);
    by_protocol[Protocol::visited].emplace_back(*v, name);
    by_protocol[Protocol::unvisited].emplace_back(*u, name);
  }
  for (auto& [p, entries] : by_protocol) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& e : entries) out.rankings[p].push_back(e.second);
  }
  const auto& vr = out.rankings[Protocol::visited];
  const auto& ur = out.rankings[Protocol::unvisited];
  out.rank_divergence = !vr.empty() && !ur.empty() && vr.front() != ur.front();
  if (out.models.size() < 2) out.notes.push_back("fewer than two models with both typed protocols");
  return out;
}

// --- serialization -------------------------------------------------------

inline nlohmann::json to_json(const MetricRow& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["protocol"] = std::string(to_string(r.protocol));
  j["metric"] = std::string(to_string(r.metric));
  j["K"] = r.k;
  j["value"] = r.value ? nlohmann::json(*r.value) : nlohmann::json(nullptr);
  j["n"] = r.n;
  return j;
}

inline MetricRow metric_row_from_json(const nlohmann::json& j) {
  MetricRow r;
  r.model = j.at("model").get<std::string>();
  r.protocol = parse_protocol(j.at("protocol").get<std::string>());
  r.metric = parse_metric(j.at("metric").get<std::string>());
  r.k = j.at("K").get<int>();
  if (!j.at("value").is_null()) r.value = j.at("value").get<double>();
  r.n = j.at("n").get<std::size_t>();
  return r;
}

inline void write_jsonl(std::ostream& out, const EvalReport& report) {
  for (const auto& r : report.rows) out << to_json(r).dump() << '\n';
}

inline EvalReport read_jsonl(std::istream& in) {
  EvalReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      report.rows.push_back(metric_row_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad report row: ") + e.what());
    }
  }
  return report;
}

inline void write_table(std::ostream& out, const EvalReport& report) {
  out << std::left << std::setw(16) << "model" << std::setw(11) << "protocol" << std::setw(8) << "metric"
      << std::right << std::setw(4) << "K" << std::setw(10) << "value" << std::setw(8) << "n" << '\n';
  for (const auto& r : report.rows) {
    out << std::left << std::setw(16) << r.model << std::setw(11) << to_string(r.protocol) << std::setw(8)
        << to_string(r.metric) << std::right << std::setw(4) << r.k << std::setw(10);
    if (r.value) {
      std::ostringstream v;
      v << std::fixed << std::setprecision(4) << *r.value;
      out << v.str();
    } else {
      out << "-";
    }
    out << std::setw(8) << r.n << '\n';
  }
}

inline nlohmann::json to_json(const GapSummary& g) {
  nlohmann::json j;
  j["K"] = g.k;
  j["models"] = nlohmann::json::array();
  for (const auto& m : g.models) {
    j["models"].push_back({{"model", m.model},
                           {"visited_hr", m.visited_hr},
                           {"unvisited_hr", m.unvisited_hr},
                           {"ratio", m.ratio ? nlohmann::json(*m.ratio) : nlohmann::json(nullptr)}});
  }
  for (const auto& [p, names] : g.rankings) j["rankings"][std::string(to_string(p))] = names;
  j["rank_divergence"] = g.rank_divergence;
  j["notes"] = g.notes;
  return j;
}

}  // namespace member
