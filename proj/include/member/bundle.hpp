#pragma once

// Prepared dataset bundle: a directory holding the training log, the
// held-out pairs and id maps, written by `prep` and read by `train`/`eval`.
//
//   bundle.json    behaviors, counts, sparse users
//   user_map.tsv   index <tab> raw id
//   item_map.tsv
//   train.tsv      user <tab> item <tab> behavior [<tab> timestamp], indices
//   split.tsv      user <tab> item <tab> test|valid <tab> V|U
//   stats.json     dataset statistics

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "member/interactions.hpp"

namespace member {

namespace fs = std::filesystem;

struct DatasetStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::string> behaviors;
  std::vector<std::size_t> raw_counts;
  std::vector<std::size_t> dedup_counts;
  std::size_t test_pairs = 0;
  std::size_t test_visited = 0;
  std::size_t test_unvisited = 0;
  std::size_t validation_pairs = 0;
  std::size_t sparse_users = 0;
  std::size_t visited_purchase_edges = 0;
  std::size_t remaining_edges = 0;
};

inline DatasetStats compute_stats(const InteractionLog& raw, const Split& split) {
  DatasetStats s;
  s.num_users = raw.num_users;
  s.num_items = raw.num_items;
  s.behaviors = raw.behaviors;
  s.raw_counts = raw.raw_counts;
  s.dedup_counts = raw.dedup_counts();
  s.test_pairs = split.test.size();
  for (const auto& p : split.test) (p.label == ItemType::visited ? s.test_visited : s.test_unvisited)++;
  s.validation_pairs = split.validation.size();
  s.sparse_users = split.sparse_users.size();
  const auto [v, r] = derive_ssl_partitions(split.train);
  s.visited_purchase_edges = v.num_edges();
  s.remaining_edges = r.num_edges();
  return s;
}

inline nlohmann::json to_json(const DatasetStats& s) {
  nlohmann::json j;
  j["users"] = s.num_users;
  j["items"] = s.num_items;
  for (std::size_t b = 0; b < s.behaviors.size(); ++b) {
    j["interactions"][s.behaviors[b]] = s.dedup_counts[b];
    j["raw_records"][s.behaviors[b]] = s.raw_counts[b];
  }
  j["behaviors"] = s.behaviors;
  j["test_pairs"] = s.test_pairs;
  j["test_visited"] = s.test_visited;
  j["test_unvisited"] = s.test_unvisited;
  j["validation_pairs"] = s.validation_pairs;
  j["sparse_users"] = s.sparse_users;
  j["visited_purchase_edges"] = s.visited_purchase_edges;
  j["remaining_edges"] = s.remaining_edges;
  return j;
}

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("bundle file missing: '" + p.string() + "'");
  return in;
}

inline Index parse_index(std::string_view s, std::size_t bound, const std::string& file, std::size_t line) {
  Index v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v >= bound)
    throw ParseError(line, file + ": bad index '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> read_map(const fs::path& p) {
  auto in = open_in(p);
  std::vector<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(trim(line));
    if (fields.size() != 2) throw ParseError(line_no, p.filename().string() + ": expected 2 fields");
    if (parse_index(fields[0], ids.size() + 1, p.filename().string(), line_no) != ids.size())
      throw ParseError(line_no, p.filename().string() + ": indices must be consecutive");
    ids.emplace_back(fields[1]);
  }
  return ids;
}

}  // namespace detail

inline void write_bundle(const fs::path& dir, const InteractionLog& raw, const Split& split) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const auto& train = split.train;
  {
    auto out = detail::open_out(dir / "user_map.tsv");
    for (std::size_t u = 0; u < train.user_ids.size(); ++u) out << u << '\t' << train.user_ids[u] << '\n';
  }
  {
    auto out = detail::open_out(dir / "item_map.tsv");
    for (std::size_t i = 0; i < train.item_ids.size(); ++i) out << i << '\t' << train.item_ids[i] << '\n';
  }
  {
    auto out = detail::open_out(dir / "train.tsv");
    for (const auto& r : train.records) {
      out << r.user << '\t' << r.item << '\t' << train.behaviors[r.behavior];
      if (r.timestamp) out << '\t' << *r.timestamp;
      out << '\n';
    }
  }
  {
    auto out = detail::open_out(dir / "split.tsv");
    auto put = [&](const HeldOutPair& p, const char* role) {
      out << p.user << '\t' << p.item << '\t' << role << '\t' << (p.label == ItemType::visited ? 'V' : 'U') << '\n';
    };
    for (const auto& p : split.test) put(p, "test");
    for (const auto& p : split.validation) put(p, "valid");
  }
  {
    nlohmann::json j;
    j["behaviors"] = train.behaviors;
    j["num_users"] = train.num_users;
    j["num_items"] = train.num_items;
    j["raw_counts"] = raw.raw_counts;
    j["sparse_users"] = split.sparse_users;
    auto out = detail::open_out(dir / "bundle.json");
    out << j.dump(2) << '\n';
  }
  {
    auto out = detail::open_out(dir / "stats.json");
    out << to_json(compute_stats(raw, split)).dump(2) << '\n';
  }
}

inline Split read_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("bundle directory '" + dir.string() + "' does not exist");
  nlohmann::json meta;
  try {
    auto in = detail::open_in(dir / "bundle.json");
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bundle.json unreadable: ") + e.what());
  }

  Split split;
  auto& train = split.train;
  try {
    train.behaviors = meta.at("behaviors").get<std::vector<std::string>>();
    train.raw_counts = meta.at("raw_counts").get<std::vector<std::size_t>>();
    split.sparse_users = meta.at("sparse_users").get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bundle.json malformed: ") + e.what());
  }
  train.user_ids = detail::read_map(dir / "user_map.tsv");
  train.item_ids = detail::read_map(dir / "item_map.tsv");
  train.num_users = train.user_ids.size();
  train.num_items = train.item_ids.size();

  {
    auto in = detail::open_in(dir / "train.tsv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto fields = detail::split_fields(detail::trim(line));
      if (fields.size() != 3 && fields.size() != 4) throw ParseError(line_no, "train.tsv: expected 3 or 4 fields");
      Interaction r;
      r.user = detail::parse_index(fields[0], train.num_users, "train.tsv", line_no);
      r.item = detail::parse_index(fields[1], train.num_items, "train.tsv", line_no);
      r.behavior = static_cast<Index>(train.behavior_index(fields[2]));
      if (fields.size() == 4) {
        std::int64_t ts = 0;
        auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), ts);
        if (ec != std::errc() || ptr != fields[3].data() + fields[3].size())
          throw ParseError(line_no, "train.tsv: bad timestamp");
        r.timestamp = ts;
      }
      train.records.push_back(r);
    }
  }
  {
    auto in = detail::open_in(dir / "split.tsv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto fields = detail::split_fields(detail::trim(line));
      if (fields.size() != 4) throw ParseError(line_no, "split.tsv: expected 4 fields");
      HeldOutPair p;
      p.user = detail::parse_index(fields[0], train.num_users, "split.tsv", line_no);
      p.item = detail::parse_index(fields[1], train.num_items, "split.tsv", line_no);
      if (fields[3] == "V") p.label = ItemType::visited;
      else if (fields[3] == "U") p.label = ItemType::unvisited;
      else throw ParseError(line_no, "split.tsv: label must be V or U");
      if (fields[2] == "test") split.test.push_back(p);
      else if (fields[2] == "valid") split.validation.push_back(p);
      else throw ParseError(line_no, "split.tsv: role must be test or valid");
    }
  }
  return split;
}

}  // namespace member
