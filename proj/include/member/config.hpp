#pragma once

// Flat key=value run configuration. One key per line, '#' starts a
// comment, unknown keys are rejected.

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "member/baselines.hpp"
#include "member/evaluator.hpp"
#include "member/trainer.hpp"

namespace member {

enum class ModelKind { member, mf_bpr, lgcn_buy, lgcn_global, member_avg_gate };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::member: return "member";
    case ModelKind::mf_bpr: return "mf_bpr";
    case ModelKind::lgcn_buy: return "lgcn_buy";
    case ModelKind::lgcn_global: return "lgcn_global";
    case ModelKind::member_avg_gate: return "member_avg_gate";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::member, ModelKind::mf_bpr, ModelKind::lgcn_buy, ModelKind::lgcn_global,
                 ModelKind::member_avg_gate})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

inline bool is_member_kind(ModelKind k) { return k == ModelKind::member || k == ModelKind::member_avg_gate; }

inline BaselineKind baseline_kind(ModelKind k) {
  switch (k) {
    case ModelKind::mf_bpr: return BaselineKind::mf_bpr;
    case ModelKind::lgcn_buy: return BaselineKind::lgcn_buy;
    case ModelKind::lgcn_global: return BaselineKind::lgcn_global;
    default: throw ConfigError("'" + std::string(to_string(k)) + "' is not a baseline");
  }
}

struct RunConfig {
  TrainConfig train;
  std::optional<std::size_t> dim;  // unset: 16 for member kinds, 64 for baselines
  std::vector<std::string> behaviors = {"click", "collect", "cart", "buy"};
  ModelKind model = ModelKind::member;
  std::vector<int> ks = {10, 20};
  std::vector<Protocol> protocols = {Protocol::standard, Protocol::visited, Protocol::unvisited};
  bool validation = true;  // hold out a validation buy per user at prep time

  // TrainConfig with the model-dependent defaults resolved.
  TrainConfig resolved() const {
    TrainConfig t = train;
    t.dim = dim ? *dim : (is_member_kind(model) ? t.dim : kBaselineDefaultDim);
    t.gate = model == ModelKind::member_avg_gate ? Gate::average : Gate::hard;
    return t;
  }

  void validate() const {
    resolved().validate();
    Schema{behaviors}.validate();
    if (ks.empty()) throw ConfigError("ks must not be empty");
    for (int k : ks)
      if (k < 1) throw ConfigError("every K must be >= 1");
    if (protocols.empty()) throw ConfigError("protocols must not be empty");
  }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto end = s.find(',', pos);
    if (end == std::string_view::npos) end = s.size();
    auto item = trim(s.substr(pos, end - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = end + 1;
  }
  return out;
}

template <typename N>
N parse_number(std::string_view key, std::string_view v) {
  N out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("bad value '" + std::string(v) + "' for key '" + std::string(key) + "'");
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for key '" + std::string(key) + "'");
}

}  // namespace detail

inline std::vector<int> parse_ks(std::string_view s) {
  std::vector<int> ks;
  for (const auto& item : detail::split_list(s)) ks.push_back(detail::parse_number<int>("k", item));
  if (ks.empty()) throw ConfigError("empty K list");
  return ks;
}

inline std::vector<Protocol> parse_protocols(std::string_view s) {
  std::vector<Protocol> out;
  for (const auto& item : detail::split_list(s)) {
    try {
      out.push_back(parse_protocol(item));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (out.empty()) throw ConfigError("empty protocol list");
  return out;
}

// Applies one key. Throws ConfigError for unknown keys or bad values.
inline void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  using detail::parse_bool;
  using detail::parse_number;
  auto& t = c.train;
  if (key == "dim") c.dim = parse_number<std::size_t>(key, value);
  else if (key == "layers") t.layers = parse_number<int>(key, value);
  else if (key == "lambda_visited") t.lambda_visited = parse_number<double>(key, value);
  else if (key == "lambda_unvisited") t.lambda_unvisited = parse_number<double>(key, value);
  else if (key == "tau") t.tau = parse_number<double>(key, value);
  else if (key == "tau_prime") t.tau_prime = parse_number<double>(key, value);
  else if (key == "gamma1") t.gamma1 = parse_number<double>(key, value);
  else if (key == "gamma2") t.gamma2 = parse_number<double>(key, value);
  else if (key == "gamma3") t.gamma3 = parse_number<double>(key, value);
  else if (key == "learning_rate") t.learning_rate = parse_number<double>(key, value);
  else if (key == "batch_size") t.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "gen_negatives") t.gen_negatives_k = parse_number<std::size_t>(key, value);
  else if (key == "max_epochs") t.max_epochs = parse_number<std::size_t>(key, value);
  else if (key == "patience") t.patience = parse_number<std::size_t>(key, value);
  else if (key == "early_stopping") t.early_stopping = parse_bool(key, value);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "precision") {
    if (value == "double") t.precision = Precision::double_;
    else if (value == "single") t.precision = Precision::single;
    else throw ConfigError("precision must be 'single' or 'double'");
  } else if (key == "contrastive_batch") {
    if (value == "batch") t.contrastive_mode = ContrastiveMode::batch;
    else if (value == "full") t.contrastive_mode = ContrastiveMode::full;
    else throw ConfigError("contrastive_batch must be 'batch' or 'full'");
  } else if (key == "behaviors") c.behaviors = detail::split_list(value);
  else if (key == "model") c.model = parse_model_kind(value);
  else if (key == "ks") c.ks = parse_ks(value);
  else if (key == "protocols") c.protocols = parse_protocols(value);
  else if (key == "validation") c.validation = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = detail::trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    apply_setting(c, detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)));
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse_config(in);
}

}  // namespace member
