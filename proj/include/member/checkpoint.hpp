#pragma once

// Binary checkpoint container:
//   "MBRX" u8 version=1
//   u32 kind, u32 d, u32 L, u64 num_users, u64 num_items   (little endian)
//   tables as little-endian f32, row major, in declared order
//   u64 checksum = sum of all preceding bytes mod 2^64

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "member/baselines.hpp"
#include "member/config.hpp"
#include "member/trainer.hpp"

namespace member {

inline constexpr char kCheckpointMagic[4] = {'M', 'B', 'R', 'X'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

inline std::uint32_t kind_tag(ModelKind k) {
  switch (k) {
    case ModelKind::member: return 0;
    case ModelKind::mf_bpr: return 1;
    case ModelKind::lgcn_buy: return 2;
    case ModelKind::lgcn_global: return 3;
    case ModelKind::member_avg_gate: return 4;
  }
  return 0xffffffffu;
}

inline ModelKind kind_from_tag(std::uint32_t tag) {
  switch (tag) {
    case 0: return ModelKind::member;
    case 1: return ModelKind::mf_bpr;
    case 2: return ModelKind::lgcn_buy;
    case 3: return ModelKind::lgcn_global;
    case 4: return ModelKind::member_avg_gate;
  }
  throw IoError("checkpoint has unknown kind tag " + std::to_string(tag));
}

inline std::size_t table_count(ModelKind k) { return is_member_kind(k) ? 8 : 2; }

struct Checkpoint {
  ModelKind kind = ModelKind::member;
  std::uint32_t dim = 0;
  std::uint32_t layers = 0;
  std::uint64_t num_users = 0;
  std::uint64_t num_items = 0;
  // member kinds: visited Eg, Hg, El, Hl then unvisited Eg, Hg, El, Hl.
  // baselines: E, H.
  std::vector<Matrix<float>> tables;

  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

template <typename U>
void put_le(std::vector<unsigned char>& buf, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) buf.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

template <typename U>
U get_le(const std::vector<unsigned char>& buf, std::size_t& pos) {
  if (pos + sizeof(U) > buf.size()) throw IoError("checkpoint truncated");
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(buf[pos + b]) << (8 * b);
  pos += sizeof(U);
  return v;
}

inline std::uint64_t byte_sum(const std::vector<unsigned char>& buf, std::size_t n) {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < n; ++k) s += buf[k];
  return s;
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  if (c.tables.size() != table_count(c.kind)) throw DimensionError("checkpoint table count does not match kind");
  std::vector<unsigned char> buf(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  buf.push_back(kCheckpointVersion);
  detail::put_le<std::uint32_t>(buf, kind_tag(c.kind));
  detail::put_le<std::uint32_t>(buf, c.dim);
  detail::put_le<std::uint32_t>(buf, c.layers);
  detail::put_le<std::uint64_t>(buf, c.num_users);
  detail::put_le<std::uint64_t>(buf, c.num_items);
  for (std::size_t t = 0; t < c.tables.size(); ++t) {
    const auto& m = c.tables[t];
    const std::size_t rows = (t % 2 == 0) ? c.num_users : c.num_items;
    if (m.rows() != rows || m.cols() != c.dim) throw DimensionError("checkpoint table shape mismatch");
    for (float v : m.flat()) detail::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));
  }
  detail::put_le<std::uint64_t>(buf, detail::byte_sum(buf, buf.size()));
  return buf;
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& buf) {
  if (buf.size() < 5 + 4 * 3 + 8 * 2 + 8) throw IoError("checkpoint truncated");
  if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) throw IoError("not a checkpoint (bad magic)");
  if (buf[4] != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(buf[4]));
  std::size_t pos = buf.size() - 8;
  const auto stored = detail::get_le<std::uint64_t>(buf, pos);
  if (stored != detail::byte_sum(buf, buf.size() - 8)) throw IoError("checkpoint checksum mismatch");

  pos = 5;
  Checkpoint c;
  c.kind = kind_from_tag(detail::get_le<std::uint32_t>(buf, pos));
  c.dim = detail::get_le<std::uint32_t>(buf, pos);
  c.layers = detail::get_le<std::uint32_t>(buf, pos);
  c.num_users = detail::get_le<std::uint64_t>(buf, pos);
  c.num_items = detail::get_le<std::uint64_t>(buf, pos);
  const std::size_t n = table_count(c.kind);
  const std::size_t floats = (n / 2) * (c.num_users + c.num_items) * c.dim;
  if (buf.size() - 8 - pos != floats * 4) throw IoError("checkpoint body size does not match header");
  for (std::size_t t = 0; t < n; ++t) {
    Matrix<float> m(t % 2 == 0 ? c.num_users : c.num_items, c.dim);
    for (auto& v : m.flat()) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(buf, pos));
    c.tables.push_back(std::move(m));
  }
  return c;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& c) {
  const auto buf = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(buf);
}

template <typename T>
Checkpoint to_checkpoint(const ModelState<T>& s, ModelKind kind, int layers) {
  if (!is_member_kind(kind)) throw ConfigError("model state needs a member kind");
  Checkpoint c;
  c.kind = kind;
  c.dim = static_cast<std::uint32_t>(s.visited.global_init.dim());
  c.layers = static_cast<std::uint32_t>(layers);
  c.num_users = s.visited.global_init.num_users();
  c.num_items = s.visited.global_init.num_items();
  for (const auto* p : {&s.visited, &s.unvisited})
    for (const auto* m : p->tables()) c.tables.push_back(m->template cast<float>());
  return c;
}

template <typename T>
Checkpoint to_checkpoint(const BaselineParams<T>& p) {
  Checkpoint c;
  c.kind = p.kind == BaselineKind::mf_bpr     ? ModelKind::mf_bpr
           : p.kind == BaselineKind::lgcn_buy ? ModelKind::lgcn_buy
                                              : ModelKind::lgcn_global;
  c.dim = static_cast<std::uint32_t>(p.table.dim());
  c.layers = static_cast<std::uint32_t>(p.layers);
  c.num_users = p.table.num_users();
  c.num_items = p.table.num_items();
  c.tables = {p.table.users.template cast<float>(), p.table.items.template cast<float>()};
  return c;
}

template <typename T>
std::pair<ExpertParams<T>, ExpertParams<T>> member_params(const Checkpoint& c, Lambdas lambdas) {
  if (!is_member_kind(c.kind)) throw ConfigError("checkpoint does not hold a member model");
  auto expert = [&](ExpertRole role, std::size_t first, double lambda) {
    ExpertParams<T> p;
    p.role = role;
    p.lambda = lambda;
    p.global_init = {c.tables[first].template cast<T>(), c.tables[first + 1].template cast<T>()};
    p.local_init = {c.tables[first + 2].template cast<T>(), c.tables[first + 3].template cast<T>()};
    p.validate();
    return p;
  };
  return {expert(ExpertRole::visited, 0, lambdas.visited), expert(ExpertRole::unvisited, 4, lambdas.unvisited)};
}

template <typename T>
BaselineParams<T> baseline_params(const Checkpoint& c) {
  BaselineParams<T> p;
  p.kind = baseline_kind(c.kind);
  p.layers = static_cast<int>(c.layers);
  p.table = {c.tables[0].template cast<T>(), c.tables[1].template cast<T>()};
  return p;
}

}  // namespace member
