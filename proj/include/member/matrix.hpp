#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "member/error.hpp"

namespace member {

// Row-major dense matrix. Rows are embeddings, so row access is the hot path.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), T{0}); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.flat().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// User and item tables of one embedding space (E and H).
template <typename T>
struct EmbeddingPair {
  Matrix<T> users;
  Matrix<T> items;

  EmbeddingPair() = default;
  EmbeddingPair(std::size_t num_users, std::size_t num_items, std::size_t dim)
      : users(num_users, dim), items(num_items, dim) {}
  EmbeddingPair(Matrix<T> u, Matrix<T> i) : users(std::move(u)), items(std::move(i)) {
    if (users.cols() != items.cols())
      throw DimensionError("user and item tables differ in width");
  }

  std::size_t dim() const { return users.cols(); }
  std::size_t num_users() const { return users.rows(); }
  std::size_t num_items() const { return items.rows(); }

  bool same_shape(const EmbeddingPair& o) const {
    return users.same_shape(o.users) && items.same_shape(o.items);
  }

  void set_zero() {
    users.set_zero();
    items.set_zero();
  }

  template <typename U>
  EmbeddingPair<U> cast() const {
    return {users.template cast<U>(), items.template cast<U>()};
  }

  bool operator==(const EmbeddingPair& other) const = default;
};

template <typename A, typename B>
double dot(std::span<A> a, std::span<B> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    acc += static_cast<double>(a[k]) * static_cast<double>(b[k]);
  return acc;
}

template <typename T>
double norm(std::span<T> a) {
  return std::sqrt(dot(a, a));
}

// y += alpha * x
template <typename U, typename T>
void axpy(double alpha, std::span<U> x, std::span<T> y) {
  for (std::size_t k = 0; k < x.size(); ++k)
    y[k] = static_cast<T>(static_cast<double>(y[k]) + alpha * static_cast<double>(x[k]));
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return std::all_of(m.flat().begin(), m.flat().end(),
                     [](T v) { return std::isfinite(static_cast<double>(v)); });
}

template <typename T>
double inner_product(const EmbeddingPair<T>& a, const EmbeddingPair<T>& b) {
  return dot(a.users.flat(), b.users.flat()) + dot(a.items.flat(), b.items.flat());
}

}  // namespace member
