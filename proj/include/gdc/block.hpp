#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gdc/error.hpp"

namespace gdc {

/// Dense row-major rows x cols block. Embedding sets are blocks of float,
/// intermediate numerics use blocks of double.
template <class T>
class Block {
 public:
  using value_type = T;

  Block() = default;
  Block(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  Block(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw Error(ErrorKind::DimensionMismatch, "block data size does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  T operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  void append_row(std::span<const T> values) {
    if (values.size() != cols_)
      throw Error(ErrorKind::DimensionMismatch, "row length does not match block width");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  friend bool operator==(const Block&, const Block&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using FloatBlock = Block<float>;
using DoubleBlock = Block<double>;

}  // namespace gdc
