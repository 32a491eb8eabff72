#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spikecnn/errors.hpp"

namespace spikecnn {

// Per-sample activation shape: channels x height x width.
struct Shape3 {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  [[nodiscard]] constexpr std::size_t size() const noexcept { return c * h * w; }
  friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  return "[" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + "]";
}

// Dense row-major tensor of arbitrary rank.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, T fill = T{})
      : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

  Tensor(std::vector<std::size_t> dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != element_count(dims_)) {
      throw StructuralError("tensor data size " + std::to_string(data_.size()) + " does not match its dims");
    }
  }

  explicit Tensor(const Shape3& s, T fill = T{}) : Tensor(std::vector<std::size_t>{s.c, s.h, s.w}, fill) {}

  [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] Shape3 shape3() const {
    if (dims_.size() != 3) throw StructuralError("tensor is not rank 3");
    return {dims_[0], dims_[1], dims_[2]};
  }

  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  [[nodiscard]] std::vector<T>& storage() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 access.
  T& at(std::size_t c, std::size_t h, std::size_t w) noexcept { return data_[(c * dims_[1] + h) * dims_[2] + w]; }
  const T& at(std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[(c * dims_[1] + h) * dims_[2] + w];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    Tensor<U> out(dims_);
    std::transform(data_.begin(), data_.end(), out.values().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<T> data_;
};

}  // namespace spikecnn
