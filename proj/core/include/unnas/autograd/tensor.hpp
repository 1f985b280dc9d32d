#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unnas {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

/// Dense row-major tensor. Extents are positive; `data.size() == numel(shape)`.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(check(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != check(shape)) {
      throw std::invalid_argument("tensor: " + std::to_string(data.size()) +
                                  " values do not fill shape " + shape_str(shape));
    }
  }

  [[nodiscard]] std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  [[nodiscard]] std::int64_t dim(std::size_t i) const { return shape.at(i); }
  [[nodiscard]] std::size_t rank() const { return shape.size(); }

  T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  std::span<T> values() { return data; }
  std::span<const T> values() const { return data; }

 private:
  static std::int64_t check(const Shape& s) {
    for (auto e : s) {
      if (e <= 0) throw std::invalid_argument("tensor: non-positive extent in " + shape_str(s));
    }
    return numel(s);
  }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  return Tensor<To>(t.shape, std::vector<To>(t.data.begin(), t.data.end()));
}

}  // namespace unnas
