#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace tcm {

// Dense row-major array of doubles. Rank 1 or 2 is all the rest of the
// library needs. Immutable by convention once handed to a Tape.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Array() = default;
  Array(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape))
      throw std::invalid_argument("Array: data length does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto v : s) n *= v;
    return n;
  }

  static Array zeros(std::vector<std::size_t> s) {
    auto n = count(s);
    return Array(std::move(s), std::vector<double>(n, 0.0));
  }
  static Array full(std::vector<std::size_t> s, double v) {
    auto n = count(s);
    return Array(std::move(s), std::vector<double>(n, v));
  }
  static Array scalar(double v) { return Array({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // Matrix view helpers; rank-1 arrays act as a single row.
  std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Array& o) const { return shape == o.shape; }
};

}  // namespace tcm
