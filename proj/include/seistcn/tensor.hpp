// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor (rank 1-3, double precision) plus the seeded
// random generator used wherever the library needs randomness.
//
// Element (i, j, k) of a [A, B, C] tensor lives at flat index
// i*B*C + j*C + k. Tensors are plain values: copyable, movable, and
// treated as immutable once handed to another module.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seistcn/errors.hpp"

namespace seistcn {

namespace detail {

inline std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline std::size_t checked_size(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 3)
    throw std::invalid_argument("tensor: rank must be 1..3, got rank " +
                                std::to_string(shape.size()));
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0)
      throw std::invalid_argument("tensor: empty extent in shape " +
                                  shape_string(shape));
    n *= e;
  }
  return n;
}

}  // namespace detail

class Tensor {
 public:
  // Default-constructed tensors are empty placeholders (rank 0, no data).
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(detail::checked_size(shape_), 0.0);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (detail::checked_size(shape_) != data_.size())
      throw std::invalid_argument(
          "tensor: shape " + detail::shape_string(shape_) + " expects " +
          std::to_string(detail::checked_size(shape_)) + " values, got " +
          std::to_string(data_.size()));
  }

  bool empty() const noexcept { return shape_.empty(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  bool same_shape(const Tensor& other) const noexcept {
    return shape_ == other.shape_;
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  // Checked multi-index accessors (row-major).
  double& at(std::size_t i) { return data_.at(index1(i)); }
  double at(std::size_t i) const { return data_.at(index1(i)); }
  double& at(std::size_t i, std::size_t j) { return data_.at(index2(i, j)); }
  double at(std::size_t i, std::size_t j) const { return data_.at(index2(i, j)); }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_.at(index3(i, j, k));
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_.at(index3(i, j, k));
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

 private:
  std::size_t index1(std::size_t i) const {
    require_rank(1);
    check_extent(i, 0);
    return i;
  }
  std::size_t index2(std::size_t i, std::size_t j) const {
    require_rank(2);
    check_extent(i, 0);
    check_extent(j, 1);
    return i * shape_[1] + j;
  }
  std::size_t index3(std::size_t i, std::size_t j, std::size_t k) const {
    require_rank(3);
    check_extent(i, 0);
    check_extent(j, 1);
    check_extent(k, 2);
    return (i * shape_[1] + j) * shape_[2] + k;
  }
  void require_rank(std::size_t r) const {
    if (shape_.size() != r)
      throw std::invalid_argument("tensor: rank-" + std::to_string(r) +
                                  " access on shape " +
                                  detail::shape_string(shape_));
  }
  void check_extent(std::size_t i, std::size_t axis) const {
    if (i >= shape_[axis])
      throw std::out_of_range("tensor: index " + std::to_string(i) +
                              " out of range on axis " + std::to_string(axis) +
                              " of shape " + detail::shape_string(shape_));
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Deterministic generator: xoshiro256++ seeded through splitmix64. The
// algorithm is fixed so that equal seeds give equal streams on every
// platform; Gaussian draws use the Box-Muller transform (two uniforms
// per draw, cosine branch).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double gaussian(double mean = 0.0, double stddev = 1.0) {
    if (stddev < 0.0)
      throw std::invalid_argument("rng: negative standard deviation");
    // u1 in (0, 1] keeps the log finite.
    const double u1 =
        static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * kPi * u2);
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t state_[4];
};

inline Tensor zeros(std::vector<std::size_t> shape) {
  return Tensor(std::move(shape));
}

inline Tensor randn(std::vector<std::size_t> shape, Rng& rng,
                    double mean = 0.0, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng.gaussian(mean, stddev);
  return t;
}

inline double reduce_mean(const Tensor& t) {
  if (t.size() == 0)
    throw std::invalid_argument("reduce_mean: empty tensor");
  const double sum = std::accumulate(t.values().begin(), t.values().end(), 0.0);
  return sum / static_cast<double>(t.size());
}

template <class F>
Tensor map(const Tensor& t, F&& f) {
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
  return out;
}

// Row helpers for rank-2 tensors ([rows, cols], e.g. sections and
// multi-channel traces).

inline std::span<double> row_span(Tensor& m, std::size_t i) {
  if (m.rank() != 2) throw std::invalid_argument("row_span: rank-2 expected");
  const std::size_t cols = m.extent(1);
  return {m.data() + i * cols, cols};
}

inline std::span<const double> row_span(const Tensor& m, std::size_t i) {
  if (m.rank() != 2) throw std::invalid_argument("row_span: rank-2 expected");
  const std::size_t cols = m.extent(1);
  return {m.data() + i * cols, cols};
}

inline Tensor row(const Tensor& m, std::size_t i) {
  if (m.rank() != 2) throw std::invalid_argument("row: rank-2 expected");
  if (i >= m.extent(0)) throw std::out_of_range("row: index out of range");
  auto src = row_span(m, i);
  return Tensor({src.size()}, std::vector<double>(src.begin(), src.end()));
}

inline void set_row(Tensor& m, std::size_t i, std::span<const double> values) {
  if (m.rank() != 2) throw std::invalid_argument("set_row: rank-2 expected");
  if (i >= m.extent(0)) throw std::out_of_range("set_row: index out of range");
  auto dst = row_span(m, i);
  if (values.size() != dst.size())
    throw std::invalid_argument("set_row: length mismatch");
  std::copy(values.begin(), values.end(), dst.begin());
}

inline Tensor reshape(const Tensor& t, std::vector<std::size_t> shape) {
  if (detail::checked_size(shape) != t.size())
    throw std::invalid_argument("reshape: element count mismatch");
  return Tensor(std::move(shape), t.values());
}

inline void ensure_finite(const Tensor& t, const std::string& context) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i]))
      throw NumericError(context + ": non-finite value at flat index " +
                         std::to_string(i));
}

inline void ensure_finite(double v, const std::string& context) {
  if (!std::isfinite(v)) throw NumericError(context + ": non-finite value");
}

}  // namespace seistcn
