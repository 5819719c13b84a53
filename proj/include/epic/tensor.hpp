// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major f64 tensors and trainable parameter storage.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace epic {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes do not conform. The message names the op and
/// the offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op produces a non-finite value from finite inputs.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& what)
      : std::runtime_error(what), op_(std::move(op)) {}
  [[nodiscard]] const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (shape_size(shape_) != data_.size())
      throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
  }

  static Tensor vector(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> d;
    d.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
      d.insert(d.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(d));
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  // Leading extent; a rank-1 tensor is a single row.
  [[nodiscard]] std::size_t rows() const noexcept {
    return shape_.size() >= 2 ? shape_[0] : 1;
  }
  [[nodiscard]] std::size_t cols() const noexcept {
    if (shape_.empty()) return 1;
    return shape_.size() >= 2 ? data_.size() / shape_[0] : shape_[0];
  }

  [[nodiscard]] double* data() noexcept { return data_.data(); }
  [[nodiscard]] const double* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::vector<double>& values() noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  [[nodiscard]] double item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor " + shape_str(shape_) + " is not a scalar");
    return data_[0];
  }

  [[nodiscard]] bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor& o) const = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_)
      if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline Tensor gaussian(Shape shape, double mean, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

enum class Role { Frozen, Trainable };

inline const char* role_name(Role r) { return r == Role::Frozen ? "frozen" : "trainable"; }

/// A named leaf. `grad` stays empty until a backward pass reaches it, and is
/// never allocated for frozen parameters.
struct Parameter {
  std::string name;
  Tensor value;
  Role role = Role::Frozen;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v, Role r) : name(std::move(n)), value(std::move(v)), role(r) {}

  [[nodiscard]] bool requires_grad() const noexcept { return role == Role::Trainable; }
  [[nodiscard]] bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad = Tensor(); }
};

/// 64-bit FNV-1a over the raw bytes of each tensor, in order.
inline std::uint64_t checksum(const std::vector<const Tensor*>& tensors) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Tensor* t : tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
    for (std::size_t i = 0; i < t->size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

/// Derives an independent generator for a named stream of a master seed.
inline std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace epic
