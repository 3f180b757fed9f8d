#pragma once

// Dense row-major double tensors (rank 1..3), named parameters, seeded
// initialization and the text checkpoint format.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fuseqa {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-1 tensors behave as a single row.
  std::size_t rows() const { return shape_.size() == 1 ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.back(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const { return data().subspan(r * cols(), cols()); }
  std::span<double> row(std::size_t r) { return data().subspan(r * cols(), cols()); }

  void fill(double v);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter(std::string n, Tensor v, bool train = true);
  void zero_grad() { grad.fill(0.0); }
};

// splitmix64: state += 0x9E3779B97F4A7C15, then the xor-shift-multiply
// finalizer with constants 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB and shifts
// 30/27/31. uniform() uses the top 53 bits: (x >> 11) * 2^-53, in [0, 1).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();
  // Uniform integer in [0, n) by rejection, n > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

enum class InitScheme { uniform_scaled, zeros };

// uniform_scaled: U(-s, s), s = sqrt(6 / (fan_in + fan_out)) with
// fan_out = last dimension and fan_in = product of the other dimensions (the
// single dimension for rank 1). Draws are taken in row-major order from one
// SplitMix64 stream seeded with `seed`.
Tensor seeded_init(const Shape& shape, std::uint64_t seed, InitScheme scheme);

// "shape: d0 d1 ..." on one line, then the values in row-major order,
// whitespace separated, printed with 17 significant digits (round-trip exact).
void write_tensor(const Tensor& t, std::ostream& out);
Tensor read_tensor(std::istream& in);

}  // namespace fuseqa
