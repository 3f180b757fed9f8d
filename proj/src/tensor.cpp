#include "fuseqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "fuseqa/error.hpp"

namespace fuseqa {

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

std::size_t checked_volume(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) throw ShapeError("tensor rank must be 1..3, got shape " + shape_string(shape));
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) { data_.assign(checked_volume(shape_), fill); }

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != checked_volume(shape_))
    throw ShapeError("shape " + shape_string(shape_) + " needs " + std::to_string(checked_volume(shape_)) +
                     " values, got " + std::to_string(data_.size()));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) { return Tensor({values.size()}, std::vector<double>(values)); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Parameter::Parameter(std::string n, Tensor v, bool train)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

std::uint64_t SplitMix64::next() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t SplitMix64::below(std::uint64_t n) {
  const std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t x;
  do x = next();
  while (x >= limit);
  return x % n;
}

Tensor seeded_init(const Shape& shape, std::uint64_t seed, InitScheme scheme) {
  Tensor t(shape);
  if (scheme == InitScheme::zeros) return t;
  const std::size_t fan_out = shape.back();
  std::size_t fan_in = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
  if (shape.size() == 1) fan_in = shape[0];
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  SplitMix64 rng(seed);
  for (auto& x : t.data()) x = s * (2.0 * rng.uniform() - 1.0);
  return t;
}

void write_tensor(const Tensor& t, std::ostream& out) {
  out << "shape:";
  for (auto d : t.shape()) out << ' ' << d;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", t[i]);
    out << buf << ((i + 1) % t.cols() == 0 ? '\n' : ' ');
  }
}

Tensor read_tensor(std::istream& in) {
  std::string line;
  while (std::getline(in, line) && line.empty()) {
  }
  if (line.rfind("shape:", 0) != 0) throw ParseError("expected 'shape:' line, got '" + line + "'", 0);
  std::istringstream dims(line.substr(6));
  Shape shape;
  long long d;
  while (dims >> d) {
    if (d <= 0) throw ParseError("non-positive dimension in '" + line + "'", 0);
    shape.push_back(static_cast<std::size_t>(d));
  }
  if (shape.empty()) throw ParseError("empty shape", 0);
  std::size_t n = 1;
  for (auto x : shape) n *= x;
  std::vector<double> data(n);
  std::string tok;
  for (auto& x : data) {
    if (!(in >> tok)) throw ParseError("truncated tensor data", 0);
    char* end = nullptr;
    x = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw ParseError("bad number '" + tok + "'", 0);
  }
  in.ignore(1);  // newline after the last row
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace fuseqa
