#pragma once

// Reverse-mode differentiation over a linear tape. Every op appends a node
// holding its forward value and a closure that pushes the node's gradient to
// its inputs; Tape::backward replays the closures in reverse execution order.
// Gradients accumulate additively, so a value used twice receives both
// contributions. Leaves created with Tape::param() forward their gradient into
// Parameter::grad at the end of backward().
//
// A tape and the Vars it hands out belong to a single thread.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "fuseqa/tensor.hpp"

namespace fuseqa {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  // One leaf per parameter per tape; repeated calls return the same Var.
  Var param(Parameter& p);

  // Seeds d(out)/d(out) = 1 for a single-element output and propagates.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }

  // Op plumbing: record a node and get mutable access to gradients.
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;
  Var push(Tensor value, Backward backward);
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_leaf_;
};

// Source row `src` of inputs[input] is scaled by `weight` and added into
// output row `dst`.
struct RowTerm {
  std::uint32_t input;
  std::uint32_t src;
  std::uint32_t dst;
  double weight;
};

namespace ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
// x[m x n] + b[n] on every row.
Var add_bias(Var x, Var b);
Var mul_scalar(Var x, double s);
Var relu(Var x);
// tanh approximation: 0.5 x (1 + tanh(0.7978845608 (x + 0.044715 x^3))).
Var gelu(Var x);
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// -log softmax(logits)[target] for a 1 x c row; returns a 1-element tensor.
Var cross_entropy(Var logits, std::size_t target);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
// Sparse row mixing; rows of the output that no term touches are zero.
Var combine_rows(std::span<const Var> inputs, std::span<const RowTerm> terms, std::size_t out_rows);
// Mean over rows: [m x n] -> [1 x n].
Var mean_rows(Var x);
// sum(x * w) for a constant w of the same shape; 1-element output.
Var weighted_sum(Var x, const Tensor& w);

}  // namespace ops

// Analytic (tape) gradients of f against central differences
// (f(p + h) - f(p - h)) / 2h for every entry of every listed parameter.
// Relative error per entry is |a - n| / max(|a|, |n|, 1e-8).
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries = 0;
};

using ScalarFn = std::function<Var(Tape&)>;

// Throws NumericError if f evaluates to a non-finite value. Parameter values
// are restored and grads left holding the analytic gradient.
GradCheckReport finite_diff_check(const ScalarFn& f, std::span<Parameter* const> params, double h = 1e-5);

}  // namespace fuseqa
