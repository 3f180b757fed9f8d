#include "fuseqa/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "fuseqa/error.hpp"

namespace fuseqa {

const Tensor& Var::value() const { return tape->value(*this); }
const Tensor& Var::grad() const { return tape->grad(*this); }

Var Tape::push(Tensor value, Backward backward) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({std::move(value), Tensor(), std::move(backward), nullptr});
  return {this, id};
}

Var Tape::constant(Tensor t) { return push(std::move(t), nullptr); }

Var Tape::param(Parameter& p) {
  if (auto it = param_leaf_.find(&p); it != param_leaf_.end()) return {this, it->second};
  Var v = push(p.value, nullptr);
  nodes_[v.id].param = &p;
  param_leaf_.emplace(&p, v.id);
  return v;
}

Tensor& Tape::grad_buffer(Var v) { return nodes_.at(v.id).grad; }

void Tape::backward(Var out) {
  if (value(out).size() != 1) throw ShapeError("backward needs a single-element output, got " + shape_string(value(out).shape()));
  for (auto& n : nodes_) n.grad = Tensor(n.value.shape());
  nodes_[out.id].grad[0] = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.backward) n.backward(*this, n.grad);
  }
  for (auto& n : nodes_) {
    if (!n.param || !n.param->trainable) continue;
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

namespace ops {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

bool is_matrix(const Tensor& t) { return t.rank() == 2; }

void accumulate(Tape& tape, Var v, const Tensor& g) {
  auto dst = tape.grad_buffer(v).data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(is_matrix(A) && is_matrix(B) && A.cols() == B.rows(),
          "matmul shape mismatch: " + shape_string(A.shape()) + " @ " + shape_string(B.shape()));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A(i, p);
      for (std::size_t j = 0; j < n; ++j) C(i, j) += aip * B(p, j);
    }
  return a.tape->push(std::move(C), [a, b, m, k, n](Tape& t, const Tensor& g) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    Tensor& gA = t.grad_buffer(a);
    Tensor& gB = t.grad_buffer(b);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g(i, j);
        if (gij == 0.0) continue;
        for (std::size_t p = 0; p < k; ++p) {
          gA(i, p) += gij * B(p, j);
          gB(p, j) += A(i, p) * gij;
        }
      }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require(is_matrix(A), "transpose needs a matrix, got " + shape_string(A.shape()));
  Tensor T({A.cols(), A.rows()});
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) T(j, i) = A(i, j);
  return a.tape->push(std::move(T), [a](Tape& t, const Tensor& g) {
    Tensor& gA = t.grad_buffer(a);
    for (std::size_t i = 0; i < gA.rows(); ++i)
      for (std::size_t j = 0; j < gA.cols(); ++j) gA(i, j) += g(j, i);
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.shape() == B.shape(), "add shape mismatch: " + shape_string(A.shape()) + " + " + shape_string(B.shape()));
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  return a.tape->push(std::move(C), [a, b](Tape& t, const Tensor& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var add_bias(Var x, Var b) {
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  require(B.size() == X.cols() && (B.rank() == 1 || B.rows() == 1),
          "add_bias shape mismatch: " + shape_string(X.shape()) + " + " + shape_string(B.shape()));
  Tensor Y = X;
  for (std::size_t i = 0; i < Y.rows(); ++i)
    for (std::size_t j = 0; j < Y.cols(); ++j) Y(i, j) += B[j];
  return x.tape->push(std::move(Y), [x, b](Tape& t, const Tensor& g) {
    accumulate(t, x, g);
    Tensor& gB = t.grad_buffer(b);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gB[j] += g(i, j);
  });
}

Var mul_scalar(Var x, double s) {
  Tensor Y = x.value();
  for (auto& v : Y.data()) v *= s;
  return x.tape->push(std::move(Y), [x, s](Tape& t, const Tensor& g) {
    auto dst = t.grad_buffer(x).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * g[i];
  });
}

Var relu(Var x) {
  Tensor Y = x.value();
  for (auto& v : Y.data()) v = v > 0.0 ? v : 0.0;
  return x.tape->push(std::move(Y), [x](Tape& t, const Tensor& g) {
    const Tensor& X = t.value(x);
    auto dst = t.grad_buffer(x).data();
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (X[i] > 0.0) dst[i] += g[i];
  });
}

namespace {
constexpr double kGeluC = 0.7978845608;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var x) {
  Tensor Y = x.value();
  for (auto& v : Y.data()) v = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  return x.tape->push(std::move(Y), [x](Tape& t, const Tensor& g) {
    const Tensor& X = t.value(x);
    auto dst = t.grad_buffer(x).data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const double v = X[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      dst[i] += g[i] * d;
    }
  });
}

Var softmax_rows(Var x) {
  const Tensor& X = x.value();
  require(is_matrix(X), "softmax_rows needs a matrix, got " + shape_string(X.shape()));
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto in = X.row(i);
    auto out = Y.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) z += (out[j] = std::exp(in[j] - mx));
    for (auto& v : out) v /= z;
  }
  const std::uint32_t self = static_cast<std::uint32_t>(x.tape->size());
  return x.tape->push(std::move(Y), [x, self](Tape& t, const Tensor& g) {
    const Tensor& Y = t.value(Var{&t, self});
    Tensor& gX = t.grad_buffer(x);
    for (std::size_t i = 0; i < Y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < Y.cols(); ++j) dot += g(i, j) * Y(i, j);
      for (std::size_t j = 0; j < Y.cols(); ++j) gX(i, j) += Y(i, j) * (g(i, j) - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  require(is_matrix(X) && G.size() == X.cols() && B.size() == X.cols(),
          "layer_norm shape mismatch: x " + shape_string(X.shape()) + ", gain " + shape_string(G.shape()) + ", bias " +
              shape_string(B.shape()));
  if (!(eps > 0.0)) throw NumericError("layer_norm eps must be positive");
  const std::size_t m = X.rows(), n = X.cols();
  Tensor xhat({m, n});
  std::vector<double> inv_std(m);
  Tensor Y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += X(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (X(i, j) - mean) * (X(i, j) - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (X(i, j) - mean) * inv_std[i];
      Y(i, j) = xhat(i, j) * G[j] + B[j];
    }
  }
  return x.tape->push(std::move(Y), [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), m, n](
                                        Tape& t, const Tensor& g) {
    const Tensor& G = t.value(gain);
    Tensor& gX = t.grad_buffer(x);
    Tensor& gG = t.grad_buffer(gain);
    Tensor& gB = t.grad_buffer(bias);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dxhat = g(i, j) * G[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat(i, j);
        gG[j] += g(i, j) * xhat(i, j);
        gB[j] += g(i, j);
      }
      mean_dxhat *= inv_n;
      mean_dxhat_xhat *= inv_n;
      for (std::size_t j = 0; j < n; ++j)
        gX(i, j) += inv_std[i] * (g(i, j) * G[j] - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
    }
  });
}

Var cross_entropy(Var logits, std::size_t target) {
  const Tensor& L = logits.value();
  require(L.rows() == 1, "cross_entropy needs a single row of logits, got " + shape_string(L.shape()));
  if (target >= L.cols())
    throw ShapeError("cross_entropy target " + std::to_string(target) + " out of range for " + std::to_string(L.cols()) +
                     " classes");
  const auto row = L.row(0);
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  std::vector<double> probs(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) probs[j] = std::exp(row[j] - lse);
  Tensor out({1}, std::vector<double>{lse - row[target]});
  return logits.tape->push(std::move(out), [logits, target, probs = std::move(probs)](Tape& t, const Tensor& g) {
    auto dst = t.grad_buffer(logits).data();
    for (std::size_t j = 0; j < probs.size(); ++j) dst[j] += g[0] * (probs[j] - (j == target ? 1.0 : 0.0));
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& X = x.value();
  require(is_matrix(X) && begin < end && end <= X.cols(),
          "slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
              shape_string(X.shape()));
  Tensor Y({X.rows(), end - begin});
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) Y(i, j - begin) = X(i, j);
  return x.tape->push(std::move(Y), [x, begin, end](Tape& t, const Tensor& g) {
    Tensor& gX = t.grad_buffer(x);
    for (std::size_t i = 0; i < gX.rows(); ++i)
      for (std::size_t j = begin; j < end; ++j) gX(i, j) += g(i, j - begin);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (auto p : parts) {
    require(p.value().rows() == rows, "concat_cols row mismatch: " + shape_string(parts[0].value().shape()) + " vs " +
                                          shape_string(p.value().shape()));
    cols += p.value().cols();
  }
  Tensor Y({rows, cols});
  std::size_t off = 0;
  for (auto p : parts) {
    const Tensor& P = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols(); ++j) Y(i, off + j) = P(i, j);
    off += P.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(Y), [inputs = std::move(inputs)](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (auto p : inputs) {
      Tensor& gP = t.grad_buffer(p);
      for (std::size_t i = 0; i < gP.rows(); ++i)
        for (std::size_t j = 0; j < gP.cols(); ++j) gP(i, j) += g(i, off + j);
      off += gP.cols();
    }
  });
}

Var combine_rows(std::span<const Var> inputs, std::span<const RowTerm> terms, std::size_t out_rows) {
  require(!inputs.empty() && out_rows > 0, "combine_rows needs inputs and at least one output row");
  const std::size_t cols = inputs[0].value().cols();
  for (auto v : inputs)
    require(v.value().cols() == cols, "combine_rows column mismatch: " + shape_string(inputs[0].value().shape()) +
                                          " vs " + shape_string(v.value().shape()));
  Tensor Y({out_rows, cols});
  for (const auto& term : terms) {
    require(term.input < inputs.size() && term.dst < out_rows && term.src < inputs[term.input].value().rows(),
            "combine_rows term out of range");
    const auto src = inputs[term.input].value().row(term.src);
    auto dst = Y.row(term.dst);
    for (std::size_t j = 0; j < cols; ++j) dst[j] += term.weight * src[j];
  }
  std::vector<Var> in(inputs.begin(), inputs.end());
  std::vector<RowTerm> tm(terms.begin(), terms.end());
  return inputs[0].tape->push(std::move(Y), [in = std::move(in), tm = std::move(tm)](Tape& t, const Tensor& g) {
    for (const auto& term : tm) {
      auto dst = t.grad_buffer(in[term.input]).row(term.src);
      const auto src = g.row(term.dst);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += term.weight * src[j];
    }
  });
}

Var mean_rows(Var x) {
  const Tensor& X = x.value();
  require(is_matrix(X), "mean_rows needs a matrix, got " + shape_string(X.shape()));
  std::vector<RowTerm> terms;
  const double w = 1.0 / static_cast<double>(X.rows());
  for (std::uint32_t i = 0; i < X.rows(); ++i) terms.push_back({0, i, 0, w});
  const Var in[] = {x};
  return combine_rows(in, terms, 1);
}

Var weighted_sum(Var x, const Tensor& w) {
  const Tensor& X = x.value();
  require(X.size() == w.size(), "weighted_sum shape mismatch: " + shape_string(X.shape()) + " vs " + shape_string(w.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) s += X[i] * w[i];
  return x.tape->push(Tensor({1}, std::vector<double>{s}), [x, w](Tape& t, const Tensor& g) {
    auto dst = t.grad_buffer(x).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * w[i];
  });
}

}  // namespace ops

GradCheckReport finite_diff_check(const ScalarFn& f, std::span<Parameter* const> params, double h) {
  if (!(h > 0.0)) throw NumericError("finite difference step must be positive");
  auto evaluate = [&f] {
    Tape tape;
    const double v = f(tape).value()[0];
    if (!std::isfinite(v)) throw NumericError("objective is not finite");
    return v;
  };

  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(out.value()[0])) throw NumericError("objective is not finite");
    tape.backward(out);
  }

  GradCheckReport report;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = evaluate();
      p->value[i] = saved - h;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      ++report.entries;
      if (report.worst_param.empty() || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace fuseqa
