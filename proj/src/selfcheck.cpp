#include "fuseqa/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "fuseqa/autodiff.hpp"

namespace fuseqa {

std::vector<Candidate> ToyInstance::candidates() const {
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back({tokens[i], graphs[i]});
  return out;
}

ToyInstance make_toy_instance(const ModelConfig& config, std::size_t n_tokens, std::size_t n_nodes,
                              std::size_t n_candidates, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ToyInstance inst;
  for (std::size_t c = 0; c < n_candidates; ++c) {
    std::vector<std::uint32_t> toks{0};
    while (toks.size() < n_tokens) toks.push_back(static_cast<std::uint32_t>(1 + rng.below(config.vocab_size - 1)));
    inst.tokens.push_back(std::move(toks));

    GraphInput g;
    g.num_nodes = n_nodes;
    if (n_nodes > 0) {
      g.node_init = Tensor({n_nodes, config.d_gnn});
      for (auto& x : g.node_init.data()) x = 2.0 * rng.uniform() - 1.0;
      for (std::size_t k = 0; k < n_nodes + 1 && n_nodes > 1; ++k) {
        auto u = static_cast<std::uint32_t>(rng.below(n_nodes));
        auto v = static_cast<std::uint32_t>(rng.below(n_nodes));
        if (u == v) continue;
        g.edges.push_back({u, static_cast<std::uint32_t>(rng.below(config.num_relations + 1)), v});
      }
    }
    inst.graphs.push_back(std::move(g));
  }
  inst.answer = static_cast<std::size_t>(rng.below(n_candidates));
  return inst;
}

namespace {

Tensor random_tensor(SplitMix64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = lo + (hi - lo) * rng.uniform();
  return t;
}

// Keeps values away from the relu kink so central differences stay exact.
Tensor away_from_zero(SplitMix64& rng, Shape shape) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (auto& x : t.data()) x += x >= 0.0 ? 0.1 : -0.1;
  return t;
}

Tensor negated(Tensor t) {
  for (auto& x : t.data()) x = -x;
  return t;
}

CheckResult check(const std::string& name, const ScalarFn& f, std::vector<Parameter*> params, double threshold) {
  const auto report = finite_diff_check(f, params);
  return {name, report.max_rel_error, threshold, report.max_rel_error < threshold};
}

}  // namespace

std::vector<CheckResult> op_gradient_checks(std::uint64_t seed, double threshold) {
  SplitMix64 rng(seed);
  std::vector<CheckResult> out;
  using namespace ops;

  {
    Parameter a("a", random_tensor(rng, {4, 5})), b("b", random_tensor(rng, {5, 3}));
    const Tensor w = random_tensor(rng, {4, 3});
    out.push_back(check("matmul", [&](Tape& t) { return weighted_sum(matmul(t.param(a), t.param(b)), w); }, {&a, &b},
                        threshold));
  }
  {
    Parameter a("a", random_tensor(rng, {3, 4}));
    const Tensor w = random_tensor(rng, {4, 3});
    out.push_back(check("transpose", [&](Tape& t) { return weighted_sum(transpose(t.param(a)), w); }, {&a}, threshold));
  }
  {
    Parameter a("a", random_tensor(rng, {3, 4})), b("b", random_tensor(rng, {3, 4})), bias("bias", random_tensor(rng, {4}));
    const Tensor w = random_tensor(rng, {3, 4});
    out.push_back(check("add", [&](Tape& t) { return weighted_sum(add(t.param(a), t.param(b)), w); }, {&a, &b}, threshold));
    out.push_back(check("add_bias", [&](Tape& t) { return weighted_sum(add_bias(t.param(a), t.param(bias)), w); },
                        {&a, &bias}, threshold));
    out.push_back(
        check("mul_scalar", [&](Tape& t) { return weighted_sum(mul_scalar(t.param(a), -1.7), w); }, {&a}, threshold));
  }
  {
    Parameter x("x", away_from_zero(rng, {3, 5}));
    const Tensor w = random_tensor(rng, {3, 5});
    out.push_back(check("relu", [&](Tape& t) { return weighted_sum(relu(t.param(x)), w); }, {&x}, threshold));
    out.push_back(check("gelu", [&](Tape& t) { return weighted_sum(gelu(t.param(x)), w); }, {&x}, threshold));
  }
  {
    Parameter x("x", random_tensor(rng, {3, 7}, -2.0, 2.0));
    const Tensor w = random_tensor(rng, {3, 7});
    out.push_back(check("softmax_rows", [&](Tape& t) { return weighted_sum(softmax_rows(t.param(x)), w); }, {&x}, threshold));
  }
  {
    Parameter x("x", random_tensor(rng, {4, 6}, -2.0, 2.0)), g("gain", random_tensor(rng, {6}, 0.5, 1.5)),
        b("bias", random_tensor(rng, {6}));
    const Tensor w = random_tensor(rng, {4, 6});
    out.push_back(check("layer_norm",
                        [&](Tape& t) { return weighted_sum(layer_norm(t.param(x), t.param(g), t.param(b)), w); },
                        {&x, &g, &b}, threshold));
  }
  {
    Parameter logits("logits", random_tensor(rng, {1, 5}, -2.0, 2.0));
    out.push_back(check("cross_entropy", [&](Tape& t) { return cross_entropy(t.param(logits), 3); }, {&logits}, threshold));
  }
  {
    Parameter a("a", random_tensor(rng, {3, 4})), b("b", random_tensor(rng, {3, 2}));
    const Tensor w = random_tensor(rng, {3, 3});
    out.push_back(check("concat_cols/slice_cols",
                        [&](Tape& t) {
                          const Var parts[] = {t.param(a), t.param(b)};
                          return weighted_sum(slice_cols(concat_cols(parts), 2, 5), w);
                        },
                        {&a, &b}, threshold));
  }
  {
    Parameter a("a", random_tensor(rng, {4, 3})), b("b", random_tensor(rng, {2, 3}));
    const Tensor w = random_tensor(rng, {3, 3});
    const std::vector<RowTerm> terms{{0, 0, 0, 0.5}, {0, 3, 0, 0.5}, {1, 1, 1, 1.0}, {0, 0, 2, -2.0}, {1, 0, 2, 0.3}};
    out.push_back(check("combine_rows",
                        [&](Tape& t) {
                          const Var in[] = {t.param(a), t.param(b)};
                          return weighted_sum(combine_rows(in, terms, 3), w);
                        },
                        {&a, &b}, threshold));
    const Tensor wm = random_tensor(rng, {1, 3});
    out.push_back(check("mean_rows", [&](Tape& t) { return weighted_sum(mean_rows(t.param(a)), wm); }, {&a}, threshold));
  }
  return out;
}

std::vector<CheckResult> model_gradient_checks(std::uint64_t seed, double threshold) {
  struct Variant {
    const char* name;
    FusionMode mode;
    std::size_t heads;
  };
  const Variant variants[] = {{"model cross_attention 1-head", FusionMode::cross_attention, 1},
                              {"model cross_attention 4-head", FusionMode::cross_attention, 4},
                              {"model interaction", FusionMode::interaction, 1},
                              {"model naive", FusionMode::naive, 1},
                              {"model none", FusionMode::none, 1}};
  std::vector<CheckResult> out;
  for (const auto& v : variants) {
    ModelConfig c;
    c.layers = 2;
    c.d_lm = 8;
    c.d_gnn = 8;
    c.n_heads = v.heads;
    c.fusion_mode = v.mode;
    c.vocab_size = 16;
    c.max_seq_len = 4;
    c.num_relations = 3;
    c.seed = seed;
    FusionModel model(c);
    const auto inst = make_toy_instance(c, 4, 5, 2, seed + 1);
    const auto cands = inst.candidates();
    SplitMix64 rng(seed + 2);
    const Tensor target = random_tensor(rng, {1, cands.size()});
    // Squared error; cross-entropy would leave shift-invariant biases with a zero gradient.
    auto f = [&](Tape& t) {
      Var d = ops::add(candidate_logits(t, model, cands), t.constant(negated(target)));
      return ops::matmul(d, ops::transpose(d));
    };
    out.push_back(check(v.name, f, model.params().all(), threshold));
  }
  return out;
}

GraphInput permute_nodes(const GraphInput& g, std::span<const std::size_t> perm) {
  GraphInput out;
  out.num_nodes = g.num_nodes;
  out.node_init = g.node_init;
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    for (std::size_t j = 0; j < g.node_init.cols(); ++j) out.node_init(perm[i], j) = g.node_init(i, j);
  for (const auto& e : g.edges)
    out.edges.push_back({static_cast<std::uint32_t>(perm[e.src]), e.relation, static_cast<std::uint32_t>(perm[e.dst])});
  return out;
}

namespace {

ModelConfig random_small_config(SplitMix64& rng, std::uint64_t seed) {
  ModelConfig c;
  c.layers = 1 + rng.below(3);
  c.d_lm = 8;
  c.d_gnn = 8;
  const std::size_t heads[] = {1, 2, 4};
  c.n_heads = heads[rng.below(3)];
  c.vocab_size = 32;
  c.max_seq_len = 8;
  c.num_relations = 3;
  c.seed = seed;
  return c;
}

}  // namespace

CheckResult attention_normalization_check(std::uint64_t seed, std::size_t passes) {
  SplitMix64 rng(seed);
  double worst = 0.0;
  for (std::size_t p = 0; p < passes; ++p) {
    ModelConfig c = random_small_config(rng, seed + p);
    FusionModel model(c);
    const auto inst = make_toy_instance(c, 2 + rng.below(7), 1 + rng.below(8), 1, rng.next());
    Tape tape;
    ForwardTrace trace;
    model.forward(tape, inst.tokens[0], inst.graphs[0], &trace);
    for (const auto& a : trace.attention)
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) sum += a(i, j);
        worst = std::max(worst, std::abs(sum - 1.0));
      }
  }
  return {"attention row sums", worst, 1e-12, worst <= 1e-12};
}

CheckResult permutation_check(std::uint64_t seed, std::size_t instances) {
  SplitMix64 rng(seed);
  const FusionMode modes[] = {FusionMode::naive, FusionMode::interaction, FusionMode::cross_attention};
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    ModelConfig c = random_small_config(rng, seed + k);
    c.fusion_mode = modes[k % 3];
    FusionModel model(c);
    const auto inst = make_toy_instance(c, 2 + rng.below(7), 2 + rng.below(7), 1, rng.next());
    const auto& g = inst.graphs[0];
    std::vector<std::size_t> perm(g.num_nodes);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const double a = model.logit(inst.tokens[0], g);
    const double b = model.logit(inst.tokens[0], permute_nodes(g, perm));
    worst = std::max(worst, std::abs(a - b));
  }
  return {"node permutation invariance", worst, 1e-12, worst <= 1e-12};
}

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
  auto results = op_gradient_checks(seed);
  for (auto& r : model_gradient_checks(seed)) results.push_back(std::move(r));
  results.push_back(attention_normalization_check(seed));
  results.push_back(permutation_check(seed));
  return results;
}

void print_results(const std::vector<CheckResult>& results, std::ostream& out) {
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-4s %-32s err=%.3e (limit %.0e)\n", r.passed ? "ok" : "FAIL", r.name.c_str(),
                  r.value, r.threshold);
    out << buf;
  }
}

}  // namespace fuseqa
