#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fuseqa/fusion_model.hpp"

namespace fuseqa {

struct CheckResult {
  std::string name;
  double value = 0.0;      // measured error
  double threshold = 0.0;  // pass iff value < threshold
  bool passed = false;
};

// Random instance with the given token and node counts; edges are drawn
// between distinct nodes with relation ids in [0, config.num_relations].
struct ToyInstance {
  std::vector<std::vector<std::uint32_t>> tokens;  // one sequence per candidate
  std::vector<GraphInput> graphs;
  std::size_t answer = 0;
  std::vector<Candidate> candidates() const;
};
ToyInstance make_toy_instance(const ModelConfig& config, std::size_t n_tokens, std::size_t n_nodes,
                              std::size_t n_candidates, std::uint64_t seed);

// Central-difference checks of every differentiable op on random inputs.
std::vector<CheckResult> op_gradient_checks(std::uint64_t seed, double threshold = 1e-6);

// Squared logit error over toy candidates (4 tokens, 5 nodes, d = 8, M = 2) for
// cross-attention with 1 and 4 heads, plus the naive and interaction modes.
std::vector<CheckResult> model_gradient_checks(std::uint64_t seed, double threshold = 1e-4);

// Renumbers nodes: new index of node i is perm[i].
GraphInput permute_nodes(const GraphInput& g, std::span<const std::size_t> perm);

// Max |row sum - 1| over every cross-attention matrix of `passes` random
// forward passes.
CheckResult attention_normalization_check(std::uint64_t seed, std::size_t passes = 100);

// Max |logit - permuted logit| over random instances and modes.
CheckResult permutation_check(std::uint64_t seed, std::size_t instances = 50);

std::vector<CheckResult> run_selfcheck(std::uint64_t seed);
void print_results(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace fuseqa
