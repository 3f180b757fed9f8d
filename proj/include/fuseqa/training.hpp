#pragma once

// Multiple-choice QA data, the planted-knowledge synthetic task, the
// retrieval -> model glue, SGD training, evaluation and ablation grids.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuseqa/context_builder.hpp"
#include "fuseqa/fusion_model.hpp"
#include "fuseqa/kg_store.hpp"

namespace fuseqa {

struct Example {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  std::size_t answer = 0;
  // Optional pre-grounded entity surfaces; when present they replace text grounding.
  std::optional<std::vector<std::string>> question_entities;
  std::optional<std::vector<std::vector<std::string>>> choice_entities;

  bool operator==(const Example&) const = default;
};

// One JSON object per line with id, question, choices, answer and optionally
// question_entities / choice_entities. Blank lines are skipped.
std::vector<Example> parse_dataset(std::istream& in);
std::vector<Example> load_dataset(const std::string& path);
void write_dataset(std::span<const Example> examples, std::ostream& out);
void save_dataset(std::span<const Example> examples, const std::string& path);

enum class Split { train, ihdev, ihtest };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);
// <dir>/<split>.jsonl
std::vector<Example> load_split(const std::string& dir, Split split);

struct SyntheticTask {
  KnowledgeGraph kg;
  TemplateTable templates;
  std::vector<Example> examples;
  std::string answer_relation;
};

// Every example gets six fresh entities: a question entity q, the answer a and
// four distractors. The KG holds exactly one answer-relation triplet from q to
// a choice (q -> a); distractors are tied to q only through other relations
// or longer paths, and filler entities add background triplets. Choice names
// are fresh random words, so the question text alone carries no answer signal.
// kg_size is the number of filler entities.
SyntheticTask make_synthetic_task(std::size_t n_examples, std::size_t kg_size, std::uint64_t seed);

// Everything retrieval and scoring need, loaded once.
struct KnowledgeBase {
  KnowledgeGraph kg;
  TemplateTable templates;
  RelationStats stats;
  std::shared_ptr<const TextEncoder> encoder;
  ScoreText score_text = ScoreText::templated;

  ScoringInputs scoring() const { return {kg, templates, *encoder, stats, score_text}; }
};

SeedSet seeds_for(const Example& ex, std::size_t choice, const KnowledgeGraph& kg);

// contexts[i][j] belongs to example i, choice j.
using ContextGrid = std::vector<std::vector<RetrievedContext>>;
ContextGrid build_contexts(std::span<const Example> examples, const KnowledgeBase& kb, const ContextConfig& config);

// Nodes are the endpoints of the context triplets in ascending entity id.
// node_init row = [is question seed, is answer seed, neither, hashed surface
// features over the remaining d_gnn - 3 columns].
GraphInput make_graph_input(const RetrievedContext& ctx, const KnowledgeGraph& kg, const SeedSet& seeds,
                            std::size_t d_gnn);

struct EncodedExample {
  std::string id;
  std::vector<Candidate> candidates;
  std::size_t answer = 0;
};

std::vector<EncodedExample> encode_examples(std::span<const Example> examples, const ContextGrid& contexts,
                                            const KnowledgeGraph& kg, const ModelConfig& config);

enum class Optimizer { sgd, momentum };
Optimizer parse_optimizer(std::string_view s);
std::string_view to_string(Optimizer o);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t steps = 2000;
  std::size_t batch_size = 1;  // questions per update; gradients are averaged
  std::uint64_t seed = 7;
  Optimizer optimizer = Optimizer::momentum;
  double momentum = 0.9;
  double clip_norm = 1.0;  // 0 disables clipping

  void validate() const;
};

struct Prediction {
  std::string id;
  std::size_t predicted = 0;
  std::size_t answer = 0;
  std::vector<double> logits;
};

struct Metrics {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<Prediction> predictions;
  std::vector<double> loss_curve;
};

// Examples are visited in a fresh SplitMix64 shuffle every epoch. Each step
// averages cross-entropy over batch_size questions, clips the global gradient
// norm and applies the update. Throws NumericError on a non-finite loss.
// Returned metrics hold the loss curve and the final training accuracy.
Metrics train(FusionModel& model, std::span<const EncodedExample> examples, const TrainConfig& config);

// Throws Error("empty evaluation set") for no examples.
Metrics evaluate(const FusionModel& model, std::span<const EncodedExample> examples);

double mean_loss(const FusionModel& model, std::span<const EncodedExample> examples);

// JSON record per example, then nothing else; doubles round-trip exactly.
void write_predictions(const Metrics& m, std::ostream& out);
void write_loss_curve(const Metrics& m, std::ostream& out);

struct AblationCell {
  FusionMode mode = FusionMode::cross_attention;
  std::size_t heads = 1;
  std::size_t max_hop = 3;

  std::string label() const;
};

// {none, naive, interaction, cross-1, cross-4} x hop {1, 3}.
std::vector<AblationCell> default_ablation_grid();

struct AblationSetup {
  std::size_t train_examples = 500;
  std::size_t test_examples = 200;
  std::size_t kg_size = 400;
  std::uint64_t data_seed = 11;
  ModelConfig model;
  TrainConfig train;
  ContextConfig context;
  std::size_t encoder_dim = 64;
  RelfMode relf_mode = RelfMode::frequency;
  ScoreText score_text = ScoreText::templated;
};

struct AblationRow {
  AblationCell cell;
  bool ok = false;
  std::string error;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
};

// Trains and evaluates every cell on the same synthetic data and seeds. A
// failing cell is recorded and the remaining cells still run.
std::vector<AblationRow> run_ablation(std::span<const AblationCell> grid, const AblationSetup& setup);
std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace fuseqa
