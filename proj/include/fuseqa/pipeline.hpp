#pragma once

// Run configuration and the on-disk knowledge bundle shared by the CLI
// subcommands.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "fuseqa/context_builder.hpp"
#include "fuseqa/fusion_model.hpp"
#include "fuseqa/training.hpp"

namespace fuseqa {

enum class EncoderFallback { pseudo, strict };

struct RunConfig {
  std::uint64_t seed = 7;

  // kg
  std::string triples;
  std::string templates;
  std::string embeddings;  // optional EmbeddingTable file keyed by sentence text
  std::size_t encoder_dim = 64;
  EncoderFallback encoder_fallback = EncoderFallback::pseudo;

  // retrieval + scoring
  ContextConfig context;
  RelfMode relf_mode = RelfMode::frequency;
  ScoreText score_text = ScoreText::templated;

  ModelConfig model;
  TrainConfig train;

  // synthetic
  std::size_t train_examples = 500;
  std::size_t test_examples = 200;
  std::size_t kg_size = 400;

  // Pushes `seed` into model.seed and train.seed.
  void apply_seed(std::uint64_t s);
};

// Sections: seed, kg, retrieval, scoring, model, train, synthetic. Unknown
// keys, model.seed, model.num_relations and train.seed are rejected (seeds
// come from the top-level `seed`; the relation count comes from the KG).
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);
std::string to_json(const RunConfig& c);

// Overrides one key, e.g. "scoring.lambda=0.25" or "model.fusion_mode=naive".
void apply_override(RunConfig& c, std::string_view assignment);

// Bundle: header, counts, sorted template lines, then triple lines in id order.
void write_bundle(const KnowledgeGraph& kg, const TemplateTable& templates, std::ostream& out);
void read_bundle(std::istream& in, KnowledgeGraph& kg, TemplateTable& templates);

// Loads a bundle and builds stats and the configured encoder.
KnowledgeBase load_knowledge_base(const std::string& bundle_path, const RunConfig& config);
KnowledgeBase make_knowledge_base(KnowledgeGraph kg, TemplateTable templates, const RunConfig& config);

// Model sized to the knowledge base's relation vocabulary.
FusionModel make_model(const RunConfig& config, const KnowledgeBase& kb);

// Retrieval plus encoding for every example and choice.
std::vector<EncodedExample> prepare_examples(std::span<const Example> examples, const KnowledgeBase& kb,
                                             const RunConfig& config, const ModelConfig& model);

// Synthetic ablation run driven by the config; the data seed is the run seed.
AblationSetup ablation_setup(const RunConfig& config);

}  // namespace fuseqa
