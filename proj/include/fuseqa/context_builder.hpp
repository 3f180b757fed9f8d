#pragma once

// Triplet linearization, sentence encoders and the lambda-weighted
// cosine/relation-frequency ranking that selects the top-k knowledge context
// for a question/choice pair.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fuseqa/kg_store.hpp"
#include "fuseqa/retrieval.hpp"

namespace fuseqa {

using Vector = std::vector<double>;

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  void set(std::string key, Vector v);
  const Vector* find(std::string_view key) const;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, Vector> vectors_;
};

// `dim <d>` header, then `key<TAB>f1 ... fd` lines.
EmbeddingTable parse_embedding_table(std::istream& in);
EmbeddingTable load_embedding_table(const std::string& path);

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  // Must return equal vectors for equal input strings.
  virtual Vector encode(std::string_view text) const = 0;
};

// Hashes word tokens into `dim` buckets (FNV-1a mod dim), adds 1 per token and
// L2-normalizes. Text with no tokens encodes to the zero vector.
class HashingEncoder final : public TextEncoder {
 public:
  explicit HashingEncoder(std::size_t dim = 64);
  std::size_t dim() const override { return dim_; }
  Vector encode(std::string_view text) const override;

 private:
  std::size_t dim_;
};

// Exact-key table lookup with an optional fallback encoder. Without a
// fallback (strict mode) a miss throws.
class TableEncoder final : public TextEncoder {
 public:
  TableEncoder(std::shared_ptr<const EmbeddingTable> table, std::shared_ptr<const TextEncoder> fallback);
  std::size_t dim() const override { return table_->dim(); }
  Vector encode(std::string_view text) const override;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
  std::shared_ptr<const TextEncoder> fallback_;
};

// u.v / (|u||v|) clamped to [-1, 1]; 0 (with a one-time warning on stderr)
// when either vector is zero.
double cosine(std::span<const double> u, std::span<const double> v);

std::string linearize_triplet(const Triplet& t, const TemplateTable& templates, const KnowledgeGraph& kg);

enum class ScoreText { templated, raw };
ScoreText parse_score_text(std::string_view s);
std::string_view to_string(ScoreText s);

struct ScoredTriplet {
  TripletId id = 0;
  std::string sentence;
  double cosine = 0.0;
  double relf = 0.0;
  double score = 0.0;
};

struct ScoringInputs {
  const KnowledgeGraph& kg;
  const TemplateTable& templates;
  const TextEncoder& encoder;
  const RelationStats& stats;
  ScoreText score_text = ScoreText::templated;
};

// score = lambda * cos(encode(sentence), question_vec) + (1 - lambda) * relf(r)
ScoredTriplet score_triplet(const Triplet& t, std::span<const double> question_vec, const ScoringInputs& in,
                            double lambda);
ScoredTriplet score_triplet(const Triplet& t, std::string_view question, const ScoringInputs& in, double lambda);

struct RetrievedContext {
  std::string question;
  std::vector<ScoredTriplet> triplets;  // descending score, ties by ascending id
  double lambda = 0.5;
  std::size_t k = 16;
};

// Descending score, ties broken by ascending triplet id, truncated to k.
RetrievedContext select_top_k(std::vector<ScoredTriplet> scored, std::size_t k);

struct ContextConfig {
  std::size_t max_hop = 3;
  std::size_t cap = 256;
  double lambda = 0.5;
  std::size_t k = 16;

  void validate() const;
};

// ground -> retrieve -> cap -> linearize/score -> top-k. `seeds` overrides
// grounding when the caller already has entity lists.
RetrievedContext build_context(std::string_view question, std::string_view choice, const ScoringInputs& in,
                               const ContextConfig& config, const std::optional<SeedSet>& seeds = std::nullopt);

// One record per line: score<TAB>cos<TAB>relf<TAB>triplet_id<TAB>sentence.
void write_context(const RetrievedContext& ctx, std::ostream& out);

}  // namespace fuseqa
