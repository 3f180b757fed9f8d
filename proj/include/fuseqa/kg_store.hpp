#pragma once

// Knowledge-graph store: triple/template ingestion, vocabularies, adjacency
// indexes and relation statistics. A KnowledgeGraph is immutable once loaded
// and may be shared read-only between threads.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fuseqa {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};
using TripletId = std::uint32_t;

constexpr std::uint32_t index(EntityId e) { return static_cast<std::uint32_t>(e); }
constexpr std::uint32_t index(RelationId r) { return static_cast<std::uint32_t>(r); }

struct Triplet {
  EntityId head;
  RelationId relation;
  EntityId tail;
  TripletId id;

  bool operator==(const Triplet&) const = default;
};

// Dense string <-> id mapping. Lookup goes through text::normalize, so two
// surfaces that differ only in case or whitespace share an id; the first
// spelling seen is kept as the display surface.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view surface);
  std::optional<std::uint32_t> find(std::string_view surface) const;
  const std::string& surface(std::uint32_t id) const { return surfaces_.at(id); }
  const std::string& normalized(std::uint32_t id) const { return normalized_.at(id); }
  std::size_t size() const { return surfaces_.size(); }

  bool operator==(const Vocabulary& o) const { return normalized_ == o.normalized_ && surfaces_ == o.surfaces_; }

 private:
  std::vector<std::string> surfaces_;
  std::vector<std::string> normalized_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Appends one triplet; ids are assigned in call order.
  TripletId add(std::string_view head, std::string_view relation, std::string_view tail);

  std::span<const Triplet> triplets() const { return triplets_; }
  const Triplet& triplet(TripletId id) const { return triplets_.at(id); }
  std::size_t num_triplets() const { return triplets_.size(); }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  // Triplet ids with the entity as head (out) or tail (in), ascending.
  std::span<const TripletId> out_edges(EntityId e) const { return out_.at(index(e)); }
  std::span<const TripletId> in_edges(EntityId e) const { return in_.at(index(e)); }

  const std::string& entity_surface(EntityId e) const { return entities_.surface(index(e)); }
  const std::string& relation_surface(RelationId r) const { return relations_.surface(index(r)); }
  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }

  std::optional<EntityId> lookup_entity(std::string_view surface) const;
  // Longest entity surface, in normalized space-separated tokens.
  std::size_t max_entity_tokens() const { return max_entity_tokens_; }
  std::optional<RelationId> lookup_relation(std::string_view surface) const;

  bool operator==(const KnowledgeGraph&) const = default;

 private:
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triplet> triplets_;
  std::vector<std::vector<TripletId>> out_;
  std::vector<std::vector<TripletId>> in_;
  std::size_t max_entity_tokens_ = 0;
};

// Parses `head<TAB>relation<TAB>tail` lines. '#' lines and blank lines are
// skipped. Throws ParseError naming the offending line, or Error("empty
// knowledge graph") when no triplet was read.
KnowledgeGraph parse_triples(std::istream& in);
KnowledgeGraph load_triples(const std::string& path);

// Writes triplets back in id order, one per line, using display surfaces.
void write_triples(const KnowledgeGraph& kg, std::ostream& out);

enum class RelfMode { frequency, inverse_frequency };

RelfMode parse_relf_mode(std::string_view s);
std::string_view to_string(RelfMode m);

struct RelationStats {
  std::vector<std::size_t> count;
  std::vector<double> rel_freq;
  RelfMode mode = RelfMode::frequency;

  double relf(RelationId r) const { return rel_freq.at(index(r)); }
};

// frequency: count(r)/total. inverse_frequency: (1/count(r)) normalized to
// sum to one over relations that occur.
RelationStats relation_stats(const KnowledgeGraph& kg, RelfMode mode = RelfMode::frequency);

// Relation -> sentence template with `{head}` and `{tail}` each exactly once.
// Relations without an entry use "{head} <relation surface> {tail}".
class TemplateTable {
 public:
  // Throws ConfigError on a malformed template.
  void set(std::string_view relation, std::string tmpl);
  const std::string* find(std::string_view relation) const;
  std::string template_for(const KnowledgeGraph& kg, RelationId r) const;
  std::size_t size() const { return templates_.size(); }

  // Entries in ascending normalized-relation order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  static void validate(std::string_view tmpl);

 private:
  std::unordered_map<std::string, std::pair<std::string, std::string>> templates_;
};

TemplateTable parse_templates(std::istream& in);
TemplateTable load_templates(const std::string& path);
void write_templates(const TemplateTable& table, std::ostream& out);

}  // namespace fuseqa
