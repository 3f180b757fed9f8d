#include "fuseqa/context_builder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fuseqa/error.hpp"
#include "fuseqa/text.hpp"

namespace fuseqa {

void EmbeddingTable::set(std::string key, Vector v) {
  if (v.size() != dim_)
    throw ConfigError("embedding for '" + key + "' has " + std::to_string(v.size()) + " values, expected " +
                      std::to_string(dim_));
  vectors_[std::move(key)] = std::move(v);
}

const Vector* EmbeddingTable::find(std::string_view key) const {
  auto it = vectors_.find(std::string(key));
  return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embedding_table(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<EmbeddingTable> table;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!table) {
      std::istringstream header(line);
      std::string word;
      long long dim = 0;
      if (!(header >> word >> dim) || word != "dim" || dim <= 0) throw ParseError("expected 'dim <d>' header", lineno);
      table.emplace(static_cast<std::size_t>(dim));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError("expected key<TAB>values", lineno);
    std::istringstream values(line.substr(tab + 1));
    Vector v;
    std::string tok;
    while (values >> tok) {
      char* end = nullptr;
      const double x = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size() || !std::isfinite(x)) throw ParseError("bad number '" + tok + "'", lineno);
      v.push_back(x);
    }
    if (v.size() != table->dim())
      throw ParseError("expected " + std::to_string(table->dim()) + " values, got " + std::to_string(v.size()), lineno);
    table->set(line.substr(0, tab), std::move(v));
  }
  if (!table) throw ParseError("missing 'dim <d>' header", 0);
  return std::move(*table);
}

EmbeddingTable load_embedding_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_embedding_table(in);
}

HashingEncoder::HashingEncoder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ConfigError("encoder dimension must be positive");
}

Vector HashingEncoder::encode(std::string_view text) const {
  Vector v(dim_, 0.0);
  for (const auto& tok : text::word_tokens(text)) v[text::fnv1a(tok) % dim_] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

TableEncoder::TableEncoder(std::shared_ptr<const EmbeddingTable> table, std::shared_ptr<const TextEncoder> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {
  if (!table_) throw ConfigError("TableEncoder needs a table");
  if (fallback_ && fallback_->dim() != table_->dim())
    throw ConfigError("fallback encoder dimension " + std::to_string(fallback_->dim()) +
                      " does not match table dimension " + std::to_string(table_->dim()));
}

Vector TableEncoder::encode(std::string_view text) const {
  if (const auto* v = table_->find(text)) return *v;
  if (!fallback_) throw Error("no embedding for '" + std::string(text) + "' (strict mode)");
  return fallback_->encode(text);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ShapeError("cosine of vectors with lengths " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) std::cerr << "warning: cosine with a zero vector, using 0\n";
    return 0.0;
  }
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

namespace {

std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

void replace_once(std::string& s, std::string_view placeholder, const std::string& value) {
  const auto pos = s.find(placeholder);
  s.replace(pos, placeholder.size(), value);
}

}  // namespace

std::string linearize_triplet(const Triplet& t, const TemplateTable& templates, const KnowledgeGraph& kg) {
  std::string sentence = templates.template_for(kg, t.relation);
  TemplateTable::validate(sentence);
  // Substitute tail first: a head surface containing "{tail}" must not be expanded.
  const auto head_pos = sentence.find("{head}");
  const auto tail_pos = sentence.find("{tail}");
  if (head_pos < tail_pos) {
    replace_once(sentence, "{tail}", kg.entity_surface(t.tail));
    replace_once(sentence, "{head}", kg.entity_surface(t.head));
  } else {
    replace_once(sentence, "{head}", kg.entity_surface(t.head));
    replace_once(sentence, "{tail}", kg.entity_surface(t.tail));
  }
  return collapse_spaces(sentence);
}

ScoreText parse_score_text(std::string_view s) {
  if (s == "templated") return ScoreText::templated;
  if (s == "raw") return ScoreText::raw;
  throw ConfigError("unknown score_text '" + std::string(s) + "'");
}

std::string_view to_string(ScoreText s) { return s == ScoreText::templated ? "templated" : "raw"; }

ScoredTriplet score_triplet(const Triplet& t, std::span<const double> question_vec, const ScoringInputs& in,
                            double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  ScoredTriplet s;
  s.id = t.id;
  s.sentence = linearize_triplet(t, in.templates, in.kg);
  const std::string scored_text =
      in.score_text == ScoreText::templated
          ? s.sentence
          : in.kg.entity_surface(t.head) + " " + in.kg.relation_surface(t.relation) + " " + in.kg.entity_surface(t.tail);
  const Vector tv = in.encoder.encode(scored_text);
  s.cosine = cosine(tv, question_vec);
  s.relf = in.stats.relf(t.relation);
  s.score = lambda * s.cosine + (1.0 - lambda) * s.relf;
  return s;
}

ScoredTriplet score_triplet(const Triplet& t, std::string_view question, const ScoringInputs& in, double lambda) {
  const Vector qv = in.encoder.encode(question);
  return score_triplet(t, qv, in, lambda);
}

RetrievedContext select_top_k(std::vector<ScoredTriplet> scored, std::size_t k) {
  if (k == 0) throw ConfigError("k must be positive");
  auto before = [](const ScoredTriplet& a, const ScoredTriplet& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), before);
  scored.resize(keep);
  RetrievedContext ctx;
  ctx.k = k;
  ctx.triplets = std::move(scored);
  return ctx;
}

void ContextConfig::validate() const {
  if (max_hop == 0) throw ConfigError("retrieval.max_hop must be positive");
  if (cap == 0) throw ConfigError("retrieval.cap must be positive");
  if (k == 0) throw ConfigError("scoring.k must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("scoring.lambda must lie in [0, 1]");
}

RetrievedContext build_context(std::string_view question, std::string_view choice, const ScoringInputs& in,
                               const ContextConfig& config, const std::optional<SeedSet>& seeds) {
  config.validate();
  SeedSet grounded;
  if (seeds) {
    grounded = *seeds;
  } else {
    grounded.question = ground_entities(question, in.kg);
    grounded.answer = ground_entities(choice, in.kg);
  }
  const Subgraph sub = cap_subgraph(retrieve_subgraph(in.kg, grounded, config.max_hop), in.kg, config.cap);

  std::vector<ScoredTriplet> scored;
  scored.reserve(sub.triplets.size());
  if (!sub.empty()) {
    const Vector qv = in.encoder.encode(question);
    for (auto id : sub.triplets) scored.push_back(score_triplet(in.kg.triplet(id), qv, in, config.lambda));
  }
  RetrievedContext ctx = select_top_k(std::move(scored), config.k);
  ctx.question = std::string(question);
  ctx.lambda = config.lambda;
  return ctx;
}

void write_context(const RetrievedContext& ctx, std::ostream& out) {
  char buf[128];
  for (const auto& s : ctx.triplets) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f\t%u\t", s.score, s.cosine, s.relf, s.id);
    out << buf << s.sentence << '\n';
  }
}

}  // namespace fuseqa
