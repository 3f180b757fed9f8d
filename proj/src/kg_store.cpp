#include "fuseqa/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "fuseqa/error.hpp"
#include "fuseqa/text.hpp"

namespace fuseqa {

std::uint32_t Vocabulary::intern(std::string_view surface) {
  std::string key = text::normalize(surface);
  if (key.empty()) throw Error("empty surface");
  auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(surfaces_.size()));
  if (inserted) {
    surfaces_.emplace_back(surface);
    normalized_.push_back(std::move(key));
  }
  return it->second;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view surface) const {
  auto it = index_.find(text::normalize(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TripletId KnowledgeGraph::add(std::string_view head, std::string_view relation, std::string_view tail) {
  const auto h = EntityId{entities_.intern(head)};
  const auto r = RelationId{relations_.intern(relation)};
  const auto t = EntityId{entities_.intern(tail)};
  const auto id = static_cast<TripletId>(triplets_.size());
  triplets_.push_back({h, r, t, id});
  for (auto e : {h, t}) {
    const auto& key = entities_.normalized(index(e));
    max_entity_tokens_ = std::max<std::size_t>(max_entity_tokens_, std::count(key.begin(), key.end(), ' ') + 1);
  }
  out_.resize(entities_.size());
  in_.resize(entities_.size());
  // ids grow monotonically, so push_back keeps the lists sorted
  out_[index(h)].push_back(id);
  in_[index(t)].push_back(id);
  return id;
}

std::optional<EntityId> KnowledgeGraph::lookup_entity(std::string_view surface) const {
  if (auto id = entities_.find(surface)) return EntityId{*id};
  return std::nullopt;
}

std::optional<RelationId> KnowledgeGraph::lookup_relation(std::string_view surface) const {
  if (auto id = relations_.find(surface)) return RelationId{*id};
  return std::nullopt;
}

namespace {

bool skip_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.empty()) return true;
  return line.front() == '#';
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos; }

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return in;
}

}  // namespace

KnowledgeGraph parse_triples(std::istream& in) {
  KnowledgeGraph kg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    auto fields = text::split_tabs(line);
    if (fields.size() != 3)
      throw ParseError("expected 3 tab-separated fields, got " + std::to_string(fields.size()), lineno);
    for (const auto& f : fields)
      if (blank(f) || text::normalize(f).empty()) throw ParseError("empty field", lineno);
    kg.add(fields[0], fields[1], fields[2]);
  }
  if (kg.num_triplets() == 0) throw Error("empty knowledge graph");
  return kg;
}

KnowledgeGraph load_triples(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_triples(in);
}

void write_triples(const KnowledgeGraph& kg, std::ostream& out) {
  for (const auto& t : kg.triplets())
    out << kg.entity_surface(t.head) << '\t' << kg.relation_surface(t.relation) << '\t'
        << kg.entity_surface(t.tail) << '\n';
}

RelfMode parse_relf_mode(std::string_view s) {
  if (s == "frequency") return RelfMode::frequency;
  if (s == "inverse_frequency") return RelfMode::inverse_frequency;
  throw ConfigError("unknown relf_mode '" + std::string(s) + "'");
}

std::string_view to_string(RelfMode m) {
  return m == RelfMode::frequency ? "frequency" : "inverse_frequency";
}

RelationStats relation_stats(const KnowledgeGraph& kg, RelfMode mode) {
  if (kg.num_triplets() == 0) throw Error("relation_stats on an empty knowledge graph");
  RelationStats stats;
  stats.mode = mode;
  stats.count.assign(kg.num_relations(), 0);
  for (const auto& t : kg.triplets()) ++stats.count[index(t.relation)];

  stats.rel_freq.assign(kg.num_relations(), 0.0);
  if (mode == RelfMode::frequency) {
    const double total = static_cast<double>(kg.num_triplets());
    for (std::size_t r = 0; r < stats.count.size(); ++r) stats.rel_freq[r] = static_cast<double>(stats.count[r]) / total;
  } else {
    double z = 0.0;
    for (auto c : stats.count)
      if (c) z += 1.0 / static_cast<double>(c);
    for (std::size_t r = 0; r < stats.count.size(); ++r)
      if (stats.count[r]) stats.rel_freq[r] = (1.0 / static_cast<double>(stats.count[r])) / z;
  }
  return stats;
}

void TemplateTable::validate(std::string_view tmpl) {
  std::size_t heads = 0, tails = 0;
  for (std::size_t pos = tmpl.find('{'); pos != std::string_view::npos; pos = tmpl.find('{', pos + 1)) {
    const auto close = tmpl.find('}', pos);
    if (close == std::string_view::npos) throw ConfigError("unterminated placeholder in template '" + std::string(tmpl) + "'");
    const auto name = tmpl.substr(pos + 1, close - pos - 1);
    if (name == "head")
      ++heads;
    else if (name == "tail")
      ++tails;
    else
      throw ConfigError("unknown placeholder {" + std::string(name) + "} in template '" + std::string(tmpl) + "'");
  }
  if (heads != 1 || tails != 1)
    throw ConfigError("template must contain {head} and {tail} exactly once: '" + std::string(tmpl) + "'");
}

void TemplateTable::set(std::string_view relation, std::string tmpl) {
  validate(tmpl);
  templates_[text::normalize(relation)] = {std::string(relation), std::move(tmpl)};
}

const std::string* TemplateTable::find(std::string_view relation) const {
  auto it = templates_.find(text::normalize(relation));
  return it == templates_.end() ? nullptr : &it->second.second;
}

std::string TemplateTable::template_for(const KnowledgeGraph& kg, RelationId r) const {
  const auto& surface = kg.relation_surface(r);
  if (const auto* t = find(surface)) return *t;
  return "{head} " + surface + " {tail}";
}

std::vector<std::pair<std::string, std::string>> TemplateTable::entries() const {
  std::vector<std::pair<std::string, std::string>> keyed;
  for (const auto& [key, value] : templates_) keyed.emplace_back(key, value.second);
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, tmpl] : keyed) out.emplace_back(templates_.at(key).first, tmpl);
  return out;
}

TemplateTable parse_templates(std::istream& in) {
  TemplateTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    auto fields = text::split_tabs(line);
    if (fields.size() != 2)
      throw ParseError("expected relation<TAB>template, got " + std::to_string(fields.size()) + " fields", lineno);
    if (blank(fields[0]) || blank(fields[1])) throw ParseError("empty field", lineno);
    try {
      table.set(fields[0], fields[1]);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return table;
}

TemplateTable load_templates(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_templates(in);
}

void write_templates(const TemplateTable& table, std::ostream& out) {
  for (const auto& [rel, tmpl] : table.entries()) out << rel << '\t' << tmpl << '\n';
}

}  // namespace fuseqa
