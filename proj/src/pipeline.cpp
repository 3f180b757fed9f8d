#include "fuseqa/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fuseqa/error.hpp"
#include "fuseqa/text.hpp"

namespace fuseqa {

using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  train.seed = s;
}

namespace {

template <typename T>
T get(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for " + key + ": " + v.dump());
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  if (!root.contains(name)) return empty;
  const json& s = root.at(name);
  if (!s.is_object()) throw ConfigError(std::string("section '") + name + "' must be an object");
  return s;
}

void set_key(RunConfig& c, const std::string& sec, const std::string& key, const json& v) {
  const std::string full = sec + "." + key;
  if (sec == "kg") {
    if (key == "triples") c.triples = get<std::string>(v, full);
    else if (key == "templates") c.templates = get<std::string>(v, full);
    else if (key == "embeddings") c.embeddings = get<std::string>(v, full);
    else if (key == "encoder_dim") c.encoder_dim = get_count(v, full);
    else if (key == "encoder_fallback") {
      const auto s = get<std::string>(v, full);
      if (s == "pseudo") c.encoder_fallback = EncoderFallback::pseudo;
      else if (s == "strict") c.encoder_fallback = EncoderFallback::strict;
      else throw ConfigError("kg.encoder_fallback must be pseudo or strict");
    } else throw ConfigError("unknown key " + full);
  } else if (sec == "retrieval") {
    if (key == "max_hop") c.context.max_hop = get_count(v, full);
    else if (key == "cap") c.context.cap = get_count(v, full);
    else throw ConfigError("unknown key " + full);
  } else if (sec == "scoring") {
    if (key == "lambda") c.context.lambda = get<double>(v, full);
    else if (key == "k") c.context.k = get_count(v, full);
    else if (key == "relf_mode") c.relf_mode = parse_relf_mode(get<std::string>(v, full));
    else if (key == "score_text") c.score_text = parse_score_text(get<std::string>(v, full));
    else throw ConfigError("unknown key " + full);
  } else if (sec == "model") {
    if (key == "seed") throw ConfigError("model.seed is not configurable; set the top-level seed");
    if (key == "num_relations") throw ConfigError("model.num_relations is derived from the knowledge graph");
    json one = json::parse(to_json(c.model));
    one[key] = v;
    const std::uint64_t seed = c.model.seed;
    c.model = model_config_from_json(one.dump());
    c.model.seed = seed;
  } else if (sec == "train") {
    if (key == "learning_rate") c.train.learning_rate = get<double>(v, full);
    else if (key == "steps") c.train.steps = get_count(v, full);
    else if (key == "batch_size") c.train.batch_size = get_count(v, full);
    else if (key == "optimizer") c.train.optimizer = parse_optimizer(get<std::string>(v, full));
    else if (key == "momentum") c.train.momentum = get<double>(v, full);
    else if (key == "clip_norm") c.train.clip_norm = get<double>(v, full);
    else if (key == "seed") throw ConfigError("train.seed is not configurable; set the top-level seed");
    else throw ConfigError("unknown key " + full);
  } else if (sec == "synthetic") {
    if (key == "train_examples") c.train_examples = get_count(v, full);
    else if (key == "test_examples") c.test_examples = get_count(v, full);
    else if (key == "kg_size") c.kg_size = get_count(v, full);
    else throw ConfigError("unknown key " + full);
  } else {
    throw ConfigError("unknown section '" + sec + "'");
  }
}

void validate(const RunConfig& c) {
  c.context.validate();
  c.model.validate();
  c.train.validate();
  if (c.encoder_dim == 0) throw ConfigError("kg.encoder_dim must be positive");
  if (c.kg_size == 0) throw ConfigError("synthetic.kg_size must be positive");
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : root.items()) {
    if (key == "seed") {
      if (!v.is_number_integer()) throw ConfigError("seed must be an integer");
      c.apply_seed(v.get<std::uint64_t>());
      continue;
    }
    if (key != "kg" && key != "retrieval" && key != "scoring" && key != "model" && key != "train" && key != "synthetic")
      throw ConfigError("unknown section '" + key + "'");
    if (key == "model") {
      // Merge the whole section before validating; keys depend on each other.
      json merged = json::parse(to_json(c.model));
      for (const auto& [k, value] : section(root, "model").items()) {
        if (k == "seed" || k == "num_relations") set_key(c, key, k, value);
        merged[k] = value;
      }
      const std::uint64_t seed = c.model.seed;
      c.model = model_config_from_json(merged.dump());
      c.model.seed = seed;
      continue;
    }
    for (const auto& [k, value] : section(root, key.c_str()).items()) set_key(c, key, k, value);
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["kg"] = {{"triples", c.triples},
             {"templates", c.templates},
             {"embeddings", c.embeddings},
             {"encoder_dim", c.encoder_dim},
             {"encoder_fallback", c.encoder_fallback == EncoderFallback::pseudo ? "pseudo" : "strict"}};
  j["retrieval"] = {{"max_hop", c.context.max_hop}, {"cap", c.context.cap}};
  j["scoring"] = {{"lambda", c.context.lambda},
                  {"k", c.context.k},
                  {"relf_mode", std::string(to_string(c.relf_mode))},
                  {"score_text", std::string(to_string(c.score_text))}};
  ordered_json model = ordered_json::parse(to_json(c.model));
  model.erase("seed");
  model.erase("num_relations");
  j["model"] = model;
  j["train"] = {{"learning_rate", c.train.learning_rate}, {"steps", c.train.steps},
                {"batch_size", c.train.batch_size},       {"optimizer", std::string(to_string(c.train.optimizer))},
                {"momentum", c.train.momentum},           {"clip_norm", c.train.clip_norm}};
  j["synthetic"] = {{"train_examples", c.train_examples}, {"test_examples", c.test_examples}, {"kg_size", c.kg_size}};
  return j.dump(2);
}

void apply_override(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must look like section.key=value");
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings need no quotes
  }
  if (path == "seed") {
    if (!value.is_number_integer()) throw ConfigError("seed must be an integer");
    c.apply_seed(value.get<std::uint64_t>());
    return;
  }
  const auto dot = path.find('.');
  if (dot == std::string::npos) throw ConfigError("override key must be section.key: " + path);
  set_key(c, path.substr(0, dot), path.substr(dot + 1), value);
  validate(c);
}

namespace {
constexpr std::string_view kBundleHeader = "fuseqa-kg-bundle 1";
}

void write_bundle(const KnowledgeGraph& kg, const TemplateTable& templates, std::ostream& out) {
  out << kBundleHeader << '\n';
  out << "entities " << kg.num_entities() << '\n';
  out << "relations " << kg.num_relations() << '\n';
  out << "triplets " << kg.num_triplets() << '\n';
  for (const auto& [rel, tmpl] : templates.entries()) out << "template\t" << rel << '\t' << tmpl << '\n';
  for (const auto& t : kg.triplets())
    out << "triple\t" << kg.entity_surface(t.head) << '\t' << kg.relation_surface(t.relation) << '\t'
        << kg.entity_surface(t.tail) << '\n';
}

void read_bundle(std::istream& in, KnowledgeGraph& kg, TemplateTable& templates) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != kBundleHeader) throw ParseError("not a fuseqa knowledge bundle", 1);
  std::size_t counts[3] = {0, 0, 0};
  const char* names[3] = {"entities", "relations", "triplets"};
  for (int i = 0; i < 3; ++i) {
    ++lineno;
    std::string word;
    if (!std::getline(in, line)) throw ParseError("truncated bundle header", lineno);
    std::istringstream ss(line);
    if (!(ss >> word >> counts[i]) || word != names[i]) throw ParseError(std::string("expected '") + names[i] + " <n>'", lineno);
  }
  KnowledgeGraph g;
  TemplateTable t;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = text::split_tabs(line);
    if (fields[0] == "template" && fields.size() == 3) {
      try {
        t.set(fields[1], fields[2]);
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), lineno);
      }
    } else if (fields[0] == "triple" && fields.size() == 4) {
      g.add(fields[1], fields[2], fields[3]);
    } else {
      throw ParseError("unrecognized bundle line", lineno);
    }
  }
  if (g.num_entities() != counts[0] || g.num_relations() != counts[1] || g.num_triplets() != counts[2])
    throw ParseError("bundle counts do not match its contents", 0);
  if (g.num_triplets() == 0) throw Error("empty knowledge graph");
  kg = std::move(g);
  templates = std::move(t);
}

KnowledgeBase make_knowledge_base(KnowledgeGraph kg, TemplateTable templates, const RunConfig& config) {
  KnowledgeBase kb;
  kb.stats = relation_stats(kg, config.relf_mode);
  kb.kg = std::move(kg);
  kb.templates = std::move(templates);
  kb.score_text = config.score_text;
  std::shared_ptr<const TextEncoder> pseudo = std::make_shared<HashingEncoder>(config.encoder_dim);
  if (config.embeddings.empty()) {
    kb.encoder = pseudo;
  } else {
    auto table = std::make_shared<EmbeddingTable>(load_embedding_table(config.embeddings));
    if (config.encoder_fallback == EncoderFallback::strict)
      kb.encoder = std::make_shared<TableEncoder>(table, nullptr);
    else
      kb.encoder = std::make_shared<TableEncoder>(table, std::make_shared<HashingEncoder>(table->dim()));
  }
  return kb;
}

KnowledgeBase load_knowledge_base(const std::string& bundle_path, const RunConfig& config) {
  std::ifstream in(bundle_path, std::ios::binary);
  if (!in) throw Error("cannot open knowledge bundle " + bundle_path);
  KnowledgeGraph kg;
  TemplateTable templates;
  read_bundle(in, kg, templates);
  return make_knowledge_base(std::move(kg), std::move(templates), config);
}

FusionModel make_model(const RunConfig& config, const KnowledgeBase& kb) {
  ModelConfig mc = config.model;
  mc.num_relations = std::max<std::size_t>(1, kb.kg.num_relations());
  return FusionModel(mc);
}

std::vector<EncodedExample> prepare_examples(std::span<const Example> examples, const KnowledgeBase& kb,
                                             const RunConfig& config, const ModelConfig& model) {
  const auto contexts = build_contexts(examples, kb, config.context);
  return encode_examples(examples, contexts, kb.kg, model);
}

AblationSetup ablation_setup(const RunConfig& config) {
  AblationSetup s;
  s.train_examples = config.train_examples;
  s.test_examples = config.test_examples;
  s.kg_size = config.kg_size;
  s.data_seed = config.seed;
  s.model = config.model;
  s.train = config.train;
  s.context = config.context;
  s.encoder_dim = config.encoder_dim;
  s.relf_mode = config.relf_mode;
  s.score_text = config.score_text;
  return s;
}

}  // namespace fuseqa
