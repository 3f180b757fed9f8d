#include "fuseqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fuseqa/error.hpp"
#include "fuseqa/text.hpp"

namespace fuseqa {

using nlohmann::json;

namespace {

Example example_from_json(const json& j, std::size_t lineno) {
  if (!j.is_object()) throw ParseError("record is not an object", lineno);
  Example ex;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "id") ex.id = v.is_string() ? v.get<std::string>() : v.dump();
      else if (key == "question") ex.question = v.get<std::string>();
      else if (key == "choices") ex.choices = v.get<std::vector<std::string>>();
      else if (key == "answer") {
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ParseError("answer must be a non-negative integer", lineno);
        ex.answer = v.get<std::size_t>();
      } else if (key == "question_entities") ex.question_entities = v.get<std::vector<std::string>>();
      else if (key == "choice_entities") ex.choice_entities = v.get<std::vector<std::vector<std::string>>>();
      else throw ParseError("unknown field '" + key + "'", lineno);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad field type: ") + e.what(), lineno);
  }
  for (const char* field : {"id", "question", "choices", "answer"})
    if (!j.contains(field)) throw ParseError(std::string("missing field '") + field + "'", lineno);
  if (ex.choices.size() < 2) throw ParseError("need at least 2 choices", lineno);
  if (ex.answer >= ex.choices.size())
    throw ParseError("answer " + std::to_string(ex.answer) + " out of range for " + std::to_string(ex.choices.size()) +
                         " choices",
                     lineno);
  if (ex.choice_entities && ex.choice_entities->size() != ex.choices.size())
    throw ParseError("choice_entities must have one list per choice", lineno);
  return ex;
}

json example_to_json(const Example& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["question"] = ex.question;
  j["choices"] = ex.choices;
  j["answer"] = ex.answer;
  if (ex.question_entities) j["question_entities"] = *ex.question_entities;
  if (ex.choice_entities) j["choice_entities"] = *ex.choice_entities;
  return j;
}

}  // namespace

std::vector<Example> parse_dataset(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    }
    out.push_back(example_from_json(j, lineno));
  }
  return out;
}

std::vector<Example> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_dataset(in);
}

void write_dataset(std::span<const Example> examples, std::ostream& out) {
  for (const auto& ex : examples) out << nlohmann::ordered_json(example_to_json(ex)).dump() << '\n';
}

void save_dataset(std::span<const Example> examples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_dataset(examples, out);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::ihdev: return "ihdev";
    case Split::ihtest: return "ihtest";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "ihdev") return Split::ihdev;
  if (s == "ihtest") return Split::ihtest;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

std::vector<Example> load_split(const std::string& dir, Split split) {
  return load_dataset(dir + "/" + std::string(to_string(split)) + ".jsonl");
}

// --- synthetic task --------------------------------------------------------

namespace {

struct RelationSpec {
  const char* name;
  const char* tmpl;
};

constexpr RelationSpec kRelations[] = {
    {"IsA", "{head} is a kind of {tail}"},
    {"AtLocation", "{head} is located at {tail}"},
    {"UsedFor", "{head} is used for {tail}"},
    {"PartOf", "{head} is part of {tail}"},
    {"HasProperty", "{head} has the property {tail}"},
    {"Causes", "{head} causes {tail}"},
};
constexpr std::size_t kAnswerRelation = 5;
constexpr std::size_t kNumRelations = std::size(kRelations);

class NameMaker {
 public:
  explicit NameMaker(SplitMix64& rng) : rng_(rng) {}

  std::string next() {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    while (true) {
      std::string name;
      for (int s = 0; s < 3; ++s) {
        name += consonants[rng_.below(consonants.size())];
        name += vowels[rng_.below(vowels.size())];
      }
      if (used_.insert(name).second) return name;
    }
  }

 private:
  SplitMix64& rng_;
  std::set<std::string> used_;
};

}  // namespace

SyntheticTask make_synthetic_task(std::size_t n_examples, std::size_t kg_size, std::uint64_t seed) {
  if (kg_size == 0) throw ConfigError("synthetic kg_size must be positive");
  SplitMix64 rng(seed);
  NameMaker names(rng);
  SyntheticTask task;
  task.answer_relation = kRelations[kAnswerRelation].name;
  for (const auto& r : kRelations) task.templates.set(r.name, r.tmpl);

  std::vector<std::string> filler;
  for (std::size_t i = 0; i < kg_size; ++i) filler.push_back(names.next());
  auto any_filler = [&] { return filler[rng.below(filler.size())]; };
  auto other_relation = [&] { return std::string(kRelations[rng.below(kNumRelations - 1)].name); };
  auto any_relation = [&] { return std::string(kRelations[rng.below(kNumRelations)].name); };
  auto chance = [&](double p) { return rng.uniform() < p; };
  auto link = [&](const std::string& a, const std::string& rel, const std::string& b) {
    if (chance(0.5))
      task.kg.add(a, rel, b);
    else
      task.kg.add(b, rel, a);
  };

  for (std::size_t i = 0; i < 2 * kg_size; ++i) {
    const auto a = any_filler();
    auto b = any_filler();
    if (a == b) continue;
    task.kg.add(a, any_relation(), b);
  }
  if (task.kg.num_triplets() == 0) task.kg.add(filler[0], any_relation(), names.next());

  const std::string answer_rel = task.answer_relation;
  for (std::size_t i = 0; i < n_examples; ++i) {
    const std::string q = names.next();
    const std::string answer = names.next();
    std::vector<std::string> distractors;
    for (int d = 0; d < 4; ++d) distractors.push_back(names.next());

    task.kg.add(q, answer_rel, answer);
    for (const auto* e : {&q, &answer}) link(*e, other_relation(), any_filler());
    if (chance(0.3)) task.kg.add(q, answer_rel, any_filler());
    if (chance(0.3)) {
      const auto x = any_filler();
      link(q, other_relation(), x);
      link(x, other_relation(), answer);
    }
    for (const auto& d : distractors) {
      link(d, any_relation(), any_filler());
      if (chance(0.4)) link(q, other_relation(), d);
      if (chance(0.3)) {
        const auto x = any_filler();
        link(q, other_relation(), x);
        link(x, any_relation(), d);
      }
    }

    Example ex;
    ex.id = "syn-" + std::to_string(i);
    ex.question = "what does " + q + " cause ?";
    ex.choices = distractors;
    ex.answer = rng.below(5);
    ex.choices.insert(ex.choices.begin() + static_cast<std::ptrdiff_t>(ex.answer), answer);
    task.examples.push_back(std::move(ex));
  }
  return task;
}

// --- retrieval -> model glue --------------------------------------------------

namespace {

std::set<EntityId> lookup_all(const std::vector<std::string>& surfaces, const KnowledgeGraph& kg) {
  std::set<EntityId> out;
  for (const auto& s : surfaces)
    if (auto e = kg.lookup_entity(s)) out.insert(*e);
  return out;
}

}  // namespace

SeedSet seeds_for(const Example& ex, std::size_t choice, const KnowledgeGraph& kg) {
  SeedSet seeds;
  seeds.question = ex.question_entities ? lookup_all(*ex.question_entities, kg) : ground_entities(ex.question, kg);
  seeds.answer = ex.choice_entities ? lookup_all(ex.choice_entities->at(choice), kg)
                                    : ground_entities(ex.choices.at(choice), kg);
  return seeds;
}

ContextGrid build_contexts(std::span<const Example> examples, const KnowledgeBase& kb, const ContextConfig& config) {
  ContextGrid grid;
  grid.reserve(examples.size());
  const auto in = kb.scoring();
  for (const auto& ex : examples) {
    auto& row = grid.emplace_back();
    for (std::size_t c = 0; c < ex.choices.size(); ++c)
      row.push_back(build_context(ex.question, ex.choices[c], in, config, seeds_for(ex, c, kb.kg)));
  }
  return grid;
}

GraphInput make_graph_input(const RetrievedContext& ctx, const KnowledgeGraph& kg, const SeedSet& seeds,
                            std::size_t d_gnn) {
  if (d_gnn < 4) throw ConfigError("d_gnn must be at least 4 for node features");
  std::vector<TripletId> ids;
  for (const auto& s : ctx.triplets) ids.push_back(s.id);
  const Subgraph sub = subgraph_from_triplets(kg, ids, 0);

  GraphInput g;
  g.num_nodes = sub.nodes.size();
  if (g.num_nodes == 0) return g;
  auto row_of = [&](EntityId e) {
    return static_cast<std::uint32_t>(std::lower_bound(sub.nodes.begin(), sub.nodes.end(), e) - sub.nodes.begin());
  };
  for (auto id : sub.triplets) {
    const auto& t = kg.triplet(id);
    g.edges.push_back({row_of(t.head), index(t.relation), row_of(t.tail)});
  }
  const HashingEncoder surface(d_gnn - 3);
  g.node_init = Tensor({g.num_nodes, d_gnn});
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const EntityId e = sub.nodes[i];
    const bool q = seeds.question.count(e) > 0;
    const bool a = seeds.answer.count(e) > 0;
    g.node_init(i, 0) = q ? 1.0 : 0.0;
    g.node_init(i, 1) = a ? 1.0 : 0.0;
    g.node_init(i, 2) = (q || a) ? 0.0 : 1.0;
    const Vector f = surface.encode(kg.entity_surface(e));
    for (std::size_t j = 0; j < f.size(); ++j) g.node_init(i, 3 + j) = f[j];
  }
  return g;
}

std::vector<EncodedExample> encode_examples(std::span<const Example> examples, const ContextGrid& contexts,
                                            const KnowledgeGraph& kg, const ModelConfig& config) {
  if (contexts.size() != examples.size()) throw ConfigError("contexts are not aligned with examples");
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (contexts[i].size() != ex.choices.size()) throw ConfigError("example " + ex.id + ": one context per choice required");
    EncodedExample enc;
    enc.id = ex.id;
    enc.answer = ex.answer;
    for (std::size_t c = 0; c < ex.choices.size(); ++c) {
      Candidate cand;
      cand.tokens = encode_tokens(ex.question, ex.choices[c], config);
      if (config.uses_graph()) cand.graph = make_graph_input(contexts[i][c], kg, seeds_for(ex, c, kg), config.d_gnn);
      enc.candidates.push_back(std::move(cand));
    }
    out.push_back(std::move(enc));
  }
  return out;
}

// --- training ----------------------------------------------------------------

Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "momentum") return Optimizer::momentum;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "momentum"; }

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
}

namespace {

class EpochOrder {
 public:
  EpochOrder(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {}

  std::size_t next() {
    if (pos_ >= order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    pos_ = 0;
  }

  SplitMix64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = SIZE_MAX;
};

}  // namespace

Metrics train(FusionModel& model, std::span<const EncodedExample> examples, const TrainConfig& config) {
  config.validate();
  if (examples.empty()) throw Error("empty training set");
  auto params = model.params().all();
  std::vector<Tensor> velocity;
  for (auto* p : params) velocity.emplace_back(p->value.shape());

  EpochOrder order(examples.size(), config.seed);
  std::vector<double> curve;
  curve.reserve(config.steps);
  const double scale = 1.0 / static_cast<double>(config.batch_size);

  for (std::size_t step = 0; step < config.steps; ++step) {
    model.params().zero_grad();
    double loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& ex = examples[order.next()];
      Tape tape;
      Var l = ops::cross_entropy(candidate_logits(tape, model, ex.candidates), ex.answer);
      const double v = l.value()[0];
      if (!std::isfinite(v))
        throw NumericError("non-finite loss at step " + std::to_string(step) + " on example " + ex.id);
      loss += v * scale;
      tape.backward(config.batch_size == 1 ? l : ops::mul_scalar(l, scale));
    }
    curve.push_back(loss);

    double norm2 = 0.0;
    for (auto* p : params)
      if (p->trainable)
        for (double g : p->grad.data()) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient at step " + std::to_string(step));
    const double clip = (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;

    for (std::size_t k = 0; k < params.size(); ++k) {
      auto* p = params[k];
      if (!p->trainable) continue;
      auto value = p->value.data();
      auto grad = p->grad.data();
      auto vel = velocity[k].data();
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i] * clip;
        if (config.optimizer == Optimizer::momentum) {
          vel[i] = config.momentum * vel[i] + g;
          value[i] -= config.learning_rate * vel[i];
        } else {
          value[i] -= config.learning_rate * g;
        }
      }
    }
  }
  model.params().zero_grad();

  Metrics m = evaluate(model, examples);
  m.loss_curve = std::move(curve);
  return m;
}

Metrics evaluate(const FusionModel& model, std::span<const EncodedExample> examples) {
  if (examples.empty()) throw Error("empty evaluation set");
  Metrics m;
  m.total = examples.size();
  for (const auto& ex : examples) {
    const auto scores = score_candidates(model, ex.candidates);
    Prediction p{ex.id, scores.prediction, ex.answer, scores.logits};
    if (p.predicted == p.answer) ++m.correct;
    m.predictions.push_back(std::move(p));
  }
  m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
  return m;
}

double mean_loss(const FusionModel& model, std::span<const EncodedExample> examples) {
  if (examples.empty()) throw Error("empty evaluation set");
  double total = 0.0;
  for (const auto& ex : examples) {
    Tape tape;
    total += ops::cross_entropy(candidate_logits(tape, model, ex.candidates), ex.answer).value()[0];
  }
  return total / static_cast<double>(examples.size());
}

void write_predictions(const Metrics& m, std::ostream& out) {
  for (const auto& p : m.predictions) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["prediction"] = p.predicted;
    j["answer"] = p.answer;
    j["correct"] = p.predicted == p.answer;
    j["logits"] = p.logits;
    out << j.dump() << '\n';
  }
}

void write_loss_curve(const Metrics& m, std::ostream& out) {
  char buf[64];
  for (std::size_t i = 0; i < m.loss_curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\n", i, m.loss_curve[i]);
    out << buf;
  }
}

// --- ablation ----------------------------------------------------------------

std::string AblationCell::label() const {
  switch (mode) {
    case FusionMode::none: return "No Fusion";
    case FusionMode::naive: return "Naive Fusion";
    case FusionMode::interaction: return "Interaction Node";
    case FusionMode::cross_attention: return "Cross Attention (" + std::to_string(heads) + " head)";
  }
  return "?";
}

std::vector<AblationCell> default_ablation_grid() {
  std::vector<AblationCell> grid;
  for (std::size_t hop : {1, 3}) {
    grid.push_back({FusionMode::none, 1, hop});
    grid.push_back({FusionMode::naive, 1, hop});
    grid.push_back({FusionMode::interaction, 1, hop});
    grid.push_back({FusionMode::cross_attention, 1, hop});
    grid.push_back({FusionMode::cross_attention, 4, hop});
  }
  return grid;
}

std::vector<AblationRow> run_ablation(std::span<const AblationCell> grid, const AblationSetup& setup) {
  auto task = make_synthetic_task(setup.train_examples + setup.test_examples, setup.kg_size, setup.data_seed);
  KnowledgeBase kb;
  kb.stats = relation_stats(task.kg, setup.relf_mode);
  kb.kg = std::move(task.kg);
  kb.templates = std::move(task.templates);
  kb.encoder = std::make_shared<HashingEncoder>(setup.encoder_dim);
  kb.score_text = setup.score_text;
  const std::span<const Example> all(task.examples);
  const auto train_set = all.first(setup.train_examples);
  const auto test_set = all.subspan(setup.train_examples);

  std::vector<AblationRow> rows;
  std::vector<std::pair<std::size_t, std::pair<ContextGrid, ContextGrid>>> cache;
  for (const auto& cell : grid) {
    AblationRow row;
    row.cell = cell;
    try {
      auto it = std::find_if(cache.begin(), cache.end(), [&](const auto& c) { return c.first == cell.max_hop; });
      if (it == cache.end()) {
        ContextConfig cc = setup.context;
        cc.max_hop = cell.max_hop;
        cache.push_back({cell.max_hop, {build_contexts(train_set, kb, cc), build_contexts(test_set, kb, cc)}});
        it = cache.end() - 1;
      }
      ModelConfig mc = setup.model;
      mc.fusion_mode = cell.mode;
      mc.n_heads = cell.heads;
      mc.num_relations = std::max<std::size_t>(1, kb.kg.num_relations());
      FusionModel model(mc);
      const auto train_enc = encode_examples(train_set, it->second.first, kb.kg, mc);
      const auto test_enc = encode_examples(test_set, it->second.second, kb.kg, mc);
      const Metrics tm = train(model, train_enc, setup.train);
      const Metrics em = evaluate(model, test_enc);
      row.train_accuracy = tm.accuracy;
      row.test_accuracy = em.accuracy;
      row.final_loss = tm.loss_curve.empty() ? 0.0 : tm.loss_curve.back();
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-30s %4s %10s %10s\n", "Model", "Hop", "Train-Acc", "Test-Acc");
  out << buf;
  for (const auto& r : rows) {
    if (r.ok)
      std::snprintf(buf, sizeof buf, "%-30s %4zu %10.2f %10.2f\n", r.cell.label().c_str(), r.cell.max_hop,
                    100.0 * r.train_accuracy, 100.0 * r.test_accuracy);
    else
      std::snprintf(buf, sizeof buf, "%-30s %4zu %10s %10s  FAILED: %s\n", r.cell.label().c_str(), r.cell.max_hop, "-",
                    "-", r.error.c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace fuseqa
