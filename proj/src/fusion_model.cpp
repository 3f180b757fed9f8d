#include "fuseqa/fusion_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "fuseqa/error.hpp"
#include "fuseqa/text.hpp"

namespace fuseqa {

using ops::add;
using ops::add_bias;
using ops::combine_rows;
using ops::concat_cols;
using ops::gelu;
using ops::layer_norm;
using ops::matmul;
using ops::slice_cols;
using ops::softmax_rows;
using ops::transpose;

FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "none") return FusionMode::none;
  if (s == "naive") return FusionMode::naive;
  if (s == "interaction") return FusionMode::interaction;
  if (s == "cross_attention") return FusionMode::cross_attention;
  throw ConfigError("unknown fusion_mode '" + std::string(s) + "'");
}

std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::naive: return "naive";
    case FusionMode::interaction: return "interaction";
    case FusionMode::cross_attention: return "cross_attention";
  }
  return "?";
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(layers, "layers");
  positive(d_lm, "d_lm");
  positive(d_gnn, "d_gnn");
  positive(n_heads, "n_heads");
  positive(lm_heads, "lm_heads");
  positive(ffn_mult, "ffn_mult");
  positive(max_seq_len, "max_seq_len");
  positive(num_relations, "num_relations");
  if (vocab_size < 3) throw ConfigError("model.vocab_size must be at least 3");
  if (d_lm % lm_heads) throw ConfigError("model.d_lm must be divisible by model.lm_heads");
  if (fusion_mode == FusionMode::cross_attention && (d_lm % n_heads || d_gnn % n_heads))
    throw ConfigError("model.d_lm and model.d_gnn must be divisible by model.n_heads");
  if (!(ln_eps > 0.0)) throw ConfigError("model.ln_eps must be positive");
}

std::string to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["d_lm"] = c.d_lm;
  j["d_gnn"] = c.d_gnn;
  j["n_heads"] = c.n_heads;
  j["lm_heads"] = c.lm_heads;
  j["ffn_mult"] = c.ffn_mult;
  j["fusion_mode"] = std::string(to_string(c.fusion_mode));
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["num_relations"] = c.num_relations;
  j["seed"] = c.seed;
  j["keep_interaction_node"] = c.keep_interaction_node;
  j["ln_eps"] = c.ln_eps;
  return j.dump();
}

ModelConfig model_config_from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config must be an object");
  ModelConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "layers") c.layers = v.get<std::size_t>();
      else if (key == "d_lm") c.d_lm = v.get<std::size_t>();
      else if (key == "d_gnn") c.d_gnn = v.get<std::size_t>();
      else if (key == "n_heads") c.n_heads = v.get<std::size_t>();
      else if (key == "lm_heads") c.lm_heads = v.get<std::size_t>();
      else if (key == "ffn_mult") c.ffn_mult = v.get<std::size_t>();
      else if (key == "fusion_mode") c.fusion_mode = parse_fusion_mode(v.get<std::string>());
      else if (key == "vocab_size") c.vocab_size = v.get<std::size_t>();
      else if (key == "max_seq_len") c.max_seq_len = v.get<std::size_t>();
      else if (key == "num_relations") c.num_relations = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "keep_interaction_node") c.keep_interaction_node = v.get<bool>();
      else if (key == "ln_eps") c.ln_eps = v.get<double>();
      else throw ConfigError("unknown key model." + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& ParameterStore::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

namespace {

Var mlp(Tape& tape, Var x, const MlpParams& p) {
  Var hidden = gelu(add_bias(matmul(x, tape.param(*p.w1)), tape.param(*p.b1)));
  return add_bias(matmul(hidden, tape.param(*p.w2)), tape.param(*p.b2));
}

Var norm(Tape& tape, Var x, const LayerNormParams& p, double eps) {
  return layer_norm(x, tape.param(*p.gain), tape.param(*p.bias), eps);
}

Var head_slice(Var x, std::size_t head, std::size_t heads) {
  if (heads == 1) return x;
  const std::size_t width = x.value().cols() / heads;
  return slice_cols(x, head * width, (head + 1) * width);
}

Var select_row(Var x, std::uint32_t r) {
  const Var in[] = {x};
  const RowTerm term[] = {{0, r, 0, 1.0}};
  return combine_rows(in, term, 1);
}

// Receiving side attends over the other side; returns (bar, attention per head).
std::pair<Var, std::vector<Var>> attend(Tape& tape, Var recv, Var other, const AttentionDirection& p,
                                        std::size_t heads) {
  Var q = matmul(recv, tape.param(*p.wq));
  Var k = matmul(other, tape.param(*p.wk));
  Var v = matmul(other, tape.param(*p.wv));
  std::vector<Var> contexts;
  std::vector<Var> attention;
  for (std::size_t h = 0; h < heads; ++h) {
    Var scores = matmul(head_slice(q, h, heads), transpose(head_slice(k, h, heads)));
    Var probs = softmax_rows(scores);
    attention.push_back(probs);
    contexts.push_back(matmul(probs, head_slice(v, h, heads)));
  }
  Var ctx = heads == 1 ? contexts[0] : concat_cols(contexts);
  Var bar = add(recv, matmul(ctx, tape.param(*p.wo)));
  return {bar, std::move(attention)};
}

}  // namespace

Var lm_layer_forward(Tape& tape, Var h, const LMLayerParams& p) {
  const Tensor& H = h.value();
  const std::size_t d = p.wq->value.rows();
  if (H.rank() != 2 || H.cols() != d)
    throw ShapeError("lm layer expects n x " + std::to_string(d) + ", got " + shape_string(H.shape()));
  Var a = norm(tape, h, p.ln_attn, p.eps);
  Var q = matmul(a, tape.param(*p.wq));
  Var k = matmul(a, tape.param(*p.wk));
  Var v = matmul(a, tape.param(*p.wv));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d / p.heads));
  std::vector<Var> contexts;
  for (std::size_t i = 0; i < p.heads; ++i) {
    Var scores = ops::mul_scalar(matmul(head_slice(q, i, p.heads), transpose(head_slice(k, i, p.heads))), scale);
    contexts.push_back(matmul(softmax_rows(scores), head_slice(v, i, p.heads)));
  }
  Var ctx = p.heads == 1 ? contexts[0] : concat_cols(contexts);
  Var h1 = add(h, add_bias(matmul(ctx, tape.param(*p.wo)), tape.param(*p.bo)));
  return add(h1, mlp(tape, norm(tape, h1, p.ln_ffn, p.eps), p.ffn));
}

Var gnn_layer_forward(Tape& tape, Var e, const GraphInput& graph, const GNNLayerParams& p) {
  const Tensor& E = e.value();
  if (E.rank() != 2 || E.rows() != graph.num_nodes)
    throw ShapeError("gnn layer: " + std::to_string(graph.num_nodes) + " nodes but node states " +
                     shape_string(E.shape()));
  const std::size_t m = graph.num_nodes;
  std::vector<double> count(m, 1.0);
  for (const auto& edge : graph.edges) {
    if (edge.src >= m || edge.dst >= m) throw ShapeError("gnn layer: edge endpoint out of range");
    count[edge.dst] += 1.0;
    count[edge.src] += 1.0;
  }

  std::vector<std::size_t> slot_input(p.slots.count(), SIZE_MAX);
  std::vector<Var> transformed;
  auto input_for = [&](std::size_t slot) {
    if (slot_input[slot] == SIZE_MAX) {
      slot_input[slot] = transformed.size();
      transformed.push_back(matmul(e, tape.param(*p.relation.at(slot))));
    }
    return static_cast<std::uint32_t>(slot_input[slot]);
  };

  std::vector<RowTerm> terms;
  const auto self = input_for(p.slots.self());
  for (std::uint32_t v = 0; v < m; ++v) terms.push_back({self, v, v, 1.0 / count[v]});
  for (const auto& edge : graph.edges) {
    const bool link = edge.relation == kInteractionLink;
    const auto fwd = input_for(link ? p.slots.interaction_out() : p.slots.forward(edge.relation));
    const auto inv = input_for(link ? p.slots.interaction_in() : p.slots.inverse(edge.relation));
    terms.push_back({fwd, edge.src, edge.dst, 1.0 / count[edge.dst]});
    terms.push_back({inv, edge.dst, edge.src, 1.0 / count[edge.src]});
  }
  Var aggregate = combine_rows(transformed, terms, m);
  return norm(tape, add(e, aggregate), p.ln, p.eps);
}

CrossAttnResult cross_attention_forward(Tape& tape, Var h, Var e, const CrossAttnParams& p) {
  CrossAttnResult r;
  auto [h_bar, text_attn] = attend(tape, h, e, p.text, p.heads);
  auto [e_bar, graph_attn] = attend(tape, e, h, p.graph, p.heads);
  r.h_bar = h_bar;
  r.e_bar = e_bar;
  r.text_attention = std::move(text_attn);
  r.graph_attention = std::move(graph_attn);
  r.h = mlp(tape, norm(tape, h_bar, p.text.ln, p.eps), p.text.mlp);
  r.e = mlp(tape, norm(tape, e_bar, p.graph.ln, p.eps), p.graph.mlp);
  return r;
}

std::pair<Var, Var> interaction_exchange(Tape& tape, Var h, Var e, const InteractionParams& p) {
  const std::size_t d_lm = h.value().cols();
  const std::size_t d_gnn = e.value().cols();
  const Var pair[] = {select_row(h, 0), select_row(e, 0)};
  Var joint = concat_cols(pair);
  Var mixed = add(joint, mlp(tape, joint, p.mix));
  Var h0 = slice_cols(mixed, 0, d_lm);
  Var e0 = slice_cols(mixed, d_lm, d_lm + d_gnn);

  auto replace_row0 = [](Var x, Var row0) {
    const std::uint32_t rows = static_cast<std::uint32_t>(x.value().rows());
    std::vector<RowTerm> terms{{1, 0, 0, 1.0}};
    for (std::uint32_t i = 1; i < rows; ++i) terms.push_back({0, i, i, 1.0});
    const Var in[] = {x, row0};
    return combine_rows(in, terms, rows);
  };
  return {replace_row0(h, h0), replace_row0(e, e0)};
}

FusionModel::FusionModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  token_embedding_ = &make("embed.token", {c.vocab_size, c.d_lm}, InitScheme::uniform_scaled);
  position_embedding_ = &make("embed.position", {c.max_seq_len, c.d_lm}, InitScheme::uniform_scaled);

  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = "lm." + std::to_string(l) + ".";
    LMLayerParams p;
    p.ln_attn = make_ln(pre + "ln_attn", c.d_lm);
    p.wq = &make(pre + "wq", {c.d_lm, c.d_lm}, InitScheme::uniform_scaled);
    p.wk = &make(pre + "wk", {c.d_lm, c.d_lm}, InitScheme::uniform_scaled);
    p.wv = &make(pre + "wv", {c.d_lm, c.d_lm}, InitScheme::uniform_scaled);
    p.wo = &make(pre + "wo", {c.d_lm, c.d_lm}, InitScheme::uniform_scaled);
    p.bo = &make(pre + "bo", {c.d_lm}, InitScheme::zeros);
    p.ln_ffn = make_ln(pre + "ln_ffn", c.d_lm);
    p.ffn = make_mlp(pre + "ffn", c.d_lm, c.ffn_mult * c.d_lm, c.d_lm);
    p.heads = c.lm_heads;
    p.eps = c.ln_eps;
    lm_.push_back(p);
  }

  if (c.uses_graph()) {
    const RelationSlots slots{c.num_relations};
    for (std::size_t l = 0; l < c.layers; ++l) {
      const std::string pre = "gnn." + std::to_string(l) + ".";
      GNNLayerParams p;
      p.slots = slots;
      p.eps = c.ln_eps;
      for (std::size_t k = 0; k < slots.count(); ++k)
        p.relation.push_back(&make(pre + "rel." + std::to_string(k), {c.d_gnn, c.d_gnn}, InitScheme::uniform_scaled));
      p.ln = make_ln(pre + "ln", c.d_gnn);
      gnn_.push_back(p);
    }
  }

  if (c.fusion_mode == FusionMode::cross_attention) {
    for (std::size_t l = 0; l < c.layers; ++l) {
      const std::string pre = "cross." + std::to_string(l) + ".";
      CrossAttnParams p;
      p.text = make_direction(pre + "text", c.d_lm, c.d_gnn);
      p.graph = make_direction(pre + "graph", c.d_gnn, c.d_lm);
      p.heads = c.n_heads;
      p.eps = c.ln_eps;
      cross_.push_back(p);
    }
  }

  if (c.uses_interaction()) {
    Parameter& token = make("interaction.token", {1, c.d_lm}, InitScheme::uniform_scaled);
    Parameter& node = make("interaction.node", {1, c.d_gnn}, InitScheme::uniform_scaled);
    const std::size_t joint = c.d_lm + c.d_gnn;
    for (std::size_t l = 0; l < c.layers; ++l) {
      InteractionParams p;
      p.token = &token;
      p.node = &node;
      p.mix = make_mlp("interaction." + std::to_string(l) + ".mix", joint, c.ffn_mult * joint, joint);
      interaction_.push_back(p);
    }
  }

  const std::size_t pooled = c.d_lm + (c.uses_graph() ? c.d_gnn : 0);
  head_.w = &make("head.w", {pooled, 1}, InitScheme::uniform_scaled);
  head_.b = &make("head.b", {1}, InitScheme::zeros);
}

Parameter& FusionModel::make(const std::string& name, Shape shape, InitScheme scheme) {
  return store_.add(name, seeded_init(shape, config_.seed ^ text::fnv1a(name), scheme));
}

Parameter& FusionModel::make_ones(const std::string& name, std::size_t n) { return store_.add(name, Tensor({n}, 1.0)); }

LayerNormParams FusionModel::make_ln(const std::string& name, std::size_t n) {
  return {&make_ones(name + ".gain", n), &make(name + ".bias", {n}, InitScheme::zeros)};
}

MlpParams FusionModel::make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out) {
  return {&make(name + ".w1", {in, hidden}, InitScheme::uniform_scaled), &make(name + ".b1", {hidden}, InitScheme::zeros),
          &make(name + ".w2", {hidden, out}, InitScheme::uniform_scaled), &make(name + ".b2", {out}, InitScheme::zeros)};
}

AttentionDirection FusionModel::make_direction(const std::string& name, std::size_t d_recv, std::size_t d_other) {
  AttentionDirection d;
  d.wq = &make(name + ".wq", {d_recv, d_recv}, InitScheme::uniform_scaled);
  d.wk = &make(name + ".wk", {d_other, d_recv}, InitScheme::uniform_scaled);
  d.wv = &make(name + ".wv", {d_other, d_recv}, InitScheme::uniform_scaled);
  d.wo = &make(name + ".wo", {d_recv, d_recv}, InitScheme::uniform_scaled);
  d.ln = make_ln(name + ".ln", d_recv);
  d.mlp = make_mlp(name + ".mlp", d_recv, config_.ffn_mult * d_recv, d_recv);
  return d;
}

Var FusionModel::forward(Tape& tape, std::span<const std::uint32_t> token_ids, const GraphInput& graph,
                         ForwardTrace* trace) const {
  const auto& c = config_;
  const std::size_t n = token_ids.size();
  if (n == 0 || n > c.max_seq_len)
    throw ShapeError("token sequence length " + std::to_string(n) + " outside [1, " + std::to_string(c.max_seq_len) + "]");
  const bool interaction = c.uses_interaction();

  // Token + position embeddings; the interaction token replaces position 0's token.
  std::vector<Var> embed_in{tape.param(*token_embedding_), tape.param(*position_embedding_)};
  if (interaction) embed_in.push_back(tape.param(*interaction_.front().token));
  std::vector<RowTerm> embed_terms;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (token_ids[i] >= c.vocab_size)
      throw ShapeError("token id " + std::to_string(token_ids[i]) + " >= vocab_size " + std::to_string(c.vocab_size));
    if (interaction && i == 0)
      embed_terms.push_back({2, 0, 0, 1.0});
    else
      embed_terms.push_back({0, token_ids[i], i, 1.0});
    embed_terms.push_back({1, i, i, 1.0});
  }
  Var h = combine_rows(embed_in, embed_terms, n);

  std::optional<Var> e;
  GraphInput structure;
  if (c.uses_graph()) {
    if (graph.num_nodes > 0 &&
        (graph.node_init.rank() != 2 || graph.node_init.rows() != graph.num_nodes || graph.node_init.cols() != c.d_gnn))
      throw ShapeError("node_init must be " + std::to_string(graph.num_nodes) + " x " + std::to_string(c.d_gnn) +
                       ", got " + shape_string(graph.node_init.shape()));
    const std::uint32_t offset = interaction ? 1 : 0;
    structure.num_nodes = graph.num_nodes + offset;
    for (const auto& edge : graph.edges) structure.edges.push_back({edge.src + offset, edge.relation, edge.dst + offset});
    if (interaction)
      for (std::uint32_t j = 0; j < graph.num_nodes; ++j) structure.edges.push_back({0, kInteractionLink, j + 1});

    if (structure.num_nodes > 0) {
      std::vector<Var> node_in;
      std::vector<RowTerm> node_terms;
      if (interaction) {
        node_in.push_back(tape.param(*interaction_.front().node));
        node_terms.push_back({0, 0, 0, 1.0});
      }
      if (graph.num_nodes > 0) {
        const auto input = static_cast<std::uint32_t>(node_in.size());
        node_in.push_back(tape.constant(graph.node_init));
        for (std::uint32_t j = 0; j < graph.num_nodes; ++j) node_terms.push_back({input, j, j + offset, 1.0});
      }
      e = interaction && graph.num_nodes == 0 ? node_in[0] : combine_rows(node_in, node_terms, structure.num_nodes);
    }
  }

  for (std::size_t l = 0; l < c.layers; ++l) {
    Var h_pre = lm_layer_forward(tape, h, lm_[l]);
    std::optional<Var> e_pre;
    if (e) e_pre = gnn_layer_forward(tape, *e, structure, gnn_[l]);
    h = h_pre;
    e = e_pre;
    if (!e_pre) continue;

    if (c.fusion_mode == FusionMode::cross_attention) {
      CrossAttnResult r = cross_attention_forward(tape, h_pre, *e_pre, cross_[l]);
      if (trace) {
        for (auto a : r.text_attention) trace->attention.push_back(a.value());
        for (auto a : r.graph_attention) trace->attention.push_back(a.value());
        trace->text_pre.push_back(h_pre.value());
        trace->text_bar.push_back(r.h_bar.value());
        trace->graph_pre.push_back(e_pre->value());
        trace->graph_bar.push_back(r.e_bar.value());
      }
      h = r.h;
      e = r.e;
    }
    if (interaction) std::tie(h, *e) = interaction_exchange(tape, h, *e, interaction_[l]);
  }

  Var pooled = select_row(h, 0);
  if (c.uses_graph()) {
    Var node_mean = e ? ops::mean_rows(*e) : tape.constant(Tensor({1, c.d_gnn}));
    const Var parts[] = {pooled, node_mean};
    pooled = concat_cols(parts);
  }
  return add_bias(matmul(pooled, tape.param(*head_.w)), tape.param(*head_.b));
}

double FusionModel::logit(std::span<const std::uint32_t> token_ids, const GraphInput& graph) const {
  Tape tape;
  return forward(tape, token_ids, graph).value()[0];
}

Var candidate_logits(Tape& tape, const FusionModel& model, std::span<const Candidate> candidates) {
  if (candidates.empty()) throw ShapeError("no candidates to score");
  std::vector<Var> logits;
  for (const auto& cand : candidates) logits.push_back(model.forward(tape, cand.tokens, cand.graph));
  return logits.size() == 1 ? logits[0] : concat_cols(logits);
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

CandidateScores score_candidates(const FusionModel& model, std::span<const Candidate> candidates) {
  Tape tape;
  Var row = candidate_logits(tape, model, candidates);
  CandidateScores s;
  s.logits.assign(row.value().data().begin(), row.value().data().end());
  s.prediction = argmax(s.logits);
  return s;
}

std::vector<std::uint32_t> encode_tokens(std::string_view question, std::string_view choice, const ModelConfig& c) {
  auto id = [&](const std::string& tok) {
    return static_cast<std::uint32_t>(2 + text::fnv1a(tok) % (c.vocab_size - 2));
  };
  std::vector<std::uint32_t> ids{0};
  for (const auto& tok : text::word_tokens(question)) ids.push_back(id(tok));
  ids.push_back(1);
  for (const auto& tok : text::word_tokens(choice)) ids.push_back(id(tok));
  if (ids.size() > c.max_seq_len) ids.resize(c.max_seq_len);
  return ids;
}

namespace {
constexpr std::string_view kCheckpointHeader = "fuseqa-checkpoint 1";
}

void write_checkpoint(const FusionModel& model, std::ostream& out) {
  out << kCheckpointHeader << '\n' << "config " << to_json(model.config()) << '\n';
  for (const auto* p : model.params().all()) {
    out << "param " << p->name << ' ' << (p->trainable ? 1 : 0) << '\n';
    write_tensor(p->value, out);
  }
}

FusionModel read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader) throw ParseError("not a fuseqa checkpoint", 1);
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) throw ParseError("missing config line", 2);
  FusionModel model(model_config_from_json(line.substr(7)));
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string word, name;
    int trainable = 1;
    if (!(head >> word >> name >> trainable) || word != "param") throw ParseError("expected 'param <name> <0|1>'", 0);
    Parameter* p = model.params().find(name);
    if (!p) throw ParseError("checkpoint parameter '" + name + "' does not belong to this model", 0);
    Tensor t = read_tensor(in);
    if (t.shape() != p->value.shape())
      throw ParseError("parameter '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                           shape_string(p->value.shape()),
                       0);
    p->value = std::move(t);
    p->trainable = trainable != 0;
    seen.insert(name);
  }
  if (seen.size() != model.params().size()) throw ParseError("checkpoint is missing parameters", 0);
  return model;
}

void save_checkpoint(const FusionModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_checkpoint(model, out);
}

FusionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint not found: " + path);
  return read_checkpoint(in);
}

}  // namespace fuseqa
