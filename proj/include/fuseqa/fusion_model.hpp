#pragma once

// Layered text/graph encoder with switchable fusion between the two streams:
//
//   none             text encoder only, graph ignored
//   naive            both encoders run side by side; the answer head sees the
//                    mean of the final node states
//   interaction      one interaction token / interaction node pair is mixed
//                    by an MLP after every layer
//   cross_attention  after every layer each text token attends over all
//                    nodes and each node over all tokens, both reading the
//                    pre-fusion states, followed by MLP(LayerNorm(.))
//
// Row-vector convention throughout: a projection of state x is x W.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuseqa/autodiff.hpp"
#include "fuseqa/tensor.hpp"

namespace fuseqa {

enum class FusionMode { none, naive, interaction, cross_attention };

FusionMode parse_fusion_mode(std::string_view s);
std::string_view to_string(FusionMode m);

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t d_lm = 8;
  std::size_t d_gnn = 8;
  std::size_t n_heads = 1;   // cross-attention heads
  std::size_t lm_heads = 1;  // self-attention heads in the LM layers
  std::size_t ffn_mult = 2;  // hidden width of every MLP = ffn_mult * input width
  FusionMode fusion_mode = FusionMode::cross_attention;
  std::size_t vocab_size = 512;
  std::size_t max_seq_len = 32;
  std::size_t num_relations = 8;
  std::uint64_t seed = 7;
  bool keep_interaction_node = false;
  double ln_eps = 1e-5;

  // Throws ConfigError.
  void validate() const;
  bool uses_graph() const { return fusion_mode != FusionMode::none; }
  bool uses_interaction() const {
    return fusion_mode == FusionMode::interaction ||
           (fusion_mode == FusionMode::cross_attention && keep_interaction_node);
  }

  bool operator==(const ModelConfig&) const = default;
};

std::string to_json(const ModelConfig& c);
ModelConfig model_config_from_json(std::string_view json);

// Owns parameters at stable addresses; names are unique.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  Parameter* find(std::string_view name);
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

struct LayerNormParams {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
};

// Linear -> GELU -> Linear.
struct MlpParams {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
};

struct LMLayerParams {
  LayerNormParams ln_attn;
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* wo = nullptr;
  Parameter* bo = nullptr;
  LayerNormParams ln_ffn;
  MlpParams ffn;
  std::size_t heads = 1;
  double eps = 1e-5;
};

// Relation slots of the message weights, for R = num_relations:
//   [0, R) forward, [R, 2R) inverse, 2R self-loop, 2R+1 / 2R+2 unknown
//   relation forward / inverse, 2R+3 / 2R+4 interaction link out / in.
struct RelationSlots {
  std::size_t num_relations = 0;
  std::size_t forward(std::uint32_t r) const { return r < num_relations ? r : 2 * num_relations + 1; }
  std::size_t inverse(std::uint32_t r) const { return r < num_relations ? num_relations + r : 2 * num_relations + 2; }
  std::size_t self() const { return 2 * num_relations; }
  std::size_t interaction_out() const { return 2 * num_relations + 3; }
  std::size_t interaction_in() const { return 2 * num_relations + 4; }
  std::size_t count() const { return 2 * num_relations + 5; }
};

struct GNNLayerParams {
  std::vector<Parameter*> relation;  // indexed by RelationSlots
  LayerNormParams ln;
  RelationSlots slots;
  double eps = 1e-5;
};

constexpr std::uint32_t kInteractionLink = 0xFFFFFFFFu;

// Directed edge between node rows. relation is a KG relation index, or
// kInteractionLink for edges from the interaction node.
struct GraphEdge {
  std::uint32_t src;
  std::uint32_t relation;
  std::uint32_t dst;
};

struct GraphInput {
  std::size_t num_nodes = 0;
  std::vector<GraphEdge> edges;
  Tensor node_init;  // num_nodes x d_gnn; unset when num_nodes == 0
};

// One direction of cross attention. Queries come from the receiving side, keys
// and values from the other side; heads partition the receiving side's width.
struct AttentionDirection {
  Parameter* wq = nullptr;  // d_recv x d_recv
  Parameter* wk = nullptr;  // d_other x d_recv
  Parameter* wv = nullptr;  // d_other x d_recv
  Parameter* wo = nullptr;  // d_recv x d_recv
  LayerNormParams ln;
  MlpParams mlp;
};

struct CrossAttnParams {
  AttentionDirection text;   // text tokens attend to nodes
  AttentionDirection graph;  // nodes attend to text tokens
  std::size_t heads = 1;
  double eps = 1e-5;
};

struct InteractionParams {
  Parameter* token = nullptr;  // 1 x d_lm, replaces the embedding at position 0
  Parameter* node = nullptr;   // 1 x d_gnn, prepended as node 0
  MlpParams mix;               // (d_lm + d_gnn) -> hidden -> (d_lm + d_gnn)
};

struct AnswerHeadParams {
  Parameter* w = nullptr;  // pooled width x 1
  Parameter* b = nullptr;  // 1
};

// h + SelfAttn(LN(h)), then + FFN(LN(.)).
Var lm_layer_forward(Tape& tape, Var h, const LMLayerParams& p);

// Mean over incoming messages (forward edges, inverse edges, self-loop) per
// node, then LayerNorm(e + aggregate).
Var gnn_layer_forward(Tape& tape, Var e, const GraphInput& graph, const GNNLayerParams& p);

struct CrossAttnResult {
  Var h;                           // MLP(LN(h_bar))
  Var e;                           // MLP(LN(e_bar))
  Var h_bar;                       // h~ + attended node values
  Var e_bar;                       // e~ + attended token values
  std::vector<Var> text_attention;   // per head, n x m, rows sum to one
  std::vector<Var> graph_attention;  // per head, m x n
};

// Both directions read the pre-fusion h~ and e~. e must have at least one
// row; the caller skips fusion for empty graphs.
CrossAttnResult cross_attention_forward(Tape& tape, Var h, Var e, const CrossAttnParams& p);

// [h~_0 ; e~_0] + MLP([h~_0 ; e~_0]) split back into row 0 of each side;
// every other row passes through unchanged.
std::pair<Var, Var> interaction_exchange(Tape& tape, Var h, Var e, const InteractionParams& p);

struct ForwardTrace {
  std::vector<Tensor> attention;      // every cross-attention probability matrix
  std::vector<Tensor> text_pre;       // h~ per fused layer
  std::vector<Tensor> text_bar;       // h_bar per fused layer
  std::vector<Tensor> graph_pre;      // e~ per fused layer
  std::vector<Tensor> graph_bar;      // e_bar per fused layer
};

class FusionModel {
 public:
  explicit FusionModel(ModelConfig config);
  // Layer structs point into the store; a deque keeps addresses across moves.
  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;
  FusionModel(FusionModel&&) = default;
  FusionModel& operator=(FusionModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Returns a 1 x 1 logit. token_ids[0] is the leading [CLS] position.
  Var forward(Tape& tape, std::span<const std::uint32_t> token_ids, const GraphInput& graph,
              ForwardTrace* trace = nullptr) const;
  double logit(std::span<const std::uint32_t> token_ids, const GraphInput& graph) const;

  const std::vector<LMLayerParams>& lm_layers() const { return lm_; }
  const std::vector<GNNLayerParams>& gnn_layers() const { return gnn_; }
  const std::vector<CrossAttnParams>& cross_layers() const { return cross_; }
  const std::vector<InteractionParams>& interaction_layers() const { return interaction_; }

 private:
  Parameter& make(const std::string& name, Shape shape, InitScheme scheme);
  Parameter& make_ones(const std::string& name, std::size_t n);
  LayerNormParams make_ln(const std::string& name, std::size_t n);
  MlpParams make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out);
  AttentionDirection make_direction(const std::string& name, std::size_t d_recv, std::size_t d_other);

  ModelConfig config_;
  ParameterStore store_;
  Parameter* token_embedding_ = nullptr;
  Parameter* position_embedding_ = nullptr;
  std::vector<LMLayerParams> lm_;
  std::vector<GNNLayerParams> gnn_;
  std::vector<CrossAttnParams> cross_;
  std::vector<InteractionParams> interaction_;
  AnswerHeadParams head_;
};

struct Candidate {
  std::vector<std::uint32_t> tokens;
  GraphInput graph;
};

// 1 x c row of logits, one forward pass per candidate on the same tape.
Var candidate_logits(Tape& tape, const FusionModel& model, std::span<const Candidate> candidates);

struct CandidateScores {
  std::vector<double> logits;
  std::size_t prediction = 0;  // argmax, ties to the lowest index
};

CandidateScores score_candidates(const FusionModel& model, std::span<const Candidate> candidates);
std::size_t argmax(std::span<const double> v);

// [CLS] question-tokens [SEP] choice-tokens, truncated to max_seq_len. Ids 0
// and 1 are [CLS] and [SEP]; word tokens hash to 2 + fnv1a(token) % (vocab - 2).
std::vector<std::uint32_t> encode_tokens(std::string_view question, std::string_view choice, const ModelConfig& c);

// Text archive: header line, config JSON line, then per parameter
// "param <name> <trainable>" followed by write_tensor output.
void write_checkpoint(const FusionModel& model, std::ostream& out);
FusionModel read_checkpoint(std::istream& in);
void save_checkpoint(const FusionModel& model, const std::string& path);
FusionModel load_checkpoint(const std::string& path);

}  // namespace fuseqa
