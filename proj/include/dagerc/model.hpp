#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "dagerc/dag.hpp"
#include "dagerc/tape.hpp"
#include "dagerc/tensor.hpp"

namespace dagerc {

struct AblationConfig {
  bool use_relation_transform = true;  // off: one shared transform for both relations
  bool use_nodal_unit = true;          // off: layer output is the contextual unit alone
  bool use_contextual_unit = true;     // off: layer output is the nodal unit alone

  bool operator==(const AblationConfig&) const = default;
};

struct ModelConfig {
  int d_feat = 0;
  int d_h = 64;
  int n_layers = 2;
  int n_classes = 0;
  double dropout = 0.2;
  AblationConfig ablation;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// One stacked layer: attention scorer, per-relation transforms, and the two
// information units (either may be absent under ablation).
struct LayerParams {
  Parameter* attn_w = nullptr;    // 1 x 2*d_h
  Parameter* rel_w[2] = {nullptr, nullptr};  // d_h x d_h; both point at the shared matrix when ablated
  std::optional<GruParams> nodal_gru;
  std::optional<GruParams> context_gru;
};

struct Model {
  ModelConfig config;
  std::unique_ptr<ParamStore> store;
  Parameter* input_proj = nullptr;  // d_h x d_feat
  std::vector<LayerParams> layers;
  Parameter* head_w = nullptr;  // d_h x (L+1)*d_h
  Parameter* head_b = nullptr;
  Parameter* out_w = nullptr;  // n_classes x d_h
  Parameter* out_b = nullptr;

  std::vector<Parameter*> parameters() const;
};

Model init_model(const ModelConfig& config);

struct ParamCount {
  long input_proj = 0;
  long attention = 0;
  long relation_transform = 0;
  long gru_units = 0;
  long head = 0;
  long total = 0;
};

// Closed-form count; always equals the allocated total of init_model(config).
ParamCount param_count(const ModelConfig& config);

struct LayerTrace {
  // per node: attention over its predecessors (empty when none), the
  // aggregated message, both unit outputs, and the layer hidden state
  std::vector<std::vector<double>> attention;
  std::vector<std::vector<double>> message;
  std::vector<std::vector<double>> nodal;
  std::vector<std::vector<double>> contextual;
  std::vector<std::vector<double>> hidden;
};

struct ForwardTrace {
  std::vector<std::vector<double>> h0;
  std::vector<LayerTrace> layers;
  std::vector<std::vector<double>> probs;
  std::vector<int> predictions;
};

// Runs one layer over the conversation in node-index order. Scores attend
// from each node's previous-layer state to its predecessors' current-layer
// states; messages apply the relation transform to predecessor states.
std::vector<Tape::Ref> forward_layer(Tape& tape, const LayerParams& layer,
                                     const AblationConfig& ablation,
                                     std::span<const Tape::Ref> h_prev, const ConvDag& dag,
                                     LayerTrace* trace = nullptr);

struct ForwardResult {
  std::vector<Tape::Ref> probs;  // per-node class distributions on the tape
  std::vector<int> predictions;  // argmax, ties to the lowest class index
};

// Full pass: projected inputs, n_layers stacked layers with dropout, then the
// concat-over-layers head. rng is only consulted in training mode.
ForwardResult forward(const Model& model, Tape& tape,
                      const std::vector<std::vector<double>>& features, const ConvDag& dag,
                      bool training, Rng* rng, ForwardTrace* trace = nullptr);

// Summed cross-entropy over the conversation's utterances.
Tape::Ref conversation_loss(Tape& tape, std::span<const Tape::Ref> probs,
                            std::span<const int> labels);

}  // namespace dagerc
