#include "dagerc/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dagerc {

namespace {

GruParams create_gru(ParamStore& store, const std::string& prefix, int d_in, int d_h, Rng& rng) {
  GruParams p;
  p.update_w = &store.create_matrix(prefix + ".update.w", d_h, d_in, rng);
  p.update_u = &store.create_matrix(prefix + ".update.u", d_h, d_h, rng);
  p.update_b = &store.create_bias(prefix + ".update.b", d_h);
  p.reset_w = &store.create_matrix(prefix + ".reset.w", d_h, d_in, rng);
  p.reset_u = &store.create_matrix(prefix + ".reset.u", d_h, d_h, rng);
  p.reset_b = &store.create_bias(prefix + ".reset.b", d_h);
  p.cand_w = &store.create_matrix(prefix + ".cand.w", d_h, d_in, rng);
  p.cand_u = &store.create_matrix(prefix + ".cand.u", d_h, d_h, rng);
  p.cand_b = &store.create_bias(prefix + ".cand.b", d_h);
  return p;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_feat < 1) throw std::invalid_argument("ModelConfig: d_feat must be >= 1");
  if (d_h < 1) throw std::invalid_argument("ModelConfig: d_h must be >= 1");
  if (n_layers < 1) throw std::invalid_argument("ModelConfig: n_layers must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("ModelConfig: n_classes must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("ModelConfig: dropout must be in [0, 1)");
  if (!ablation.use_nodal_unit && !ablation.use_contextual_unit)
    throw std::invalid_argument("ModelConfig: cannot disable both information units");
}

std::vector<Parameter*> Model::parameters() const {
  std::vector<Parameter*> out;
  for (const auto& p : store->all()) out.push_back(p.get());
  return out;
}

Model init_model(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  m.store = std::make_unique<ParamStore>();
  Rng rng(config.seed);

  m.input_proj = &m.store->create_matrix("input_proj.w", config.d_h, config.d_feat, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layer." + std::to_string(l);
    LayerParams layer;
    layer.attn_w = &m.store->create_matrix(prefix + ".attn.w", 1, 2 * config.d_h, rng);
    if (config.ablation.use_relation_transform) {
      layer.rel_w[0] = &m.store->create_matrix(prefix + ".rel.w0", config.d_h, config.d_h, rng);
      layer.rel_w[1] = &m.store->create_matrix(prefix + ".rel.w1", config.d_h, config.d_h, rng);
    } else {
      layer.rel_w[0] = &m.store->create_matrix(prefix + ".rel.w", config.d_h, config.d_h, rng);
      layer.rel_w[1] = layer.rel_w[0];
    }
    if (config.ablation.use_nodal_unit)
      layer.nodal_gru = create_gru(*m.store, prefix + ".nodal", config.d_h, config.d_h, rng);
    if (config.ablation.use_contextual_unit)
      layer.context_gru = create_gru(*m.store, prefix + ".context", config.d_h, config.d_h, rng);
    m.layers.push_back(layer);
  }
  const int concat_width = (config.n_layers + 1) * config.d_h;
  m.head_w = &m.store->create_matrix("head.w", config.d_h, concat_width, rng);
  m.head_b = &m.store->create_bias("head.b", config.d_h);
  m.out_w = &m.store->create_matrix("out.w", config.n_classes, config.d_h, rng);
  m.out_b = &m.store->create_bias("out.b", config.n_classes);
  return m;
}

ParamCount param_count(const ModelConfig& config) {
  config.validate();
  const long d_h = config.d_h;
  const long L = config.n_layers;
  const long gru = 3 * (d_h * d_h + d_h * d_h + d_h);  // three gates: W, U, b
  const long units =
      (config.ablation.use_nodal_unit ? 1 : 0) + (config.ablation.use_contextual_unit ? 1 : 0);

  ParamCount c;
  c.input_proj = d_h * config.d_feat;
  c.attention = L * 2 * d_h;
  c.relation_transform = L * (config.ablation.use_relation_transform ? 2 : 1) * d_h * d_h;
  c.gru_units = L * units * gru;
  c.head = d_h * (L + 1) * d_h + d_h + static_cast<long>(config.n_classes) * d_h + config.n_classes;
  c.total = c.input_proj + c.attention + c.relation_transform + c.gru_units + c.head;
  return c;
}

std::vector<Tape::Ref> forward_layer(Tape& tape, const LayerParams& layer,
                                     const AblationConfig& ablation,
                                     std::span<const Tape::Ref> h_prev, const ConvDag& dag,
                                     LayerTrace* trace) {
  if (static_cast<int>(h_prev.size()) != dag.n_nodes || h_prev.empty())
    throw std::invalid_argument("forward_layer: state count does not match dag nodes");
  const int d_h = tape.size(h_prev[0]);

  std::vector<Tape::Ref> h_cur(dag.n_nodes);
  if (trace) {
    trace->attention.resize(dag.n_nodes);
    trace->message.resize(dag.n_nodes);
    trace->nodal.resize(dag.n_nodes);
    trace->contextual.resize(dag.n_nodes);
    trace->hidden.resize(dag.n_nodes);
  }

  std::vector<Tape::Ref> scores, transformed;
  for (int i = 0; i < dag.n_nodes; ++i) {
    const auto& preds = dag.preds[i];
    Tape::Ref message;
    Tape::Ref alpha = -1;
    if (!preds.empty()) {
      scores.clear();
      transformed.clear();
      for (const auto& [j, rel] : preds) {
        scores.push_back(tape.matvec(*layer.attn_w, tape.concat(h_cur[j], h_prev[i])));
        transformed.push_back(
            tape.matvec(*layer.rel_w[ablation.use_relation_transform ? rel : 0], h_cur[j]));
      }
      alpha = tape.softmax(tape.stack_scalars(scores));
      message = tape.weighted_sum(alpha, transformed);
    } else {
      message = tape.zeros(d_h);
    }

    Tape::Ref nodal = -1, contextual = -1;
    if (layer.nodal_gru) nodal = gru_cell(tape, h_prev[i], message, *layer.nodal_gru);
    if (layer.context_gru) contextual = gru_cell(tape, message, h_prev[i], *layer.context_gru);
    if (nodal >= 0 && contextual >= 0)
      h_cur[i] = tape.add(nodal, contextual);
    else
      h_cur[i] = nodal >= 0 ? nodal : contextual;

    if (trace) {
      if (alpha >= 0) {
        auto a = tape.value(alpha);
        trace->attention[i].assign(a.begin(), a.end());
      }
      auto m = tape.value(message);
      trace->message[i].assign(m.begin(), m.end());
      if (nodal >= 0) {
        auto v = tape.value(nodal);
        trace->nodal[i].assign(v.begin(), v.end());
      }
      if (contextual >= 0) {
        auto v = tape.value(contextual);
        trace->contextual[i].assign(v.begin(), v.end());
      }
      auto h = tape.value(h_cur[i]);
      trace->hidden[i].assign(h.begin(), h.end());
    }
  }
  return h_cur;
}

ForwardResult forward(const Model& model, Tape& tape,
                      const std::vector<std::vector<double>>& features, const ConvDag& dag,
                      bool training, Rng* rng, ForwardTrace* trace) {
  if (static_cast<int>(features.size()) != dag.n_nodes)
    throw std::invalid_argument("forward: feature count does not match dag nodes");
  if (training && model.config.dropout > 0.0 && !rng)
    throw std::invalid_argument("forward: training with dropout needs an rng");
  for (const auto& f : features)
    if (static_cast<int>(f.size()) != model.config.d_feat)
      throw std::invalid_argument("forward: feature dimension mismatch");

  const double rate = model.config.dropout;
  Rng dummy(0);
  Rng& r = rng ? *rng : dummy;

  // per-layer states, starting from the projected features
  std::vector<std::vector<Tape::Ref>> states;
  std::vector<Tape::Ref> h0(dag.n_nodes);
  for (int i = 0; i < dag.n_nodes; ++i)
    h0[i] = tape.dropout(tape.matvec(*model.input_proj, tape.input(features[i])), rate, training, r);
  states.push_back(std::move(h0));

  if (trace) {
    trace->h0.resize(dag.n_nodes);
    for (int i = 0; i < dag.n_nodes; ++i) {
      auto v = tape.value(states[0][i]);
      trace->h0[i].assign(v.begin(), v.end());
    }
    trace->layers.resize(model.config.n_layers);
  }

  for (int l = 0; l < model.config.n_layers; ++l) {
    std::vector<Tape::Ref> h = forward_layer(tape, model.layers[l], model.config.ablation,
                                             states.back(), dag, trace ? &trace->layers[l] : nullptr);
    for (Tape::Ref& ref : h) ref = tape.dropout(ref, rate, training, r);
    states.push_back(std::move(h));
  }

  ForwardResult result;
  result.probs.resize(dag.n_nodes);
  result.predictions.resize(dag.n_nodes);
  for (int i = 0; i < dag.n_nodes; ++i) {
    Tape::Ref cat = states[0][i];
    for (int l = 1; l <= model.config.n_layers; ++l) cat = tape.concat(cat, states[l][i]);
    Tape::Ref z = tape.relu(tape.matvec(*model.head_w, cat, model.head_b));
    Tape::Ref p = tape.softmax(tape.matvec(*model.out_w, z, model.out_b));
    result.probs[i] = p;

    auto pv = tape.value(p);
    int best = 0;
    for (int k = 1; k < static_cast<int>(pv.size()); ++k)
      if (pv[k] > pv[best]) best = k;
    result.predictions[i] = best;
  }

  if (trace) {
    trace->probs.resize(dag.n_nodes);
    for (int i = 0; i < dag.n_nodes; ++i) {
      auto pv = tape.value(result.probs[i]);
      trace->probs[i].assign(pv.begin(), pv.end());
    }
    trace->predictions = result.predictions;
  }
  return result;
}

Tape::Ref conversation_loss(Tape& tape, std::span<const Tape::Ref> probs,
                            std::span<const int> labels) {
  if (probs.size() != labels.size())
    throw std::invalid_argument("conversation_loss: prediction/label count mismatch");
  if (probs.empty()) throw std::invalid_argument("conversation_loss: empty conversation");
  Tape::Ref total = tape.cross_entropy(probs[0], labels[0]);
  for (std::size_t i = 1; i < probs.size(); ++i)
    total = tape.add(total, tape.cross_entropy(probs[i], labels[i]));
  return total;
}

}  // namespace dagerc
