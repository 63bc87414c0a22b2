#include "dagerc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace dagerc {

using nlohmann::json;

AdamOptimizer::AdamOptimizer(ParamStore& store, double lr_in, double weight_decay)
    : lr(lr_in), store_(store), weight_decay_(weight_decay) {
  for (const auto& p : store.all()) {
    Slot s;
    s.m.assign(p->size(), 0.0);
    s.v.assign(p->size(), 0.0);
    slots_.push_back(std::move(s));
  }
}

void AdamOptimizer::step() {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, t_);
  const double bc2 = 1.0 - std::pow(beta2, t_);
  const auto& params = store_.all();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    Slot& s = slots_[pi];
    for (int i = 0; i < p.size(); ++i) {
      double g = p.grad.data[i];
      if (weight_decay_ != 0.0) g += weight_decay_ * p.value.data[i];
      s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * g;
      s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * g * g;
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      p.value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

SelectMetric parse_select_metric(const std::string& name) {
  if (name == "accuracy") return SelectMetric::kAccuracy;
  if (name == "weighted_f1") return SelectMetric::kWeightedF1;
  if (name == "micro_f1_excl") return SelectMetric::kMicroF1Excl;
  throw std::invalid_argument("unknown metric '" + name +
                              "' (expected accuracy|weighted_f1|micro_f1_excl)");
}

std::string select_metric_name(SelectMetric m) {
  switch (m) {
    case SelectMetric::kAccuracy:
      return "accuracy";
    case SelectMetric::kWeightedF1:
      return "weighted_f1";
    case SelectMetric::kMicroF1Excl:
      return "micro_f1_excl";
  }
  return "?";
}

double headline_metric(const EvalReport& report, SelectMetric metric) {
  switch (metric) {
    case SelectMetric::kAccuracy:
      return report.accuracy;
    case SelectMetric::kWeightedF1:
      return report.weighted_f1;
    case SelectMetric::kMicroF1Excl:
      if (!report.micro_f1_excl)
        throw std::runtime_error("micro_f1_excl requested but the corpus declares no neutral class");
      return *report.micro_f1_excl;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  model.validate();
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("TrainConfig: need at least one seed");
}

namespace {

DagVariant variant_from_json(const json& j) {
  const std::string kind = j.value("variant", "ours");
  const int omega = j.value("omega", 1);
  const int kappa = j.value("kappa", 1);
  if (kind == "ours") return DagVariant::ours(omega);
  if (kind == "sequence") return DagVariant::sequence();
  if (kind == "single-local") return DagVariant::single_local(omega);
  if (kind == "common") return DagVariant::common(kappa);
  throw std::invalid_argument("unknown dag variant '" + kind + "'");
}

struct PreparedConv {
  ConvDag dag;
  std::vector<std::vector<double>> features;
  std::vector<int> labels;  // -1 when absent
};

std::vector<PreparedConv> prepare(const Corpus& corpus, const DagVariant& variant,
                                  int expect_d_feat) {
  std::vector<PreparedConv> out;
  out.reserve(corpus.conversations.size());
  for (const Conversation& conv : corpus.conversations) {
    PreparedConv pc;
    pc.dag = build_variant(conv, variant);
    pc.features.reserve(conv.size());
    pc.labels.reserve(conv.size());
    for (const Utterance& u : conv.utterances) {
      if (!u.feature)
        throw std::runtime_error("conversation " + conv.id + " has unfeaturized utterances");
      if (static_cast<int>(u.feature->size()) != expect_d_feat)
        throw std::runtime_error("conversation " + conv.id + " feature dimension mismatch");
      pc.features.push_back(*u.feature);
      pc.labels.push_back(u.label ? *u.label : -1);
    }
    out.push_back(std::move(pc));
  }
  return out;
}

std::vector<std::vector<int>> predict_prepared(const Model& model,
                                               const std::vector<PreparedConv>& convs) {
  std::vector<std::vector<int>> preds;
  preds.reserve(convs.size());
  Tape tape;
  for (const PreparedConv& pc : convs) {
    tape.reset();
    ForwardResult r = forward(model, tape, pc.features, pc.dag, /*training=*/false, nullptr);
    preds.push_back(std::move(r.predictions));
  }
  return preds;
}

void copy_values(const Model& from, std::vector<std::vector<double>>& into) {
  const auto& params = from.store->all();
  into.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) into[i] = params[i]->value.data;
}

void restore_values(Model& into, const std::vector<std::vector<double>>& values) {
  const auto& params = into.store->all();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.data = values[i];
}

}  // namespace

TrainConfig train_config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": malformed config: " + e.what());
  }

  TrainConfig c;
  if (j.contains("model")) {
    const json& m = j.at("model");
    c.model.d_feat = m.value("d_feat", 0);
    c.model.d_h = m.value("d_h", c.model.d_h);
    c.model.n_layers = m.value("n_layers", c.model.n_layers);
    c.model.n_classes = m.value("n_classes", 0);
    c.model.dropout = m.value("dropout", c.model.dropout);
    c.model.ablation.use_relation_transform =
        m.value("use_relation_transform", c.model.ablation.use_relation_transform);
    c.model.ablation.use_nodal_unit = m.value("use_nodal_unit", c.model.ablation.use_nodal_unit);
    c.model.ablation.use_contextual_unit =
        m.value("use_contextual_unit", c.model.ablation.use_contextual_unit);
  }
  c.variant = variant_from_json(j);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("select_metric"))
    c.select_metric = parse_select_metric(j.at("select_metric").get<std::string>());
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["model"] = {{"d_feat", c.model.d_feat},
                {"d_h", c.model.d_h},
                {"n_layers", c.model.n_layers},
                {"n_classes", c.model.n_classes},
                {"dropout", c.model.dropout},
                {"use_relation_transform", c.model.ablation.use_relation_transform},
                {"use_nodal_unit", c.model.ablation.use_nodal_unit},
                {"use_contextual_unit", c.model.ablation.use_contextual_unit}};
  switch (c.variant.kind) {
    case DagVariant::Kind::kOurs:
      j["variant"] = "ours";
      j["omega"] = c.variant.omega;
      break;
    case DagVariant::Kind::kSequence:
      j["variant"] = "sequence";
      break;
    case DagVariant::Kind::kSingleLocal:
      j["variant"] = "single-local";
      j["omega"] = c.variant.omega;
      break;
    case DagVariant::Kind::kCommon:
      j["variant"] = "common";
      j["kappa"] = c.variant.kappa;
      break;
  }
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["weight_decay"] = c.weight_decay;
  j["select_metric"] = select_metric_name(c.select_metric);
  j["seeds"] = c.seeds;
  return j.dump(2);
}

TrainResult train(const TrainConfig& config, const Corpus& train_corpus, const Corpus& val_corpus,
                  std::uint64_t seed) {
  config.validate();
  if (train_corpus.label_set != val_corpus.label_set)
    throw std::invalid_argument("train: train/val label sets differ");

  ModelConfig mc = config.model;
  mc.seed = seed;
  Model model = init_model(mc);

  std::vector<PreparedConv> train_convs = prepare(train_corpus, config.variant, mc.d_feat);
  std::vector<PreparedConv> val_convs = prepare(val_corpus, config.variant, mc.d_feat);
  for (const PreparedConv& pc : train_convs)
    for (int lbl : pc.labels)
      if (lbl < 0) throw std::runtime_error("train: unlabeled utterance in training corpus");

  AdamOptimizer opt(*model.store, config.lr, config.weight_decay);
  Rng shuffle_rng(mix_seed(seed, 0x5475261));

  RunLog log;
  log.seed = seed;
  std::vector<std::vector<double>> best_values;
  copy_values(model, best_values);

  std::vector<int> order(train_convs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  Tape tape;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (config.rebuild_dags_each_epoch)
      train_convs = prepare(train_corpus, config.variant, mc.d_feat);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end = std::min(cursor + config.batch_size, order.size());
      model.store->zero_grads();
      for (std::size_t k = cursor; k < batch_end; ++k) {
        const PreparedConv& pc = train_convs[order[k]];
        Rng dropout_rng(mix_seed(mix_seed(seed, epoch), order[k]));
        tape.reset();
        ForwardResult fr = forward(model, tape, pc.features, pc.dag, /*training=*/true,
                                   &dropout_rng);
        Tape::Ref loss = conversation_loss(tape, fr.probs, pc.labels);
        const double loss_value = tape.value(loss)[0];
        if (!std::isfinite(loss_value))
          throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                   std::to_string(epoch) + ", conversation " +
                                   train_corpus.conversations[order[k]].id);
        epoch_loss += loss_value;
        tape.backward(loss);
      }
      opt.step();
      cursor = batch_end;
    }

    std::vector<std::vector<int>> val_preds = predict_prepared(model, val_convs);
    EvalReport val_report = build_report(val_corpus, val_preds);
    const double val_metric = headline_metric(val_report, config.select_metric);

    const auto t1 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss;
    rec.val_metric = val_metric;
    rec.seconds = std::chrono::duration<double>(t1 - t0).count();
    log.epochs.push_back(rec);

    if (log.best_epoch < 0 || val_metric > log.best_val_metric) {
      log.best_epoch = epoch;
      log.best_val_metric = val_metric;
      copy_values(model, best_values);
    }
  }

  restore_values(model, best_values);
  return {std::move(model), std::move(log)};
}

std::vector<std::vector<int>> predict(const Model& model, const Corpus& corpus,
                                      const DagVariant& variant) {
  return predict_prepared(model, prepare(corpus, variant, model.config.d_feat));
}

EvalReport evaluate(const Model& model, const Corpus& corpus, const DagVariant& variant) {
  return build_report(corpus, predict(model, corpus, variant));
}

ProtocolResult run_protocol(const TrainConfig& config, const Corpus& train_corpus,
                            const Corpus& val_corpus, const Corpus& test_corpus) {
  ProtocolResult result;
  double sum = 0.0;
  for (std::uint64_t seed : config.seeds) {
    TrainResult tr = train(config, train_corpus, val_corpus, seed);
    ProtocolRun run;
    run.log = std::move(tr.log);
    run.test_metric =
        headline_metric(evaluate(tr.model, test_corpus, config.variant), config.select_metric);
    sum += run.test_metric;
    result.runs.push_back(std::move(run));
    if (!result.first_model) result.first_model.emplace(std::move(tr.model));
  }
  result.mean_test_metric = sum / static_cast<double>(config.seeds.size());
  return result;
}

std::vector<LayerSweepRow> sweep_layers(const TrainConfig& config, const Corpus& train_corpus,
                                        const Corpus& val_corpus, const Corpus& test_corpus,
                                        const std::vector<int>& depths) {
  if (depths.empty()) throw std::invalid_argument("sweep_layers: empty depth list");
  std::vector<int> sorted = depths;
  std::sort(sorted.begin(), sorted.end());

  std::vector<LayerSweepRow> rows;
  for (int depth : sorted) {
    TrainConfig c = config;
    c.model.n_layers = depth;
    TrainResult tr = train(c, train_corpus, val_corpus, c.seeds[0]);
    LayerSweepRow row;
    row.n_layers = depth;
    row.test_metric = headline_metric(evaluate(tr.model, test_corpus, c.variant), c.select_metric);
    row.final_train_loss = tr.log.epochs.back().train_loss;
    rows.push_back(row);
  }
  return rows;
}

std::vector<AblationSweepRow> sweep_ablations(const TrainConfig& config, const Corpus& train_corpus,
                                              const Corpus& val_corpus, const Corpus& test_corpus) {
  struct Case {
    const char* name;
    AblationConfig ablation;
  };
  const Case cases[] = {
      {"full", {true, true, true}},
      {"w/o relation transform", {false, true, true}},
      {"w/o nodal unit", {true, false, true}},
      {"w/o contextual unit", {true, true, false}},
  };

  std::vector<AblationSweepRow> rows;
  for (const Case& kase : cases) {
    TrainConfig c = config;
    c.model.ablation = kase.ablation;
    TrainResult tr = train(c, train_corpus, val_corpus, c.seeds[0]);
    AblationSweepRow row;
    row.name = kase.name;
    row.params = param_count(c.model).total;
    row.test_metric = headline_metric(evaluate(tr.model, test_corpus, c.variant), c.select_metric);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<VariantSweepRow> sweep_variants(const TrainConfig& config, const Corpus& train_corpus,
                                            const Corpus& val_corpus, const Corpus& test_corpus,
                                            bool stats_only) {
  std::vector<DagVariant> variants = {
      DagVariant::sequence(),   DagVariant::single_local(config.variant.omega),
      DagVariant::common(2),    DagVariant::common(4),
      DagVariant::common(6),    DagVariant::ours(1),
      DagVariant::ours(2),      DagVariant::ours(3),
  };

  std::vector<VariantSweepRow> rows;
  for (const DagVariant& variant : variants) {
    VariantSweepRow row;
    row.variant = variant;
    std::vector<ConvDag> dags;
    for (const Conversation& conv : test_corpus.conversations)
      dags.push_back(build_variant(conv, variant));
    row.avg_preds = dag_stats(dags).avg_preds;
    if (stats_only) {
      row.test_metric = std::numeric_limits<double>::quiet_NaN();
    } else {
      TrainConfig c = config;
      c.variant = variant;
      TrainResult tr = train(c, train_corpus, val_corpus, c.seeds[0]);
      row.test_metric = headline_metric(evaluate(tr.model, test_corpus, variant), c.select_metric);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dagerc
