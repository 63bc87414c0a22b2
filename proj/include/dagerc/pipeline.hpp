#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dagerc/dag.hpp"
#include "dagerc/metrics.hpp"
#include "dagerc/model.hpp"

namespace dagerc {

// Adam with bias correction; weight decay is classic L2 added to the gradient.
class AdamOptimizer {
 public:
  AdamOptimizer(ParamStore& store, double lr, double weight_decay = 0.0);
  void step();

  double lr;

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  ParamStore& store_;
  std::vector<Slot> slots_;
  long t_ = 0;
  double weight_decay_;
};

enum class SelectMetric { kAccuracy, kWeightedF1, kMicroF1Excl };

SelectMetric parse_select_metric(const std::string& name);
std::string select_metric_name(SelectMetric m);
double headline_metric(const EvalReport& report, SelectMetric metric);

struct TrainConfig {
  ModelConfig model;
  DagVariant variant = DagVariant::ours(1);
  double lr = 5e-4;
  int batch_size = 8;
  int epochs = 60;
  double weight_decay = 0.0;
  SelectMetric select_metric = SelectMetric::kWeightedF1;
  std::vector<std::uint64_t> seeds = {0};
  bool rebuild_dags_each_epoch = false;  // diagnostic knob; structure only depends on speakers

  void validate() const;
};

TrainConfig train_config_from_json_file(const std::string& path);
std::string train_config_to_json(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_metric = 0.0;
};

struct TrainResult {
  Model model;  // parameters from the best-validation epoch
  RunLog log;
};

// Shuffled seeded epochs, gradients summed per batch, one Adam step per batch.
// DAGs and feature matrices are built once up front. Deterministic for a
// fixed (config, seed): dropout streams key on (seed, epoch, conversation).
TrainResult train(const TrainConfig& config, const Corpus& train_corpus, const Corpus& val_corpus,
                  std::uint64_t seed);

// Eval-mode forward over every conversation, aggregated by the metrics module.
EvalReport evaluate(const Model& model, const Corpus& corpus, const DagVariant& variant);

// Per-conversation predicted class indices (eval mode).
std::vector<std::vector<int>> predict(const Model& model, const Corpus& corpus,
                                      const DagVariant& variant);

struct ProtocolRun {
  RunLog log;
  double test_metric = 0.0;
};

struct ProtocolResult {
  std::vector<ProtocolRun> runs;
  double mean_test_metric = 0.0;
  std::optional<Model> first_model;  // best checkpoint of the first seed
};

// One train per configured seed; the aggregate is the arithmetic mean of the
// per-seed test metrics at the best-validation checkpoints.
ProtocolResult run_protocol(const TrainConfig& config, const Corpus& train_corpus,
                            const Corpus& val_corpus, const Corpus& test_corpus);

struct LayerSweepRow {
  int n_layers = 0;
  double test_metric = 0.0;
  double final_train_loss = 0.0;
};

std::vector<LayerSweepRow> sweep_layers(const TrainConfig& config, const Corpus& train_corpus,
                                        const Corpus& val_corpus, const Corpus& test_corpus,
                                        const std::vector<int>& depths);

struct AblationSweepRow {
  std::string name;
  long params = 0;
  double test_metric = 0.0;
};

// full model, then each component removed in turn
std::vector<AblationSweepRow> sweep_ablations(const TrainConfig& config, const Corpus& train_corpus,
                                              const Corpus& val_corpus, const Corpus& test_corpus);

struct VariantSweepRow {
  DagVariant variant;
  double avg_preds = 0.0;
  double test_metric = 0.0;  // NaN in stats-only mode
};

// sequence, single-local, common kappa in {2,4,6}, ours omega in {1,2,3};
// stats_only skips training and reports the predecessor statistics alone
std::vector<VariantSweepRow> sweep_variants(const TrainConfig& config, const Corpus& train_corpus,
                                            const Corpus& val_corpus, const Corpus& test_corpus,
                                            bool stats_only);

}  // namespace dagerc
