#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dagerc/checkpoint.hpp"
#include "dagerc/gradcheck.hpp"
#include "dagerc/pipeline.hpp"
#include "json.hpp"

using namespace dagerc;
using nlohmann::json;

namespace {

struct VariantFlags {
  std::string kind = "ours";
  int omega = 1;
  int kappa = 2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--variant", kind, "DAG structure: ours|sequence|single-local|common")
        ->check(CLI::IsMember({"ours", "sequence", "single-local", "common"}))
        ->capture_default_str();
    cmd->add_option("--omega", omega, "same-speaker cut-off depth")->capture_default_str();
    cmd->add_option("--kappa", kappa, "window size for the common variant")
        ->capture_default_str();
  }

  DagVariant resolve() const {
    if (kind == "sequence") return DagVariant::sequence();
    if (kind == "single-local") return DagVariant::single_local(omega);
    if (kind == "common") return DagVariant::common(kappa);
    return DagVariant::ours(omega);
  }
};

// d_feat / n_classes left at 0 in a config mean "infer from the corpus"
void infer_model_dims(TrainConfig& cfg, const Corpus& corpus) {
  if (cfg.model.d_feat == 0) {
    if (!corpus.d_feat) throw std::runtime_error("corpus has no features; run featurize first");
    cfg.model.d_feat = *corpus.d_feat;
  }
  if (cfg.model.n_classes == 0) cfg.model.n_classes = static_cast<int>(corpus.label_set.size());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string runlog_json(const std::vector<ProtocolRun>& runs, double mean) {
  json j;
  auto ja = json::array();
  for (const ProtocolRun& run : runs) {
    json r;
    r["seed"] = run.log.seed;
    r["best_epoch"] = run.log.best_epoch;
    r["best_val_metric"] = run.log.best_val_metric;
    r["test_metric"] = run.test_metric;
    auto epochs = json::array();
    for (const EpochRecord& e : run.log.epochs)
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_metric", e.val_metric},
                        {"seconds", e.seconds}});
    r["epochs"] = std::move(epochs);
    ja.push_back(std::move(r));
  }
  j["runs"] = std::move(ja);
  j["mean_test_metric"] = mean;
  return j.dump(2);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conversation emotion classifier over speaker-aware DAGs"};
  app.require_subcommand(1);

  // ---- build-dag ----------------------------------------------------------
  auto* cmd_dag = app.add_subcommand("build-dag", "build conversation DAGs and inspect them");
  std::string dag_input, dag_dot, dag_dump, dag_conv_id;
  bool dag_stats_flag = false;
  VariantFlags dag_variant;
  cmd_dag->add_option("--input", dag_input, "corpus file (jsonl)")->required();
  dag_variant.attach(cmd_dag);
  cmd_dag->add_flag("--stats", dag_stats_flag, "print predecessor statistics");
  cmd_dag->add_option("--dot", dag_dot, "write graphviz text for one conversation");
  cmd_dag->add_option("--conversation", dag_conv_id, "conversation id for --dot (default: first)");
  cmd_dag->add_option("--dump", dag_dump, "write one edge-list json object per conversation");

  // ---- featurize ----------------------------------------------------------
  auto* cmd_feat = app.add_subcommand("featurize", "fill token-hash features");
  std::string feat_input, feat_output;
  int feat_dim = 0;
  std::uint64_t feat_salt = 0;
  cmd_feat->add_option("--input", feat_input)->required();
  cmd_feat->add_option("--output", feat_output)->required();
  cmd_feat->add_option("--d-feat", feat_dim, "feature dimension")->required();
  cmd_feat->add_option("--salt", feat_salt, "hash salt")->capture_default_str();

  // ---- train --------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train a model");
  std::string tr_train, tr_val, tr_test, tr_config, tr_out, tr_log, tr_metric;
  int tr_nval = 0;
  VariantFlags tr_variant;
  std::vector<std::uint64_t> tr_seeds;
  double tr_lr = 0, tr_dropout = -1, tr_wd = -1;
  int tr_epochs = 0, tr_batch = 0, tr_dh = 0, tr_layers = 0;
  cmd_train->add_option("--train", tr_train, "training corpus")->required();
  cmd_train->add_option("--val", tr_val, "validation corpus");
  cmd_train->add_option("--n-val", tr_nval, "carve the last N training conversations for validation");
  cmd_train->add_option("--test", tr_test, "test corpus (enables the multi-seed protocol report)");
  cmd_train->add_option("--config", tr_config, "json config file");
  tr_variant.attach(cmd_train);
  cmd_train->add_option("--seed", tr_seeds, "training seed(s)");
  cmd_train->add_option("--lr", tr_lr);
  cmd_train->add_option("--epochs", tr_epochs);
  cmd_train->add_option("--batch-size", tr_batch);
  cmd_train->add_option("--d-h", tr_dh);
  cmd_train->add_option("--layers", tr_layers);
  cmd_train->add_option("--dropout", tr_dropout);
  cmd_train->add_option("--weight-decay", tr_wd);
  int tr_dfeat = 0;
  cmd_train->add_option("--d-feat", tr_dfeat, "expected feature dimension (overrides inference)");
  cmd_train->add_option("--metric", tr_metric, "accuracy|weighted_f1|micro_f1_excl");
  cmd_train->add_option("--out", tr_out, "write the trained model checkpoint here");
  cmd_train->add_option("--log", tr_log, "write the run log here");

  // ---- eval ---------------------------------------------------------------
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_model, ev_input, ev_report, ev_trace;
  VariantFlags ev_variant;
  cmd_eval->add_option("--model", ev_model)->required();
  cmd_eval->add_option("--input", ev_input)->required();
  ev_variant.attach(cmd_eval);
  cmd_eval->add_option("--report", ev_report, "write the full report as json");
  cmd_eval->add_option("--dump-trace", ev_trace, "write per-conversation forward traces (jsonl)");

  // ---- shift-report -------------------------------------------------------
  auto* cmd_shift = app.add_subcommand("shift-report", "accuracy on emotional-shift samples");
  std::string sh_model, sh_input;
  VariantFlags sh_variant;
  cmd_shift->add_option("--model", sh_model)->required();
  cmd_shift->add_option("--input", sh_input)->required();
  sh_variant.attach(cmd_shift);

  // ---- grad-check ---------------------------------------------------------
  auto* cmd_gc = app.add_subcommand("grad-check", "verify gradients against finite differences");
  int gc_dh = 8, gc_layers = 2, gc_len = 4;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  std::uint64_t gc_seed = 5;
  cmd_gc->add_option("--d-h", gc_dh)->capture_default_str();
  cmd_gc->add_option("--layers", gc_layers)->capture_default_str();
  cmd_gc->add_option("--length", gc_len, "conversation length")->capture_default_str();
  cmd_gc->add_option("--eps", gc_eps)->capture_default_str();
  cmd_gc->add_option("--tol", gc_tol)->capture_default_str();
  cmd_gc->add_option("--seed", gc_seed)->capture_default_str();

  // ---- sweeps -------------------------------------------------------------
  auto* cmd_sl = app.add_subcommand("sweep-layers", "train once per network depth");
  std::string sl_train, sl_val, sl_test, sl_config, sl_depths = "1,2,3,4";
  cmd_sl->add_option("--train", sl_train)->required();
  cmd_sl->add_option("--val", sl_val)->required();
  cmd_sl->add_option("--test", sl_test)->required();
  cmd_sl->add_option("--config", sl_config);
  cmd_sl->add_option("--depths", sl_depths, "comma-separated layer counts")->capture_default_str();

  auto* cmd_sa = app.add_subcommand("sweep-ablations", "train the full model and each ablation");
  std::string sa_train, sa_val, sa_test, sa_config;
  cmd_sa->add_option("--train", sa_train)->required();
  cmd_sa->add_option("--val", sa_val)->required();
  cmd_sa->add_option("--test", sa_test)->required();
  cmd_sa->add_option("--config", sa_config);

  auto* cmd_sv = app.add_subcommand("sweep-variants", "compare DAG structures");
  std::string sv_train, sv_val, sv_test, sv_config;
  bool sv_stats_only = false;
  cmd_sv->add_option("--train", sv_train)->required();
  cmd_sv->add_option("--val", sv_val);
  cmd_sv->add_option("--test", sv_test, "corpus whose DAG statistics are reported");
  cmd_sv->add_option("--config", sv_config);
  cmd_sv->add_flag("--stats-only", sv_stats_only, "skip training, report predecessor counts only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_dag) {
      Corpus corpus = load_corpus(dag_input);
      const DagVariant variant = dag_variant.resolve();
      std::vector<ConvDag> dags;
      for (const Conversation& conv : corpus.conversations)
        dags.push_back(build_variant(conv, variant));

      if (dag_stats_flag) {
        DagStats s = dag_stats(dags);
        std::cout << "variant        " << variant.describe() << "\n"
                  << "conversations  " << dags.size() << "\n"
                  << "nodes          " << s.node_count << "\n"
                  << "edges          " << s.edge_count << "\n"
                  << "avg preds      " << std::fixed << std::setprecision(4) << s.avg_preds << "\n"
                  << "same-speaker   " << s.relation_histogram[1] << "\n"
                  << "cross-speaker  " << s.relation_histogram[0] << "\n";
      }
      if (!dag_dot.empty()) {
        std::size_t idx = 0;
        if (!dag_conv_id.empty()) {
          for (; idx < corpus.conversations.size(); ++idx)
            if (corpus.conversations[idx].id == dag_conv_id) break;
          if (idx == corpus.conversations.size())
            throw std::runtime_error("conversation id not found: " + dag_conv_id);
        }
        write_text(dag_dot, export_dot(dags[idx], corpus.conversations[idx]));
      }
      if (!dag_dump.empty()) {
        std::ofstream out(dag_dump);
        if (!out) throw std::runtime_error("cannot write " + dag_dump);
        for (std::size_t i = 0; i < dags.size(); ++i) {
          json line = json::parse(export_json(dags[i]));
          line["id"] = corpus.conversations[i].id;
          out << line.dump() << '\n';
        }
      }
      return 0;
    }

    if (*cmd_feat) {
      Corpus corpus = load_corpus(feat_input);
      featurize_corpus(corpus, feat_dim, feat_salt);
      save_corpus(corpus, feat_output);
      std::cout << "featurized " << corpus.conversations.size() << " conversations at d_feat="
                << feat_dim << "\n";
      return 0;
    }

    if (*cmd_train) {
      TrainConfig cfg = tr_config.empty() ? TrainConfig{} : train_config_from_json_file(tr_config);
      if (cmd_train->count("--variant") || cmd_train->count("--omega") ||
          cmd_train->count("--kappa"))
        cfg.variant = tr_variant.resolve();
      if (tr_lr > 0) cfg.lr = tr_lr;
      if (tr_epochs > 0) cfg.epochs = tr_epochs;
      if (tr_batch > 0) cfg.batch_size = tr_batch;
      if (tr_dh > 0) cfg.model.d_h = tr_dh;
      if (tr_layers > 0) cfg.model.n_layers = tr_layers;
      if (tr_dropout >= 0) cfg.model.dropout = tr_dropout;
      if (tr_wd >= 0) cfg.weight_decay = tr_wd;
      if (!tr_metric.empty()) cfg.select_metric = parse_select_metric(tr_metric);
      if (!tr_seeds.empty()) cfg.seeds = tr_seeds;

      const std::optional<int> expected_d_feat =
          tr_dfeat > 0 ? std::optional<int>(tr_dfeat) : std::nullopt;
      Corpus train_corpus = load_corpus(tr_train, expected_d_feat);
      Corpus val_corpus;
      if (!tr_val.empty()) {
        val_corpus = load_corpus(tr_val, expected_d_feat);
      } else if (tr_nval > 0) {
        auto parts = split_tail(train_corpus, tr_nval);
        train_corpus = std::move(parts.first);
        val_corpus = std::move(parts.second);
      } else {
        throw std::runtime_error("pass --val or --n-val to define a validation set");
      }
      infer_model_dims(cfg, train_corpus);

      std::vector<ProtocolRun> runs;
      double mean_test = 0.0;
      std::optional<Model> last_model;
      if (!tr_test.empty()) {
        Corpus test_corpus = load_corpus(tr_test);
        ProtocolResult pr = run_protocol(cfg, train_corpus, val_corpus, test_corpus);
        runs = std::move(pr.runs);
        mean_test = pr.mean_test_metric;
        for (const ProtocolRun& run : runs)
          std::cout << "seed " << run.log.seed << ": best epoch " << run.log.best_epoch
                    << ", val " << std::setprecision(6) << run.log.best_val_metric << ", test "
                    << run.test_metric << "\n";
        std::cout << "mean test " << select_metric_name(cfg.select_metric) << " over "
                  << runs.size() << " seeds: " << mean_test << "\n";
        if (pr.first_model) last_model.emplace(std::move(*pr.first_model));
      } else {
        TrainResult result = train(cfg, train_corpus, val_corpus, cfg.seeds[0]);
        std::cout << "seed " << result.log.seed << ": best epoch " << result.log.best_epoch
                  << ", val " << select_metric_name(cfg.select_metric) << " "
                  << std::setprecision(6) << result.log.best_val_metric << "\n";
        ProtocolRun run;
        run.log = result.log;
        run.test_metric = result.log.best_val_metric;
        runs.push_back(std::move(run));
        mean_test = result.log.best_val_metric;
        last_model.emplace(std::move(result.model));
      }
      if (!tr_out.empty() && last_model) {
        save_checkpoint(*last_model, tr_out);
        std::cout << "wrote " << tr_out << "\n";
      }
      if (!tr_log.empty()) write_text(tr_log, runlog_json(runs, mean_test));
      return 0;
    }

    if (*cmd_eval) {
      Model model = load_checkpoint(ev_model);
      Corpus corpus = load_corpus(ev_input);
      const DagVariant variant = ev_variant.resolve();
      EvalReport report = evaluate(model, corpus, variant);
      std::cout << format_report(report, corpus.label_set);
      if (!ev_report.empty()) write_text(ev_report, report_to_json(report, corpus.label_set));
      if (!ev_trace.empty()) {
        std::ofstream out(ev_trace);
        if (!out) throw std::runtime_error("cannot write " + ev_trace);
        for (const Conversation& conv : corpus.conversations) {
          ConvDag dag = build_variant(conv, variant);
          std::vector<std::vector<double>> feats;
          for (const Utterance& u : conv.utterances) feats.push_back(*u.feature);
          Tape tape;
          ForwardTrace trace;
          forward(model, tape, feats, dag, false, nullptr, &trace);
          json line;
          line["id"] = conv.id;
          line["predictions"] = trace.predictions;
          line["probs"] = trace.probs;
          auto layers = json::array();
          for (const LayerTrace& lt : trace.layers)
            layers.push_back({{"attention", lt.attention}, {"hidden", lt.hidden}});
          line["layers"] = std::move(layers);
          out << line.dump() << '\n';
        }
      }
      return 0;
    }

    if (*cmd_shift) {
      Model model = load_checkpoint(sh_model);
      Corpus corpus = load_corpus(sh_input);
      EvalReport report = evaluate(model, corpus, sh_variant.resolve());
      std::cout << std::fixed << std::setprecision(4);
      std::cout << "shift     n=" << report.shift.n_shift << " acc=" << report.shift.acc_shift
                << "\n";
      std::cout << "no-shift  n=" << report.shift.n_noshift << " acc=" << report.shift.acc_noshift
                << "\n";
      return 0;
    }

    if (*cmd_gc) {
      // random conversation with two alternating speakers
      Conversation conv;
      conv.id = "gc";
      for (int i = 0; i < gc_len; ++i) {
        Utterance u;
        u.index = i;
        u.speaker = i % 2 == 0 ? "A" : "B";
        conv.utterances.push_back(std::move(u));
      }
      ConvDag dag = build_dag(conv, 1);

      ModelConfig mc;
      mc.d_feat = 6;
      mc.d_h = gc_dh;
      mc.n_layers = gc_layers;
      mc.n_classes = 3;
      mc.dropout = 0.0;
      mc.seed = gc_seed;
      Model model = init_model(mc);
      for (auto& p : model.store->all())
        for (double& v : p->value.data) v *= 2.0;

      Rng rng(mix_seed(gc_seed, 13));
      std::vector<std::vector<double>> feats(gc_len, std::vector<double>(6));
      for (auto& row : feats) for (double& v : row) v = rng.uniform(-1.0, 1.0);
      std::vector<int> labels(gc_len);
      for (int i = 0; i < gc_len; ++i) labels[i] = i % 3;

      auto loss_fn = [&](bool with_grads) {
        Tape tape;
        ForwardResult r = forward(model, tape, feats, dag, false, nullptr);
        Tape::Ref loss = conversation_loss(tape, r.probs, labels);
        if (with_grads) tape.backward(loss);
        return tape.value(loss)[0];
      };
      auto params = model.parameters();
      GradCheckReport report = grad_check(params, loss_fn, gc_eps);
      for (const GradCheckEntry& e : report.entries)
        std::cout << std::left << std::setw(28) << e.param << " max rel err "
                  << std::scientific << std::setprecision(3) << e.max_rel_err << "  ("
                  << e.n_checked << " entries)\n";
      std::cout << (report.passed(gc_tol) ? "PASS" : "FAIL") << ": worst " << std::scientific
                << report.worst << " vs tolerance " << gc_tol << "\n";
      return report.passed(gc_tol) ? 0 : 1;
    }

    auto load_sweep_config = [&](const std::string& path, const Corpus& train_corpus) {
      TrainConfig cfg = path.empty() ? TrainConfig{} : train_config_from_json_file(path);
      infer_model_dims(cfg, train_corpus);
      return cfg;
    };

    if (*cmd_sl) {
      Corpus train_corpus = load_corpus(sl_train);
      Corpus val_corpus = load_corpus(sl_val);
      Corpus test_corpus = load_corpus(sl_test);
      TrainConfig cfg = load_sweep_config(sl_config, train_corpus);
      std::vector<int> depths;
      for (const auto& part : CLI::detail::split(sl_depths, ','))
        depths.push_back(std::stoi(part));
      auto rows = sweep_layers(cfg, train_corpus, val_corpus, test_corpus, depths);
      std::cout << "layers  test_" << select_metric_name(cfg.select_metric) << "  final_loss\n";
      for (const auto& row : rows)
        std::cout << std::setw(6) << row.n_layers << "  " << std::fixed << std::setprecision(4)
                  << row.test_metric << "      " << row.final_train_loss << "\n";
      return 0;
    }

    if (*cmd_sa) {
      Corpus train_corpus = load_corpus(sa_train);
      Corpus val_corpus = load_corpus(sa_val);
      Corpus test_corpus = load_corpus(sa_test);
      TrainConfig cfg = load_sweep_config(sa_config, train_corpus);
      auto rows = sweep_ablations(cfg, train_corpus, val_corpus, test_corpus);
      std::cout << std::left << std::setw(26) << "variant" << std::right << std::setw(10)
                << "params" << std::setw(12) << "test\n";
      for (const auto& row : rows)
        std::cout << std::left << std::setw(26) << row.name << std::right << std::setw(10)
                  << row.params << std::setw(10) << std::fixed << std::setprecision(4)
                  << row.test_metric << "\n";
      return 0;
    }

    if (*cmd_sv) {
      Corpus train_corpus = load_corpus(sv_train);
      TrainConfig cfg = load_sweep_config(sv_config, train_corpus);
      Corpus val_corpus = sv_val.empty() ? train_corpus : load_corpus(sv_val);
      Corpus test_corpus = sv_test.empty() ? train_corpus : load_corpus(sv_test);
      if (!sv_stats_only && (sv_val.empty() || sv_test.empty()))
        throw std::runtime_error("training sweeps need --val and --test (or pass --stats-only)");
      auto rows = sweep_variants(cfg, train_corpus, val_corpus, test_corpus, sv_stats_only);
      std::cout << std::left << std::setw(24) << "variant" << std::right << std::setw(10)
                << "avg_preds" << (sv_stats_only ? "" : "      test") << "\n";
      for (const auto& row : rows) {
        std::cout << std::left << std::setw(24) << row.variant.describe() << std::right
                  << std::setw(10) << std::fixed << std::setprecision(4) << row.avg_preds;
        if (!sv_stats_only) std::cout << "    " << row.test_metric;
        std::cout << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
