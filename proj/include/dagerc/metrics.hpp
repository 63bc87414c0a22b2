#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dagerc/corpus.hpp"

namespace dagerc {

struct PerClassStats {
  int support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// support-weighted mean of per-class F1; zero-denominator classes score 0
double weighted_f1(std::span<const int> preds, std::span<const int> golds, int n_classes);

// micro precision/recall over non-excluded predictions/golds; 0 when both
// denominators are empty
double micro_f1_excluding(std::span<const int> preds, std::span<const int> golds, int excluded);

double accuracy(std::span<const int> preds, std::span<const int> golds);

// counts[gold][pred]
std::vector<std::vector<int>> confusion_matrix(std::span<const int> preds,
                                               std::span<const int> golds, int n_classes);

std::vector<PerClassStats> per_class_stats(std::span<const int> preds, std::span<const int> golds,
                                           int n_classes);

// Accuracy split by whether an utterance's gold emotion differs from that of
// the nearest preceding same-speaker utterance in the same conversation.
// Utterances with no same-speaker predecessor belong to neither group.
struct ShiftReport {
  int n_shift = 0;
  int n_noshift = 0;
  double acc_shift = 0.0;
  double acc_noshift = 0.0;
};

ShiftReport shift_split(const Corpus& corpus, const std::vector<std::vector<int>>& preds_per_conv);

struct EvalReport {
  std::vector<PerClassStats> per_class;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  std::optional<double> micro_f1_excl;  // set when the corpus declares a neutral class
  std::vector<std::vector<int>> confusion;
  ShiftReport shift;
  int total = 0;
};

EvalReport build_report(const Corpus& corpus, const std::vector<std::vector<int>>& preds_per_conv);

std::string format_report(const EvalReport& report, const std::vector<std::string>& label_set);
std::string report_to_json(const EvalReport& report, const std::vector<std::string>& label_set);

}  // namespace dagerc
