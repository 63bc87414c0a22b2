#include "dagerc/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dagerc {

namespace {

void check_lengths(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size())
    throw std::invalid_argument("metrics: prediction/gold length mismatch");
  if (preds.empty()) throw std::invalid_argument("metrics: empty input");
}

}  // namespace

std::vector<PerClassStats> per_class_stats(std::span<const int> preds, std::span<const int> golds,
                                           int n_classes) {
  check_lengths(preds, golds);
  std::vector<int> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n_classes || golds[i] < 0 || golds[i] >= n_classes)
      throw std::out_of_range("metrics: class index out of range");
    if (preds[i] == golds[i])
      ++tp[golds[i]];
    else {
      ++fp[preds[i]];
      ++fn[golds[i]];
    }
  }
  std::vector<PerClassStats> stats(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    PerClassStats& s = stats[c];
    s.support = tp[c] + fn[c];
    s.precision = (tp[c] + fp[c]) > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    s.recall = s.support > 0 ? static_cast<double>(tp[c]) / s.support : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                          : 0.0;
  }
  return stats;
}

double weighted_f1(std::span<const int> preds, std::span<const int> golds, int n_classes) {
  const auto stats = per_class_stats(preds, golds, n_classes);
  double sum = 0.0;
  for (const PerClassStats& s : stats) sum += s.support * s.f1;
  return sum / static_cast<double>(preds.size());
}

double micro_f1_excluding(std::span<const int> preds, std::span<const int> golds, int excluded) {
  check_lengths(preds, golds);
  long correct = 0, pred_total = 0, gold_total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] != excluded) {
      ++pred_total;
      if (preds[i] == golds[i]) ++correct;
    }
    if (golds[i] != excluded) ++gold_total;
  }
  if (pred_total == 0 && gold_total == 0) return 0.0;
  const double precision = pred_total > 0 ? static_cast<double>(correct) / pred_total : 0.0;
  const double recall = gold_total > 0 ? static_cast<double>(correct) / gold_total : 0.0;
  return (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

double accuracy(std::span<const int> preds, std::span<const int> golds) {
  check_lengths(preds, golds);
  long correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == golds[i]) ++correct;
  return static_cast<double>(correct) / preds.size();
}

std::vector<std::vector<int>> confusion_matrix(std::span<const int> preds,
                                               std::span<const int> golds, int n_classes) {
  check_lengths(preds, golds);
  std::vector<std::vector<int>> counts(n_classes, std::vector<int>(n_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n_classes || golds[i] < 0 || golds[i] >= n_classes)
      throw std::out_of_range("confusion_matrix: class index out of range");
    ++counts[golds[i]][preds[i]];
  }
  return counts;
}

ShiftReport shift_split(const Corpus& corpus, const std::vector<std::vector<int>>& preds_per_conv) {
  if (preds_per_conv.size() != corpus.conversations.size())
    throw std::invalid_argument("shift_split: prediction/conversation count mismatch");

  ShiftReport report;
  long correct_shift = 0, correct_noshift = 0;
  for (std::size_t ci = 0; ci < corpus.conversations.size(); ++ci) {
    const Conversation& conv = corpus.conversations[ci];
    const std::vector<int>& preds = preds_per_conv[ci];
    if (static_cast<int>(preds.size()) != conv.size())
      throw std::invalid_argument("shift_split: prediction/utterance count mismatch in " + conv.id);

    for (int i = 0; i < conv.size(); ++i) {
      if (!conv.utterances[i].label) continue;
      int prev = -1;
      for (int j = i - 1; j >= 0; --j) {
        if (conv.utterances[j].speaker == conv.utterances[i].speaker) {
          prev = j;
          break;
        }
      }
      if (prev < 0 || !conv.utterances[prev].label) continue;
      const bool correct = preds[i] == *conv.utterances[i].label;
      if (*conv.utterances[prev].label != *conv.utterances[i].label) {
        ++report.n_shift;
        correct_shift += correct ? 1 : 0;
      } else {
        ++report.n_noshift;
        correct_noshift += correct ? 1 : 0;
      }
    }
  }
  report.acc_shift = report.n_shift ? static_cast<double>(correct_shift) / report.n_shift : 0.0;
  report.acc_noshift =
      report.n_noshift ? static_cast<double>(correct_noshift) / report.n_noshift : 0.0;
  return report;
}

EvalReport build_report(const Corpus& corpus, const std::vector<std::vector<int>>& preds_per_conv) {
  std::vector<int> preds, golds;
  for (std::size_t ci = 0; ci < corpus.conversations.size(); ++ci) {
    const Conversation& conv = corpus.conversations[ci];
    for (int i = 0; i < conv.size(); ++i) {
      if (!conv.utterances[i].label)
        throw std::invalid_argument("build_report: unlabeled utterance in " + conv.id);
      preds.push_back(preds_per_conv[ci][i]);
      golds.push_back(*conv.utterances[i].label);
    }
  }

  const int n_classes = static_cast<int>(corpus.label_set.size());
  EvalReport report;
  report.per_class = per_class_stats(preds, golds, n_classes);
  report.weighted_f1 = weighted_f1(preds, golds, n_classes);
  report.accuracy = accuracy(preds, golds);
  if (corpus.neutral_index)
    report.micro_f1_excl = micro_f1_excluding(preds, golds, *corpus.neutral_index);
  report.confusion = confusion_matrix(preds, golds, n_classes);
  report.shift = shift_split(corpus, preds_per_conv);
  report.total = static_cast<int>(preds.size());
  return report;
}

std::string format_report(const EvalReport& report, const std::vector<std::string>& label_set) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(14) << "class" << std::right << std::setw(10) << "precision"
      << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << "\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const PerClassStats& s = report.per_class[c];
    out << std::left << std::setw(14) << label_set[c] << std::right << std::setw(10) << s.precision
        << std::setw(10) << s.recall << std::setw(10) << s.f1 << std::setw(10) << s.support << "\n";
  }
  out << "\n";
  out << "accuracy      " << report.accuracy << "  (" << report.total << " utterances)\n";
  out << "weighted F1   " << report.weighted_f1 << "\n";
  if (report.micro_f1_excl) out << "micro F1 (excl. neutral)  " << *report.micro_f1_excl << "\n";
  out << "shift         n=" << report.shift.n_shift << " acc=" << report.shift.acc_shift
      << " | no-shift n=" << report.shift.n_noshift << " acc=" << report.shift.acc_noshift << "\n";
  return out.str();
}

std::string report_to_json(const EvalReport& report, const std::vector<std::string>& label_set) {
  nlohmann::json j;
  auto classes = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const PerClassStats& s = report.per_class[c];
    classes.push_back({{"label", label_set[c]},
                       {"precision", s.precision},
                       {"recall", s.recall},
                       {"f1", s.f1},
                       {"support", s.support}});
  }
  j["per_class"] = std::move(classes);
  j["accuracy"] = report.accuracy;
  j["weighted_f1"] = report.weighted_f1;
  if (report.micro_f1_excl) j["micro_f1_excl_neutral"] = *report.micro_f1_excl;
  j["confusion"] = report.confusion;
  j["total"] = report.total;
  j["shift"] = {{"n_shift", report.shift.n_shift},
                {"acc_shift", report.shift.acc_shift},
                {"n_noshift", report.shift.n_noshift},
                {"acc_noshift", report.shift.acc_noshift}};
  return j.dump(2);
}

}  // namespace dagerc
