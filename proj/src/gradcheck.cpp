#include "dagerc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dagerc {

GradCheckReport grad_check(std::span<Parameter* const> params,
                           const std::function<double(bool)>& loss_fn, double eps,
                           int max_entries, std::uint64_t sample_seed) {
  const double probe1 = loss_fn(false);
  const double probe2 = loss_fn(false);
  if (probe1 != probe2)
    throw std::runtime_error("grad_check: loss function is not deterministic (" +
                             std::to_string(probe1) + " vs " + std::to_string(probe2) + ")");

  for (Parameter* p : params) p->grad.fill(0.0);
  loss_fn(true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad.data);

  GradCheckReport report;
  Rng rng(sample_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const int n = p.size();
    std::vector<int> indices;
    if (n <= max_entries) {
      indices.resize(n);
      for (int i = 0; i < n; ++i) indices[i] = i;
    } else {
      // distinct random sample
      std::vector<int> all(n);
      for (int i = 0; i < n; ++i) all[i] = i;
      rng.shuffle(all);
      indices.assign(all.begin(), all.begin() + max_entries);
      std::sort(indices.begin(), indices.end());
    }

    GradCheckEntry entry;
    entry.param = p.name;
    entry.n_checked = static_cast<int>(indices.size());
    for (int idx : indices) {
      const double saved = p.value.data[idx];
      p.value.data[idx] = saved + eps;
      const double fp = loss_fn(false);
      p.value.data[idx] = saved - eps;
      const double fm = loss_fn(false);
      p.value.data[idx] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = analytic[pi][idx];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.worst = std::max(report.worst, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dagerc
