#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dagerc/tensor.hpp"

namespace dagerc {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  int n_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;

  bool passed(double tol) const { return worst <= tol; }
};

// Central-difference verification of reverse-mode gradients.
//
// loss_fn(compute_grads) evaluates the model loss at the current parameter
// values; when compute_grads is true it must also accumulate exact gradients
// into each parameter's grad tensor (which the harness zeroes beforehand).
// The function must be deterministic: it is evaluated twice up front and a
// mismatch raises an error.
//
// Per parameter, up to max_entries entries are sampled (all of them when the
// tensor is small); each is perturbed by +/-eps and the central difference is
// compared against the recorded gradient with relative error
// |a - b| / max(|a|, |b|, 1e-8).
GradCheckReport grad_check(std::span<Parameter* const> params,
                           const std::function<double(bool)>& loss_fn, double eps,
                           int max_entries = 32, std::uint64_t sample_seed = 0);

}  // namespace dagerc
