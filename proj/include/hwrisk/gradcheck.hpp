#pragma once

#include <cstdint>
#include <string>

namespace hwrisk::nn {

enum class GradModule {
  kDense,
  kLstm,
  kAttention,
  kPolicyObjective,
  kValueLoss,
  kEntropy,
  kTotalLoss,
};

const char* grad_module_name(GradModule m);

struct GradCheckReport {
  std::string module;
  int trials = 0;
  long coordinates = 0;      // compared against finite differences
  long skipped_kinks = 0;    // perturbation changed a relu/clip/min/max branch
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return coordinates > 0 && max_rel_error < tolerance; }
};

// Central differences with step eps against reverse-mode gradients on random
// instances. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport gradient_check(GradModule m, int trials, std::uint64_t seed = 7,
                               double eps = 1e-5);

}  // namespace hwrisk::nn
