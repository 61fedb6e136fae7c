#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hwrisk/autodiff.hpp"

namespace hwrisk::nn {

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double base_lr = 3e-4;
  std::int64_t total_steps = 1;
  double clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // Linearly decayed rate for the current step counter.
  double lr() const;
};

// Rescales grads in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

// Global-norm clipping followed by one Adam update at the decayed rate.
// grads is modified in place by the clipping.
void adam_step(std::span<double> params, std::span<double> grads, OptimizerState& opt);

// Same update applied to every tensor of a ParameterSet using its grads.
void adam_step(ParameterSet& params, OptimizerState& opt);

}  // namespace hwrisk::nn
