#include "hwrisk/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "hwrisk/errors.hpp"

namespace hwrisk::nn {

double OptimizerState::lr() const {
  if (total_steps <= 0) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * std::max(0.0, frac);
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

void adam_step(std::span<double> params, std::span<double> grads, OptimizerState& opt) {
  if (params.size() != grads.size()) {
    throw ShapeMismatch("adam: " + std::to_string(params.size()) + " params vs " +
                        std::to_string(grads.size()) + " grads");
  }
  if (opt.m.empty()) {
    opt.m.assign(params.size(), 0.0);
    opt.v.assign(params.size(), 0.0);
  }
  if (opt.m.size() != params.size()) throw ShapeMismatch("adam: moment size changed");
  clip_global_norm(grads, opt.clip_norm);
  const double lr = opt.lr();
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grads[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    if (lr == 0.0) continue;
    const double m_hat = opt.m[i] / c1;
    const double v_hat = opt.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

void adam_step(ParameterSet& params, OptimizerState& opt) {
  std::vector<double> values = params.flat_values();
  std::vector<double> grads = params.flat_grads();
  adam_step(values, grads, opt);
  params.assign_values(values);
}

}  // namespace hwrisk::nn
