#include "hwrisk/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hwrisk/hppo.hpp"
#include "hwrisk/layers.hpp"
#include "hwrisk/network.hpp"

namespace hwrisk::nn {

const char* grad_module_name(GradModule m) {
  switch (m) {
    case GradModule::kDense: return "dense";
    case GradModule::kLstm: return "lstm";
    case GradModule::kAttention: return "attention";
    case GradModule::kPolicyObjective: return "policy_objective";
    case GradModule::kValueLoss: return "value_loss";
    case GradModule::kEntropy: return "entropy";
    case GradModule::kTotalLoss: return "total_loss";
  }
  return "?";
}

namespace {

using Build = std::function<Var(Graph&)>;

struct Coord {
  ParameterSet* set;
  std::size_t param;
  std::size_t index;
};

Tensor2D randn(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  Tensor2D t(r, c);
  std::normal_distribution<double> n(0.0, sd);
  for (double& v : t.values()) v = n(rng);
  return t;
}

std::size_t add_random(ParameterSet& ps, const std::string& name, std::size_t r, std::size_t c,
                       std::mt19937_64& rng, double sd = 1.0) {
  const std::size_t i = ps.add(name, r, c);
  ps[i].value = randn(r, c, rng, sd);
  return i;
}

// Weighted sum so every output element reaches the loss.
Var project(Graph& g, Var y, const Tensor2D& w) { return sum_all(y * g.constant(w)); }

std::vector<Coord> all_coords(std::vector<ParameterSet*> sets) {
  std::vector<Coord> out;
  for (ParameterSet* s : sets) {
    for (std::size_t p = 0; p < s->size(); ++p) {
      for (std::size_t i = 0; i < (*s)[p].value.size(); ++i) out.push_back({s, p, i});
    }
  }
  return out;
}

void compare(const Build& build, std::vector<ParameterSet*> sets, std::vector<Coord> coords,
             double eps, GradCheckReport& rep) {
  for (ParameterSet* s : sets) s->zero_grad();
  std::uint64_t sig0;
  {
    Graph g;
    Var loss = build(g);
    sig0 = g.branch_signature();
    g.backward(loss);
  }
  for (const Coord& c : coords) {
    double& v = (*c.set)[c.param].value[c.index];
    const double saved = v;
    auto eval = [&](double x, std::uint64_t& sig) {
      v = x;
      Graph g;
      const double out = build(g).scalar();
      sig = g.branch_signature();
      return out;
    };
    std::uint64_t sp = 0, sm = 0;
    const double fp = eval(saved + eps, sp);
    const double fm = eval(saved - eps, sm);
    v = saved;
    if (sp != sig0 || sm != sig0) {
      ++rep.skipped_kinks;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double analytic = (*c.set)[c.param].grad[c.index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic - numeric) / denom);
    ++rep.coordinates;
  }
}

void dense_trial(std::mt19937_64& rng, double eps, GradCheckReport& rep) {
  ParameterSet ps;
  const Dense layer = Dense::create(ps, "d", 5, 4, Activation::kRelu);
  init_dense(ps, layer, rng, 1.0);
  ps[layer.bias].value = randn(1, 4, rng, 0.3);
  const std::size_t x = add_random(ps, "x", 3, 5, rng);
  const Tensor2D w = randn(3, 4, rng);
  compare([&](Graph& g) { return project(g, layer(g, ps, g.param(ps, x)), w); }, {&ps},
          all_coords({&ps}), eps, rep);
}

void lstm_trial(std::mt19937_64& rng, double eps, GradCheckReport& rep) {
  constexpr std::size_t kIn = 3, kHidden = 4, kSteps = 3, kBatch = 2;
  ParameterSet ps;
  const LstmCell cell = LstmCell::create(ps, "lstm", kIn, kHidden);
  init_lstm(ps, cell, rng, 1.0);
  ps[cell.bias].value = randn(1, 4 * kHidden, rng, 0.5);
  std::vector<std::size_t> xs;
  for (std::size_t t = 0; t < kSteps; ++t) xs.push_back(add_random(ps, "x", kBatch, kIn, rng));
  const std::size_t h0 = add_random(ps, "h0", kBatch, kHidden, rng, 0.5);
  const std::size_t c0 = add_random(ps, "c0", kBatch, kHidden, rng, 0.5);
  const Tensor2D wh = randn(kBatch, kHidden, rng);
  const Tensor2D wc = randn(kBatch, kHidden, rng);
  compare(
      [&](Graph& g) {
        Var h = g.param(ps, h0);
        Var c = g.param(ps, c0);
        for (std::size_t x : xs) std::tie(h, c) = cell(g, ps, g.param(ps, x), h, c);
        return project(g, h, wh) + project(g, c, wc);
      },
      {&ps}, all_coords({&ps}), eps, rep);
}

void attention_trial(std::mt19937_64& rng, double eps, GradCheckReport& rep) {
  constexpr std::size_t kDim = 4, kDk = 3, kSteps = 4, kBatch = 2;
  ParameterSet ps;
  const SelfAttention att = SelfAttention::create(ps, "att", kDim, kDk);
  init_attention(ps, att, rng);
  const std::size_t h = add_random(ps, "h", kSteps, kDim, rng);
  std::vector<std::size_t> steps;
  for (std::size_t t = 0; t < kSteps; ++t) steps.push_back(add_random(ps, "s", kBatch, kDim, rng));
  const Tensor2D w1 = randn(kSteps, kDk, rng);
  const Tensor2D w2 = randn(kBatch, kDk, rng);
  compare(
      [&](Graph& g) {
        std::vector<Var> vs;
        for (std::size_t s : steps) vs.push_back(g.param(ps, s));
        return project(g, att.sequence(g, ps, g.param(ps, h)), w1) +
               project(g, att.last_query(g, ps, vs), w2);
      },
      {&ps}, all_coords({&ps}), eps, rep);
}

void policy_trial(std::mt19937_64& rng, double eps, GradCheckReport& rep) {
  constexpr std::size_t kBatch = 8;
  ParameterSet ps;
  const Tensor2D old = randn(kBatch, 1, rng);
  const std::size_t lp = ps.add("logp", kBatch, 1);
  ps[lp].value = old;
  std::normal_distribution<double> shift(0.0, 0.2);
  for (double& v : ps[lp].value.values()) v += shift(rng);
  const Tensor2D adv = randn(kBatch, 1, rng);
  compare([&](Graph& g) { return hwrisk::clipped_policy_objective(g.param(ps, lp), old, adv, 0.2); },
          {&ps}, all_coords({&ps}), eps, rep);
}

void value_trial(std::mt19937_64& rng, double eps, GradCheckReport& rep) {
  constexpr std::size_t kBatch = 8;
  ParameterSet ps;
  const Tensor2D old = randn(kBatch, 1, rng);
  const std::size_t v = ps.add("v", kBatch, 1);
  ps[v].value = old;
  std::normal_distribution<double> shift(0.0, 0.3);
  for (double& x : ps[v].value.values()) x += shift(rng);
  const Tensor2D ret = randn(kBatch, 1, rng);
  compare([&](Graph& g) { return hwrisk::clipped_value_loss(g.param(ps, v), old, ret, 0.2); },
          {&ps}, all_coords({&ps}), eps, rep);
}

void entropy_trial(std::mt19937_64& rng, double eps, GradCheckReport& rep) {
  ParameterSet ps;
  const std::size_t logits = add_random(ps, "logits", 6, kBranchCount, rng, 1.5);
  compare(
      [&](Graph& g) {
        Var lp = log_softmax_rows(g.param(ps, logits));
        return scale(mean_all(sum_cols(exp(lp) * lp)), -1.0);
      },
      {&ps}, all_coords({&ps}), eps, rep);
}

void total_trial(std::mt19937_64& rng, int trial, double eps, GradCheckReport& rep) {
  NetworkSpec spec;
  spec.dense1 = 6;
  spec.dense2 = 5;
  spec.lstm = 4;
  spec.dense3 = 3;
  spec.window = 3;
  spec.attention = trial % 2 == 0;
  ActorCritic net(spec, rng());
  // Larger head weights than the training init so every term matters.
  for (ParameterSet* ps : {&net.actor(), &net.critic()}) {
    std::normal_distribution<double> n(0.0, 0.3);
    for (Parameter& p : *ps) {
      for (double& v : p.value.values()) v += n(rng);
    }
  }
  constexpr std::size_t kBatch = 4;
  const std::size_t width = spec.window * spec.obs_size;
  Minibatch mb;
  mb.windows = randn(kBatch, width, rng);
  mb.raw = randn(kBatch, 2, rng, 2.0);
  mb.logp_d_old = randn(kBatch, 1, rng, 0.5);
  mb.logp_c_old = randn(kBatch, 1, rng, 0.5);
  mb.advantages = randn(kBatch, 1, rng);
  mb.returns = randn(kBatch, 1, rng);
  mb.values_old = randn(kBatch, 1, rng, 0.5);
  std::uniform_int_distribution<int> br(0, 2);
  for (std::size_t i = 0; i < kBatch; ++i) mb.branch.push_back(br(rng));
  // Start near the old policy so the clipped surrogates are active.
  {
    Graph g;
    const PolicyOutputs out = net.forward(g, mb.windows);
    Var lp = log_softmax_rows(out.logits);
    for (std::size_t i = 0; i < kBatch; ++i) {
      mb.logp_d_old[i] = lp.value()(i, static_cast<std::size_t>(mb.branch[i])) + 0.1 * mb.logp_d_old[i];
      mb.values_old[i] = out.value.value()[i] + 0.1 * mb.values_old[i];
    }
  }
  TrainerConfig cfg;
  cfg.log_prob_mode = trial % 3 == 0 ? LogProbMode::kClippedDensity : LogProbMode::kPreClip;
  const ActionBounds bounds;

  std::vector<Coord> coords = all_coords({&net.actor(), &net.critic()});
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min<std::size_t>(coords.size(), 40));
  compare([&](Graph& g) { return hppo_loss(g, net, mb, cfg, bounds).total; },
          {&net.actor(), &net.critic()}, coords, eps, rep);
}

}  // namespace

GradCheckReport gradient_check(GradModule m, int trials, std::uint64_t seed, double eps) {
  GradCheckReport rep;
  rep.module = grad_module_name(m);
  rep.trials = trials;
  rep.tolerance = m == GradModule::kTotalLoss ? 1e-3 : 1e-4;
  std::mt19937_64 rng(seed ^ (static_cast<std::uint64_t>(m) + 1) * 0x9e3779b97f4a7c15ULL);
  for (int t = 0; t < trials; ++t) {
    switch (m) {
      case GradModule::kDense: dense_trial(rng, eps, rep); break;
      case GradModule::kLstm: lstm_trial(rng, eps, rep); break;
      case GradModule::kAttention: attention_trial(rng, eps, rep); break;
      case GradModule::kPolicyObjective: policy_trial(rng, eps, rep); break;
      case GradModule::kValueLoss: value_trial(rng, eps, rep); break;
      case GradModule::kEntropy: entropy_trial(rng, eps, rep); break;
      case GradModule::kTotalLoss: total_trial(rng, t, eps, rep); break;
    }
  }
  return rep;
}

}  // namespace hwrisk::nn
