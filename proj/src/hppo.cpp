#include "hwrisk/hppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "hwrisk/errors.hpp"

namespace hwrisk {

using nn::Tensor2D;
using nn::Var;

void TrainerConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in [0, 1]");
  if (!(clip_eps > 0.0) || !(value_clip_eps > 0.0)) throw ConfigError("clip ranges must be positive");
  if (minibatch <= 0 || epochs < 0 || horizon < 0 || iterations < 0 || num_envs <= 0) {
    throw ConfigError("minibatch/num_envs must be positive; epochs/horizon/iterations >= 0");
  }
  if (!(base_lr >= 0.0 && clip_norm > 0.0)) throw ConfigError("bad learning rate or clip norm");
}

std::pair<std::vector<double>, std::vector<double>> gae_advantages(
    std::span<const double> rewards, std::span<const double> values,
    std::span<const bool> dones, double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw LengthMismatch("rewards/values/dones lengths " + std::to_string(n) + "/" +
                         std::to_string(values.size()) + "/" + std::to_string(dones.size()));
  }
  std::vector<double> adv(n), ret(n);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double next_value = (t + 1 == n) ? bootstrap : values[t + 1];
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    running = delta + gamma * lambda * live * running;
    adv[t] = running;
    ret[t] = running + values[t];
  }
  return {adv, ret};
}

namespace {

void require_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) {
    throw LengthMismatch(std::to_string(a) + "/" + std::to_string(b) + "/" + std::to_string(c));
  }
}

}  // namespace

double clipped_policy_objective(std::span<const double> logp_new,
                                std::span<const double> logp_old,
                                std::span<const double> advantages, double eps) {
  require_lengths(logp_new.size(), logp_old.size(), advantages.size());
  if (logp_new.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    const double ratio = std::exp(logp_new[i] - logp_old[i]);
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    sum += std::min(ratio * advantages[i], clipped * advantages[i]);
  }
  return sum / static_cast<double>(logp_new.size());
}

double clipped_value_loss(std::span<const double> v_new, std::span<const double> v_old,
                          std::span<const double> returns, double eps) {
  require_lengths(v_new.size(), v_old.size(), returns.size());
  if (v_new.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < v_new.size(); ++i) {
    const double v_clip = v_old[i] + std::clamp(v_new[i] - v_old[i], -eps, eps);
    const double plain = (returns[i] - v_new[i]) * (returns[i] - v_new[i]);
    const double clipped = (returns[i] - v_clip) * (returns[i] - v_clip);
    sum += std::max(plain, clipped);
  }
  return sum / static_cast<double>(v_new.size());
}

double total_loss(double j_d, double j_c, double l_bl, double h_d, double h_c,
                  double value_coeff, double entropy_coeff) {
  return -j_d - j_c + value_coeff * l_bl - entropy_coeff * (h_d + h_c);
}

Var clipped_policy_objective(Var logp_new, const Tensor2D& logp_old, const Tensor2D& advantages,
                             double eps) {
  if (!logp_new.value().same_shape(logp_old) || !logp_old.same_shape(advantages)) {
    throw LengthMismatch("policy objective operand shapes differ");
  }
  nn::Graph& g = *logp_new.graph();
  Var adv = g.constant(advantages);
  Var ratio = nn::exp(logp_new - g.constant(logp_old));
  return nn::mean_all(nn::minimum(ratio * adv, nn::clip(ratio, 1.0 - eps, 1.0 + eps) * adv));
}

Var clipped_value_loss(Var v_new, const Tensor2D& v_old, const Tensor2D& returns, double eps) {
  if (!v_new.value().same_shape(v_old) || !v_old.same_shape(returns)) {
    throw LengthMismatch("value loss operand shapes differ");
  }
  nn::Graph& g = *v_new.graph();
  Var old = g.constant(v_old);
  Var ret = g.constant(returns);
  Var v_clip = old + nn::clip(v_new - old, -eps, eps);
  return nn::mean_all(nn::maximum(nn::square(ret - v_new), nn::square(ret - v_clip)));
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

std::pair<double, double> lateral_box(int branch, const ActionBounds& b) {
  switch (static_cast<Branch>(branch)) {
    case Branch::kLeftChange:
      return {0.0, b.a_lat_max};
    case Branch::kRightChange:
      return {-b.a_lat_max, 0.0};
    case Branch::kFollowing:
      break;
  }
  return {-b.a_keep, b.a_keep};
}

std::pair<double, double> action_box(int dim, int branch, const ActionBounds& b) {
  return dim == 0 ? std::pair{-b.a_long_max, b.a_long_max} : lateral_box(branch, b);
}

double log_phi(double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); }

}  // namespace

double continuous_log_prob(std::span<const double> raw, std::span<const double> means,
                           std::span<const double> log_stds, int branch,
                           const ActionBounds& bounds, LogProbMode mode) {
  double total = 0.0;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const double sigma = std::exp(log_stds[k]);
    const double z = (raw[k] - means[k]) / sigma;
    double lp = -0.5 * z * z - log_stds[k] - 0.5 * kLog2Pi;
    if (mode == LogProbMode::kClippedDensity) {
      const auto [lo, hi] = action_box(static_cast<int>(k), branch, bounds);
      if (raw[k] <= lo) {
        lp = log_phi((lo - means[k]) / sigma);
      } else if (raw[k] >= hi) {
        lp = log_phi((means[k] - hi) / sigma);
      }
    }
    total += lp;
  }
  return total;
}

SampledAction sample_hybrid_action(std::span<const double> logits, std::span<const double> means,
                                   std::span<const double> log_stds, std::mt19937_64& rng,
                                   const ActionBounds& bounds, LogProbMode mode) {
  if (logits.size() != nn::kBranchCount || means.size() != nn::kContinuousDims ||
      log_stds.size() != nn::kContinuousDims) {
    throw ShapeMismatch("sample_hybrid_action expects 3 logits, 2 means, 2 log-stds");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::array<double, nn::kBranchCount> p{};
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng) * z;
  int branch = static_cast<int>(p.size()) - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) {
      branch = static_cast<int>(i);
      break;
    }
  }
  SampledAction s;
  s.branch = branch;
  s.logp_d = logits[static_cast<std::size_t>(branch)] - m - std::log(z);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < nn::kContinuousDims; ++k) {
    s.raw[k] = means[k] + std::exp(log_stds[k]) * normal(rng);
  }
  s.logp_c = continuous_log_prob(s.raw, means, log_stds, branch, bounds, mode);
  s.action = constrain_action(static_cast<Branch>(branch), s.raw[0], s.raw[1], bounds);
  return s;
}

HybridAction greedy_action(const nn::PolicyValues& pv, const ActionBounds& bounds) {
  const auto best = std::max_element(pv.logits.begin(), pv.logits.end()) - pv.logits.begin();
  return constrain_action(static_cast<Branch>(best), pv.means[0], pv.means[1], bounds);
}

void RolloutBuffer::estimate(double gamma, double lambda, bool bootstrap_truncation) {
  advantages.assign(steps.size(), 0.0);
  returns.assign(steps.size(), 0.0);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto [start, length] = segments[s];
    std::vector<double> r(length), v(length);
    std::vector<char> d(length);
    for (std::size_t i = 0; i < length; ++i) {
      const RolloutStep& st = steps[start + i];
      r[i] = st.reward + (bootstrap_truncation && st.truncated ? gamma * st.truncation_value : 0.0);
      v[i] = steps[start + i].value;
      d[i] = steps[start + i].done;
    }
    std::unique_ptr<bool[]> dones(new bool[length]);
    for (std::size_t i = 0; i < length; ++i) dones[i] = d[i] != 0;
    auto [a, ret] = gae_advantages(r, v, std::span<const bool>(dones.get(), length),
                                   bootstrap[s], gamma, lambda);
    std::copy(a.begin(), a.end(), advantages.begin() + static_cast<std::ptrdiff_t>(start));
    std::copy(ret.begin(), ret.end(), returns.begin() + static_cast<std::ptrdiff_t>(start));
  }
  estimated = true;
}

RolloutCollector::RolloutCollector(const EnvConfig& env_cfg, int num_envs, std::size_t window,
                                   std::uint64_t seed)
    : window_(window), seeds_(seed) {
  envs_.reserve(static_cast<std::size_t>(num_envs));
  for (int i = 0; i < num_envs; ++i) {
    EnvConfig cfg = env_cfg;
    cfg.record_log = false;
    envs_.push_back(Slot{HighwayEnv(cfg), {}, 0.0, 0.0, 0});
  }
  for (Slot& s : envs_) start_episode(s);
}

void RolloutCollector::start_episode(Slot& slot) {
  slot.history.clear();
  slot.history.push_back(slot.env.reset(seeds_()));
  slot.ret = 0.0;
  slot.adr_sum = 0.0;
  slot.length = 0;
}

std::vector<double> RolloutCollector::window_of(const Slot& slot) const {
  std::vector<double> w(window_ * kObservationSize, 0.0);
  const std::size_t have = std::min(window_, slot.history.size());
  const std::size_t offset = window_ - have;
  for (std::size_t i = 0; i < have; ++i) {
    const auto flat = slot.history[slot.history.size() - have + i].flatten();
    std::copy(flat.begin(), flat.end(),
              w.begin() + static_cast<std::ptrdiff_t>((offset + i) * kObservationSize));
  }
  return w;
}

double RolloutCollector::running_mean_return() const {
  double s = 0.0;
  for (const Slot& slot : envs_) s += slot.ret;
  return envs_.empty() ? 0.0 : s / static_cast<double>(envs_.size());
}

RolloutBuffer RolloutCollector::collect(nn::ActorCritic& net, int horizon, std::mt19937_64& rng,
                                        const ActionBounds& bounds, LogProbMode mode) {
  RolloutBuffer buf;
  finished_.clear();
  buf.steps.reserve(static_cast<std::size_t>(horizon) * envs_.size());
  for (Slot& slot : envs_) {
    const std::size_t start = buf.steps.size();
    for (int t = 0; t < horizon; ++t) {
      RolloutStep step;
      step.window = window_of(slot);
      const nn::PolicyValues pv = net.evaluate(step.window);
      const SampledAction s =
          sample_hybrid_action(pv.logits, pv.means, pv.log_stds, rng, bounds, mode);
      const StepResult res = slot.env.step(s.action);
      step.branch = s.branch;
      step.raw = s.raw;
      step.logp_d = s.logp_d;
      step.logp_c = s.logp_c;
      step.value = pv.value;
      step.reward = res.reward.total;
      step.done = res.done;
      step.adr = res.info.adr;
      buf.steps.push_back(std::move(step));
      slot.ret += res.reward.total;
      slot.adr_sum += res.info.adr;
      ++slot.length;
      if (res.info.reason == DoneReason::kHorizon) {
        slot.history.push_back(res.obs);
        if (slot.history.size() > window_) slot.history.pop_front();
        buf.steps.back().truncated = true;
        buf.steps.back().truncation_value = net.evaluate(window_of(slot)).value;
      }
      if (res.done) {
        finished_.push_back({slot.ret, slot.length, slot.adr_sum / slot.length, res.info.reason});
        start_episode(slot);
      } else {
        slot.history.push_back(res.obs);
        if (slot.history.size() > window_) slot.history.pop_front();
      }
    }
    buf.segments.emplace_back(start, buf.steps.size() - start);
    const bool ended = buf.steps.size() > start && buf.steps.back().done;
    buf.bootstrap.push_back(ended || horizon == 0 ? 0.0 : net.evaluate(window_of(slot)).value);
  }
  return buf;
}

Minibatch make_minibatch(const RolloutBuffer& buffer, std::span<const std::size_t> index,
                         bool normalize_advantages) {
  if (!buffer.estimated) throw LengthMismatch("advantages not estimated");
  const std::size_t n = index.size();
  const std::size_t width = n == 0 ? 0 : buffer.steps[index[0]].window.size();
  Minibatch mb;
  mb.windows = Tensor2D(n, width);
  mb.raw = Tensor2D(n, 2);
  mb.logp_d_old = Tensor2D(n, 1);
  mb.logp_c_old = Tensor2D(n, 1);
  mb.advantages = Tensor2D(n, 1);
  mb.returns = Tensor2D(n, 1);
  mb.values_old = Tensor2D(n, 1);
  mb.branch.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const RolloutStep& s = buffer.steps[index[r]];
    std::copy(s.window.begin(), s.window.end(),
              mb.windows.storage().begin() + static_cast<std::ptrdiff_t>(r * width));
    mb.branch[r] = s.branch;
    mb.raw(r, 0) = s.raw[0];
    mb.raw(r, 1) = s.raw[1];
    mb.logp_d_old[r] = s.logp_d;
    mb.logp_c_old[r] = s.logp_c;
    mb.advantages[r] = buffer.advantages[index[r]];
    mb.returns[r] = buffer.returns[index[r]];
    mb.values_old[r] = s.value;
  }
  if (normalize_advantages && n > 1) {
    double mean = 0.0;
    for (double a : mb.advantages.values()) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : mb.advantages.values()) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (double& a : mb.advantages.values()) a = (a - mean) / (sd + 1e-8);
  }
  return mb;
}

namespace {

Var continuous_log_prob_graph(nn::Graph& g, const nn::PolicyOutputs& out, const Minibatch& mb,
                              const ActionBounds& bounds, LogProbMode mode) {
  Var raw = g.constant(mb.raw);
  Var inv_sigma = nn::exp(nn::scale(out.log_stds, -1.0));
  Var z = (raw - out.means) * inv_sigma;
  Var density = nn::add_scalar(nn::scale(nn::square(z), -0.5) - out.log_stds, -0.5 * kLog2Pi);
  if (mode == LogProbMode::kPreClip) return nn::sum_cols(density);

  const std::size_t n = mb.raw.rows();
  Tensor2D lo(n, 2), hi(n, 2), in_mask(n, 2), lo_mask(n, 2), hi_mask(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < 2; ++k) {
      const auto [l, h] = action_box(static_cast<int>(k), mb.branch[r], bounds);
      lo(r, k) = l;
      hi(r, k) = h;
      const double a = mb.raw(r, k);
      lo_mask(r, k) = a <= l ? 1.0 : 0.0;
      hi_mask(r, k) = (a > l && a >= h) ? 1.0 : 0.0;
      in_mask(r, k) = 1.0 - lo_mask(r, k) - hi_mask(r, k);
    }
  }
  Var lower_tail = nn::log_normal_cdf((g.constant(lo) - out.means) * inv_sigma);
  Var upper_tail = nn::log_normal_cdf((out.means - g.constant(hi)) * inv_sigma);
  Var mixed = g.constant(in_mask) * density + g.constant(lo_mask) * lower_tail +
              g.constant(hi_mask) * upper_tail;
  return nn::sum_cols(mixed);
}

}  // namespace

LossTerms hppo_loss(nn::Graph& g, nn::ActorCritic& net, const Minibatch& mb,
                    const TrainerConfig& cfg, const ActionBounds& bounds) {
  const nn::PolicyOutputs out = net.forward(g, mb.windows);
  LossTerms t;
  Var log_probs = nn::log_softmax_rows(out.logits);
  t.logp_d = nn::pick_cols(log_probs, mb.branch);
  t.logp_c = continuous_log_prob_graph(g, out, mb, bounds, cfg.log_prob_mode);
  t.h_d = nn::scale(nn::mean_all(nn::sum_cols(nn::exp(log_probs) * log_probs)), -1.0);
  t.h_c = nn::add_scalar(nn::scale(nn::sum_all(out.log_stds), 1.0 / static_cast<double>(out.log_stds.rows())),
                         static_cast<double>(nn::kContinuousDims) * 0.5 * (1.0 + kLog2Pi));
  t.j_d = clipped_policy_objective(t.logp_d, mb.logp_d_old, mb.advantages, cfg.clip_eps);
  t.j_c = clipped_policy_objective(t.logp_c, mb.logp_c_old, mb.advantages, cfg.clip_eps);
  t.l_bl = clipped_value_loss(out.value, mb.values_old, mb.returns, cfg.value_clip_eps);
  t.total = nn::scale(t.j_d, -1.0) - t.j_c + nn::scale(t.l_bl, cfg.value_coeff) -
            nn::scale(t.h_d + t.h_c, cfg.entropy_coeff);
  return t;
}

void write_learning_curve(std::ostream& out, const TrainingLog& log) {
  const auto old_precision = out.precision();
  out << "iteration,mean_return,mean_adr,loss_total,loss_value,entropy_d,entropy_c,lr\n"
      << std::setprecision(17);
  for (const LogRow& r : log.rows) {
    out << r.iteration << ',' << r.mean_return << ',' << r.mean_adr << ',' << r.loss_total << ','
        << r.loss_value << ',' << r.entropy_d << ',' << r.entropy_c << ',' << r.lr << '\n';
  }
  out.precision(old_precision);
}

namespace {

std::int64_t planned_updates(const TrainerConfig& cfg) {
  const std::int64_t samples = static_cast<std::int64_t>(cfg.horizon) * cfg.num_envs;
  const std::int64_t per_epoch = (samples + cfg.minibatch - 1) / cfg.minibatch;
  return std::max<std::int64_t>(1, per_epoch * cfg.epochs * cfg.iterations);
}

nn::OptimizerState make_optimizer(const TrainerConfig& cfg) {
  nn::OptimizerState o;
  o.base_lr = cfg.base_lr;
  o.clip_norm = cfg.clip_norm;
  o.total_steps = planned_updates(cfg);
  return o;
}

void dump_minibatch(const std::filesystem::path& dir, const Minibatch& mb) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "nonfinite_minibatch.csv");
  out << std::setprecision(17) << "row,branch,raw_v,raw_l,logp_d_old,logp_c_old,adv,ret,v_old,window\n";
  for (std::size_t r = 0; r < mb.branch.size(); ++r) {
    out << r << ',' << mb.branch[r] << ',' << mb.raw(r, 0) << ',' << mb.raw(r, 1) << ','
        << mb.logp_d_old[r] << ',' << mb.logp_c_old[r] << ',' << mb.advantages[r] << ','
        << mb.returns[r] << ',' << mb.values_old[r];
    for (std::size_t c = 0; c < mb.windows.cols(); ++c) out << ',' << mb.windows(r, c);
    out << '\n';
  }
}

}  // namespace

HppoTrainer::HppoTrainer(TrainerConfig cfg, EnvConfig env_cfg, nn::NetworkSpec spec)
    : cfg_((cfg.validate(), cfg)),
      env_cfg_(std::move(env_cfg)),
      net_(spec, cfg.seed),
      old_(net_),
      actor_opt_(make_optimizer(cfg_)),
      critic_opt_(make_optimizer(cfg_)),
      collector_(env_cfg_, cfg_.num_envs, spec.window, cfg.seed ^ 0x5eedULL),
      rng_(cfg.seed * 0x9e3779b97f4a7c15ULL + 7) {}

LogRow HppoTrainer::iterate() {
  ++iteration_;
  old_ = net_;
  buffer_ = collector_.collect(net_, cfg_.horizon, rng_, env_cfg_.bounds, cfg_.log_prob_mode);
  buffer_.estimate(cfg_.gamma, cfg_.gae_lambda, cfg_.bootstrap_truncation);

  LogRow row;
  row.iteration = iteration_;
  const auto& done = collector_.finished();
  row.episodes = static_cast<int>(done.size());
  if (!done.empty()) {
    double s = 0.0;
    int crashes = 0;
    for (const EpisodeStats& e : done) {
      s += e.ret;
      crashes += (e.reason == DoneReason::kCollision || e.reason == DoneReason::kOffRoad);
    }
    row.mean_return = s / static_cast<double>(done.size());
    row.collision_rate = static_cast<double>(crashes) / static_cast<double>(done.size());
  } else {
    row.mean_return = collector_.running_mean_return();
  }
  double adr_sum = 0.0;
  for (const RolloutStep& s : buffer_.steps) adr_sum += s.adr;
  row.mean_adr = buffer_.size() ? adr_sum / static_cast<double>(buffer_.size()) : 0.0;

  std::vector<std::size_t> order(buffer_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int updates = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.minibatch)) {
      const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(cfg_.minibatch),
                                                      order.size() - start);
      const Minibatch mb = make_minibatch(
          buffer_, std::span<const std::size_t>(order).subspan(start, count), cfg_.normalize_advantages);
      net_.actor().zero_grad();
      net_.critic().zero_grad();
      nn::Graph g;
      const LossTerms terms = hppo_loss(g, net_, mb, cfg_, env_cfg_.bounds);
      const double total = terms.total.scalar();
      if (!std::isfinite(total)) {
        dump_minibatch(out_dir_, mb);
        throw NonFiniteLoss("iteration " + std::to_string(iteration_) + ", epoch " +
                            std::to_string(epoch) + ", loss " + std::to_string(total));
      }
      g.backward(terms.total);
      nn::adam_step(net_.actor(), actor_opt_);
      nn::adam_step(net_.critic(), critic_opt_);
      row.loss_total += total;
      row.loss_value += terms.l_bl.scalar();
      row.entropy_d += terms.h_d.scalar();
      row.entropy_c += terms.h_c.scalar();
      ++updates;
      if (hook_) hook_(*this);
    }
  }
  if (updates > 0) {
    row.loss_total /= updates;
    row.loss_value /= updates;
    row.entropy_d /= updates;
    row.entropy_c /= updates;
  }
  row.lr = actor_opt_.lr();
  if (cfg_.checkpoint_every > 0 && !out_dir_.empty() && iteration_ % cfg_.checkpoint_every == 0) {
    std::filesystem::create_directories(out_dir_);
    net_.save(out_dir_ / ("checkpoint_" + std::to_string(iteration_) + ".bin"));
  }
  return row;
}

TrainingLog HppoTrainer::run(const std::function<void(const LogRow&)>& on_row) {
  TrainingLog log;
  for (int i = 0; i < cfg_.iterations; ++i) {
    log.rows.push_back(iterate());
    if (on_row) on_row(log.rows.back());
  }
  return log;
}

TrainingLog train(const TrainerConfig& cfg, const EnvConfig& env_cfg, const nn::NetworkSpec& spec,
                  const std::filesystem::path& out_dir) {
  HppoTrainer trainer(cfg, env_cfg, spec);
  trainer.set_output_dir(out_dir);
  TrainingLog log = trainer.run();
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream curve(out_dir / "learning_curve.csv");
    write_learning_curve(curve, log);
    trainer.network().save(out_dir / "checkpoint_final.bin");
  }
  return log;
}

namespace {

template <typename Choose>
EpisodeRun run_episode(HighwayEnv& env, std::uint64_t seed, std::size_t window, Choose choose) {
  EpisodeRun run;
  std::deque<Observation> history;
  history.push_back(env.reset(seed));
  double adr_sum = 0.0;
  while (!env.done()) {
    std::vector<Observation> hist(history.begin(), history.end());
    const StepResult r = env.step(choose(hist));
    run.stats.ret += r.reward.total;
    adr_sum += r.info.adr;
    ++run.stats.length;
    run.stats.reason = r.info.reason;
    history.push_back(r.obs);
    if (history.size() > window) history.pop_front();
  }
  run.stats.mean_adr = run.stats.length ? adr_sum / run.stats.length : 0.0;
  run.log = env.log();
  return run;
}

}  // namespace

EpisodeRun run_policy_episode(HighwayEnv& env, nn::ActorCritic& net, std::uint64_t seed,
                              bool greedy, std::mt19937_64& rng) {
  const std::size_t window = net.spec().window;
  const ActionBounds bounds = env.config().bounds;
  return run_episode(env, seed, window, [&](const std::vector<Observation>& hist) {
    // Same zero-padded layout as training.
    std::vector<Observation> padded(window - std::min(window, hist.size()));
    padded.insert(padded.end(), hist.end() - static_cast<std::ptrdiff_t>(std::min(window, hist.size())),
                  hist.end());
    const nn::PolicyValues pv = nn::forward_actor(net, padded);
    if (greedy) return greedy_action(pv, bounds);
    return sample_hybrid_action(pv.logits, pv.means, pv.log_stds, rng, bounds).action;
  });
}

EpisodeRun run_random_episode(HighwayEnv& env, std::uint64_t seed, std::mt19937_64& rng) {
  const ActionBounds b = env.config().bounds;
  return run_episode(env, seed, 1, [&](const std::vector<Observation>&) {
    std::uniform_int_distribution<int> branch(0, 2);
    std::uniform_real_distribution<double> av(-b.a_long_max, b.a_long_max);
    std::uniform_real_distribution<double> al(-b.a_lat_max, b.a_lat_max);
    const int br = branch(rng);
    const double v = av(rng);
    const double l = al(rng);
    return constrain_action(static_cast<Branch>(br), v, l, b);
  });
}

}  // namespace hwrisk
