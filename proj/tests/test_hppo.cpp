#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>

#include "hwrisk/errors.hpp"
#include "hwrisk/gradcheck.hpp"
#include "hwrisk/hppo.hpp"
#include "oracles.hpp"

using namespace hwrisk;

namespace {

EnvConfig small_env() {
  EnvConfig c;
  c.sim.highway.length = 500.0;
  c.sim.highway.arrival_rate = 0.3;
  c.sim.highway.warmup = 10.0;
  c.max_steps = 40;
  c.insert_x_min = 20.0;
  c.insert_x_max = 100.0;
  c.insert_min_gap = 10.0;
  return c;
}

nn::NetworkSpec small_net() {
  nn::NetworkSpec s;
  s.dense1 = 8;
  s.dense2 = 8;
  s.lstm = 8;
  s.dense3 = 8;
  s.window = 3;
  return s;
}

TrainerConfig small_trainer(std::uint64_t seed = 3) {
  TrainerConfig t;
  t.horizon = 64;
  t.iterations = 2;
  t.minibatch = 16;
  t.epochs = 2;
  t.seed = seed;
  return t;
}

std::vector<double> uniform_vec(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::unique_ptr<bool[]> as_bools(const std::vector<bool>& d) {
  std::unique_ptr<bool[]> out(new bool[d.size()]);
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i];
  return out;
}

}  // namespace

TEST_CASE("gae collapses for lambda 0 and single steps") {
  std::mt19937_64 rng(1);
  const auto r = uniform_vec(6, rng, -1, 1), v = uniform_vec(6, rng, -1, 1);
  const std::vector<bool> d{false, false, true, false, false, false};
  auto db = as_bools(d);
  const double boot = 0.4, gamma = 0.9;
  const auto [adv, ret] = gae_advantages(r, v, std::span<const bool>(db.get(), 6), boot, gamma, 0.0);
  for (std::size_t t = 0; t < 6; ++t) {
    const double next = d[t] ? 0.0 : (t + 1 < 6 ? v[t + 1] : boot);
    CHECK(adv[t] == doctest::Approx(r[t] + gamma * next - v[t]).epsilon(1e-14));
    CHECK(ret[t] - v[t] == adv[t]);
  }
  const bool one[] = {false};
  const auto [a1, r1] = gae_advantages(std::span(r).first(1), std::span(v).first(1), one, boot, gamma, 0.7);
  CHECK(a1[0] == doctest::Approx(r[0] + gamma * boot - v[0]).epsilon(1e-14));
}

TEST_CASE("gae matches the nested-sum oracle with episode resets") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(1, 10);
  std::bernoulli_distribution coin(0.25);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = static_cast<std::size_t>(len(rng));
    const auto r = uniform_vec(n, rng, -5, 5), v = uniform_vec(n, rng, -5, 5);
    std::vector<bool> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = coin(rng);
    const double boot = uniform_vec(1, rng, -5, 5)[0];
    const double gamma = uniform_vec(1, rng, 0.5, 1.0)[0], lambda = uniform_vec(1, rng, 0, 1)[0];
    auto db = as_bools(d);
    const auto [adv, ret] = gae_advantages(r, v, std::span<const bool>(db.get(), n), boot, gamma, lambda);
    const auto want = oracle::gae_bruteforce(r, v, d, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      REQUIRE(std::abs(adv[t] - want[t]) <= 1e-12 * std::max(1.0, std::abs(want[t])));
      REQUIRE(ret[t] == adv[t] + v[t]);
    }
  }
}

TEST_CASE("gae rejects mismatched lengths") {
  const std::vector<double> r{1, 2}, v{1};
  const bool d[] = {false, false};
  CHECK_THROWS_AS(gae_advantages(r, v, d, 0.0, 0.9, 0.9), LengthMismatch);
}

TEST_CASE("clipped policy objective") {
  const std::vector<double> lp{-1.0, -0.5, -2.0}, adv{1.0, -2.0, 0.5};
  CHECK(clipped_policy_objective(lp, lp, adv, 0.2) == doctest::Approx((1.0 - 2.0 + 0.5) / 3.0));
  const double eps = 0.2;
  const std::vector<double> old{0.0}, up{std::log(1.0 + 2 * eps)}, a{3.0};
  CHECK(clipped_policy_objective(up, old, a, eps) == doctest::Approx((1.0 + eps) * 3.0).epsilon(1e-14));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 17;
    const auto ln = uniform_vec(n, rng, -3, 0), lo = uniform_vec(n, rng, -3, 0);
    const auto ad = uniform_vec(n, rng, -4, 4);
    double want = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double rho = std::exp(ln[i] - lo[i]);
      const double c = rho < 1 - eps ? 1 - eps : (rho > 1 + eps ? 1 + eps : rho);
      want += std::min(rho * ad[i], c * ad[i]);
    }
    want /= static_cast<double>(n);
    REQUIRE(std::abs(clipped_policy_objective(ln, lo, ad, eps) - want) <= 1e-12 * std::max(1.0, std::abs(want)));
  }
  CHECK_THROWS_AS(clipped_policy_objective(lp, old, adv, 0.2), LengthMismatch);
}

TEST_CASE("clipped policy terms never exceed the clip bound") {
  std::mt19937_64 rng(5);
  const double eps = 0.2;
  for (int i = 0; i < 10000; ++i) {
    const auto x = uniform_vec(3, rng, -3, 3);
    const std::vector<double> ln{x[0]}, lo{x[1]}, ad{x[2]};
    const double rho = std::exp(x[0] - x[1]);
    const double term = clipped_policy_objective(ln, lo, ad, eps);
    REQUIRE(term <= std::max({rho * x[2], (1 + eps) * x[2], (1 - eps) * x[2]}) + 1e-15);
    if (x[2] > 0) REQUIRE(term <= (1 + eps) * x[2] + 1e-15);
  }
}

TEST_CASE("clipped value loss") {
  const std::vector<double> v{1.0, -2.0, 3.5};
  CHECK(clipped_value_loss(v, v, v, 0.2) == 0.0);
  const std::vector<double> vn{1.1, 0.95}, vo{1.0, 1.0}, rt{2.0, -1.0};
  const double plain = (0.9 * 0.9 + 1.95 * 1.95) / 2.0;
  CHECK(clipped_value_loss(vn, vo, rt, 0.2) == doctest::Approx(plain).epsilon(1e-14));

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 13;
    const auto a = uniform_vec(n, rng, -3, 3), b = uniform_vec(n, rng, -3, 3), r = uniform_vec(n, rng, -3, 3);
    const double eps = 0.3;
    double want = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[i] - b[i];
      const double vc = b[i] + (d < -eps ? -eps : (d > eps ? eps : d));
      want += std::max((r[i] - a[i]) * (r[i] - a[i]), (r[i] - vc) * (r[i] - vc));
    }
    want /= static_cast<double>(n);
    REQUIRE(std::abs(clipped_value_loss(a, b, r, eps) - want) <= 1e-12 * std::max(1.0, want));
  }
}

TEST_CASE("total loss composition") {
  CHECK(total_loss(1, 2, 4, 0.5, 0.5) == doctest::Approx(-1.01).epsilon(1e-14));
  const double hc = 1.7;
  CHECK(total_loss(0, 0, 0, std::log(3.0), hc) == doctest::Approx(-0.01 * (std::log(3.0) + hc)));
  const double base = total_loss(0.3, -0.2, 2.0, 0.9, 1.1, 0.5);
  const double twice = total_loss(0.3, -0.2, 2.0, 0.9, 1.1, 1.0);
  CHECK(twice - base == doctest::Approx(0.5 * 2.0));
}

TEST_CASE("hybrid action sampling") {
  const ActionBounds b;
  std::mt19937_64 rng(8);
  const std::vector<double> means{0.4, -0.3}, ls{-20.0, -20.0};
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::vector<double> logits{-50.0, 50.0, -50.0};
    const SampledAction s = sample_hybrid_action(logits, means, ls, rng, b);
    hits += s.branch == 1;
    REQUIRE(std::abs(s.raw[0] - means[0]) < 1e-6);
    REQUIRE(std::abs(s.raw[1] - means[1]) < 1e-6);
  }
  CHECK(hits == 10000);

  const std::vector<double> flat{0.0, 0.0, 0.0}, unit{0.0, 0.0};
  std::array<int, 3> count{};
  for (int i = 0; i < 10000; ++i) {
    const SampledAction s = sample_hybrid_action(flat, means, unit, rng, b);
    ++count[static_cast<std::size_t>(s.branch)];
    REQUIRE(s.logp_d == doctest::Approx(-std::log(3.0)));
    const HybridAction want = constrain_action(static_cast<Branch>(s.branch), s.raw[0], s.raw[1], b);
    REQUIRE(s.action.a_vertical == want.a_vertical);
    REQUIRE(s.action.a_lateral == want.a_lateral);
  }
  const double sigma = std::sqrt(10000.0 * (1.0 / 3.0) * (2.0 / 3.0));
  for (int c : count) CHECK(std::abs(c - 10000.0 / 3.0) < 3 * sigma);

  const std::vector<double> two{0.0, 0.0};
  CHECK_THROWS_AS(sample_hybrid_action(two, means, ls, rng, b), ShapeMismatch);
}

TEST_CASE("continuous log-probability is the Gaussian density of the raw sample") {
  const ActionBounds b;
  const std::vector<double> raw{5.0, 0.1}, mu{0.5, -0.2}, ls{std::log(0.7), std::log(1.3)};
  double want = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double s = std::exp(ls[k]);
    want += -0.5 * std::pow((raw[k] - mu[k]) / s, 2) - std::log(s * std::sqrt(2 * std::numbers::pi));
  }
  CHECK(continuous_log_prob(raw, mu, ls, 1, b, LogProbMode::kPreClip) == doctest::Approx(want).epsilon(1e-13));
  // Beyond the box the clipped-density variant carries the tail mass.
  const double tail = std::log(0.5 * std::erfc((b.a_long_max - mu[0]) / 0.7 / std::numbers::sqrt2));
  const double in1 = -0.5 * std::pow((raw[1] - mu[1]) / 1.3, 2) - std::log(1.3 * std::sqrt(2 * std::numbers::pi));
  CHECK(continuous_log_prob(raw, mu, ls, 1, b, LogProbMode::kClippedDensity) ==
        doctest::Approx(tail + in1).epsilon(1e-12));
}

TEST_CASE("loss gradients agree with finite differences") {
  for (auto m : {nn::GradModule::kPolicyObjective, nn::GradModule::kValueLoss,
                 nn::GradModule::kEntropy, nn::GradModule::kTotalLoss}) {
    const nn::GradCheckReport rep = nn::gradient_check(m, 20, 11);
    INFO(rep.module << " max rel " << rep.max_rel_error);
    CHECK(rep.passed());
  }
}

TEST_CASE("rollout collector shapes and determinism") {
  const EnvConfig env = small_env();
  nn::ActorCritic net(small_net(), 5);
  const ActionBounds b;
  {
    RolloutCollector c(env, 2, 3, 9);
    std::mt19937_64 rng(1);
    const RolloutBuffer buf = c.collect(net, 0, rng, b, LogProbMode::kPreClip);
    CHECK(buf.size() == 0);
  }
  auto run = [&] {
    RolloutCollector c(env, 2, 3, 9);
    std::mt19937_64 rng(1);
    return c.collect(net, 50, rng, b, LogProbMode::kPreClip);
  };
  const RolloutBuffer a = run(), z = run();
  REQUIRE(a.size() == 100);
  REQUIRE(a.segments.size() == 2);
  bool any_done = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.steps[i].window == z.steps[i].window);
    REQUIRE(a.steps[i].reward == z.steps[i].reward);
    REQUIRE(a.steps[i].logp_c == z.steps[i].logp_c);
    REQUIRE(a.steps[i].window.size() == 3u * kObservationSize);
    any_done = any_done || a.steps[i].done;
  }
  // 40-step episodes within a 50-step horizon: the window restarts zero padded.
  CHECK(any_done);
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (!a.steps[i - 1].done || i == 50) continue;
    const auto& w = a.steps[i].window;
    CHECK(std::all_of(w.begin(), w.begin() + 2 * kObservationSize, [](double x) { return x == 0.0; }));
  }
}

TEST_CASE("truncated episodes bootstrap from the final state") {
  RolloutBuffer buf;
  RolloutStep s;
  s.reward = 1.0;
  s.value = 0.5;
  s.done = true;
  s.truncated = true;
  s.truncation_value = 10.0;
  buf.steps.push_back(s);
  buf.segments.emplace_back(0, 1);
  buf.bootstrap.push_back(0.0);
  buf.estimate(0.9, 0.95, true);
  CHECK(buf.advantages[0] == doctest::Approx(1.0 + 9.0 - 0.5));
  buf.estimate(0.9, 0.95, false);
  CHECK(buf.advantages[0] == doctest::Approx(0.5));
}

TEST_CASE("zero iterations leave the initialisation untouched") {
  TrainerConfig t = small_trainer();
  t.iterations = 0;
  HppoTrainer tr(t, small_env(), small_net());
  const TrainingLog log = tr.run();
  CHECK(log.rows.empty());
  nn::ActorCritic fresh(small_net(), t.seed);
  CHECK(tr.network().actor().flat_values() == fresh.actor().flat_values());
  CHECK(tr.network().critic().flat_values() == fresh.critic().flat_values());
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto run = [] {
    HppoTrainer tr(small_trainer(), small_env(), small_net());
    return std::pair{tr.run(), tr.network().actor().flat_values()};
  };
  const auto [la, pa] = run();
  const auto [lb, pb] = run();
  REQUIRE(la.rows.size() == 2);
  for (std::size_t i = 0; i < la.rows.size(); ++i) {
    CHECK(la.rows[i].mean_return == lb.rows[i].mean_return);
    CHECK(la.rows[i].loss_total == lb.rows[i].loss_total);
    CHECK(la.rows[i].entropy_c == lb.rows[i].entropy_c);
  }
  CHECK(pa == pb);
  CHECK(std::isfinite(la.rows.back().loss_total));
}

TEST_CASE("first-epoch ratios are one and the old policy stays frozen") {
  TrainerConfig t = small_trainer();
  t.epochs = 0;
  HppoTrainer tr(t, small_env(), small_net());
  tr.iterate();
  const RolloutBuffer& buf = tr.last_buffer();
  std::vector<std::size_t> all(buf.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Minibatch mb = make_minibatch(buf, all, false);
  nn::Graph g;
  const LossTerms terms = hppo_loss(g, tr.network(), mb, t, ActionBounds{});
  for (std::size_t i = 0; i < buf.size(); ++i) {
    REQUIRE(std::abs(std::exp(terms.logp_d.value()[i] - mb.logp_d_old[i]) - 1.0) < 1e-9);
    REQUIRE(std::abs(std::exp(terms.logp_c.value()[i] - mb.logp_c_old[i]) - 1.0) < 1e-9);
  }

  // GAE identity on the stored buffer.
  for (std::size_t i = 0; i < buf.size(); ++i) {
    REQUIRE(buf.returns[i] - buf.steps[i].value == doctest::Approx(buf.advantages[i]).epsilon(1e-12));
  }

  TrainerConfig u = small_trainer();
  HppoTrainer tr2(u, small_env(), small_net());
  std::vector<double> snapshot;
  int iter = -1;
  bool frozen = true, moved = false;
  tr2.set_update_hook([&](const HppoTrainer& h) {
    const auto now = h.old_policy().actor().flat_values();
    if (h.iteration() != iter) {
      iter = h.iteration();
      snapshot = now;
    }
    frozen = frozen && now == snapshot;
    moved = moved || h.old_policy().actor().flat_values() != tr2.network().actor().flat_values();
  });
  tr2.run();
  CHECK(frozen);
  CHECK(moved);
}

TEST_CASE("categorical entropy stays within [0, ln 3]") {
  HppoTrainer tr(small_trainer(), small_env(), small_net());
  for (const LogRow& r : tr.run().rows) {
    CHECK(r.entropy_d >= 0.0);
    CHECK(r.entropy_d <= std::log(3.0) + 1e-12);
  }
}

TEST_CASE("trainer config validation") {
  TrainerConfig t;
  t.gamma = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainerConfig{};
  t.gae_lambda = 1.5;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainerConfig{};
  t.clip_eps = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}
