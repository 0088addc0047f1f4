#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "qvrl/errors.hpp"
#include "qvrl/lq_bench.hpp"
#include "qvrl/merton_bench.hpp"
#include "qvrl/sde_sim.hpp"

using namespace qvrl;

namespace {

PolicySampler constant_action(double value) {
  return [value](double, std::span<const double>, RngStream&, std::span<double> a) {
    a[0] = value;
  };
}

// Wealth level X itself, so Euler carries a genuine discretization error.
Environment gbm_level_env(const MarketConfig& m, double action) {
  Environment env;
  env.drift = [m, action](double, std::span<const double> x, std::span<const double>,
                          std::span<double> out) {
    out[0] = x[0] * (m.r + (m.mu - m.r) * action);
  };
  env.diffusion = [m, action](double, std::span<const double> x, std::span<const double>,
                              std::span<double> out) { out[0] = x[0] * m.sigma * action; };
  env.reward_rate = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  env.terminal_payoff = [](std::span<const double> x) { return x[0]; };
  env.initial_state = {1.0};
  return env;
}

}  // namespace

TEST(TimeGrid, EndsExactlyAtHorizon) {
  const TimeGrid g(0.0, 1.0, 0.01);
  EXPECT_EQ(g.steps(), 100u);
  EXPECT_EQ(g.time(0), 0.0);
  EXPECT_EQ(g.time(100), 1.0);
  EXPECT_NEAR(g.time(37), 0.37, 1e-15);
}

TEST(TimeGrid, RejectsEmptyOrInvalid) {
  EXPECT_THROW(TimeGrid(0.0, 0.0, 0.01), PreconditionViolation);
  EXPECT_THROW(TimeGrid(0.0, 1.0, 0.0), PreconditionViolation);
  EXPECT_THROW(TimeGrid(1.0, 0.5, 0.01), PreconditionViolation);
}

TEST(EulerStep, RisklessDriftOnly) {
  const auto env = merton_log_wealth_env(MarketConfig{});
  const std::vector<double> x{0.0}, a{0.0}, dw{0.0};
  EXPECT_NEAR(euler_step(env, 0.0, x, a, dw, 0.01)[0], 0.0002, 1e-18);
}

TEST(EulerStep, LqDriftIsBTimesAction) {
  const auto env = lq_env(LqCoefficients{}, 0.0);
  const std::vector<double> x{0.0}, a{1.0}, dw{0.0};
  EXPECT_NEAR(euler_step(env, 0.0, x, a, dw, 0.01)[0], 0.01, 1e-18);
}

TEST(EulerStep, MertonOptimalFraction) {
  const auto env = merton_log_wealth_env(MarketConfig{});
  const std::vector<double> x{0.0}, a{4.0 / 9.0}, dw{0.05};
  EXPECT_NEAR(euler_step(env, 0.0, x, a, dw, 0.01)[0], 0.0071333333333333335, 1e-16);
}

TEST(EulerStep, NonFiniteCoefficientsCarryContext) {
  Environment env = lq_env(LqCoefficients{}, 0.0);
  env.drift = [](double, std::span<const double>, std::span<const double>, std::span<double> o) {
    o[0] = std::nan("");
  };
  const std::vector<double> x{0.5}, a{2.0}, dw{0.0};
  try {
    euler_step(env, 0.25, x, a, dw, 0.01);
    FAIL() << "expected SimulationDivergence";
  } catch (const SimulationDivergence& e) {
    EXPECT_EQ(e.time(), 0.25);
    EXPECT_EQ(e.state(), x);
    EXPECT_EQ(e.action(), a);
  }
}

TEST(SimulateEpisode, NoiselessRewardsEqualRewardRate) {
  const MarketConfig m;
  Environment env = merton_log_wealth_env(m);
  env.reward_rate = [](double, std::span<const double> x, std::span<const double>) {
    return 2.0 * x[0] + 1.0;
  };
  RngStream rng(1, 0);
  const auto tr = simulate_episode(env, TimeGrid(0.0, 1.0, 0.01), constant_action(0.0), rng);
  ASSERT_EQ(tr.steps(), 100u);
  for (std::size_t k = 0; k < tr.steps(); ++k)
    EXPECT_EQ(tr.rewards[k], 2.0 * tr.state(k)[0] + 1.0);
}

TEST(SimulateEpisode, SameSeedIsBitwiseIdentical) {
  const auto env = lq_env(LqCoefficients{}, 0.1);
  const GaussianPolicy pol(0.0, 0.0, 1.0);
  const PolicySampler sampler = [&](double, std::span<const double> x, RngStream& r,
                                    std::span<double> a) { a[0] = pol.sample(x[0], r); };
  RngStream r1(42, 3), r2(42, 3), r3(43, 3);
  const TimeGrid g(0.0, 2.0, 0.01);
  const auto t1 = simulate_episode(env, g, sampler, r1);
  const auto t2 = simulate_episode(env, g, sampler, r2);
  const auto t3 = simulate_episode(env, g, sampler, r3);
  EXPECT_TRUE(t1 == t2);
  EXPECT_FALSE(t1 == t3);
}

TEST(SimulateEpisode, RewardNoiseIsCentred) {
  const LqCoefficients c;
  const double dt = 0.01;
  RngStream rng(5, 0);
  const auto tr = generate_behavior_data(c, GaussianPolicy(0.0, 0.0, 1.0), 100.0, dt, rng);
  ASSERT_EQ(tr.steps(), 10000u);
  double sum = 0.0;
  for (std::size_t k = 0; k < tr.steps(); ++k)
    sum += tr.rewards[k] - lq_reward_rate(c, tr.state(k)[0], tr.action(k)[0]);
  const double mean = sum / static_cast<double>(tr.steps());
  // observed - exact ~ N(0, dt): 3 standard errors over 1e4 draws
  EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(dt) / 100.0);
}

TEST(QuadraticVariation, Increments) {
  EXPECT_NEAR(quadratic_variation_increment(1.1, 1.0), 0.01, 1e-15);
  EXPECT_EQ(quadratic_variation_increment(3.7, 3.7), 0.0);
}

namespace {

std::vector<double> log_wealth_qv(double dt, std::size_t paths) {
  const auto env = merton_log_wealth_env(MarketConfig{});
  const TimeGrid g(0.0, 1.0, dt);
  const RngStream base(11, 0);
  std::vector<double> qv(paths);
  for (std::size_t i = 0; i < paths; ++i) {
    RngStream r = base.substream(i);
    const auto tr = simulate_episode(env, g, constant_action(1.0), r);
    double s = 0.0;
    for (std::size_t k = 0; k < tr.steps(); ++k)
      s += quadratic_variation_increment(tr.state(k + 1)[0], tr.state(k)[0]);
    qv[i] = s;
  }
  return qv;
}

}  // namespace

TEST(QuadraticVariation, LogWealthMatchesVolatility) {
  const auto qv = log_wealth_qv(0.01, 1000);
  const double mean = std::accumulate(qv.begin(), qv.end(), 0.0) / 1000.0;
  EXPECT_NEAR(mean, 0.09, 0.05 * 0.09);
}

TEST(QuadraticVariation, MeanAbsoluteErrorShrinksWithStep) {
  auto mae = [](const std::vector<double>& qv) {
    double s = 0.0;
    for (double v : qv) s += std::abs(v - 0.09);
    return s / static_cast<double>(qv.size());
  };
  const double coarse = mae(log_wealth_qv(0.01, 1000));
  const double fine = mae(log_wealth_qv(0.005, 1000));
  EXPECT_LT(fine, coarse);
}

TEST(StrongOrder, HalvingStepShrinksErrorBySqrtTwo) {
  const MarketConfig m;
  const double action = 1.0;
  const auto env = gbm_level_env(m, action);
  auto rms = [&](double dt) {
    const TimeGrid g(0.0, 1.0, dt);
    const RngStream base(17, 0);
    double s = 0.0;
    const std::size_t paths = 2000;
    for (std::size_t i = 0; i < paths; ++i) {
      RngStream r = base.substream(i);
      const auto tr = simulate_episode(env, g, constant_action(action), r);
      // Recover the Brownian path from the Euler increments.
      double w = 0.0;
      for (std::size_t k = 0; k < tr.steps(); ++k) {
        const double x = tr.state(k)[0];
        w += (tr.state(k + 1)[0] - x - x * (m.r + (m.mu - m.r) * action) * dt) /
             (x * m.sigma * action);
      }
      const double drift = m.r + (m.mu - m.r) * action - 0.5 * m.sigma * m.sigma;
      const double exact = std::exp(drift + m.sigma * action * w);
      const double err = std::log(tr.state(tr.steps())[0]) - std::log(exact);
      s += err * err;
    }
    return std::sqrt(s / static_cast<double>(paths));
  };
  const double ratio = rms(0.005) / rms(0.01);
  EXPECT_GE(ratio, 0.55);
  EXPECT_LE(ratio, 0.9);
}

TEST(StrongOrder, LogWealthEulerIsExactForConstantAction) {
  const MarketConfig m;
  const auto env = merton_log_wealth_env(m);
  RngStream r(3, 0);
  const auto tr = simulate_episode(env, TimeGrid(0.0, 1.0, 0.01), constant_action(0.7), r);
  double w = 0.0;
  const double drift = m.r + (m.mu - m.r) * 0.7 - 0.5 * m.sigma * m.sigma * 0.49;
  for (std::size_t k = 0; k < tr.steps(); ++k)
    w += (tr.state(k + 1)[0] - tr.state(k)[0] - drift * 0.01) / (m.sigma * 0.7);
  EXPECT_NEAR(tr.state(100)[0], drift + m.sigma * 0.7 * w, 1e-12);
}
