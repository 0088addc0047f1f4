#include "qvrl/sde_sim.hpp"

#include <cmath>
#include <string>

#include "qvrl/errors.hpp"
#include "qvrl/lq_bench.hpp"
#include "qvrl/merton_bench.hpp"

namespace qvrl {

TimeGrid::TimeGrid(double t0, double horizon, double dt) : t0_(t0), horizon_(horizon), dt_(dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionViolation("TimeGrid: dt must be > 0");
  if (!(horizon > t0)) throw PreconditionViolation("TimeGrid: horizon must exceed t0");
  const double ratio = (horizon - t0) / dt;
  const double k = std::round(ratio);
  if (k < 1.0 || std::abs(ratio - k) > 1e-9 * std::max(1.0, k))
    throw PreconditionViolation("TimeGrid: (T - t0)/dt = " + std::to_string(ratio) +
                                " is not an integer");
  steps_ = static_cast<std::size_t>(k);
}

double TimeGrid::time(std::size_t k) const noexcept {
  if (k >= steps_) return horizon_;
  return t0_ + static_cast<double>(k) * dt_;
}

void Environment::validate() const {
  if (!drift || !diffusion || !reward_rate || !terminal_payoff)
    throw PreconditionViolation("Environment: missing callback");
  if (state_dim == 0 || action_dim == 0 || noise_dim == 0)
    throw PreconditionViolation("Environment: zero dimension");
  if (initial_state.size() != state_dim)
    throw PreconditionViolation("Environment: initial_state has wrong dimension");
  if (!(reward_noise_std >= 0.0)) throw PreconditionViolation("Environment: reward_noise_std < 0");
}

namespace {

[[noreturn]] void diverged(const char* what, double t, std::span<const double> x,
                           std::span<const double> a) {
  throw SimulationDivergence(what, t, {x.begin(), x.end()}, {a.begin(), a.end()});
}

bool all_finite(std::span<const double> v) {
  for (double e : v)
    if (!std::isfinite(e)) return false;
  return true;
}

}  // namespace

void euler_step(const Environment& env, double t, std::span<const double> x,
                std::span<const double> a, std::span<const double> dw, double dt,
                std::span<double> out, StepWorkspace& ws) {
  if (!(dt > 0.0)) throw PreconditionViolation("euler_step: dt must be > 0");
  const std::size_t d = env.state_dim;
  const std::size_t p = env.noise_dim;
  env.drift(t, x, a, ws.drift);
  env.diffusion(t, x, a, ws.diffusion);
  if (!all_finite(ws.drift)) diverged("non-finite drift", t, x, a);
  if (!all_finite(ws.diffusion)) diverged("non-finite diffusion", t, x, a);
  for (std::size_t i = 0; i < d; ++i) {
    double v = x[i] + ws.drift[i] * dt;
    for (std::size_t j = 0; j < p; ++j) v += ws.diffusion[i * p + j] * dw[j];
    out[i] = v;
  }
  if (!all_finite(out.first(d))) diverged("non-finite state", t, x, a);
}

std::vector<double> euler_step(const Environment& env, double t, std::span<const double> x,
                               std::span<const double> a, std::span<const double> dw, double dt) {
  StepWorkspace ws(env);
  std::vector<double> out(env.state_dim);
  euler_step(env, t, x, a, dw, dt, out, ws);
  return out;
}

Trajectory simulate_episode(const Environment& env, const TimeGrid& grid,
                            const PolicySampler& policy, RngStream& rng) {
  const std::size_t K = grid.steps();
  if (K == 0) throw PreconditionViolation("simulate_episode: empty grid");
  const std::size_t d = env.state_dim;
  const std::size_t m = env.action_dim;
  const std::size_t p = env.noise_dim;

  Trajectory tr;
  tr.state_dim = d;
  tr.action_dim = m;
  tr.times.resize(K + 1);
  tr.states.resize((K + 1) * d);
  tr.actions.resize(K * m);
  tr.rewards.resize(K);
  for (std::size_t k = 0; k <= K; ++k) tr.times[k] = grid.time(k);
  std::copy(env.initial_state.begin(), env.initial_state.end(), tr.states.begin());

  StepWorkspace ws(env);
  std::vector<double> dw(p);
  const double sdt = std::sqrt(grid.dt());
  for (std::size_t k = 0; k < K; ++k) {
    const double t = tr.times[k];
    std::span<const double> x(tr.states.data() + k * d, d);
    std::span<double> a(tr.actions.data() + k * m, m);
    policy(t, x, rng, a);
    for (auto& w : dw) w = sdt * rng.normal();
    const double rate = env.reward_rate(t, x, a);
    if (!std::isfinite(rate)) diverged("non-finite reward", t, x, a);
    tr.rewards[k] = env.reward_noise_std > 0.0 ? rate + env.reward_noise_std * rng.normal() : rate;
    euler_step(env, t, x, a, dw, grid.dt(), {tr.states.data() + (k + 1) * d, d}, ws);
  }
  tr.terminal = env.terminal_payoff(tr.state(K));
  return tr;
}

Environment merton_log_wealth_env(const MarketConfig& cfg) {
  cfg.validate();
  Environment env;
  const double mu = cfg.mu, sigma = cfg.sigma, r = cfg.r;
  env.drift = [=](double, std::span<const double>, std::span<const double> a,
                  std::span<double> out) {
    out[0] = r + (mu - r) * a[0] - 0.5 * sigma * sigma * a[0] * a[0];
  };
  env.diffusion = [=](double, std::span<const double>, std::span<const double> a,
                      std::span<double> out) { out[0] = sigma * a[0]; };
  env.reward_rate = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  env.terminal_payoff = [](std::span<const double> x) { return x[0]; };
  env.initial_state = {std::log(cfg.x0)};
  return env;
}

Environment lq_env(const LqCoefficients& c, double reward_noise_std, double x0) {
  Environment env;
  env.drift = [c](double, std::span<const double> x, std::span<const double> a,
                  std::span<double> out) { out[0] = c.A * x[0] + c.B * a[0]; };
  env.diffusion = [c](double, std::span<const double> x, std::span<const double> a,
                      std::span<double> out) { out[0] = c.C * x[0] + c.D * a[0]; };
  env.reward_rate = [c](double, std::span<const double> x, std::span<const double> a) {
    return lq_reward_rate(c, x[0], a[0]);
  };
  env.terminal_payoff = [](std::span<const double>) { return 0.0; };
  env.reward_noise_std = reward_noise_std;
  env.initial_state = {x0};
  return env;
}

}  // namespace qvrl
