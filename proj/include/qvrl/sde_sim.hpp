#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qvrl/rng.hpp"

namespace qvrl {

/// Uniform time grid t0 < t0+dt < ... < T with K steps.
class TimeGrid {
 public:
  /// Throws PreconditionViolation unless dt > 0, T > t0 and (T - t0)/dt is
  /// an integer up to rounding.
  TimeGrid(double t0, double horizon, double dt);

  double t0() const noexcept { return t0_; }
  double horizon() const noexcept { return horizon_; }
  double dt() const noexcept { return dt_; }
  std::size_t steps() const noexcept { return steps_; }
  /// Grid point k in [0, K]; the last point is exactly the horizon.
  double time(std::size_t k) const noexcept;

 private:
  double t0_;
  double horizon_;
  double dt_;
  std::size_t steps_;
};

using VecFn = std::function<void(double t, std::span<const double> x, std::span<const double> a,
                                 std::span<double> out)>;
using ScalarFn =
    std::function<double(double t, std::span<const double> x, std::span<const double> a)>;

/// Controlled diffusion dX = drift dt + diffusion dW with running reward
/// rate and terminal payoff. `diffusion` fills a row-major state_dim x
/// noise_dim matrix.
struct Environment {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::size_t noise_dim = 1;
  VecFn drift;
  VecFn diffusion;
  ScalarFn reward_rate;
  std::function<double(std::span<const double> x)> terminal_payoff;
  double reward_noise_std = 0.0;
  std::vector<double> initial_state;

  /// Throws PreconditionViolation on missing callbacks or bad dimensions.
  void validate() const;
};

/// One sampled path. States are stored flat, (K+1) x state_dim.
struct Trajectory {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::vector<double> times;
  std::vector<double> states;
  std::vector<double> actions;
  std::vector<double> rewards;
  double terminal = 0.0;

  std::size_t steps() const noexcept { return rewards.size(); }
  std::span<const double> state(std::size_t k) const {
    return {states.data() + k * state_dim, state_dim};
  }
  std::span<const double> action(std::size_t k) const {
    return {actions.data() + k * action_dim, action_dim};
  }

  bool operator==(const Trajectory&) const = default;
};

/// Draws an action of size action_dim into `out`.
using PolicySampler = std::function<void(double t, std::span<const double> x, RngStream& rng,
                                         std::span<double> out)>;

/// Scratch buffers reused across steps of one episode.
struct StepWorkspace {
  std::vector<double> drift;
  std::vector<double> diffusion;
  explicit StepWorkspace(const Environment& env)
      : drift(env.state_dim), diffusion(env.state_dim * env.noise_dim) {}
};

/// x + drift*dt + diffusion*dw written into `out`. Throws
/// SimulationDivergence if any coefficient or the result is non-finite.
void euler_step(const Environment& env, double t, std::span<const double> x,
                std::span<const double> a, std::span<const double> dw, double dt,
                std::span<double> out, StepWorkspace& ws);

std::vector<double> euler_step(const Environment& env, double t, std::span<const double> x,
                               std::span<const double> a, std::span<const double> dw, double dt);

/// Simulates one episode from env.initial_state. Per step the draw order
/// is: action, Brownian increments, reward noise.
Trajectory simulate_episode(const Environment& env, const TimeGrid& grid,
                            const PolicySampler& policy, RngStream& rng);

/// (v_next - v_curr)^2.
inline double quadratic_variation_increment(double v_next, double v_curr) noexcept {
  const double d = v_next - v_curr;
  return d * d;
}

struct MarketConfig;
struct LqCoefficients;

/// Log-wealth dynamics of a one-stock market. Action = fraction of wealth
/// in the stock, reward rate 0, terminal payoff = log wealth.
Environment merton_log_wealth_env(const MarketConfig& cfg);

/// Scalar LQ dynamics dX = (AX + Ba)dt + (CX + Da)dW with quadratic reward
/// rate and reward observation noise `reward_noise_std`.
Environment lq_env(const LqCoefficients& c, double reward_noise_std, double x0 = 0.0);

}  // namespace qvrl
