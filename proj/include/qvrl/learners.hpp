#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qvrl/policy_gibbs.hpp"
#include "qvrl/rng.hpp"
#include "qvrl/sde_sim.hpp"
#include "qvrl/td_core.hpp"

namespace qvrl {

using Sequence = std::function<double(std::size_t)>;

/// Per-episode step sizes, projection bounds and temperature.
struct Schedule {
  Sequence a_theta;
  Sequence a_psi;
  Sequence b;
  Sequence c;
  Sequence lambda;
};

Sequence constant_sequence(double value);
/// scale / (n + shift)^power
Sequence power_sequence(double scale, double shift, double power);
/// offset + scale * log(n + shift)
Sequence log_sequence(double offset, double scale, double shift);

struct ProjectionBox {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

inline double project(double x, const ProjectionBox& box) noexcept {
  return x < box.lower ? box.lower : (x > box.upper ? box.upper : x);
}

/// Clamps in place; returns true if the value moved.
bool project_into(double& x, const ProjectionBox& box) noexcept;

struct ParamVector {
  std::vector<double> theta;
  std::vector<double> psi;
  double beta = 0.0;

  bool all_finite() const noexcept;
  bool operator==(const ParamVector&) const = default;
};

/// A value function / q-function pair over a scalar state and action, with
/// the test functions used for the moment updates.
class ParametricFamily {
 public:
  virtual ~ParametricFamily() = default;
  virtual std::size_t theta_dim() const = 0;
  virtual std::size_t psi_dim() const = 0;
  virtual double value(double t, double x, std::span<const double> theta) const = 0;
  virtual double q(double t, double x, double a, std::span<const double> psi,
                   double lambda) const = 0;
  virtual void theta_test(double t, double x, std::span<const double> theta,
                          std::span<double> out) const = 0;
  virtual void psi_test(double t, double x, double a, std::span<const double> psi, double lambda,
                        std::span<double> out) const = 0;
  virtual GaussianPolicy policy(std::span<const double> psi, double lambda) const = 0;
  /// Clamps every parameter into its box for bounds (b, c). Returns a bit
  /// mask of clamped entries, ordered theta..., psi..., beta.
  virtual std::uint32_t project(ParamVector& p, double b, double c) const = 0;
};

struct TraceRow {
  std::size_t episode = 0;
  ParamVector params;
  std::uint32_t projection_hits = 0;

  bool operator==(const TraceRow&) const = default;
};

struct LearnerState {
  std::size_t episode_index = 0;
  ParamVector params;
  std::vector<TraceRow> trace;

  /// CSV with header: episode, theta_0.., psi_0.., beta, projection_hits.
  /// Doubles are written in shortest round-trip form.
  std::string trace_csv() const;
};

/// Yields learning data independent of the learner's parameters.
class TrajectorySource {
 public:
  virtual ~TrajectorySource() = default;
  virtual const Trajectory& next(std::size_t index) = 0;
};

/// Cycles through a fixed list of recorded trajectories.
class ReplaySource final : public TrajectorySource {
 public:
  explicit ReplaySource(std::vector<Trajectory> data);
  const Trajectory& next(std::size_t index) override;

 private:
  std::vector<Trajectory> data_;
};

/// Fresh trajectories from a fixed behaviour policy; trajectory i uses
/// rng.substream(i), so the sequence is addressable.
class SimulatorSource final : public TrajectorySource {
 public:
  SimulatorSource(Environment env, TimeGrid grid, GaussianPolicy behavior, RngStream rng);
  const Trajectory& next(std::size_t index) override;

 private:
  Environment env_;
  TimeGrid grid_;
  GaussianPolicy behavior_;
  RngStream rng_;
  Trajectory current_;
};

struct OnPolicy {};
struct OffPolicy {
  std::reference_wrapper<TrajectorySource> source;
};
using LearnerMode = std::variant<OnPolicy, OffPolicy>;

struct EpisodicOptions {
  /// Replaces the Gibbs policy for on-policy data collection.
  std::function<GaussianPolicy(const ParamVector&, double lambda)> execution_policy;
  /// Called before each update with the parameters that generated the data.
  std::function<void(std::size_t episode, const ParamVector&, double lambda, const Trajectory&)>
      on_episode;
  /// Called after each projected update.
  std::function<void(std::size_t episode, const ParamVector&)> after_update;
  /// Record every n-th episode in the trace; 0 disables the trace.
  std::size_t trace_stride = 1;
};

/// Offline episodic learner. Episode i draws (on-policy) with
/// rng.substream(i), forms the moment increments and applies
///   theta <- P(theta + a_theta(i) dtheta), psi <- P(psi + a_psi(i) dpsi)
/// with boxes from b(i+1), c(i+1). Throws LearnerDivergence on non-finite
/// parameters or simulation failure.
LearnerState run_episodic(const ParametricFamily& family, const Environment& env,
                          const TimeGrid& grid, const ParamVector& init, const Schedule& sched,
                          const TdConfig& cfg, LearnerMode mode, std::size_t n_episodes,
                          const RngStream& rng, const EpisodicOptions& opts = {});

struct ErgodicOptions {
  std::size_t trace_stride = 0;
};

/// Online ergodic learner, one update per observed transition. Off-policy
/// data is consumed from source.next(pass) trajectories in order; a run
/// longer than one trajectory starts a new pass at its first transition.
LearnerState run_ergodic(const ParametricFamily& family, const Environment& env, double dt,
                         const ParamVector& init, const Schedule& sched, const TdConfig& cfg,
                         LearnerMode mode, std::size_t n_steps, RngStream& rng,
                         const ErgodicOptions& opts = {});

struct ScheduleScreenOptions {
  /// Constant A of the step condition a_i <= a_{i+1}(1 + A a_{i+1}).
  double step_condition_constant = 0.9;
  /// Divergent sums must grow by at least this fraction over the last decade.
  double divergence_ratio = 0.02;
  /// Convergent sums may grow by at most this fraction over the last decade.
  double tail_tolerance = 0.05;
};

struct ScheduleCheck {
  std::string name;
  bool passed = false;
  double statistic = 0.0;
  std::string detail;
};

struct ScheduleReport {
  std::vector<ScheduleCheck> checks;
  /// Smallest A satisfying the step condition over the horizon.
  double required_step_constant = 0.0;
  /// True when lambda varies and the decaying-temperature screen was used.
  bool decaying_temperature = false;

  bool passed() const noexcept;
  std::vector<std::string> violations() const;
};

/// Numerical screen of the convergence conditions over n in [0, horizon).
/// Constant temperature: bounds grow without limit, sum a/b diverges,
/// sum a^2 b^2 c^4 converges. Decaying temperature: sum a*lambda diverges,
/// sum a^2 lambda c^2 converges. Both: the step condition. Never throws
/// for horizon >= 10.
ScheduleReport validate_schedule(const Schedule& sched, std::size_t horizon,
                                 const ScheduleScreenOptions& opts = {});

}  // namespace qvrl
