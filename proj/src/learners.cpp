#include "qvrl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qvrl/csv.hpp"
#include "qvrl/errors.hpp"

namespace qvrl {

Sequence constant_sequence(double value) {
  return [value](std::size_t) { return value; };
}

Sequence power_sequence(double scale, double shift, double power) {
  return [=](std::size_t n) { return scale / std::pow(static_cast<double>(n) + shift, power); };
}

Sequence log_sequence(double offset, double scale, double shift) {
  return [=](std::size_t n) { return offset + scale * std::log(static_cast<double>(n) + shift); };
}

bool project_into(double& x, const ProjectionBox& box) noexcept {
  const double y = project(x, box);
  const bool moved = y != x;
  x = y;
  return moved;
}

bool ParamVector::all_finite() const noexcept {
  auto fin = [](double v) { return std::isfinite(v); };
  return std::all_of(theta.begin(), theta.end(), fin) && std::all_of(psi.begin(), psi.end(), fin) &&
         std::isfinite(beta);
}

std::string LearnerState::trace_csv() const {
  CsvTable t;
  t.header.push_back("episode");
  const std::size_t nt = params.theta.size(), np = params.psi.size();
  for (std::size_t i = 0; i < nt; ++i) t.header.push_back("theta_" + std::to_string(i));
  for (std::size_t i = 0; i < np; ++i) t.header.push_back("psi_" + std::to_string(i));
  t.header.push_back("beta");
  t.header.push_back("projection_hits");
  for (const auto& row : trace) {
    std::vector<std::string> cells{std::to_string(row.episode)};
    for (double v : row.params.theta) cells.push_back(format_double(v));
    for (double v : row.params.psi) cells.push_back(format_double(v));
    cells.push_back(format_double(row.params.beta));
    cells.push_back(std::to_string(row.projection_hits));
    t.add_row(std::move(cells));
  }
  return t.to_string();
}

ReplaySource::ReplaySource(std::vector<Trajectory> data) : data_(std::move(data)) {
  if (data_.empty()) throw PreconditionViolation("ReplaySource: no trajectories");
}

const Trajectory& ReplaySource::next(std::size_t index) { return data_[index % data_.size()]; }

SimulatorSource::SimulatorSource(Environment env, TimeGrid grid, GaussianPolicy behavior,
                                 RngStream rng)
    : env_(std::move(env)), grid_(grid), behavior_(behavior), rng_(std::move(rng)) {}

const Trajectory& SimulatorSource::next(std::size_t index) {
  RngStream stream = rng_.substream(index);
  const auto sampler = [this](double, std::span<const double> x, RngStream& r,
                              std::span<double> a) { a[0] = behavior_.sample(x[0], r); };
  current_ = simulate_episode(env_, grid_, sampler, stream);
  return current_;
}

namespace {

void check_dims(const ParametricFamily& family, const ParamVector& p) {
  if (p.theta.size() != family.theta_dim() || p.psi.size() != family.psi_dim())
    throw PreconditionViolation("parameter record does not match the family dimensions");
}

void check_schedule_present(const Schedule& s) {
  if (!s.a_theta || !s.a_psi || !s.b || !s.c || !s.lambda)
    throw PreconditionViolation("schedule has an unset sequence");
}

}  // namespace

LearnerState run_episodic(const ParametricFamily& family, const Environment& env,
                          const TimeGrid& grid, const ParamVector& init, const Schedule& sched,
                          const TdConfig& cfg, LearnerMode mode, std::size_t n_episodes,
                          const RngStream& rng, const EpisodicOptions& opts) {
  if (n_episodes == 0) throw PreconditionViolation("run_episodic: n_episodes must be >= 1");
  check_dims(family, init);
  check_schedule_present(sched);
  cfg.validate();
  env.validate();

  LearnerState state;
  state.params = init;
  const std::size_t nt = family.theta_dim(), np = family.psi_dim();
  std::vector<double> theta_buf(nt), psi_buf(np);

  for (std::size_t i = 0; i < n_episodes; ++i) {
    state.episode_index = i;
    TdConfig step_cfg = cfg;
    step_cfg.lambda = sched.lambda(i);
    ParamVector& p = state.params;
    try {
      const Trajectory* traj = nullptr;
      Trajectory local;
      if (std::holds_alternative<OnPolicy>(mode)) {
        const GaussianPolicy pol = opts.execution_policy
                                       ? opts.execution_policy(p, step_cfg.lambda)
                                       : family.policy(p.psi, step_cfg.lambda);
        RngStream stream = rng.substream(i);
        const auto sampler = [&pol](double, std::span<const double> x, RngStream& r,
                                    std::span<double> a) { a[0] = pol.sample(x[0], r); };
        local = simulate_episode(env, grid, sampler, stream);
        traj = &local;
      } else {
        traj = &std::get<OffPolicy>(mode).source.get().next(i);
      }
      if (opts.on_episode) opts.on_episode(i, p, step_cfg.lambda, *traj);

      const double lam = step_cfg.lambda;
      const TdIncrement inc = moment_increments(
          *traj,
          [&](double t, std::span<const double> x) { return family.value(t, x[0], p.theta); },
          [&](double t, std::span<const double> x, std::span<const double> a) {
            return family.q(t, x[0], a[0], p.psi, lam);
          },
          [&](double t, std::span<const double> x, std::span<double> out) {
            family.theta_test(t, x[0], p.theta, out);
          },
          [&](double t, std::span<const double> x, std::span<const double> a,
              std::span<double> out) { family.psi_test(t, x[0], a[0], p.psi, lam, out); },
          nt, np, step_cfg);

      const double at = sched.a_theta(i), ap = sched.a_psi(i);
      for (std::size_t k = 0; k < nt; ++k) p.theta[k] += at * inc.theta_direction[k];
      for (std::size_t k = 0; k < np; ++k) p.psi[k] += ap * inc.psi_direction[k];
    } catch (const SimulationDivergence& e) {
      throw LearnerDivergence(std::string("episode diverged: ") + e.what(), i);
    }
    if (!state.params.all_finite()) throw LearnerDivergence("non-finite parameters", i);
    const std::uint32_t hits = family.project(state.params, sched.b(i + 1), sched.c(i + 1));
    if (opts.after_update) opts.after_update(i, state.params);
    if (opts.trace_stride && ((i + 1) % opts.trace_stride == 0 || i + 1 == n_episodes))
      state.trace.push_back({i, state.params, hits});
  }
  state.episode_index = n_episodes;
  return state;
}

LearnerState run_ergodic(const ParametricFamily& family, const Environment& env, double dt,
                         const ParamVector& init, const Schedule& sched, const TdConfig& cfg,
                         LearnerMode mode, std::size_t n_steps, RngStream& rng,
                         const ErgodicOptions& opts) {
  if (n_steps == 0) throw PreconditionViolation("run_ergodic: n_steps must be >= 1");
  check_dims(family, init);
  check_schedule_present(sched);
  TdConfig step_cfg = cfg;
  step_cfg.dt = dt;
  step_cfg.validate();
  env.validate();

  LearnerState state;
  state.params = init;
  ParamVector& p = state.params;
  const std::size_t nt = family.theta_dim(), np = family.psi_dim();
  std::vector<double> xi(nt), zeta(np);

  const bool on_policy = std::holds_alternative<OnPolicy>(mode);
  const Trajectory* data = nullptr;
  std::size_t pass = 0, k = 0;
  if (!on_policy) data = &std::get<OffPolicy>(mode).source.get().next(0);

  StepWorkspace ws(env);
  std::vector<double> x(env.initial_state), x_next(env.state_dim), a(env.action_dim),
      dw(env.noise_dim);
  const double sdt = std::sqrt(dt);

  for (std::size_t n = 0; n < n_steps; ++n) {
    state.episode_index = n;
    step_cfg.lambda = sched.lambda(n);
    const double lam = step_cfg.lambda;
    double xc = 0.0, xn = 0.0, ac = 0.0, reward = 0.0;
    try {
      if (on_policy) {
        const GaussianPolicy pol = family.policy(p.psi, lam);
        const double t = static_cast<double>(n) * dt;
        a[0] = pol.sample(x[0], rng);
        for (auto& w : dw) w = sdt * rng.normal();
        reward = env.reward_rate(t, x, a);
        if (env.reward_noise_std > 0.0) reward += env.reward_noise_std * rng.normal();
        euler_step(env, t, x, a, dw, dt, x_next, ws);
        xc = x[0];
        xn = x_next[0];
        ac = a[0];
        x.swap(x_next);
      } else {
        if (k == data->steps()) {
          data = &std::get<OffPolicy>(mode).source.get().next(++pass);
          k = 0;
        }
        xc = data->state(k)[0];
        xn = data->state(k + 1)[0];
        ac = data->action(k)[0];
        reward = data->rewards[k];
        ++k;
      }
    } catch (const SimulationDivergence& e) {
      throw LearnerDivergence(std::string("step diverged: ") + e.what(), n);
    }

    const double jc = family.value(0.0, xc, p.theta);
    const double jn = family.value(0.0, xn, p.theta);
    const double q = family.q(0.0, xc, ac, p.psi, lam);
    const double d = td_residual_ergodic(jn, jc, reward, q, p.beta, step_cfg);
    family.theta_test(0.0, xc, p.theta, xi);
    family.psi_test(0.0, xc, ac, p.psi, lam, zeta);
    const double at = sched.a_theta(n), ap = sched.a_psi(n);
    for (std::size_t i = 0; i < nt; ++i) p.theta[i] += at * xi[i] * d;
    p.beta += at * d;
    for (std::size_t i = 0; i < np; ++i) p.psi[i] += ap * zeta[i] * d;
    if (!p.all_finite()) throw LearnerDivergence("non-finite parameters", n);
    const std::uint32_t hits = family.project(p, sched.b(n + 1), sched.c(n + 1));
    if (opts.trace_stride && ((n + 1) % opts.trace_stride == 0 || n + 1 == n_steps))
      state.trace.push_back({n, p, hits});
  }
  state.episode_index = n_steps;
  return state;
}

bool ScheduleReport::passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::vector<std::string> ScheduleReport::violations() const {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.passed) out.push_back(c.name + ": " + c.detail);
  return out;
}

namespace {

struct SeriesScreen {
  double total = 0.0;
  double last_decade = 0.0;
  bool finite = true;
};

template <class Term>
SeriesScreen partial_sums(std::size_t horizon, Term&& term) {
  SeriesScreen s;
  const std::size_t decade_start = horizon / 10;
  for (std::size_t n = 0; n < horizon; ++n) {
    const double v = term(n);
    if (!std::isfinite(v)) {
      s.finite = false;
      return s;
    }
    s.total += v;
    if (n >= decade_start) s.last_decade += v;
  }
  return s;
}

ScheduleCheck divergent_check(std::string name, const SeriesScreen& s, double ratio) {
  ScheduleCheck c{std::move(name), false, s.total > 0 ? s.last_decade / s.total : 0.0, {}};
  std::ostringstream d;
  if (!s.finite) {
    d << "non-finite term";
  } else {
    c.passed = c.statistic >= ratio;
    d << "partial sum " << s.total << ", last-decade share " << c.statistic
      << (c.passed ? " >= " : " < ") << ratio;
  }
  c.detail = d.str();
  return c;
}

ScheduleCheck convergent_check(std::string name, const SeriesScreen& s, double tol) {
  ScheduleCheck c{std::move(name), false, s.total > 0 ? s.last_decade / s.total : 0.0, {}};
  std::ostringstream d;
  if (!s.finite) {
    d << "non-finite term";
  } else {
    c.passed = c.statistic < tol;
    d << "partial sum " << s.total << ", last-decade share " << c.statistic
      << (c.passed ? " < " : " >= ") << tol;
  }
  c.detail = d.str();
  return c;
}

}  // namespace

ScheduleReport validate_schedule(const Schedule& sched, std::size_t horizon,
                                 const ScheduleScreenOptions& opts) {
  ScheduleReport rep;
  if (horizon < 10 || !sched.a_psi || !sched.b || !sched.c || !sched.lambda) {
    rep.checks.push_back({"input", false, 0.0,
                          horizon < 10 ? "horizon must be >= 10" : "schedule has an unset sequence"});
    return rep;
  }

  // Positivity and monotone bounds; also detects a varying temperature.
  bool positive = true, monotone = true;
  double lam0 = sched.lambda(0), lam_min = lam0, lam_max = lam0;
  double prev_b = sched.b(0), prev_c = sched.c(0);
  std::size_t first_bad = 0;
  for (std::size_t n = 0; n < horizon; ++n) {
    const double a = sched.a_psi(n), b = sched.b(n), c = sched.c(n), l = sched.lambda(n);
    if (!(a > 0) || !(b > 0) || !(c > 0) || !(l > 0)) {
      if (positive) first_bad = n;
      positive = false;
    }
    if (n > 0 && (b < prev_b || c < prev_c)) monotone = false;
    prev_b = b;
    prev_c = c;
    lam_min = std::min(lam_min, l);
    lam_max = std::max(lam_max, l);
  }
  rep.checks.push_back({"positive", positive, 0.0,
                        positive ? "all terms positive"
                                 : "non-positive term at n=" + std::to_string(first_bad)});
  rep.checks.push_back({"bounds nondecreasing", monotone, 0.0,
                        monotone ? "b and c nondecreasing" : "b or c decreases"});
  if (!positive) return rep;

  rep.decaying_temperature = lam_max > lam_min * (1.0 + 1e-12);
  const std::size_t tail = horizon / 10;

  if (!rep.decaying_temperature) {
    const double b_growth = sched.b(horizon - 1) - sched.b(tail);
    const double c_growth = sched.c(horizon - 1) - sched.c(tail);
    const bool grows = b_growth > 0.0 && c_growth > 0.0;
    std::ostringstream d;
    d << "last-decade growth b " << b_growth << ", c " << c_growth;
    rep.checks.push_back({"bounds unbounded", grows, std::min(b_growth, c_growth), d.str()});
    rep.checks.push_back(divergent_check(
        "sum a/b diverges",
        partial_sums(horizon, [&](std::size_t n) { return sched.a_psi(n) / sched.b(n); }),
        opts.divergence_ratio));
    rep.checks.push_back(convergent_check("sum a^2 b^2 c^4 converges",
                                          partial_sums(horizon,
                                                       [&](std::size_t n) {
                                                         const double a = sched.a_psi(n);
                                                         const double b = sched.b(n);
                                                         const double c = sched.c(n);
                                                         return a * a * b * b * c * c * c * c;
                                                       }),
                                          opts.tail_tolerance));
  } else {
    rep.checks.push_back(divergent_check(
        "sum a*lambda diverges",
        partial_sums(horizon, [&](std::size_t n) { return sched.a_psi(n) * sched.lambda(n); }),
        opts.divergence_ratio));
    rep.checks.push_back(convergent_check("sum a^2 lambda c^2 converges",
                                          partial_sums(horizon,
                                                       [&](std::size_t n) {
                                                         const double a = sched.a_psi(n);
                                                         const double c = sched.c(n);
                                                         return a * a * sched.lambda(n) * c * c;
                                                       }),
                                          opts.tail_tolerance));
  }

  double required = 0.0;
  for (std::size_t n = 0; n + 1 < horizon; ++n) {
    const double a0 = sched.a_psi(n), a1 = sched.a_psi(n + 1);
    required = std::max(required, (a0 / a1 - 1.0) / a1);
  }
  rep.required_step_constant = required;
  const double A = opts.step_condition_constant;
  const bool step_ok = A > 0.0 && A < 1.0 && required <= A;
  std::ostringstream d;
  d << "needs A >= " << required << ", configured A = " << A << " (must lie in (0,1))";
  rep.checks.push_back({"step condition", step_ok, required, d.str()});
  return rep;
}

}  // namespace qvrl
