#include "qvrl/merton_bench.hpp"

#include <cmath>
#include <numbers>

#include "qvrl/errors.hpp"
#include "qvrl/parallel.hpp"
#include "qvrl/sde_sim.hpp"

namespace qvrl {

void MarketConfig::validate() const {
  if (!(sigma > 0.0)) throw PreconditionViolation("market: sigma must be > 0");
  if (!(gamma > 0.0) || gamma == 1.0)
    throw PreconditionViolation("market: gamma must be > 0 and != 1");
  if (!(horizon > 0.0)) throw PreconditionViolation("market: horizon must be > 0");
  if (!(x0 > 0.0)) throw PreconditionViolation("market: x0 must be > 0");
  if (!std::isfinite(mu) || !std::isfinite(r)) throw PreconditionViolation("market: non-finite rate");
}

MertonGroundTruth ground_truth(const MarketConfig& cfg, double lambda) {
  cfg.validate();
  if (!(lambda > 0.0)) throw DomainError("lambda must be > 0");
  const double gs2 = cfg.gamma * cfg.sigma * cfg.sigma;
  MertonGroundTruth g;
  g.psi1_star = (cfg.mu - cfg.r) / gs2;
  g.psi2_star = 1.0 / gs2;
  g.theta_star = cfg.r + (cfg.mu - cfg.r) * (cfg.mu - cfg.r) / (2.0 * gs2) +
                 0.5 * lambda * std::log(2.0 * std::numbers::pi * lambda / gs2);
  g.horizon = cfg.horizon;
  return g;
}

MertonIncrements expected_increments(const MertonParams& p, const MarketConfig& cfg,
                                     double lambda) {
  if (!(p.psi2 > 0.0)) throw DomainError("psi2 must be > 0");
  const auto g = ground_truth(cfg, lambda);
  const double s2 = cfg.sigma * cfg.sigma;
  const double gs2 = cfg.gamma * s2;
  MertonIncrements h;
  h.theta = cfg.r - p.theta + 0.5 * lambda * std::log(2.0 * std::numbers::pi * lambda) +
            0.5 * lambda * std::log(p.psi2) + (cfg.mu - cfg.r) * p.psi1 -
            0.5 * cfg.gamma * (p.psi1 * p.psi1 + lambda * p.psi2) * s2 + 0.5 * lambda;
  h.psi1 = lambda * gs2 * (g.psi1_star - p.psi1);
  h.psi2 = 0.5 * lambda * lambda * gs2 * p.psi2 * (g.psi2_star - p.psi2);
  return h;
}

double value_gap(const MertonParams& p, const MarketConfig& cfg, double effective_variance) {
  if (!(effective_variance >= 0.0)) throw DomainError("effective variance must be >= 0");
  cfg.validate();
  const double gs2 = cfg.gamma * cfg.sigma * cfg.sigma;
  const double d = p.psi1 - (cfg.mu - cfg.r) / gs2;
  return 0.5 * gs2 * cfg.horizon * (d * d + effective_variance);
}

double erwl(const MertonParams& p, const MarketConfig& cfg, double effective_variance) {
  return -std::expm1(-value_gap(p, cfg, effective_variance));
}

void ErwlLedger::add(double v) {
  per_episode.push_back(v);
  accumulated.push_back(total() + v);
}

double MertonFamily::value(double t, double x, std::span<const double> theta) const {
  return x + theta[0] * (horizon_ - t);
}

double MertonFamily::q(double, double, double a, std::span<const double> psi,
                       double lambda) const {
  return merton_q(a, {0.0, psi[0], psi[1]}, lambda);
}

void MertonFamily::theta_test(double t, double, std::span<const double>,
                              std::span<double> out) const {
  out[0] = 2.0 / (horizon_ * horizon_) * (horizon_ - t);
}

void MertonFamily::psi_test(double, double, double a, std::span<const double> psi, double lambda,
                            std::span<double> out) const {
  const double u = a - psi[0];
  out[0] = u / psi[1] / horizon_;
  out[1] = (0.5 * u * u - 0.5 * lambda * psi[1]) / horizon_;
}

GaussianPolicy MertonFamily::policy(std::span<const double> psi, double lambda) const {
  return gibbs_policy(MertonParams{0.0, psi[0], psi[1]}, lambda);
}

std::uint32_t MertonFamily::project(ParamVector& p, double b, double c) const {
  std::uint32_t hits = 0;
  if (project_into(p.theta[0], {-c, c})) hits |= 1u;
  if (project_into(p.psi[0], {-c, c})) hits |= 2u;
  if (project_into(p.psi[1], {1.0 / b, c})) hits |= 4u;
  return hits;
}

ParamVector MertonFamily::pack(const MertonParams& p) { return {{p.theta}, {p.psi1, p.psi2}, 0.0}; }

MertonParams MertonFamily::unpack(const ParamVector& v) { return {v.theta[0], v.psi[0], v.psi[1]}; }

Schedule regime_a_schedule(double lambda) {
  Schedule s;
  s.a_psi = power_sequence(1.0, 1.0, 1.0);
  s.a_theta = s.a_psi;
  s.b = log_sequence(2.0, 1.0, 1.0);
  s.c = log_sequence(10.0, 1.0, 1.0);
  s.lambda = constant_sequence(lambda);
  return s;
}

Schedule regime_b_schedule(double lambda0) {
  Schedule s;
  s.a_psi = power_sequence(1.0, 1.0, 0.5);
  s.a_theta = s.a_psi;
  s.b = constant_sequence(2.0);
  s.c = log_sequence(10.0, 1.0, 1.0);
  s.lambda = power_sequence(lambda0, 1.0, 0.5);
  return s;
}

MertonRun run_merton(const MarketConfig& cfg, MertonRegime regime, const Schedule& sched,
                     std::size_t n_episodes, const RngStream& rng, const MertonRunOptions& opts) {
  cfg.validate();
  const Environment env = merton_log_wealth_env(cfg);
  const TimeGrid grid(0.0, cfg.horizon, opts.dt);
  const MertonFamily family(cfg.horizon);
  const TdConfig td{cfg.epsilon(), sched.lambda(0), opts.dt};
  const double gs2 = cfg.gamma * cfg.sigma * cfg.sigma;
  const double psi1_star = (cfg.mu - cfg.r) / gs2;
  const double psi2_star = 1.0 / gs2;
  const bool deterministic = regime == MertonRegime::deterministic_exec;

  MertonRun run;
  run.ledger.per_episode.reserve(n_episodes);
  run.ledger.accumulated.reserve(n_episodes);
  run.sq_err_psi1.reserve(n_episodes);
  run.sq_err_psi2.reserve(n_episodes);

  EpisodicOptions eo;
  eo.trace_stride = opts.trace_stride;
  if (deterministic && !opts.explore_for_data)
    eo.execution_policy = [](const ParamVector& p, double) {
      return GaussianPolicy::deterministic(0.0, p.psi[0]);
    };
  eo.on_episode = [&](std::size_t, const ParamVector& p, double lambda, const Trajectory&) {
    const MertonParams mp = MertonFamily::unpack(p);
    run.ledger.add(erwl(mp, cfg, deterministic ? 0.0 : lambda * mp.psi2));
  };
  eo.after_update = [&](std::size_t, const ParamVector& p) {
    const double e1 = p.psi[0] - psi1_star, e2 = p.psi[1] - psi2_star;
    run.sq_err_psi1.push_back(e1 * e1);
    run.sq_err_psi2.push_back(e2 * e2);
  };
  run.state = run_episodic(family, env, grid, MertonFamily::pack(opts.init), sched, td, OnPolicy{},
                           n_episodes, rng, eo);
  return run;
}

namespace {

MertonIncrements episode_increment(const MertonParams& p, const MarketConfig& cfg, double lambda,
                                   const Environment& env, const TimeGrid& grid,
                                   const MertonFamily& family, const RngStream& rng,
                                   std::size_t i) {
  const GaussianPolicy pol = gibbs_policy(p, lambda);
  RngStream stream = rng.substream(i);
  const auto sampler = [&pol](double, std::span<const double> x, RngStream& r,
                              std::span<double> a) { a[0] = pol.sample(x[0], r); };
  const Trajectory tr = simulate_episode(env, grid, sampler, stream);
  const ParamVector v = MertonFamily::pack(p);
  const TdConfig td{cfg.epsilon(), lambda, grid.dt()};
  const TdIncrement inc = moment_increments(
      tr, [&](double t, std::span<const double> x) { return family.value(t, x[0], v.theta); },
      [&](double t, std::span<const double> x, std::span<const double> a) {
        return family.q(t, x[0], a[0], v.psi, lambda);
      },
      [&](double t, std::span<const double> x, std::span<double> out) {
        family.theta_test(t, x[0], v.theta, out);
      },
      [&](double t, std::span<const double> x, std::span<const double> a, std::span<double> out) {
        family.psi_test(t, x[0], a[0], v.psi, lambda, out);
      },
      1, 2, td);
  return {inc.theta_direction[0], inc.psi_direction[0], inc.psi_direction[1]};
}

IncrementEstimate reduce(const std::vector<MertonIncrements>& xs) {
  const double n = static_cast<double>(xs.size());
  MertonIncrements m, s;
  for (const auto& x : xs) {
    m.theta += x.theta;
    m.psi1 += x.psi1;
    m.psi2 += x.psi2;
  }
  m.theta /= n;
  m.psi1 /= n;
  m.psi2 /= n;
  for (const auto& x : xs) {
    s.theta += (x.theta - m.theta) * (x.theta - m.theta);
    s.psi1 += (x.psi1 - m.psi1) * (x.psi1 - m.psi1);
    s.psi2 += (x.psi2 - m.psi2) * (x.psi2 - m.psi2);
  }
  const double k = 1.0 / ((n - 1.0) * n);
  return {m, {std::sqrt(s.theta * k), std::sqrt(s.psi1 * k), std::sqrt(s.psi2 * k)}, xs.size()};
}

template <class Driver>
IncrementEstimate mc_increments_impl(const MertonParams& p, const MarketConfig& cfg,
                                     double lambda, double dt, std::size_t n_episodes,
                                     const RngStream& rng, Driver&& drive) {
  if (n_episodes < 2) throw PreconditionViolation("mc_increments: need >= 2 episodes");
  const Environment env = merton_log_wealth_env(cfg);
  const TimeGrid grid(0.0, cfg.horizon, dt);
  const MertonFamily family(cfg.horizon);
  std::vector<MertonIncrements> out(n_episodes);
  drive(n_episodes, [&](std::size_t i) {
    out[i] = episode_increment(p, cfg, lambda, env, grid, family, rng, i);
  });
  return reduce(out);
}

}  // namespace

IncrementEstimate mc_increments(const MertonParams& p, const MarketConfig& cfg, double lambda,
                                double dt, std::size_t n_episodes, const RngStream& rng,
                                int workers) {
  return mc_increments_impl(p, cfg, lambda, dt, n_episodes, rng,
                            [workers](std::size_t n, auto&& body) {
                              for_each_index_parallel(n, workers, body);
                            });
}

IncrementEstimate mc_increments_serial(const MertonParams& p, const MarketConfig& cfg,
                                       double lambda, double dt, std::size_t n_episodes,
                                       const RngStream& rng) {
  return mc_increments_impl(p, cfg, lambda, dt, n_episodes, rng, [](std::size_t n, auto&& body) {
    for_each_index_serial(n, body);
  });
}

}  // namespace qvrl
