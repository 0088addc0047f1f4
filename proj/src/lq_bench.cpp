#include "qvrl/lq_bench.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include "qvrl/errors.hpp"
#include "qvrl/parallel.hpp"

namespace qvrl {

void LqCoefficients::validate() const {
  for (double v : {A, B, C, D, M, N, R, P, Q})
    if (!std::isfinite(v)) throw PreconditionViolation("LQ coefficients must be finite");
  if (!(N > 0.0)) throw PreconditionViolation("LQ coefficient N must be > 0");
}

double lq_reward_rate(const LqCoefficients& c, double x, double a) noexcept {
  return -(0.5 * c.M * x * x + c.R * x * a + 0.5 * c.N * a * a + c.P * x + c.Q * a);
}

LqClassicalSolution solve_classical_lq(const LqCoefficients& c) {
  c.validate();
  const double g = 2.0 * c.A + c.C * c.C;
  const double h = c.B + c.C * c.D;
  const double d2 = c.D * c.D;
  const double qa = -g * d2 + h * h;
  const double qb = g * c.N + c.M * d2 - 2.0 * c.R * h;
  const double qc = -c.M * c.N + c.R * c.R;

  std::vector<double> roots;
  if (qa == 0.0) {
    if (qb != 0.0) roots.push_back(-qc / qb);
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double t = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
      if (t != 0.0) {
        roots.push_back(t / qa);
        roots.push_back(qc / t);
      } else {
        roots.push_back(0.0);
      }
    }
  }
  std::optional<double> k2;
  for (double r : roots)
    if (r < 0.0 && c.N - r * d2 > 0.0 && (!k2 || r > *k2)) k2 = r;
  if (!k2) throw InfeasibleProblem("LQ problem has no negative root with N - k2 D^2 > 0");

  LqClassicalSolution s;
  s.k2 = *k2;
  s.curvature = c.N - s.k2 * d2;
  s.policy_slope = (s.k2 * h - c.R) / s.curvature;
  const double denom = c.A + s.policy_slope * c.B;
  if (denom == 0.0) throw InfeasibleProblem("LQ linear coefficient equation is singular");
  s.k1 = (c.P + s.policy_slope * c.Q) / denom;
  s.policy_intercept = (s.k1 * c.B - c.Q) / s.curvature;
  s.beta = (s.k1 * c.B - c.Q) * (s.k1 * c.B - c.Q) / (2.0 * s.curvature);
  return s;
}

LqResiduals lq_residuals(const LqCoefficients& c, const LqClassicalSolution& s) {
  const double h = c.B + c.C * c.D;
  const double curv = c.N - s.k2 * c.D * c.D;
  const double lin = s.k1 * c.B - c.Q;
  return {s.k2 * (2.0 * c.A + c.C * c.C) - c.M + (s.k2 * h - c.R) * (s.k2 * h - c.R) / curv,
          s.k1 * c.A - c.P + (s.k2 * h - c.R) * lin / curv, s.beta - lin * lin / (2.0 * curv)};
}

LqParams lq_exploratory_optimum(const LqCoefficients& c, double lambda) {
  const auto s = solve_classical_lq(c);
  LqParams p;
  p.theta2 = 0.5 * s.k2;
  p.theta1 = s.k1;
  p.psi1 = s.policy_slope;
  p.psi2 = s.policy_intercept;
  p.psi3 = s.psi3_target();
  p.theta0 = s.beta + 0.5 * lambda * std::log(2.0 * std::numbers::pi * lambda / s.curvature);
  return p;
}

Trajectory generate_behavior_data(const LqCoefficients& c, const GaussianPolicy& behavior,
                                  double horizon, double dt, RngStream& rng, double x0) {
  const Environment env = lq_env(c, std::sqrt(dt), x0);
  const TimeGrid grid(0.0, horizon, dt);
  const auto sampler = [&behavior](double, std::span<const double> x, RngStream& r,
                                   std::span<double> a) { a[0] = behavior.sample(x[0], r); };
  return simulate_episode(env, grid, sampler, rng);
}

double LqFamily::value(double, double x, std::span<const double> theta) const {
  return (theta[1] * x + theta[0]) * x;
}

double LqFamily::q(double, double x, double a, std::span<const double> psi, double lambda) const {
  LqParams p;
  p.psi1 = psi[0];
  p.psi2 = psi[1];
  p.psi3 = psi[2];
  return lq_q(x, a, p, lambda);
}

void LqFamily::theta_test(double, double x, std::span<const double>, std::span<double> out) const {
  out[0] = x;
  out[1] = x * x;
}

void LqFamily::psi_test(double, double x, double a, std::span<const double> psi, double lambda,
                        std::span<double> out) const {
  const double u = a - psi[0] * x - psi[1];
  out[0] = u * x / psi[2];
  out[1] = u / psi[2];
  out[2] = 0.5 * u * u - 0.5 * lambda * psi[2];
}

GaussianPolicy LqFamily::policy(std::span<const double> psi, double lambda) const {
  return GaussianPolicy(psi[0], psi[1], lambda * psi[2]);
}

std::uint32_t LqFamily::project(ParamVector& p, double b, double c) const {
  std::uint32_t hits = 0;
  const ProjectionBox box{-c, c};
  if (project_into(p.theta[0], box)) hits |= 1u;
  if (project_into(p.theta[1], box)) hits |= 2u;
  if (project_into(p.psi[0], box)) hits |= 4u;
  if (project_into(p.psi[1], box)) hits |= 8u;
  if (project_into(p.psi[2], {1.0 / b, c})) hits |= 16u;
  if (project_into(p.beta, box)) hits |= 32u;
  return hits;
}

ParamVector LqFamily::pack(const LqParams& p) {
  return {{p.theta1, p.theta2}, {p.psi1, p.psi2, p.psi3}, p.theta0};
}

LqParams LqFamily::unpack(const ParamVector& v) {
  LqParams p;
  p.theta0 = v.beta;
  p.theta1 = v.theta[0];
  p.theta2 = v.theta[1];
  p.psi1 = v.psi[0];
  p.psi2 = v.psi[1];
  p.psi3 = v.psi[2];
  return p;
}

Schedule lq_schedule(const LqStepRule& rule, double lambda) {
  Schedule s;
  s.a_psi = power_sequence(rule.scale, rule.shift, rule.power);
  s.a_theta = s.a_psi;
  s.b = constant_sequence(rule.variance_floor);
  s.c = constant_sequence(rule.bound);
  s.lambda = constant_sequence(lambda);
  return s;
}

namespace {

class BorrowedSource final : public TrajectorySource {
 public:
  explicit BorrowedSource(const Trajectory& t) : t_(t) {}
  const Trajectory& next(std::size_t) override { return t_; }

 private:
  const Trajectory& t_;
};

}  // namespace

LqParams learn_lq_offpolicy(const Trajectory& data, const LqSweepConfig& cfg, double epsilon) {
  const Environment env = lq_env(cfg.coefficients, std::sqrt(cfg.dt), cfg.x0);
  const LqFamily family;
  BorrowedSource source(data);
  RngStream unused(0, 0);
  const TdConfig td{epsilon, cfg.lambda, cfg.dt};
  const auto state = run_ergodic(family, env, cfg.dt, LqFamily::pack(LqParams{}),
                                 lq_schedule(cfg.step, cfg.lambda), td, OffPolicy{source},
                                 data.steps() * cfg.step.passes, unused);
  return LqFamily::unpack(state.params);
}

const LqCell& LqSweepResult::cell(std::size_t horizon_index, std::size_t epsilon_index) const {
  return cells.at(horizon_index * epsilon_count + epsilon_index);
}

std::vector<LqCell> aggregate_lq_cells(const LqSweepConfig& cfg,
                                       const std::vector<LqReplication>& runs) {
  const std::size_t nh = cfg.horizons.size(), ne = cfg.epsilons.size();
  std::vector<LqCell> cells(nh * ne);
  for (std::size_t h = 0; h < nh; ++h)
    for (std::size_t e = 0; e < ne; ++e) {
      cells[h * ne + e].horizon = cfg.horizons[h];
      cells[h * ne + e].epsilon = cfg.epsilons[e];
    }
  for (const auto& r : runs) {
    LqCell& c = cells[r.horizon_index * ne + r.epsilon_index];
    if (r.failed) {
      ++c.failures;
      continue;
    }
    ++c.replications;
    c.mse_psi1 += r.sq_err_psi1;
    c.mse_psi2 += r.sq_err_psi2;
    c.mse_psi3 += r.sq_err_psi3;
  }
  for (auto& c : cells) {
    const double n = static_cast<double>(c.replications);
    if (c.replications == 0) {
      c.mse_psi1 = c.mse_psi2 = c.mse_psi3 = std::nan("");
      continue;
    }
    c.mse_psi1 /= n;
    c.mse_psi2 /= n;
    c.mse_psi3 /= n;
  }
  return cells;
}

LqSweepResult run_lq_sweep(const LqSweepConfig& cfg, const RngStream& rng, int workers) {
  if (cfg.replications < 2) throw PreconditionViolation("run_lq_sweep: replications must be >= 2");
  if (cfg.horizons.empty() || cfg.epsilons.empty())
    throw PreconditionViolation("run_lq_sweep: empty grid");
  LqSweepResult res;
  res.truth = solve_classical_lq(cfg.coefficients);
  res.epsilon_count = cfg.epsilons.size();
  const GaussianPolicy behavior(0.0, cfg.behavior_mean, cfg.behavior_variance);
  const std::size_t nh = cfg.horizons.size(), ne = cfg.epsilons.size(), nr = cfg.replications;
  res.runs.resize(nh * nr * ne);

  for_each_index(nh * nr, workers, [&](std::size_t job) {
    const std::size_t h = job / nr, rep = job % nr;
    RngStream data_rng = rng.substream(h).substream(rep);
    std::optional<Trajectory> data;
    try {
      data = generate_behavior_data(cfg.coefficients, behavior, cfg.horizons[h], cfg.dt, data_rng,
                                    cfg.x0);
    } catch (const SimulationDivergence&) {
    }
    for (std::size_t e = 0; e < ne; ++e) {
      LqReplication& out = res.runs[(h * nr + rep) * ne + e];
      out.horizon_index = h;
      out.epsilon_index = e;
      out.replication = rep;
      if (!data) {
        out.failed = true;
        continue;
      }
      try {
        out.estimate = learn_lq_offpolicy(*data, cfg, cfg.epsilons[e]);
        const double e1 = out.estimate.psi1 - res.truth.policy_slope;
        const double e2 = out.estimate.psi2 - res.truth.policy_intercept;
        const double e3 = out.estimate.psi3 - res.truth.psi3_target();
        out.sq_err_psi1 = e1 * e1;
        out.sq_err_psi2 = e2 * e2;
        out.sq_err_psi3 = e3 * e3;
      } catch (const LearnerDivergence&) {
        out.failed = true;
      }
    }
  });
  res.cells = aggregate_lq_cells(cfg, res.runs);
  return res;
}

}  // namespace qvrl
