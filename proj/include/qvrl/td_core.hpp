#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qvrl/errors.hpp"
#include "qvrl/sde_sim.hpp"

namespace qvrl {

struct TdConfig {
  double epsilon = 0.0;
  double lambda = 1.0;
  double dt = 0.01;

  /// Throws PreconditionViolation unless lambda > 0 and dt > 0.
  void validate() const;
};

struct TdIncrement {
  double delta = 0.0;  ///< sum of per-step residuals
  std::vector<double> deltas;
  std::vector<double> theta_direction;
  std::vector<double> psi_direction;
  double beta_direction = 0.0;
};

/// dJ + reward*dt - q*dt + (epsilon/2) dJ^2 with dJ = j_next - j_curr.
inline double td_residual_episodic(double j_next, double j_curr, double reward, double q_val,
                                   const TdConfig& cfg) noexcept {
  const double dj = j_next - j_curr;
  return dj + (reward - q_val) * cfg.dt + 0.5 * cfg.epsilon * dj * dj;
}

/// Episodic residual minus beta*dt.
inline double td_residual_ergodic(double j_next, double j_curr, double reward, double q_val,
                                  double beta, const TdConfig& cfg) noexcept {
  return td_residual_episodic(j_next, j_curr, reward, q_val, cfg) - beta * cfg.dt;
}

/// Test-function weighted residual sums over one trajectory.
///
///   j_eval(t, x) -> double
///   q_eval(t, x, a) -> double
///   xi(t, x, out)      fills theta_dim entries
///   zeta(t, x, a, out) fills psi_dim entries
///
/// The value at the last grid point is j_eval(t_K, x_K). With `beta` set the
/// ergodic residual is used and beta_direction is the residual sum.
template <class JEval, class QEval, class Xi, class Zeta>
TdIncrement moment_increments(const Trajectory& traj, JEval&& j_eval, QEval&& q_eval, Xi&& xi,
                              Zeta&& zeta, std::size_t theta_dim, std::size_t psi_dim,
                              const TdConfig& cfg, const double* beta = nullptr) {
  const std::size_t K = traj.steps();
  if (K == 0) throw PreconditionViolation("moment_increments: empty trajectory");
  TdIncrement inc;
  inc.deltas.resize(K);
  inc.theta_direction.assign(theta_dim, 0.0);
  inc.psi_direction.assign(psi_dim, 0.0);
  std::vector<double> xi_buf(theta_dim), zeta_buf(psi_dim);

  double j_curr = j_eval(traj.times[0], traj.state(0));
  for (std::size_t k = 0; k < K; ++k) {
    const double t = traj.times[k];
    const auto x = traj.state(k);
    const auto a = traj.action(k);
    const double j_next = j_eval(traj.times[k + 1], traj.state(k + 1));
    const double q = q_eval(t, x, a);
    const double d = beta ? td_residual_ergodic(j_next, j_curr, traj.rewards[k], q, *beta, cfg)
                          : td_residual_episodic(j_next, j_curr, traj.rewards[k], q, cfg);
    if (!std::isfinite(d))
      throw SimulationDivergence("non-finite TD residual", t, {x.begin(), x.end()},
                                 {a.begin(), a.end()});
    inc.deltas[k] = d;
    inc.delta += d;
    xi(t, x, std::span<double>(xi_buf));
    zeta(t, x, a, std::span<double>(zeta_buf));
    for (std::size_t i = 0; i < theta_dim; ++i) inc.theta_direction[i] += xi_buf[i] * d;
    for (std::size_t i = 0; i < psi_dim; ++i) inc.psi_direction[i] += zeta_buf[i] * d;
    j_curr = j_next;
  }
  if (beta) inc.beta_direction = inc.delta;
  return inc;
}

}  // namespace qvrl
