#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qvrl/policy_gibbs.hpp"
#include "qvrl/rng.hpp"
#include "qvrl/sde_sim.hpp"
#include "qvrl/td_core.hpp"

namespace qvrl {

struct SeriesPoint {
  double index = 0.0;
  double value = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::size_t points = 0;
};

/// Least-squares line through (log index, log value) for points with
/// index in [lo, hi]. Throws DomainError naming non-positive points and
/// PreconditionViolation for fewer than 10 points.
RateFit fit_loglog_rate(std::span<const SeriesPoint> series, double lo, double hi);

/// Same, for values[k] observed at index k + 1.
RateFit fit_loglog_rate(std::span<const double> values, double lo, double hi);

struct OlsFit {
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  double residual_variance = 0.0;
};

/// Ordinary least squares of y on the columns of the row-major n x p design
/// matrix, with classical standard errors.
OlsFit ols(std::span<const double> design, std::size_t columns, std::span<const double> y);

struct ValueEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  /// Plain sample mean of the path payoffs.
  double mean_payoff = 0.0;
  std::size_t paths = 0;
};

/// (1/eps) log E exp(eps Z) with Z = sum (reward - lambda log pi) dt + payoff,
/// estimated by log-sum-exp over paths; path i uses rng.substream(i).
/// eps = 0 returns the plain mean. The standard error is the delta-method
/// error of the log-mean.
ValueEstimate risk_sensitive_value_mc(const Environment& env, const GaussianPolicy& policy,
                                      const TdConfig& cfg, const TimeGrid& grid,
                                      std::size_t n_paths, const RngStream& rng, int workers);
ValueEstimate risk_sensitive_value_mc_serial(const Environment& env, const GaussianPolicy& policy,
                                             const TdConfig& cfg, const TimeGrid& grid,
                                             std::size_t n_paths, const RngStream& rng);

/// Risk-sensitive certainty equivalent of fixed payoffs.
ValueEstimate risk_sensitive_value(std::span<const double> payoffs, double epsilon);

struct PgBiasReport {
  double naive_estimate = 0.0;
  double naive_stderr = 0.0;
  double true_gradient = 0.0;
  double predicted_naive_mean = 0.0;
  double bias = 0.0;
  std::size_t paths = 0;
};

/// d/dphi of x e^{-phi T} + (eps/(4 phi))(1 - e^{-2 phi T}).
double pg_true_gradient(double phi, double x, double horizon, double epsilon);
/// -x e^{-phi T} T.
double pg_naive_mean(double phi, double x, double horizon);

/// Score-function gradient estimate that omits the cross-variation term,
/// on dX = a dt + dW with a ~ N(-phi X, 1), using the closed-form value.
PgBiasReport pg_bias_demo(double phi, double x, double horizon, double epsilon,
                          std::size_t n_paths, double dt, const RngStream& rng, int workers);

}  // namespace qvrl
