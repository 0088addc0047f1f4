#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "qvrl/rng.hpp"

namespace qvrl {

struct MertonParams {
  double theta = 0.0;
  double psi1 = 0.0;
  double psi2 = 1.0;
};

struct LqParams {
  double theta0 = 0.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
  double psi3 = 1.0;
};

/// N(slope*x + intercept, variance) over a scalar action.
struct GaussianPolicy {
  double slope = 0.0;
  double intercept = 0.0;
  double variance = 1.0;

  /// Throws DomainError if variance <= 0. Variance 0 is allowed only for
  /// the deterministic executions built with `deterministic()`.
  GaussianPolicy(double slope, double intercept, double variance);
  static GaussianPolicy deterministic(double slope, double intercept);

  double mean(double x) const noexcept { return slope * x + intercept; }
  double log_density(double x, double a) const;
  double entropy() const;
  double sample(double x, RngStream& rng) const;

 private:
  GaussianPolicy() = default;
};

/// q(a) = a2*a^2 + a1*a + a0.
struct QuadraticInAction {
  double a2 = 0.0;
  double a1 = 0.0;
  double a0 = 0.0;
  double operator()(double a) const noexcept { return (a2 * a + a1) * a + a0; }
};

/// -(a-psi1)^2/(2 psi2) - (lambda/2) log(2 pi lambda) - (lambda/2) log psi2.
double merton_q(double a, const MertonParams& p, double lambda);
QuadraticInAction merton_q_form(const MertonParams& p, double lambda);

/// logx + theta (T - t).
double merton_value(double t, double logx, const MertonParams& p, double horizon);

/// -(a - psi1 x - psi2)^2/(2 psi3) - (lambda/2) log(2 pi lambda) - (lambda/2) log psi3.
double lq_q(double x, double a, const LqParams& p, double lambda);
QuadraticInAction lq_q_form(double x, const LqParams& p, double lambda);

/// theta2 x^2 + theta1 x.
double lq_value(double x, const LqParams& p);

/// The Gibbs density exp(q/lambda) normalized over the real line. Throws
/// DomainError unless q is strictly concave in a.
GaussianPolicy gibbs_policy(const QuadraticInAction& q, double lambda);
GaussianPolicy gibbs_policy(const MertonParams& p, double lambda);
GaussianPolicy gibbs_policy(const LqParams& p, double lambda);

/// Integration rule for f over the real line: sum_i weights[i] * f(nodes[i]).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  double integrate(const std::function<double(double)>& f) const;
};

/// n-point Gauss-Hermite rule rescaled to integrate against da, exact for
/// polynomials times exp(-(a-center)^2/(2 scale^2)).
QuadratureRule gauss_hermite_rule(std::size_t n, double center, double scale);

/// Composite Simpson rule on [lo, hi] with `intervals` (even) panels.
QuadratureRule composite_simpson_rule(double lo, double hi, std::size_t intervals);

/// |integral of exp(q/lambda) - 1| under `rule`.
double normalization_residual(const std::function<double(double)>& q, double lambda,
                              const QuadratureRule& rule);

}  // namespace qvrl
