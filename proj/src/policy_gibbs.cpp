#include "qvrl/policy_gibbs.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "qvrl/errors.hpp"

namespace qvrl {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be > 0");
}

double log_normalizer(double lambda, double var_param) {
  return 0.5 * lambda * std::log(kTwoPi * lambda) + 0.5 * lambda * std::log(var_param);
}

}  // namespace

GaussianPolicy::GaussianPolicy(double slope, double intercept, double variance)
    : slope(slope), intercept(intercept), variance(variance) {
  require_positive(variance, "policy variance");
}

GaussianPolicy GaussianPolicy::deterministic(double slope, double intercept) {
  GaussianPolicy p;
  p.slope = slope;
  p.intercept = intercept;
  p.variance = 0.0;
  return p;
}

double GaussianPolicy::log_density(double x, double a) const {
  require_positive(variance, "policy variance");
  const double u = a - mean(x);
  return -0.5 * u * u / variance - 0.5 * std::log(kTwoPi * variance);
}

double GaussianPolicy::entropy() const {
  require_positive(variance, "policy variance");
  return 0.5 * std::log(kTwoPi * std::numbers::e * variance);
}

double GaussianPolicy::sample(double x, RngStream& rng) const {
  const double z = rng.normal();
  return mean(x) + std::sqrt(variance) * z;
}

double merton_q(double a, const MertonParams& p, double lambda) {
  require_positive(p.psi2, "psi2");
  require_positive(lambda, "lambda");
  const double u = a - p.psi1;
  return -u * u / (2.0 * p.psi2) - log_normalizer(lambda, p.psi2);
}

QuadraticInAction merton_q_form(const MertonParams& p, double lambda) {
  require_positive(p.psi2, "psi2");
  require_positive(lambda, "lambda");
  const double k = 1.0 / (2.0 * p.psi2);
  return {-k, 2.0 * k * p.psi1, -k * p.psi1 * p.psi1 - log_normalizer(lambda, p.psi2)};
}

double merton_value(double t, double logx, const MertonParams& p, double horizon) {
  return logx + p.theta * (horizon - t);
}

double lq_q(double x, double a, const LqParams& p, double lambda) {
  require_positive(p.psi3, "psi3");
  require_positive(lambda, "lambda");
  const double u = a - p.psi1 * x - p.psi2;
  return -u * u / (2.0 * p.psi3) - log_normalizer(lambda, p.psi3);
}

QuadraticInAction lq_q_form(double x, const LqParams& p, double lambda) {
  require_positive(p.psi3, "psi3");
  require_positive(lambda, "lambda");
  const double m = p.psi1 * x + p.psi2;
  const double k = 1.0 / (2.0 * p.psi3);
  return {-k, 2.0 * k * m, -k * m * m - log_normalizer(lambda, p.psi3)};
}

double lq_value(double x, const LqParams& p) { return (p.theta2 * x + p.theta1) * x; }

GaussianPolicy gibbs_policy(const QuadraticInAction& q, double lambda) {
  require_positive(lambda, "lambda");
  if (!(q.a2 < 0.0)) throw DomainError("gibbs_policy: q is not strictly concave in the action");
  return GaussianPolicy(0.0, -q.a1 / (2.0 * q.a2), lambda / (-2.0 * q.a2));
}

GaussianPolicy gibbs_policy(const MertonParams& p, double lambda) {
  require_positive(p.psi2, "psi2");
  require_positive(lambda, "lambda");
  return GaussianPolicy(0.0, p.psi1, lambda * p.psi2);
}

GaussianPolicy gibbs_policy(const LqParams& p, double lambda) {
  require_positive(p.psi3, "psi3");
  require_positive(lambda, "lambda");
  return GaussianPolicy(p.psi1, p.psi2, lambda * p.psi3);
}

double QuadratureRule::integrate(const std::function<double(double)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
  return s;
}

QuadratureRule gauss_hermite_rule(std::size_t n, double center, double scale) {
  if (n < 2) throw PreconditionViolation("gauss_hermite_rule: need n >= 2");
  require_positive(scale, "quadrature scale");
  // Golub-Welsch on the Jacobi matrix of the physicists' Hermite weight.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                 static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i < n; ++i) {
    const double off = std::sqrt(static_cast<double>(i) / 2.0);
    const auto k = static_cast<Eigen::Index>(i);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  const double mass = std::sqrt(std::numbers::pi);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double stretch = std::numbers::sqrt2 * scale;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double z = eig.eigenvalues()(k);
    const double v0 = eig.eigenvectors()(0, k);
    const double w = mass * v0 * v0;
    rule.nodes[i] = center + stretch * z;
    rule.weights[i] = w > 0.0 ? stretch * std::exp(std::log(w) + z * z) : 0.0;
  }
  return rule;
}

QuadratureRule composite_simpson_rule(double lo, double hi, std::size_t intervals) {
  if (!(hi > lo)) throw PreconditionViolation("composite_simpson_rule: need hi > lo");
  if (intervals < 2 || intervals % 2 != 0)
    throw PreconditionViolation("composite_simpson_rule: intervals must be even and >= 2");
  const double h = (hi - lo) / static_cast<double>(intervals);
  QuadratureRule rule;
  rule.nodes.resize(intervals + 1);
  rule.weights.resize(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) {
    rule.nodes[i] = lo + static_cast<double>(i) * h;
    const double c = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    rule.weights[i] = c * h / 3.0;
  }
  return rule;
}

double normalization_residual(const std::function<double(double)>& q, double lambda,
                              const QuadratureRule& rule) {
  require_positive(lambda, "lambda");
  return std::abs(rule.integrate([&](double a) { return std::exp(q(a) / lambda); }) - 1.0);
}

}  // namespace qvrl
