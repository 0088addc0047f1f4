#include "qvrl/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qvrl/errors.hpp"
#include "qvrl/parallel.hpp"

namespace qvrl {

RateFit fit_loglog_rate(std::span<const SeriesPoint> series, double lo, double hi) {
  std::vector<double> lx, ly;
  std::ostringstream bad;
  std::size_t n_bad = 0;
  for (const auto& p : series) {
    if (p.index < lo || p.index > hi) continue;
    if (!(p.index > 0.0) || !(p.value > 0.0)) {
      if (n_bad < 10) bad << " (" << p.index << ", " << p.value << ")";
      ++n_bad;
      continue;
    }
    lx.push_back(std::log(p.index));
    ly.push_back(std::log(p.value));
  }
  if (n_bad)
    throw DomainError("fit_loglog_rate: " + std::to_string(n_bad) +
                      " non-positive points in window:" + bad.str());
  if (lx.size() < 10) throw PreconditionViolation("fit_loglog_rate: need >= 10 points in window");

  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  f.window_lo = lo;
  f.window_hi = hi;
  f.points = lx.size();
  return f;
}

RateFit fit_loglog_rate(std::span<const double> values, double lo, double hi) {
  std::vector<SeriesPoint> pts(values.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    pts[k] = {static_cast<double>(k + 1), values[k]};
  return fit_loglog_rate(pts, lo, hi);
}

OlsFit ols(std::span<const double> design, std::size_t columns, std::span<const double> y) {
  const std::size_t n = y.size();
  if (columns == 0 || design.size() != n * columns)
    throw PreconditionViolation("ols: design matrix has the wrong size");
  if (n <= columns) throw PreconditionViolation("ols: need more rows than columns");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> X(design.data(), static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(columns));
  const Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(n));
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < static_cast<Eigen::Index>(columns))
    throw DomainError("ols: design matrix is rank deficient");
  const Eigen::VectorXd beta = qr.solve(Y);
  const Eigen::VectorXd resid = Y - X * beta;
  const double s2 = resid.squaredNorm() / static_cast<double>(n - columns);
  const Eigen::MatrixXd cov = (X.transpose() * X).inverse() * s2;
  OlsFit f;
  f.residual_variance = s2;
  for (std::size_t j = 0; j < columns; ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    f.coefficients.push_back(beta(k));
    f.standard_errors.push_back(std::sqrt(cov(k, k)));
  }
  return f;
}

ValueEstimate risk_sensitive_value(std::span<const double> payoffs, double epsilon) {
  const std::size_t n = payoffs.size();
  if (n < 2) throw PreconditionViolation("risk_sensitive_value: need >= 2 payoffs");
  ValueEstimate v;
  v.paths = n;
  const double dn = static_cast<double>(n);
  double mean = 0.0;
  for (double z : payoffs) mean += z;
  mean /= dn;
  double var = 0.0;
  for (double z : payoffs) var += (z - mean) * (z - mean);
  var /= dn - 1.0;
  v.mean_payoff = mean;
  if (epsilon == 0.0) {
    v.value = mean;
    v.standard_error = std::sqrt(var / dn);
    return v;
  }
  double shift = -std::numeric_limits<double>::infinity();
  for (double z : payoffs) shift = std::max(shift, epsilon * z);
  double wm = 0.0;
  for (double z : payoffs) wm += std::exp(epsilon * z - shift);
  wm /= dn;
  double wv = 0.0;
  for (double z : payoffs) {
    const double w = std::exp(epsilon * z - shift) - wm;
    wv += w * w;
  }
  wv /= dn - 1.0;
  v.value = (shift + std::log(wm)) / epsilon;
  v.standard_error = std::sqrt(wv / dn) / (wm * std::abs(epsilon));
  return v;
}

namespace {

double path_payoff(const Environment& env, const GaussianPolicy& policy, const TdConfig& cfg,
                   const TimeGrid& grid, const RngStream& rng, std::size_t i) {
  RngStream stream = rng.substream(i);
  const auto sampler = [&policy](double, std::span<const double> x, RngStream& r,
                                 std::span<double> a) { a[0] = policy.sample(x[0], r); };
  const Trajectory tr = simulate_episode(env, grid, sampler, stream);
  double z = tr.terminal;
  for (std::size_t k = 0; k < tr.steps(); ++k) {
    double rate = tr.rewards[k];
    if (cfg.lambda > 0.0 && policy.variance > 0.0)
      rate -= cfg.lambda * policy.log_density(tr.state(k)[0], tr.action(k)[0]);
    z += rate * grid.dt();
  }
  return z;
}

template <class Driver>
ValueEstimate value_mc_impl(const Environment& env, const GaussianPolicy& policy,
                            const TdConfig& cfg, const TimeGrid& grid, std::size_t n_paths,
                            const RngStream& rng, Driver&& drive) {
  if (n_paths < 100) throw PreconditionViolation("risk_sensitive_value_mc: need >= 100 paths");
  env.validate();
  std::vector<double> z(n_paths);
  drive(n_paths, [&](std::size_t i) { z[i] = path_payoff(env, policy, cfg, grid, rng, i); });
  return risk_sensitive_value(z, cfg.epsilon);
}

}  // namespace

ValueEstimate risk_sensitive_value_mc(const Environment& env, const GaussianPolicy& policy,
                                      const TdConfig& cfg, const TimeGrid& grid,
                                      std::size_t n_paths, const RngStream& rng, int workers) {
  return value_mc_impl(env, policy, cfg, grid, n_paths, rng, [workers](std::size_t n, auto&& b) {
    for_each_index_parallel(n, workers, b);
  });
}

ValueEstimate risk_sensitive_value_mc_serial(const Environment& env, const GaussianPolicy& policy,
                                             const TdConfig& cfg, const TimeGrid& grid,
                                             std::size_t n_paths, const RngStream& rng) {
  return value_mc_impl(env, policy, cfg, grid, n_paths, rng,
                       [](std::size_t n, auto&& b) { for_each_index_serial(n, b); });
}

double pg_true_gradient(double phi, double x, double horizon, double epsilon) {
  const double e1 = std::exp(-phi * horizon), e2 = std::exp(-2.0 * phi * horizon);
  return -x * e1 * horizon + epsilon * horizon / (2.0 * phi) * e2 -
         epsilon / (4.0 * phi * phi) * (1.0 - e2);
}

double pg_naive_mean(double phi, double x, double horizon) {
  return -x * std::exp(-phi * horizon) * horizon;
}

PgBiasReport pg_bias_demo(double phi, double x, double horizon, double epsilon,
                          std::size_t n_paths, double dt, const RngStream& rng, int workers) {
  if (!(phi > 0.0)) throw PreconditionViolation("pg_bias_demo: phi must be > 0");
  if (n_paths < 1000) throw PreconditionViolation("pg_bias_demo: need >= 1000 paths");
  const TimeGrid grid(0.0, horizon, dt);
  Environment env;
  env.drift = [](double, std::span<const double>, std::span<const double> a,
                 std::span<double> out) { out[0] = a[0]; };
  env.diffusion = [](double, std::span<const double>, std::span<const double>,
                     std::span<double> out) { out[0] = 1.0; };
  env.reward_rate = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
  env.terminal_payoff = [](std::span<const double> s) { return s[0]; };
  env.initial_state = {x};
  const GaussianPolicy policy(-phi, 0.0, 1.0);
  const auto value = [&](double t, double s) {
    return s * std::exp(-phi * (horizon - t)) +
           epsilon / (4.0 * phi) * (1.0 - std::exp(-2.0 * phi * (horizon - t)));
  };

  std::vector<double> est(n_paths);
  for_each_index(n_paths, workers, [&](std::size_t i) {
    RngStream stream = rng.substream(i);
    const auto sampler = [&policy](double, std::span<const double> s, RngStream& r,
                                   std::span<double> a) { a[0] = policy.sample(s[0], r); };
    const Trajectory tr = simulate_episode(env, grid, sampler, stream);
    double g = 0.0;
    for (std::size_t k = 0; k < tr.steps(); ++k) {
      const double s = tr.state(k)[0], a = tr.action(k)[0];
      const double dj = value(tr.times[k + 1], tr.state(k + 1)[0]) - value(tr.times[k], s);
      g += -(a + phi * s) * s * (dj + 0.5 * epsilon * dj * dj);
    }
    est[i] = g;
  });

  PgBiasReport rep;
  rep.paths = n_paths;
  const double n = static_cast<double>(n_paths);
  for (double g : est) rep.naive_estimate += g;
  rep.naive_estimate /= n;
  double var = 0.0;
  for (double g : est) var += (g - rep.naive_estimate) * (g - rep.naive_estimate);
  rep.naive_stderr = std::sqrt(var / (n - 1.0) / n);
  rep.true_gradient = pg_true_gradient(phi, x, horizon, epsilon);
  rep.predicted_naive_mean = pg_naive_mean(phi, x, horizon);
  rep.bias = rep.true_gradient - rep.predicted_naive_mean;
  return rep;
}

}  // namespace qvrl
