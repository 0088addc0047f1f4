#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qvrl {

/// Raised when an argument lies outside the domain of a closed-form
/// expression (e.g. a non-positive variance parameter).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a caller violates a documented precondition.
class PreconditionViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A drift/diffusion evaluation or a learner update produced a non-finite
/// number. Carries the point at which it happened.
class SimulationDivergence : public std::runtime_error {
 public:
  SimulationDivergence(const std::string& what, double t, std::vector<double> state,
                       std::vector<double> action)
      : std::runtime_error(what), t_(t), state_(std::move(state)), action_(std::move(action)) {}

  double time() const noexcept { return t_; }
  const std::vector<double>& state() const noexcept { return state_; }
  const std::vector<double>& action() const noexcept { return action_; }

 private:
  double t_;
  std::vector<double> state_;
  std::vector<double> action_;
};

/// A learner run aborted because parameters or increments became
/// non-finite. `episode()` is the episode (or step, for ergodic runs) index.
class LearnerDivergence : public std::runtime_error {
 public:
  LearnerDivergence(const std::string& what, std::size_t episode)
      : std::runtime_error(what), episode_(episode) {}
  std::size_t episode() const noexcept { return episode_; }

 private:
  std::size_t episode_;
};

/// The classical LQ problem has no admissible Riccati root.
class InfeasibleProblem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration. `problems()` lists every issue found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

}  // namespace qvrl
