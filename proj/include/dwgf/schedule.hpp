#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dwgf/errors.hpp"

namespace dwgf {

struct AlphaSigma {
  double alpha;
  double sigma;
};

/// Variance-preserving diffusion schedule with a linear rate on normalized
/// time tau = s / T:
///
///   beta(tau) = beta_min + (beta_max - beta_min) tau
///   B(tau)    = beta_min tau + (beta_max - beta_min) tau^2 / 2
///   alpha_s   = exp(-B / 2),   sigma_s = sqrt(1 - alpha_s^2)
///
/// The forward kernel is p(z_s | z_0) = N(alpha_s z_0, sigma_s^2 I).
/// Public time arguments are grid indices s in {0, ..., T}.
class Schedule {
public:
  Schedule(int T = 999, double beta_min = 0.1, double beta_max = 20.0)
      : T_(T), beta_min_(beta_min), beta_max_(beta_max) {
    if (T < 1)
      throw ConfigError("schedule.T: must be a positive integer");
    if (!(beta_min > 0.0) || !std::isfinite(beta_min))
      throw ConfigError("schedule.beta_min: must be positive");
    if (!(beta_max > 0.0) || !std::isfinite(beta_max))
      throw ConfigError("schedule.beta_max: must be positive");
    if (beta_max < beta_min)
      throw ConfigError("schedule.beta_max: must be >= beta_min");
  }

  int T() const { return T_; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  /// Integrated rate B(tau).
  double integrated_rate(double tau) const {
    return beta_min_ * tau + 0.5 * (beta_max_ - beta_min_) * tau * tau;
  }

  /// (alpha_s, sigma_s) at grid index s.
  AlphaSigma alpha_sigma(int s) const {
    check_time(s);
    return at(static_cast<double>(s));
  }

  /// Continuous-time evaluation for s in [0, T]; used by quadrature.
  AlphaSigma at(double s) const {
    if (!(s >= 0.0 && s <= static_cast<double>(T_)))
      throw DomainError("schedule: time " + std::to_string(s) +
                        " outside [0, " + std::to_string(T_) + "]");
    const double B = integrated_rate(s / static_cast<double>(T_));
    // sigma^2 = 1 - exp(-B) evaluated without cancellation near s = 0.
    return {std::exp(-0.5 * B), std::sqrt(-std::expm1(-B))};
  }

  /// z_s = alpha_s z0 + sigma_s eps.
  Eigen::VectorXd diffuse(const Eigen::VectorXd &z0, int s,
                          const Eigen::VectorXd &eps) const {
    detail::require_size(eps.size(), z0.size(), "diffuse: eps");
    const auto [alpha, sigma] = alpha_sigma(s);
    return alpha * z0 + sigma * eps;
  }

  /// Regularization weight w(s) = c sigma_s^2 / alpha_s.
  double weight(int s, double c) const {
    check_weight_constant(c);
    check_time(s);
    return weight_at(static_cast<double>(s), c);
  }

  double weight_at(double s, double c) const {
    const auto [alpha, sigma] = at(s);
    return c * sigma * sigma / alpha;
  }

  static void check_weight_constant(double c) {
    if (!(c > 0.0 && c < 1.0))
      throw ConfigError("schedule.c: must lie in (0, 1), got " +
                        std::to_string(c));
  }

  bool operator==(const Schedule &) const = default;

private:
  void check_time(int s) const {
    if (s < 0 || s > T_)
      throw DomainError("schedule: time index " + std::to_string(s) +
                        " outside [0, " + std::to_string(T_) + "]");
  }

  int T_;
  double beta_min_;
  double beta_max_;
};

} // namespace dwgf
