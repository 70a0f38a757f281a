#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/errors.hpp"
#include "dwgf/random.hpp"
#include "dwgf/schedule.hpp"

namespace dwgf {

struct MixtureComponent {
  double weight;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  bool operator==(const MixtureComponent &o) const {
    return weight == o.weight && detail::same(mean, o.mean) &&
           detail::same(cov, o.cov);
  }
};

/// Gaussian mixture in latent space. Used as a closed-form prior whose
/// diffused marginals and scores are exact at every diffusion time.
///
/// Each component keeps its Cholesky factor and log normalizer so that
/// density and score evaluation is a triangular solve per component.
class GaussianMixture {
public:
  GaussianMixture() = default;

  explicit GaussianMixture(std::vector<MixtureComponent> components)
      : components_(std::move(components)) {
    if (components_.empty())
      throw ConfigError("prior.components: at least one component required");
    dim_ = components_.front().mean.size();
    if (dim_ < 1)
      throw ConfigError("prior.components[0].mean: empty mean vector");

    double total = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const auto &c = components_[k];
      const std::string where = "prior.components[" + std::to_string(k) + "]";
      // Zero weights are tolerated as a degenerate case; log weight = -inf.
      if (!(c.weight >= 0.0) || !std::isfinite(c.weight))
        throw ConfigError(where + ".weight: must be nonnegative");
      if (c.mean.size() != dim_)
        throw ShapeError(where + ".mean: expected dimension " +
                         std::to_string(dim_) + ", got " +
                         std::to_string(c.mean.size()));
      if (c.cov.rows() != dim_ || c.cov.cols() != dim_)
        throw ShapeError(where + ".cov: expected " + std::to_string(dim_) +
                         "x" + std::to_string(dim_));
      if (!c.mean.allFinite() || !c.cov.allFinite())
        throw NumericError(where + ": non-finite entries");
      if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() >
          1e-12 * std::max(1.0, c.cov.cwiseAbs().maxCoeff()))
        throw ConfigError(where + ".cov: not symmetric");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ConfigError("prior.components: weights sum to " +
                        std::to_string(total) + ", expected 1");

    factors_.reserve(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) {
      Eigen::LLT<Eigen::MatrixXd> llt(components_[k].cov);
      if (llt.info() != Eigen::Success)
        throw NumericError("prior.components[" + std::to_string(k) +
                           "].cov: not positive definite");
      const Eigen::MatrixXd L = llt.matrixL();
      const double log_det = 2.0 * L.diagonal().array().log().sum();
      factors_.push_back(
          {std::move(llt),
           std::log(components_[k].weight) -
               0.5 * (static_cast<double>(dim_) *
                          std::log(2.0 * std::numbers::pi) +
                      log_det)});
    }
  }

  /// Single Gaussian N(mean, cov).
  static GaussianMixture gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
    return GaussianMixture({{1.0, std::move(mean), std::move(cov)}});
  }

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return components_.size(); }
  const std::vector<MixtureComponent> &components() const {
    return components_;
  }

  /// Exact pushforward through N(alpha z, sigma^2 I).
  GaussianMixture diffused(double alpha, double sigma) const {
    std::vector<MixtureComponent> out;
    out.reserve(components_.size());
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(dim_, dim_);
    for (const auto &c : components_)
      out.push_back(
          {c.weight, alpha * c.mean, alpha * alpha * c.cov + sigma * sigma * I});
    return GaussianMixture(std::move(out));
  }

  double log_density(const Eigen::VectorXd &z) const {
    detail::require_size(z.size(), dim_, "log_density: z");
    std::vector<double> terms(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k)
      terms[k] = component_log_term(k, z);
    return log_sum_exp(terms);
  }

  /// grad_z log density, as the responsibility-weighted sum of component
  /// scores -cov_k^{-1} (z - mean_k).
  Eigen::VectorXd score(const Eigen::VectorXd &z) const {
    detail::require_size(z.size(), dim_, "score: z");
    if (!z.allFinite())
      throw NumericError("score: non-finite query point");
    std::vector<double> terms(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k)
      terms[k] = component_log_term(k, z);
    const double lse = log_sum_exp(terms);

    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const double r = std::exp(terms[k] - lse);
      if (r == 0.0)
        continue;
      out -= r * factors_[k].llt.solve(z - components_[k].mean);
    }
    return out;
  }

  /// i.i.d. draws: component by weight, then mean + L xi.
  std::vector<Eigen::VectorXd> sample(std::size_t count, Rng &rng) const {
    if (count < 1)
      throw DomainError("sample: count must be >= 1");
    std::vector<double> weights;
    for (const auto &c : components_)
      weights.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(weights.begin(),
                                                 weights.end());
    std::vector<Eigen::VectorXd> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
      const std::size_t k = pick(rng);
      const Eigen::VectorXd xi = standard_normal(rng, dim_);
      out.push_back(components_[k].mean +
                    factors_[k].llt.matrixL() * xi);
    }
    return out;
  }

  /// Overall mean and covariance of the mixture (moment match).
  Eigen::VectorXd mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim_);
    for (const auto &c : components_)
      m += c.weight * c.mean;
    return m;
  }

  Eigen::MatrixXd covariance() const {
    const Eigen::VectorXd m = mean();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto &c : components_) {
      const Eigen::VectorXd d = c.mean - m;
      S += c.weight * (c.cov + d * d.transpose());
    }
    return S;
  }

  bool operator==(const GaussianMixture &o) const {
    return components_ == o.components_;
  }

  static double log_sum_exp(const std::vector<double> &terms) {
    const double hi = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(hi))
      return hi;
    double acc = 0.0;
    for (double t : terms)
      acc += std::exp(t - hi);
    return hi + std::log(acc);
  }

private:
  struct Factor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_norm; // log weight - (d log 2pi + log det cov) / 2
  };

  double component_log_term(std::size_t k, const Eigen::VectorXd &z) const {
    const Eigen::VectorXd white =
        factors_[k].llt.matrixL().solve(z - components_[k].mean);
    return factors_[k].log_norm - 0.5 * white.squaredNorm();
  }

  std::vector<MixtureComponent> components_;
  std::vector<Factor> factors_;
  Eigen::Index dim_ = 0;
};

/// Prior diffused to grid time s.
inline GaussianMixture diffused_mixture(const GaussianMixture &prior,
                                        const Schedule &sched, int s) {
  const auto [alpha, sigma] = sched.alpha_sigma(s);
  return prior.diffused(alpha, sigma);
}

inline Eigen::VectorXd score_at_time(const GaussianMixture &prior,
                                     const Schedule &sched, int s,
                                     const Eigen::VectorXd &z) {
  return diffused_mixture(prior, sched, s).score(z);
}

inline double log_density_at_time(const GaussianMixture &prior,
                                  const Schedule &sched, int s,
                                  const Eigen::VectorXd &z) {
  return diffused_mixture(prior, sched, s).log_density(z);
}

} // namespace dwgf
