#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/analytic_prior.hpp"
#include "dwgf/autoencoder.hpp"
#include "dwgf/errors.hpp"
#include "dwgf/observation.hpp"
#include "dwgf/schedule.hpp"

// Closed-form and brute-force reference computations. Nothing here calls
// into the flow engine; the test suites compare the engine against these.
namespace dwgf::oracle {

struct GaussianDist {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  GaussianDist diffused(double alpha, double sigma) const {
    const auto d = mean.size();
    return {alpha * mean, alpha * alpha * cov +
                              sigma * sigma * Eigen::MatrixXd::Identity(d, d)};
  }
};

namespace detail {
inline Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd &A,
                                            const char *what) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(what) + ": matrix not positive definite");
  return llt;
}

inline double log_det(const Eigen::LLT<Eigen::MatrixXd> &llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}
} // namespace detail

/// Exact Gaussian posterior of z given y for z ~ prior, x = W z + b,
/// y = A x + sigma_y eps.
inline GaussianDist conjugate_posterior(const GaussianDist &prior,
                                        const LinearAutoencoder &ae,
                                        const ObservationModel &model) {
  const Eigen::MatrixXd AW = model.op().matrix() * ae.W();
  const double s2 = model.sigma_y() * model.sigma_y();
  const auto S_llt = detail::cholesky(prior.cov, "conjugate_posterior prior");
  const Eigen::Index d = prior.mean.size();
  const Eigen::MatrixXd S_inv = S_llt.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd precision = S_inv + AW.transpose() * AW / s2;
  const auto P_llt = detail::cholesky(precision, "conjugate_posterior precision");
  const Eigen::VectorXd rhs =
      S_inv * prior.mean +
      AW.transpose() * (model.y() - model.op().apply(ae.b())) / s2;
  return {P_llt.solve(rhs), P_llt.solve(Eigen::MatrixXd::Identity(d, d))};
}

/// Stationary point of the data drift at zero decode noise:
///   W^T [ A^T (A x - y) / sigma_y^2 + lambda_hat (x - D(E(x))) ] = 0,
///   x = W z + b,
/// with D(E(x)) frozen as in the drift. This is a linear system in z.
inline Eigen::VectorXd map_point(const GaussianDist &prior,
                                 const LinearAutoencoder &ae,
                                 const ObservationModel &model,
                                 double lambda_hat) {
  dwgf::detail::require_size(prior.mean.size(), ae.latent_dim(),
                             "map_point: prior mean");
  const Eigen::MatrixXd &W = ae.W();
  const Eigen::MatrixXd AW = model.op().matrix() * W;
  const double s2 = model.sigma_y() * model.sigma_y();
  const Eigen::Index dx = ae.pixel_dim();
  const Eigen::MatrixXd residual_map =
      Eigen::MatrixXd::Identity(dx, dx) - W * ae.E_W();

  const Eigen::MatrixXd H =
      AW.transpose() * AW / s2 + lambda_hat * W.transpose() * residual_map * W;
  const Eigen::VectorXd r =
      AW.transpose() * (model.y() - model.op().apply(ae.b())) / s2 +
      lambda_hat * W.transpose() * W * (ae.E_W() * ae.b() + ae.E_b());

  Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
  if (lu.rank() < H.rows())
    throw NumericError("map_point: rank-deficient normal equations");
  return lu.solve(r);
}

inline double gaussian_kl(const GaussianDist &q, const GaussianDist &p) {
  dwgf::detail::require_size(q.mean.size(), p.mean.size(), "gaussian_kl");
  const double d = static_cast<double>(q.mean.size());
  const auto p_llt = detail::cholesky(p.cov, "gaussian_kl p");
  const auto q_llt = detail::cholesky(q.cov, "gaussian_kl q");
  const Eigen::VectorXd diff = p.mean - q.mean;
  const double trace = p_llt.solve(q.cov).trace();
  const double maha = diff.dot(p_llt.solve(diff));
  return 0.5 * (trace + maha - d + detail::log_det(p_llt) -
                detail::log_det(q_llt));
}

/// Trapezoid rule over n_nodes equispaced s in [0, T] of
/// w(s) KL(q_s || p_s), with q_s, p_s the exactly diffused Gaussians.
inline double weighted_kl(const GaussianDist &q, const GaussianDist &p,
                          const Schedule &sched, double c, int n_nodes = 200) {
  if (n_nodes < 2)
    throw DomainError("weighted_kl: n_nodes must be >= 2");
  Schedule::check_weight_constant(c);
  const double T = static_cast<double>(sched.T());
  const double h = T / (n_nodes - 1);
  double total = 0.0;
  for (int j = 0; j < n_nodes; ++j) {
    const double s = j == n_nodes - 1 ? T : j * h;
    const auto [alpha, sigma] = sched.at(s);
    const double w = sched.weight_at(s, c);
    const double f =
        w == 0.0 ? 0.0
                 : w * gaussian_kl(q.diffused(alpha, sigma),
                                   p.diffused(alpha, sigma));
    total += (j == 0 || j == n_nodes - 1) ? 0.5 * f : f;
  }
  return h * total;
}

/// Riemann-sum KL between two 1-D mixtures on [lo, hi]. Any two inputs share
/// the grid, so convexity in q carries over exactly to the discrete value.
inline double kl_on_grid_1d(const GaussianMixture &q, const GaussianMixture &p,
                            double lo, double hi, int n_points) {
  if (q.dim() != 1 || p.dim() != 1)
    throw ShapeError("kl_on_grid_1d: one-dimensional mixtures only");
  const double h = (hi - lo) / (n_points - 1);
  double acc = 0.0;
  Eigen::VectorXd z(1);
  for (int k = 0; k < n_points; ++k) {
    z[0] = lo + k * h;
    const double lq = q.log_density(z);
    const double lp = p.log_density(z);
    const double dq = std::exp(lq);
    if (dq > 0.0)
      acc += dq * (lq - lp);
  }
  return h * acc;
}

/// Weighted KL with every per-time KL taken on a fixed 1-D grid.
inline double weighted_kl_on_grid_1d(const GaussianMixture &q,
                                     const GaussianMixture &p,
                                     const Schedule &sched, double c,
                                     int n_nodes, double lo, double hi,
                                     int n_points) {
  const double T = static_cast<double>(sched.T());
  const double h = T / (n_nodes - 1);
  double total = 0.0;
  for (int j = 1; j < n_nodes; ++j) {
    const double s = j == n_nodes - 1 ? T : j * h;
    const auto [alpha, sigma] = sched.at(s);
    const double f = sched.weight_at(s, c) *
                     kl_on_grid_1d(q.diffused(alpha, sigma),
                                   p.diffused(alpha, sigma), lo, hi, n_points);
    total += j == n_nodes - 1 ? 0.5 * f : f;
  }
  return h * total;
}

/// 10 log10(peak^2 / MSE), or `cap` when the inputs coincide.
inline double psnr(const Eigen::VectorXd &x, const Eigen::VectorXd &x_ref,
                   double peak, double cap = 100.0) {
  dwgf::detail::require_size(x.size(), x_ref.size(), "psnr");
  const double mse = (x - x_ref).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0)
    return cap;
  return 10.0 * std::log10(peak * peak / mse);
}

struct EnsembleStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance of the rows of `particles`.
inline EnsembleStats ensemble_stats(const Eigen::MatrixXd &particles) {
  const Eigen::Index n = particles.rows();
  if (n < 2)
    throw DomainError("ensemble_stats: need at least 2 particles");
  Eigen::VectorXd mean = particles.colwise().mean().transpose();
  const Eigen::MatrixXd centered = particles.rowwise() - mean.transpose();
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  return {std::move(mean), std::move(cov)};
}

/// Central-difference gradient.
inline Eigen::VectorXd
central_gradient(const std::function<double(const Eigen::VectorXd &)> &f,
                 const Eigen::VectorXd &x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / ||b||, falling back to the absolute error when b = 0.
inline double relative_error(const Eigen::VectorXd &a,
                             const Eigen::VectorXd &b) {
  const double nb = b.norm();
  const double err = (a - b).norm();
  return nb > 0.0 ? err / nb : err;
}

/// log (1/N) sum_j N(query; alpha c_j, sigma^2 I), summed term by term.
inline double empirical_log_density(const Eigen::MatrixXd &centers,
                                    double alpha, double sigma,
                                    const Eigen::VectorXd &query) {
  const double d = static_cast<double>(query.size());
  std::vector<double> terms;
  for (Eigen::Index j = 0; j < centers.rows(); ++j) {
    const double r2 =
        (query - alpha * centers.row(j).transpose()).squaredNorm();
    terms.push_back(-0.5 * r2 / (sigma * sigma) -
                    0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma));
  }
  return GaussianMixture::log_sum_exp(terms) -
         std::log(static_cast<double>(centers.rows()));
}

/// Frozen randomness for a single particle's Monte-Carlo objective.
struct FrozenDraw {
  Eigen::VectorXd eps;                // decode noise
  Eigen::VectorXd nu;                 // diffusion noise
  Eigen::VectorXd consistency_anchor; // D(E(x0)) held fixed
};

/// Per-particle Monte-Carlo objective whose gradient in z is the drift
/// u + gamma v:
///   (1/2 sigma_y^2) ||y - A x0||^2 + (lambda_hat/2) ||x0 - anchor||^2
///   + gamma w(s) [ log kde(z_s) - log prior_s(z_s) ],
/// x0 = W z + b + rho eps, z_s = alpha_s z + sigma_s nu, kde centers frozen.
inline double particle_objective(const LinearAutoencoder &ae,
                                 const ObservationModel *model,
                                 const GaussianMixture &prior,
                                 const Schedule &sched, int s,
                                 const Eigen::MatrixXd &snapshot, double gamma,
                                 double lambda_hat, double c,
                                 const FrozenDraw &draw,
                                 const Eigen::VectorXd &z) {
  double value = 0.0;
  if (model) {
    const Eigen::VectorXd x0 = ae.W() * z + ae.b() + ae.rho() * draw.eps;
    const double s2 = model->sigma_y() * model->sigma_y();
    value += 0.5 * (model->y() - model->op().matrix() * x0).squaredNorm() / s2;
    value += 0.5 * lambda_hat * (x0 - draw.consistency_anchor).squaredNorm();
  }
  if (gamma > 0.0 && s > 0) {
    const auto [alpha, sigma] = sched.at(static_cast<double>(s));
    const Eigen::VectorXd z_s = alpha * z + sigma * draw.nu;
    const double w = c * sigma * sigma / alpha;
    value += gamma * w *
             (empirical_log_density(snapshot, alpha, sigma, z_s) -
              prior.diffused(alpha, sigma).log_density(z_s));
  }
  return value;
}

} // namespace dwgf::oracle
