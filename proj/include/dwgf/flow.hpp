#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/analytic_prior.hpp"
#include "dwgf/autoencoder.hpp"
#include "dwgf/errors.hpp"
#include "dwgf/observation.hpp"
#include "dwgf/random.hpp"
#include "dwgf/schedule.hpp"

namespace dwgf {

struct EulerOptions {
  double step_size = 1e-2;
  bool operator==(const EulerOptions &) const = default;
};

struct AdamOptions {
  double lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  bool operator==(const AdamOptions &) const = default;
};

using OptimizerOptions = std::variant<EulerOptions, AdamOptions>;

struct FlowConfig {
  double gamma = 0.15;     // regularization strength
  double lambda_hat = 0.1; // data-consistency coefficient (lambda / rho^2)
  double c = 0.5;          // w(s) = c sigma_s^2 / alpha_s
  int N = 4;
  OptimizerOptions optimizer = AdamOptions{};
  std::uint64_t seed = 0;
  bool shared_decode_noise = false;
  bool trace = false;
  int threads = 1;

  void validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw ConfigError("flow.gamma: must be finite and >= 0");
    if (!(lambda_hat >= 0.0) || !std::isfinite(lambda_hat))
      throw ConfigError("flow.lambda_hat: must be finite and >= 0");
    Schedule::check_weight_constant(c);
    if (N < 1)
      throw ConfigError("flow.N: must be >= 1");
    if (threads < 1)
      throw ConfigError("flow.threads: must be >= 1");
    if (const auto *e = std::get_if<EulerOptions>(&optimizer)) {
      if (!(e->step_size > 0.0) || !std::isfinite(e->step_size))
        throw ConfigError("flow.optimizer.step_size: must be positive");
    } else {
      const auto &a = std::get<AdamOptions>(optimizer);
      if (!(a.lr > 0.0) || !std::isfinite(a.lr))
        throw ConfigError("flow.optimizer.lr: must be positive");
      if (!(a.beta1 >= 0.0 && a.beta1 < 1.0))
        throw ConfigError("flow.optimizer.beta1: must lie in [0, 1)");
      if (!(a.beta2 >= 0.0 && a.beta2 < 1.0))
        throw ConfigError("flow.optimizer.beta2: must lie in [0, 1)");
      if (!(a.eps_hat > 0.0))
        throw ConfigError("flow.optimizer.eps_hat: must be positive");
    }
  }

  bool operator==(const FlowConfig &) const = default;
};

/// N latent particles, one per row.
struct ParticleEnsemble {
  Eigen::MatrixXd particles;
  std::size_t step = 0;

  Eigen::Index size() const { return particles.rows(); }
  Eigen::Index dim() const { return particles.cols(); }
  Eigen::VectorXd particle(Eigen::Index i) const {
    return particles.row(i).transpose();
  }
};

struct AdamState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  long t = 0;
};

/// Everything the flow needs besides its own hyperparameters. Without an
/// observation the data drift is identically zero.
struct Problem {
  Schedule schedule;
  GaussianMixture prior;
  LinearAutoencoder ae;
  std::optional<ObservationModel> observation;

  void validate() const {
    if (prior.dim() != ae.latent_dim())
      throw ShapeError("prior dimension " + std::to_string(prior.dim()) +
                       " does not match autoencoder.W columns " +
                       std::to_string(ae.latent_dim()));
    if (observation && observation->op().input_dim() != ae.pixel_dim())
      throw ShapeError("observation.operator input dimension " +
                       std::to_string(observation->op().input_dim()) +
                       " does not match autoencoder.W rows " +
                       std::to_string(ae.pixel_dim()));
  }
};

// ---------------------------------------------------------------------------
// Drift terms
// ---------------------------------------------------------------------------

/// Data drift for one particle:
///   x0 = D(z) + rho eps
///   u  = W^T ( -lambda_hat (D(E(x0)) - x0) - grad log p(y | x0) )
/// The consistency residual D(E(x0)) is not differentiated. The gradient of
/// log q under the reparameterized decoder vanishes and is not included.
inline Eigen::VectorXd data_drift(const LinearAutoencoder &ae,
                                  const ObservationModel &model,
                                  const Eigen::VectorXd &z,
                                  const Eigen::VectorXd &eps,
                                  double lambda_hat) {
  if (!z.allFinite())
    throw NumericError("data_drift: non-finite latent");
  const Eigen::VectorXd x0 = ae.decode(z, eps);
  const double rho2 = ae.rho() * ae.rho();
  // lambda_hat rho^2 * data_score_approx = lambda_hat (D(E(x0)) - x0)
  const Eigen::VectorXd cotangent =
      -lambda_hat * rho2 * ae.data_score_approx(x0) - model.likelihood_grad(x0);
  Eigen::VectorXd u = ae.decoder_vjp(z, cotangent);
  if (!u.allFinite())
    throw NumericError("data_drift: non-finite drift");
  return u;
}

namespace detail {

/// Score of (1/N) sum_j N(. ; alpha c_j, sigma^2 I) where c_j are the rows
/// of `centers`.
inline Eigen::VectorXd kde_score(const Eigen::MatrixXd &centers, double alpha,
                                 double sigma, const Eigen::VectorXd &query) {
  const Eigen::Index n = centers.rows();
  const double inv_var = 1.0 / (sigma * sigma);
  Eigen::VectorXd logits(n);
  for (Eigen::Index j = 0; j < n; ++j)
    logits[j] =
        -0.5 * inv_var *
        (query - alpha * centers.row(j).transpose()).squaredNorm();
  const double hi = logits.maxCoeff();
  Eigen::VectorXd resp = (logits.array() - hi).exp();
  resp /= resp.sum();
  // sum_j r_j (alpha c_j - q) / sigma^2
  const Eigen::VectorXd weighted_center = alpha * (centers.transpose() * resp);
  return (weighted_center - query) * inv_var;
}

inline double kde_log_density(const Eigen::MatrixXd &centers, double alpha,
                              double sigma, const Eigen::VectorXd &query) {
  const Eigen::Index n = centers.rows();
  const Eigen::Index d = centers.cols();
  const double inv_var = 1.0 / (sigma * sigma);
  std::vector<double> logits(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    logits[static_cast<std::size_t>(j)] =
        -0.5 * inv_var *
        (query - alpha * centers.row(j).transpose()).squaredNorm();
  return GaussianMixture::log_sum_exp(logits) - std::log(static_cast<double>(n)) -
         0.5 * static_cast<double>(d) *
             std::log(2.0 * std::numbers::pi * sigma * sigma);
}

/// w(s) alpha_s (kde score - prior score) at z_s; dz_s/dz_0 = alpha_s I.
inline Eigen::VectorXd reg_drift(const Eigen::MatrixXd &snapshot,
                                 const GaussianMixture &diffused_prior,
                                 double alpha, double sigma, double weight,
                                 const Eigen::VectorXd &z_s) {
  return weight * alpha *
         (kde_score(snapshot, alpha, sigma, z_s) - diffused_prior.score(z_s));
}

} // namespace detail

/// Gradient of the log of the diffused empirical measure of `ensemble` at s.
inline Eigen::VectorXd kde_score(const ParticleEnsemble &ensemble,
                                 const Schedule &sched, int s,
                                 const Eigen::VectorXd &query) {
  if (ensemble.size() < 1)
    throw DomainError("kde_score: empty ensemble");
  detail::require_size(query.size(), ensemble.dim(), "kde_score: query");
  const auto [alpha, sigma] = sched.alpha_sigma(s);
  if (s == 0 || sigma == 0.0)
    throw DomainError("kde_score: degenerate kernel at s = 0");
  return detail::kde_score(ensemble.particles, alpha, sigma, query);
}

/// Regularization drift for particle i with diffusion noise nu.
inline Eigen::VectorXd reg_drift(const ParticleEnsemble &ensemble,
                                 const GaussianMixture &prior,
                                 const Schedule &sched, int s, Eigen::Index i,
                                 const Eigen::VectorXd &nu, double c) {
  if (s == 0)
    throw DomainError("reg_drift: degenerate kernel at s = 0");
  if (i < 0 || i >= ensemble.size())
    throw DomainError("reg_drift: particle index out of range");
  const auto [alpha, sigma] = sched.alpha_sigma(s);
  const Eigen::VectorXd z_s = sched.diffuse(ensemble.particle(i), s, nu);
  return detail::reg_drift(ensemble.particles, prior.diffused(alpha, sigma),
                           alpha, sigma, sched.weight(s, c), z_s);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// One descent step z <- z - step(g) for every particle. `state` is created
/// on the first Adam step.
inline void optimizer_step(const OptimizerOptions &options,
                           ParticleEnsemble &ensemble,
                           std::optional<AdamState> &state,
                           const Eigen::MatrixXd &grads) {
  if (grads.rows() != ensemble.size() || grads.cols() != ensemble.dim())
    throw ShapeError("optimizer_step: gradient shape does not match ensemble");
  if (!grads.allFinite()) {
    Eigen::Index row = 0;
    for (; row < grads.rows(); ++row)
      if (!grads.row(row).allFinite())
        break;
    throw NumericError("optimizer_step: non-finite gradient for particle " +
                       std::to_string(row));
  }

  if (const auto *euler = std::get_if<EulerOptions>(&options)) {
    ensemble.particles -= euler->step_size * grads;
  } else {
    const auto &adam = std::get<AdamOptions>(options);
    if (!state) {
      state = AdamState{Eigen::MatrixXd::Zero(grads.rows(), grads.cols()),
                        Eigen::MatrixXd::Zero(grads.rows(), grads.cols()), 0};
    }
    AdamState &st = *state;
    st.t += 1;
    st.m = adam.beta1 * st.m + (1.0 - adam.beta1) * grads;
    st.v = adam.beta2 * st.v +
           (1.0 - adam.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(st.t));
    const Eigen::ArrayXXd m_hat = st.m.array() / bc1;
    const Eigen::ArrayXXd v_hat = st.v.array() / bc2;
    ensemble.particles.array() -= adam.lr * m_hat / (v_hat.sqrt() + adam.eps_hat);
  }
  ensemble.step += 1;
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

struct TraceRow {
  std::size_t step;
  int s;
  Eigen::Index particle;
  double neg_log_likelihood; // (1/2 sigma_y^2) ||y - A x0||^2
  double consistency;        // (lambda_hat / 2) ||x0 - D(E(x0))||^2
  double regularization;     // w(s) (log kde(z_s) - log prior_s(z_s))
  double u_norm;
  double v_norm;
};

struct RunResult {
  ParticleEnsemble ensemble;
  Eigen::MatrixXd decoded; // N x d_x, noiseless decode
  std::vector<TraceRow> trace;
};

namespace detail {

/// Calls body(i) for i in [0, n) on up to `threads` workers. Work items must
/// be independent; the first exception thrown is rethrown.
inline void parallel_for(Eigen::Index n, int threads,
                         const std::function<void(Eigen::Index)> &body) {
  if (threads <= 1 || n <= 1) {
    for (Eigen::Index i = 0; i < n; ++i)
      body(i);
    return;
  }
  const auto workers = static_cast<Eigen::Index>(
      std::min<Eigen::Index>(threads, n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    for (Eigen::Index w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (Eigen::Index i = w; i < n; i += workers)
            body(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (const auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace detail

/// Runs the particle flow over s = T, T-1, ..., 0. The s = 0 iteration
/// carries the data drift only since the diffusion kernel is degenerate.
///
/// Every particle's drift is evaluated against the start-of-step snapshot,
/// then all particles are updated at once.
inline RunResult run(const Problem &problem, const FlowConfig &config,
                     std::optional<Eigen::MatrixXd> initial = std::nullopt) {
  problem.validate();
  config.validate();

  const Schedule &sched = problem.schedule;
  const LinearAutoencoder &ae = problem.ae;
  const Eigen::Index N = config.N;
  const Eigen::Index d_z = ae.latent_dim();
  const Eigen::Index d_x = ae.pixel_dim();

  Rng rng(config.seed);
  ParticleEnsemble ensemble;
  if (initial) {
    if (initial->rows() != N || initial->cols() != d_z)
      throw ShapeError("run: initial particles must be N x d_z");
    ensemble.particles = *initial;
  } else {
    const auto draws = problem.prior.sample(static_cast<std::size_t>(N), rng);
    ensemble.particles.resize(N, d_z);
    for (Eigen::Index i = 0; i < N; ++i)
      ensemble.particles.row(i) = draws[static_cast<std::size_t>(i)].transpose();
  }

  RunResult result;
  std::optional<AdamState> adam;
  Eigen::MatrixXd grads(N, d_z);
  Eigen::MatrixXd u_all = Eigen::MatrixXd::Zero(N, d_z);
  Eigen::MatrixXd v_all = Eigen::MatrixXd::Zero(N, d_z);
  const bool with_data = problem.observation.has_value();

  for (int s = sched.T(); s >= 0; --s) {
    const Eigen::MatrixXd snapshot = ensemble.particles;

    // Noise is drawn sequentially so results do not depend on threading.
    Eigen::MatrixXd eps;
    if (config.shared_decode_noise) {
      const Eigen::VectorXd shared = standard_normal(rng, d_x);
      eps = shared.transpose().replicate(N, 1);
    } else {
      eps = standard_normal(rng, N, d_x);
    }
    const Eigen::MatrixXd nu = standard_normal(rng, N, d_z);

    const bool with_reg = s > 0 && config.gamma > 0.0;
    const auto [alpha, sigma] = sched.alpha_sigma(s);
    const double w = s > 0 ? sched.weight(s, config.c) : 0.0;
    const GaussianMixture diffused =
        with_reg ? problem.prior.diffused(alpha, sigma) : GaussianMixture{};

    detail::parallel_for(N, config.threads, [&](Eigen::Index i) {
      const Eigen::VectorXd z = snapshot.row(i).transpose();
      try {
        if (with_data)
          u_all.row(i) = data_drift(ae, *problem.observation, z,
                                    eps.row(i).transpose(), config.lambda_hat)
                             .transpose();
        if (with_reg) {
          const Eigen::VectorXd z_s = alpha * z + sigma * nu.row(i).transpose();
          v_all.row(i) =
              detail::reg_drift(snapshot, diffused, alpha, sigma, w, z_s)
                  .transpose();
        } else {
          v_all.row(i).setZero();
        }
      } catch (const std::exception &e) {
        throw NumericError("step " + std::to_string(ensemble.step) +
                           " (s=" + std::to_string(s) + "), particle " +
                           std::to_string(i) + ": " + e.what());
      }
    });

    grads = u_all + config.gamma * v_all;

    if (config.trace) {
      for (Eigen::Index i = 0; i < N; ++i) {
        const Eigen::VectorXd z = snapshot.row(i).transpose();
        TraceRow row{ensemble.step, s, i, 0.0, 0.0, 0.0,
                     u_all.row(i).norm(), v_all.row(i).norm()};
        if (with_data) {
          const Eigen::VectorXd x0 = ae.decode(z, eps.row(i).transpose());
          row.neg_log_likelihood = problem.observation->neg_log_likelihood(x0);
          row.consistency = 0.5 * config.lambda_hat *
                            (x0 - ae.decode_mean(ae.encode(x0))).squaredNorm();
        }
        if (with_reg) {
          const Eigen::VectorXd z_s = alpha * z + sigma * nu.row(i).transpose();
          row.regularization =
              w * (detail::kde_log_density(snapshot, alpha, sigma, z_s) -
                   diffused.log_density(z_s));
        }
        result.trace.push_back(row);
      }
    }

    try {
      optimizer_step(config.optimizer, ensemble, adam, grads);
    } catch (const NumericError &e) {
      throw NumericError("step " + std::to_string(ensemble.step) +
                         " (s=" + std::to_string(s) + "): " + e.what());
    }
    if (!ensemble.particles.allFinite())
      throw NumericError("step " + std::to_string(ensemble.step) +
                         " (s=" + std::to_string(s) +
                         "): non-finite particle after update");
  }

  result.decoded.resize(N, d_x);
  for (Eigen::Index i = 0; i < N; ++i)
    result.decoded.row(i) = ae.decode_mean(ensemble.particle(i)).transpose();
  result.ensemble = std::move(ensemble);
  return result;
}

} // namespace dwgf
