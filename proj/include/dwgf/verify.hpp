#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/analytic_prior.hpp"
#include "dwgf/autoencoder.hpp"
#include "dwgf/errors.hpp"
#include "dwgf/flow.hpp"
#include "dwgf/generate.hpp"
#include "dwgf/observation.hpp"
#include "dwgf/oracle.hpp"
#include "dwgf/random.hpp"
#include "dwgf/schedule.hpp"

// Self-checking property suites on built-in instances. Each check reports the
// measured quantity next to its threshold.
namespace dwgf::verify {

struct Check {
  std::string name;
  double measured;
  double threshold;
  bool passed;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const Check &c) { return c.passed; });
  }
};

inline Check below(std::string name, double measured, double threshold) {
  return {std::move(name), measured, threshold, measured < threshold};
}

inline Check above(std::string name, double measured, double threshold) {
  return {std::move(name), measured, threshold, measured > threshold};
}

namespace detail {

inline LinearAutoencoder random_autoencoder(Rng &rng, Eigen::Index dz,
                                            Eigen::Index dx, double rho,
                                            const GaussianMixture &prior) {
  auto [W, b] = generate::decoder(rng, dz, dx);
  return LinearAutoencoder::exact(W, b, rho, prior.mean(), prior.covariance());
}

} // namespace detail

/// Gradient in z of the decoder log-density log N(g(eps, z); D(z), rho^2 I)
/// with g(eps, z) = D(z) + rho eps, differentiating through both paths.
inline Eigen::VectorXd reparam_log_q_gradient(const LinearAutoencoder &ae,
                                              const Eigen::VectorXd &z,
                                              const Eigen::VectorXd &eps) {
  const Eigen::VectorXd r = ae.decode(z, eps) - ae.decode_mean(z);
  const double rho2 = ae.rho() * ae.rho();
  // -(1/rho^2) [ (dg/dz)^T r - (dD/dz)^T r ]
  return -(ae.decoder_vjp(z, r) - ae.decoder_vjp(z, r)) / rho2;
}

inline SuiteResult reparam() {
  Rng rng(101);
  const Eigen::Index dz = 3, dx = 6;
  const auto prior =
      GaussianMixture::gaussian(Eigen::VectorXd::Zero(dz),
                                Eigen::MatrixXd::Identity(dz, dz));
  const auto ae = detail::random_autoencoder(rng, dz, dx, 1e-3, prior);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd z = standard_normal(rng, dz);
    const Eigen::VectorXd eps = standard_normal(rng, dx);
    worst = std::max(worst,
                     reparam_log_q_gradient(ae, z, eps).cwiseAbs().maxCoeff());
  }
  return {"reparam", {below("max |grad log q| over 100 (z, eps) pairs", worst, 1e-12)}};
}

inline SuiteResult gradients() {
  SuiteResult out{"gradients", {}};
  const Schedule sched;

  {
    Rng rng(102);
    const auto prior = generate::mixture(rng, 3, 3);
    std::uniform_int_distribution<int> time(0, sched.T());
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const int s = time(rng);
      const Eigen::VectorXd z = 2.0 * standard_normal(rng, 3);
      const auto fd = oracle::central_gradient(
          [&](const Eigen::VectorXd &x) {
            return log_density_at_time(prior, sched, s, x);
          },
          z, 1e-5);
      worst = std::max(worst, oracle::relative_error(
                                  score_at_time(prior, sched, s, z), fd));
    }
    out.checks.push_back(
        below("mixture score vs finite differences, max rel error", worst, 1e-5));
  }

  {
    Rng rng(103);
    const Eigen::MatrixXd centers = 2.0 * standard_normal(rng, 8, 3);
    ParticleEnsemble ens{centers, 0};
    std::uniform_int_distribution<int> time(20, sched.T());
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const int s = time(rng);
      const auto [alpha, sigma] = sched.alpha_sigma(s);
      const Eigen::VectorXd q = alpha * centers.row(k % 8).transpose() +
                                sigma * standard_normal(rng, 3);
      const auto fd = oracle::central_gradient(
          [&](const Eigen::VectorXd &v) {
            return oracle::empirical_log_density(centers, alpha, sigma, v);
          },
          q, 1e-5 * sigma);
      worst = std::max(worst,
                       oracle::relative_error(kde_score(ens, sched, s, q), fd));
    }
    out.checks.push_back(
        below("particle score vs finite differences, max rel error", worst, 1e-5));
  }

  {
    // d_z = 2, d_x = 4, N = 8; bimodal prior, mask keeping half the pixels.
    Rng rng(104);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
    const GaussianMixture prior({{0.5, Eigen::Vector2d(2.0, 0.0), I},
                                 {0.5, Eigen::Vector2d(-2.0, 0.0), I}});
    const auto ae = detail::random_autoencoder(rng, 2, 4, 1e-3, prior);
    const auto model =
        observe(ForwardOperator::mask({true, false, true, false}),
                ae.decode_mean(standard_normal(rng, 2)), 0.3, rng);
    const Eigen::MatrixXd snapshot = 1.5 * standard_normal(rng, 8, 2);
    const ParticleEnsemble ens{snapshot, 0};
    const double gamma = 0.8, lambda_hat = 0.3, c = 0.5;
    double worst = 0.0;
    for (int s : {1, 50, 400, 999}) {
      for (Eigen::Index i = 0; i < 8; ++i) {
        const Eigen::VectorXd z = snapshot.row(i).transpose();
        oracle::FrozenDraw draw{standard_normal(rng, 4), standard_normal(rng, 2), {}};
        draw.consistency_anchor =
            ae.decode_mean(ae.encode(ae.decode(z, draw.eps)));
        const Eigen::VectorXd drift =
            data_drift(ae, model, z, draw.eps, lambda_hat) +
            gamma * reg_drift(ens, prior, sched, s, i, draw.nu, c);
        const auto fd = oracle::central_gradient(
            [&](const Eigen::VectorXd &v) {
              return oracle::particle_objective(ae, &model, prior, sched, s,
                                                snapshot, gamma, lambda_hat, c,
                                                draw, v);
            },
            z, 1e-6);
        worst = std::max(worst, oracle::relative_error(drift, fd));
      }
    }
    out.checks.push_back(
        below("drift u + gamma v vs finite differences, max rel error", worst, 1e-4));
  }
  return out;
}

inline SuiteResult theorem1() {
  const Schedule sched;
  const double c = 0.5;
  const int pairs = 200;
  Rng rng(105);
  std::uniform_int_distribution<int> dim(1, 3);

  double min_value = std::numeric_limits<double>::infinity();
  double worst_convexity = -std::numeric_limits<double>::infinity();
  int mismatches = 0;
  for (int k = 0; k < pairs; ++k) {
    const Eigen::Index d = dim(rng);
    const oracle::GaussianDist p{standard_normal(rng, d),
                                 generate::spd_matrix(rng, d, 0.3)};
    // Every fifth pair coincides so both sides of (iii) are exercised.
    const oracle::GaussianDist q =
        k % 5 == 0 ? p
                   : oracle::GaussianDist{standard_normal(rng, d),
                                          generate::spd_matrix(rng, d, 0.3)};
    const double wkl = oracle::weighted_kl(q, p, sched, c);
    min_value = std::min(min_value, wkl);
    if ((wkl < 1e-6) != (oracle::gaussian_kl(q, p) < 1e-6))
      ++mismatches;

    // Mean interpolation with shared covariance keeps the diffused family
    // Gaussian.
    const oracle::GaussianDist q1{q.mean, q.cov};
    const oracle::GaussianDist q2{standard_normal(rng, d), q.cov};
    const oracle::GaussianDist mid{0.5 * (q1.mean + q2.mean), q.cov};
    const double gap = oracle::weighted_kl(mid, p, sched, c) -
                       0.5 * (oracle::weighted_kl(q1, p, sched, c) +
                              oracle::weighted_kl(q2, p, sched, c));
    worst_convexity = std::max(worst_convexity, gap);
  }

  // Mixture midpoints in 1-D, evaluated on a shared grid.
  double worst_mixture = -std::numeric_limits<double>::infinity();
  const Schedule coarse(99);
  for (int k = 0; k < 10; ++k) {
    auto gauss1 = [&](void) {
      const double sd = 0.6 + 0.8 * std::uniform_real_distribution<double>()(rng);
      return GaussianMixture::gaussian(standard_normal(rng, 1),
                                       Eigen::MatrixXd::Constant(1, 1, sd * sd));
    };
    const auto p = gauss1();
    const auto a = gauss1();
    const auto b = gauss1();
    const GaussianMixture mix({{0.5, a.components()[0].mean, a.components()[0].cov},
                               {0.5, b.components()[0].mean, b.components()[0].cov}});
    auto wkl = [&](const GaussianMixture &q) {
      return oracle::weighted_kl_on_grid_1d(q, p, coarse, c, 40, -12.0, 12.0, 2001);
    };
    worst_mixture = std::max(worst_mixture, wkl(mix) - 0.5 * (wkl(a) + wkl(b)));
  }

  return {"theorem1",
          {above("(i) min weighted KL over 200 pairs", min_value, -1e-12),
           below("(ii) max midpoint convexity gap, mean paths", worst_convexity, 1e-9),
           below("(ii) max midpoint convexity gap, 1-D mixtures", worst_mixture, 1e-9),
           below("(iii) pairs where weighted KL < 1e-6 and KL < 1e-6 disagree",
                 static_cast<double>(mismatches), 0.5)}};
}

/// Prior fixed point: no data term, gamma = 1, N = 512 particles started from
/// the prior itself, optimizer as given.
inline SuiteResult fixedpoint(const OptimizerOptions &optimizer = AdamOptions{},
                              std::uint64_t seed = 0) {
  Eigen::Matrix2d S;
  S << 1.0, 0.3, 0.3, 0.6;
  const Eigen::Vector2d m(0.5, -0.5);
  const auto prior = GaussianMixture::gaussian(m, S);
  Rng rng(106);
  Problem problem{Schedule(999), prior,
                  detail::random_autoencoder(rng, 2, 4, 1e-3, prior), std::nullopt};
  FlowConfig cfg;
  cfg.gamma = 1.0;
  cfg.N = 512;
  cfg.optimizer = optimizer;
  cfg.seed = seed;
  const auto result = run(problem, cfg);
  const auto stats = oracle::ensemble_stats(result.ensemble.particles);
  return {"fixedpoint",
          {below("|ensemble mean - prior mean|", (stats.mean - m).norm(), 0.1),
           below("relative Frobenius error of ensemble covariance",
                 (stats.cov - S).norm() / S.norm(), 0.15)}};
}

inline const std::vector<std::string> &suite_names() {
  static const std::vector<std::string> names{"gradients", "theorem1",
                                              "fixedpoint", "reparam"};
  return names;
}

inline SuiteResult run_suite(const std::string &name) {
  if (name == "gradients")
    return gradients();
  if (name == "theorem1")
    return theorem1();
  if (name == "fixedpoint")
    return fixedpoint();
  if (name == "reparam")
    return reparam();
  throw ConfigError("suite: unknown suite '" + name + "'");
}

} // namespace dwgf::verify
