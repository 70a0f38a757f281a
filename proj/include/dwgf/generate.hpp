#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/analytic_prior.hpp"
#include "dwgf/autoencoder.hpp"
#include "dwgf/random.hpp"

// Seeded random instances for configs and self-checks.
namespace dwgf::generate {

/// G G^T / d + floor I with standard normal G.
inline Eigen::MatrixXd spd_matrix(Rng &rng, Eigen::Index d, double floor = 0.3) {
  const Eigen::MatrixXd G = standard_normal(rng, d, d);
  return G * G.transpose() / static_cast<double>(d) +
         floor * Eigen::MatrixXd::Identity(d, d);
}

/// k components, weights uniform on [0.5, 1.5] then normalized, means
/// 2 N(0, I), covariances from spd_matrix.
inline GaussianMixture mixture(Rng &rng, Eigen::Index d, int k) {
  std::vector<MixtureComponent> comps;
  std::uniform_real_distribution<double> u(0.5, 1.5);
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const double w = u(rng);
    total += w;
    comps.push_back({w, 2.0 * standard_normal(rng, d), spd_matrix(rng, d)});
  }
  for (auto &c : comps)
    c.weight /= total;
  return GaussianMixture(std::move(comps));
}

struct DecoderWeights {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

/// W with standard normal entries, b = 0.1 N(0, I).
inline DecoderWeights decoder(Rng &rng, Eigen::Index dz, Eigen::Index dx) {
  DecoderWeights out;
  out.W = standard_normal(rng, dx, dz);
  out.b = 0.1 * standard_normal(rng, dx);
  return out;
}

} // namespace dwgf::generate
