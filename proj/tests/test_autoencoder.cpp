#include <gtest/gtest.h>

#include <cmath>

#include "dwgf/autoencoder.hpp"
#include "dwgf/observation.hpp"
#include "dwgf/oracle.hpp"
#include "dwgf/random.hpp"
#include "test_util.hpp"

using dwgf::LinearAutoencoder;

namespace {

struct Instance {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  Eigen::VectorXd m;
  Eigen::MatrixXd S;
};

Instance random_instance(std::uint64_t seed, Eigen::Index dx = 6,
                         Eigen::Index dz = 3) {
  dwgf::Rng rng(seed);
  return {dwgf::standard_normal(rng, dx, dz), dwgf::standard_normal(rng, dx),
          dwgf::standard_normal(rng, dz), dwgf::testing::random_spd(rng, dz)};
}

/// grad_x log N(x; W m + b, W S W^T + rho^2 I).
Eigen::VectorXd marginal_score(const Instance &in, double rho,
                               const Eigen::VectorXd &x) {
  const Eigen::Index dx = in.W.rows();
  const Eigen::MatrixXd C = in.W * in.S * in.W.transpose() +
                            rho * rho * Eigen::MatrixXd::Identity(dx, dx);
  return -C.llt().solve(x - in.W * in.m - in.b);
}

} // namespace

TEST(Autoencoder, Decode) {
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  const auto ae = LinearAutoencoder::pseudo_inverse(I, Eigen::Vector2d::Zero(), 1e-3);
  const Eigen::VectorXd x = ae.decode(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 1));
  EXPECT_NEAR(x[0], 1.001, 1e-15);
  EXPECT_NEAR(x[1], 2.001, 1e-15);

  const auto in = random_instance(1);
  const auto rnd = LinearAutoencoder::exact(in.W, in.b, 0.1, in.m, in.S);
  const Eigen::VectorXd z = Eigen::Vector3d(0.2, -1.0, 0.4);
  EXPECT_TRUE(rnd.decode(z, Eigen::VectorXd::Zero(6))
                  .isApprox(in.W * z + in.b, 1e-15));
  const auto no_bias = LinearAutoencoder::exact(in.W, Eigen::VectorXd::Zero(6),
                                                0.1, in.m, in.S);
  const Eigen::VectorXd eps = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  EXPECT_TRUE(no_bias.decode(Eigen::Vector3d::Zero(), eps).isApprox(0.1 * eps));
  EXPECT_THROW(rnd.decode(z, Eigen::VectorXd::Zero(5)), dwgf::ShapeError);
}

TEST(Autoencoder, RejectsRankDeficientDecoder) {
  Eigen::MatrixXd W(3, 2);
  W << 1, 2, 2, 4, 3, 6;
  EXPECT_THROW(LinearAutoencoder::pseudo_inverse(W, Eigen::Vector3d::Zero(), 1e-3),
               dwgf::NumericError);
  EXPECT_THROW(LinearAutoencoder::pseudo_inverse(Eigen::MatrixXd::Ones(2, 3),
                                                 Eigen::Vector2d::Zero(), 1e-3),
               dwgf::ShapeError);
}

TEST(Autoencoder, EncodeRoundTrip) {
  const auto in = random_instance(2);
  // Near-deterministic decoder: E(D(z)) = z up to O(rho^2).
  const auto tight = LinearAutoencoder::exact(in.W, in.b, 1e-6, in.m, in.S);
  dwgf::Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd z = dwgf::standard_normal(rng, 3);
    EXPECT_LT((tight.encode(tight.decode_mean(z)) - z).norm(), 1e-10);
  }
  const auto ae = LinearAutoencoder::exact(in.W, in.b, 1e-3, in.m, in.S);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd z = dwgf::standard_normal(rng, 3);
    EXPECT_LT((ae.encode(ae.decode_mean(z)) - z).norm() / z.norm(), 1e-4);
  }
}

TEST(Autoencoder, IdentityEncoder) {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
  const auto pinv = LinearAutoencoder::pseudo_inverse(I, Eigen::Vector3d::Zero(), 1e-3);
  const Eigen::Vector3d x(0.3, -2.0, 5.0);
  EXPECT_TRUE(pinv.encode(x).isApprox(x, 1e-15));

  const auto exact = LinearAutoencoder::exact(I, Eigen::Vector3d::Zero(), 1e-6,
                                              Eigen::Vector3d::Zero(), I);
  EXPECT_LT((exact.E_W() - I).norm(), 1e-10);
}

TEST(Autoencoder, ExactEncoderOrthonormalColumns) {
  // W^T W = I, S = I, rho = 1 gives E_W = (I + I)^{-1} W^T = W^T / 2.
  dwgf::Rng rng(4);
  const Eigen::MatrixXd G = dwgf::standard_normal(rng, 5, 2);
  const Eigen::MatrixXd Q = G.householderQr().householderQ() *
                            Eigen::MatrixXd::Identity(5, 2);
  const auto ae = LinearAutoencoder::exact(Q, Eigen::VectorXd::Zero(5), 1.0,
                                           Eigen::Vector2d::Zero(),
                                           Eigen::Matrix2d::Identity());
  EXPECT_LT((ae.E_W() - 0.5 * Q.transpose()).norm(), 1e-12);
  EXPECT_LT(ae.E_b().norm(), 1e-15);
}

TEST(Autoencoder, EncoderIsConjugatePosteriorMean) {
  const auto in = random_instance(5);
  const double rho = 0.3;
  const auto ae = LinearAutoencoder::exact(in.W, in.b, rho, in.m, in.S);
  dwgf::Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd x = 3.0 * dwgf::standard_normal(rng, 6);
    // Treat x as an observation through the identity with noise rho.
    const dwgf::ObservationModel obs(dwgf::ForwardOperator::identity(6), x, rho);
    const auto post = dwgf::oracle::conjugate_posterior({in.m, in.S}, ae, obs);
    EXPECT_LT((ae.encode(x) - post.mean).norm(), 1e-10 * post.mean.norm());
  }
}

TEST(Autoencoder, DecoderVjpMatchesFiniteDifferences) {
  const auto in = random_instance(7);
  const auto ae = LinearAutoencoder::exact(in.W, in.b, 1e-3, in.m, in.S);
  dwgf::Rng rng(8);
  const Eigen::VectorXd z = dwgf::standard_normal(rng, 3);
  const Eigen::VectorXd zero_eps = Eigen::VectorXd::Zero(6);
  // Jacobian column k from directional differences along e_k.
  Eigen::MatrixXd J(6, 3);
  const double h = 1e-5;
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(3, k);
    J.col(k) = (ae.decode(z + h * e, zero_eps) - ae.decode(z - h * e, zero_eps)) /
               (2 * h);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd v = dwgf::standard_normal(rng, 6);
    EXPECT_LT(dwgf::oracle::relative_error(ae.decoder_vjp(z, v),
                                           J.transpose() * v),
              1e-6);
  }
  EXPECT_EQ(ae.decoder_vjp(z, Eigen::VectorXd::Zero(6)), Eigen::VectorXd::Zero(3));
  const auto id = LinearAutoencoder::pseudo_inverse(
      Eigen::MatrixXd::Identity(3, 3), Eigen::Vector3d::Zero(), 1e-3);
  const Eigen::Vector3d v(1, 2, 3);
  EXPECT_EQ(id.decoder_vjp(v, v), Eigen::VectorXd(v));
}

TEST(Autoencoder, DataScoreVanishesOnDecoderManifold) {
  const auto in = random_instance(10);
  const auto ae = LinearAutoencoder::pseudo_inverse(in.W, in.b, 1e-3);
  const Eigen::VectorXd x = ae.decode_mean(Eigen::Vector3d(0.5, -0.2, 1.0));
  // Residual is O(1e-16) in pixel units, divided by rho^2.
  EXPECT_LT(ae.data_score_approx(x).norm(), 1e-8);

  const auto id = LinearAutoencoder::pseudo_inverse(
      Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4), 1e-3);
  EXPECT_EQ(id.data_score_approx(Eigen::Vector4d(1, -2, 3, 0.5)),
            Eigen::VectorXd::Zero(4));
}

TEST(Autoencoder, DataScoreEqualsMarginalScore) {
  for (double rho : {1e-3, 0.1, 1.0}) {
    const auto in = random_instance(12);
    const auto ae = LinearAutoencoder::exact(in.W, in.b, rho, in.m, in.S);
    dwgf::Rng rng(13);
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd x = 2.0 * dwgf::standard_normal(rng, 6);
      EXPECT_LT(dwgf::oracle::relative_error(ae.data_score_approx(x),
                                             marginal_score(in, rho, x)),
                1e-8)
          << "rho=" << rho;
    }
  }
}

TEST(Autoencoder, ReparameterizedLogDecoderGradientVanishes) {
  // d/dz [ -(1/2 rho^2) || g(eps, z) - D(z) ||^2 ] with g = D + rho eps:
  // both paths share the Jacobian W, so the residual's derivative cancels.
  const auto in = random_instance(14);
  const auto ae = LinearAutoencoder::exact(in.W, in.b, 1e-3, in.m, in.S);
  dwgf::Rng rng(15);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd z = dwgf::standard_normal(rng, 3);
    const Eigen::VectorXd eps = dwgf::standard_normal(rng, 6);
    const Eigen::VectorXd r = ae.decode(z, eps) - ae.decode_mean(z);
    const double rho2 = ae.rho() * ae.rho();
    const Eigen::VectorXd grad =
        -(ae.decoder_vjp(z, r) - ae.decoder_vjp(z, r)) / rho2;
    worst = std::max(worst, grad.cwiseAbs().maxCoeff());
    // The objective itself is the constant -||eps||^2 / 2.
    EXPECT_NEAR(-0.5 * r.squaredNorm() / rho2, -0.5 * eps.squaredNorm(),
                1e-6 * eps.squaredNorm());
  }
  EXPECT_LT(worst, 1e-12);
}
