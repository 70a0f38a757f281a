#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dwgf/errors.hpp"

namespace dwgf {

/// Linear Gaussian autoencoder.
///
/// Decoder: x = W z + b + rho eps, eps ~ N(0, I).
/// Encoder: deterministic affine map z = E_W x + E_b.
///
/// The decoder Jacobian is W everywhere, so vector-Jacobian products do not
/// depend on the linearization point.
class LinearAutoencoder {
public:
  LinearAutoencoder() = default;

  LinearAutoencoder(Eigen::MatrixXd W, Eigen::VectorXd b, double rho,
                    Eigen::MatrixXd E_W, Eigen::VectorXd E_b)
      : W_(std::move(W)), b_(std::move(b)), rho_(rho), E_W_(std::move(E_W)),
        E_b_(std::move(E_b)) {
    if (W_.rows() < 1 || W_.cols() < 1)
      throw ShapeError("autoencoder.W: empty matrix");
    if (W_.cols() > W_.rows())
      throw ShapeError("autoencoder.W: latent dimension " +
                       std::to_string(W_.cols()) +
                       " exceeds pixel dimension " + std::to_string(W_.rows()));
    detail::require_size(b_.size(), W_.rows(), "autoencoder.b");
    if (!(rho > 0.0) || !std::isfinite(rho))
      throw ConfigError("autoencoder.rho: must be positive");
    if (E_W_.rows() != W_.cols() || E_W_.cols() != W_.rows())
      throw ShapeError("autoencoder.E_W: expected " +
                       std::to_string(W_.cols()) + "x" +
                       std::to_string(W_.rows()));
    detail::require_size(E_b_.size(), W_.cols(), "autoencoder.E_b");
    if (!W_.allFinite() || !b_.allFinite() || !E_W_.allFinite() ||
        !E_b_.allFinite())
      throw NumericError("autoencoder: non-finite parameters");
    if (column_rank(W_) < W_.cols())
      throw NumericError("autoencoder.W: not full column rank");
  }

  /// Encoder = posterior mean of z | x under z ~ N(m, S),
  /// x | z ~ N(W z + b, rho^2 I). With M = rho^2 S^{-1} + W^T W:
  ///   E_W = M^{-1} W^T,  E_b = M^{-1} (rho^2 S^{-1} m - W^T b).
  static LinearAutoencoder exact(const Eigen::MatrixXd &W,
                                 const Eigen::VectorXd &b, double rho,
                                 const Eigen::VectorXd &prior_mean,
                                 const Eigen::MatrixXd &prior_cov) {
    detail::require_size(prior_mean.size(), W.cols(), "exact_encoder: mean");
    detail::require_size(prior_cov.rows(), W.cols(), "exact_encoder: cov");
    detail::require_size(prior_cov.cols(), W.cols(), "exact_encoder: cov");
    detail::require_size(b.size(), W.rows(), "exact_encoder: b");
    if (!(rho > 0.0))
      throw ConfigError("autoencoder.rho: must be positive");

    Eigen::LLT<Eigen::MatrixXd> S_llt(prior_cov);
    if (S_llt.info() != Eigen::Success)
      throw NumericError("exact_encoder: prior covariance not positive definite");
    const Eigen::Index d = W.cols();
    const Eigen::MatrixXd S_inv =
        S_llt.solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd M = rho * rho * S_inv + W.transpose() * W;
    Eigen::LLT<Eigen::MatrixXd> M_llt(M);
    if (M_llt.info() != Eigen::Success)
      throw NumericError("exact_encoder: singular posterior precision");
    Eigen::MatrixXd E_W = M_llt.solve(W.transpose());
    Eigen::VectorXd E_b =
        M_llt.solve(rho * rho * (S_inv * prior_mean) - W.transpose() * b);
    return {W, b, rho, std::move(E_W), std::move(E_b)};
  }

  /// Least-squares encoder (W^T W)^{-1} W^T (x - b); the rho -> 0 limit of
  /// the exact encoder.
  static LinearAutoencoder pseudo_inverse(const Eigen::MatrixXd &W,
                                          const Eigen::VectorXd &b,
                                          double rho) {
    if (W.cols() > W.rows())
      throw ShapeError("autoencoder.W: latent dimension exceeds pixel dimension");
    const Eigen::MatrixXd G = W.transpose() * W;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success || column_rank(W) < W.cols())
      throw NumericError("autoencoder.W: not full column rank");
    Eigen::MatrixXd E_W = ldlt.solve(W.transpose());
    Eigen::VectorXd E_b = -E_W * b;
    return {W, b, rho, std::move(E_W), std::move(E_b)};
  }

  Eigen::Index latent_dim() const { return W_.cols(); }
  Eigen::Index pixel_dim() const { return W_.rows(); }
  const Eigen::MatrixXd &W() const { return W_; }
  const Eigen::VectorXd &b() const { return b_; }
  double rho() const { return rho_; }
  const Eigen::MatrixXd &E_W() const { return E_W_; }
  const Eigen::VectorXd &E_b() const { return E_b_; }

  Eigen::VectorXd decode(const Eigen::VectorXd &z,
                         const Eigen::VectorXd &eps) const {
    detail::require_size(z.size(), latent_dim(), "decode: z");
    detail::require_size(eps.size(), pixel_dim(), "decode: eps");
    return W_ * z + b_ + rho_ * eps;
  }

  /// Noiseless decode D(z).
  Eigen::VectorXd decode_mean(const Eigen::VectorXd &z) const {
    detail::require_size(z.size(), latent_dim(), "decode: z");
    return W_ * z + b_;
  }

  Eigen::VectorXd encode(const Eigen::VectorXd &x) const {
    detail::require_size(x.size(), pixel_dim(), "encode: x");
    return E_W_ * x + E_b_;
  }

  /// cotangent^T dD/dz = W^T cotangent.
  Eigen::VectorXd decoder_vjp(const Eigen::VectorXd &z,
                              const Eigen::VectorXd &cotangent) const {
    detail::require_size(z.size(), latent_dim(), "decoder_vjp: z");
    detail::require_size(cotangent.size(), pixel_dim(),
                         "decoder_vjp: cotangent");
    return W_.transpose() * cotangent;
  }

  /// (1/rho^2) (D(E(x)) - x): pixel-space prior score through the
  /// deterministic encoder.
  Eigen::VectorXd data_score_approx(const Eigen::VectorXd &x) const {
    return (decode_mean(encode(x)) - x) / (rho_ * rho_);
  }

  bool operator==(const LinearAutoencoder &o) const {
    return detail::same(W_, o.W_) && detail::same(b_, o.b_) &&
           rho_ == o.rho_ && detail::same(E_W_, o.E_W_) &&
           detail::same(E_b_, o.E_b_);
  }

private:
  static Eigen::Index column_rank(const Eigen::MatrixXd &W) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(W);
    const auto &sv = svd.singularValues();
    const double tol = 1e-10 * std::max(1.0, sv.size() ? sv[0] : 0.0);
    return (sv.array() > tol).count();
  }

  Eigen::MatrixXd W_;
  Eigen::VectorXd b_;
  double rho_ = 1e-3;
  Eigen::MatrixXd E_W_;
  Eigen::VectorXd E_b_;
};

} // namespace dwgf
