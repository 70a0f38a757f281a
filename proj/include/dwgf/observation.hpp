#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dwgf/errors.hpp"
#include "dwgf/random.hpp"

namespace dwgf {

enum class OperatorKind { identity, mask, downsample };

inline const char *to_string(OperatorKind kind) {
  switch (kind) {
  case OperatorKind::identity:
    return "identity";
  case OperatorKind::mask:
    return "mask";
  case OperatorKind::downsample:
    return "downsample";
  }
  return "?";
}

/// Linear corruption operator on 1-D signals.
///
///  - identity:   A x = x
///  - mask:       A x = x restricted to kept coordinates (dropped ones removed)
///  - downsample: A x = non-overlapping block means of width `factor`
class ForwardOperator {
public:
  static ForwardOperator identity(Eigen::Index dim) {
    if (dim < 1)
      throw ConfigError("observation.operator: dimension must be >= 1");
    ForwardOperator op;
    op.kind_ = OperatorKind::identity;
    op.input_dim_ = dim;
    op.output_dim_ = dim;
    return op;
  }

  static ForwardOperator mask(std::vector<bool> keep) {
    if (keep.empty())
      throw ConfigError("observation.operator.keep: empty mask");
    ForwardOperator op;
    op.kind_ = OperatorKind::mask;
    op.input_dim_ = static_cast<Eigen::Index>(keep.size());
    for (std::size_t j = 0; j < keep.size(); ++j)
      if (keep[j])
        op.kept_.push_back(static_cast<Eigen::Index>(j));
    if (op.kept_.empty())
      throw ConfigError("observation.operator.keep: no coordinate is kept");
    op.output_dim_ = static_cast<Eigen::Index>(op.kept_.size());
    op.keep_ = std::move(keep);
    return op;
  }

  static ForwardOperator downsample(Eigen::Index dim, int factor) {
    if (factor < 1)
      throw ConfigError("observation.operator.factor: must be >= 1");
    if (dim < 1 || dim % factor != 0)
      throw ConfigError("observation.operator.factor: " +
                        std::to_string(factor) +
                        " does not divide signal length " +
                        std::to_string(dim));
    ForwardOperator op;
    op.kind_ = OperatorKind::downsample;
    op.input_dim_ = dim;
    op.output_dim_ = dim / factor;
    op.factor_ = factor;
    return op;
  }

  OperatorKind kind() const { return kind_; }
  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return output_dim_; }
  const std::vector<bool> &keep() const { return keep_; }
  int factor() const { return factor_; }

  Eigen::VectorXd apply(const Eigen::VectorXd &x) const {
    detail::require_size(x.size(), input_dim_, "apply: x");
    switch (kind_) {
    case OperatorKind::identity:
      return x;
    case OperatorKind::mask: {
      Eigen::VectorXd out(output_dim_);
      for (Eigen::Index k = 0; k < output_dim_; ++k)
        out[k] = x[kept_[static_cast<std::size_t>(k)]];
      return out;
    }
    case OperatorKind::downsample: {
      Eigen::VectorXd out(output_dim_);
      for (Eigen::Index k = 0; k < output_dim_; ++k)
        out[k] = x.segment(k * factor_, factor_).mean();
      return out;
    }
    }
    return x;
  }

  Eigen::VectorXd adjoint(const Eigen::VectorXd &u) const {
    detail::require_size(u.size(), output_dim_, "adjoint: u");
    switch (kind_) {
    case OperatorKind::identity:
      return u;
    case OperatorKind::mask: {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(input_dim_);
      for (Eigen::Index k = 0; k < output_dim_; ++k)
        out[kept_[static_cast<std::size_t>(k)]] = u[k];
      return out;
    }
    case OperatorKind::downsample: {
      Eigen::VectorXd out(input_dim_);
      for (Eigen::Index k = 0; k < output_dim_; ++k)
        out.segment(k * factor_, factor_).setConstant(u[k] / factor_);
      return out;
    }
    }
    return u;
  }

  /// Dense matrix of the operator, for oracles.
  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd A(output_dim_, input_dim_);
    for (Eigen::Index j = 0; j < input_dim_; ++j)
      A.col(j) = apply(Eigen::VectorXd::Unit(input_dim_, j));
    return A;
  }

  bool operator==(const ForwardOperator &o) const {
    return kind_ == o.kind_ && input_dim_ == o.input_dim_ &&
           keep_ == o.keep_ && factor_ == o.factor_;
  }

private:
  ForwardOperator() = default;

  OperatorKind kind_ = OperatorKind::identity;
  Eigen::Index input_dim_ = 0;
  Eigen::Index output_dim_ = 0;
  std::vector<bool> keep_;
  std::vector<Eigen::Index> kept_;
  int factor_ = 1;
};

/// y = A x + eps, eps ~ N(0, sigma_y^2 I).
class ObservationModel {
public:
  ObservationModel(ForwardOperator op, Eigen::VectorXd y, double sigma_y)
      : op_(std::move(op)), y_(std::move(y)), sigma_y_(sigma_y) {
    detail::require_size(y_.size(), op_.output_dim(), "observation.y");
    if (!(sigma_y >= 0.0) || !std::isfinite(sigma_y))
      throw ConfigError("observation.sigma_y: must be nonnegative");
    if (!y_.allFinite())
      throw NumericError("observation.y: non-finite entries");
  }

  const ForwardOperator &op() const { return op_; }
  const Eigen::VectorXd &y() const { return y_; }
  double sigma_y() const { return sigma_y_; }

  /// grad_x of -(1/2 sigma_y^2) ||y - A x||^2.
  Eigen::VectorXd likelihood_grad(const Eigen::VectorXd &x) const {
    require_positive_noise();
    return op_.adjoint(y_ - op_.apply(x)) / (sigma_y_ * sigma_y_);
  }

  /// (1/2 sigma_y^2) ||y - A x||^2, the negative log-likelihood up to a
  /// constant.
  double neg_log_likelihood(const Eigen::VectorXd &x) const {
    require_positive_noise();
    return 0.5 * (y_ - op_.apply(x)).squaredNorm() / (sigma_y_ * sigma_y_);
  }

  bool operator==(const ObservationModel &o) const {
    return op_ == o.op_ && detail::same(y_, o.y_) && sigma_y_ == o.sigma_y_;
  }

private:
  void require_positive_noise() const {
    if (!(sigma_y_ > 0.0))
      throw ConfigError("observation.sigma_y: must be positive for the "
                        "likelihood gradient");
  }

  ForwardOperator op_;
  Eigen::VectorXd y_;
  double sigma_y_;
};

/// Simulate an observation of x_true.
inline ObservationModel observe(const ForwardOperator &op,
                                const Eigen::VectorXd &x_true, double sigma_y,
                                Rng &rng) {
  Eigen::VectorXd y = op.apply(x_true);
  if (sigma_y > 0.0)
    y += sigma_y * standard_normal(rng, y.size());
  return {op, std::move(y), sigma_y};
}

} // namespace dwgf
