#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace dwgf {

/// Every stochastic component draws from an explicitly seeded engine.
using Rng = std::mt19937_64;

inline Eigen::VectorXd standard_normal(Rng &rng, Eigen::Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(dim);
  for (Eigen::Index k = 0; k < dim; ++k)
    out[k] = normal(rng);
  return out;
}

inline Eigen::MatrixXd standard_normal(Rng &rng, Eigen::Index rows,
                                       Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  // Row-major fill so that row i only depends on draws made before it.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      out(i, j) = normal(rng);
  return out;
}

} // namespace dwgf
