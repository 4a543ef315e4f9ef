#pragma once

#include <random>
#include <string>

#include "hetpanel/hetpanel.hpp"

namespace hptest {

using hetpanel::Index;
using hetpanel::Matrix;
using hetpanel::Vector;

inline hetpanel::Panel make_panel(const Matrix& values, hetpanel::Quarter start = {2004, 1},
                                  const std::string& prefix = "a") {
  hetpanel::Panel p;
  p.values = values;
  p.quarters = hetpanel::quarter_range(start, static_cast<std::size_t>(values.cols()));
  for (Index i = 0; i < values.rows(); ++i) {
    p.registry.push_back({prefix + std::to_string(i), hetpanel::Layer::firm, "s" + std::to_string(i % 3)});
  }
  return p;
}

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

/// y_it = mu_i + rho (y_i,t-1 - mu_i) + eps, stationary start.
inline Matrix simulate_ar1(Index n, Index t, double rho, std::mt19937_64& rng, double mu_sd = 1.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix y(n, t);
  for (Index i = 0; i < n; ++i) {
    const double mu = mu_sd * z(rng);
    double x = mu + z(rng) / std::sqrt(1.0 - rho * rho);
    for (Index s = 0; s < t; ++s) {
      x = mu + rho * (x - mu) + z(rng);
      y(i, s) = x;
    }
  }
  return y;
}

/// Random orthogonal matrix (Haar) of size n.
inline Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(n, n, rng));
  return qr.householderQ() * Matrix::Identity(n, n);
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace hptest
