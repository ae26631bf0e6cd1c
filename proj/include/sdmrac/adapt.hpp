#ifndef SDMRAC_ADAPT_HPP
#define SDMRAC_ADAPT_HPP

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <utility>

#include <unsupported/Eigen/KroneckerProduct>

#include "sdmrac/common.hpp"
#include "sdmrac/dynamics.hpp"

namespace sdmrac {

/// Solves A_m^T P + P A_m + Q = 0 through the Kronecker-vectorized linear system. Intended for the
/// small state dimensions of flight-control models.
inline MatrixXd solve_lyapunov(const MatrixXd& a_m, const MatrixXd& q) {
  detail::require(a_m.rows() > 0 && a_m.rows() == a_m.cols(), "solve_lyapunov: A_m must be square");
  detail::require(q.rows() == a_m.rows() && q.cols() == a_m.cols(), "solve_lyapunov: Q must match A_m");
  std::complex<double> bad;
  if (!is_hurwitz(a_m, &bad)) {
    throw std::invalid_argument("solve_lyapunov: A_m is not Hurwitz, eigenvalue " + format_complex(bad) +
                                " has non-negative real part");
  }
  const double scale = std::max(1.0, q.norm());
  detail::require((q - q.transpose()).norm() <= 1e-12 * scale, "solve_lyapunov: Q must be symmetric");
  Eigen::LLT<MatrixXd> llt(q);
  detail::require(llt.info() == Eigen::Success, "solve_lyapunov: Q must be positive definite");

  const auto n = a_m.rows();
  const MatrixXd id = MatrixXd::Identity(n, n);
  const MatrixXd at = a_m.transpose();
  // vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P) for column-major vec.
  const MatrixXd lhs = Eigen::kroneckerProduct(id, at).eval() + Eigen::kroneckerProduct(at, id).eval();
  const VectorXd rhs = -Eigen::Map<const VectorXd>(q.data(), q.size());
  const VectorXd vec_p = lhs.fullPivLu().solve(rhs);
  MatrixXd p = Eigen::Map<const MatrixXd>(vec_p.data(), n, n);
  return 0.5 * (p + p.transpose());
}

/// Learning rate for the fast weights: a positive scalar or a k x k positive-definite matrix.
struct LearningRate {
  double scalar = 10.0;
  std::optional<MatrixXd> matrix;

  MatrixXd apply(const MatrixXd& v) const { return matrix ? MatrixXd(*matrix * v) : MatrixXd(scalar * v); }
};

struct ControllerGains {
  MatrixXd k_x;
  MatrixXd k_r;
  LearningRate gamma;
  MatrixXd Q;
  MatrixXd P;
  /// P * B, the only way P and B enter the update law.
  MatrixXd PB;
};

/// Baseline gains from the matching conditions A - B k_x = A_m, B k_r = B_m, plus the Lyapunov
/// matrix P for the reference model. Throws when the conditions cannot be met exactly.
inline ControllerGains make_gains(const LinearPlant& plant, const ReferenceModel& model, LearningRate gamma,
                                  const std::optional<MatrixXd>& q = std::nullopt) {
  detail::require(model.A_m.rows() == plant.state_dim(), "make_gains: plant and reference model differ in size");
  const auto n = plant.state_dim();
  ControllerGains g;
  const auto qr = plant.B.colPivHouseholderQr();
  detail::require(qr.rank() == plant.B.cols(), "make_gains: B must have full column rank");
  g.k_x = qr.solve(plant.A - model.A_m);
  g.k_r = qr.solve(model.B_m);
  const double tol = 1e-12 * std::max(1.0, model.A_m.norm() + model.B_m.norm());
  if ((plant.A - plant.B * g.k_x - model.A_m).norm() > tol || (plant.B * g.k_r - model.B_m).norm() > tol) {
    throw std::invalid_argument("make_gains: matching conditions have no exact solution for this plant");
  }
  g.gamma = std::move(gamma);
  if (g.gamma.matrix) {
    Eigen::LLT<MatrixXd> llt(*g.gamma.matrix);
    detail::require(llt.info() == Eigen::Success, "make_gains: Gamma must be positive definite");
  } else {
    detail::require(g.gamma.scalar > 0.0, "make_gains: Gamma must be positive");
  }
  g.Q = q.value_or(MatrixXd::Identity(n, n));
  g.P = solve_lyapunov(model.A_m, g.Q);
  g.PB = g.P * plant.B;
  return g;
}

/// Output-layer weights (k x m) kept inside the Frobenius ball of radius `bound`.
struct FastWeights {
  MatrixXd W;
  double bound = 10.0;

  static FastWeights zeros(Eigen::Index k, Eigen::Index m, double bound) {
    detail::require(bound > 0.0, "FastWeights: bound must be positive");
    return {MatrixXd::Zero(k, m), bound};
  }
};

/// u_pd + u_crm = -k_x x + k_r r
inline VectorXd baseline_control(const ControllerGains& gains, const VectorXd& x, const VectorXd& r) {
  detail::require(x.size() == gains.k_x.cols() && r.size() == gains.k_r.cols(),
                  "baseline_control: dimension mismatch");
  return -gains.k_x * x + gains.k_r * r;
}

/// u_ad = W^T phi
inline VectorXd adaptive_element(const FastWeights& weights, const VectorXd& phi) {
  if (phi.size() != weights.W.rows()) {
    throw std::invalid_argument("adaptive_element: feature size " + std::to_string(phi.size()) +
                                " does not match W with " + std::to_string(weights.W.rows()) + " rows");
  }
  return weights.W.transpose() * phi;
}

/// Unprojected weight rate -Gamma phi_mean e^T P B. `tracking_error` is the operand of the law,
/// x_m - x for a plant written as x' = A x + B (u + delta).
inline MatrixXd fast_weight_rate(const VectorXd& phi_mean, const VectorXd& tracking_error,
                                 const ControllerGains& gains) {
  detail::require(tracking_error.size() == gains.PB.rows(), "fast_weight_rate: error dimension mismatch");
  const MatrixXd outer = phi_mean * (tracking_error.transpose() * gains.PB);
  return -gains.gamma.apply(outer);
}

/// One explicit Euler step of the projected law, followed by rescaling onto the ball.
inline FastWeights update_fast_weights(const FastWeights& weights, const VectorXd& phi_mean,
                                       const VectorXd& tracking_error, const ControllerGains& gains, double dt) {
  if (!phi_mean.allFinite() || !tracking_error.allFinite()) {
    throw std::invalid_argument("update_fast_weights: non-finite feature mean or tracking error");
  }
  detail::require(phi_mean.size() == weights.W.rows(), "update_fast_weights: feature dimension mismatch");
  detail::require(gains.PB.cols() == weights.W.cols(), "update_fast_weights: output dimension mismatch");
  FastWeights next = weights;
  next.W += dt * fast_weight_rate(phi_mean, tracking_error, gains);
  const double norm = next.W.norm();
  if (norm > next.bound) next.W *= next.bound / norm;
  return next;
}

/// u = u_pd + u_crm - u_ad
inline VectorXd total_control(const ControllerGains& gains, const FastWeights& weights, const VectorXd& phi_sample,
                              const VectorXd& x, const VectorXd& r) {
  return baseline_control(gains, x, r) - adaptive_element(weights, phi_sample);
}

}  // namespace sdmrac

#endif  // SDMRAC_ADAPT_HPP
