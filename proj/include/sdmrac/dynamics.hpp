#ifndef SDMRAC_DYNAMICS_HPP
#define SDMRAC_DYNAMICS_HPP

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sdmrac/common.hpp"

namespace sdmrac {

using UncertaintyFn = std::function<VectorXd(const VectorXd&)>;

/// x' = A x + B (u + delta(x)) with matched uncertainty delta.
struct LinearPlant {
  MatrixXd A;
  MatrixXd B;
  UncertaintyFn uncertainty;

  LinearPlant(MatrixXd a, MatrixXd b, UncertaintyFn delta = {})
      : A(std::move(a)), B(std::move(b)), uncertainty(std::move(delta)) {
    detail::require(A.rows() > 0 && B.cols() > 0, "LinearPlant: zero-dimensional plant");
    detail::require(A.rows() == A.cols(), "LinearPlant: A must be square, got " + detail::shape(A));
    detail::require(B.rows() == A.rows(),
                    "LinearPlant: B must have " + std::to_string(A.rows()) + " rows, got " +
                        detail::shape(B));
    if (!uncertainty) {
      const auto m = B.cols();
      uncertainty = [m](const VectorXd&) { return VectorXd::Zero(m); };
    }
  }

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
};

inline bool is_hurwitz(const MatrixXd& a, std::complex<double>* offending = nullptr) {
  const Eigen::VectorXcd eig = a.eigenvalues();
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (!(eig(i).real() < 0.0)) {
      if (offending != nullptr) *offending = eig(i);
      return false;
    }
  }
  return true;
}

inline std::string format_complex(std::complex<double> z) {
  std::ostringstream os;
  os << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
  return os.str();
}

/// Desired closed-loop behaviour x_m' = A_m x_m + B_m r. A_m must be Hurwitz.
struct ReferenceModel {
  MatrixXd A_m;
  MatrixXd B_m;

  ReferenceModel(MatrixXd a_m, MatrixXd b_m) : A_m(std::move(a_m)), B_m(std::move(b_m)) {
    detail::require(A_m.rows() > 0, "ReferenceModel: zero-dimensional model");
    detail::require(A_m.rows() == A_m.cols(),
                    "ReferenceModel: A_m must be square, got " + detail::shape(A_m));
    detail::require(B_m.rows() == A_m.rows(),
                    "ReferenceModel: B_m row count must match A_m, got " + detail::shape(B_m));
    std::complex<double> bad;
    detail::require(is_hurwitz(A_m, &bad),
                    "ReferenceModel: A_m is not Hurwitz (eigenvalue " + format_complex(bad) + ")");
  }

  /// Second-order model with natural frequency omega_n and damping zeta, unit DC gain.
  static ReferenceModel second_order(double omega_n, double zeta) {
    MatrixXd a(2, 2);
    a << 0.0, 1.0, -omega_n * omega_n, -2.0 * zeta * omega_n;
    MatrixXd b(2, 1);
    b << 0.0, omega_n * omega_n;
    return {a, b};
  }
};

/// Coefficients of the wing-rock roll uncertainty polynomial.
struct WingRockParams {
  std::array<double, 6> w{1.0, 0.2314, 0.6918, -0.6245, 0.1, 0.214};

  bool operator==(const WingRockParams&) const = default;
};

/// delta(phi, p) = w0 + w1 phi + w2 p + w3 |phi| p + w4 |p| p + w5 phi^3
inline double wing_rock_uncertainty(const WingRockParams& params, const VectorXd& x) {
  detail::require(x.size() == 2, "wing_rock_uncertainty: state must be [phi, p]");
  const double phi = x(0);
  const double p = x(1);
  const auto& w = params.w;
  return w[0] + w[1] * phi + w[2] * p + w[3] * std::abs(phi) * p + w[4] * std::abs(p) * p +
         w[5] * phi * phi * phi;
}

/// Roll angle / roll rate double integrator with the wing-rock uncertainty.
inline LinearPlant wing_rock_plant(const WingRockParams& params = {}) {
  MatrixXd a(2, 2);
  a << 0.0, 1.0, 0.0, 0.0;
  MatrixXd b(2, 1);
  b << 0.0, 1.0;
  return {a, b, [params](const VectorXd& x) {
            VectorXd d(1);
            d(0) = wing_rock_uncertainty(params, x);
            return d;
          }};
}

enum class IntegrationMethod { rk4, euler };

struct IntegratorConfig {
  double dt = 0.001;
  IntegrationMethod method = IntegrationMethod::rk4;

  void validate() const {
    detail::require(dt > 0.0 && std::isfinite(dt), "IntegratorConfig: dt must be positive");
  }
};

template <typename Derivative>
VectorXd integrate_step(const Derivative& f, const VectorXd& x, double dt, IntegrationMethod method) {
  if (method == IntegrationMethod::euler) return x + dt * f(x);
  const VectorXd k1 = f(x);
  const VectorXd k2 = f(x + 0.5 * dt * k1);
  const VectorXd k3 = f(x + 0.5 * dt * k2);
  const VectorXd k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline VectorXd plant_derivative(const LinearPlant& plant, const VectorXd& x, const VectorXd& u) {
  if (x.size() != plant.state_dim() || u.size() != plant.input_dim()) {
    throw std::invalid_argument("plant_derivative: expected x of size " +
                                std::to_string(plant.state_dim()) + " and u of size " +
                                std::to_string(plant.input_dim()) + ", got " +
                                std::to_string(x.size()) + " and " + std::to_string(u.size()));
  }
  return plant.A * x + plant.B * (u + plant.uncertainty(x));
}

inline VectorXd reference_step(const ReferenceModel& model, const VectorXd& x_m, const VectorXd& r,
                               double dt, IntegrationMethod method = IntegrationMethod::rk4) {
  detail::require(dt > 0.0, "reference_step: dt must be positive");
  detail::require(x_m.size() == model.A_m.rows() && r.size() == model.B_m.cols(),
                  "reference_step: dimension mismatch");
  const VectorXd forcing = model.B_m * r;
  return integrate_step([&](const VectorXd& s) -> VectorXd { return model.A_m * s + forcing; }, x_m,
                        dt, method);
}

/// Piecewise-constant command: values[i] is held on [i*period, (i+1)*period); the last value
/// persists afterwards.
struct StaircaseReference {
  std::vector<double> values;
  double period = 10.0;

  double at(double t) const {
    if (values.empty()) return 0.0;
    const auto idx = static_cast<std::size_t>(std::max(0.0, std::floor(t / period + 1e-9)));
    return values[std::min(idx, values.size() - 1)];
  }

  /// Times at which the command changes value (excluding t = 0).
  std::vector<double> switch_times() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < values.size(); ++i) out.push_back(static_cast<double>(i) * period);
    return out;
  }
};

struct ControlOutput {
  VectorXd u;
  VectorXd u_ad;
};

using ControllerFn =
    std::function<ControlOutput(double t, const VectorXd& x, const VectorXd& x_m, const VectorXd& r)>;
using ReferenceFn = std::function<VectorXd(double t)>;

/// Per-step record of the closed loop. Row k holds the state at t[k] and the control applied
/// over [t[k], t[k] + dt).
struct TrajectoryLog {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  std::vector<double> t;
  std::vector<VectorXd> x;
  std::vector<VectorXd> x_m;
  std::vector<VectorXd> u;
  std::vector<VectorXd> u_ad;
  std::vector<VectorXd> delta;
  std::vector<VectorXd> e;

  std::size_t size() const { return t.size(); }

  void reserve(std::size_t steps) {
    for (auto* v : {&x, &x_m, &u, &u_ad, &delta, &e}) v->reserve(steps);
    t.reserve(steps);
  }

  void write_csv(std::ostream& os) const {
    const auto indexed = [&](const std::string& base, Eigen::Index count, bool bare_if_scalar) {
      std::string s;
      for (Eigen::Index i = 0; i < count; ++i) {
        if (i > 0) s += ",";
        s += (bare_if_scalar && count == 1) ? base : base + std::to_string(i + 1);
      }
      return s;
    };
    os << "t," << indexed("x", n, false) << "," << indexed("xm", n, false) << ","
       << indexed("u", m, true) << "," << indexed("u_ad", m, true) << ","
       << indexed("delta_true", m, true) << "," << indexed("e", n, false) << "\n";
    os.precision(17);
    for (std::size_t k = 0; k < size(); ++k) {
      os << t[k];
      for (const auto* v : {&x, &x_m, &u, &u_ad, &delta, &e}) {
        const VectorXd& row = (*v)[k];
        for (Eigen::Index i = 0; i < row.size(); ++i) os << "," << row(i);
      }
      os << "\n";
    }
  }
};

/// Divergence that carries the log recorded up to the last finite step.
class TrajectoryDivergence : public DivergenceError {
 public:
  TrajectoryDivergence(const std::string& what, std::size_t last_finite_step, TrajectoryLog partial)
      : DivergenceError(what, last_finite_step), partial_(std::move(partial)) {}

  const TrajectoryLog& partial_log() const { return partial_; }

 private:
  TrajectoryLog partial_;
};

/// Fixed-step simulation of plant + reference model under `controller`. The control is held
/// constant over each step.
inline TrajectoryLog integrate_closed_loop(const LinearPlant& plant, const ReferenceModel& model,
                                           const ControllerFn& controller,
                                           const ReferenceFn& reference, const VectorXd& x0,
                                           const VectorXd& x_m0, double horizon,
                                           const IntegratorConfig& cfg) {
  cfg.validate();
  detail::require(horizon > 0.0 && std::isfinite(horizon),
                  "integrate_closed_loop: horizon must be positive");
  detail::require(x0.size() == plant.state_dim() && x_m0.size() == plant.state_dim() &&
                      model.A_m.rows() == plant.state_dim(),
                  "integrate_closed_loop: state dimension mismatch");

  const auto steps = static_cast<std::size_t>(std::llround(horizon / cfg.dt));
  TrajectoryLog log;
  log.n = plant.state_dim();
  log.m = plant.input_dim();
  log.reserve(steps);

  VectorXd x = x0;
  VectorXd x_m = x_m0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    const VectorXd r = reference(t);
    ControlOutput out = controller(t, x, x_m, r);
    if (out.u_ad.size() == 0) out.u_ad = VectorXd::Zero(log.m);

    log.t.push_back(t);
    log.x.push_back(x);
    log.x_m.push_back(x_m);
    log.delta.push_back(plant.uncertainty(x));
    log.e.push_back(x - x_m);

    const VectorXd u = out.u;
    log.u.push_back(std::move(out.u));
    log.u_ad.push_back(std::move(out.u_ad));

    x = integrate_step([&](const VectorXd& s) { return plant_derivative(plant, s, u); }, x, cfg.dt,
                       cfg.method);
    x_m = reference_step(model, x_m, r, cfg.dt, cfg.method);
    if (!x.allFinite() || !x_m.allFinite() || !u.allFinite()) {
      throw TrajectoryDivergence("closed loop diverged after step " + std::to_string(k) +
                                     " (t = " + std::to_string(t) +
                                     " s); last finite step index " + std::to_string(k),
                                 k, std::move(log));
    }
  }
  return log;
}

}  // namespace sdmrac

#endif  // SDMRAC_DYNAMICS_HPP
