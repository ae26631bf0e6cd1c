#ifndef SDMRAC_CONFIG_HPP
#define SDMRAC_CONFIG_HPP

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "sdmrac/bnn.hpp"
#include "sdmrac/buffer.hpp"
#include "sdmrac/dynamics.hpp"

namespace sdmrac {

enum class ControlMode { sdmrac, dmrac, baseline_only };
enum class AngleUnits { radians, degrees };
enum class UncertaintyModel { wing_rock, zero };
enum class RetrainTrigger { new_points, every_k_steps };

inline std::string to_string(ControlMode m) {
  switch (m) {
    case ControlMode::sdmrac: return "sdmrac";
    case ControlMode::dmrac: return "dmrac";
    case ControlMode::baseline_only: return "baseline_only";
  }
  return "sdmrac";
}

inline ControlMode mode_from_string(const std::string& s) {
  if (s == "sdmrac") return ControlMode::sdmrac;
  if (s == "dmrac") return ControlMode::dmrac;
  if (s == "baseline_only") return ControlMode::baseline_only;
  throw std::invalid_argument("unknown mode '" + s + "' (expected sdmrac, dmrac or baseline_only)");
}

struct PlantConfig {
  UncertaintyModel uncertainty = UncertaintyModel::wing_rock;
  WingRockParams params;
  /// Units of the simulated state. Initial conditions and commands are given in degrees and
  /// converted when the state is in radians.
  AngleUnits units = AngleUnits::radians;
  std::vector<double> initial_state_deg{1.0, 1.0};

  bool operator==(const PlantConfig&) const = default;
};

struct ReferenceConfig {
  double omega_n = 2.0;
  double zeta = 0.5;
  std::vector<double> steps_deg{1.0, -1.0, 2.0, 0.0};
  double step_period = 10.0;

  bool operator==(const ReferenceConfig&) const = default;
};

struct ControllerConfig {
  double gamma = 10.0;
  double weight_bound = 10.0;
  double q_scale = 1.0;

  bool operator==(const ControllerConfig&) const = default;
};

struct BnnConfig {
  std::vector<Eigen::Index> hidden{20, 20};
  Activation activation = Activation::tanh;
  double prior_std = 1.0;
  double likelihood_std = 0.1;
  double init_mu_std = 0.1;
  double init_rho = -3.0;
  std::size_t train_draws = 2;
  std::size_t feature_draws = 10;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  /// Copy the fast weights into the output layer before each retrain (off: the network keeps its own).
  bool output_from_fast_weights = false;

  bool operator==(const BnnConfig&) const = default;
};

struct BufferConfig {
  std::size_t capacity = 250;
  double eps_tol = 0.1;
  double kernel_width = 0.05;
  ScoreSpace space = ScoreSpace::state;

  bool operator==(const BufferConfig&) const = default;
};

struct ExperimentConfig {
  PlantConfig plant;
  ReferenceConfig reference;
  ControllerConfig controller;
  BnnConfig bnn;
  BufferConfig buffer;
  ControlMode mode = ControlMode::sdmrac;
  double horizon = 40.0;
  double dt = 0.001;
  IntegrationMethod method = IntegrationMethod::rk4;
  std::uint64_t seed = 1;
  RetrainTrigger retrain_trigger = RetrainTrigger::new_points;
  std::size_t retrain_every = 25;
  bool pipelined = false;
  double pe_window = 2.0;
  double pe_stride = 0.5;
  double pe_threshold = 1e-6;
  double error_ceiling = 0.5;

  bool operator==(const ExperimentConfig&) const = default;

  void validate() const {
    detail::require(horizon > 0.0 && std::isfinite(horizon), "config: horizon must be positive");
    detail::require(dt > 0.0 && dt < horizon, "config: dt must be positive and below the horizon");
    detail::require(plant.initial_state_deg.size() == 2, "config: initial_state_deg needs two entries");
    detail::require(reference.omega_n > 0.0 && reference.zeta > 0.0, "config: reference model must be stable");
    detail::require(reference.step_period > 0.0, "config: step_period must be positive");
    detail::require(controller.gamma > 0.0, "config: gamma must be positive");
    detail::require(controller.weight_bound > 0.0, "config: weight_bound must be positive");
    detail::require(controller.q_scale > 0.0, "config: q_scale must be positive");
    detail::require(!bnn.hidden.empty(), "config: at least one hidden layer");
    detail::require(bnn.prior_std > 0.0 && bnn.likelihood_std > 0.0, "config: prior/likelihood std must be positive");
    detail::require(bnn.feature_draws >= 1 && bnn.train_draws >= 1, "config: draw counts must be positive");
    detail::require(bnn.batch_size >= 1, "config: batch_size must be positive");
    detail::require(bnn.learning_rate >= 0.0, "config: learning_rate must be non-negative");
    detail::require(buffer.capacity >= 1 && buffer.kernel_width > 0.0, "config: invalid buffer settings");
    detail::require(retrain_every >= 1, "config: retrain_every must be positive");
    detail::require(pe_window > 0.0 && pe_stride > 0.0, "config: PE window and stride must be positive");
  }

  double angle_scale() const { return plant.units == AngleUnits::radians ? std::numbers::pi / 180.0 : 1.0; }

  VectorXd initial_state() const {
    VectorXd x0(2);
    x0 << plant.initial_state_deg[0] * angle_scale(), plant.initial_state_deg[1] * angle_scale();
    return x0;
  }

  StaircaseReference command() const {
    StaircaseReference s;
    s.period = reference.step_period;
    for (double v : reference.steps_deg) s.values.push_back(v * angle_scale());
    return s;
  }

  LinearPlant make_plant() const {
    if (plant.uncertainty == UncertaintyModel::zero) {
      LinearPlant p = wing_rock_plant(plant.params);
      return {p.A, p.B};
    }
    return wing_rock_plant(plant.params);
  }

  ReferenceModel make_reference_model() const {
    return ReferenceModel::second_order(reference.omega_n, reference.zeta);
  }
};

}  // namespace sdmrac

#endif  // SDMRAC_CONFIG_HPP
