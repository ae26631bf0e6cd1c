#ifndef SDMRAC_CONFIG_IO_HPP
#define SDMRAC_CONFIG_IO_HPP

// YAML load/save for ExperimentConfig. Kept apart from config.hpp so the core headers do not
// depend on yaml-cpp.

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include <yaml-cpp/yaml.h>

#include "sdmrac/config.hpp"

namespace sdmrac {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ConfigError("config: '" + where + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read_field(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config: bad value for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
  }
}

template <typename E, typename Parse>
void read_enum(const YAML::Node& node, const char* key, E& out, const std::string& where, Parse&& parse) {
  std::string s;
  read_field(node, key, s, where);
  if (s.empty()) return;
  try {
    out = parse(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: " + where + "." + key + ": " + e.what());
  }
}

inline AngleUnits units_from_string(const std::string& s) {
  if (s == "radians") return AngleUnits::radians;
  if (s == "degrees") return AngleUnits::degrees;
  throw std::invalid_argument("expected radians or degrees, got '" + s + "'");
}

inline UncertaintyModel uncertainty_from_string(const std::string& s) {
  if (s == "wing_rock") return UncertaintyModel::wing_rock;
  if (s == "zero") return UncertaintyModel::zero;
  throw std::invalid_argument("expected wing_rock or zero, got '" + s + "'");
}

inline IntegrationMethod method_from_string(const std::string& s) {
  if (s == "rk4") return IntegrationMethod::rk4;
  if (s == "euler") return IntegrationMethod::euler;
  throw std::invalid_argument("expected rk4 or euler, got '" + s + "'");
}

inline RetrainTrigger trigger_from_string(const std::string& s) {
  if (s == "new_points") return RetrainTrigger::new_points;
  if (s == "every_k_steps") return RetrainTrigger::every_k_steps;
  throw std::invalid_argument("expected new_points or every_k_steps, got '" + s + "'");
}

inline ScoreSpace space_from_string(const std::string& s) {
  if (s == "state") return ScoreSpace::state;
  if (s == "feature") return ScoreSpace::feature;
  throw std::invalid_argument("expected state or feature, got '" + s + "'");
}

}  // namespace detail

/// Parses a YAML document on top of the defaults. Unknown keys are rejected.
inline ExperimentConfig config_from_yaml(const std::string& text) {
  using namespace detail;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  if (!root || root.IsNull()) return c;
  check_keys(root, "", {"mode", "horizon", "dt", "integrator", "seed", "pipelined", "plant", "reference", "controller",
                        "bnn", "buffer", "retrain", "diagnostics"});
  read_enum(root, "mode", c.mode, "", mode_from_string);
  read_field(root, "horizon", c.horizon, "");
  read_field(root, "dt", c.dt, "");
  read_enum(root, "integrator", c.method, "", method_from_string);
  read_field(root, "seed", c.seed, "");
  read_field(root, "pipelined", c.pipelined, "");

  if (const auto n = root["plant"]) {
    check_keys(n, "plant", {"uncertainty", "units", "initial_state_deg", "wing_rock"});
    read_enum(n, "uncertainty", c.plant.uncertainty, "plant", uncertainty_from_string);
    read_enum(n, "units", c.plant.units, "plant", units_from_string);
    read_field(n, "initial_state_deg", c.plant.initial_state_deg, "plant");
    if (n["wing_rock"]) {
      std::vector<double> w;
      read_field(n, "wing_rock", w, "plant");
      if (w.size() != c.plant.params.w.size()) throw ConfigError("config: plant.wing_rock needs 6 coefficients");
      std::copy(w.begin(), w.end(), c.plant.params.w.begin());
    }
  }
  if (const auto n = root["reference"]) {
    check_keys(n, "reference", {"omega_n", "zeta", "steps_deg", "step_period"});
    read_field(n, "omega_n", c.reference.omega_n, "reference");
    read_field(n, "zeta", c.reference.zeta, "reference");
    read_field(n, "steps_deg", c.reference.steps_deg, "reference");
    read_field(n, "step_period", c.reference.step_period, "reference");
  }
  if (const auto n = root["controller"]) {
    check_keys(n, "controller", {"gamma", "weight_bound", "q_scale"});
    read_field(n, "gamma", c.controller.gamma, "controller");
    read_field(n, "weight_bound", c.controller.weight_bound, "controller");
    read_field(n, "q_scale", c.controller.q_scale, "controller");
  }
  if (const auto n = root["bnn"]) {
    check_keys(n, "bnn", {"hidden", "activation", "prior_std", "likelihood_std", "init_mu_std", "init_rho",
                          "train_draws", "feature_draws", "epochs", "batch_size", "learning_rate", "momentum",
                          "output_from_fast_weights"});
    std::vector<long> hidden;
    read_field(n, "hidden", hidden, "bnn");
    if (n["hidden"]) {
      c.bnn.hidden.clear();
      for (long h : hidden) {
        if (h <= 0) throw ConfigError("config: bnn.hidden widths must be positive");
        c.bnn.hidden.push_back(static_cast<Eigen::Index>(h));
      }
    }
    read_enum(n, "activation", c.bnn.activation, "bnn", sdmrac::activation_from_string);
    read_field(n, "prior_std", c.bnn.prior_std, "bnn");
    read_field(n, "likelihood_std", c.bnn.likelihood_std, "bnn");
    read_field(n, "init_mu_std", c.bnn.init_mu_std, "bnn");
    read_field(n, "init_rho", c.bnn.init_rho, "bnn");
    read_field(n, "train_draws", c.bnn.train_draws, "bnn");
    read_field(n, "feature_draws", c.bnn.feature_draws, "bnn");
    read_field(n, "epochs", c.bnn.epochs, "bnn");
    read_field(n, "batch_size", c.bnn.batch_size, "bnn");
    read_field(n, "learning_rate", c.bnn.learning_rate, "bnn");
    read_field(n, "momentum", c.bnn.momentum, "bnn");
    read_field(n, "output_from_fast_weights", c.bnn.output_from_fast_weights, "bnn");
  }
  if (const auto n = root["buffer"]) {
    check_keys(n, "buffer", {"capacity", "eps_tol", "kernel_width", "space"});
    read_field(n, "capacity", c.buffer.capacity, "buffer");
    read_field(n, "eps_tol", c.buffer.eps_tol, "buffer");
    read_field(n, "kernel_width", c.buffer.kernel_width, "buffer");
    read_enum(n, "space", c.buffer.space, "buffer", space_from_string);
  }
  if (const auto n = root["retrain"]) {
    check_keys(n, "retrain", {"trigger", "every"});
    read_enum(n, "trigger", c.retrain_trigger, "retrain", trigger_from_string);
    read_field(n, "every", c.retrain_every, "retrain");
  }
  if (const auto n = root["diagnostics"]) {
    check_keys(n, "diagnostics", {"pe_window", "pe_stride", "pe_threshold", "error_ceiling"});
    read_field(n, "pe_window", c.pe_window, "diagnostics");
    read_field(n, "pe_stride", c.pe_stride, "diagnostics");
    read_field(n, "pe_threshold", c.pe_threshold, "diagnostics");
    read_field(n, "error_ceiling", c.error_ceiling, "diagnostics");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_yaml(ss.str());
}

/// Canonical YAML with every field spelled out; round-trips through config_from_yaml.
inline std::string config_to_yaml(const ExperimentConfig& c) {
  const auto str = [](auto e) -> std::string {
    using E = decltype(e);
    if constexpr (std::is_same_v<E, AngleUnits>) return e == AngleUnits::radians ? "radians" : "degrees";
    if constexpr (std::is_same_v<E, UncertaintyModel>) return e == UncertaintyModel::wing_rock ? "wing_rock" : "zero";
    if constexpr (std::is_same_v<E, IntegrationMethod>) return e == IntegrationMethod::rk4 ? "rk4" : "euler";
    if constexpr (std::is_same_v<E, RetrainTrigger>) return e == RetrainTrigger::new_points ? "new_points" : "every_k_steps";
    if constexpr (std::is_same_v<E, ScoreSpace>) return e == ScoreSpace::state ? "state" : "feature";
    return "";
  };
  const auto flow = [](YAML::Emitter& out, const auto& seq) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& v : seq) out << v;
    out << YAML::EndSeq;
  };
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << to_string(c.mode);
  out << YAML::Key << "horizon" << YAML::Value << c.horizon;
  out << YAML::Key << "dt" << YAML::Value << c.dt;
  out << YAML::Key << "integrator" << YAML::Value << str(c.method);
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "pipelined" << YAML::Value << c.pipelined;

  out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "uncertainty" << YAML::Value << str(c.plant.uncertainty);
  out << YAML::Key << "units" << YAML::Value << str(c.plant.units);
  out << YAML::Key << "initial_state_deg" << YAML::Value;
  flow(out, c.plant.initial_state_deg);
  out << YAML::Key << "wing_rock" << YAML::Value;
  flow(out, c.plant.params.w);
  out << YAML::EndMap;

  out << YAML::Key << "reference" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "omega_n" << YAML::Value << c.reference.omega_n;
  out << YAML::Key << "zeta" << YAML::Value << c.reference.zeta;
  out << YAML::Key << "steps_deg" << YAML::Value;
  flow(out, c.reference.steps_deg);
  out << YAML::Key << "step_period" << YAML::Value << c.reference.step_period;
  out << YAML::EndMap;

  out << YAML::Key << "controller" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "gamma" << YAML::Value << c.controller.gamma;
  out << YAML::Key << "weight_bound" << YAML::Value << c.controller.weight_bound;
  out << YAML::Key << "q_scale" << YAML::Value << c.controller.q_scale;
  out << YAML::EndMap;

  out << YAML::Key << "bnn" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "hidden" << YAML::Value;
  std::vector<long> hidden(c.bnn.hidden.begin(), c.bnn.hidden.end());
  flow(out, hidden);
  out << YAML::Key << "activation" << YAML::Value << to_string(c.bnn.activation);
  out << YAML::Key << "prior_std" << YAML::Value << c.bnn.prior_std;
  out << YAML::Key << "likelihood_std" << YAML::Value << c.bnn.likelihood_std;
  out << YAML::Key << "init_mu_std" << YAML::Value << c.bnn.init_mu_std;
  out << YAML::Key << "init_rho" << YAML::Value << c.bnn.init_rho;
  out << YAML::Key << "train_draws" << YAML::Value << c.bnn.train_draws;
  out << YAML::Key << "feature_draws" << YAML::Value << c.bnn.feature_draws;
  out << YAML::Key << "epochs" << YAML::Value << c.bnn.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << c.bnn.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << c.bnn.learning_rate;
  out << YAML::Key << "momentum" << YAML::Value << c.bnn.momentum;
  out << YAML::Key << "output_from_fast_weights" << YAML::Value << c.bnn.output_from_fast_weights;
  out << YAML::EndMap;

  out << YAML::Key << "buffer" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "capacity" << YAML::Value << c.buffer.capacity;
  out << YAML::Key << "eps_tol" << YAML::Value << c.buffer.eps_tol;
  out << YAML::Key << "kernel_width" << YAML::Value << c.buffer.kernel_width;
  out << YAML::Key << "space" << YAML::Value << str(c.buffer.space);
  out << YAML::EndMap;

  out << YAML::Key << "retrain" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "trigger" << YAML::Value << str(c.retrain_trigger);
  out << YAML::Key << "every" << YAML::Value << c.retrain_every;
  out << YAML::EndMap;

  out << YAML::Key << "diagnostics" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "pe_window" << YAML::Value << c.pe_window;
  out << YAML::Key << "pe_stride" << YAML::Value << c.pe_stride;
  out << YAML::Key << "pe_threshold" << YAML::Value << c.pe_threshold;
  out << YAML::Key << "error_ceiling" << YAML::Value << c.error_ceiling;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace sdmrac

#endif  // SDMRAC_CONFIG_IO_HPP
