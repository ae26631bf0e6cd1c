#ifndef SDMRAC_HARNESS_HPP
#define SDMRAC_HARNESS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "sdmrac/adapt.hpp"
#include "sdmrac/bnn.hpp"
#include "sdmrac/buffer.hpp"
#include "sdmrac/config.hpp"
#include "sdmrac/csv.hpp"
#include "sdmrac/dynamics.hpp"

namespace sdmrac {

// ---------------------------------------------------------------------------
// Persistency of excitation

struct PEWindowReport {
  double start = 0.0;
  double end = 0.0;
  MatrixXd gram;
  double lambda_min = 0.0;
  double gamma_threshold = 0.0;

  bool exciting() const { return lambda_min > gamma_threshold; }
};

/// Trapezoid-integrated feature Gram matrix int phi phi^T over sliding windows of uniformly
/// sampled features. Window and stride are rounded to whole samples.
inline std::vector<PEWindowReport> pe_spectrum(const std::vector<double>& t, const std::vector<VectorXd>& phi,
                                               double window, double stride, double gamma_threshold = 1e-6) {
  detail::require(t.size() == phi.size(), "pe_spectrum: times and features differ in length");
  detail::require(window > 0.0 && stride > 0.0, "pe_spectrum: window and stride must be positive");
  if (t.size() < 2) throw std::invalid_argument("pe_spectrum: window longer than log");
  const double dt = t[1] - t[0];
  const auto span = static_cast<std::size_t>(std::llround(window / dt));
  const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(stride / dt)));
  if (span == 0 || span >= t.size()) throw std::invalid_argument("pe_spectrum: window longer than log");

  std::vector<PEWindowReport> out;
  for (std::size_t first = 0; first + span < t.size(); first += step) {
    const auto k = phi[first].size();
    MatrixXd gram = MatrixXd::Zero(k, k);
    for (std::size_t i = first; i < first + span; ++i) {
      const double h = t[i + 1] - t[i];
      gram.noalias() += 0.5 * h * (phi[i] * phi[i].transpose() + phi[i + 1] * phi[i + 1].transpose());
    }
    gram = 0.5 * (gram + gram.transpose());
    PEWindowReport r;
    r.start = t[first];
    r.end = t[first + span];
    r.lambda_min = Eigen::SelfAdjointEigenSolver<MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues()(0);
    r.gram = std::move(gram);
    r.gamma_threshold = gamma_threshold;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run records

/// Per-step controller internals that the trajectory log does not hold.
struct StepTrace {
  std::vector<VectorXd> phi_sample;
  std::vector<VectorXd> phi_mean;
  std::vector<MatrixXd> W;
  std::vector<std::uint64_t> sigma;
  std::vector<VectorXd> u_ad_mean;
  std::vector<VectorXd> epistemic_std;
  double aleatoric_std = 0.0;

  std::size_t size() const { return W.size(); }
};

struct Publication {
  double t = 0.0;
  std::uint64_t sigma = 0;
  std::size_t buffer_points = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t aborted_epochs = 0;
};

struct PhaseStats {
  double start = 0.0;
  double end = 0.0;
  double tracking_rms = 0.0;
  double uncertainty_rmse = 0.0;
  double epistemic_band = 0.0;
  double aleatoric_band = 0.0;

  bool operator==(const PhaseStats&) const = default;
};

/// Epistemic band width right after a command step versus just before the next one.
struct BandWindow {
  double step_time = 0.0;
  double transient_width = 0.0;
  double settled_width = 0.0;
  bool settled_outside_buffer = false;

  bool operator==(const BandWindow&) const = default;
};

struct DiagnosticsReport {
  std::string mode;
  bool completed = true;
  std::string error;
  std::vector<PhaseStats> phases;
  double tracking_rms_steady = 0.0;
  double tracking_rms_after_settle = 0.0;
  double tracking_sup_after_settle = 0.0;
  double uncertainty_rmse_first = 0.0;
  double uncertainty_rmse_last = 0.0;
  double w_total_variation = 0.0;
  double w_max_norm = 0.0;
  double weight_bound = 0.0;
  double hf_error_energy = 0.0;
  std::vector<double> pe_window_start;
  std::vector<double> pe_lambda_min;
  std::optional<double> first_retrain_time;
  std::size_t publications = 0;
  std::uint64_t final_sigma = 0;
  std::size_t buffer_size = 0;
  std::vector<BandWindow> band_windows;

  bool operator==(const DiagnosticsReport&) const = default;
};

struct ExperimentResult {
  ExperimentConfig config;
  TrajectoryLog log;
  StepTrace trace;
  std::vector<Publication> publications;
  std::optional<ReplayBuffer> buffer;
  VersionPtr final_version;
  DiagnosticsReport diagnostics;
  bool diverged = false;
  std::string error;
};

// ---------------------------------------------------------------------------
// Signal statistics

namespace detail {

inline std::pair<std::size_t, std::size_t> index_range(const std::vector<double>& t, double t0, double t1) {
  const auto lo = std::lower_bound(t.begin(), t.end(), t0 - 1e-9);
  const auto hi = std::lower_bound(t.begin(), t.end(), t1 - 1e-9);
  return {static_cast<std::size_t>(lo - t.begin()), static_cast<std::size_t>(hi - t.begin())};
}

template <typename F>
double rms_over(const std::vector<double>& t, double t0, double t1, F&& value_sq) {
  const auto [lo, hi] = index_range(t, t0, t1);
  if (hi <= lo) return 0.0;
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += value_sq(i);
  return std::sqrt(acc / static_cast<double>(hi - lo));
}

template <typename F>
double mean_over(const std::vector<double>& t, double t0, double t1, F&& value) {
  const auto [lo, hi] = index_range(t, t0, t1);
  if (hi <= lo) return 0.0;
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += value(i);
  return acc / static_cast<double>(hi - lo);
}

}  // namespace detail

/// RMS of |e| over [t0, t1).
inline double tracking_rms(const TrajectoryLog& log, double t0, double t1) {
  return detail::rms_over(log.t, t0, t1, [&](std::size_t i) { return log.e[i].squaredNorm(); });
}

/// RMS of |u_ad - delta(x)| over [t0, t1).
inline double uncertainty_rmse(const TrajectoryLog& log, double t0, double t1) {
  return detail::rms_over(log.t, t0, t1, [&](std::size_t i) { return (log.u_ad[i] - log.delta[i]).squaredNorm(); });
}

/// Energy of the tracking error above `cutoff_hz` over [t0, t1), summed over error components.
/// One-sided periodogram scaled so that the full band reproduces sum(e^2) dt.
inline double high_frequency_energy(const TrajectoryLog& log, double t0, double t1, double cutoff_hz) {
  const auto [lo, hi] = detail::index_range(log.t, t0, t1);
  if (hi <= lo + 1) return 0.0;
  const std::size_t n = hi - lo;
  const double dt = log.t[lo + 1] - log.t[lo];
  Eigen::FFT<double> fft;
  double energy = 0.0;
  for (Eigen::Index c = 0; c < log.n; ++c) {
    std::vector<double> signal(n);
    for (std::size_t i = 0; i < n; ++i) signal[i] = log.e[lo + i](c);
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, signal);
    for (std::size_t k = 1; k <= n / 2; ++k) {
      const double f = static_cast<double>(k) / (static_cast<double>(n) * dt);
      if (f <= cutoff_hz) continue;
      const double weight = (n % 2 == 0 && k == n / 2) ? 1.0 : 2.0;
      energy += weight * std::norm(spectrum[k]) * dt / static_cast<double>(n);
    }
  }
  return energy;
}

inline double weight_norm_total_variation(const std::vector<MatrixXd>& w) {
  double tv = 0.0;
  for (std::size_t i = 1; i < w.size(); ++i) tv += std::abs(w[i].norm() - w[i - 1].norm());
  return tv;
}

// ---------------------------------------------------------------------------
// Ideal-weight diagnostics

struct EpochFit {
  std::uint64_t sigma = 0;
  std::size_t samples = 0;
  MatrixXd W_star;
  double residual_rms = 0.0;
  bool rank_deficient = false;
};

struct IdealWeightReport {
  std::vector<EpochFit> fits;
  std::vector<double> w_tilde_norm;
};

/// Least-squares fit delta(x_t) ~ W*^T phi_bar(x_t) within each switching epoch, and the distance
/// |W* - W(t)|_F along the run. Reporting only; nothing here feeds the controller.
inline IdealWeightReport ideal_weight_diagnostics(const std::vector<std::uint64_t>& sigma,
                                                  const std::vector<VectorXd>& phi_bar,
                                                  const std::vector<VectorXd>& delta,
                                                  const std::vector<MatrixXd>& W) {
  detail::require(sigma.size() == phi_bar.size() && phi_bar.size() == delta.size() && delta.size() == W.size(),
                  "ideal_weight_diagnostics: series lengths differ");
  IdealWeightReport report;
  report.w_tilde_norm.resize(W.size(), 0.0);
  std::size_t first = 0;
  while (first < sigma.size()) {
    std::size_t last = first;
    while (last < sigma.size() && sigma[last] == sigma[first]) ++last;
    const auto rows = static_cast<Eigen::Index>(last - first);
    const auto k = phi_bar[first].size();
    const auto m = delta[first].size();
    MatrixXd features(rows, k), targets(rows, m);
    for (Eigen::Index i = 0; i < rows; ++i) {
      features.row(i) = phi_bar[first + static_cast<std::size_t>(i)].transpose();
      targets.row(i) = delta[first + static_cast<std::size_t>(i)].transpose();
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(features);
    EpochFit fit;
    fit.sigma = sigma[first];
    fit.samples = static_cast<std::size_t>(rows);
    fit.W_star = cod.solve(targets);
    fit.rank_deficient = cod.rank() < k;
    fit.residual_rms = std::sqrt((features * fit.W_star - targets).squaredNorm() / static_cast<double>(rows));
    for (std::size_t i = first; i < last; ++i) report.w_tilde_norm[i] = (fit.W_star - W[i]).norm();
    report.fits.push_back(std::move(fit));
    first = last;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Experiment loop

namespace detail {

enum : std::uint64_t { kInitStream = 1, kControlStream = 2, kAdmitStream = 3, kTrainStream = 4 };

inline TrainOptions train_options(const BnnConfig& b) {
  TrainOptions o;
  o.epochs = b.epochs;
  o.batch_size = b.batch_size;
  o.learning_rate = b.learning_rate;
  o.momentum = b.momentum;
  o.draws = b.train_draws;
  return o;
}

}  // namespace detail

inline BayesianNetwork initial_network(const ExperimentConfig& cfg) {
  Rng rng = detail::derive_rng(cfg.seed, detail::kInitStream);
  BayesianNetwork net = BayesianNetwork::make(2, cfg.bnn.hidden, 1, cfg.bnn.activation, rng,
                                              {cfg.bnn.init_mu_std, cfg.bnn.init_rho});
  net.prior_std = cfg.bnn.prior_std;
  net.likelihood_std = cfg.bnn.likelihood_std;
  net.point_estimate = cfg.mode == ControlMode::dmrac;
  return net;
}

inline DiagnosticsReport compute_diagnostics(const ExperimentResult& result);

/// Runs the closed loop described by `cfg`. Each control step samples features from the
/// current network version, applies u = u_pd + u_crm - W^T phi, integrates the fast weights with
/// the N-draw feature mean, offers the state to the replay buffer, and retrains/publishes a new
/// version when the trigger fires. With `pipelined` off the run is a pure function of the config.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;

  const LinearPlant plant = cfg.make_plant();
  const ReferenceModel model = cfg.make_reference_model();
  const ControllerGains gains =
      make_gains(plant, model, LearningRate{cfg.controller.gamma, std::nullopt},
                 cfg.controller.q_scale * MatrixXd::Identity(2, 2));
  const StaircaseReference command = cfg.command();
  const bool adaptive = cfg.mode != ControlMode::baseline_only;

  auto version = std::make_shared<const NetworkVersion>(NetworkVersion{0, initial_network(cfg)});
  const auto k = version->net.feature_dim();
  FastWeights weights = FastWeights::zeros(k, plant.input_dim(), cfg.controller.weight_bound);
  ReplayBuffer buffer(cfg.buffer.capacity, cfg.buffer.eps_tol, cfg.buffer.kernel_width, cfg.buffer.space);
  auto sampler = std::make_unique<FeatureSampler>(version->net);

  Rng control_rng = detail::derive_rng(cfg.seed, detail::kControlStream);
  Rng admit_rng = detail::derive_rng(cfg.seed, detail::kAdmitStream);
  const TrainOptions train_opts = detail::train_options(cfg.bnn);

  StepTrace& trace = result.trace;
  trace.aleatoric_std = cfg.bnn.likelihood_std;
  const auto steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
  if (adaptive) {
    trace.phi_sample.reserve(steps);
    trace.phi_mean.reserve(steps);
    trace.u_ad_mean.reserve(steps);
    trace.epistemic_std.reserve(steps);
  }
  trace.W.reserve(steps);
  trace.sigma.reserve(steps);

  std::size_t step = 0;
  std::size_t admitted_since_retrain = 0;
  std::future<TrainResult> pending;
  std::size_t pending_points = 0;

  auto publish = [&](TrainResult&& trained, double t, std::size_t points) {
    Publication pub;
    pub.t = t;
    pub.sigma = trained.version.sigma;
    pub.buffer_points = points;
    pub.initial_loss = trained.report.initial_loss;
    pub.final_loss = trained.report.epoch_loss.empty() ? trained.report.initial_loss : trained.report.epoch_loss.back();
    pub.aborted_epochs = trained.report.aborted_epochs;
    result.publications.push_back(pub);
    version = std::make_shared<const NetworkVersion>(std::move(trained.version));
    sampler = std::make_unique<FeatureSampler>(version->net);
  };

  auto retrain = [&](double t) {
    NetworkVersion base = *version;
    if (cfg.bnn.output_from_fast_weights) {
      base.net.layers.back().mu = weights.W.transpose();
      base.net.layers.back().bias_mu.setZero();
    }
    std::vector<DataPoint> data = snapshot(buffer);
    Rng train_rng = detail::derive_rng(cfg.seed, detail::kTrainStream, base.sigma + 1);
    const std::size_t points = data.size();
    if (!cfg.pipelined) {
      publish(train(base, data, train_opts, train_rng), t, points);
      return;
    }
    pending_points = points;
    pending = std::async(std::launch::async,
                         [base = std::move(base), data = std::move(data), train_opts, train_rng]() mutable {
                           return train(base, data, train_opts, train_rng);
                         });
  };

  ControllerFn controller = [&](double t, const VectorXd& x, const VectorXd& x_m, const VectorXd& r) {
    ++step;
    if (pending.valid() && pending.wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
      publish(pending.get(), t, pending_points);
    }
    trace.sigma.push_back(version->sigma);
    if (!adaptive) {
      trace.W.push_back(weights.W);
      return ControlOutput{baseline_control(gains, x, r), VectorXd::Zero(plant.input_dim())};
    }

    VectorXd phi_sample;
    VectorXd phi_mean;
    VectorXd epistemic = VectorXd::Zero(plant.input_dim());
    if (version->net.point_estimate) {
      phi_sample = sampler->sample(x, control_rng);
      phi_mean = phi_sample;
    } else {
      phi_sample = sampler->sample(x, control_rng);
      const MatrixXd draws = sampler->draws(x, cfg.bnn.feature_draws, control_rng);
      phi_mean = draws.rowwise().mean();
      if (draws.cols() > 1) {
        const MatrixXd pred = weights.W.transpose() * draws;
        const MatrixXd centered = pred.colwise() - pred.rowwise().mean();
        epistemic = (centered.rowwise().squaredNorm() / static_cast<double>(draws.cols() - 1)).cwiseSqrt();
      }
    }

    ControlOutput out;
    out.u_ad = adaptive_element(weights, phi_sample);
    out.u = baseline_control(gains, x, r) - out.u_ad;

    trace.phi_sample.push_back(phi_sample);
    trace.phi_mean.push_back(phi_mean);
    trace.u_ad_mean.push_back(weights.W.transpose() * phi_mean);
    trace.epistemic_std.push_back(epistemic);
    trace.W.push_back(weights.W);

    weights = update_fast_weights(weights, phi_mean, x_m - x, gains, cfg.dt);

    if (try_admit(buffer, x, t, weights, *version, cfg.bnn.feature_draws, admit_rng)) ++admitted_since_retrain;
    const bool due = cfg.retrain_trigger == RetrainTrigger::new_points
                         ? admitted_since_retrain >= cfg.retrain_every
                         : step % cfg.retrain_every == 0;
    if (due && buffer.size() >= cfg.bnn.batch_size && !pending.valid()) {
      admitted_since_retrain = 0;
      retrain(t);
    }
    return out;
  };

  const ReferenceFn reference = [&](double t) {
    VectorXd r(1);
    r(0) = command.at(t);
    return r;
  };

  try {
    result.log = integrate_closed_loop(plant, model, controller, reference, cfg.initial_state(),
                                       cfg.initial_state(), cfg.horizon, IntegratorConfig{cfg.dt, cfg.method});
  } catch (const TrajectoryDivergence& err) {
    result.log = err.partial_log();
    result.diverged = true;
    result.error = err.what();
  }
  if (pending.valid()) pending.wait();
  result.buffer = std::move(buffer);
  result.final_version = version;
  result.diagnostics = compute_diagnostics(result);
  return result;
}

/// Time-aligned view of the trace so that diagnostics cover exactly the logged steps.
inline DiagnosticsReport compute_diagnostics(const ExperimentResult& result) {
  const ExperimentConfig& cfg = result.config;
  const TrajectoryLog& log = result.log;
  const StepTrace& trace = result.trace;
  DiagnosticsReport d;
  d.mode = to_string(cfg.mode);
  d.completed = !result.diverged;
  d.error = result.error;
  d.weight_bound = cfg.controller.weight_bound;
  d.publications = result.publications.size();
  d.final_sigma = result.final_version ? result.final_version->sigma : 0;
  d.buffer_size = result.buffer ? result.buffer->size() : 0;
  if (!result.publications.empty()) d.first_retrain_time = result.publications.front().t;
  if (log.size() == 0) return d;

  const double end = log.t.back() + cfg.dt;
  const double settle = std::min(5.0, end);
  const bool has_features = trace.epistemic_std.size() >= log.size();
  auto band = [&](std::size_t i) { return has_features ? 2.0 * trace.epistemic_std[i].norm() : 0.0; };

  const StaircaseReference command = cfg.command();
  std::vector<double> edges{0.0};
  for (double s : command.switch_times())
    if (s < end) edges.push_back(s);
  edges.push_back(end);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    PhaseStats p;
    p.start = edges[i];
    p.end = edges[i + 1];
    p.tracking_rms = tracking_rms(log, p.start, p.end);
    p.uncertainty_rmse = uncertainty_rmse(log, p.start, p.end);
    p.epistemic_band = detail::mean_over(log.t, p.start, p.end, band);
    p.aleatoric_band = 2.0 * trace.aleatoric_std;
    d.phases.push_back(p);
  }

  d.tracking_rms_steady = tracking_rms(log, std::min(10.0, end), end);
  d.tracking_rms_after_settle = tracking_rms(log, settle, end);
  {
    const auto [lo, hi] = detail::index_range(log.t, settle, end);
    for (std::size_t i = lo; i < hi; ++i) d.tracking_sup_after_settle = std::max(d.tracking_sup_after_settle, log.e[i].norm());
  }
  const double first_window = std::min(10.0, end);
  d.uncertainty_rmse_first = uncertainty_rmse(log, 0.0, first_window);
  d.uncertainty_rmse_last = uncertainty_rmse(log, std::max(0.0, end - 10.0), end);
  std::vector<MatrixXd> w(trace.W.begin(), trace.W.begin() + static_cast<std::ptrdiff_t>(std::min(trace.W.size(), log.size())));
  d.w_total_variation = weight_norm_total_variation(w);
  for (const auto& wi : w) d.w_max_norm = std::max(d.w_max_norm, wi.norm());
  d.hf_error_energy = high_frequency_energy(log, std::min(10.0, end), end, 2.0);

  if (has_features && log.size() > 1 && cfg.pe_window < end) {
    std::vector<VectorXd> phi(trace.phi_sample.begin(), trace.phi_sample.begin() + static_cast<std::ptrdiff_t>(log.size()));
    for (const auto& r : pe_spectrum(log.t, phi, cfg.pe_window, cfg.pe_stride, cfg.pe_threshold)) {
      d.pe_window_start.push_back(r.start);
      d.pe_lambda_min.push_back(r.lambda_min);
    }
  }

  if (has_features) {
    const auto switches = command.switch_times();
    for (std::size_t i = 0; i < switches.size(); ++i) {
      const double ts = switches[i];
      const double next = i + 1 < switches.size() ? switches[i + 1] : end;
      if (ts + 2.0 > end || next - 2.0 < ts) continue;
      BandWindow bw;
      bw.step_time = ts;
      bw.transient_width = detail::mean_over(log.t, ts, ts + 2.0, band);
      bw.settled_width = detail::mean_over(log.t, next - 2.0, next, band);
      if (result.buffer) {
        // Coverage as of the end of the settled window: records admitted by then.
        const auto [lo, hi] = detail::index_range(log.t, next - 2.0, next);
        if (hi > lo) {
          VectorXd mean_state = VectorXd::Zero(log.n);
          for (std::size_t j = lo; j < hi; ++j) mean_state += log.x[j];
          mean_state /= static_cast<double>(hi - lo);
          ReplayBuffer covered(result.buffer->capacity(), result.buffer->eps_tol(), result.buffer->kernel_width());
          for (const auto& rec : result.buffer->records())
            if (rec.t < next) covered.insert(rec);
          bw.settled_outside_buffer = covered.independence_score(mean_state) >= covered.eps_tol();
        }
      }
      d.band_windows.push_back(bw);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const DiagnosticsReport& d) {
  using nlohmann::json;
  json phases = json::array();
  for (const auto& p : d.phases) {
    phases.push_back({{"start", p.start},
                      {"end", p.end},
                      {"tracking_rms", p.tracking_rms},
                      {"uncertainty_rmse", p.uncertainty_rmse},
                      {"epistemic_band", p.epistemic_band},
                      {"aleatoric_band", p.aleatoric_band}});
  }
  json bands = json::array();
  for (const auto& b : d.band_windows) {
    bands.push_back({{"step_time", b.step_time},
                     {"transient_width", b.transient_width},
                     {"settled_width", b.settled_width},
                     {"settled_outside_buffer", b.settled_outside_buffer}});
  }
  return {{"mode", d.mode},
          {"completed", d.completed},
          {"error", d.error},
          {"phases", phases},
          {"tracking_rms_steady", d.tracking_rms_steady},
          {"tracking_rms_after_settle", d.tracking_rms_after_settle},
          {"tracking_sup_after_settle", d.tracking_sup_after_settle},
          {"uncertainty_rmse_first", d.uncertainty_rmse_first},
          {"uncertainty_rmse_last", d.uncertainty_rmse_last},
          {"w_total_variation", d.w_total_variation},
          {"w_max_norm", d.w_max_norm},
          {"weight_bound", d.weight_bound},
          {"hf_error_energy", d.hf_error_energy},
          {"pe_window_start", d.pe_window_start},
          {"pe_lambda_min", d.pe_lambda_min},
          {"first_retrain_time", d.first_retrain_time ? json(*d.first_retrain_time) : json(nullptr)},
          {"publications", d.publications},
          {"final_sigma", d.final_sigma},
          {"buffer_size", d.buffer_size},
          {"band_windows", bands}};
}

inline DiagnosticsReport diagnostics_from_json(const nlohmann::json& j) {
  DiagnosticsReport d;
  d.mode = j.at("mode").get<std::string>();
  d.completed = j.at("completed").get<bool>();
  d.error = j.at("error").get<std::string>();
  for (const auto& p : j.at("phases")) {
    d.phases.push_back({p.at("start").get<double>(), p.at("end").get<double>(), p.at("tracking_rms").get<double>(),
                        p.at("uncertainty_rmse").get<double>(), p.at("epistemic_band").get<double>(),
                        p.at("aleatoric_band").get<double>()});
  }
  d.tracking_rms_steady = j.at("tracking_rms_steady").get<double>();
  d.tracking_rms_after_settle = j.at("tracking_rms_after_settle").get<double>();
  d.tracking_sup_after_settle = j.at("tracking_sup_after_settle").get<double>();
  d.uncertainty_rmse_first = j.at("uncertainty_rmse_first").get<double>();
  d.uncertainty_rmse_last = j.at("uncertainty_rmse_last").get<double>();
  d.w_total_variation = j.at("w_total_variation").get<double>();
  d.w_max_norm = j.at("w_max_norm").get<double>();
  d.weight_bound = j.at("weight_bound").get<double>();
  d.hf_error_energy = j.at("hf_error_energy").get<double>();
  d.pe_window_start = j.at("pe_window_start").get<std::vector<double>>();
  d.pe_lambda_min = j.at("pe_lambda_min").get<std::vector<double>>();
  if (!j.at("first_retrain_time").is_null()) d.first_retrain_time = j.at("first_retrain_time").get<double>();
  d.publications = j.at("publications").get<std::size_t>();
  d.final_sigma = j.at("final_sigma").get<std::uint64_t>();
  d.buffer_size = j.at("buffer_size").get<std::size_t>();
  for (const auto& b : j.at("band_windows")) {
    d.band_windows.push_back({b.at("step_time").get<double>(), b.at("transient_width").get<double>(),
                              b.at("settled_width").get<double>(), b.at("settled_outside_buffer").get<bool>()});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonReport {
  DiagnosticsReport first;
  DiagnosticsReport second;
  double delta_tracking_rms = 0.0;
  double delta_w_total_variation = 0.0;
  std::vector<double> delta_lambda_min;

  bool operator==(const ComparisonReport&) const = default;
};

inline ComparisonReport compare_diagnostics(const DiagnosticsReport& a, const DiagnosticsReport& b) {
  ComparisonReport c;
  c.first = a;
  c.second = b;
  c.delta_tracking_rms = a.tracking_rms_steady - b.tracking_rms_steady;
  c.delta_w_total_variation = a.w_total_variation - b.w_total_variation;
  const std::size_t n = std::min(a.pe_lambda_min.size(), b.pe_lambda_min.size());
  for (std::size_t i = 0; i < n; ++i) c.delta_lambda_min.push_back(a.pe_lambda_min[i] - b.pe_lambda_min[i]);
  return c;
}

struct ComparisonRuns {
  ExperimentResult first;
  ExperimentResult second;
  ComparisonReport report;
};

/// Runs both configurations and reports first-minus-second deltas. The configs must describe the
/// same plant, gains, seed and command schedule.
inline ComparisonRuns compare_runs(const ExperimentConfig& a, const ExperimentConfig& b) {
  if (!(a.plant == b.plant) || !(a.reference == b.reference) || !(a.controller == b.controller) ||
      a.seed != b.seed || a.horizon != b.horizon || a.dt != b.dt) {
    throw std::invalid_argument("compare_runs: configurations differ in plant, gains, seed or reference schedule");
  }
  ComparisonRuns runs{run_experiment(a), run_experiment(b), {}};
  runs.report = compare_diagnostics(runs.first.diagnostics, runs.second.diagnostics);
  return runs;
}

inline nlohmann::json to_json(const ComparisonReport& c) {
  return {{"first", to_json(c.first)},
          {"second", to_json(c.second)},
          {"deltas",
           {{"tracking_rms", c.delta_tracking_rms},
            {"w_total_variation", c.delta_w_total_variation},
            {"lambda_min", c.delta_lambda_min}}}};
}

inline ComparisonReport comparison_from_json(const nlohmann::json& j) {
  ComparisonReport c;
  c.first = diagnostics_from_json(j.at("first"));
  c.second = diagnostics_from_json(j.at("second"));
  c.delta_tracking_rms = j.at("deltas").at("tracking_rms").get<double>();
  c.delta_w_total_variation = j.at("deltas").at("w_total_variation").get<double>();
  c.delta_lambda_min = j.at("deltas").at("lambda_min").get<std::vector<double>>();
  return c;
}

// ---------------------------------------------------------------------------
// Run outputs

/// t, W_1..W_k (k*m columns, row-major over W for m > 1).
inline void write_weights_csv(std::ostream& os, const TrajectoryLog& log, const StepTrace& trace) {
  const std::size_t n = std::min(log.size(), trace.W.size());
  if (n == 0) {
    csv::write(os, {"t"}, {});
    return;
  }
  std::vector<std::string> header{"t"};
  for (auto& h : csv::numbered("W_", trace.W[0].size())) header.push_back(h);
  std::vector<std::vector<double>> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row{log.t[i]};
    const MatrixXd& w = trace.W[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
    rows.push_back(std::move(row));
  }
  csv::write(os, header, rows);
}

/// t, phi_1..phi_k: the sampled features that entered u_ad.
inline void write_features_csv(std::ostream& os, const TrajectoryLog& log, const StepTrace& trace) {
  const std::size_t n = std::min(log.size(), trace.phi_sample.size());
  std::vector<std::string> header{"t"};
  if (n > 0)
    for (auto& h : csv::numbered("phi_", trace.phi_sample[0].size())) header.push_back(h);
  std::vector<std::vector<double>> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row{log.t[i]};
    row.insert(row.end(), trace.phi_sample[i].data(), trace.phi_sample[i].data() + trace.phi_sample[i].size());
    rows.push_back(std::move(row));
  }
  csv::write(os, header, rows);
}

/// t, u_ad, u_ad_mean, epistemic_std, aleatoric_std, delta_true, sigma (single-input plants).
inline void write_uncertainty_csv(std::ostream& os, const TrajectoryLog& log, const StepTrace& trace) {
  const bool has = trace.epistemic_std.size() >= log.size();
  std::vector<std::vector<double>> rows;
  rows.reserve(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    rows.push_back({log.t[i], log.u_ad[i](0), has ? trace.u_ad_mean[i](0) : 0.0, has ? trace.epistemic_std[i](0) : 0.0,
                    has ? trace.aleatoric_std : 0.0, log.delta[i](0),
                    i < trace.sigma.size() ? static_cast<double>(trace.sigma[i]) : 0.0});
  }
  csv::write(os, {"t", "u_ad", "u_ad_mean", "epistemic_std", "aleatoric_std", "delta_true", "sigma"}, rows);
}

inline void write_pe_csv(std::ostream& os, const std::vector<PEWindowReport>& windows) {
  std::vector<std::vector<double>> rows;
  for (const auto& w : windows) rows.push_back({w.start, w.end, w.lambda_min});
  csv::write(os, {"window_start", "window_end", "lambda_min"}, rows);
}

}  // namespace sdmrac

#endif  // SDMRAC_HARNESS_HPP
