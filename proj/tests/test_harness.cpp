#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "sdmrac/config.hpp"
#include "sdmrac/harness.hpp"

using namespace sdmrac;

namespace {

std::vector<double> times(std::size_t n, double dt) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) * dt;
  return t;
}

ExperimentConfig short_config(ControlMode mode, double horizon) {
  ExperimentConfig cfg;
  cfg.mode = mode;
  cfg.horizon = horizon;
  return cfg;
}

bool same_log(const TrajectoryLog& a, const TrajectoryLog& b) {
  return a.t == b.t && a.x == b.x && a.x_m == b.x_m && a.u == b.u && a.u_ad == b.u_ad && a.delta == b.delta &&
         a.e == b.e;
}

TrajectoryLog error_log(const std::vector<double>& t, const std::function<double(double)>& e1) {
  TrajectoryLog log;
  log.n = 2;
  log.m = 1;
  log.t = t;
  for (double ti : t) {
    log.e.push_back((VectorXd(2) << e1(ti), 0.0).finished());
    log.x.push_back(VectorXd::Zero(2));
    log.x_m.push_back(VectorXd::Zero(2));
    log.u.push_back(VectorXd::Zero(1));
    log.u_ad.push_back(VectorXd::Zero(1));
    log.delta.push_back(VectorXd::Zero(1));
  }
  return log;
}

}  // namespace

// ---------------------------------------------------------------------------
// PE spectrum

TEST(PeSpectrum, ConstantFeatureGivesWindowLength) {
  const double dt = 0.01;
  const auto t = times(1001, dt);
  const std::vector<VectorXd> phi(t.size(), VectorXd::Ones(1));
  const auto windows = pe_spectrum(t, phi, 2.0, 0.5);
  ASSERT_FALSE(windows.empty());
  for (const auto& w : windows) {
    EXPECT_NEAR(w.gram(0, 0), 2.0, 1e-12);
    EXPECT_NEAR(w.lambda_min, 2.0, 1e-12);
    EXPECT_NEAR(w.end - w.start, 2.0, 1e-9);
    EXPECT_TRUE(w.exciting());
  }
  EXPECT_NEAR(windows[1].start - windows[0].start, 0.5, 1e-12);
}

TEST(PeSpectrum, AlternatingBasisGivesHalfWindow) {
  const double dt = 0.001;
  const auto t = times(5001, dt);
  std::vector<VectorXd> phi;
  for (std::size_t i = 0; i < t.size(); ++i) phi.push_back(i % 2 == 0 ? VectorXd::Unit(2, 0) : VectorXd::Unit(2, 1));
  for (const auto& w : pe_spectrum(t, phi, 2.0, 0.5)) {
    EXPECT_NEAR(w.gram(0, 0), 1.0, 1e-9);
    EXPECT_NEAR(w.gram(1, 1), 1.0, 1e-9);
    EXPECT_NEAR(w.gram(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(w.lambda_min, 1.0, 1e-9);
  }
}

TEST(PeSpectrum, ZeroFeaturesAreNotExciting) {
  const auto t = times(500, 0.01);
  const std::vector<VectorXd> phi(t.size(), VectorXd::Zero(3));
  for (const auto& w : pe_spectrum(t, phi, 1.0, 0.25)) {
    EXPECT_EQ(w.lambda_min, 0.0);
    EXPECT_FALSE(w.exciting());
  }
}

TEST(PeSpectrum, WindowLongerThanLogIsAnError) {
  const auto t = times(100, 0.01);
  const std::vector<VectorXd> phi(t.size(), VectorXd::Ones(1));
  EXPECT_THROW(pe_spectrum(t, phi, 2.0, 0.5), std::invalid_argument);
  EXPECT_THROW(pe_spectrum(t, std::vector<VectorXd>(3, VectorXd::Ones(1)), 0.1, 0.1), std::invalid_argument);
}

TEST(PeSpectrum, GramIsSymmetricPositiveSemidefinite) {
  const auto t = times(2000, 0.005);
  std::vector<VectorXd> phi;
  Rng rng(4);
  std::normal_distribution<double> n;
  for (std::size_t i = 0; i < t.size(); ++i) phi.push_back((VectorXd(4) << n(rng), n(rng), 0.5 * n(rng), 1.0).finished());
  for (const auto& w : pe_spectrum(t, phi, 2.0, 0.5)) {
    EXPECT_LT((w.gram - w.gram.transpose()).norm(), 1e-9);
    EXPECT_GT(w.lambda_min, -1e-9);
    EXPECT_NEAR(w.lambda_min, Eigen::SelfAdjointEigenSolver<MatrixXd>(w.gram).eigenvalues().minCoeff(), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Ideal-weight fit

TEST(IdealWeights, RecoversExactLinearModel) {
  const MatrixXd w_star = (MatrixXd(3, 1) << 0.5, -1.25, 2.0).finished();
  std::vector<std::uint64_t> sigma;
  std::vector<VectorXd> phi, delta;
  std::vector<MatrixXd> w;
  for (int i = 0; i < 400; ++i) {
    const double s = 0.01 * i;
    phi.push_back((VectorXd(3) << std::sin(s), std::cos(3 * s), std::tanh(s - 1)).finished());
    delta.push_back(w_star.transpose() * phi.back());
    sigma.push_back(i < 200 ? 0 : 1);
    w.push_back(w_star * (1.0 - std::exp(-s)));
  }
  const auto rep = ideal_weight_diagnostics(sigma, phi, delta, w);
  ASSERT_EQ(rep.fits.size(), 2u);
  for (const auto& f : rep.fits) {
    EXPECT_LT(f.residual_rms, 1e-8);
    EXPECT_LT((f.W_star - w_star).norm(), 1e-8);
    EXPECT_FALSE(f.rank_deficient);
    EXPECT_EQ(f.samples, 200u);
  }
  // W approaches W*, so the mismatch norm shrinks along the run
  EXPECT_LT(rep.w_tilde_norm.back(), 0.1 * rep.w_tilde_norm.front());
}

TEST(IdealWeights, ZeroUncertaintyFitsZero) {
  std::vector<std::uint64_t> sigma(50, 3);
  std::vector<VectorXd> phi, delta(50, VectorXd::Zero(1));
  for (int i = 0; i < 50; ++i) phi.push_back((VectorXd(2) << i, 1.0).finished());
  const auto rep = ideal_weight_diagnostics(sigma, phi, delta, std::vector<MatrixXd>(50, MatrixXd::Zero(2, 1)));
  ASSERT_EQ(rep.fits.size(), 1u);
  EXPECT_TRUE(rep.fits[0].W_star.isZero(0.0));
  EXPECT_EQ(rep.fits[0].residual_rms, 0.0);
  EXPECT_EQ(rep.fits[0].sigma, 3u);
}

TEST(IdealWeights, ResidualInvariantToFeaturePermutation) {
  Rng rng(9);
  std::normal_distribution<double> n;
  std::vector<std::uint64_t> sigma(100, 0);
  std::vector<VectorXd> phi, phi_perm, delta;
  std::vector<MatrixXd> w(100, MatrixXd::Zero(4, 1));
  for (int i = 0; i < 100; ++i) {
    const VectorXd p = (VectorXd(4) << n(rng), n(rng), n(rng), n(rng)).finished();
    phi.push_back(p);
    phi_perm.push_back((VectorXd(4) << p(2), p(0), p(3), p(1)).finished());
    delta.push_back(VectorXd::Constant(1, std::sin(p(0)) + p(1) * p(2)));
  }
  const auto a = ideal_weight_diagnostics(sigma, phi, delta, w);
  const auto b = ideal_weight_diagnostics(sigma, phi_perm, delta, w);
  EXPECT_NEAR(a.fits[0].residual_rms, b.fits[0].residual_rms, 1e-12);
  EXPECT_NEAR(a.fits[0].W_star(0), b.fits[0].W_star(1), 1e-12);
  EXPECT_NEAR(a.fits[0].W_star(2), b.fits[0].W_star(0), 1e-12);
}

TEST(IdealWeights, FlagsRankDeficientRegressors) {
  std::vector<std::uint64_t> sigma(30, 0);
  std::vector<VectorXd> phi, delta;
  for (int i = 0; i < 30; ++i) {
    phi.push_back((VectorXd(2) << i, 2.0 * i).finished());
    delta.push_back(VectorXd::Constant(1, 3.0 * i));
  }
  const auto rep = ideal_weight_diagnostics(sigma, phi, delta, std::vector<MatrixXd>(30, MatrixXd::Zero(2, 1)));
  EXPECT_TRUE(rep.fits[0].rank_deficient);
  EXPECT_LT(rep.fits[0].residual_rms, 1e-10);
}

// ---------------------------------------------------------------------------
// Diagnostic primitives

TEST(HighFrequencyEnergy, SeparatesBandsAndMatchesParseval) {
  const double dt = 0.001;
  const auto t = times(10000, dt);
  const auto fast = error_log(t, [](double s) { return std::sin(2.0 * std::numbers::pi * 5.0 * s); });
  const auto slow = error_log(t, [](double s) { return std::sin(2.0 * std::numbers::pi * 0.5 * s); });
  // integral of sin^2 over 10 s is 5
  EXPECT_NEAR(high_frequency_energy(fast, 0.0, 10.0, 2.0), 5.0, 1e-6);
  EXPECT_LT(high_frequency_energy(slow, 0.0, 10.0, 2.0), 1e-9);
  EXPECT_NEAR(high_frequency_energy(fast, 0.0, 10.0, 0.0), 5.0, 1e-6);
}

TEST(WeightTotalVariation, SumsNormIncrements) {
  const std::vector<MatrixXd> w{MatrixXd::Zero(2, 1), MatrixXd::Constant(2, 1, 3.0), MatrixXd::Constant(2, 1, 1.0)};
  const double r2 = std::sqrt(2.0);
  EXPECT_NEAR(weight_norm_total_variation(w), 3.0 * r2 + 2.0 * r2, 1e-12);
  EXPECT_EQ(weight_norm_total_variation({}), 0.0);
}

// ---------------------------------------------------------------------------
// Experiment loop

TEST(RunExperiment, BaselineOnZeroUncertaintyTracks) {
  // Only the zero-order hold on u separates plant and model, an O(dt) effect after each step.
  auto cfg = short_config(ControlMode::baseline_only, 12.0);
  cfg.plant.uncertainty = UncertaintyModel::zero;
  const auto res = run_experiment(cfg);
  ASSERT_FALSE(res.diverged);
  EXPECT_LT(res.diagnostics.tracking_rms_after_settle, 1e-3);
  EXPECT_EQ(res.diagnostics.publications, 0u);
  EXPECT_TRUE(res.diagnostics.pe_lambda_min.empty());
}

TEST(RunExperiment, BaselineAloneLeavesUncertaintyUnrejected) {
  const auto res = run_experiment(short_config(ControlMode::baseline_only, 12.0));
  ASSERT_FALSE(res.diverged);
  // a unit bias in the roll-rate channel alone moves x1 by 1/4 rad at steady state
  EXPECT_GT(res.diagnostics.tracking_rms_after_settle, 0.1);
}

TEST(RunExperiment, WeightsStayInsideTheBall) {
  auto cfg = short_config(ControlMode::sdmrac, 12.0);
  cfg.controller.weight_bound = 0.5;
  cfg.controller.gamma = 100.0;
  const auto res = run_experiment(cfg);
  ASSERT_FALSE(res.diverged);
  for (const auto& w : res.trace.W) ASSERT_LE(w.norm(), 0.5 + 1e-12);
  EXPECT_LE(res.diagnostics.w_max_norm, 0.5 + 1e-12);
  EXPECT_GT(res.diagnostics.w_max_norm, 0.49);
}

TEST(RunExperiment, IdenticalSeedsAreBitIdentical) {
  const auto cfg = short_config(ControlMode::sdmrac, 6.0);
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  EXPECT_TRUE(same_log(a.log, b.log));
  EXPECT_EQ(a.trace.W, b.trace.W);
  EXPECT_EQ(a.diagnostics, b.diagnostics);
  auto other = cfg;
  other.seed = 2;
  EXPECT_FALSE(same_log(a.log, run_experiment(other).log));
}

TEST(RunExperiment, SigmaIncrementsByOnePerPublication) {
  const auto res = run_experiment(short_config(ControlMode::sdmrac, 12.0));
  ASSERT_GE(res.publications.size(), 1u);
  for (std::size_t i = 0; i < res.publications.size(); ++i) EXPECT_EQ(res.publications[i].sigma, i + 1);
  for (std::size_t i = 1; i < res.trace.sigma.size(); ++i) {
    ASSERT_GE(res.trace.sigma[i], res.trace.sigma[i - 1]);
    ASSERT_LE(res.trace.sigma[i] - res.trace.sigma[i - 1], 1u);
  }
  EXPECT_EQ(res.trace.sigma.back(), res.publications.size());
  EXPECT_EQ(res.diagnostics.final_sigma, res.publications.size());
  ASSERT_TRUE(res.diagnostics.first_retrain_time.has_value());
  EXPECT_DOUBLE_EQ(*res.diagnostics.first_retrain_time, res.publications.front().t);
}

TEST(RunExperiment, RetrainEveryKSteps) {
  auto cfg = short_config(ControlMode::sdmrac, 4.0);
  cfg.retrain_trigger = RetrainTrigger::every_k_steps;
  cfg.retrain_every = 1000;
  cfg.bnn.epochs = 5;
  cfg.buffer.kernel_width = 0.005;
  const auto res = run_experiment(cfg);
  ASSERT_FALSE(res.diverged);
  ASSERT_GE(res.publications.size(), 2u);
  for (const auto& p : res.publications) {
    const double steps = p.t / cfg.dt + 1.0;
    EXPECT_NEAR(std::fmod(steps, 1000.0), 0.0, 1e-6);
  }
}

TEST(RunExperiment, PipelinedModeCompletesAndPublishesInOrder) {
  auto cfg = short_config(ControlMode::sdmrac, 12.0);
  cfg.pipelined = true;
  const auto res = run_experiment(cfg);
  ASSERT_FALSE(res.diverged);
  ASSERT_GE(res.publications.size(), 1u);
  for (std::size_t i = 0; i < res.publications.size(); ++i) EXPECT_EQ(res.publications[i].sigma, i + 1);
  for (std::size_t i = 1; i < res.trace.sigma.size(); ++i) ASSERT_LE(res.trace.sigma[i] - res.trace.sigma[i - 1], 1u);
  for (const auto& w : res.trace.W) ASSERT_LE(w.norm(), cfg.controller.weight_bound + 1e-12);
}

TEST(RunExperiment, DmracUsesDeterministicFeatures) {
  const auto res = run_experiment(short_config(ControlMode::dmrac, 6.0));
  ASSERT_FALSE(res.diverged);
  for (std::size_t i = 0; i < res.trace.phi_sample.size(); i += 97) {
    EXPECT_EQ(res.trace.phi_sample[i], res.trace.phi_mean[i]);
    EXPECT_TRUE(res.trace.epistemic_std[i].isZero(0.0));
  }
  EXPECT_TRUE(res.final_version->net.point_estimate);
}

TEST(RunExperiment, SampledAdaptiveElementFluctuatesAroundItsMean) {
  // u_ad - W^T phi_bar is the part injected by feature sampling; it must carry no bias.
  auto cfg = short_config(ControlMode::sdmrac, 8.0);
  cfg.plant.uncertainty = UncertaintyModel::zero;
  const auto res = run_experiment(cfg);
  std::vector<double> u;
  for (std::size_t i = 0; i < res.log.size(); ++i) u.push_back(res.log.u_ad[i](0) - res.trace.u_ad_mean[i](0));
  ASSERT_GT(*std::max_element(u.begin(), u.end()), 0.0);
  // batch means absorb the serial correlation of u_ad
  const std::size_t batches = 20, len = u.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b)
    means.push_back(std::accumulate(u.begin() + b * len, u.begin() + (b + 1) * len, 0.0) / static_cast<double>(len));
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  const double se = std::sqrt(var / (batches - 1) / batches);
  EXPECT_LE(std::abs(mean), 3.0 * se);
}

TEST(RunExperiment, AdaptationBeatsTheBaseline) {
  const auto base = run_experiment(short_config(ControlMode::baseline_only, 20.0));
  const auto adapt = run_experiment(short_config(ControlMode::sdmrac, 20.0));
  EXPECT_LT(adapt.diagnostics.tracking_rms_after_settle, 0.7 * base.diagnostics.tracking_rms_after_settle);
  EXPECT_LT(adapt.diagnostics.uncertainty_rmse_last, adapt.diagnostics.uncertainty_rmse_first);
}

TEST(RunExperiment, DivergenceReturnsPartialLog) {
  auto cfg = short_config(ControlMode::sdmrac, 5.0);
  cfg.controller.gamma = 1e9;
  cfg.controller.weight_bound = 1e9;
  cfg.method = IntegrationMethod::euler;
  cfg.dt = 0.01;
  const auto res = run_experiment(cfg);
  if (!res.diverged) GTEST_SKIP() << "this configuration stayed finite";
  EXPECT_FALSE(res.diagnostics.completed);
  EXPECT_FALSE(res.error.empty());
  EXPECT_GT(res.log.size(), 0u);
  for (const auto& x : res.log.x) ASSERT_TRUE(x.allFinite());
}

TEST(RunExperiment, InvalidConfigIsRejected) {
  auto cfg = short_config(ControlMode::sdmrac, 0.0);
  EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
  cfg.horizon = 1.0;
  cfg.dt = -0.1;
  EXPECT_THROW(run_experiment(cfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Comparison and serialization

TEST(CompareRuns, IdenticalModesHaveZeroDeltas) {
  const auto cfg = short_config(ControlMode::sdmrac, 4.0);
  const auto runs = compare_runs(cfg, cfg);
  EXPECT_EQ(runs.report.delta_tracking_rms, 0.0);
  EXPECT_EQ(runs.report.delta_w_total_variation, 0.0);
  ASSERT_FALSE(runs.report.delta_lambda_min.empty());
  for (double d : runs.report.delta_lambda_min) EXPECT_EQ(d, 0.0);
}

TEST(CompareRuns, MismatchedPlantsAreRejected) {
  const auto a = short_config(ControlMode::sdmrac, 4.0);
  auto b = short_config(ControlMode::dmrac, 4.0);
  b.plant.params.w[0] = 0.5;
  EXPECT_THROW(compare_runs(a, b), std::invalid_argument);
  b = short_config(ControlMode::dmrac, 4.0);
  b.seed = 7;
  EXPECT_THROW(compare_runs(a, b), std::invalid_argument);
  b = short_config(ControlMode::dmrac, 4.0);
  b.controller.gamma = 20.0;
  EXPECT_THROW(compare_runs(a, b), std::invalid_argument);
}

TEST(CompareRuns, ReportRoundTripsThroughJson) {
  const auto runs = compare_runs(short_config(ControlMode::sdmrac, 6.0), short_config(ControlMode::dmrac, 6.0));
  const auto back = comparison_from_json(nlohmann::json::parse(to_json(runs.report).dump()));
  EXPECT_EQ(back, runs.report);
  EXPECT_EQ(back.first.mode, "sdmrac");
  EXPECT_EQ(back.second.mode, "dmrac");
  const auto diag = diagnostics_from_json(nlohmann::json::parse(to_json(runs.first.diagnostics).dump()));
  EXPECT_EQ(diag, runs.first.diagnostics);
}
