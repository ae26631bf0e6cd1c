#include <string>

#include <gtest/gtest.h>

#include "sdmrac/config_io.hpp"
#include "sdmrac/plot.hpp"

using namespace sdmrac;

TEST(ConfigYaml, EmptyDocumentGivesDefaults) {
  EXPECT_EQ(config_from_yaml(""), ExperimentConfig{});
  EXPECT_EQ(config_from_yaml("# nothing\n"), ExperimentConfig{});
}

TEST(ConfigYaml, DefaultsMatchTheDocumentedSetup) {
  const ExperimentConfig c;
  EXPECT_EQ(c.mode, ControlMode::sdmrac);
  EXPECT_EQ(c.horizon, 40.0);
  EXPECT_EQ(c.dt, 0.001);
  EXPECT_EQ(c.controller.gamma, 10.0);
  EXPECT_EQ(c.controller.weight_bound, 10.0);
  EXPECT_EQ(c.buffer.eps_tol, 0.1);
  EXPECT_EQ(c.buffer.capacity, 250u);
  EXPECT_EQ(c.bnn.hidden, (std::vector<Eigen::Index>{20, 20}));
  EXPECT_EQ(c.bnn.feature_draws, 10u);
  EXPECT_EQ(c.bnn.train_draws, 2u);
  EXPECT_EQ(c.bnn.likelihood_std, 0.1);
  EXPECT_EQ(c.retrain_every, 25u);
  EXPECT_EQ(c.pe_window, 2.0);
  EXPECT_EQ(c.pe_stride, 0.5);
}

TEST(ConfigYaml, CanonicalDumpRoundTrips) {
  ExperimentConfig c;
  c.mode = ControlMode::dmrac;
  c.horizon = 12.5;
  c.seed = 123456789012345ull;
  c.pipelined = true;
  c.method = IntegrationMethod::euler;
  c.plant.uncertainty = UncertaintyModel::zero;
  c.plant.units = AngleUnits::degrees;
  c.plant.params.w[3] = -0.1 / 3.0;
  c.reference.steps_deg = {0.5, 1.5};
  c.controller.gamma = 0.1 + 0.2;
  c.bnn.hidden = {7, 3, 2};
  c.bnn.activation = Activation::relu;
  c.bnn.output_from_fast_weights = true;
  c.buffer.space = ScoreSpace::feature;
  c.retrain_trigger = RetrainTrigger::every_k_steps;
  c.retrain_every = 400;
  c.pe_threshold = 1e-9;
  const std::string text = config_to_yaml(c);
  EXPECT_EQ(config_from_yaml(text), c);
  EXPECT_EQ(config_to_yaml(config_from_yaml(text)), text);
  EXPECT_EQ(config_from_yaml(config_to_yaml(ExperimentConfig{})), ExperimentConfig{});
}

TEST(ConfigYaml, PartialDocumentOverridesOnlyGivenFields) {
  const auto c = config_from_yaml("horizon: 5\ncontroller:\n  gamma: 20\nbnn:\n  hidden: [8]\n");
  EXPECT_EQ(c.horizon, 5.0);
  EXPECT_EQ(c.controller.gamma, 20.0);
  EXPECT_EQ(c.controller.weight_bound, 10.0);
  EXPECT_EQ(c.bnn.hidden, (std::vector<Eigen::Index>{8}));
  EXPECT_EQ(c.bnn.epochs, ExperimentConfig{}.bnn.epochs);
}

TEST(ConfigYaml, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_yaml("horizn: 5\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("bnn:\n  layers: [3]\n"), ConfigError);
  try {
    config_from_yaml("controller:\n  gama: 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("controller.gama"), std::string::npos) << e.what();
  }
}

TEST(ConfigYaml, BadValuesAreRejected) {
  EXPECT_THROW(config_from_yaml("horizon: soon\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("mode: fuzzy\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("plant:\n  wing_rock: [1, 2, 3]\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("bnn:\n  hidden: [4, 0]\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("bnn:\n  activation: sigmoid\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("buffer: 3\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("[1, 2]\n"), ConfigError);
  EXPECT_THROW(config_from_yaml("horizon: [\n"), ConfigError);
}

TEST(ConfigYaml, ValidationCatchesInconsistentValues) {
  auto c = config_from_yaml("horizon: 0\n");
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = config_from_yaml("controller:\n  weight_bound: -1\n");
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
}

TEST(ConfigYaml, MissingFileIsAConfigError) {
  EXPECT_THROW(load_config("/nonexistent/sdmrac.yaml"), ConfigError);
}

TEST(ConfigYaml, ShippedConfigIsTheDefaultSetup) {
  EXPECT_EQ(load_config(SDMRAC_SHIPPED_CONFIG), ExperimentConfig{});
}

TEST(Config, AngleConversion) {
  ExperimentConfig c;
  EXPECT_NEAR(c.initial_state()(0), 0.017453292519943295, 1e-18);
  EXPECT_NEAR(c.command().at(15.0), -0.017453292519943295, 1e-18);
  c.plant.units = AngleUnits::degrees;
  EXPECT_EQ(c.initial_state()(1), 1.0);
  EXPECT_EQ(c.command().at(25.0), 2.0);
}

// ---------------------------------------------------------------------------
// SVG output

namespace {

plot::Figure sample_figure() {
  plot::Figure f;
  f.title = "A & B <test>";
  plot::Panel p{"panel", "t", "y", {}, {}};
  std::vector<double> x, y, lo, hi;
  for (int i = 0; i < 5000; ++i) {
    x.push_back(i * 0.01);
    y.push_back(std::sin(i * 0.01));
    lo.push_back(y.back() - 0.1);
    hi.push_back(y.back() + 0.1);
  }
  p.series.push_back({"sin", x, y, "#1f77b4", false});
  p.series.push_back({"flat", {0.0, 50.0}, {0.5, 0.5}, "#d62728", true});
  p.bands.push_back({"band", x, lo, hi, "#2ca02c"});
  f.panels.push_back(p);
  f.panels.push_back({"empty", "", "", {}, {}});
  return f;
}

}  // namespace

TEST(Svg, DeterministicAndWellFormed) {
  const auto a = plot::to_svg(sample_figure());
  const auto b = plot::to_svg(sample_figure());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.rfind("<svg", 0), 0u);
  EXPECT_NE(a.find("</svg>"), std::string::npos);
  EXPECT_NE(a.find("A &amp; B &lt;test&gt;"), std::string::npos);
  EXPECT_EQ(a.find("<test>"), std::string::npos);
  EXPECT_NE(a.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(a.find("<polygon"), std::string::npos);
  EXPECT_EQ(a.find("nan"), std::string::npos);
}

TEST(Svg, DecimationKeepsExtremes) {
  std::vector<double> y(10000, 0.0);
  y[1234] = 5.0;
  y[8765] = -3.0;
  const auto idx = plot::detail::decimate(y, 100);
  EXPECT_LE(idx.size(), 100u);
  EXPECT_NE(std::find(idx.begin(), idx.end(), 1234u), idx.end());
  EXPECT_NE(std::find(idx.begin(), idx.end(), 8765u), idx.end());
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(plot::detail::decimate(std::vector<double>(10, 1.0), 100).size(), 10u);
}

TEST(Svg, NonFiniteSamplesAreSkipped) {
  plot::Figure f;
  f.panels.push_back({"p", "", "", {}, {{"s", {0.0, 1.0, 2.0}, {1.0, std::nan(""), 2.0}, "#000000", false}}});
  const auto svg = plot::to_svg(f);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.find("inf"), std::string::npos);
}
