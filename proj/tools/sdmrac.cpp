// Command-line front end: simulate, compare, train-offline, pe-report, plot.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "figures.hpp"
#include "sdmrac/config_io.hpp"
#include "sdmrac/harness.hpp"

namespace fs = std::filesystem;
using namespace sdmrac;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDiverged = 2 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> horizon;
  std::optional<double> gamma;
  bool pipelined = false;
  bool force = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config_path, "YAML experiment config (defaults when omitted)");
  app->add_option("-o,--output-dir", o.output_dir, "Output directory (default: $SDMRAC_OUTPUT_DIR or ./sdmrac-out)");
  app->add_option("--seed", o.seed, "Override the seed");
  app->add_option("--mode", o.mode, "Override the mode: sdmrac, dmrac, baseline_only");
  app->add_option("--horizon", o.horizon, "Override the horizon [s]");
  app->add_option("--gamma", o.gamma, "Override the fast-weight learning rate");
  app->add_flag("--pipelined", o.pipelined, "Train concurrently with the control loop");
  app->add_flag("--force", o.force, "Write into a non-empty output directory");
}

ExperimentConfig load_with_overrides(const CommonOptions& o, const std::string& path) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    if (!fs::exists(path)) throw UsageError("config file not found: " + path);
    cfg = load_config(path);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.mode) cfg.mode = mode_from_string(*o.mode);
  if (o.horizon) cfg.horizon = *o.horizon;
  if (o.gamma) cfg.controller.gamma = *o.gamma;
  if (o.pipelined) cfg.pipelined = true;
  cfg.validate();
  return cfg;
}

fs::path resolve_output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SDMRAC_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "sdmrac-out";
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError("output path exists and is not a directory: " + dir.string());
    if (!fs::is_empty(dir) && !force)
      throw UsageError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  writer(out);
}

void write_run(const fs::path& dir, const ExperimentResult& r) {
  fs::create_directories(dir);
  write_file(dir / "config.yaml", [&](std::ostream& os) { os << config_to_yaml(r.config); });
  write_file(dir / "trajectory.csv", [&](std::ostream& os) { r.log.write_csv(os); });
  write_file(dir / "weights.csv", [&](std::ostream& os) { write_weights_csv(os, r.log, r.trace); });
  write_file(dir / "features.csv", [&](std::ostream& os) { write_features_csv(os, r.log, r.trace); });
  write_file(dir / "uncertainty.csv", [&](std::ostream& os) { write_uncertainty_csv(os, r.log, r.trace); });
  write_file(dir / "buffer.csv", [&](std::ostream& os) {
    if (r.buffer)
      write_buffer_csv(os, *r.buffer, r.log.n, r.log.m);
    else
      csv::write(os, {"x1", "x2", "y1", "sigma", "t"}, {});
  });
  write_file(dir / "pe.csv", [&](std::ostream& os) {
    std::vector<PEWindowReport> windows;
    for (std::size_t i = 0; i < r.diagnostics.pe_lambda_min.size(); ++i) {
      PEWindowReport w;
      w.start = r.diagnostics.pe_window_start[i];
      w.end = w.start + r.config.pe_window;
      w.lambda_min = r.diagnostics.pe_lambda_min[i];
      windows.push_back(w);
    }
    write_pe_csv(os, windows);
  });
  write_file(dir / "retrains.csv", [&](std::ostream& os) {
    std::vector<std::vector<double>> rows;
    for (const auto& p : r.publications)
      rows.push_back({p.t, static_cast<double>(p.sigma), static_cast<double>(p.buffer_points), p.initial_loss,
                      p.final_loss, static_cast<double>(p.aborted_epochs)});
    csv::write(os, {"t", "sigma", "buffer_points", "initial_loss", "final_loss", "aborted_epochs"}, rows);
  });
  write_file(dir / "diagnostics.json", [&](std::ostream& os) { os << to_json(r.diagnostics).dump(2) << "\n"; });
  if (r.final_version)
    write_file(dir / "checkpoint.json", [&](std::ostream& os) { os << to_json(*r.final_version).dump() << "\n"; });
}

void print_summary(const std::string& label, const DiagnosticsReport& d) {
  std::cout << label << ": mode=" << d.mode << " completed=" << (d.completed ? "yes" : "no")
            << " tracking_rms[10,T]=" << d.tracking_rms_steady << " uncertainty_rmse first/last=" << d.uncertainty_rmse_first
            << "/" << d.uncertainty_rmse_last << " max|W|=" << d.w_max_norm << " retrains=" << d.publications << "\n";
  if (!d.completed) std::cerr << label << ": " << d.error << "\n";
}

int cmd_simulate(const CommonOptions& o) {
  const ExperimentConfig cfg = load_with_overrides(o, o.config_path);
  const fs::path dir = resolve_output_dir(o.output_dir);
  prepare_output_dir(dir, o.force);
  const ExperimentResult r = run_experiment(cfg);
  write_run(dir, r);
  figures::render_run(dir);
  print_summary("simulate", r.diagnostics);
  return r.diverged ? kDiverged : kOk;
}

int cmd_compare(const CommonOptions& o, const std::string& against_path, const std::string& against_mode) {
  const ExperimentConfig a = load_with_overrides(o, o.config_path);
  ExperimentConfig b = a;
  if (!against_path.empty()) b = load_with_overrides(o, against_path);
  if (!against_mode.empty()) b.mode = mode_from_string(against_mode);
  if (against_path.empty() && against_mode.empty()) b.mode = ControlMode::dmrac;
  const fs::path dir = resolve_output_dir(o.output_dir);
  prepare_output_dir(dir, o.force);
  ComparisonRuns runs;
  try {
    runs = compare_runs(a, b);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_run(dir / "first", runs.first);
  write_run(dir / "second", runs.second);
  write_file(dir / "comparison.json", [&](std::ostream& os) { os << to_json(runs.report).dump(2) << "\n"; });
  figures::render_run(dir / "first");
  figures::render_run(dir / "second");
  figures::render_comparison(dir);
  print_summary("first", runs.first.diagnostics);
  print_summary("second", runs.second.diagnostics);
  std::cout << "delta tracking_rms=" << runs.report.delta_tracking_rms
            << " delta w_total_variation=" << runs.report.delta_w_total_variation << "\n";
  return runs.first.diverged || runs.second.diverged ? kDiverged : kOk;
}

int cmd_train_offline(const CommonOptions& o, const std::string& buffer_path, std::optional<std::size_t> epochs) {
  ExperimentConfig cfg = load_with_overrides(o, o.config_path);
  if (!fs::exists(buffer_path)) throw UsageError("buffer file not found: " + buffer_path);
  std::vector<DataPoint> data;
  try {
    data = read_buffer_csv(csv::read_file(buffer_path));
  } catch (const std::runtime_error& e) {
    throw UsageError(std::string("buffer file: ") + e.what());
  }
  if (data.empty()) throw UsageError("buffer file holds no training pairs: " + buffer_path);
  if (data.front().x.size() != 2 || data.front().y.size() != 1)
    throw UsageError("buffer file must hold two state columns and one label column");
  if (epochs) cfg.bnn.epochs = *epochs;

  const fs::path dir = resolve_output_dir(o.output_dir);
  prepare_output_dir(dir, o.force);
  TrainOptions opts = detail::train_options(cfg.bnn);
  opts.batch_size = std::min(opts.batch_size, data.size());
  Rng rng = detail::derive_rng(cfg.seed, detail::kTrainStream);
  const TrainResult res = train(NetworkVersion{0, initial_network(cfg)}, data, opts, rng);

  write_file(dir / "checkpoint.json", [&](std::ostream& os) { os << to_json(res.version).dump() << "\n"; });
  write_file(dir / "loss.csv", [&](std::ostream& os) {
    std::vector<std::vector<double>> rows{{0.0, res.report.initial_loss}};
    for (std::size_t e = 0; e < res.report.epoch_loss.size(); ++e)
      rows.push_back({static_cast<double>(e + 1), res.report.epoch_loss[e]});
    csv::write(os, {"epoch", "loss"}, rows);
  });
  write_file(dir / "config.yaml", [&](std::ostream& os) { os << config_to_yaml(cfg); });
  std::cout << "train-offline: " << data.size() << " points, " << cfg.bnn.epochs << " epochs, initial loss "
            << res.report.initial_loss << ", final loss "
            << (res.report.epoch_loss.empty() ? res.report.initial_loss : res.report.epoch_loss.back())
            << ", aborted epochs " << res.report.aborted_epochs << "\n";
  return kOk;
}

int cmd_pe_report(const std::string& run_dir, std::string features_path, std::string output, std::optional<double> window,
                  std::optional<double> stride, std::optional<double> threshold) {
  ExperimentConfig cfg;
  if (!run_dir.empty()) {
    if (!fs::is_directory(run_dir)) throw UsageError("run directory not found: " + run_dir);
    if (fs::exists(fs::path(run_dir) / "config.yaml")) cfg = load_config((fs::path(run_dir) / "config.yaml").string());
    if (features_path.empty()) features_path = (fs::path(run_dir) / "features.csv").string();
    if (output.empty()) output = (fs::path(run_dir) / "pe.csv").string();
  }
  if (features_path.empty()) throw UsageError("pe-report needs --run-dir or --features");
  if (!fs::exists(features_path)) throw UsageError("features file not found: " + features_path);
  if (output.empty()) output = "pe.csv";
  const double w = window.value_or(cfg.pe_window);
  const double s = stride.value_or(cfg.pe_stride);
  const double g = threshold.value_or(cfg.pe_threshold);

  const csv::Table table = csv::read_file(features_path);
  const auto t = table.column_values("t");
  const auto cols = figures::columns_with_prefix(table, "phi_");
  if (cols.empty() || t.size() < 2) throw UsageError("features file holds no feature samples");
  std::vector<VectorXd> phi;
  phi.reserve(t.size());
  for (const auto& row : table.rows) {
    VectorXd v(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) v(static_cast<Eigen::Index>(i)) = row[static_cast<std::size_t>(table.column(cols[i]))];
    phi.push_back(std::move(v));
  }
  std::vector<PEWindowReport> windows;
  try {
    windows = pe_spectrum(t, phi, w, s, g);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_file(output, [&](std::ostream& os) { write_pe_csv(os, windows); });
  std::size_t exciting = 0;
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& r : windows) {
    exciting += r.exciting() ? 1 : 0;
    lo = std::min(lo, r.lambda_min);
  }
  std::cout << "pe-report: " << windows.size() << " windows, " << exciting << " above " << g << ", min lambda_min " << lo
            << " -> " << output << "\n";
  return kOk;
}

int cmd_plot(const std::string& run_dir) {
  const fs::path dir = run_dir;
  if (!fs::is_directory(dir)) throw UsageError("run directory not found: " + run_dir);
  if (fs::exists(dir / "comparison.json")) {
    figures::render_run(dir / "first");
    figures::render_run(dir / "second");
    figures::render_comparison(dir);
  } else if (fs::exists(dir / "diagnostics.json")) {
    figures::render_run(dir);
  } else {
    throw UsageError("no diagnostics.json or comparison.json in " + run_dir);
  }
  std::cout << "plot: regenerated figures in " << dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic deep model reference adaptive control lab"};
  app.require_subcommand(1);

  CommonOptions sim_opts;
  auto* simulate = app.add_subcommand("simulate", "Run one closed-loop experiment and write logs and plots");
  add_common(simulate, sim_opts);

  CommonOptions cmp_opts;
  std::string against_path, against_mode;
  auto* compare = app.add_subcommand("compare", "Run two configurations (default: the config against DMRAC mode)");
  add_common(compare, cmp_opts);
  compare->add_option("--against", against_path, "Second config file (default: same config)");
  compare->add_option("--against-mode", against_mode, "Mode of the second run (default: dmrac)");

  CommonOptions train_opts;
  std::string buffer_path;
  std::optional<std::size_t> epochs;
  auto* train_cmd = app.add_subcommand("train-offline", "Train a network on a dumped buffer.csv");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--buffer", buffer_path, "Buffer CSV (x1.., y1.. columns)")->required();
  train_cmd->add_option("--epochs", epochs, "Override the number of epochs");

  std::string pe_run_dir, pe_features, pe_output;
  std::optional<double> pe_window, pe_stride, pe_threshold;
  auto* pe = app.add_subcommand("pe-report", "Windowed feature-Gram eigenvalues from features.csv");
  pe->add_option("--run-dir", pe_run_dir, "Run directory (reads features.csv and config.yaml)");
  pe->add_option("--features", pe_features, "Features CSV");
  pe->add_option("--output", pe_output, "Output CSV (default: <run-dir>/pe.csv)");
  pe->add_option("--window", pe_window, "Window length [s]");
  pe->add_option("--stride", pe_stride, "Window stride [s]");
  pe->add_option("--threshold", pe_threshold, "Excitation threshold");

  std::string plot_dir;
  auto* plot_cmd = app.add_subcommand("plot", "Regenerate SVG figures from a run or compare directory");
  plot_cmd->add_option("run_dir", plot_dir, "Directory written by simulate or compare")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim_opts);
    if (*compare) return cmd_compare(cmp_opts, against_path, against_mode);
    if (*train_cmd) return cmd_train_offline(train_opts, buffer_path, epochs);
    if (*pe) return cmd_pe_report(pe_run_dir, pe_features, pe_output, pe_window, pe_stride, pe_threshold);
    if (*plot_cmd) return cmd_plot(plot_dir);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
