#ifndef SDMRAC_TOOLS_FIGURES_HPP
#define SDMRAC_TOOLS_FIGURES_HPP

// Figure construction for the CLI. Everything here reads the CSV/JSON files a run leaves behind,
// so plots can be regenerated from a run directory alone.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdmrac/csv.hpp"
#include "sdmrac/plot.hpp"

namespace sdmrac::figures {

namespace fs = std::filesystem;

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return nlohmann::json::parse(in);
}

inline plot::Series line(const csv::Table& t, const std::string& col, const std::string& label, std::string color,
                         bool dashed = false) {
  return {label, t.column_values("t"), t.column_values(col), std::move(color), dashed};
}

inline std::vector<std::string> columns_with_prefix(const csv::Table& t, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& h : t.header)
    if (h.rfind(prefix, 0) == 0) out.push_back(h);
  return out;
}

inline std::vector<double> frobenius_rows(const csv::Table& w) {
  std::vector<double> out;
  out.reserve(w.rows.size());
  for (const auto& row : w.rows) {
    double s = 0.0;
    for (std::size_t i = 1; i < row.size(); ++i) s += row[i] * row[i];
    out.push_back(std::sqrt(s));
  }
  return out;
}

inline plot::Figure states_figure(const csv::Table& traj) {
  const auto& c = plot::palette();
  plot::Figure f;
  f.title = "State tracking";
  f.panels.push_back({"Roll angle", "time [s]", "x1", {}, {line(traj, "x1", "x1", c[0]), line(traj, "xm1", "reference model", c[1], true)}});
  f.panels.push_back({"Roll rate", "time [s]", "x2", {}, {line(traj, "x2", "x2", c[0]), line(traj, "xm2", "reference model", c[1], true)}});
  f.panels.push_back({"Tracking error", "time [s]", "e", {}, {line(traj, "e1", "e1", c[2]), line(traj, "e2", "e2", c[3])}});
  return f;
}

inline plot::Figure uncertainty_figure(const csv::Table& unc) {
  const auto& c = plot::palette();
  const auto t = unc.column_values("t");
  const auto mean = unc.column_values("u_ad_mean");
  const auto sd = unc.column_values("epistemic_std");
  plot::Band band{"2 sd epistemic", t, {}, {}, c[0]};
  for (std::size_t i = 0; i < t.size(); ++i) {
    band.lo.push_back(mean[i] - 2.0 * sd[i]);
    band.hi.push_back(mean[i] + 2.0 * sd[i]);
  }
  plot::Figure f;
  f.title = "Uncertainty estimate";
  f.panels.push_back({"Adaptive element against true uncertainty", "time [s]", "u_ad",
                      {band},
                      {line(unc, "delta_true", "true uncertainty", c[1], true), line(unc, "u_ad_mean", "mean estimate", c[0])}});
  f.panels.push_back({"Epistemic standard deviation", "time [s]", "sd", {}, {line(unc, "epistemic_std", "epistemic", c[0])}});
  f.panels.push_back({"Switching index", "time [s]", "sigma", {}, {line(unc, "sigma", "sigma", c[2])}});
  return f;
}

inline plot::Figure weights_figure(const csv::Table& w, double bound) {
  const auto& pal = plot::palette();
  plot::Panel each{"Outer-layer weights", "time [s]", "W", {}, {}, false};
  const auto cols = columns_with_prefix(w, "W_");
  for (std::size_t i = 0; i < cols.size(); ++i) each.series.push_back(line(w, cols[i], cols[i], pal[i % pal.size()]));
  plot::Panel norm{"Weight norm", "time [s]", "|W|_F", {}, {{"|W|_F", w.column_values("t"), frobenius_rows(w), pal[0]}}};
  if (!w.rows.empty()) {
    const auto t = w.column_values("t");
    norm.series.push_back({"bound", {t.front(), t.back()}, {bound, bound}, pal[1], true});
  }
  plot::Figure f;
  f.title = "Weight evolution";
  f.panels = {each, norm};
  return f;
}

inline plot::Figure pe_figure(const csv::Table& pe) {
  plot::Figure f;
  f.title = "Feature excitation";
  f.panels.push_back({"Minimum eigenvalue of windowed feature Gram", "window start [s]", "lambda_min", {},
                      {{"lambda_min", pe.column_values("window_start"), pe.column_values("lambda_min"), plot::palette()[0]}}});
  return f;
}

/// Writes states.svg, uncertainty.svg, weights.svg and pe.svg for a simulate directory.
inline void render_run(const fs::path& dir) {
  const auto diag = read_json(dir / "diagnostics.json");
  plot::write_svg((dir / "states.svg").string(), states_figure(csv::read_file((dir / "trajectory.csv").string())));
  plot::write_svg((dir / "uncertainty.svg").string(), uncertainty_figure(csv::read_file((dir / "uncertainty.csv").string())));
  plot::write_svg((dir / "weights.svg").string(),
                  weights_figure(csv::read_file((dir / "weights.csv").string()), diag.at("weight_bound").get<double>()));
  plot::write_svg((dir / "pe.svg").string(), pe_figure(csv::read_file((dir / "pe.csv").string())));
}

/// Overlaid figures for a compare directory holding first/ and second/ run outputs.
inline void render_comparison(const fs::path& dir) {
  const auto report = read_json(dir / "comparison.json");
  const std::string a = report.at("first").at("mode").get<std::string>();
  const std::string b = report.at("second").at("mode").get<std::string>();
  const std::string la = a == b ? a + " (first)" : a;
  const std::string lb = a == b ? b + " (second)" : b;
  const auto& c = plot::palette();

  const auto ta = csv::read_file((dir / "first" / "trajectory.csv").string());
  const auto tb = csv::read_file((dir / "second" / "trajectory.csv").string());
  plot::Figure states;
  states.title = "State tracking comparison";
  states.panels.push_back({"Roll angle", "time [s]", "x1", {},
                           {line(ta, "xm1", "reference model", c[7], true), line(ta, "x1", la, c[0]), line(tb, "x1", lb, c[1])}});
  states.panels.push_back({"Tracking error e1", "time [s]", "e1", {}, {line(ta, "e1", la, c[0]), line(tb, "e1", lb, c[1])}});
  plot::write_svg((dir / "compare_states.svg").string(), states);

  const auto ua = csv::read_file((dir / "first" / "uncertainty.csv").string());
  const auto ub = csv::read_file((dir / "second" / "uncertainty.csv").string());
  plot::Figure unc;
  unc.title = "Uncertainty estimate comparison";
  unc.panels.push_back({"Mean estimate", "time [s]", "u_ad", {},
                        {line(ua, "delta_true", "true uncertainty", c[7], true), line(ua, "u_ad_mean", la, c[0]),
                         line(ub, "u_ad_mean", lb, c[1])}});
  plot::write_svg((dir / "compare_uncertainty.svg").string(), unc);

  const auto wa = csv::read_file((dir / "first" / "weights.csv").string());
  const auto wb = csv::read_file((dir / "second" / "weights.csv").string());
  plot::Figure w;
  w.title = "Weight norm comparison";
  w.panels.push_back({"|W|_F", "time [s]", "|W|_F", {},
                      {{la, wa.column_values("t"), frobenius_rows(wa), c[0]}, {lb, wb.column_values("t"), frobenius_rows(wb), c[1]}}});
  plot::write_svg((dir / "compare_weights.svg").string(), w);

  const auto pa = csv::read_file((dir / "first" / "pe.csv").string());
  const auto pb = csv::read_file((dir / "second" / "pe.csv").string());
  plot::Figure pe;
  pe.title = "Feature excitation comparison";
  pe.panels.push_back({"lambda_min per window", "window start [s]", "lambda_min", {},
                       {{la, pa.column_values("window_start"), pa.column_values("lambda_min"), c[0]},
                        {lb, pb.column_values("window_start"), pb.column_values("lambda_min"), c[1]}}});
  plot::write_svg((dir / "compare_pe.svg").string(), pe);
}

}  // namespace sdmrac::figures

#endif  // SDMRAC_TOOLS_FIGURES_HPP
