#include "kilab/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "kilab/errors.hpp"

namespace kilab {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ConsistencyError("format_number: conversion failed");
  return std::string(buf, end);
}

void write_records_csv(std::ostream& os, const std::vector<ScalingRecord>& records) {
  os << kRecordsHeader << '\n';
  for (const auto& r : records)
    os << r.n << ',' << format_number(r.lambda) << ',' << r.seed << ',' << format_number(r.risk) << ','
       << format_number(r.variance) << ',' << format_number(r.wallclock_ms) << '\n';
}

void write_table_csv(std::ostream& os, const Table& table) {
  for (std::size_t k = 0; k < table.header.size(); ++k) os << (k ? "," : "") << table.header[k];
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << row[k];
    os << '\n';
  }
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

}  // namespace

std::string render_svg(const Plot& plot) {
  constexpr double W = 640, H = 440, L = 80, R = 170, T = 40, B = 60;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
     << escape_xml(plot.title) << "</text>\n";

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : plot.series)
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!(s.x[k] > 0.0) || !(s.y[k] > 0.0) || !std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      xmin = std::min(xmin, std::log10(s.x[k]));
      xmax = std::max(xmax, std::log10(s.x[k]));
      ymin = std::min(ymin, std::log10(s.y[k]));
      ymax = std::max(ymax, std::log10(s.y[k]));
    }
  const double px0 = L, px1 = W - R, py0 = H - B, py1 = T;
  os << "<rect x=\"" << px0 << "\" y=\"" << py1 << "\" width=\"" << px1 - px0 << "\" height=\"" << py0 - py1
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << H - 15
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << escape_xml(plot.xlabel)
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << (py0 + py1) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"13\" transform=\"rotate(-90 18 " << (py0 + py1) / 2 << ")\">" << escape_xml(plot.ylabel)
     << "</text>\n";

  if (!std::isfinite(xmin)) {
    os << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << (py0 + py1) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\" fill=\"#888\">no data</text>\n";
    os << "</svg>\n";
    return os.str();
  }
  if (xmax - xmin < 1e-9) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-9) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;
  auto sx = [&](double lx) { return px0 + (lx - xmin) / (xmax - xmin) * (px1 - px0); };
  auto sy = [&](double ly) { return py0 - (ly - ymin) / (ymax - ymin) * (py0 - py1); };

  // Decade ticks; fall back to end labels when the range is under a decade.
  auto ticks = [](double lo, double hi) {
    std::vector<double> t;
    for (double k = std::ceil(lo); k <= std::floor(hi); k += 1.0) t.push_back(k);
    if (t.size() < 2) t = {lo, hi};
    return t;
  };
  for (double t : ticks(xmin, xmax))
    os << "<line x1=\"" << fixed(sx(t)) << "\" y1=\"" << py0 << "\" x2=\"" << fixed(sx(t)) << "\" y2=\"" << py0 + 5
       << "\" stroke=\"black\"/><text x=\"" << fixed(sx(t)) << "\" y=\"" << py0 + 20
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">1e" << fixed(t, std::abs(t - std::round(t)) < 1e-9 ? 0 : 2)
       << "</text>\n";
  for (double t : ticks(ymin, ymax))
    os << "<line x1=\"" << px0 - 5 << "\" y1=\"" << fixed(sy(t)) << "\" x2=\"" << px0 << "\" y2=\"" << fixed(sy(t))
       << "\" stroke=\"black\"/><text x=\"" << px0 - 8 << "\" y=\"" << fixed(sy(t) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" << fixed(t, std::abs(t - std::round(t)) < 1e-9 ? 0 : 2)
       << "</text>\n";

  double legend_y = py1 + 10;
  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const auto& s = plot.series[si];
    const char* color = kPalette[si % (sizeof kPalette / sizeof *kPalette)];
    std::string path;
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!(s.x[k] > 0.0) || !(s.y[k] > 0.0) || !std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      const double cx = sx(std::log10(s.x[k])), cy = sy(std::log10(s.y[k]));
      os << "<circle cx=\"" << fixed(cx) << "\" cy=\"" << fixed(cy) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      path += (path.empty() ? "" : " ") + fixed(cx) + "," + fixed(cy);
    }
    if (s.connect && !path.empty())
      os << "<polyline points=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\"/>\n";
    os << "<circle cx=\"" << px1 + 15 << "\" cy=\"" << legend_y << "\" r=\"4\" fill=\"" << color << "\"/><text x=\""
       << px1 + 25 << "\" y=\"" << legend_y + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << escape_xml(s.label) << "</text>\n";
    legend_y += 18;
  }
  if (plot.fit) {
    const auto& f = *plot.fit;
    // log10 y = (intercept + slope ln x) / ln 10
    auto fy = [&](double lx) { return (f.intercept + f.slope * lx * std::log(10.0)) / std::log(10.0); };
    os << "<line x1=\"" << fixed(sx(xmin + xpad)) << "\" y1=\"" << fixed(sy(fy(xmin + xpad))) << "\" x2=\""
       << fixed(sx(xmax - xpad)) << "\" y2=\"" << fixed(sy(fy(xmax - xpad)))
       << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    os << "<text x=\"" << px1 + 15 << "\" y=\"" << legend_y + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">fit slope " << fixed(f.slope, 3) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

Json summary_json(const ScalingReport& report) {
  Json j;
  j["experiment"] = report.experiment;
  j["passed"] = report.passed;
  j["verdict"] = report.verdict;
  j["records"] = report.records.size();
  if (report.fit) {
    const auto& f = *report.fit;
    j["fit"] = {{"exponent", f.exponent}, {"intercept", f.intercept}, {"r2", f.r2},
                {"band", {f.band_low, f.band_high}}, {"n", f.n}, {"median_risk", f.medians}};
  }
  for (auto it = report.summary.begin(); it != report.summary.end(); ++it) j[it.key()] = it.value();
  j["warnings"] = report.warnings;
  j["config"] = report.config;
  return j;
}

namespace {

void open_or_throw(std::ofstream& out, const std::filesystem::path& p) {
  out.open(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file '" + p.string() + "'");
}

}  // namespace

std::filesystem::path emit_report(const ScalingReport& report, const std::filesystem::path& dir, ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw ConfigError("cannot create output directory '" + dir.string() + "'");
  if (format.csv) {
    std::ofstream out;
    open_or_throw(out, dir / "records.csv");
    write_records_csv(out, report.records);
    for (const auto& t : report.tables) {
      const auto target = dir / (t.name + ".csv");
      std::filesystem::create_directories(target.parent_path(), ec);
      std::ofstream tout;
      open_or_throw(tout, target);
      write_table_csv(tout, t);
    }
  }
  const auto summary_path = dir / "summary.json";
  if (format.json) {
    std::ofstream out;
    open_or_throw(out, summary_path);
    out << summary_json(report).dump(2) << '\n';
    for (const auto& [name, doc] : report.documents) {
      const auto target = dir / (name + ".json");
      std::filesystem::create_directories(target.parent_path(), ec);
      std::ofstream dout;
      open_or_throw(dout, target);
      dout << doc.dump(2) << '\n';
    }
  }
  if (format.svg) {
    std::filesystem::create_directories(dir / "plots", ec);
    std::vector<Plot> plots = report.plots;
    if (plots.empty()) plots.push_back({"risk_vs_n", report.experiment, "n", "risk", {}, std::nullopt});
    for (const auto& p : plots) {
      std::ofstream out;
      open_or_throw(out, dir / "plots" / (p.name + ".svg"));
      out << render_svg(p);
    }
  }
  return summary_path;
}

Table variance_curve_table(const VarianceCurve& curve, const std::string& name) {
  Table t{name, {"lambda", "V", "stderr"}, {}};
  for (const auto& e : curve.entries)
    t.rows.push_back({format_number(e.lambda), format_number(e.value), format_number(e.standard_error)});
  return t;
}

Table decay_fit_table(const SpectrumModel& spectrum, const DecayFit& fit, const std::string& name) {
  Table t{name, {"i", "lambda_i", "fitted", "log_residual"}, {}};
  const auto& ev = spectrum.eigenvalues();
  for (std::size_t i = fit.i_min; i <= std::min(fit.i_max, ev.size()); ++i) {
    const double v = ev[i - 1];
    if (!(v > 0.0)) continue;
    const double fitted = fit.c * std::pow(static_cast<double>(i), -fit.beta);
    t.rows.push_back({std::to_string(i), format_number(v), format_number(fitted), format_number(std::log(v / fitted))});
  }
  return t;
}

void write_trace_csv(std::ostream& os, const TrainTrace& trace) {
  os << "step,loss\n";
  for (std::size_t k = 0; k < trace.loss_history.size(); ++k) os << k << ',' << format_number(trace.loss_history[k]) << '\n';
}

Json trace_json(const TrainTrace& trace, double final_sup_gap, const Json& config_echo) {
  Json checkpoints = Json::array();
  for (const auto& c : trace.checkpoints) checkpoints.push_back({{"step", c.step}, {"loss", c.loss}});
  return {{"eta_initial", trace.eta_initial},
          {"eta_final", trace.eta_final},
          {"steps", trace.steps_taken},
          {"final_loss", trace.loss_history.empty() ? 0.0 : trace.loss_history.back()},
          {"converged", trace.converged},
          {"halvings", trace.halvings.size()},
          {"final_sup_gap", final_sup_gap},
          {"checkpoints", checkpoints},
          {"config", config_echo}};
}

}  // namespace kilab
