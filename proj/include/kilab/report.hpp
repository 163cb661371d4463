#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kilab/config.hpp"
#include "kilab/ntk.hpp"
#include "kilab/spectral.hpp"
#include "kilab/stats.hpp"
#include "kilab/variance.hpp"

namespace kilab {

/// One (n, lambda, seed) cell. NaN marks a quantity that was not computed.
struct ScalingRecord {
  std::size_t n = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double risk = 0.0;
  double variance = 0.0;
  double wallclock_ms = 0.0;
};

/// Extra CSV written next to records.csv.
struct Table {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool connect = false;
};

/// Log-log scatter plot, optionally with a fitted power law y = e^intercept x^slope.
struct Plot {
  std::string name;  // file stem under plots/
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<PlotSeries> series;
  std::optional<LineFit> fit;
};

/// Fitted exponent of a median-vs-n curve with a bootstrap band.
struct ExponentFit {
  double exponent = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double band_low = 0.0;
  double band_high = 0.0;
  std::vector<std::size_t> n;
  std::vector<double> medians;
};

struct ScalingReport {
  std::string experiment;
  std::vector<ScalingRecord> records;
  std::optional<ExponentFit> fit;
  bool passed = false;
  std::string verdict;
  Json summary = Json::object();  // experiment-specific fields
  Json config = Json::object();
  std::vector<Table> tables;
  /// Extra JSON files, path stem relative to the output directory.
  std::vector<std::pair<std::string, Json>> documents;
  std::vector<Plot> plots;
  std::vector<std::string> warnings;
};

/// Shortest round-trip representation; "nan" / "inf" for non-finite values.
std::string format_number(double v);

inline constexpr const char* kRecordsHeader = "n,lambda,seed,risk,variance,wallclock_ms";

void write_records_csv(std::ostream& os, const std::vector<ScalingRecord>& records);
void write_table_csv(std::ostream& os, const Table& table);
std::string render_svg(const Plot& plot);
Json summary_json(const ScalingReport& report);

struct ReportFormat {
  bool csv = true;
  bool json = true;
  bool svg = true;
};

/// Writes records.csv, summary.json, plots/<name>.svg and one CSV per extra
/// table into `dir`; returns the summary path. Raises ConfigError when the
/// directory cannot be written.
std::filesystem::path emit_report(const ScalingReport& report, const std::filesystem::path& dir,
                                  ReportFormat format = {});

/// lambda, V, stderr
Table variance_curve_table(const VarianceCurve& curve, const std::string& name = "variance_curve");
/// i, lambda_i, fitted, log residual over the fit window.
Table decay_fit_table(const SpectrumModel& spectrum, const DecayFit& fit, const std::string& name = "decay_fit");
/// step, loss
void write_trace_csv(std::ostream& os, const TrainTrace& trace);
Json trace_json(const TrainTrace& trace, double final_sup_gap, const Json& config_echo);

}  // namespace kilab
