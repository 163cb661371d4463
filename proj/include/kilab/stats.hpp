#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace kilab {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double rms_residual = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = intercept + slope * x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// OLS of log y on log x; requires positive entries.
LineFit fit_loglog(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);
double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> values);

/// Linearly interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Log-spaced grid of `count` points from lo to hi inclusive.
std::vector<double> logspace(double lo, double hi, std::size_t count);

}  // namespace kilab
