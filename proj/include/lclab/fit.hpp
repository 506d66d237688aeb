#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "lclab/errors.hpp"

namespace lclab {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y ~ slope * x + intercept.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "linear_fit: size mismatch");
  require(x.size() >= 2, "linear_fit: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, "linear_fit: abscissae are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx, x.size()};
}

/// Slope of log y against log x over the points with y > floor.
/// Returns -inf when fewer than two points survive (the quantity is negligible).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y, double floor = 1e-14) {
  require(x.size() == y.size(), "loglog_slope: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] > floor && x[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return -std::numeric_limits<double>::infinity();
  return linear_fit(lx, ly).slope;
}

}  // namespace lclab
