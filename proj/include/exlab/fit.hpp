#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace exlab {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_err = 0.0;  // one-sigma from residual scatter
  double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("linear_fit: need >= 2 matching points");
  double sx = 0, sy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (size_t i = 0; i < n; ++i) ss += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
  f.slope_err = n > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
  f.r2 = syy > 0 ? 1.0 - ss / syy : 1.0;
  return f;
}

// fit log|y| = slope * log x + c
inline LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(std::abs(y[i])));
  }
  return linear_fit(lx, ly);
}

// fit log|y| = rate * t + c
inline LinearFit exp_fit(const std::vector<double>& t, const std::vector<double>& y) {
  std::vector<double> ly;
  for (double v : y) ly.push_back(std::log(std::abs(v)));
  return linear_fit(t, ly);
}

}  // namespace exlab
