#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/bessel.hpp>

#include "grid.hpp"

namespace exlab {

// Quadratic complex absorbing profile W >= 0, nonzero only inside the outer layer.
inline RField absorbing_profile(const RadialGrid& g, double strength) {
  RField W = RField::Zero(g.N);
  if (g.absorbing_width <= 0.0) return W;
  const double r0 = g.r_max - g.absorbing_width;
  for (int i = 0; i < g.N; ++i) {
    const double x = (g.r(i) - r0) / g.absorbing_width;
    if (x > 0) W[i] = strength * x * x;
  }
  return W;
}

// e^{-i H0 tau} for the Dirichlet finite-difference H0 = -d2/dr2 + V, Chebyshev series
// with Bessel coefficients on the Gershgorin interval.
class ChebyshevExp {
 public:
  ChebyshevExp(const RField& V, const RadialGrid& g, double tau, double tol = 1e-15)
      : N_(g.N), h2_(1.0 / (g.dr * g.dr)), tau_(tau) {
    const double lo = V.minCoeff(), hi = V.maxCoeff() + 4.0 * h2_;
    c_ = 0.5 * (hi + lo);
    a_ = 0.5 * (hi - lo) * 1.001;
    const double x = a_ * std::abs(tau);
    const cd phase = std::exp(cd(0.0, -c_ * tau));
    for (int k = 0;; ++k) {
      const double J = boost::math::cyl_bessel_j(static_cast<double>(k), x);
      // (-i)^k J_k(a tau), sign of tau folded in through J_k(-x) = (-1)^k J_k(x)
      cd ik = std::pow(cd(0.0, -1.0), k) * J * ((tau < 0 && (k % 2)) ? -1.0 : 1.0);
      coef_.push_back((k == 0 ? 1.0 : 2.0) * phase * ik);
      if (k > x && std::abs(J) < tol) break;
      if (k > 100000) throw std::runtime_error("ChebyshevExp: series did not converge");
    }
    diag_ = ((2.0 * h2_ + V.array() - c_) / a_).matrix();
    off_ = -h2_ / a_;
  }

  Field apply(const Field& f) const {
    if (f.size() != N_) throw std::invalid_argument("ChebyshevExp: size mismatch");
    const Eigen::Index N = N_;
    Field t0 = f, t1(N), t2(N), out = coef_[0] * f;
    if (coef_.size() == 1) return out;
    scaled_into(f, t1, 1.0);
    out += coef_[1] * t1;
    for (size_t k = 2; k < coef_.size(); ++k) {
      // t2 = 2 S t1 - t0, accumulated in one pass
      const cd* a = t1.data();
      const cd* b = t0.data();
      cd* c = t2.data();
      cd* o = out.data();
      const cd ck = coef_[k];
      for (Eigen::Index i = 0; i < N; ++i) {
        cd s = diag_[i] * a[i];
        if (i > 0) s += off_ * a[i - 1];
        if (i + 1 < N) s += off_ * a[i + 1];
        c[i] = 2.0 * s - b[i];
        o[i] += ck * c[i];
      }
      t0.swap(t1);
      t1.swap(t2);
    }
    return out;
  }

  // e^{+i H0 tau} f (H0 is real)
  Field apply_backward(const Field& f) const { return apply(f.conjugate()).conjugate(); }

  int terms() const { return static_cast<int>(coef_.size()); }
  double tau() const { return tau_; }

 private:
  // out = scale * (H0 - c) / a f
  void scaled_into(const Field& f, Field& out, double scale) const {
    for (Eigen::Index i = 0; i < N_; ++i) {
      cd s = diag_[i] * f[i];
      if (i > 0) s += off_ * f[i - 1];
      if (i + 1 < N_) s += off_ * f[i + 1];
      out[i] = scale * s;
    }
  }

  Eigen::Index N_;
  double h2_, tau_, c_ = 0, a_ = 1;
  RField diag_;
  double off_ = 0.0;
  std::vector<cd> coef_;
};

// Yoshida triple-jump weights for a symmetric second-order step
struct Yoshida4 {
  static constexpr double cbrt2 = 1.2599210498948732;
  static constexpr double w1 = 1.0 / (2.0 - cbrt2);
  static constexpr double w0 = -cbrt2 / (2.0 - cbrt2);
};

}  // namespace exlab
