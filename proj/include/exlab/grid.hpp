#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace exlab {

using cd = std::complex<double>;
using Field = Eigen::VectorXcd;
using RField = Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr double four_pi = 4.0 * std::numbers::pi;

// Uniform half-line grid carrying u = r*psi. Interior points r_i = (i+1)*dr,
// i = 0..N-1, with u = 0 at r = 0 and r = r_max.
struct RadialGrid {
  double r_max = 0.0;
  int N = 0;
  double dr = 0.0;
  double absorbing_width = 0.0;

  double r(int i) const { return (i + 1) * dr; }

  RField radii() const {
    RField x(N);
    for (int i = 0; i < N; ++i) x[i] = r(i);
    return x;
  }

  // first index inside the absorbing layer (N when the layer is off)
  int layer_start() const {
    if (absorbing_width <= 0.0) return N;
    return std::min(N, static_cast<int>(std::ceil((r_max - absorbing_width) / dr)) - 1);
  }

  bool operator==(const RadialGrid& o) const {
    return N == o.N && r_max == o.r_max && absorbing_width == o.absorbing_width;
  }
};

inline RadialGrid make_grid(double r_max, int N, double absorbing_width = 0.0) {
  if (!(r_max > 0.0)) throw std::invalid_argument("make_grid: r_max must be positive");
  if (N < 16) throw std::invalid_argument("make_grid: need N >= 16");
  if (absorbing_width < 0.0 || absorbing_width >= r_max / 2)
    throw std::invalid_argument("make_grid: absorbing layer must be narrower than r_max/2");
  RadialGrid g;
  g.r_max = r_max;
  g.N = N;
  g.dr = r_max / (N + 1);
  g.absorbing_width = absorbing_width;
  return g;
}

// grid with spacing close to dr_target
inline RadialGrid make_grid_dr(double r_max, double dr_target, double absorbing_width = 0.0) {
  int N = static_cast<int>(std::lround(r_max / dr_target)) - 1;
  return make_grid(r_max, N, absorbing_width);
}

struct NormKind {
  enum Tag { L2, Lp, L2loc, L2weighted, H1 } tag = L2;
  double p = 2.0;  // exponent for Lp, weight exponent for L2loc / L2weighted

  static NormKind l2() { return {L2, 2.0}; }
  static NormKind lp(double p) { return {Lp, p}; }
  static NormKind l2loc(double r1 = 10.0) { return {L2loc, r1}; }
  static NormKind l2weighted(double s) { return {L2weighted, s}; }
  static NormKind h1() { return {H1, 2.0}; }
};

namespace detail {
inline void check_size(const RadialGrid& g, Eigen::Index n) {
  if (n != g.N) throw std::invalid_argument("field does not live on this grid");
}
inline double japanese(double r) { return std::sqrt(1.0 + r * r); }
}  // namespace detail

template <class V>
double norm(const RadialGrid& g, const V& u, NormKind kind) {
  detail::check_size(g, u.size());
  if (!u.allFinite()) throw std::domain_error("norm: non-finite field values");
  const int N = g.N;
  switch (kind.tag) {
    case NormKind::L2:
      return std::sqrt(four_pi * g.dr * u.squaredNorm());
    case NormKind::Lp: {
      const double p = kind.p;
      if (p < 1.0) throw std::invalid_argument("norm: Lp needs p >= 1");
      if (std::isinf(p)) {
        double m = 0.0;
        for (int i = 0; i < N; ++i) m = std::max(m, std::abs(u[i]) / g.r(i));
        return m;
      }
      double s = 0.0;
      for (int i = 0; i < N; ++i) {
        const double r = g.r(i);
        s += std::pow(std::abs(u[i]) / r, p) * r * r;
      }
      return std::pow(four_pi * g.dr * s, 1.0 / p);
    }
    case NormKind::L2loc:
    case NormKind::L2weighted: {
      const double e = kind.tag == NormKind::L2loc ? -kind.p : kind.p;
      double s = 0.0;
      for (int i = 0; i < N; ++i) s += std::pow(detail::japanese(g.r(i)), 2 * e) * std::norm(u[i]);
      return std::sqrt(four_pi * g.dr * s);
    }
    case NormKind::H1: {
      double grad = std::norm(u[0]);
      for (int i = 0; i + 1 < N; ++i) grad += std::norm(u[i + 1] - u[i]);
      grad += std::norm(u[N - 1]);
      return std::sqrt(four_pi * (g.dr * u.squaredNorm() + grad / g.dr));
    }
  }
  return 0.0;
}

template <class A, class B>
cd inner(const RadialGrid& g, const A& f, const B& h) {
  detail::check_size(g, f.size());
  detail::check_size(g, h.size());
  cd s = 0.0;
  for (int i = 0; i < g.N; ++i) s += std::conj(cd(f[i])) * cd(h[i]);
  return four_pi * g.dr * s;
}

// real bilinear integral 4*pi*dr*sum f*h (no conjugation)
template <class A, class B>
auto integral(const RadialGrid& g, const A& f, const B& h) {
  return four_pi * g.dr * (f.array() * h.array()).sum();
}

// psi(r) from u on the grid; psi(0) by the one-sided extrapolation (4 psi_1 - psi_2)/3
inline cd psi_at_origin(const RadialGrid& g, const Field& u) {
  return (4.0 * u[0] / g.r(0) - u[1] / g.r(1)) / 3.0;
}

inline Field from_psi(const RadialGrid& g, auto&& psi) {
  Field u(g.N);
  for (int i = 0; i < g.N; ++i) u[i] = g.r(i) * cd(psi(g.r(i)));
  return u;
}

}  // namespace exlab
