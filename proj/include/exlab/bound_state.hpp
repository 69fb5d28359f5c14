#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapack.hpp"
#include "spectrum.hpp"

namespace exlab {

struct BoundState {
  int k = 0;
  double n = 0.0;
  RField Q;   // u-representation
  double E = 0.0;
  RField q;   // Q - n phi_k
  int kappa = -1;
  int iterations = 0;
  double residual = 0.0;
};

struct NewtonOptions {
  double tol = 1e-11;
  int max_iter = 50;
};

struct NewtonFailure : std::runtime_error {
  double n;
  NewtonFailure(const std::string& what, double n_) : std::runtime_error(what), n(n_) {}
};

// (H0 - E) Q + kappa Q^3 (u-representation: kappa Q^3 / r^2)
inline RField bound_residual(const LinearSpectrum& s, const RField& Q, double E, int kappa) {
  const RadialGrid& g = s.grid;
  const double h2 = 1.0 / (g.dr * g.dr);
  RField F(g.N);
  for (int i = 0; i < g.N; ++i) {
    const double lap = 2.0 * Q[i] - (i > 0 ? Q[i - 1] : 0.0) - (i + 1 < g.N ? Q[i + 1] : 0.0);
    const double r = g.r(i);
    F[i] = lap * h2 + (s.V[i] - E) * Q[i] + kappa * Q[i] * Q[i] * Q[i] / (r * r);
  }
  return F;
}

// H0 f for a real or complex field (Dirichlet ends)
template <class Vec>
Vec apply_H0(const LinearSpectrum& s, const Vec& f) {
  const RadialGrid& g = s.grid;
  const double h2 = 1.0 / (g.dr * g.dr);
  Vec out(g.N);
  for (int i = 0; i < g.N; ++i) {
    auto lap = 2.0 * f[i];
    if (i > 0) lap -= f[i - 1];
    if (i + 1 < g.N) lap -= f[i + 1];
    out[i] = lap * h2 + s.V[i] * f[i];
  }
  return out;
}

inline BoundState solve_bound_state(int k, double n, int kappa, const LinearSpectrum& s,
                                    const std::optional<BoundState>& warm = std::nullopt,
                                    const NewtonOptions& opt = {}) {
  if (k < 0 || k > s.K) throw std::invalid_argument("solve_bound_state: no such linear eigenvalue");
  const RadialGrid& g = s.grid;
  const int N = g.N;
  const double w = four_pi * g.dr;
  const RField phi = s.phi.col(k);
  BoundState bs;
  bs.k = k;
  bs.n = n;
  bs.kappa = kappa;
  if (n == 0.0) {
    bs.Q = RField::Zero(N);
    bs.q = RField::Zero(N);
    bs.E = s.e[k];
    return bs;
  }
  const double C = kappa * quartic_integral(s, k);
  RField Q;
  double E;
  if (warm && warm->k == k && warm->kappa == kappa && warm->n > 0) {
    Q = warm->Q * (n / warm->n);
    E = s.e[k] + (warm->E - s.e[k]) * (n * n) / (warm->n * warm->n);
  } else {
    Q = n * phi;
    E = s.e[k] + C * n * n;
  }
  const double h2 = 1.0 / (g.dr * g.dr);
  const RField r = g.radii();
  const Eigen::VectorXd off = Eigen::VectorXd::Constant(N - 1, -h2);
  for (int it = 0; it < opt.max_iter; ++it) {
    const RField F = bound_residual(s, Q, E, kappa);
    const double cres = w * phi.dot(Q) - n;
    const double res = std::sqrt(w * F.squaredNorm());
    bs.residual = res;
    bs.iterations = it;
    if (!std::isfinite(res)) break;
    if (res < opt.tol && std::abs(cres) < 1e-13 * std::max(1.0, n)) {
      bs.Q = Q;
      bs.E = E;
      bs.q = Q - n * phi;
      return bs;
    }
    // bordered system [T, -Q; w phi^T, 0] by block elimination on the tridiagonal T
    Eigen::VectorXd d(N);
    for (int i = 0; i < N; ++i) d[i] = 2.0 * h2 + s.V[i] - E + 3.0 * kappa * Q[i] * Q[i] / (r[i] * r[i]);
    Eigen::VectorXd x1, x2;
    try {
      x1 = lapack::gtsv(off, d, off, -F);
      x2 = lapack::gtsv(off, d, off, Q);
    } catch (const std::runtime_error&) {
      throw NewtonFailure("bound-state Jacobian singular", n);
    }
    const double den = w * phi.dot(x2);
    if (!(std::abs(den) > 0.0) || !x1.allFinite() || !x2.allFinite())
      throw NewtonFailure("bound-state Jacobian singular", n);
    const double dE = (-cres - w * phi.dot(x1)) / den;
    Q += x1 + dE * x2;
    E += dE;
  }
  throw NewtonFailure("bound-state Newton did not converge at n=" + std::to_string(n), n);
}

// L_+ R = Q with L_+ = H0 - E + 3 kappa Q^2
inline RField tangent_R(const LinearSpectrum& s, const BoundState& bs) {
  if (bs.n == 0.0) throw std::domain_error("tangent_R: singular at n = 0");
  const RadialGrid& g = s.grid;
  const double h2 = 1.0 / (g.dr * g.dr);
  Eigen::VectorXd d(g.N), off = Eigen::VectorXd::Constant(g.N - 1, -h2);
  for (int i = 0; i < g.N; ++i) {
    const double r = g.r(i);
    d[i] = 2.0 * h2 + s.V[i] - bs.E + 3.0 * bs.kappa * bs.Q[i] * bs.Q[i] / (r * r);
  }
  RField R = lapack::gtsv(off, d, off, bs.Q);
  if (!R.allFinite()) throw std::domain_error("tangent_R: singular linearization");
  return R;
}

struct Branch {
  int k = 0;
  int kappa = -1;
  std::vector<double> n_grid;
  std::vector<BoundState> states;
  std::vector<RField> R_list;  // empty field at n = 0
  double C = 0.0;              // kappa * int phi_k^4
};

inline Branch continue_branch(int k, const std::vector<double>& n_grid, int kappa, const LinearSpectrum& s,
                              const NewtonOptions& opt = {}) {
  if (n_grid.empty() || n_grid.front() != 0.0) throw std::invalid_argument("continue_branch: n_grid must start at 0");
  Branch b;
  b.k = k;
  b.kappa = kappa;
  b.C = kappa * quartic_integral(s, k);
  std::optional<BoundState> prev;
  double n_prev = 0.0;
  for (double n : n_grid) {
    if (n < n_prev) throw std::invalid_argument("continue_branch: n_grid must increase");
    BoundState bs;
    if (n == 0.0) {
      bs = solve_bound_state(k, 0.0, kappa, s);
    } else {
      // step halving between grid points on failure
      double target = n, reached = n_prev;
      int halvings = 0;
      while (reached < n) {
        try {
          BoundState t = solve_bound_state(k, target, kappa, s, prev, opt);
          prev = t;
          reached = target;
          target = n;
        } catch (const NewtonFailure&) {
          if (++halvings > 12) throw NewtonFailure("branch continuation failed", target);
          target = 0.5 * (reached + target);
        }
      }
      bs = *prev;
    }
    prev = bs.n > 0 ? std::optional<BoundState>(bs) : std::nullopt;
    b.n_grid.push_back(n);
    b.R_list.push_back(n > 0 ? tangent_R(s, bs) : RField());
    b.states.push_back(std::move(bs));
    n_prev = n;
  }
  return b;
}

}  // namespace exlab
