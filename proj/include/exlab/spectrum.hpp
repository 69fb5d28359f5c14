#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "grid.hpp"
#include "lapack.hpp"
#include "potential.hpp"

namespace exlab {

struct LinearSpectrum {
  RadialGrid grid;
  RField V;               // potential sampled on the grid
  Eigen::VectorXd e;      // e_0 < ... < e_K < 0
  Eigen::MatrixXd phi;    // column k: u-representation of phi_k, L2-normalized
  int K = -1;

  int count() const { return K + 1; }
  RField u(int k) const { return phi.col(k); }
};

struct NoBoundStates : std::runtime_error {
  NoBoundStates() : std::runtime_error("no bound states") {}
};

inline LinearSpectrum solve_spectrum(const RField& V, const RadialGrid& g, double gap_tol = 1e-9) {
  detail::check_size(g, V.size());
  const double h2 = 1.0 / (g.dr * g.dr);
  Eigen::VectorXd d = (2.0 * h2 + V.array()).matrix();
  Eigen::VectorXd off = Eigen::VectorXd::Constant(g.N - 1, -h2);
  const double vmin = std::min(0.0, V.minCoeff());
  auto te = lapack::stevr_range(d, off, vmin - 1.0, 0.0);
  if (te.values.size() == 0) throw NoBoundStates();
  LinearSpectrum s;
  s.grid = g;
  s.V = V;
  s.e = te.values;
  s.phi = te.vectors;
  s.K = static_cast<int>(te.values.size()) - 1;
  for (int k = 0; k <= s.K; ++k) {
    if (k > 0 && s.e[k] - s.e[k - 1] < gap_tol * std::max(1.0, std::abs(s.e[k])))
      throw std::runtime_error("degenerate eigenvalue pair (simplicity violated)");
    auto c = s.phi.col(k);
    c /= std::sqrt(four_pi * g.dr * c.squaredNorm());
    if (c[0] < 0) c = -c;
  }
  return s;
}

inline LinearSpectrum solve_spectrum(const PotentialSpec& p, const RadialGrid& g) {
  return solve_spectrum(p.sample(g), g);
}

template <class V>
V project_continuous(const LinearSpectrum& s, const V& f) {
  detail::check_size(s.grid, f.size());
  V out = f;
  for (int k = 0; k <= s.K; ++k) {
    const auto c = (four_pi * s.grid.dr) * s.phi.col(k).dot(f);
    out -= c * s.phi.col(k);
  }
  return out;
}

// Ghost-point ratio of the exact discrete transparent condition for -d2/dr2 at energy z:
// xi^2 - (2 - z dr^2) xi + 1 = 0, root with |xi| < 1; on the unit circle (z real inside the
// band) the outgoing root Im xi > 0.
inline cd tbc_xi(cd z, double dr) {
  const cd b = 2.0 - z * dr * dr;
  const cd s = std::sqrt(b * b - 4.0);
  cd x1 = 0.5 * (b + s), x2 = 0.5 * (b - s);
  const double a1 = std::abs(x1), a2 = std::abs(x2);
  if (std::abs(a1 - a2) < 1e-13) return x1.imag() > 0 ? x1 : x2;
  return a1 < a2 ? x1 : x2;
}

// (H0 - z) u = f with the transparent condition at r_max (outgoing for real z > 0).
inline Field resolvent_tbc(const RField& V, const RadialGrid& g, cd z, const Field& f) {
  const double h2 = 1.0 / (g.dr * g.dr);
  Eigen::VectorXcd d(g.N);
  for (int i = 0; i < g.N; ++i) d[i] = 2.0 * h2 + V[i] - z;
  d[g.N - 1] -= tbc_xi(z, g.dr) * h2;
  Eigen::VectorXcd off = Eigen::VectorXcd::Constant(g.N - 1, cd(-h2));
  return lapack::gtsv(off, d, off, f);
}

inline Field resolvent_outgoing(const LinearSpectrum& s, cd z, const Field& f, double eig_tol = 1e-10) {
  if (z.imag() < 0) throw std::invalid_argument("resolvent_outgoing: needs Im z >= 0");
  if (!f.allFinite()) throw std::domain_error("resolvent_outgoing: non-finite source");
  for (int k = 0; k <= s.K; ++k)
    if (std::abs(z - s.e[k]) < eig_tol * std::max(1.0, std::abs(s.e[k])))
      throw std::domain_error("resolvent_outgoing: z hits a discrete eigenvalue");
  Field u = resolvent_tbc(s.V, s.grid, z, f);
  if (!u.allFinite()) throw std::runtime_error("resolvent_outgoing: linear solve failed");
  return u;
}

// Dirichlet solve (H0 - z) u = f on the same grid.
inline Field resolvent_dirichlet(const RField& V, const RadialGrid& g, cd z, const Field& f) {
  const double h2 = 1.0 / (g.dr * g.dr);
  Eigen::VectorXcd d(g.N);
  for (int i = 0; i < g.N; ++i) d[i] = 2.0 * h2 + V[i] - z;
  Eigen::VectorXcd off = Eigen::VectorXcd::Constant(g.N - 1, cd(-h2));
  return lapack::gtsv(off, d, off, f);
}

// Continuum quadratic form (P_c f, R(E + i0) P_c f) for a source f in u-representation.
inline cd continuum_form(const LinearSpectrum& s, const RField& f, double E) {
  const RField pf = project_continuous(s, f);
  const Field pfc = pf.cast<cd>();
  return inner(s.grid, pfc, resolvent_outgoing(s, cd(E, 0.0), pfc));
}

// Independent route for Im of the same form: damped Dirichlet resolvents on a long box,
// polynomial extrapolation of Im(f, R(E + i eps) f) to eps = 0.
struct DampedFormResult {
  double value = 0.0;
  std::vector<double> eps, samples;
  double r_box = 0.0;
};

inline DampedFormResult continuum_form_damped(const LinearSpectrum& s, const RField& f, double E,
                                              std::vector<double> eps = {0.32, 0.16, 0.08, 0.04}) {
  const RadialGrid& g = s.grid;
  const double k = std::sqrt(std::max(E, 1e-3));
  const double eps_min = *std::min_element(eps.begin(), eps.end());
  // round trip attenuation exp(-2 Im k r) ~ 1e-10
  const double r_box = g.r_max + 12.0 * k / eps_min * 2.0;
  const int Nb = static_cast<int>(std::lround(r_box / g.dr)) - 1;
  RadialGrid gb = g;
  gb.N = Nb;
  gb.r_max = (Nb + 1) * g.dr;
  gb.absorbing_width = 0.0;
  RField Vb = RField::Zero(Nb), fb = RField::Zero(Nb);
  Vb.head(g.N) = s.V;
  fb.head(g.N) = project_continuous(s, f);
  const Field fc = fb.cast<cd>();
  DampedFormResult out;
  out.eps = eps;
  out.r_box = gb.r_max;
  for (double e : eps) {
    const Field u = resolvent_dirichlet(Vb, gb, cd(E, e), fc);
    out.samples.push_back(inner(gb, fc, u).imag());
  }
  // Neville extrapolation to eps = 0
  std::vector<double> p = out.samples;
  const size_t n = eps.size();
  for (size_t m = 1; m < n; ++m)
    for (size_t i = 0; i + m < n; ++i)
      p[i] = (eps[i + m] * p[i] - eps[i] * p[i + 1]) / (eps[i + m] - eps[i]);
  out.value = p[0];
  return out;
}

// pointwise product of phi's formed in psi-representation, returned in u-representation
inline RField psi_product(const LinearSpectrum& s, std::initializer_list<int> idx) {
  RField out = RField::Ones(s.grid.N);
  const RField r = s.grid.radii();
  int cnt = 0;
  for (int k : idx) {
    out.array() *= s.phi.col(k).array();
    ++cnt;
  }
  return (out.array() / r.array().pow(cnt - 1)).matrix();
}

inline double quartic_integral(const LinearSpectrum& s, int k) {
  const RField r = s.grid.radii();
  return four_pi * s.grid.dr * (s.phi.col(k).array().pow(4) / r.array().square()).sum();
}

inline bool a2_inequalities(const Eigen::VectorXd& e) {
  return e.size() >= 3 && e[0] < 2 * e[1] && 2 * e[1] < 4 * e[2];
}

struct A3Violation {
  std::vector<int> k, l;
  double mismatch = 0.0;
};

// Exhaustive check of e_{k1}+..+e_{kj} != e_{l1}+..+e_{lj} for distinct multisets, j = 2..jmax.
// Returns the violations and the smallest relative mismatch seen.
inline std::pair<std::vector<A3Violation>, double> check_a3(const Eigen::VectorXd& e, int jmax = 3,
                                                            double tol = 1e-8) {
  const int n = static_cast<int>(e.size());
  std::vector<A3Violation> viol;
  double margin = std::numeric_limits<double>::infinity();
  const double scale = std::abs(e.minCoeff());
  for (int j = 2; j <= jmax; ++j) {
    std::vector<std::vector<int>> sets;
    std::vector<int> cur(j, 0);
    // nondecreasing index tuples = multisets
    std::function<void(int, int)> rec = [&](int pos, int start) {
      if (pos == j) {
        sets.push_back(cur);
        return;
      }
      for (int i = start; i < n; ++i) {
        cur[pos] = i;
        rec(pos + 1, i);
      }
    };
    rec(0, 0);
    for (size_t a = 0; a < sets.size(); ++a)
      for (size_t b = a + 1; b < sets.size(); ++b) {
        double sa = 0, sb = 0;
        for (int i : sets[a]) sa += e[i];
        for (int i : sets[b]) sb += e[i];
        const double d = std::abs(sa - sb) / scale;
        margin = std::min(margin, d);
        if (d < tol) viol.push_back({sets[a], sets[b], d});
      }
  }
  return {viol, margin};
}

struct AssumptionReport {
  bool a0_ok = false;
  int K = -1;
  bool a1_ok = false;
  bool zero_energy_regular = false;
  bool a2_inequalities_ok = false;
  double a2_margin = 0.0;  // min(2e1 - e0, 4e2 - 2e1) / |e0|
  double gamma0 = 0.0;
  double gamma0_plus = 0.0;
  std::array<int, 3> gamma0_argmin{};  // (m, k, l)
  double gamma0_s0 = 0.0;
  bool a3_ok = false;
  double a3_margin = 0.0;
  std::vector<A3Violation> a3_violations;
};

struct AssumptionOptions {
  double s0_fraction = 0.1;  // s0 = s0_fraction * min gap
  int s_samples = 21;
  double a3_tol = 1e-8;
};

// zero-energy solution u'' = V u, u(0)=0; regular when it keeps growing linearly past the well
inline bool zero_energy_regular(const LinearSpectrum& s) {
  const RadialGrid& g = s.grid;
  const double h2 = g.dr * g.dr;
  double um = 0.0, u = g.dr;
  std::vector<double> us(g.N);
  for (int i = 0; i < g.N; ++i) {
    us[i] = u;
    const double up = (2.0 + h2 * s.V[i]) * u - um;
    um = u;
    u = up;
  }
  const int i1 = g.N - 1, i0 = (3 * g.N) / 4;
  const double slope = (us[i1] - us[i0]) / (g.r(i1) - g.r(i0));
  return std::abs(slope) * g.r(i1) > 0.05 * std::abs(us[i1]);
}

inline AssumptionReport check_assumptions(const LinearSpectrum& s, const PotentialSpec& p,
                                          const AssumptionOptions& opt = {}) {
  AssumptionReport rep;
  rep.K = s.K;
  rep.a0_ok = s.K >= 0 && s.e.maxCoeff() < 0;
  for (int k = 1; k <= s.K; ++k) rep.a0_ok = rep.a0_ok && s.e[k] > s.e[k - 1];
  rep.zero_energy_regular = zero_energy_regular(s);
  rep.a1_ok = p.decays_fast() && rep.zero_energy_regular;
  if (s.K < 2) return rep;
  const auto& e = s.e;
  rep.a2_inequalities_ok = a2_inequalities(e);
  rep.a2_margin = std::min(2 * e[1] - e[0], 4 * e[2] - 2 * e[1]) / std::abs(e[0]);
  double gap = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= s.K; ++k) gap = std::min(gap, e[k] - e[k - 1]);
  const double s0 = opt.s0_fraction * gap;
  rep.gamma0_s0 = s0;
  auto sgrid = [&](int i) { return opt.s_samples == 1 ? 0.0 : -s0 + 2.0 * s0 * i / (opt.s_samples - 1); };
  rep.gamma0 = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= 1; ++m)
    for (int k = m + 1; k <= s.K; ++k) {
      const RField src = psi_product(s, {m, k, k});
      for (int l = m + 1; l <= s.K; ++l)
        for (int i = 0; i < opt.s_samples; ++i) {
          const double E = e[k] + e[l] - e[m] + sgrid(i);
          const double v = continuum_form(s, src, E).imag();
          if (v < rep.gamma0) {
            rep.gamma0 = v;
            rep.gamma0_argmin = {m, k, l};
          }
        }
    }
  rep.gamma0_plus = 0.0;
  for (int k = 0; k <= s.K; ++k)
    for (int l = 0; l <= s.K; ++l)
      for (int m = 0; m <= s.K; ++m) {
        const RField src = psi_product(s, {k, l, m});
        for (int i = 0; i < opt.s_samples; ++i) {
          const double E = e[l] + e[m] - e[k] + sgrid(i);
          if (E <= 0) continue;
          rep.gamma0_plus = std::max(rep.gamma0_plus, continuum_form(s, src, E).imag());
        }
      }
  auto [viol, margin] = check_a3(e, 3, opt.a3_tol);
  rep.a3_violations = viol;
  rep.a3_margin = margin;
  rep.a3_ok = viol.empty();
  return rep;
}

}  // namespace exlab
