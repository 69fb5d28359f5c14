#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "fit.hpp"
#include "linearized.hpp"
#include "propagator.hpp"
#include "spectrum.hpp"

namespace exlab {

// ---- Fermi Golden Rule table

struct FgrTable {
  int K = -1;
  int kappa = -1;
  std::vector<double> gamma;  // (a, b, l) row-major over 0..K
  double gamma0 = 0.0;
  double gamma0_plus = 0.0;

  int dim() const { return K + 1; }
  double operator()(int a, int b, int l) const { return gamma[index(a, b, l)]; }
  double& at(int a, int b, int l) { return gamma[index(a, b, l)]; }

 private:
  size_t index(int a, int b, int l) const {
    if (a < 0 || b < 0 || l < 0 || a > K || b > K || l > K) throw std::out_of_range("FgrTable index");
    return (static_cast<size_t>(a) * dim() + b) * dim() + l;
  }
};

// kappa^2 Im (phi_a phi_b phi_l, R(e_a + e_b - e_l + i0) P_c phi_a phi_b phi_l)
inline double fgr_gamma(int a, int b, int l, const LinearSpectrum& s, int kappa) {
  if (a < 0 || b < 0 || l < 0 || a > s.K || b > s.K || l > s.K)
    throw std::out_of_range("fgr_gamma: index outside 0..K");
  double E = s.e[a] + s.e[b] - s.e[l];
  // the source is orthogonal to phi_j, so a point exactly at e_j is moved off by a hair
  for (int j = 0; j <= s.K; ++j)
    if (std::abs(E - s.e[j]) < 1e-9 * std::abs(s.e[j])) E = s.e[j] * (1.0 + 1e-8);
  const double k2 = double(kappa) * double(kappa);
  return k2 * continuum_form(s, psi_product(s, {a, b, l}), E).imag();
}

inline FgrTable build_fgr_table(const LinearSpectrum& s, int kappa, const AssumptionReport& rep) {
  FgrTable t;
  t.K = s.K;
  t.kappa = kappa;
  t.gamma.assign(static_cast<size_t>(t.dim()) * t.dim() * t.dim(), 0.0);
  for (int a = 0; a <= s.K; ++a)
    for (int b = a; b <= s.K; ++b)
      for (int l = 0; l <= s.K; ++l) {
        const double v = fgr_gamma(a, b, l, s, kappa);
        t.at(a, b, l) = v;
        t.at(b, a, l) = v;
      }
  t.gamma0 = rep.gamma0;
  t.gamma0_plus = rep.gamma0_plus;
  return t;
}

inline FgrTable build_fgr_table(const LinearSpectrum& s, int kappa, const PotentialSpec& p,
                                const AssumptionOptions& opt = {}) {
  return build_fgr_table(s, kappa, check_assumptions(s, p, opt));
}

// Re d_ab^j = (2 - delta_ab) gamma_ab^j - 2 (2 - delta_jb) gamma_jb^a
struct DTable {
  int K = -1;
  std::vector<double> v;
  double operator()(int a, int b, int j) const {
    return v[(static_cast<size_t>(a) * (K + 1) + b) * (K + 1) + j];
  }
};

inline DTable coefficients_d(const FgrTable& g) {
  DTable d;
  d.K = g.K;
  d.v.resize(g.gamma.size());
  for (int a = 0; a <= g.K; ++a)
    for (int b = 0; b <= g.K; ++b)
      for (int j = 0; j <= g.K; ++j) {
        const double first = (a == b ? 1.0 : 2.0) * g(a, b, j);
        const double second = 2.0 * (j == b ? 1.0 : 2.0) * g(j, b, a);
        d.v[(static_cast<size_t>(a) * (g.K + 1) + b) * (g.K + 1) + j] = first - second;
      }
  return d;
}

// ---- excited-state normal form coefficients

struct NormalFormCoeffs {
  int m = 0;
  double n = 0.0;
  int K = -1;
  int kappa = -1;
  Eigen::MatrixXcd D;       // D_kl for k, l != m (Im part not determined, left 0)
  Eigen::MatrixXd B;        // B_kl for k, l > m
  Eigen::MatrixXd D_spread; // max |Re D_kl(s) - Re D_kl| over the energy window
  Eigen::VectorXd omega;    // -Im lambda_k
  DTable d_real;
  double c_m = 0.0;
  double c_max = 0.0;
  double D_bound = 0.0;
  Eigen::VectorXd b0;       // b_0k for k < m
  double b00_rate = 0.0;    // b0[0] when m > 0
};

struct CoeffOptions {
  double window = 1.0;  // energy window half-width, in units of n^2
  int window_samples = 3;
};

namespace detail {

// source Q phi_k phi_l in u-representation
inline RField q_source(const LSpectrum& ls, const RField& a, const RField& b) {
  const RField r = ls.grid().radii();
  return (ls.L.bs.Q.array() * a.array() * b.array() / r.array().square()).matrix();
}

// <(1,-i)F, (L - alpha)^{-1} P_c^sharp (iF, F)>, outgoing condition in the A channel.
// Discrete eigen-directions and the generalized kernel are resolved in closed form.
inline cd matrix_form(const LSpectrum& ls, const Field& F, cd alpha) {
  const RadialGrid& g = ls.grid();
  const MatrixOperatorL& L = ls.L;
  const Vec2 G(cd(0, 1) * F, F);
  const auto gc = ghost_coef(L, alpha);
  lapack::BandLU T = assemble_T(L, alpha, gc);
  T.factor();
  Vec2 X = deinterleave(T.solve(interleave(G)));
  for (const LMode& md : ls.modes) {
    const Vec2 Pb = conj(md.Phi);
    X = X - (md.c * pair(g, md.Phi, G) / (md.lambda - alpha)) * md.Phi;
    X = X - (std::conj(md.c) * pair(g, Pb, G) / (std::conj(md.lambda) - alpha)) * Pb;
  }
  const cd a = ls.c_m * four_pi * g.dr * ls.R.dot(G.f2);
  const cd b = ls.c_m * four_pi * g.dr * L.bs.Q.dot(G.f1);
  X = X - (-a / alpha + b / (alpha * alpha)) * ls.zero_Q();
  X = X - (-b / alpha) * ls.zero_R();
  X.tails.clear();
  return four_pi * g.dr * (F.conjugate().array() * (X.f1 + cd(0, 1) * X.f2).array()).sum();
}

}  // namespace detail

inline NormalFormCoeffs coefficients_D(const LSpectrum& ls, const FgrTable& fgr, const CoeffOptions& opt = {}) {
  const LinearSpectrum& s = ls.lin;
  if (fgr.K != s.K) throw std::invalid_argument("coefficients_D: table and spectrum disagree on K");
  const int K = s.K, m = ls.m;
  const double n = ls.n;
  const double E = ls.L.bs.E;
  const double k2 = double(ls.kappa) * double(ls.kappa);
  NormalFormCoeffs c;
  c.m = m;
  c.n = n;
  c.K = K;
  c.kappa = ls.kappa;
  c.D = Eigen::MatrixXcd::Zero(K + 1, K + 1);
  c.B = Eigen::MatrixXd::Zero(K + 1, K + 1);
  c.D_spread = Eigen::MatrixXd::Zero(K + 1, K + 1);
  c.omega = Eigen::VectorXd::Zero(K + 1);
  for (const LMode& md : ls.modes) c.omega[md.k] = -md.lambda.imag();
  c.d_real = coefficients_d(fgr);
  c.c_m = ls.c_m;

  for (int k = 0; k <= K; ++k) {
    if (k == m) continue;
    for (int l = 0; l <= K; ++l) {
      if (l == m) continue;
      const double C = 2.0 * k2 * (k == l ? 1.0 : 2.0);
      const RField F = detail::q_source(ls, s.phi.col(k), s.phi.col(l));
      auto re_D = [&](double shift) {
        double z = E + c.omega[k] + c.omega[l] + shift;
        for (int j = 0; j <= K; ++j)
          if (std::abs(z - s.e[j]) < 1e-9 * std::abs(s.e[j])) z = s.e[j] * (1.0 + 1e-8);
        return -C * continuum_form(s, F, z).imag();
      };
      const double val = re_D(0.0);
      c.D(k, l) = cd(val, 0.0);
      double spread = 0.0;
      for (int i = 0; i < opt.window_samples; ++i) {
        const double sh = opt.window_samples == 1
                              ? 0.0
                              : opt.window * n * n * (-1.0 + 2.0 * i / (opt.window_samples - 1));
        spread = std::max(spread, std::abs(re_D(sh) - val));
      }
      c.D_spread(k, l) = spread;

      if (k > m && l > m) {
        const LMode &mk = ls.mode(k), &ml = ls.mode(l);
        const Field Fm = (ls.L.bs.Q.cast<cd>().array() * mk.u_plus.array() * ml.u_plus.array() /
                          ls.grid().radii().cast<cd>().array().square())
                             .matrix();
        const cd alpha(0.0, -(c.omega[k] + c.omega[l]));
        const cd M = detail::matrix_form(ls, Fm, alpha);
        c.B(k, l) = -c.c_m * C / 4.0 * M.imag();
      }
    }
  }

  c.c_max = 0.0;
  for (int k = 0; k <= K; ++k) c.c_max = std::max(c.c_max, 2.0 * quartic_integral(s, k));
  c.D_bound = fgr.gamma0 > 0 ? 6.0 * K * c.c_max * fgr.gamma0_plus / fgr.gamma0
                             : std::numeric_limits<double>::infinity();

  c.b0 = Eigen::VectorXd::Zero(std::max(m, 0));
  const RField r = ls.grid().radii();
  for (int k = 0; k < m; ++k) {
    const LMode& md = ls.mode(k);
    double acc = 0.0;
    for (int i = 0; i < ls.grid().N; ++i) {
      const double Q = ls.L.bs.Q[i];
      acc += Q * Q * (std::conj(md.u_plus[i]) * md.u_minus[i]).imag() / (r[i] * r[i]);
    }
    c.b0[k] = 2.0 * ls.kappa * c.c_m * four_pi * ls.grid().dr * acc;
  }
  if (m > 0) c.b00_rate = c.b0[0];
  return c;
}

// ---- free Green's function G(r, t) of (H0 - z)^{-1} e^{-i t H0}, H0 = -Laplacian in R^3

struct GreensValue {
  cd value = 0.0;
  double error = 0.0;  // absolute estimate summed over the pieces
  bool converged = false;
};

namespace detail {

struct Accum {
  cd value = 0.0;
  double error = 0.0;
};

template <class F>
void segment(Accum& acc, F&& f, cd a, cd b, double tol) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const cd d = b - a;
  double er = 0, ei = 0;
  const double vr = GK::integrate([&](double u) { return (f(a + u * d) * d).real(); }, 0.0, 1.0, 30, tol, &er);
  const double vi = GK::integrate([&](double u) { return (f(a + u * d) * d).imag(); }, 0.0, 1.0, 30, tol, &ei);
  acc.value += cd(vr, vi);
  acc.error += std::hypot(er, ei);
}

}  // namespace detail

// The s-integral is split around the stationary point s* = Re r / (2 sqrt z) with window
// s*(1 +- mu), mu = min(1/200, r^{-1/2}). Below the window the contour dips into Im s < 0
// (inside |s| < s*, where e^{i r^2 / 4s} is damped); above it the ray s + i tau runs to
// infinity, integrated by double-exponential quadrature.
inline GreensValue greens_free(double r, double t, cd z, double rtol = 1e-10) {
  if (!(r > 0.0)) throw std::invalid_argument("greens_free: needs r > 0");
  if (t < 0.0) throw std::invalid_argument("greens_free: needs t >= 0");
  if (!(z.real() > 0.0) || z.imag() < 0.0) throw std::invalid_argument("greens_free: needs Re z > 0, Im z >= 0");
  const double a = 0.25 * r * r;
  const cd I(0, 1);
  auto f = [&](cd s) { return std::exp(I * ((s - t) * z + a / s)) * std::pow(s, -1.5); };
  const double ss = (r / (2.0 * std::sqrt(z))).real();
  const double mu = std::min(1.0 / 200.0, 1.0 / std::sqrt(r));
  const double s1 = ss * (1.0 - mu), s2 = ss * (1.0 + mu);
  detail::Accum acc;
  if (t < s1) {
    const double Y = std::min(0.9 * std::sqrt(ss * ss - s1 * s1), 0.5 * ss);
    // near s = t the damping scale is t^2 / a, which can be tiny next to Y
    const double h = std::min(Y, 80.0 * t * t / a);
    if (h > 0.0) detail::segment(acc, f, t, cd(t, -h), rtol);
    if (h < Y) {
      // the rest of the leg is skipped when its sampled envelope is far below the tolerance
      double env = h > 0.0 ? 0.0 : INFINITY;
      for (int i = 0; h > 0.0 && i <= 400; ++i) {
        const double y = h * std::pow(Y / h, i / 400.0);
        env = std::max(env, std::exp(-a * y / (t * t + y * y) + y * z.real()) * std::pow(std::hypot(t, y), -1.5));
      }
      if (env * Y <= 1e-3 * rtol * std::abs(acc.value))
        acc.error += env * Y;
      else
        detail::segment(acc, f, cd(t, -h), cd(t, -Y), rtol);
    }
    detail::segment(acc, f, cd(t, -Y), cd(s1, -Y), rtol);
    detail::segment(acc, f, cd(s1, -Y), s1, rtol);
  }
  if (t < s2) detail::segment(acc, f, std::max(t, s1), s2, rtol);
  const double sb = std::max(t, s2);
  boost::math::quadrature::exp_sinh<double> es;
  double er = 0, ei = 0, l1 = 0;
  const double vr = es.integrate([&](double tau) { return (f(cd(sb, tau)) * I).real(); }, rtol, &er, &l1);
  const double vi = es.integrate([&](double tau) { return (f(cd(sb, tau)) * I).imag(); }, rtol, &ei, &l1);
  acc.value += cd(vr, vi);
  acc.error += std::hypot(er, ei);
  const cd pref = 1.0 / (8.0 * std::pow(pi, 1.5) * std::sqrt(I));
  GreensValue out;
  out.value = pref * acc.value;
  out.error = std::abs(pref) * acc.error;
  out.converged = std::isfinite(out.value.real()) && std::isfinite(out.value.imag()) &&
                  out.error <= std::max(rtol * std::abs(out.value), 1e-15);
  return out;
}

// ---- decay of n^2 (H - z)^{-1} e^{-itH} P_c g

struct ResonantDecayResult {
  double p = 2.0;
  double m_expected = 0.0;  // 1/2 - 3/(2p)
  double alpha = 0.0, alpha_err = 0.0;
  double beta = std::numeric_limits<double>::quiet_NaN(), beta_err = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> ts, norms;
  std::vector<cd> origin;  // psi(0, t)
};

inline double decay_exponent_m(double p) { return 0.5 - (std::isinf(p) ? 0.0 : 1.5 / p); }

// Fits log|phi| = c - alpha log t - beta log(1 + t). beta is only fitted when the grid
// reaches t > 1 on at least three samples; otherwise the single-exponent fit is returned.
inline ResonantDecayResult resonant_decay_check(const RField& V, const RadialGrid& g, cd z, const Field& g0,
                                                double p, const std::vector<double>& t_grid, double n = 1.0) {
  detail::check_size(g, g0.size());
  detail::check_size(g, V.size());
  if (t_grid.size() < 3) throw std::invalid_argument("resonant_decay_check: need >= 3 times");
  for (size_t i = 0; i < t_grid.size(); ++i)
    if (!(t_grid[i] > 0.0) || (i > 0 && t_grid[i] <= t_grid[i - 1]))
      throw std::invalid_argument("resonant_decay_check: times must be positive and increasing");
  Field f = g0;
  try {
    const LinearSpectrum s = solve_spectrum(V, g);
    f = project_continuous(s, f);
  } catch (const NoBoundStates&) {
  }
  ResonantDecayResult out;
  out.p = p;
  out.m_expected = decay_exponent_m(p);
  double tprev = 0.0;
  for (double t : t_grid) {
    f = ChebyshevExp(V, g, t - tprev).apply(f);
    tprev = t;
    const Field phi = (n * n) * resolvent_tbc(V, g, z, f);
    if (!phi.allFinite()) throw std::runtime_error("resonant_decay_check: propagation failed");
    out.ts.push_back(t);
    out.norms.push_back(norm(g, phi, NormKind::lp(p)));
    out.origin.push_back(psi_at_origin(g, phi));
  }
  int late = 0;
  for (double t : out.ts) late += t > 1.0;
  if (late >= 3 && late + 3 <= static_cast<int>(out.ts.size())) {
    Eigen::MatrixXd A(out.ts.size(), 3);
    Eigen::VectorXd y(out.ts.size());
    for (size_t i = 0; i < out.ts.size(); ++i) {
      A(i, 0) = 1.0;
      A(i, 1) = -std::log(out.ts[i]);
      A(i, 2) = -std::log1p(out.ts[i]);
      y[i] = std::log(out.norms[i]);
    }
    const Eigen::Vector3d c = A.colPivHouseholderQr().solve(y);
    const double dof = std::max<double>(1.0, double(out.ts.size()) - 3.0);
    const double s2 = (A * c - y).squaredNorm() / dof;
    const Eigen::Matrix3d cov = s2 * (A.transpose() * A).inverse();
    out.alpha = c[1];
    out.beta = c[2];
    out.alpha_err = std::sqrt(cov(1, 1));
    out.beta_err = std::sqrt(cov(2, 2));
  } else {
    const LinearFit lf = loglog_fit(out.ts, out.norms);
    out.alpha = -lf.slope;
    out.alpha_err = lf.slope_err;
  }
  return out;
}

// ---- JSON views

inline nlohmann::json to_json(const FgrTable& t) {
  nlohmann::json j;
  j["K"] = t.K;
  j["kappa"] = t.kappa;
  j["gamma0"] = t.gamma0;
  j["gamma0_plus"] = t.gamma0_plus;
  j["gamma"] = nlohmann::json::array();
  for (int a = 0; a <= t.K; ++a)
    for (int b = 0; b <= t.K; ++b)
      for (int l = 0; l <= t.K; ++l) j["gamma"].push_back({{"a", a}, {"b", b}, {"l", l}, {"value", t(a, b, l)}});
  return j;
}

inline nlohmann::json to_json(const NormalFormCoeffs& c) {
  nlohmann::json j;
  j["m"] = c.m;
  j["n"] = c.n;
  j["K"] = c.K;
  j["kappa"] = c.kappa;
  j["c_m"] = c.c_m;
  j["c_max"] = c.c_max;
  j["D_bound"] = c.D_bound;
  j["b00_rate"] = c.b00_rate;
  j["D"] = nlohmann::json::array();
  j["B"] = nlohmann::json::array();
  for (int k = 0; k <= c.K; ++k)
    for (int l = 0; l <= c.K; ++l) {
      if (k != c.m && l != c.m)
        j["D"].push_back({{"k", k}, {"l", l}, {"re", c.D(k, l).real()}, {"im", c.D(k, l).imag()},
                          {"window_spread", c.D_spread(k, l)}});
      if (k > c.m && l > c.m) j["B"].push_back({{"k", k}, {"l", l}, {"value", c.B(k, l)}});
    }
  j["b0"] = nlohmann::json::array();
  for (Eigen::Index k = 0; k < c.b0.size(); ++k) j["b0"].push_back({{"k", k}, {"value", c.b0[k]}});
  j["d_real"] = nlohmann::json::array();
  for (int a = 0; a <= c.K; ++a)
    for (int b = 0; b <= c.K; ++b)
      for (int jj = 0; jj <= c.K; ++jj)
        j["d_real"].push_back({{"a", a}, {"b", b}, {"j", jj}, {"value", c.d_real(a, b, jj)}});
  return j;
}

}  // namespace exlab
