#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "resonance.hpp"

namespace exlab {

struct NfOptions {
  double rtol = 1e-10;
  double atol = 1e-14;
  double dt0 = 1e-3;
  double min_dt = 1e-12;  // below this the step size has collapsed
  double amplitude_guard = 1.0;
};

struct NfFailure : std::runtime_error {
  double t;
  NfFailure(const std::string& what, double t_) : std::runtime_error(what + " at t=" + std::to_string(t_)), t(t_) {}
};

namespace detail {

using State = std::vector<double>;

// Adaptive Dormand-Prince with an observer on every accepted step.
template <class Rhs, class Obs>
void integrate_dopri(Rhs&& rhs, State& x, double t0, double t1, const NfOptions& opt, Obs&& obs) {
  namespace ode = boost::numeric::odeint;
  auto stepper = ode::make_controlled(opt.atol, opt.rtol, ode::runge_kutta_dopri5<State>());
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  double t = t0, dt = dir * std::min(opt.dt0, std::abs(t1 - t0));
  obs(x, t);
  while (dir * (t1 - t) > 0) {
    if (dir * (t + dt - t1) > 0) dt = t1 - t;
    int tries = 0;
    while (stepper.try_step(rhs, x, t, dt) == ode::fail) {
      if (std::abs(dt) < opt.min_dt || ++tries > 500) throw NfFailure("step-size collapse", t);
    }
    for (double v : x)
      if (!std::isfinite(v)) throw NfFailure("non-finite state", t);
    obs(x, t);
  }
}

}  // namespace detail

// ---- excited-state normal form, rotating frame

struct ExcitedNfState {
  std::vector<cd> q;  // index k = 0..K, entry m unused
  double b = 0.0;
  double t = 0.0;
};

struct ExcitedNfForcing {
  std::function<std::vector<cd>(double, const ExcitedNfState&)> g;  // g_k(t)
  std::function<double(double, const ExcitedNfState&)> g_b;
};

inline std::vector<double> real_parts(const LSpectrum& ls) {
  std::vector<double> re(ls.lin.K + 1, 0.0);
  for (const LMode& md : ls.modes) re[md.k] = md.lambda.real();
  return re;
}

// q_k' = Re(lambda_k) q_k + sum_{l>m} D_kl |q_l|^2 q_k + g_k,
// b'   = sum_{k<m} b_0k |q_k|^2 + sum_{k,l>m} B_kl |q_k|^2 |q_l|^2 + g_b
inline std::vector<ExcitedNfState> integrate_excited_nf(const NormalFormCoeffs& c, const std::vector<double>& re_lambda,
                                                        const std::vector<cd>& q0, double b0, double T,
                                                        const ExcitedNfForcing& forcing = {},
                                                        const NfOptions& opt = {}) {
  const int K = c.K, m = c.m;
  if (static_cast<int>(q0.size()) != K + 1 || static_cast<int>(re_lambda.size()) != K + 1)
    throw std::invalid_argument("integrate_excited_nf: q0 and re_lambda need K+1 entries");
  auto unpack = [&](const detail::State& x, double t) {
    ExcitedNfState s;
    s.q.assign(K + 1, cd(0.0));
    for (int k = 0; k <= K; ++k)
      if (k != m) s.q[k] = cd(x[2 * k], x[2 * k + 1]);
    s.b = x[2 * (K + 1)];
    s.t = t;
    return s;
  };
  auto rhs = [&](const detail::State& x, detail::State& dx, double t) {
    const ExcitedNfState s = unpack(x, t);
    dx.assign(x.size(), 0.0);
    std::vector<cd> g;
    if (forcing.g) g = forcing.g(t, s);
    double db = forcing.g_b ? forcing.g_b(t, s) : 0.0;
    for (int k = 0; k <= K; ++k) {
      if (k == m) continue;
      cd rate = re_lambda[k];
      for (int l = m + 1; l <= K; ++l) rate += c.D(k, l) * std::norm(s.q[l]);
      cd dq = rate * s.q[k];
      if (!g.empty()) dq += g[k];
      dx[2 * k] = dq.real();
      dx[2 * k + 1] = dq.imag();
      if (k < m) db += c.b0[k] * std::norm(s.q[k]);
    }
    for (int k = m + 1; k <= K; ++k)
      for (int l = m + 1; l <= K; ++l) db += c.B(k, l) * std::norm(s.q[k]) * std::norm(s.q[l]);
    dx[2 * (K + 1)] = db;
  };
  detail::State x(2 * (K + 1) + 1, 0.0);
  for (int k = 0; k <= K; ++k)
    if (k != m) {
      x[2 * k] = q0[k].real();
      x[2 * k + 1] = q0[k].imag();
    }
  x[2 * (K + 1)] = b0;
  std::vector<ExcitedNfState> traj;
  detail::integrate_dopri(rhs, x, 0.0, T, opt, [&](const detail::State& y, double t) {
    ExcitedNfState s = unpack(y, t);
    for (int k = 0; k <= K; ++k)
      if (std::abs(s.q[k]) >= opt.amplitude_guard) throw NfFailure("amplitude guard breach", t);
    traj.push_back(std::move(s));
  });
  return traj;
}

// ---- orthogonal-coordinate mu system

struct MuSystemState {
  std::vector<cd> mu;
  std::vector<double> f;  // |mu_j|^2
  double t = 0.0;
};

struct MuCoefficients {
  DTable d_real;
  std::vector<double> d_imag;  // same layout as d_real, default 0
  std::vector<double> c_imag;  // c_l^j at (j, l) row-major, default 0
};

inline MuCoefficients mu_coefficients(const DTable& d) {
  MuCoefficients c;
  c.d_real = d;
  c.d_imag.assign(d.v.size(), 0.0);
  c.c_imag.assign(static_cast<size_t>(d.K + 1) * (d.K + 1), 0.0);
  return c;
}

using MuForcing = std::function<std::vector<cd>(double, const std::vector<cd>&)>;

namespace detail {

inline std::vector<cd> mu_rhs(const MuCoefficients& c, const std::vector<cd>& mu, const std::vector<cd>* g) {
  const int K = c.d_real.K;
  std::vector<double> f(K + 1);
  for (int j = 0; j <= K; ++j) f[j] = std::norm(mu[j]);
  std::vector<cd> out(K + 1);
  for (int j = 0; j <= K; ++j) {
    cd rate = 0.0;
    for (int l = 0; l <= K; ++l) rate += cd(0, c.c_imag[static_cast<size_t>(j) * (K + 1) + l]) * f[l];
    for (int a = 0; a <= K; ++a)
      for (int b = 0; b <= K; ++b) {
        const size_t idx = (static_cast<size_t>(a) * (K + 1) + b) * (K + 1) + j;
        rate += cd(c.d_real.v[idx], c.d_imag[idx]) * f[a] * f[b];
      }
    out[j] = rate * mu[j];
    if (g) out[j] += (*g)[j];
  }
  return out;
}

}  // namespace detail

inline MuSystemState make_mu_state(const std::vector<cd>& mu, double t) {
  MuSystemState s;
  s.mu = mu;
  s.t = t;
  for (const cd& v : mu) s.f.push_back(std::norm(v));
  return s;
}

// mu_j' = sum_l c_l^j |mu_l|^2 mu_j + sum_ab d_ab^j |mu_a|^2 |mu_b|^2 mu_j + g_j
inline std::vector<MuSystemState> integrate_mu_system(const MuCoefficients& c, const std::vector<cd>& mu0, double T,
                                                      const MuForcing& forcing = {}, const NfOptions& opt = {}) {
  const int K = c.d_real.K;
  if (static_cast<int>(mu0.size()) != K + 1) throw std::invalid_argument("integrate_mu_system: mu0 needs K+1 entries");
  auto to_mu = [&](const detail::State& x) {
    std::vector<cd> mu(K + 1);
    for (int j = 0; j <= K; ++j) mu[j] = cd(x[2 * j], x[2 * j + 1]);
    return mu;
  };
  auto rhs = [&](const detail::State& x, detail::State& dx, double t) {
    const std::vector<cd> mu = to_mu(x);
    std::vector<cd> g;
    if (forcing) g = forcing(t, mu);
    const std::vector<cd> d = detail::mu_rhs(c, mu, forcing ? &g : nullptr);
    dx.resize(x.size());
    for (int j = 0; j <= K; ++j) {
      dx[2 * j] = d[j].real();
      dx[2 * j + 1] = d[j].imag();
    }
  };
  detail::State x(2 * (K + 1));
  for (int j = 0; j <= K; ++j) {
    x[2 * j] = mu0[j].real();
    x[2 * j + 1] = mu0[j].imag();
  }
  std::vector<MuSystemState> traj;
  detail::integrate_dopri(rhs, x, 0.0, T, opt, [&](const detail::State& y, double t) {
    const std::vector<cd> mu = to_mu(y);
    for (const cd& v : mu)
      if (std::abs(v) >= opt.amplitude_guard) throw NfFailure("amplitude guard breach", t);
    traj.push_back(make_mu_state(mu, t));
  });
  return traj;
}

// f_j' = 2 sum_ab Re d_ab^j f_a f_b f_j + 2 Re(conj(mu_j) g_j), exact along the flow
inline std::vector<double> f_rates(const MuCoefficients& c, const std::vector<cd>& mu, const std::vector<cd>* g = nullptr) {
  const std::vector<cd> d = detail::mu_rhs(c, mu, g);
  std::vector<double> out(mu.size());
  for (size_t j = 0; j < mu.size(); ++j) out[j] = 2.0 * (std::conj(mu[j]) * d[j]).real();
  return out;
}

struct LyapunovReport {
  double gamma = 0.0;
  double ground_margin = INFINITY;   // min of f0' - 2 gamma f^2 f0
  double excited_margin = INFINITY;  // min of -(f' + 4 gamma f0 f^2)
  double monotone_margin = INFINITY; // min of -(f0 + f)'
  double h_max_rate = -INFINITY;     // max of h' with h = sum_l 2^{-l} f_l, diagnostic
  bool ok(double tol) const { return ground_margin >= -tol && excited_margin >= -tol; }
};

// gamma = min over a, b >= 1 of gamma_ab^0
inline double lyapunov_gamma(const FgrTable& t) {
  double g = INFINITY;
  for (int a = 1; a <= t.K; ++a)
    for (int b = 1; b <= t.K; ++b) g = std::min(g, t(a, b, 0));
  return g;
}

inline LyapunovReport lyapunov_check(const std::vector<MuSystemState>& traj, const MuCoefficients& c, double gamma) {
  LyapunovReport rep;
  rep.gamma = gamma;
  for (const MuSystemState& s : traj) {
    const std::vector<double> df = f_rates(c, s.mu);
    double f = 0, dfsum = 0, h = 0;
    for (size_t l = 1; l < s.f.size(); ++l) {
      f += s.f[l];
      dfsum += df[l];
      h += std::ldexp(df[l], -static_cast<int>(l));
    }
    const double f0 = s.f[0];
    rep.ground_margin = std::min(rep.ground_margin, df[0] - 2 * gamma * f * f * f0);
    rep.excited_margin = std::min(rep.excited_margin, -(dfsum + 4 * gamma * f0 * f * f));
    rep.monotone_margin = std::min(rep.monotone_margin, -(df[0] + dfsum));
    rep.h_max_rate = std::max(rep.h_max_rate, h);
  }
  return rep;
}

// ---- regime events

struct EventParams {
  double n = 0.0;
  double delta = 0.1;
  std::optional<double> rho0;  // defaults to n^{1+delta}
  double eps4 = 0.1;
  double gamma0 = 0.0;
  double jump_tol = 4.0;  // max ratio of consecutive samples at a crossing

  double rho0_value() const { return rho0 ? *rho0 : std::pow(n, 1.0 + delta); }
  double delta_t() const { return 1.0 / std::pow(n * rho0_value(), 2); }
  double rho(double t) const { return std::pow(delta_t() + gamma0 * t, -0.5) / n; }
  double tc_threshold(double t) const { return eps4 / n * std::pow(rho(t), 2); }
};

struct EventTimes {
  std::optional<double> t_c, t_o, t_i;
  EventParams params;
};

struct SeriesTooCoarse : std::runtime_error {
  explicit SeriesTooCoarse(const std::string& w) : std::runtime_error(w) {}
};

namespace detail {

// first index range [i-1, i] where pred flips from false to true, linear interpolation of
// the crossing of y - thr
inline std::optional<double> first_crossing(const std::vector<double>& t, const std::vector<double>& y,
                                            const std::function<double(double)>& thr, bool upward, size_t start,
                                            double jump_tol, const char* name) {
  auto above = [&](size_t i) { return upward ? y[i] > thr(t[i]) : y[i] <= thr(t[i]); };
  if (start < t.size() && above(start)) return t[start];
  for (size_t i = start + 1; i < t.size(); ++i) {
    if (!above(i)) continue;
    const double a = y[i - 1], b = y[i];
    const double lo = std::min(std::abs(a), std::abs(b)), hi = std::max(std::abs(a), std::abs(b));
    if (lo > 0 && hi / lo > jump_tol) throw SeriesTooCoarse(std::string("detect_events: ") + name + " jumps across its threshold");
    const double da = a - thr(t[i - 1]), db = b - thr(t[i]);
    const double s = da == db ? 1.0 : da / (da - db);
    return t[i - 1] + s * (t[i] - t[i - 1]);
  }
  return std::nullopt;
}

inline size_t index_at(const std::vector<double>& t, double x) {
  size_t i = 0;
  while (i + 1 < t.size() && t[i + 1] <= x) ++i;
  return i;
}

}  // namespace detail

inline EventTimes detect_events(const std::vector<double>& t, const std::vector<double>& z0,
                                const std::vector<double>& zL, const std::vector<double>& f, const EventParams& p) {
  if (t.size() != z0.size() || t.size() != zL.size() || t.size() != f.size())
    throw std::invalid_argument("detect_events: series lengths differ");
  if (!(p.n > 0)) throw std::invalid_argument("detect_events: needs n > 0");
  EventTimes ev;
  ev.params = p;
  if (t.empty()) return ev;
  const double rho0 = p.rho0_value();
  ev.t_c = detail::first_crossing(t, z0, [&](double s) { return p.tc_threshold(s); }, true, 0, p.jump_tol, "z0");
  if (!ev.t_c) return ev;
  ev.t_o = detail::first_crossing(t, zL, [&](double) { return 2.0 * rho0; }, true, detail::index_at(t, *ev.t_c),
                                  p.jump_tol, "zL");
  if (ev.t_o && *ev.t_o < *ev.t_c) ev.t_o = ev.t_c;
  if (!ev.t_o) return ev;
  ev.t_i = detail::first_crossing(t, f, [&](double) { return rho0 * rho0; }, false, detail::index_at(t, *ev.t_o),
                                  p.jump_tol, "f");
  if (ev.t_i && *ev.t_i < *ev.t_o) ev.t_i = ev.t_o;
  return ev;
}

}  // namespace exlab
