#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fit.hpp"
#include "linearized.hpp"
#include "nf_ode.hpp"
#include "propagator.hpp"

namespace exlab {

// ---- propagation

struct PropagatorConfig {
  double dt = 0.005;
  bool absorbing = true;
  double absorb_strength = 4.0;
  int conservation_check_stride = 0;  // 0: off
};

struct NlsFailure : std::runtime_error {
  double t;
  NlsFailure(const std::string& what, double t_) : std::runtime_error(what + " at t=" + std::to_string(t_)), t(t_) {}
};

inline double mass(const RadialGrid& g, const Field& u) { return four_pi * g.dr * u.squaredNorm(); }

// int 1/2 |grad psi|^2 + 1/2 V |psi|^2 + 1/4 kappa |psi|^4, discrete H0 quadratic form
inline double energy(const RadialGrid& g, const RField& V, int kappa, const Field& u) {
  const double h2 = 1.0 / (g.dr * g.dr);
  double quad = 0.0, quart = 0.0;
  for (int i = 0; i < g.N; ++i) {
    const cd next = i + 1 < g.N ? u[i + 1] : cd(0.0);
    quad += std::norm(next - u[i]) * h2 + V[i] * std::norm(u[i]);
    const double r = g.r(i);
    quart += std::norm(u[i]) * std::norm(u[i]) / (r * r);
  }
  quad += std::norm(u[0]) * h2;
  return four_pi * g.dr * (0.5 * quad + 0.25 * kappa * quart);
}

// Strang splitting: half nonlinear phase (with absorption), exact linear step, half nonlinear.
class NlsPropagator {
 public:
  NlsPropagator(const RField& V, const RadialGrid& g, int kappa, const PropagatorConfig& cfg)
      : g_(g), V_(V), kappa_(kappa), cfg_(cfg), lin_(V, g, cfg.dt) {
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("NlsPropagator: dt must be positive");
    detail::check_size(g, V.size());
    const RField W = cfg.absorbing ? absorbing_profile(g, cfg.absorb_strength) : RField::Zero(g.N);
    damp_ = (-0.5 * cfg.dt * W.array()).exp().matrix();
    inv_r2_.resize(g.N);
    for (int i = 0; i < g.N; ++i) inv_r2_[i] = 1.0 / (g.r(i) * g.r(i));
  }

  const PropagatorConfig& config() const { return cfg_; }
  int phase_warnings() const { return phase_warnings_; }
  double max_phase() const { return max_phase_; }
  std::vector<std::pair<double, double>> mass_log() const { return mass_log_; }

  void advance(Field& u, double T) {
    detail::check_size(g_, u.size());
    const long steps = std::lround(T / cfg_.dt);
    if (std::abs(steps * cfg_.dt - T) > 1e-9 * std::max(1.0, T))
      throw std::invalid_argument("NlsPropagator: T must be a multiple of dt");
    for (long j = 0; j < steps; ++j) {
      step(u, 0.5 * cfg_.dt);
      ++count_;
      if (cfg_.conservation_check_stride > 0 && count_ % cfg_.conservation_check_stride == 0)
        mass_log_.push_back({count_ * cfg_.dt, mass(g_, u)});
    }
    if (!u.allFinite()) throw NlsFailure("non-finite field", count_ * cfg_.dt);
  }

 private:
  void half(Field& u, double tau) {
    double worst = 0.0;
    for (int i = 0; i < g_.N; ++i) {
      const double ph = tau * kappa_ * std::norm(u[i]) * inv_r2_[i];
      worst = std::max(worst, std::abs(ph));
      u[i] *= std::polar(damp_[i], -ph);
    }
    max_phase_ = std::max(max_phase_, worst);
    if (2.0 * worst > pi / 4) ++phase_warnings_;
  }

  void step(Field& u, double tau) {
    half(u, tau);
    u = lin_.apply(u);
    half(u, tau);
  }

  RadialGrid g_;
  RField V_;
  int kappa_;
  PropagatorConfig cfg_;
  ChebyshevExp lin_;
  RField damp_, inv_r2_;
  long count_ = 0;
  int phase_warnings_ = 0;
  double max_phase_ = 0.0;
  std::vector<std::pair<double, double>> mass_log_;
};

inline Field propagate(const Field& psi0, const RField& V, const RadialGrid& g, int kappa, double T,
                       const PropagatorConfig& cfg) {
  if (!psi0.allFinite()) throw std::invalid_argument("propagate: non-finite initial data");
  NlsPropagator p(V, g, kappa, cfg);
  Field u = psi0;
  p.advance(u, T);
  return u;
}

// ---- orthogonal coordinates

struct OrthoCoords {
  std::vector<cd> x;  // (phi_j, psi)
  Field xi;           // P_c psi
};

inline OrthoCoords decompose_orthogonal(const Field& psi, const LinearSpectrum& s) {
  detail::check_size(s.grid, psi.size());
  OrthoCoords c;
  c.xi = psi;
  for (int j = 0; j <= s.K; ++j) {
    const cd x = four_pi * s.grid.dr * s.phi.col(j).dot(psi);
    c.x.push_back(x);
    c.xi -= x * s.phi.col(j);
  }
  return c;
}

// ---- linearized coordinates

// Linearized spectra on a geometric n lattice, bound states solved exactly.
class LSpectrumCache {
 public:
  LSpectrumCache(const LinearSpectrum& s, int m, int kappa, double rel_step = 0.005)
      : s_(s), m_(m), kappa_(kappa), step_(std::log1p(rel_step)) {}

  const LinearSpectrum& linear() const { return s_; }
  int m() const { return m_; }
  int kappa() const { return kappa_; }

  const LSpectrum& at(double n) {
    if (!(n > 0.0)) throw std::invalid_argument("LSpectrumCache: needs n > 0");
    const long key = std::lround(std::log(n) / step_);
    auto it = spectra_.find(key);
    if (it == spectra_.end()) {
      const BoundState bs = bound(std::exp(key * step_));
      it = spectra_.emplace(key, spectral_decomposition(build_L(s_, bs), s_)).first;
    }
    return it->second;
  }

  BoundState bound(double n) {
    std::optional<BoundState> warm;
    if (last_) warm = last_;
    try {
      last_ = solve_bound_state(m_, n, kappa_, s_, warm);
    } catch (const NewtonFailure&) {
      last_ = solve_bound_state(m_, n, kappa_, s_);
    }
    return *last_;
  }

 private:
  LinearSpectrum s_;
  int m_, kappa_;
  double step_;
  std::map<long, LSpectrum> spectra_;
  std::optional<BoundState> last_;
};

struct LinearizedCoords {
  double n_best = 0.0;
  double theta = 0.0;
  double a = 0.0;
  std::vector<cd> z;  // entry m unused
  Field eta;
  Field h;
  int m = 0;
  double E = 0.0;
  int iterations = 0;
};

struct NeighborhoodViolation : std::runtime_error {
  explicit NeighborhoodViolation(const std::string& w) : std::runtime_error(w) {}
};

struct DecompositionFailure : std::runtime_error {
  double residual;
  DecompositionFailure(const std::string& w, double res)
      : std::runtime_error(w + " (|a|=" + std::to_string(res) + ")"), residual(res) {}
};

struct LinearizedOptions {
  double eps3 = 0.2;
  double tol = 1e-12;  // on |a| / n^2
  int max_iter = 40;
};

// ||psi - x_m phi_m|| <= eps3 |x_m|
inline bool in_neighborhood(const Field& psi, const LinearSpectrum& s, int m, double eps3, cd* xm = nullptr) {
  const cd x = four_pi * s.grid.dr * s.phi.col(m).dot(psi);
  if (xm) *xm = x;
  const Field rest = psi - x * s.phi.col(m);
  return norm(s.grid, rest, NormKind::l2()) <= eps3 * std::abs(x);
}

namespace detail {

struct Frozen {
  BoundState bs;
  RField R;
  double c_m = 0.0;
  double theta = 0.0;
  double a = 0.0;
};

// psi e^{-i theta} = Q + a R + h with P_m h = 0 at fixed n
inline Frozen decompose_frozen(const Field& psi, LSpectrumCache& cache, double n) {
  const RadialGrid& g = cache.linear().grid;
  Frozen f;
  f.bs = cache.bound(n);
  f.R = tangent_R(cache.linear(), f.bs);
  f.c_m = 1.0 / integral(g, f.bs.Q, f.R);
  const double w = four_pi * g.dr;
  const cd p = w * f.R.dot(psi);  // (R, Re psi) + i (R, Im psi)
  f.theta = std::arg(f.c_m < 0 ? -p : p);  // psi ~ Q e^{i theta} gives p ~ (R, Q) e^{i theta}
  const Field rot = psi * std::exp(cd(0, -f.theta));
  f.a = f.c_m * (w * f.bs.Q.dot(rot.real()) - w * f.bs.Q.squaredNorm());
  return f;
}

}  // namespace detail

// Decomposition at a given n (a free) when frozen_n is set, otherwise the best n with a = 0.
inline LinearizedCoords decompose_linearized(const Field& psi, int m, LSpectrumCache& cache,
                                             const LinearizedOptions& opt = {},
                                             std::optional<double> frozen_n = std::nullopt) {
  const LinearSpectrum& s = cache.linear();
  if (cache.m() != m) throw std::invalid_argument("decompose_linearized: cache built for another m");
  cd xm;
  if (!in_neighborhood(psi, s, m, opt.eps3, &xm))
    throw NeighborhoodViolation("decompose_linearized: psi is outside the neighborhood of mode " + std::to_string(m));
  LinearizedCoords out;
  out.m = m;
  detail::Frozen fr;
  if (frozen_n) {
    fr = detail::decompose_frozen(psi, cache, *frozen_n);
  } else {
    // secant on a(n) = 0, first step from a ~ 2 C n (n(psi) - n)
    double n0 = std::abs(xm);
    detail::Frozen f0 = detail::decompose_frozen(psi, cache, n0);
    const double C = cache.kappa() * quartic_integral(s, m);
    double n1 = n0 + f0.a / (2.0 * C * n0);
    if (!(n1 > 0.0) || std::abs(n1 - n0) > 0.5 * n0) n1 = n0 * (1.0 + 1e-3);
    detail::Frozen f1 = detail::decompose_frozen(psi, cache, n1);
    int it = 0;
    while (std::abs(f1.a) > opt.tol * n1 * n1) {
      if (++it > opt.max_iter || f1.a == f0.a) throw DecompositionFailure("decompose_linearized: no convergence", f1.a);
      double n2 = n1 - f1.a * (n1 - n0) / (f1.a - f0.a);
      if (!(n2 > 0.0)) n2 = 0.5 * n1;
      n0 = n1;
      f0 = std::move(f1);
      n1 = n2;
      f1 = detail::decompose_frozen(psi, cache, n1);
    }
    out.iterations = it;
    fr = std::move(f1);
  }
  out.n_best = fr.bs.n;
  out.E = fr.bs.E;
  out.theta = fr.theta;
  out.a = fr.a;
  const Field rot = psi * std::exp(cd(0, -fr.theta));
  out.h = rot - fr.bs.Q.cast<cd>() - out.a * fr.R.cast<cd>();
  const LSpectrum& ls = cache.at(out.n_best);
  out.z = scalar_project_coefficients(ls, out.h);
  out.eta = out.h;
  for (const LMode& md : ls.modes) out.eta -= zeta_field(ls, md.k, out.z[md.k]);
  return out;
}

inline Field reconstruct(const LinearizedCoords& c, LSpectrumCache& cache) {
  const BoundState bs = cache.bound(c.n_best);
  Field u = bs.Q.cast<cd>() + c.a * tangent_R(cache.linear(), bs).cast<cd>() + c.eta;
  const LSpectrum& ls = cache.at(c.n_best);
  for (const LMode& md : ls.modes) u += zeta_field(ls, md.k, c.z[md.k]);
  return u * std::exp(cd(0, c.theta));
}

// ---- scenarios

struct ScenarioConfig {
  double n = 1.0;
  int m = 1;
  std::vector<cd> seeds;  // z_k of the initial zeta, k = 0..K (entry m ignored)
  double T = 100.0;
  double sample_dt = 0.5;
  PropagatorConfig prop;
  double delta = 0.1, eps3 = 0.2, eps4 = 0.1, rho0_over_n = 0.1;
  double gamma0 = 0.0;
  double r1 = 10.0;  // L2loc weight
  bool stop_after_exit = false;  // end the run T_extra after t_o
  double T_extra = 0.0;
};

enum class Outcome { excited, ground, undecided };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::excited:
      return "excited";
    case Outcome::ground:
      return "ground";
    default:
      return "undecided";
  }
}

struct Sample {
  double t = 0.0;
  std::vector<cd> x;
  double xi_norm = 0.0;
  double mass = 0.0;
  // region: 1 excited neighborhood, 0 ground neighborhood, -1 neither
  int region = -1;
  double n_best = NAN, theta = NAN;
  std::vector<cd> z;
  double eta_loc = NAN;
  double residual = NAN;  // ||psi - Q_{region,n} e^{i theta}||_{L2loc}
};

struct TrajectoryRecord {
  ScenarioConfig cfg;
  std::vector<Sample> samples;
  EventTimes events;
  Outcome outcome = Outcome::undecided;
  double n_plus = NAN;
  LinearFit growth;       // log|z_0| vs t over [t_c, t_o]
  bool growth_fitted = false;
  double re_lambda0 = NAN;
  LinearFit stabilization;  // log residual vs log t after t_i
  bool stabilization_fitted = false;
  double window_lo = NAN, window_hi = NAN;
  int phase_warnings = 0;

  std::vector<double> times() const {
    std::vector<double> t;
    for (const Sample& s : samples) t.push_back(s.t);
    return t;
  }
};

inline TrajectoryRecord run_scenario(const ScenarioConfig& cfg, const LinearSpectrum& s, int kappa) {
  if (!(cfg.n > 0.0) || !(cfg.T > 0.0) || !(cfg.sample_dt > 0.0)) throw std::invalid_argument("run_scenario: bad config");
  if (cfg.m != 1) throw std::invalid_argument("run_scenario: starts near the first excited state (m = 1)");
  const RadialGrid& g = s.grid;
  LSpectrumCache excited(s, 1, kappa), ground(s, 0, kappa);
  const BoundState bs = excited.bound(cfg.n);
  const LSpectrum ls = spectral_decomposition(build_L(s, bs), s);
  Field psi = bs.Q.cast<cd>();
  for (const LMode& md : ls.modes)
    if (md.k < static_cast<int>(cfg.seeds.size())) psi += zeta_field(ls, md.k, cfg.seeds[md.k]);

  TrajectoryRecord rec;
  rec.cfg = cfg;
  rec.re_lambda0 = ls.mode(0).lambda.real();
  NlsPropagator prop(s.V, g, kappa, cfg.prop);
  LinearizedOptions lo;
  lo.eps3 = cfg.eps3;
  bool left_excited = false;
  EventParams ep;
  ep.n = cfg.n;
  ep.delta = cfg.delta;
  ep.rho0 = cfg.rho0_over_n * cfg.n;
  ep.eps4 = cfg.eps4;
  ep.gamma0 = cfg.gamma0;
  std::optional<double> t_exit_seen;

  const long n_samples = std::lround(cfg.T / cfg.sample_dt);
  for (long j = 0; j <= n_samples; ++j) {
    if (j > 0) prop.advance(psi, cfg.sample_dt);
    Sample sm;
    sm.t = j * cfg.sample_dt;
    const OrthoCoords oc = decompose_orthogonal(psi, s);
    sm.x = oc.x;
    sm.xi_norm = norm(g, oc.xi, NormKind::l2());
    sm.mass = mass(g, psi);
    const double x1 = std::abs(oc.x[1]);
    const bool excited_ok = !left_excited && x1 > 0.9 * cfg.n && x1 < 1.1 * cfg.n && in_neighborhood(psi, s, 1, cfg.eps3);
    if (!excited_ok) left_excited = true;
    std::optional<LinearizedCoords> lc;
    LSpectrumCache* cache = nullptr;
    try {
      if (excited_ok) {
        lc = decompose_linearized(psi, 1, excited, lo);
        sm.region = 1;
        cache = &excited;
      } else if (in_neighborhood(psi, s, 0, cfg.eps3)) {
        lc = decompose_linearized(psi, 0, ground, lo);
        sm.region = 0;
        cache = &ground;
      }
    } catch (const NeighborhoodViolation&) {
    } catch (const DecompositionFailure&) {
    }
    if (lc) {
      sm.n_best = lc->n_best;
      sm.theta = lc->theta;
      sm.z = lc->z;
      sm.eta_loc = norm(g, lc->eta, NormKind::l2loc(cfg.r1));
      const BoundState b = cache->bound(lc->n_best);
      const Field d = psi - b.Q.cast<cd>() * std::exp(cd(0, lc->theta));
      sm.residual = norm(g, d, NormKind::l2loc(cfg.r1));
    }
    rec.samples.push_back(std::move(sm));
    if (cfg.stop_after_exit && !t_exit_seen) {
      const Sample& b = rec.samples.back();
      const double zl = b.region == 1 ? std::abs(b.z[0]) : std::abs(b.x[0]);
      if (zl >= 2.0 * *ep.rho0) t_exit_seen = b.t;
    }
    if (t_exit_seen && rec.samples.back().t >= *t_exit_seen + cfg.T_extra) break;
  }
  rec.phase_warnings = prop.phase_warnings();

  // event series: linearized z_0 inside the excited neighborhood, |x_0| after leaving it
  std::vector<double> t, z0, zl, f;
  for (const Sample& sm : rec.samples) {
    t.push_back(sm.t);
    const double v = sm.region == 1 ? std::abs(sm.z[0]) : std::abs(sm.x[0]);
    z0.push_back(v);
    zl.push_back(v);
    double fs = 0.0;
    for (size_t l = 1; l < sm.x.size(); ++l) fs += std::norm(sm.x[l]);
    f.push_back(fs);
  }
  rec.events = detect_events(t, z0, zl, f, ep);

  if (rec.events.t_c && rec.events.t_o) {
    std::vector<double> tt, yy;
    for (const Sample& sm : rec.samples)
      if (sm.t >= *rec.events.t_c && sm.t <= *rec.events.t_o && sm.region == 1) {
        tt.push_back(sm.t);
        yy.push_back(std::abs(sm.z[0]));
      }
    if (tt.size() >= 3) {
      rec.growth = exp_fit(tt, yy);
      rec.growth_fitted = true;
    }
  }

  // outcome: the residual must decrease over the final quarter
  const size_t q0 = rec.samples.size() * 3 / 4;
  auto final_region = [&](int region) {
    std::vector<double> tt, rr;
    for (size_t i = q0; i < rec.samples.size(); ++i) {
      if (rec.samples[i].region != region) return false;
      tt.push_back(rec.samples[i].t);
      rr.push_back(rec.samples[i].residual);
    }
    return tt.size() >= 3 && linear_fit(tt, rr).slope < 0.0;
  };
  if (final_region(0)) {
    rec.outcome = Outcome::ground;
    rec.n_plus = rec.samples.back().n_best;
  } else if (final_region(1)) {
    rec.outcome = Outcome::excited;
    rec.n_plus = rec.samples.back().n_best;
  }

  if (rec.events.t_i) {
    std::vector<double> tt, rr;
    for (const Sample& sm : rec.samples)
      if (sm.t > *rec.events.t_i && sm.region == 0) {
        tt.push_back(sm.t);
        rr.push_back(sm.residual);
      }
    if (tt.size() >= 3) {
      rec.window_lo = tt.front();
      rec.window_hi = tt.back();
      rec.stabilization = loglog_fit(tt, rr);
      rec.stabilization_fitted = true;
    }
  }
  return rec;
}

// ---- PDE vs normal form

struct NfComparison {
  std::vector<double> max_rel, rms_rel;  // per mode k, NaN where not compared
  int samples = 0;
};

// |z_k| (PDE, excited neighborhood) against |q_k| (NF) on the PDE sample times up to t_end
inline NfComparison compare_nf(const TrajectoryRecord& rec, const std::vector<ExcitedNfState>& nf,
                               const std::vector<int>& modes, double t_end) {
  NfComparison out;
  int K = 0;
  for (int k : modes) K = std::max(K, k);
  out.max_rel.assign(K + 1, NAN);
  out.rms_rel.assign(K + 1, NAN);
  std::vector<double> sum(K + 1, 0.0), mx(K + 1, 0.0);
  size_t j = 0;
  for (const Sample& sm : rec.samples) {
    if (sm.t > t_end || sm.region != 1) break;
    while (j + 1 < nf.size() && nf[j + 1].t < sm.t) ++j;
    if (j + 1 >= nf.size()) break;
    const double w = nf[j + 1].t > nf[j].t ? (sm.t - nf[j].t) / (nf[j + 1].t - nf[j].t) : 0.0;
    for (int k : modes) {
      const double q = (1 - w) * std::abs(nf[j].q[k]) + w * std::abs(nf[j + 1].q[k]);
      const double p = std::abs(sm.z[k]);
      const double rel = q == p ? 0.0 : std::abs(p - q) / std::max(std::abs(q), std::abs(p));
      sum[k] += rel * rel;
      mx[k] = std::max(mx[k], rel);
    }
    ++out.samples;
  }
  for (int k : modes) {
    out.max_rel[k] = mx[k];
    out.rms_rel[k] = out.samples ? std::sqrt(sum[k] / out.samples) : NAN;
  }
  return out;
}

}  // namespace exlab
