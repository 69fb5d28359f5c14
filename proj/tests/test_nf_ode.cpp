#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "common.hpp"
#include "exlab/nf_ode.hpp"

using namespace exlab;
using exlab::testing::default_config;
using exlab::testing::default_spectrum;

namespace {

const FgrTable& table() {
  static const FgrTable t = [] {
    const auto& cfg = default_config();
    AssumptionOptions opt;
    opt.s0_fraction = cfg.get<double>("/assumptions/s0_fraction");
    opt.s_samples = cfg.get<int>("/assumptions/s_samples");
    return build_fgr_table(default_spectrum(), cfg.kappa, cfg.potential, opt);
  }();
  return t;
}

struct Excited {
  LSpectrum ls;
  NormalFormCoeffs c;
  std::vector<double> re;
};

const Excited& excited(double n) {
  static std::map<double, Excited> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    const auto& s = default_spectrum();
    Excited e;
    e.ls = spectral_decomposition(build_L(s, solve_bound_state(1, n, default_config().kappa, s)), s);
    e.c = coefficients_D(e.ls, table());
    e.re = real_parts(e.ls);
    it = cache.emplace(n, std::move(e)).first;
  }
  return it->second;
}

std::vector<cd> random_mu(std::mt19937_64& rng, int K, double scale) {
  std::uniform_real_distribution<double> u(0.2, 1.0), ph(0, 2 * pi);
  std::vector<cd> mu(K + 1);
  for (auto& v : mu) v = std::polar(scale * u(rng), ph(rng));
  return mu;
}

}  // namespace

TEST(ExcitedNf, ZeroIsAFixedPoint) {
  const Excited& e = excited(0.6);
  const auto traj = integrate_excited_nf(e.c, e.re, std::vector<cd>(3, 0.0), 0.0, 50.0);
  for (const auto& s : traj) {
    for (const cd& q : s.q) EXPECT_EQ(q, cd(0.0));
    EXPECT_EQ(s.b, 0.0);
  }
}

TEST(ExcitedNf, StableModeFollowsBernoulli) {
  const Excited& e = excited(0.6);
  std::vector<double> re = e.re;
  re[2] = 0.0;
  const double D = e.c.D(2, 2).real();
  const cd q0(0.3, 0.1);
  const double a0 = std::norm(q0);
  const double t_half = 3.0 / (-2.0 * D * a0);  // |q|^-2 grows from 1/a0 to 4/a0
  const auto traj = integrate_excited_nf(e.c, re, {0.0, 0.0, q0}, 0.0, t_half);
  const double got = std::norm(traj.back().q[2]);
  const double want = 1.0 / (1.0 / a0 - 2.0 * D * traj.back().t);
  EXPECT_NEAR(traj.back().t, t_half, 1e-12 * t_half);
  EXPECT_NEAR(got / want, 1.0, 1e-8);
  EXPECT_NEAR(std::sqrt(got / a0), 0.5, 1e-7);
}

TEST(ExcitedNf, UnstableModeGrowsAtTheLinearRate) {
  const Excited& e = excited(1.5);
  const double rate = e.re[0];
  ASSERT_GT(rate, 0.0);
  const double q0 = 1e-4;
  const double T = std::log(10.0) / rate;
  const auto traj = integrate_excited_nf(e.c, e.re, {q0, 0.0, 0.0}, 0.0, T);
  for (const auto& s : traj) EXPECT_NEAR(std::abs(s.q[0]) / (q0 * std::exp(rate * s.t)), 1.0, 0.01);
  EXPECT_NEAR(std::abs(traj.back().q[0]) / q0, 10.0, 0.1);
}

TEST(ExcitedNf, GroundMassEquationUsesTheFourthOrderRate) {
  const Excited& e = excited(1.5);
  const double q0 = 1e-3;
  const double T = 5.0;
  const auto traj = integrate_excited_nf(e.c, e.re, {q0, 0.0, 0.0}, 0.0, T);
  // b' = b_00 |q_0|^2 with |q_0| = q0 e^{rate t}
  const double rate = e.re[0];
  const double want = e.c.b0[0] * q0 * q0 * (std::exp(2 * rate * T) - 1) / (2 * rate);
  EXPECT_NEAR(traj.back().b / want, 1.0, 1e-6);
}

TEST(ExcitedNf, GrowthRatioSandwich) {
  const Excited& e = excited(1.5);
  const double rate = e.re[0];
  const auto traj = integrate_excited_nf(e.c, e.re, {1e-5, 0.0, 0.05}, 0.0, 3.0 / rate);
  for (size_t i = traj.size() / 4; i < traj.size(); i += 7)
    for (size_t j = i + 1; j < traj.size(); j += 11) {
      const double dt = traj[j].t - traj[i].t;
      const double ratio = std::abs(traj[j].q[0]) / std::abs(traj[i].q[0]);
      EXPECT_GE(ratio, std::exp(0.5 * rate * dt));
      EXPECT_LE(ratio, std::exp(1.5 * rate * dt));
    }
}

TEST(ExcitedNf, ForcingCallbacksAreApplied) {
  const Excited& e = excited(0.6);
  ExcitedNfForcing f;
  f.g = [](double, const ExcitedNfState&) { return std::vector<cd>{0.0, 0.0, cd(0.0, 1e-3)}; };
  f.g_b = [](double, const ExcitedNfState&) { return 2e-3; };
  const auto traj = integrate_excited_nf(e.c, e.re, {0.0, 0.0, 0.0}, 0.0, 1.0, f);
  EXPECT_NEAR(traj.back().b, 2e-3, 1e-12);
  EXPECT_NEAR(traj.back().q[2].imag(), 1e-3, 1e-8);
}

TEST(ExcitedNf, AmplitudeGuardReportsTime) {
  const Excited& e = excited(1.5);
  try {
    integrate_excited_nf(e.c, e.re, {0.5, 0.0, 0.0}, 0.0, 10.0 / e.re[0]);
    FAIL() << "no guard breach";
  } catch (const NfFailure& err) {
    // reported at the end of the first accepted step past the breach
    EXPECT_GE(err.t, std::log(2.0) / e.re[0] * (1 - 1e-6));
    EXPECT_LT(err.t, std::log(2.0) / e.re[0] * 1.1);
  }
}

TEST(MuSystem, ZeroStaysZero) {
  const MuCoefficients c = mu_coefficients(coefficients_d(table()));
  const auto traj = integrate_mu_system(c, std::vector<cd>(3, 0.0), 10.0);
  for (const auto& s : traj)
    for (double f : s.f) EXPECT_EQ(f, 0.0);
}

TEST(MuSystem, ModulusEquationHoldsAlongTheFlow) {
  const MuCoefficients c = mu_coefficients(coefficients_d(table()));
  std::mt19937_64 rng(3);
  const auto traj = integrate_mu_system(c, random_mu(rng, 2, 0.5), 2000.0);
  for (size_t i = 1; i + 1 < traj.size(); i += 5) {
    const auto& a = traj[i - 1];
    const auto& b = traj[i + 1];
    const std::vector<double> rate = f_rates(c, traj[i].mu);
    for (int j = 0; j <= 2; ++j) {
      const double fd = (b.f[j] - a.f[j]) / (b.t - a.t);
      EXPECT_NEAR(fd, rate[j], 1e-3 * std::abs(rate[j]) + 1e-12);
    }
    for (int j = 0; j <= 2; ++j) EXPECT_DOUBLE_EQ(traj[i].f[j], std::norm(traj[i].mu[j]));
  }
}

TEST(MuSystem, ForcingEntersTheModulusEquation) {
  const MuCoefficients c = mu_coefficients(coefficients_d(table()));
  const MuForcing g = [](double, const std::vector<cd>& mu) {
    return std::vector<cd>{1e-4 * mu[0], cd(0, 1e-4), 0.0};
  };
  std::mt19937_64 rng(4);
  const auto traj = integrate_mu_system(c, random_mu(rng, 2, 0.4), 50.0, g);
  const auto& s = traj[traj.size() / 2];
  const std::vector<cd> gv = g(s.t, s.mu);
  const std::vector<double> with = f_rates(c, s.mu, &gv), without = f_rates(c, s.mu);
  for (int j = 0; j <= 2; ++j)
    EXPECT_NEAR(with[j] - without[j], 2 * (std::conj(s.mu[j]) * gv[j]).real(), 1e-16);
}

TEST(MuSystem, RelaxesToTheGroundMode) {
  const MuCoefficients c = mu_coefficients(coefficients_d(table()));
  std::mt19937_64 rng(5);
  const std::vector<cd> mu0 = random_mu(rng, 2, 0.6);
  const double T = 2e7;
  const auto traj = integrate_mu_system(c, mu0, T);
  NfOptions tight;
  tight.rtol = 1e-11;
  tight.atol = 1e-15;
  const auto ref = integrate_mu_system(c, mu0, T, {}, tight);
  const auto& a = traj.back();
  const auto& b = ref.back();
  const double f_end = a.f[1] + a.f[2], f_start = traj.front().f[1] + traj.front().f[2];
  EXPECT_LT(f_end, 0.05 * f_start);
  EXPECT_GT(a.f[0], traj.front().f[0]);
  for (int j = 0; j <= 2; ++j) EXPECT_NEAR(a.f[j], b.f[j], 1e-6 * std::max(b.f[0], 1e-3));
}

TEST(MuSystem, TwoModeClosedForm) {
  // K = 1 sub-case: f0 + f1/2 is conserved and f1' = -4 gamma f0 f1^2
  FgrTable t1;
  t1.K = 1;
  t1.gamma.assign(8, 0.0);
  const double g = table()(1, 1, 0);
  t1.at(1, 1, 0) = g;
  const MuCoefficients c = mu_coefficients(coefficients_d(t1));
  const double f0 = 0.09, f1 = 0.16;
  const auto traj = integrate_mu_system(c, {std::sqrt(f0), std::sqrt(f1)}, 4e6);
  const double S = f0 + 0.5 * f1;
  auto F = [&](double x) { return -1.0 / (S * x) + (std::log(x) - std::log(S - 0.5 * x)) / (2 * S * S); };
  for (size_t i = 0; i < traj.size(); i += std::max<size_t>(1, traj.size() / 50)) {
    const auto& s = traj[i];
    EXPECT_NEAR(s.f[0] + 0.5 * s.f[1], S, 1e-9);
    const double t_pred = -(F(s.f[1]) - F(f1)) / (4 * g);
    EXPECT_NEAR(t_pred, s.t, 1e-6 * std::max(1.0, s.t));
  }
  EXPECT_NEAR(traj.back().f[0], S, 0.05 * S);
}

TEST(MuSystem, TimeReversal) {
  const MuCoefficients c = mu_coefficients(coefficients_d(table()));
  std::mt19937_64 rng(8);
  const std::vector<cd> mu0 = random_mu(rng, 2, 0.5);
  const double T = 3e4;
  const auto fwd = integrate_mu_system(c, mu0, T);
  MuCoefficients rev = c;
  for (double& v : rev.d_real.v) v = -v;
  const auto back = integrate_mu_system(rev, fwd.back().mu, T);
  for (int j = 0; j <= 2; ++j) EXPECT_NEAR(std::abs(back.back().mu[j] - mu0[j]), 0.0, 100 * 1e-10);
}

TEST(Lyapunov, ZeroTrajectoryHasZeroMargins) {
  const MuCoefficients c = mu_coefficients(coefficients_d(table()));
  const auto traj = integrate_mu_system(c, std::vector<cd>(3, 0.0), 1.0);
  const LyapunovReport rep = lyapunov_check(traj, c, lyapunov_gamma(table()));
  EXPECT_EQ(rep.ground_margin, 0.0);
  EXPECT_EQ(rep.excited_margin, 0.0);
}

TEST(Lyapunov, HoldsOnRandomTrajectories) {
  const MuCoefficients c = mu_coefficients(coefficients_d(table()));
  const double gamma = lyapunov_gamma(table());
  EXPECT_GT(gamma, 0.0);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const auto traj = integrate_mu_system(c, random_mu(rng, 2, 0.7), 1e5);
    const LyapunovReport rep = lyapunov_check(traj, c, gamma);
    EXPECT_GE(rep.ground_margin, -1e-9);
    EXPECT_GE(rep.excited_margin, -1e-9);
    EXPECT_GE(rep.monotone_margin, -1e-12);
    for (size_t k = 1; k < traj.size(); ++k)
      EXPECT_LE(traj[k].f[0] + traj[k].f[1] + traj[k].f[2], traj[k - 1].f[0] + traj[k - 1].f[1] + traj[k - 1].f[2] + 1e-13);
  }
}

TEST(Lyapunov, DetectsAWrongSignTable) {
  FgrTable bad = table();
  for (double& v : bad.gamma) v = -v;
  const MuCoefficients c = mu_coefficients(coefficients_d(bad));
  std::mt19937_64 rng(10);
  const auto traj = integrate_mu_system(c, random_mu(rng, 2, 0.5), 100.0);
  const LyapunovReport rep = lyapunov_check(traj, c, lyapunov_gamma(table()));
  EXPECT_FALSE(rep.ok(1e-9));
}

TEST(Events, BelowThresholdHasNoCrossing) {
  EventParams p;
  p.n = 0.5;
  p.gamma0 = table().gamma0;
  std::vector<double> t, z, big, f;
  for (int i = 0; i < 100; ++i) {
    t.push_back(i);
    z.push_back(0.1 * p.tc_threshold(i));
    big.push_back(0.0);
    f.push_back(1.0);
  }
  const EventTimes ev = detect_events(t, z, big, f, p);
  EXPECT_FALSE(ev.t_c);
  EXPECT_FALSE(ev.t_o);
}

TEST(Events, ExponentialCrossingWithinOneSample) {
  EventParams p;
  p.n = 0.5;
  p.gamma0 = 0.0;  // constant threshold, closed-form crossing
  const double thr = p.tc_threshold(0.0), rate = 0.05, z0 = 1e-3 * thr;
  const double dt = 0.5;
  std::vector<double> t, z, zl, f;
  for (int i = 0; i < 400; ++i) {
    t.push_back(i * dt);
    z.push_back(z0 * std::exp(rate * i * dt));
    zl.push_back(z.back());
    f.push_back(1.0);
  }
  const EventTimes ev = detect_events(t, z, zl, f, p);
  ASSERT_TRUE(ev.t_c);
  EXPECT_NEAR(*ev.t_c, std::log(thr / z0) / rate, dt);
  ASSERT_TRUE(ev.t_o);
  EXPECT_NEAR(*ev.t_o, std::log(2 * p.rho0_value() / z0) / rate, dt);
  EXPECT_LE(*ev.t_c, *ev.t_o);
}

TEST(Events, CoarseSeriesIsRejected) {
  EventParams p;
  p.n = 0.5;
  std::vector<double> t = {0, 1, 2}, z = {0.0, 1e-9, 1.0}, f = {1, 1, 1};
  EXPECT_THROW(detect_events(t, z, z, f, p), SeriesTooCoarse);
}

TEST(Events, ExitTimeScalesWithTheSeedLogarithm) {
  const double n = 1.5;
  const Excited& e = excited(n);
  const double rate = e.re[0];
  EventParams p;
  p.n = n;
  p.rho0 = default_config().get<double>("/events/rho0_over_n") * n;
  p.gamma0 = table().gamma0;
  for (double seed : {1e-5, 4e-5, 1.6e-4}) {
    const double z0 = seed * n;
    const double T = std::log(0.6 / z0) / rate;
    std::vector<double> t, a, f;
    for (const auto& s : integrate_excited_nf(e.c, e.re, {z0, 0.0, 0.0}, 0.0, T)) {
      t.push_back(s.t);
      a.push_back(std::abs(s.q[0]));
      f.push_back(1.0);
    }
    const EventTimes ev = detect_events(t, a, a, f, p);
    ASSERT_TRUE(ev.t_c && ev.t_o);
    EXPECT_NEAR(*ev.t_o * rate / std::log(2 * *p.rho0 / z0), 1.0, 0.01);
    EXPECT_NEAR((*ev.t_o - *ev.t_c) * rate / std::log(2 * *p.rho0 / p.tc_threshold(*ev.t_c)), 1.0, 0.01);
  }
}
