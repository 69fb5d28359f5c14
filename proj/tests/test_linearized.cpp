#include <map>
#include <random>

#include <gtest/gtest.h>

#include "common.hpp"
#include "exlab/fit.hpp"
#include "exlab/linearized.hpp"

using namespace exlab;
using exlab::testing::default_config;
using exlab::testing::default_spectrum;

namespace {

const LSpectrum& lsp(double n) {
  static std::map<double, LSpectrum> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    const auto& s = default_spectrum();
    const BoundState bs = solve_bound_state(1, n, -1, s);
    it = cache.emplace(n, spectral_decomposition(build_L(s, bs), s)).first;
  }
  return it->second;
}

std::vector<double> n_sweep() { return default_config().get<std::vector<double>>("/linearized/n_sweep"); }

Vec2 random_localized(const RadialGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  RField a(g.N), b(g.N);
  for (int i = 0; i < g.N; ++i) {
    const double w = std::exp(-0.3 * g.r(i)) * g.r(i);
    a[i] = nd(rng) * w;
    b[i] = nd(rng) * w;
  }
  return embed(a, b);
}

double diff(const RadialGrid& g, const Vec2& a, const Vec2& b) { return norm(g, Vec2(a - b), NormKind::l2()); }

// coarse grid for dense eigendecompositions
struct Coarse {
  LinearSpectrum s;
  BoundState bs;
  MatrixOperatorL L;
};

const Coarse& coarse(double n) {
  static std::map<double, Coarse> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    Coarse c;
    c.s = solve_spectrum(default_config().potential, make_grid_dr(30.0, 0.1));
    c.bs = solve_bound_state(1, n, -1, c.s);
    c.L = build_L(c.s, c.bs);
    it = cache.emplace(n, std::move(c)).first;
  }
  return it->second;
}

}  // namespace

TEST(BuildL, DecoupledEigenvaluesAtZeroAmplitude) {
  const Coarse& c = coarse(0.0);
  const LEigenPropagator P(c.L);
  const auto& ev = P.eigenvalues();
  for (int k = 0; k <= c.s.K; ++k) {
    const double w = c.s.e[k] - c.s.e[1];
    for (double sgn : {1.0, -1.0}) {
      double best = INFINITY;
      for (Eigen::Index j = 0; j < ev.size(); ++j) best = std::min(best, std::abs(ev[j] - cd(0, sgn * w)));
      EXPECT_LT(best, 1e-8) << "k=" << k;
    }
  }
}

TEST(BuildL, GeneralizedKernel) {
  const auto& s = default_spectrum();
  const BoundState bs = solve_bound_state(1, 0.8, -1, s);
  const MatrixOperatorL L = build_L(s, bs);
  EXPECT_LT(norm(s.grid, L.apply_minus(bs.Q), NormKind::l2()), 10 * 1e-11);
  const RField zero = RField::Zero(s.grid.N);
  EXPECT_LT(norm(s.grid, L.apply(embed(zero, bs.Q)), NormKind::l2()), 10 * 1e-11);
  const RField R = tangent_R(s, bs);
  const Vec2 LR = L.apply(embed(R, zero));
  EXPECT_LT(diff(s.grid, LR, embed(zero, RField(-bs.Q))), 1e-9 * norm(s.grid, bs.Q, NormKind::l2()));
}

TEST(BuildL, PlusMinusDifferenceIsTwiceCubicWeight) {
  const auto& s = default_spectrum();
  const BoundState bs = solve_bound_state(1, 1.2, -1, s);
  const MatrixOperatorL L = build_L(s, bs);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  RField f(s.grid.N);
  for (auto& x : f) x = nd(rng);
  const RField d = L.apply_plus(f) - L.apply_minus(f);
  for (int i = 0; i < s.grid.N; ++i) {
    const double psiQ = bs.Q[i] / s.grid.r(i);
    EXPECT_NEAR(d[i], 2.0 * bs.kappa * psiQ * psiQ * f[i], 1e-12 * (1 + std::abs(f[i])));
  }
}

TEST(LSpectrum, ExcitedPairOnImaginaryAxis) {
  const auto& s = default_spectrum();
  std::vector<double> ns, dev;
  for (double n : n_sweep()) {
    const LMode& md = lsp(n).mode(2);
    EXPECT_LT(std::abs(md.lambda.real()), 1e-10);
    EXPECT_NEAR(md.family[1].imag(), -md.lambda.imag(), 1e-8 * std::abs(md.lambda));
    EXPECT_LT(md.residual, 1e-10);
    // u, v real
    EXPECT_LT(md.Phi.f1.imag().cwiseAbs().maxCoeff(), 1e-10 * md.Phi.f1.cwiseAbs().maxCoeff());
    EXPECT_LT(md.Phi.f2.real().cwiseAbs().maxCoeff(), 1e-10 * md.Phi.f2.cwiseAbs().maxCoeff());
    EXPECT_NEAR(std::abs(md.c - cd(0, 0.5)), 0.0, 1e-10);
    ns.push_back(n);
    dev.push_back((cd(0, 1) * md.lambda).real() - (s.e[2] - s.e[1]));
  }
  EXPECT_GE(loglog_fit(ns, dev).slope, 1.8);
}

TEST(LSpectrum, QuadrupleSplitsOffTheAxis) {
  const auto& s = default_spectrum();
  std::vector<double> ns, re, dim;
  for (double n : n_sweep()) {
    const LMode& md = lsp(n).mode(0);
    const cd l = md.lambda;
    ASSERT_EQ(md.family.size(), 4u);
    EXPECT_GT(l.real(), 0.0);
    const cd expect[4] = {l, std::conj(l), -l, -std::conj(l)};
    for (int j = 0; j < 4; ++j) EXPECT_LT(std::abs(md.family[j] - expect[j]), 1e-8 * std::abs(l));
    ns.push_back(n);
    re.push_back(l.real());
    dim.push_back(l.imag() - (s.e[1] - s.e[0]));
  }
  const LinearFit f = loglog_fit(ns, re);
  EXPECT_NEAR(f.slope, 4.0, 0.3);
  EXPECT_GE(loglog_fit(ns, dim).slope, 1.8);
}

TEST(LSpectrum, RadiatingComponentIsSmallLocallyButNotGlobally) {
  const auto& s = default_spectrum();
  std::vector<double> loc_over_n2, ratio;
  for (double n : n_sweep()) {
    const LMode& md = lsp(n).mode(0);
    Vec2 minus(md.Phi.channel_B(), cd(0, 1) * md.Phi.channel_B());
    for (const Tail& t : md.Phi.tails)
      if (t.channel == Tail::B) minus.tails.push_back(t);
    const double loc = norm(s.grid, md.u_minus, NormKind::l2loc());
    const double l2 = norm_with_tails(s.grid, minus) / std::sqrt(2.0);
    loc_over_n2.push_back(loc / (n * n));
    ratio.push_back(loc / l2);
  }
  const auto [lo, hi] = std::minmax_element(loc_over_n2.begin(), loc_over_n2.end());
  EXPECT_LT(*hi / *lo, 2.0);
  // sweep runs upward in n
  for (size_t i = 1; i < ratio.size(); ++i) EXPECT_GT(ratio[i], ratio[i - 1]);
  EXPECT_LT(ratio.front(), 0.05);
}

TEST(LSpectrum, SymplecticOrthogonality) {
  const LSpectrum& ls = lsp(0.6);
  const auto& g = ls.grid();
  const Vec2 zq = ls.zero_Q(), zr = ls.zero_R();
  for (const LMode& a : ls.modes) {
    EXPECT_NEAR(std::abs(pair(g, a.Phi, conj(a.Phi))), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(pair(g, a.Phi, zq)), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(pair(g, a.Phi, zr)), 0.0, 1e-9);
    for (const LMode& b : ls.modes) {
      if (a.k == b.k) continue;
      EXPECT_NEAR(std::abs(pair(g, a.Phi, b.Phi)), 0.0, 1e-9);
      EXPECT_NEAR(std::abs(pair(g, a.Phi, conj(b.Phi))), 0.0, 1e-9);
    }
  }
  // (conj u_k, v_k) = int u v = 1 + O(n^2)
  for (int k : {0, 2}) {
    std::vector<double> ns, dev;
    for (double n : n_sweep()) {
      const LMode& md = lsp(n).mode(k);
      ns.push_back(n);
      dev.push_back(std::abs(pair(lsp(n).grid(), md.Phi, md.Phi) / cd(0, -2) - 1.0) + 1e-300);
    }
    if (k == 2) {
      for (double d : dev) EXPECT_LT(d, 1e-10);
    } else {
      EXPECT_GE(loglog_fit(ns, dev).slope, 1.8);
    }
  }
}

TEST(Projection, EigenprojectionsAreBiorthogonal) {
  const LSpectrum& ls = lsp(0.6);
  const auto& g = ls.grid();
  for (const LMode& a : ls.modes) {
    EXPECT_LT(diff(g, project(ls, a.Phi, Projection::Pk, a.k), a.Phi), 1e-8);
    EXPECT_LT(diff(g, project(ls, conj(a.Phi), Projection::Pk, a.k), conj(a.Phi)), 1e-8);
    for (const LMode& b : ls.modes) {
      if (b.k != a.k) {
        EXPECT_LT(norm(g, project(ls, b.Phi, Projection::Pk, a.k), NormKind::l2()), 1e-8);
      }
    }
    EXPECT_LT(norm(g, project(ls, ls.zero_Q(), Projection::Pk, a.k), NormKind::l2()), 1e-8);
  }
  const Vec2 s0 = sigma3(ls.mode(0).Phi);
  EXPECT_LT(diff(g, project(ls, s0, Projection::Pk_sharp, 0), s0), 1e-8);
  EXPECT_LT(norm(g, project(ls, ls.mode(0).Phi, Projection::Pk_sharp, 0), NormKind::l2()), 1e-8);
  EXPECT_LT(norm(g, project(ls, s0, Projection::Pk, 0), NormKind::l2()), 1e-8);
}

TEST(Projection, IdempotentAndMutuallyAnnihilating) {
  const LSpectrum& ls = lsp(1.0);
  const auto& g = ls.grid();
  std::mt19937_64 rng(17);
  const Vec2 f = random_localized(g, rng);
  const double fn = norm(g, f, NormKind::l2());
  for (int k : {0, 2}) {
    const Vec2 p = project(ls, f, Projection::Pk, k);
    EXPECT_LT(diff(g, project(ls, p, Projection::Pk, k), p), 1e-8 * fn);
    EXPECT_LT(norm(g, project(ls, p, Projection::Pk, 2 - k), NormKind::l2()), 1e-8 * fn);
    EXPECT_LT(norm(g, project(ls, p, Projection::Pm_zero), NormKind::l2()), 1e-8 * fn);
  }
  const Vec2 pm = project(ls, f, Projection::Pm_zero);
  EXPECT_LT(diff(g, project(ls, pm, Projection::Pm_zero), pm), 1e-8 * fn);
  const Vec2 ps = project(ls, f, Projection::Pk_sharp, 0);
  EXPECT_LT(diff(g, project(ls, ps, Projection::Pk_sharp, 0), ps), 1e-8 * fn);
  const Vec2 pc = project(ls, f, Projection::Pc_sharp);
  EXPECT_LT(diff(g, project(ls, pc, Projection::Pc_sharp), pc), 1e-8 * fn);
}

TEST(Projection, CompletenessRemainderHasNoDiscreteContent) {
  const LSpectrum& ls = lsp(1.0);
  const auto& g = ls.grid();
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    const Vec2 f = random_localized(g, rng);
    const double fn = norm(g, f, NormKind::l2());
    const Vec2 rem = project(ls, f, Projection::Pc_L);
    Vec2 sum = project(ls, f, Projection::Pm_zero) + project(ls, f, Projection::Pk, 0) +
               project(ls, f, Projection::Pk, 2) + project(ls, f, Projection::Pk_sharp, 0) + rem;
    EXPECT_LT(diff(g, sum, f), 1e-6 * fn);
    EXPECT_LT(norm(g, project(ls, rem, Projection::Pd), NormKind::l2()), 1e-6 * fn);
    EXPECT_LT(norm(g, project(ls, rem, Projection::Pk_sharp, 0), NormKind::l2()), 1e-6 * fn);
  }
}

TEST(Projection, RejectsInvalidIndex) {
  const LSpectrum& ls = lsp(0.6);
  const Vec2 f = Vec2::zero(ls.grid().N);
  EXPECT_THROW(project(ls, f, Projection::Pk, 1), std::invalid_argument);
  EXPECT_THROW(project(ls, f, Projection::Pk, 3), std::invalid_argument);
  EXPECT_THROW(project(ls, f, Projection::Pk_sharp, 2), std::invalid_argument);
}

TEST(ZCoefficients, RealPartOfEigenvectorGivesUnit) {
  const LSpectrum& ls = lsp(0.6);
  for (int k : {0, 2}) {
    const auto z = scalar_project_coefficients(ls, zeta_pair(ls, k, 1.0));
    for (int j : {0, 2}) EXPECT_LT(std::abs(z[j] - (j == k ? 1.0 : 0.0)), 1e-8) << k << " " << j;
    // the field form conj(u+) + u- is the same vector on the grid
    const Vec2 grid_only = embed(zeta_field(ls, k, 1.0));
    Vec2 with_tails = zeta_pair(ls, k, 1.0);
    EXPECT_LT(norm(ls.grid(), Vec2(grid_only - with_tails), NormKind::l2()), 1e-12);
  }
}

TEST(ZCoefficients, GeneralizedKernelGivesZero) {
  const LSpectrum& ls = lsp(0.6);
  const Field iQ = cd(0, 1) * ls.L.bs.Q.cast<cd>();
  const Field R = ls.R.cast<cd>();
  for (const Field& h : {iQ, R}) {
    const auto z = scalar_project_coefficients(ls, h);
    for (int k : {0, 2}) EXPECT_LT(std::abs(z[k]), 1e-8 * norm(ls.grid(), h, NormKind::l2()));
  }
}

TEST(ZCoefficients, RemainderReprojectsToZero) {
  const LSpectrum& ls = lsp(1.0);
  const auto& g = ls.grid();
  std::mt19937_64 rng(31);
  const Vec2 h = random_localized(g, rng);
  const auto z = scalar_project_coefficients(ls, h);
  Vec2 rem = h;
  for (int k : {0, 2}) rem = rem - zeta_pair(ls, k, z[k]);
  const auto z2 = scalar_project_coefficients(ls, rem);
  for (int k : {0, 2}) EXPECT_LT(std::abs(z2[k]), 1e-8 * std::abs(z[k]));
  // real-linear in h
  const auto za = scalar_project_coefficients(ls, cd(2.5) * h);
  for (int k : {0, 2}) EXPECT_LT(std::abs(za[k] - 2.5 * z[k]), 1e-10 * std::abs(z[k]));
}

TEST(Propagation, IdentityAtZeroTime) {
  const Coarse& c = coarse(0.8);
  std::mt19937_64 rng(3);
  const Vec2 f = random_localized(c.s.grid, rng);
  EXPECT_LT(diff(c.s.grid, propagate_L(c.L, f, 0.0, PropagationMethod::eigen), f), 1e-9);
  EXPECT_LT(diff(c.s.grid, propagate_L(c.L, f, 0.0, PropagationMethod::timestep), f), 1e-14);
}

TEST(Propagation, ExcitedEigenvectorRotates) {
  const LSpectrum& ls = lsp(1.0);
  const auto& g = ls.grid();
  const LMode& md = ls.mode(2);
  const double t = 2.0;
  const Vec2 want = std::exp(md.lambda * t) * md.Phi;
  const Vec2 got = propagate_L(ls.L, md.Phi, t, PropagationMethod::timestep, 0.01);
  EXPECT_LT(diff(g, got, want), 1e-6);
  // dense route on the coarse grid
  const Coarse& c = coarse(1.0);
  const LSpectrum lc = spectral_decomposition(c.L, c.s);
  const LMode& mc = lc.mode(2);
  const Vec2 ge = propagate_L(c.L, mc.Phi, t, PropagationMethod::eigen);
  EXPECT_LT(diff(c.s.grid, ge, std::exp(mc.lambda * t) * mc.Phi), 1e-8);
}

TEST(Propagation, GrowingModeInTheInterior) {
  const auto& cfg = default_config();
  const RadialGrid g = make_grid_dr(60.0, 0.05, 20.0);
  const LinearSpectrum s = solve_spectrum(cfg.potential, g);
  const LSpectrum ls = spectral_decomposition(build_L(s, solve_bound_state(1, 1.5, -1, s)), s);
  const LMode& md = ls.mode(0);
  const double t = 10.0;
  const Vec2 got = propagate_L(ls.L, md.Phi, t, PropagationMethod::timestep, 0.01, 4.0);
  const Vec2 want = std::exp(md.lambda * t) * md.Phi;
  EXPECT_LT(norm(g, Vec2(got - want), NormKind::l2loc()), 1e-3 * norm(g, want, NormKind::l2loc()));
}

TEST(Propagation, SplittingIsFourthOrder) {
  const Coarse& c = coarse(1.5);
  // smooth data, so the splitting constant is not dominated by the grid cutoff
  const auto& g = c.s.grid;
  RField a(g.N), b(g.N);
  for (int i = 0; i < g.N; ++i) {
    a[i] = g.r(i) * std::exp(-g.r(i) * g.r(i) / 4);
    b[i] = g.r(i) * g.r(i) * std::exp(-g.r(i) * g.r(i) / 3);
  }
  const Vec2 f = embed(a, b);
  const Vec2 ref = propagate_L(c.L, f, 1.0, PropagationMethod::eigen);
  double prev = 0;
  for (double dt : {0.05, 0.025}) {
    const double err = diff(c.s.grid, propagate_L(c.L, f, 1.0, PropagationMethod::timestep, dt), ref);
    if (prev > 0) {
      EXPECT_NEAR(std::log2(prev / err), 4.0, 0.5);
    }
    prev = err;
  }
}

TEST(Propagation, PairingStructure) {
  const Coarse& c = coarse(1.2);
  const auto& g = c.s.grid;
  const LEigenPropagator P(c.L);
  std::mt19937_64 rng(9);
  const Vec2 f = random_localized(g, rng), h = random_localized(g, rng);
  const cd s1 = inner(g, sigma1(f), h), sj = inner(g, sigma1(sigma3(f)), h);
  for (double t : {0.5, 2.0, 5.0, 10.0}) {
    // L is sigma1-symmetric, so the sigma1 form pairs forward with backward evolution;
    // the sigma1 sigma3 (symplectic) form is invariant under e^{tL} on both sides
    const cd a = inner(g, sigma1(P.apply(f, t)), P.apply(h, -t));
    const cd b = inner(g, sigma1(sigma3(P.apply(f, t))), P.apply(h, t));
    EXPECT_LT(std::abs(a - s1), 1e-6 * std::abs(s1)) << t;
    EXPECT_LT(std::abs(b - sj), 1e-6 * std::abs(sj)) << t;
  }
}

TEST(Propagation, DenseMemoryGuard) {
  const auto& s = default_spectrum();
  const RadialGrid g = make_grid_dr(80.0, 0.05);
  const LinearSpectrum big = solve_spectrum(default_config().potential, g);
  const MatrixOperatorL L = build_L(big, solve_bound_state(1, 0.5, -1, big));
  EXPECT_THROW(LEigenPropagator{L}, std::length_error);
  (void)s;
}
