#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <gtest/gtest.h>

#include "common.hpp"

using namespace exlab;
using exlab::testing::default_config;
using exlab::testing::default_spectrum;

namespace {

// s-wave bound states of a spherical square well from k cot(k a) = -sqrt(d - k^2)
std::vector<double> square_well_levels(double depth, double a) {
  std::vector<double> out;
  auto f = [&](double k) { return k * std::cos(k * a) + std::sqrt(depth - k * k) * std::sin(k * a); };
  const double kmax = std::sqrt(depth);
  for (int j = 1;; ++j) {
    double lo = (j - 0.5) * pi / a, hi = std::min(j * pi / a, kmax);
    if (lo >= kmax) break;
    if (f(lo) * f(hi) > 0) continue;
    auto tol = [](double x, double y) { return std::abs(x - y) < 1e-15; };
    auto [k1, k2] = boost::math::tools::bisect(f, lo, hi, tol);
    const double k = 0.5 * (k1 + k2);
    out.push_back(k * k - depth);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Field bump(const RadialGrid& g, double r0, double s) {
  return from_psi(g, [&](double r) { return std::exp(-std::pow((r - r0) / s, 2)) / r; });
}

}  // namespace

TEST(Spectrum, FreeLaplacianHasNoBoundStates) {
  const RadialGrid g = make_grid(20.0, 399);
  EXPECT_THROW(solve_spectrum(PotentialSpec{}, g), NoBoundStates);
}

TEST(Spectrum, SquareWellMatchesTranscendentalRoots) {
  const double depth = 90.0, a = 1.0;
  const auto exact = square_well_levels(depth, a);
  ASSERT_EQ(exact.size(), 3u);
  // the jump sits on a node for every spacing 1/2^p; Richardson over three spacings
  std::vector<Eigen::VectorXd> levels;
  for (int p : {7, 8, 9}) {
    const int N = 16 * (1 << p) - 1;
    const LinearSpectrum s = solve_spectrum(PotentialSpec::square(depth, a), make_grid(16.0, N));
    ASSERT_EQ(s.K, 2);
    levels.push_back(s.e);
  }
  for (int k = 0; k < 3; ++k) {
    const double r1 = (4 * levels[1][k] - levels[0][k]) / 3, r2 = (4 * levels[2][k] - levels[1][k]) / 3;
    const double r = (16 * r2 - r1) / 15;
    EXPECT_NEAR(r, exact[k], 1e-6 * std::abs(exact[k])) << "level " << k;
  }
}

TEST(Spectrum, DeeperWellLowersGroundState) {
  const RadialGrid g = make_grid_dr(30.0, 0.05);
  double prev = 0.0;
  for (double d : {8.0, 12.0, 17.0, 25.0}) {
    const double e0 = solve_spectrum(PotentialSpec::gaussian(d, 2.0), g).e[0];
    EXPECT_LT(e0, prev);
    prev = e0;
  }
}

TEST(Spectrum, DefaultPotentialOrthonormal) {
  const auto& s = default_spectrum();
  ASSERT_EQ(s.K, 2);
  for (int j = 0; j <= s.K; ++j)
    for (int k = 0; k <= s.K; ++k)
      EXPECT_NEAR(std::abs(inner(s.grid, s.phi.col(j), s.phi.col(k))), j == k ? 1.0 : 0.0, 1e-10);
}

TEST(Spectrum, ContinuousProjection) {
  const auto& s = default_spectrum();
  EXPECT_LT(norm(s.grid, RField(project_continuous(s, RField(s.phi.col(0)))), NormKind::l2()), 1e-10);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Field f(s.grid.N);
  for (int i = 0; i < s.grid.N; ++i) f[i] = cd(nd(rng), nd(rng)) * std::exp(-0.1 * s.grid.r(i));
  const Field p = project_continuous(s, f);
  const Field pp = project_continuous(s, p);
  EXPECT_LT(norm(s.grid, Field(pp - p), NormKind::l2()), 1e-10 * norm(s.grid, f, NormKind::l2()));
  for (int k = 0; k <= s.K; ++k) EXPECT_LT(std::abs(inner(s.grid, s.phi.col(k), p)), 1e-10);
}

TEST(Resolvent, FreeKernelConvolution) {
  const RadialGrid g = make_grid_dr(30.0, 0.005);
  const RField V = RField::Zero(g.N);
  const double r0 = 5.0, sig = 0.3;
  const cd z(1.0, 1e-9);
  const Field f = bump(g, r0, sig);
  const Field u = resolvent_tbc(V, g, z, f);
  // angular integration of e^{ik|x-y|}/(4 pi |x-y|) against a radial source
  const double k = 1.0;
  boost::math::quadrature::gauss_kronrod<double, 61> gk;
  for (double r : {1.0, 4.0, 5.0, 7.0, 12.0}) {
    auto src = [&](double s) { return std::exp(-std::pow((s - r0) / sig, 2)); };
    auto kernel = [&](double s) {
      const double lo = std::min(r, s), hi = std::max(r, s);
      return std::sin(k * lo) * std::exp(cd(0, k * hi)) / k;
    };
    auto re = [&](double s) { return (kernel(s) * src(s)).real(); };
    auto im = [&](double s) { return (kernel(s) * src(s)).imag(); };
    const cd oracle(gk.integrate(re, r0 - 8 * sig, r0 + 8 * sig, 15, 1e-13),
                    gk.integrate(im, r0 - 8 * sig, r0 + 8 * sig, 15, 1e-13));
    const int i = static_cast<int>(std::lround(r / g.dr)) - 1;
    EXPECT_NEAR(std::abs(u[i] - oracle), 0.0, 1e-4 * std::abs(oracle)) << "r=" << r;
  }
}

TEST(Resolvent, BelowSpectrumIsRealAndMatchesDirichlet) {
  const auto& s = default_spectrum();
  const Field f = bump(s.grid, 2.0, 0.5);
  const cd z(s.e[0] - 2.0, 0.0);
  const Field u = resolvent_outgoing(s, z, f);
  EXPECT_LT(u.imag().cwiseAbs().maxCoeff(), 1e-12 * u.cwiseAbs().maxCoeff());
  const Field ud = resolvent_dirichlet(s.V, s.grid, z, f);
  EXPECT_LT((u - ud).cwiseAbs().maxCoeff(), 1e-10 * u.cwiseAbs().maxCoeff());
  EXPECT_LT(std::abs(u[s.grid.N - 1]), 1e-12 * u.cwiseAbs().maxCoeff());
}

TEST(Resolvent, ResidualAndLinearity) {
  const auto& s = default_spectrum();
  const Field f = bump(s.grid, 2.0, 0.5), h = bump(s.grid, 4.0, 0.7);
  const cd z(2.0, 0.0);
  const Field uf = resolvent_outgoing(s, z, f), uh = resolvent_outgoing(s, z, h);
  const cd a(1.5, -0.5), b(-0.25, 2.0);
  const Field u = resolvent_outgoing(s, z, Field(a * f + b * h));
  EXPECT_LT(norm(s.grid, Field(u - a * uf - b * uh), NormKind::l2loc()), 1e-10 * norm(s.grid, u, NormKind::l2loc()));
  // interior residual
  Field res = Field(s.grid.N);
  const double h2 = 1 / (s.grid.dr * s.grid.dr);
  for (int i = 0; i < s.grid.N - 1; ++i)
    res[i] = (2.0 * uf[i] - (i ? uf[i - 1] : 0.0) - uf[i + 1]) * h2 + (s.V[i] - z) * uf[i] - f[i];
  res[s.grid.N - 1] = 0;
  EXPECT_LT(norm(s.grid, res, NormKind::l2loc()), 1e-9);
  EXPECT_THROW(resolvent_outgoing(s, cd(s.e[1], 0.0), f), std::domain_error);
}

TEST(Resolvent, ResolventIdentityBelowSpectrum) {
  const auto& s = default_spectrum();
  const Field f = bump(s.grid, 3.0, 0.6);
  const cd z1(s.e[0] - 1.0, 0.3), z2(s.e[0] - 3.0, 0.1);
  const Field lhs = resolvent_outgoing(s, z1, f) - resolvent_outgoing(s, z2, f);
  const Field rhs = (z1 - z2) * resolvent_outgoing(s, z1, resolvent_outgoing(s, z2, f));
  EXPECT_LT(norm(s.grid, Field(lhs - rhs), NormKind::l2()), 1e-8 * norm(s.grid, lhs, NormKind::l2()));
}

TEST(Resolvent, OutgoingFormAgreesWithDampedExtrapolation) {
  const auto& s = default_spectrum();
  const RField src = psi_product(s, {0, 1, 1});
  for (double E : {0.5, 1.03, 3.0}) {
    const double direct = continuum_form(s, src, E).imag();
    const auto damped = continuum_form_damped(s, src, E);
    EXPECT_GT(direct, 0.0);
    EXPECT_NEAR(damped.value, direct, 0.05 * direct) << "E=" << E;
  }
}

TEST(Assumptions, OrderingArithmetic) {
  Eigen::VectorXd e(3);
  e << -1.0, -0.4, -0.05;
  EXPECT_TRUE(a2_inequalities(e));
  e << -1.0, -0.6, -0.2;  // e0 + e2 = 2 e1
  const auto [viol, margin] = check_a3(e);
  ASSERT_FALSE(viol.empty());
  EXPECT_LT(margin, 1e-12);
  EXPECT_EQ(viol.front().k.size(), 2u);
}

TEST(Assumptions, DefaultPotentialMatchesGolden) {
  const auto& s = default_spectrum();
  const auto& cfg = default_config();
  AssumptionOptions opt;
  opt.s0_fraction = cfg.get<double>("/assumptions/s0_fraction");
  opt.s_samples = cfg.get<int>("/assumptions/s_samples");
  const AssumptionReport rep = check_assumptions(s, cfg.potential, opt);
  EXPECT_TRUE(rep.a0_ok);
  EXPECT_TRUE(rep.a1_ok);
  EXPECT_TRUE(rep.a2_inequalities_ok);
  EXPECT_TRUE(rep.a3_ok);
  EXPECT_GT(rep.gamma0, 0.0);
  EXPECT_GE(rep.gamma0_plus, rep.gamma0);

  std::ifstream in(exlab::testing::source_path("tests/golden/default_assumptions.json"));
  ASSERT_TRUE(in.good());
  nlohmann::json golden;
  in >> golden;
  EXPECT_NEAR(rep.gamma0, golden.at("gamma0").get<double>(), 1e-10);
  EXPECT_NEAR(rep.gamma0_plus, golden.at("gamma0_plus").get<double>(), 1e-10);

  // the minimizing form through the damped route
  const auto [m, k, l] = rep.gamma0_argmin;
  const RField src = psi_product(s, {m, k, k});
  double best = INFINITY;
  for (int i = 0; i < opt.s_samples; ++i) {
    const double sv = -rep.gamma0_s0 + 2 * rep.gamma0_s0 * i / (opt.s_samples - 1);
    best = std::min(best, continuum_form_damped(s, src, s.e[k] + s.e[l] - s.e[m] + sv).value);
  }
  EXPECT_NEAR(best, rep.gamma0, 0.05 * rep.gamma0);
}
