#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "bound_state.hpp"
#include "propagator.hpp"

namespace exlab {

// Geometric continuation of one channel past r_max: value amp * xi^j at the j-th node
// beyond the last grid point. Channel A = (f1 + i f2)/2, channel B = (f1 - i f2)/2.
struct Tail {
  enum Channel { A, B } channel = A;
  cd amp = 0.0;
  cd xi = 0.0;
};

// Pair (f1, f2) of complex radial fields in u-representation. Real data [h] = (Re h, Im h)
// has real components; eigenvectors of L are complex and may carry tails.
struct Vec2 {
  Field f1, f2;
  std::vector<Tail> tails;

  Vec2() = default;
  Vec2(Field a, Field b) : f1(std::move(a)), f2(std::move(b)) {
    if (f1.size() != f2.size()) throw std::invalid_argument("Vec2: components on different grids");
  }

  static Vec2 zero(Eigen::Index n) { return Vec2(Field::Zero(n), Field::Zero(n)); }

  Eigen::Index size() const { return f1.size(); }
  Field channel_A() const { return 0.5 * (f1 + cd(0, 1) * f2); }
  Field channel_B() const { return 0.5 * (f1 - cd(0, 1) * f2); }
  Field to_complex() const { return f1 + cd(0, 1) * f2; }
  bool finite() const { return f1.allFinite() && f2.allFinite(); }

  Vec2& operator+=(const Vec2& o) {
    f1 += o.f1;
    f2 += o.f2;
    for (const Tail& t : o.tails) add_tail(t);
    return *this;
  }
  Vec2& operator*=(cd c) {
    f1 *= c;
    f2 *= c;
    for (Tail& t : tails) t.amp *= c;
    return *this;
  }

  void add_tail(const Tail& t) {
    for (Tail& s : tails)
      if (s.channel == t.channel && s.xi == t.xi) {
        s.amp += t.amp;
        return;
      }
    tails.push_back(t);
  }
};

inline Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
inline Vec2 operator*(cd c, Vec2 a) { return a *= c; }
inline Vec2 operator-(Vec2 a, const Vec2& b) { return a += cd(-1.0) * b; }

// [h] = (Re h, Im h)
inline Vec2 embed(const Field& h) { return Vec2(h.real().cast<cd>(), h.imag().cast<cd>()); }
inline Vec2 embed(const RField& f1, const RField& f2) { return Vec2(f1.cast<cd>(), f2.cast<cd>()); }

inline Vec2 conj(const Vec2& f) {
  Vec2 out(f.f1.conjugate(), f.f2.conjugate());
  for (const Tail& t : f.tails)
    out.tails.push_back({t.channel == Tail::A ? Tail::B : Tail::A, std::conj(t.amp), std::conj(t.xi)});
  return out;
}

inline Vec2 sigma3(const Vec2& f) {
  Vec2 out(f.f1, -f.f2);
  for (const Tail& t : f.tails) out.tails.push_back({t.channel == Tail::A ? Tail::B : Tail::A, t.amp, t.xi});
  return out;
}

inline Vec2 sigma1(const Vec2& f) {
  Vec2 out(f.f2, f.f1);
  for (const Tail& t : f.tails) {
    if (t.channel == Tail::A)
      out.tails.push_back({Tail::B, cd(0, -1) * t.amp, t.xi});
    else
      out.tails.push_back({Tail::A, cd(0, 1) * t.amp, t.xi});
  }
  return out;
}

namespace detail {
inline cd geometric_tail(cd w) {
  if (!(std::abs(w) < 1.0)) throw std::domain_error("tail pairing does not converge");
  return w / (1.0 - w);
}
}  // namespace detail

// sesquilinear (F, G), tails summed in closed form
inline cd inner(const RadialGrid& g, const Vec2& F, const Vec2& G) {
  detail::check_size(g, F.size());
  detail::check_size(g, G.size());
  cd s = F.f1.dot(G.f1) + F.f2.dot(G.f2);
  for (const Tail& a : F.tails)
    for (const Tail& b : G.tails)
      if (a.channel == b.channel) s += 2.0 * std::conj(a.amp) * b.amp * detail::geometric_tail(std::conj(a.xi) * b.xi);
  return four_pi * g.dr * s;
}

// (sigma1 conj(F), G) = int F2 G1 + F1 G2, bilinear
inline cd pair(const RadialGrid& g, const Vec2& F, const Vec2& G) {
  detail::check_size(g, F.size());
  detail::check_size(g, G.size());
  cd s = (F.f2.array() * G.f1.array()).sum() + (F.f1.array() * G.f2.array()).sum();
  for (const Tail& a : F.tails)
    for (const Tail& b : G.tails)
      if (a.channel == b.channel)
        s += (a.channel == Tail::A ? cd(0, -2) : cd(0, 2)) * a.amp * b.amp * detail::geometric_tail(a.xi * b.xi);
  return four_pi * g.dr * s;
}

// norm of the pointwise modulus sqrt(|f1|^2 + |f2|^2) on the grid (tails ignored)
inline double norm(const RadialGrid& g, const Vec2& f, NormKind kind) {
  const RField mod = (f.f1.cwiseAbs2() + f.f2.cwiseAbs2()).cwiseSqrt();
  return norm(g, mod, kind);
}

// L2 norm including the geometric tails
inline double norm_with_tails(const RadialGrid& g, const Vec2& f) { return std::sqrt(inner(g, f, f).real()); }

// L(f1, f2) = (L_- f2, -L_+ f1), L_- = H0 - E + kappa Q^2, L_+ = H0 - E + 3 kappa Q^2
struct MatrixOperatorL {
  int m = 0;
  BoundState bs;
  RadialGrid grid;
  RField V;
  RField q;  // kappa Q^2 / r^2

  template <class Vec>
  Vec apply_H(const Vec& f, double extra) const {
    const double h2 = 1.0 / (grid.dr * grid.dr);
    Vec out(grid.N);
    for (int i = 0; i < grid.N; ++i) {
      auto lap = 2.0 * f[i];
      if (i > 0) lap -= f[i - 1];
      if (i + 1 < grid.N) lap -= f[i + 1];
      out[i] = lap * h2 + (V[i] - bs.E + extra * q[i]) * f[i];
    }
    return out;
  }
  template <class Vec>
  Vec apply_minus(const Vec& f) const { return apply_H(f, 1.0); }
  template <class Vec>
  Vec apply_plus(const Vec& f) const { return apply_H(f, 3.0); }

  // Dirichlet action on the grid
  Vec2 apply(const Vec2& f) const { return Vec2(apply_minus(f.f2), -apply_plus(f.f1)); }

  // 2N x 2N real matrix acting on the stacked vector [f1; f2]
  Eigen::MatrixXd dense() const {
    const int N = grid.N;
    const double h2 = 1.0 / (grid.dr * grid.dr);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * N, 2 * N);
    for (int i = 0; i < N; ++i) {
      const double d0 = 2.0 * h2 + V[i] - bs.E;
      A(i, N + i) = d0 + q[i];
      A(N + i, i) = -(d0 + 3.0 * q[i]);
      if (i > 0) {
        A(i, N + i - 1) = -h2;
        A(N + i, i - 1) = h2;
      }
      if (i + 1 < N) {
        A(i, N + i + 1) = -h2;
        A(N + i, i + 1) = h2;
      }
    }
    return A;
  }
};

inline MatrixOperatorL build_L(const LinearSpectrum& s, const BoundState& bs) {
  detail::check_size(s.grid, bs.Q.size());
  MatrixOperatorL L;
  L.m = bs.k;
  L.bs = bs;
  L.grid = s.grid;
  L.V = s.V;
  L.q.resize(s.grid.N);
  for (int i = 0; i < s.grid.N; ++i) {
    const double r = s.grid.r(i);
    L.q[i] = bs.kappa * bs.Q[i] * bs.Q[i] / (r * r);
  }
  return L;
}

// ---- eigenvalues with the transparent condition: T(lambda) x = (L_tbc(lambda) - lambda) x = 0

struct TbcEigenOptions {
  double tol = 1e-13;
  int max_iter = 80;
};

struct TbcEigen {
  cd lambda;
  Vec2 x;  // with channel tails
  int iterations = 0;
  double residual = 0.0;
};

namespace detail {

inline cd dxi_dz(cd xi, cd z, double dr) { return -dr * dr * xi / (2.0 * xi - (2.0 - z * dr * dr)); }

// ghost coefficients: f1_ghost = p f1_N + q f2_N, f2_ghost = -q f1_N + p f2_N
struct GhostCoef {
  cd p, q, dp, dq, xiA, xiB;
};

inline GhostCoef ghost_coef(const MatrixOperatorL& L, cd lambda) {
  const double dr = L.grid.dr;
  const cd zA = L.bs.E + cd(0, 1) * lambda, zB = L.bs.E - cd(0, 1) * lambda;
  GhostCoef c;
  c.xiA = tbc_xi(zA, dr);
  c.xiB = tbc_xi(zB, dr);
  const cd dA = cd(0, 1) * dxi_dz(c.xiA, zA, dr), dB = cd(0, -1) * dxi_dz(c.xiB, zB, dr);
  c.p = 0.5 * (c.xiA + c.xiB);
  c.q = cd(0, 0.5) * (c.xiA - c.xiB);
  c.dp = 0.5 * (dA + dB);
  c.dq = cd(0, 0.5) * (dA - dB);
  return c;
}

// interleaved ordering: f1_i at 2i, f2_i at 2i+1
inline lapack::BandLU assemble_T(const MatrixOperatorL& L, cd lambda, const GhostCoef& gc) {
  const int N = L.grid.N;
  const double h2 = 1.0 / (L.grid.dr * L.grid.dr);
  lapack::BandLU T(2 * N, 3, 3);
  for (int i = 0; i < N; ++i) {
    const double d0 = 2.0 * h2 + L.V[i] - L.bs.E;
    const int a = 2 * i, b = 2 * i + 1;
    T.at(a, a) = -lambda;
    T.at(a, b) = d0 + L.q[i];
    T.at(b, b) = -lambda;
    T.at(b, a) = -(d0 + 3.0 * L.q[i]);
    if (i > 0) {
      T.at(a, b - 2) = -h2;
      T.at(b, a - 2) = h2;
    }
    if (i + 1 < N) {
      T.at(a, b + 2) = -h2;
      T.at(b, a + 2) = h2;
    }
  }
  const int a = 2 * (N - 1), b = a + 1;
  T.at(a, a) += gc.q * h2;
  T.at(a, b) -= gc.p * h2;
  T.at(b, a) += gc.p * h2;
  T.at(b, b) += gc.q * h2;
  return T;
}

inline Eigen::VectorXcd interleave(const Vec2& f) {
  Eigen::VectorXcd x(2 * f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    x[2 * i] = f.f1[i];
    x[2 * i + 1] = f.f2[i];
  }
  return x;
}

inline Vec2 deinterleave(const Eigen::VectorXcd& x) {
  const Eigen::Index N = x.size() / 2;
  Vec2 f = Vec2::zero(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    f.f1[i] = x[2 * i];
    f.f2[i] = x[2 * i + 1];
  }
  return f;
}

}  // namespace detail

// Residual T(lambda) x on the grid, transparent condition in the last rows.
inline Vec2 tbc_residual(const MatrixOperatorL& L, cd lambda, const Vec2& x) {
  const int N = L.grid.N;
  const double h2 = 1.0 / (L.grid.dr * L.grid.dr);
  const auto gc = detail::ghost_coef(L, lambda);
  Vec2 r = L.apply(x) - lambda * x;
  r.tails.clear();
  r.f1[N - 1] += (gc.q * x.f1[N - 1] - gc.p * x.f2[N - 1]) * h2;
  r.f2[N - 1] += (gc.p * x.f1[N - 1] + gc.q * x.f2[N - 1]) * h2;
  return r;
}

// Newton iteration on the nonlinear eigenproblem (normalization v^H x = 1 with v the initial
// guess). side = +1 / -1 keeps Re lambda on one side of the imaginary axis, where the
// transparent condition has its branch cut; side = 0 leaves it free.
inline TbcEigen solve_tbc_eigen(const MatrixOperatorL& L, cd lambda0, const Vec2& x0, int side = 0,
                                const TbcEigenOptions& opt = {}) {
  const int N = L.grid.N;
  const double h2 = 1.0 / (L.grid.dr * L.grid.dr);
  const Eigen::VectorXcd v = detail::interleave(x0).normalized();
  Eigen::VectorXcd x = v;
  cd lambda = lambda0;
  TbcEigen out;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const auto gc = detail::ghost_coef(L, lambda);
    lapack::BandLU T = detail::assemble_T(L, lambda, gc);
    T.factor();
    Eigen::VectorXcd dx = -x;
    const int a = 2 * (N - 1), b = a + 1;
    dx[a] += (gc.dq * x[a] - gc.dp * x[b]) * h2;
    dx[b] += (gc.dp * x[a] + gc.dq * x[b]) * h2;
    const Eigen::VectorXcd u = T.solve(dx);
    const cd vu = v.dot(u);
    cd next = lambda - v.dot(x) / vu;
    x = u / vu;
    if (side != 0 && (next.real() > 0) != (side > 0)) next = cd(0.5 * lambda.real(), next.imag());
    const double step = std::abs(next - lambda);
    lambda = next;
    if (!x.allFinite() || !std::isfinite(lambda.real()) || !std::isfinite(lambda.imag()))
      throw std::runtime_error("solve_tbc_eigen: iteration produced non-finite values");
    if (step < opt.tol * std::max(1.0, std::abs(lambda))) {
      out.iterations = it;
      break;
    }
  }
  if (out.iterations == 0) throw std::runtime_error("solve_tbc_eigen: no convergence");
  out.lambda = lambda;
  out.x = detail::deinterleave(x);
  const auto gc = detail::ghost_coef(L, lambda);
  out.x.tails.push_back({Tail::A, 0.5 * (out.x.f1[N - 1] + cd(0, 1) * out.x.f2[N - 1]), gc.xiA});
  out.x.tails.push_back({Tail::B, 0.5 * (out.x.f1[N - 1] - cd(0, 1) * out.x.f2[N - 1]), gc.xiB});
  out.residual = norm(L.grid, tbc_residual(L, lambda, out.x), NormKind::l2()) / norm(L.grid, out.x, NormKind::l2());
  return out;
}

// ---- invariant-subspace decomposition around Q_{m,n}

struct LMode {
  int k = 0;
  cd lambda;
  Vec2 Phi;  // (u, -i v) with tails
  cd c;      // (sigma1 conj(Phi), Phi)^{-1} = i / (2 int u v)
  Field u_plus, u_minus;  // (conj u +- conj v)/2 on the grid
  std::vector<cd> family;  // independently solved: lambda, conj; for k < m also -lambda, -conj
  int iterations = 0;
  double residual = 0.0;
};

struct LSpectrum {
  int m = 0;
  double n = 0.0;
  int kappa = -1;
  LinearSpectrum lin;
  MatrixOperatorL L;
  RField R;  // L_+ R = Q
  double c_m = 0.0;  // (Q, R)^{-1}
  std::vector<LMode> modes;  // k = 0..K without m

  const RadialGrid& grid() const { return lin.grid; }
  bool has(int k) const { return k >= 0 && k <= lin.K && k != m; }
  const LMode& mode(int k) const {
    if (!has(k)) throw std::invalid_argument("LSpectrum: no mode k=" + std::to_string(k));
    return modes[k < m ? k : k - 1];
  }
  Vec2 zero_Q() const { return embed(RField(RField::Zero(grid().N)), L.bs.Q); }
  Vec2 zero_R() const { return embed(R, RField(RField::Zero(grid().N))); }
};

struct DecompositionOptions {
  TbcEigenOptions eig;
  double family_tol = 1e-8;      // relative agreement of the symmetric partners
  double initial_real = 1e-4;    // starting offset from the axis for k < m
};

inline LSpectrum spectral_decomposition(const MatrixOperatorL& L, const LinearSpectrum& s,
                                        const DecompositionOptions& opt = {}) {
  if (!(L.grid == s.grid)) throw std::invalid_argument("spectral_decomposition: grid mismatch");
  if (L.bs.n <= 0.0) throw std::invalid_argument("spectral_decomposition: needs n > 0");
  const RadialGrid& g = s.grid;
  const int m = L.m;
  LSpectrum out;
  out.m = m;
  out.n = L.bs.n;
  out.kappa = L.bs.kappa;
  out.lin = s;
  out.L = L;
  out.R = tangent_R(s, L.bs);
  out.c_m = 1.0 / integral(g, L.bs.Q, out.R);

  for (int k = 0; k <= s.K; ++k) {
    if (k == m) continue;
    const RField phi = s.phi.col(k);
    const Vec2 guess = embed(phi, RField::Zero(g.N)) + cd(0, -1) * embed(RField::Zero(g.N), phi);
    const cd lam0 = cd(0, -(s.e[k] - s.e[m]));
    const int side = k < m ? 1 : 0;
    const cd start = lam0 + double(side) * opt.initial_real;
    TbcEigen ev = solve_tbc_eigen(L, start, guess, side, opt.eig);

    LMode md;
    md.k = k;
    md.lambda = ev.lambda;
    md.iterations = ev.iterations;
    md.residual = ev.residual;
    Vec2 Phi = ev.x;
    auto overlap_plus = [&](const Vec2& F) {  // (phi_k, u^+) = int phi_k conj(A)
      return four_pi * g.dr * phi.dot(F.channel_A().conjugate());
    };
    if (k > m) {
      // real u, v: rotate by the phase of the largest f1 entry
      Eigen::Index j;
      Phi.f1.cwiseAbs().maxCoeff(&j);
      Phi *= std::conj(Phi.f1[j]) / std::abs(Phi.f1[j]);
      const cd P = pair(g, Phi, Phi);  // = -2i int u v
      Phi *= std::sqrt(cd(0, -2) / P);
      if (overlap_plus(Phi).real() < 0) Phi *= -1.0;
    } else {
      Phi *= std::conj(1.0 / overlap_plus(Phi));
    }
    md.Phi = Phi;
    md.c = 1.0 / pair(g, Phi, Phi);
    md.u_plus = Phi.channel_A().conjugate();
    md.u_minus = Phi.channel_B().conjugate();

    // symmetric partners from their own solves
    md.family.push_back(md.lambda);
    std::vector<std::pair<cd, Vec2>> partners = {{std::conj(md.lambda), conj(guess)}};
    if (k < m) {
      partners.push_back({-md.lambda, sigma3(guess)});
      partners.push_back({-std::conj(md.lambda), sigma3(conj(guess))});
    }
    for (const auto& [target, x0] : partners) {
      cd st(0, target.imag());
      int sd = 0;
      if (k < m) {
        sd = target.real() > 0 ? 1 : -1;
        st += double(sd) * opt.initial_real;
      }
      const TbcEigen pe = solve_tbc_eigen(L, st, x0, sd, opt.eig);
      if (std::abs(pe.lambda - target) > opt.family_tol * std::abs(target))
        throw std::runtime_error("spectral_decomposition: missing partner of lambda_" + std::to_string(k));
      md.family.push_back(pe.lambda);
    }
    out.modes.push_back(std::move(md));
  }
  return out;
}

// ---- projections

enum class Projection { Pk, Pk_sharp, Pm_zero, Pc_sharp, Pd, Pc_L };

inline Vec2 project_k(const LSpectrum& ls, const Vec2& f, int k) {
  const LMode& md = ls.mode(k);
  const RadialGrid& g = ls.grid();
  const Vec2 Pb = conj(md.Phi);
  return md.c * pair(g, md.Phi, f) * md.Phi + std::conj(md.c) * pair(g, Pb, f) * Pb;
}

inline Vec2 project_k_sharp(const LSpectrum& ls, const Vec2& f, int k) {
  if (k >= ls.m) throw std::invalid_argument("P_k sharp exists only for k < m");
  const LMode& md = ls.mode(k);
  const RadialGrid& g = ls.grid();
  const Vec2 S = sigma3(md.Phi), Sb = sigma3(conj(md.Phi));
  return cd(-1.0) * (md.c * pair(g, S, f) * S + std::conj(md.c) * pair(g, Sb, f) * Sb);
}

inline Vec2 project_m_zero(const LSpectrum& ls, const Vec2& f) {
  const RadialGrid& g = ls.grid();
  const cd a = ls.c_m * four_pi * g.dr * ls.R.dot(f.f2);
  const cd b = ls.c_m * four_pi * g.dr * ls.L.bs.Q.dot(f.f1);
  return a * ls.zero_Q() + b * ls.zero_R();
}

inline Vec2 project(const LSpectrum& ls, const Vec2& f, Projection which, int k = -1) {
  detail::check_size(ls.grid(), f.size());
  switch (which) {
    case Projection::Pk:
      return project_k(ls, f, k);
    case Projection::Pk_sharp:
      return project_k_sharp(ls, f, k);
    case Projection::Pm_zero:
      return project_m_zero(ls, f);
    case Projection::Pd: {
      Vec2 out = project_m_zero(ls, f);
      for (const LMode& md : ls.modes) out += project_k(ls, f, md.k);
      return out;
    }
    case Projection::Pc_sharp:
      return f - project(ls, f, Projection::Pd);
    case Projection::Pc_L: {
      Vec2 out = f - project(ls, f, Projection::Pd);
      for (const LMode& md : ls.modes)
        if (md.k < ls.m) out = out - project_k_sharp(ls, f, md.k);
      return out;
    }
  }
  throw std::invalid_argument("project: unknown projection");
}

// z_k = 2 c_k (sigma1 conj(Phi_k), [h]) for every k != m (entry m left 0)
inline std::vector<cd> scalar_project_coefficients(const LSpectrum& ls, const Vec2& h) {
  std::vector<cd> z(ls.lin.K + 1, cd(0.0));
  for (const LMode& md : ls.modes) z[md.k] = 2.0 * md.c * pair(ls.grid(), md.Phi, h);
  return z;
}

inline std::vector<cd> scalar_project_coefficients(const LSpectrum& ls, const Field& h) {
  return scalar_project_coefficients(ls, embed(h));
}

// [zeta] = Re(z Phi_k): returned as the pair with tails
inline Vec2 zeta_pair(const LSpectrum& ls, int k, cd z) {
  const LMode& md = ls.mode(k);
  return 0.5 * z * md.Phi + 0.5 * std::conj(z) * conj(md.Phi);
}

// zeta_k = z conj(u^+) + conj(z) u^- on the grid
inline Field zeta_field(const LSpectrum& ls, int k, cd z) {
  const LMode& md = ls.mode(k);
  return z * md.u_plus.conjugate() + std::conj(z) * md.u_minus;
}

// ---- semigroup e^{tL}

// Dense eigendecomposition of the Dirichlet block matrix.
class LEigenPropagator {
 public:
  explicit LEigenPropagator(const MatrixOperatorL& L, int max_N = 1200) : N_(L.grid.N) {
    if (L.grid.N > max_N)
      throw std::length_error("LEigenPropagator: N=" + std::to_string(L.grid.N) + " exceeds the dense limit " +
                              std::to_string(max_N));
    // Eigen's solver: the optimized BLAS dgeev path is not trusted on every host
    Eigen::EigenSolver<Eigen::MatrixXd> es(L.dense());
    if (es.info() != Eigen::Success) throw std::runtime_error("LEigenPropagator: eigensolver failed");
    values_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
    lu_.compute(vectors_);
  }

  Vec2 apply(const Vec2& f0, double t) const {
    if (f0.size() != N_) throw std::invalid_argument("LEigenPropagator: size mismatch");
    Eigen::VectorXcd x(2 * N_);
    x << f0.f1, f0.f2;
    Eigen::VectorXcd c = lu_.solve(x);
    for (Eigen::Index j = 0; j < c.size(); ++j) c[j] *= std::exp(values_[j] * t);
    const Eigen::VectorXcd y = vectors_ * c;
    Vec2 out(y.head(N_), y.tail(N_));
    if (!out.finite()) throw std::domain_error("LEigenPropagator: non-finite result");
    return out;
  }

  const Eigen::VectorXcd& eigenvalues() const { return values_; }

 private:
  Eigen::Index N_;
  Eigen::VectorXcd values_;
  Eigen::MatrixXcd vectors_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
};

// Fourth-order splitting L = L_A + L_B with L_A = J(H0 - E) exact per channel (Chebyshev)
// and L_B the pointwise potential block, plus the absorbing layer outside the composition.
class LTimeStepper {
 public:
  LTimeStepper(const MatrixOperatorL& L, double dt, double absorb_strength = 0.0)
      : L_(L),
        dt_(dt),
        half_outer_(L.V, L.grid, 0.5 * Yoshida4::w1 * dt),
        half_inner_(L.V, L.grid, 0.5 * (Yoshida4::w1 + Yoshida4::w0) * dt) {
    if (!(dt > 0)) throw std::invalid_argument("LTimeStepper: dt must be positive");
    const RField W = absorbing_profile(L.grid, absorb_strength);
    damp_ = (-0.5 * dt * W.array()).exp().matrix();
  }

  Vec2 step(Vec2 f) const {
    damp(f);
    stepA(f, half_outer_);
    stepB(f, Yoshida4::w1 * dt_);
    stepA(f, half_inner_);
    stepB(f, Yoshida4::w0 * dt_);
    stepA(f, half_inner_);
    stepB(f, Yoshida4::w1 * dt_);
    stepA(f, half_outer_);
    damp(f);
    if (!f.finite()) throw std::domain_error("LTimeStepper: non-finite field");
    return f;
  }

  // advance by t, which must be a whole number of steps
  Vec2 advance(Vec2 f, double t) const {
    const long steps = std::lround(t / dt_);
    if (std::abs(steps * dt_ - t) > 1e-9 * std::max(1.0, t))
      throw std::invalid_argument("LTimeStepper: t is not a multiple of dt");
    f.tails.clear();
    for (long s = 0; s < steps; ++s) f = step(std::move(f));
    return f;
  }

  double dt() const { return dt_; }

 private:
  void damp(Vec2& f) const {
    f.f1.array() *= damp_.array();
    f.f2.array() *= damp_.array();
  }

  void stepA(Vec2& f, const ChebyshevExp& U) const {
    const double E = L_.bs.E, tau = U.tau();
    const Field a = std::exp(cd(0, E * tau)) * U.apply(f.channel_A());
    const Field b = std::exp(cd(0, -E * tau)) * U.apply_backward(f.channel_B());
    f.f1 = a + b;
    f.f2 = cd(0, -1) * (a - b);
  }

  void stepB(Vec2& f, double tau) const {
    for (int i = 0; i < L_.grid.N; ++i) {
      const double q = L_.q[i], w = std::sqrt(3.0) * std::abs(q);
      const double c = std::cos(w * tau), s = w * std::abs(tau) > 1e-12 ? std::sin(w * tau) / w : tau;
      const cd a = f.f1[i], b = f.f2[i];
      f.f1[i] = c * a + s * q * b;
      f.f2[i] = c * b - 3.0 * s * q * a;
    }
  }

  MatrixOperatorL L_;
  double dt_;
  ChebyshevExp half_outer_, half_inner_;
  RField damp_;
};

enum class PropagationMethod { eigen, timestep };

inline Vec2 propagate_L(const MatrixOperatorL& L, const Vec2& f0, double t, PropagationMethod method,
                        double dt = 0.005, double absorb_strength = 0.0) {
  if (method == PropagationMethod::eigen) return LEigenPropagator(L).apply(f0, t);
  if (t < 0) throw std::invalid_argument("propagate_L: time stepping runs forward only");
  return LTimeStepper(L, dt, absorb_strength).advance(f0, t);
}

// norms of e^{tL} f0 at t = sample_dt, 2 sample_dt, ..., t_max
inline std::pair<std::vector<double>, std::vector<double>> sample_norms(const LTimeStepper& st, Vec2 f,
                                                                        double sample_dt, double t_max,
                                                                        const RadialGrid& g, NormKind kind) {
  std::vector<double> ts, vs;
  f.tails.clear();
  const long per = std::lround(sample_dt / st.dt());
  const long total = std::lround(t_max / st.dt());
  for (long s = 1; s <= total; ++s) {
    f = st.step(std::move(f));
    if (s % per == 0) {
      ts.push_back(s * st.dt());
      vs.push_back(norm(g, f, kind));
    }
  }
  return {ts, vs};
}

}  // namespace exlab
