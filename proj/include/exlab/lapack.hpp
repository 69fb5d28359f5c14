#pragma once

#include <algorithm>
#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace exlab::lapack {

using cd = std::complex<double>;

inline void check(lapack_int info, const char* what) {
  if (info != 0) throw std::runtime_error(std::string(what) + " failed, info=" + std::to_string(info));
}

// Eigenpairs of a real symmetric tridiagonal matrix with eigenvalues in (vl, vu].
struct TridiagEig {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

// number of eigenvalues below x of the symmetric tridiagonal (d, e), Sturm sequence
inline int sturm_count(const Eigen::VectorXd& d, const Eigen::VectorXd& e, double x) {
  int cnt = 0;
  double q = 1.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double b2 = i > 0 ? e[i - 1] * e[i - 1] : 0.0;
    q = d[i] - x - (i > 0 ? b2 / q : 0.0);
    if (q == 0.0) q = -1e-300;
    if (q < 0) ++cnt;
  }
  return cnt;
}

inline TridiagEig stevr_range(Eigen::VectorXd d, Eigen::VectorXd e, double vl, double vu) {
  const lapack_int n = static_cast<lapack_int>(d.size());
  // eigenvector storage sized by a Sturm count (plus slack), not n x n
  const lapack_int mcap = std::min<lapack_int>(n, sturm_count(d, e, vu) - sturm_count(d, e, vl) + 2);
  e.conservativeResize(n);
  lapack_int m = 0;
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, std::max<lapack_int>(mcap, 1));
  std::vector<lapack_int> isuppz(2 * n);
  lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'V', n, d.data(), e.data(), vl, vu, 0, 0,
                                   0.0, &m, w.data(), z.data(), n, isuppz.data());
  check(info, "dstevr");
  return {w.head(m), z.leftCols(m)};
}

inline TridiagEig stevr_all(Eigen::VectorXd d, Eigen::VectorXd e) {
  const lapack_int n = static_cast<lapack_int>(d.size());
  e.conservativeResize(n);
  lapack_int m = 0;
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, n);
  std::vector<lapack_int> isuppz(2 * n);
  lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'A', n, d.data(), e.data(), 0.0, 0.0, 0, 0,
                                   0.0, &m, w.data(), z.data(), n, isuppz.data());
  check(info, "dstevr");
  return {w.head(m), z.leftCols(m)};
}

// Solve a tridiagonal system; dl/du are the sub/super diagonals (length n-1).
inline Eigen::VectorXd gtsv(Eigen::VectorXd dl, Eigen::VectorXd d, Eigen::VectorXd du, Eigen::VectorXd b) {
  const lapack_int n = static_cast<lapack_int>(d.size());
  check(LAPACKE_dgtsv(LAPACK_COL_MAJOR, n, 1, dl.data(), d.data(), du.data(), b.data(), n), "dgtsv");
  return b;
}

inline Eigen::VectorXcd gtsv(Eigen::VectorXcd dl, Eigen::VectorXcd d, Eigen::VectorXcd du, Eigen::VectorXcd b) {
  const lapack_int n = static_cast<lapack_int>(d.size());
  check(LAPACKE_zgtsv(LAPACK_COL_MAJOR, n, 1, dl.data(), d.data(), du.data(), b.data(), n), "zgtsv");
  return b;
}

// LU-factored complex band matrix (kl sub- and ku super-diagonals).
class BandLU {
 public:
  BandLU(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1), ab_(ldab_ * n, cd(0.0)), ipiv_(n) {}

  // entry (i, j) of the unfactored matrix, |i-j| within the band
  cd& at(int i, int j) { return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)]; }

  void factor() {
    check(LAPACKE_zgbtrf(LAPACK_COL_MAJOR, n_, n_, kl_, ku_, ab_.data(), ldab_, ipiv_.data()), "zgbtrf");
  }

  Eigen::VectorXcd solve(Eigen::VectorXcd b) const {
    check(LAPACKE_zgbtrs(LAPACK_COL_MAJOR, 'N', n_, kl_, ku_, 1, ab_.data(), ldab_, ipiv_.data(), b.data(), n_),
          "zgbtrs");
    return b;
  }

  int size() const { return n_; }

 private:
  int n_, kl_, ku_, ldab_;
  std::vector<cd> ab_;
  std::vector<lapack_int> ipiv_;
};

}  // namespace exlab::lapack
