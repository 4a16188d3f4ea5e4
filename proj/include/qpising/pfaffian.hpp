#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace qpising {

// Pf = phase * exp(log_abs). phase is +-1 for real input.
struct LogPf {
  double log_abs = 0.0;
  std::complex<double> phase{1.0, 0.0};
  bool singular() const { return std::isinf(log_abs) && log_abs < 0; }
  std::complex<double> value() const { return singular() ? 0.0 : phase * std::exp(log_abs); }
};

inline LogPf operator*(const LogPf& a, const LogPf& b) {
  LogPf r;
  r.log_abs = a.log_abs + b.log_abs;
  r.phase = a.phase * b.phase;
  return r;
}

// Parlett-Reid skew tridiagonalisation with partial pivoting. A is taken by value and destroyed.
template <typename Scalar>
LogPf log_pfaffian(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> A) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n) throw std::invalid_argument("log_pfaffian: matrix not square");
  LogPf out;
  if (n % 2 == 1) {
    out.log_abs = -std::numeric_limits<double>::infinity();
    out.phase = 0.0;
    return out;
  }
  for (Eigen::Index k = 0; k + 1 < n; k += 2) {
    Eigen::Index kp;
    A.col(k).tail(n - k - 1).cwiseAbs().maxCoeff(&kp);
    kp += k + 1;
    if (kp != k + 1) {
      A.row(k + 1).swap(A.row(kp));
      A.col(k + 1).swap(A.col(kp));
      out.phase = -out.phase;
    }
    const Scalar piv = A(k, k + 1);
    if (piv == Scalar(0)) {
      out.log_abs = -std::numeric_limits<double>::infinity();
      out.phase = 0.0;
      return out;
    }
    out.log_abs += std::log(std::abs(piv));
    if constexpr (std::is_same_v<Scalar, double>) {
      if (piv < 0) out.phase = -out.phase;
    } else {
      out.phase *= piv / std::abs(piv);
    }
    const Eigen::Index m = n - k - 2;
    if (m > 0) {
      // A22 += tau * a^T - a * tau^T  with tau = A(k, k+2:)/piv, a = A(k+2:, k+1)
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> tau = A.row(k).tail(m).transpose() / piv;
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a = A.col(k + 1).tail(m);
      A.bottomRightCorner(m, m).noalias() += tau * a.transpose();
      A.bottomRightCorner(m, m).noalias() -= a * tau.transpose();
    }
  }
  return out;
}

using DenseR = Eigen::MatrixXd;
using DenseC = Eigen::MatrixXcd;
using SparseR = Eigen::SparseMatrix<double, Eigen::ColMajor>;

// Block elimination of an antisymmetric sparse matrix whose sparsity pattern is block-tridiagonal
// after a user-supplied ordering of index groups. Variables of a group that do not couple outside
// the group are condensed first. Provides log Pf with exact sign and linear solves.
class BlockSkewSolver {
 public:
  // groups: disjoint index sets covering 0..n-1; couplings only between consecutive groups.
  BlockSkewSolver(const SparseR& M, const std::vector<std::vector<int>>& groups, bool keep_factors);
  ~BlockSkewSolver();
  BlockSkewSolver(BlockSkewSolver&&) noexcept;
  BlockSkewSolver& operator=(BlockSkewSolver&&) noexcept;

  LogPf log_pf() const { return pf_; }
  bool can_solve() const { return keep_; }
  // Solves M x = b. Requires keep_factors.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  LogPf pf_;
  bool keep_ = false;
};

// Parity of a permutation given as perm[i] = image of i; returns +1 or -1.
int permutation_sign(const std::vector<int>& perm);

}  // namespace qpising
