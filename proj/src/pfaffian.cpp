#include "qpising/pfaffian.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace qpising {

int permutation_sign(const std::vector<int>& perm) {
  std::vector<char> seen(perm.size(), 0);
  int sign = 1;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (seen[i]) continue;
    std::size_t len = 0;
    for (std::size_t j = i; !seen[j]; j = static_cast<std::size_t>(perm[j])) {
      seen[j] = 1;
      ++len;
    }
    if (len % 2 == 0) sign = -sign;
  }
  return sign;
}

struct BlockSkewSolver::Impl {
  struct Pivot {
    std::vector<int> idx;
    Eigen::PartialPivLU<DenseR> lu;
    int next = -1;  // only later pivot this one couples to
    DenseR E;       // M[idx, pivots[next].idx]
  };
  std::vector<Pivot> pivots;
  Eigen::Index n = 0;
};

BlockSkewSolver::~BlockSkewSolver() = default;
BlockSkewSolver::BlockSkewSolver(BlockSkewSolver&&) noexcept = default;
BlockSkewSolver& BlockSkewSolver::operator=(BlockSkewSolver&&) noexcept = default;

BlockSkewSolver::BlockSkewSolver(const SparseR& M, const std::vector<std::vector<int>>& groups,
                                 bool keep_factors)
    : impl_(std::make_unique<Impl>()), keep_(keep_factors) {
  const Eigen::Index n = M.rows();
  if (M.cols() != n) throw std::invalid_argument("BlockSkewSolver: matrix not square");
  impl_->n = n;

  std::vector<int> group_of(n, -1);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int i : groups[g]) {
      if (i < 0 || i >= n || group_of[i] != -1) throw std::invalid_argument("BlockSkewSolver: bad groups");
      group_of[i] = static_cast<int>(g);
    }
  for (Eigen::Index i = 0; i < n; ++i)
    if (group_of[i] < 0) throw std::invalid_argument("BlockSkewSolver: groups do not cover all indices");

  // interior = no coupling outside the own group
  std::vector<char> boundary(n, 0);
  for (Eigen::Index c = 0; c < M.outerSize(); ++c)
    for (SparseR::InnerIterator it(M, c); it; ++it)
      if (it.value() != 0.0 && group_of[it.row()] != group_of[c]) {
        boundary[it.row()] = 1;
        boundary[c] = 1;
      }

  auto& piv = impl_->pivots;
  for (const auto& g : groups) {
    Impl::Pivot I, B;
    for (int i : g) (boundary[i] ? B.idx : I.idx).push_back(i);
    if (I.idx.size() % 2 == 1) {
      // odd interior cannot be a pivot on its own
      B.idx.insert(B.idx.end(), I.idx.begin(), I.idx.end());
      I.idx.clear();
      std::sort(B.idx.begin(), B.idx.end());
    }
    if (!I.idx.empty()) piv.push_back(std::move(I));
    if (!B.idx.empty()) piv.push_back(std::move(B));
  }

  std::vector<int> piv_of(n), local(n), perm;
  perm.reserve(n);
  for (std::size_t p = 0; p < piv.size(); ++p)
    for (std::size_t a = 0; a < piv[p].idx.size(); ++a) {
      piv_of[piv[p].idx[a]] = static_cast<int>(p);
      local[piv[p].idx[a]] = static_cast<int>(a);
      perm.push_back(piv[p].idx[a]);
    }

  std::vector<DenseR> diag(piv.size());
  for (std::size_t p = 0; p < piv.size(); ++p) diag[p] = DenseR::Zero(piv[p].idx.size(), piv[p].idx.size());
  for (Eigen::Index c = 0; c < M.outerSize(); ++c)
    for (SparseR::InnerIterator it(M, c); it; ++it) {
      if (it.value() == 0.0) continue;
      const int pr = piv_of[it.row()], pc = piv_of[c];
      if (pr == pc) {
        diag[pr](local[it.row()], local[c]) += it.value();
      } else if (pr < pc) {
        auto& P = piv[pr];
        if (P.next == -1) {
          P.next = pc;
          P.E = DenseR::Zero(P.idx.size(), piv[pc].idx.size());
        } else if (P.next != pc) {
          throw std::invalid_argument("BlockSkewSolver: grouping is not block-tridiagonal");
        }
        P.E(local[it.row()], local[c]) += it.value();
      }
    }

  // pf(M) = sign(perm) * prod_p pf(S_p); S_next += E^T S_p^{-1} E
  pf_.phase = permutation_sign(perm);
  for (std::size_t p = 0; p < piv.size(); ++p) {
    DenseR S = 0.5 * (diag[p] - diag[p].transpose());
    pf_ = pf_ * log_pfaffian<double>(S);
    if (pf_.singular()) {
      keep_ = false;
      piv.clear();
      return;
    }
    auto& P = piv[p];
    P.lu.compute(S);
    if (P.next >= 0) diag[P.next].noalias() += P.E.transpose() * P.lu.solve(P.E);
    diag[p].resize(0, 0);
    if (!keep_) P.lu = Eigen::PartialPivLU<DenseR>();
  }
  if (!keep_) piv.clear();
}

Eigen::MatrixXd BlockSkewSolver::solve(const Eigen::MatrixXd& Bm) const {
  if (!keep_) throw std::logic_error("BlockSkewSolver: factors not kept or matrix singular");
  const auto& piv = impl_->pivots;
  if (Bm.rows() != impl_->n) throw std::invalid_argument("BlockSkewSolver::solve: size mismatch");
  const Eigen::Index m = Bm.cols();
  std::vector<DenseR> z(piv.size());
  for (std::size_t p = 0; p < piv.size(); ++p) {
    z[p].resize(piv[p].idx.size(), m);
    for (std::size_t a = 0; a < piv[p].idx.size(); ++a) z[p].row(a) = Bm.row(piv[p].idx[a]);
  }
  // forward: z_q -= M[q,p] S_p^{-1} z_p with M[q,p] = -E_p^T
  for (std::size_t p = 0; p < piv.size(); ++p)
    if (piv[p].next >= 0) z[piv[p].next].noalias() += piv[p].E.transpose() * piv[p].lu.solve(z[p]);
  // backward: x_p = S_p^{-1} (z_p - E_p x_next)
  for (std::size_t p = piv.size(); p-- > 0;) {
    if (piv[p].next >= 0) z[p].noalias() -= piv[p].E * z[piv[p].next];
    z[p] = piv[p].lu.solve(z[p]);
  }
  Eigen::MatrixXd X(impl_->n, m);
  for (std::size_t p = 0; p < piv.size(); ++p)
    for (std::size_t a = 0; a < piv[p].idx.size(); ++a) X.row(piv[p].idx[a]) = z[p].row(a);
  return X;
}

Eigen::VectorXd BlockSkewSolver::solve(const Eigen::VectorXd& b) const {
  Eigen::MatrixXd B = b;
  return solve(B).col(0);
}

}  // namespace qpising
