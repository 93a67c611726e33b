#pragma once

#include <utility>
#include <vector>

namespace um2n {

struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;  // size n + 1
  std::vector<int> col;
  std::vector<double> val;

  std::vector<double> multiply(const std::vector<double>& x) const;
};

/// Accumulates (i, j, value) entries and compresses them into CSR with
/// sorted columns and summed duplicates (deterministic layout).
class MatrixBuilder {
 public:
  explicit MatrixBuilder(int n) : rows_(n) {}

  void add(int i, int j, double v) { rows_[i].emplace_back(j, v); }

  CsrMatrix build() const;

 private:
  std::vector<std::vector<std::pair<int, double>>> rows_;
};

struct CgResult {
  int iterations = 0;
  double rel_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradient for SPD systems. `x` holds the
/// initial guess on entry and the solution on return; convergence is judged
/// by |b - Ax| / |b|. Stops at max_iters without throwing (see rel_residual).
CgResult conjugate_gradient(const CsrMatrix& A, const std::vector<double>& b,
                            std::vector<double>& x, double rel_tol, int max_iters);

/// Jacobi-preconditioned BiCGSTAB for general (nonsymmetric) systems, same
/// calling convention as conjugate_gradient. On scalar breakdown the iteration
/// stops early with the residual reached so far.
CgResult bicgstab(const CsrMatrix& A, const std::vector<double>& b, std::vector<double>& x,
                  double rel_tol, int max_iters);

}  // namespace um2n
