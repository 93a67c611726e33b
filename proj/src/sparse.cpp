#include "um2n/sparse.hpp"

#include <algorithm>
#include <cmath>

#include "um2n/errors.hpp"

namespace um2n {

std::vector<double> CsrMatrix::multiply(const std::vector<double>& x) const {
  std::vector<double> y(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
    y[i] = s;
  }
  return y;
}

CsrMatrix MatrixBuilder::build() const {
  CsrMatrix m;
  m.n = static_cast<int>(rows_.size());
  m.row_ptr.assign(m.n + 1, 0);
  std::vector<std::pair<int, double>> row;
  for (int i = 0; i < m.n; ++i) {
    row.assign(rows_[i].begin(), rows_[i].end());
    std::sort(row.begin(), row.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t k = 0; k < row.size();) {
      size_t j = k + 1;
      double s = row[k].second;
      while (j < row.size() && row[j].first == row[k].first) s += row[j++].second;
      m.col.push_back(row[k].first);
      m.val.push_back(s);
      k = j;
    }
    m.row_ptr[i + 1] = static_cast<int>(m.col.size());
  }
  return m;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

CgResult conjugate_gradient(const CsrMatrix& A, const std::vector<double>& b,
                            std::vector<double>& x, double rel_tol, int max_iters) {
  const int n = A.n;
  if (static_cast<int>(x.size()) != n) x.assign(n, 0.0);

  std::vector<double> diag(n, 1.0);
  for (int i = 0; i < n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      if (A.col[k] == i && A.val[k] != 0.0) diag[i] = A.val[k];

  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    x.assign(n, 0.0);
    return {0, 0.0};
  }

  std::vector<double> r = A.multiply(x);
  for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
  std::vector<double> z(n), p(n);
  for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = dot(r, z);

  CgResult res;
  res.rel_residual = std::sqrt(dot(r, r)) / bnorm;
  for (int it = 0; it < max_iters && res.rel_residual >= rel_tol; ++it) {
    const std::vector<double> ap = A.multiply(p);
    const double pap = dot(p, ap);
    if (pap <= 0.0) throw NumericalError("conjugate gradient: matrix is not positive definite");
    const double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    res.iterations = it + 1;
    res.rel_residual = std::sqrt(dot(r, r)) / bnorm;
  }
  return res;
}

CgResult bicgstab(const CsrMatrix& A, const std::vector<double>& b, std::vector<double>& x,
                  double rel_tol, int max_iters) {
  const int n = A.n;
  if (static_cast<int>(x.size()) != n) x.assign(n, 0.0);

  std::vector<double> diag(n, 1.0);
  for (int i = 0; i < n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      if (A.col[k] == i && A.val[k] != 0.0) diag[i] = A.val[k];

  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    x.assign(n, 0.0);
    return {0, 0.0};
  }

  std::vector<double> r = A.multiply(x);
  for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
  const std::vector<double> r0 = r;
  std::vector<double> p(n, 0.0), v(n, 0.0), ph(n), sh(n);
  double rho = 1.0, alpha = 1.0, omega = 1.0;

  CgResult res;
  res.rel_residual = std::sqrt(dot(r, r)) / bnorm;
  for (int it = 0; it < max_iters && res.rel_residual >= rel_tol; ++it) {
    const double rho_next = dot(r0, r);
    if (rho_next == 0.0 || omega == 0.0) break;  // scalar breakdown
    const double beta = (rho_next / rho) * (alpha / omega);
    rho = rho_next;
    for (int i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    for (int i = 0; i < n; ++i) ph[i] = p[i] / diag[i];
    v = A.multiply(ph);
    const double r0v = dot(r0, v);
    if (r0v == 0.0) break;
    alpha = rho / r0v;
    std::vector<double> s = r;
    for (int i = 0; i < n; ++i) s[i] -= alpha * v[i];
    res.iterations = it + 1;
    if (std::sqrt(dot(s, s)) / bnorm < rel_tol) {
      for (int i = 0; i < n; ++i) x[i] += alpha * ph[i];
      res.rel_residual = std::sqrt(dot(s, s)) / bnorm;
      return res;
    }
    for (int i = 0; i < n; ++i) sh[i] = s[i] / diag[i];
    const std::vector<double> t = A.multiply(sh);
    const double tt = dot(t, t);
    if (tt == 0.0) break;
    omega = dot(t, s) / tt;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * ph[i] + omega * sh[i];
      r[i] = s[i] - omega * t[i];
    }
    res.rel_residual = std::sqrt(dot(r, r)) / bnorm;
  }
  return res;
}

}  // namespace um2n
