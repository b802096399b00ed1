// SPDX-License-Identifier: Apache-2.0

#include "peds/linalg.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <string>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "peds/error.hpp"

namespace peds {

namespace {

// LAPACK banded LU (gbtrf/gbtrs) for both scalar types.
lapack_int gbtrf(lapack_int n, lapack_int kl, lapack_int ku, double* ab, lapack_int ldab, lapack_int* ipiv) {
  return LAPACKE_dgbtrf(LAPACK_COL_MAJOR, n, n, kl, ku, ab, ldab, ipiv);
}
lapack_int gbtrf(lapack_int n, lapack_int kl, lapack_int ku, Complex* ab, lapack_int ldab, lapack_int* ipiv) {
  return LAPACKE_zgbtrf(LAPACK_COL_MAJOR, n, n, kl, ku, ab, ldab, ipiv);
}
lapack_int gbtrs(char trans, lapack_int n, lapack_int kl, lapack_int ku, const double* ab, lapack_int ldab,
                 const lapack_int* ipiv, double* b) {
  return LAPACKE_dgbtrs(LAPACK_COL_MAJOR, trans, n, kl, ku, 1, ab, ldab, ipiv, b, n);
}
lapack_int gbtrs(char trans, lapack_int n, lapack_int kl, lapack_int ku, const Complex* ab, lapack_int ldab,
                 const lapack_int* ipiv, Complex* b) {
  return LAPACKE_zgbtrs(LAPACK_COL_MAJOR, trans, n, kl, ku, 1, ab, ldab, ipiv, b, n);
}

}  // namespace

template <typename Scalar>
void SparseMatrix<Scalar>::validate() const {
  if (n < 0) throw ValidationError("sparse matrix: negative dimension");
  if (row_offsets.size() != static_cast<std::size_t>(n) + 1 || row_offsets.front() != 0 ||
      static_cast<std::size_t>(row_offsets.back()) != cols.size() || cols.size() != values.size()) {
    throw ValidationError("sparse matrix: inconsistent storage sizes");
  }
  for (int r = 0; r < n; ++r) {
    if (row_offsets[r + 1] < row_offsets[r]) throw ValidationError("sparse matrix: offsets not monotone");
    for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k) {
      if (cols[k] < 0 || cols[k] >= n) throw ValidationError("sparse matrix: column index out of range");
      if (k > row_offsets[r] && cols[k] <= cols[k - 1]) {
        throw ValidationError("sparse matrix: row " + std::to_string(r) + " unsorted or duplicated");
      }
    }
  }
}

template <typename Scalar>
std::vector<Scalar> SparseMatrix<Scalar>::multiply(std::span<const Scalar> x) const {
  if (x.size() != static_cast<std::size_t>(n)) throw ValidationError("sparse multiply: size mismatch");
  std::vector<Scalar> y(static_cast<std::size_t>(n), Scalar{});
  for (int r = 0; r < n; ++r) {
    Scalar acc{};
    for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k) acc += values[k] * x[cols[k]];
    y[r] = acc;
  }
  return y;
}

template <typename Scalar>
std::vector<Scalar> SparseMatrix<Scalar>::multiply_transposed(std::span<const Scalar> x) const {
  if (x.size() != static_cast<std::size_t>(n)) throw ValidationError("sparse multiply: size mismatch");
  std::vector<Scalar> y(static_cast<std::size_t>(n), Scalar{});
  for (int r = 0; r < n; ++r) {
    for (int k = row_offsets[r]; k < row_offsets[r + 1]; ++k) y[cols[k]] += values[k] * x[r];
  }
  return y;
}

template <typename Scalar>
std::ptrdiff_t SparseMatrix<Scalar>::find(int row, int col) const {
  const auto first = cols.begin() + row_offsets[row];
  const auto last = cols.begin() + row_offsets[row + 1];
  const auto it = std::lower_bound(first, last, col);
  if (it == last || *it != col) return -1;
  return it - cols.begin();
}

template <typename Scalar>
SparseMatrix<Scalar> TripletBuilder<Scalar>::build() const {
  std::vector<Entry> sorted = entries_;
  for (const auto& e : sorted) {
    if (e.row < 0 || e.row >= n_ || e.col < 0 || e.col >= n_) {
      throw ValidationError("triplet outside matrix bounds");
    }
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Entry& a, const Entry& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  SparseMatrix<Scalar> m;
  m.n = n_;
  m.row_offsets.assign(static_cast<std::size_t>(n_) + 1, 0);
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (!m.cols.empty() && k > 0 && sorted[k].row == sorted[k - 1].row && sorted[k].col == sorted[k - 1].col) {
      m.values.back() += sorted[k].value;
      continue;
    }
    m.cols.push_back(sorted[k].col);
    m.values.push_back(sorted[k].value);
    ++m.row_offsets[sorted[k].row + 1];
  }
  for (int r = 0; r < n_; ++r) m.row_offsets[r + 1] += m.row_offsets[r];
  return m;
}

template <typename Scalar>
struct SparseLu<Scalar>::Impl {
  using EigenMatrix = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;
  Eigen::SparseLU<EigenMatrix, Eigen::COLAMDOrdering<int>> lu;

  // Banded storage, used when both bandwidths are at most kMaxBand.
  static constexpr int kMaxBand = 64;
  bool banded = false;
  int kl = 0;
  int ku = 0;
  std::vector<Scalar> band;
  std::vector<lapack_int> pivots;

  static EigenMatrix to_eigen(const SparseMatrix<Scalar>& a) {
    std::vector<Eigen::Triplet<Scalar, int>> triplets;
    triplets.reserve(a.nonzeros());
    for (int r = 0; r < a.n; ++r) {
      for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) triplets.emplace_back(r, a.cols[k], a.values[k]);
    }
    EigenMatrix m(a.n, a.n);
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
  }

  void analyze(const SparseMatrix<Scalar>& a) {
    kl = ku = 0;
    for (int r = 0; r < a.n; ++r) {
      for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
        kl = std::max(kl, r - a.cols[k]);
        ku = std::max(ku, a.cols[k] - r);
      }
    }
    banded = kl <= kMaxBand && ku <= kMaxBand;
    if (!banded) lu.analyzePattern(to_eigen(a));
  }

  int ldab() const { return 2 * kl + ku + 1; }

  void factorize(const SparseMatrix<Scalar>& a) {
    if (banded) {
      band.assign(static_cast<std::size_t>(ldab()) * a.n, Scalar(0));
      for (int r = 0; r < a.n; ++r) {
        for (int k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k) {
          const int c = a.cols[k];
          if (r - c > kl || c - r > ku) throw ValidationError("refactor: sparsity pattern changed");
          band[static_cast<std::size_t>(c) * ldab() + kl + ku + r - c] = a.values[k];
        }
      }
      pivots.assign(static_cast<std::size_t>(a.n), 0);
      const lapack_int info = gbtrf(a.n, kl, ku, band.data(), ldab(), pivots.data());
      if (info != 0) {
        throw SolverError("banded LU failed (n=" + std::to_string(a.n) + ", info=" + std::to_string(info) + ")");
      }
      return;
    }
    const EigenMatrix m = to_eigen(a);
    lu.factorize(m);
    if (lu.info() != Eigen::Success) {
      throw SolverError("sparse LU failed (n=" + std::to_string(a.n) + "): " + lu.lastErrorMessage());
    }
  }

  void banded_solve(char trans, std::vector<Scalar>& x) const {
    const lapack_int info = gbtrs(trans, static_cast<lapack_int>(x.size()), kl, ku, band.data(), ldab(),
                                  pivots.data(), x.data());
    if (info != 0) throw SolverError("banded triangular solve failed");
  }
};

template <typename Scalar>
SparseLu<Scalar>::SparseLu(const SparseMatrix<Scalar>& a) : impl_(std::make_unique<Impl>()), n_(a.n) {
  a.validate();
  if (a.n == 0) return;
  impl_->analyze(a);
  impl_->factorize(a);
}

template <typename Scalar>
SparseLu<Scalar>::~SparseLu() = default;
template <typename Scalar>
SparseLu<Scalar>::SparseLu(SparseLu&&) noexcept = default;
template <typename Scalar>
SparseLu<Scalar>& SparseLu<Scalar>::operator=(SparseLu&&) noexcept = default;

template <typename Scalar>
void SparseLu<Scalar>::refactor(const SparseMatrix<Scalar>& a) {
  if (a.n != n_) throw ValidationError("refactor: dimension changed");
  if (n_ == 0) return;
  impl_->factorize(a);
}

template <typename Scalar>
std::vector<Scalar> SparseLu<Scalar>::solve(std::span<const Scalar> b) const {
  if (b.size() != static_cast<std::size_t>(n_)) throw ValidationError("solve: right-hand side has wrong size");
  std::vector<Scalar> x(b.begin(), b.end());
  if (n_ == 0) return x;
  if (impl_->banded) {
    impl_->banded_solve('N', x);
    return x;
  }
  const Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> rhs(b.data(), n_);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(x.data(), n_) = impl_->lu.solve(rhs);
  return x;
}

template <typename Scalar>
std::vector<Scalar> SparseLu<Scalar>::solve_transposed(std::span<const Scalar> c) const {
  if (c.size() != static_cast<std::size_t>(n_)) throw ValidationError("solve_transposed: right-hand side has wrong size");
  std::vector<Scalar> x(c.begin(), c.end());
  if (n_ == 0) return x;
  if (impl_->banded) {
    impl_->banded_solve('T', x);
    return x;
  }
  const Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> rhs(c.data(), n_);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(x.data(), n_) = impl_->lu.transpose().solve(rhs);
  return x;
}

template <typename Scalar>
double inf_norm(std::span<const Scalar> v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, static_cast<double>(std::abs(x)));
  return m;
}

template <typename Scalar>
double residual_inf_norm(const SparseMatrix<Scalar>& a, std::span<const Scalar> x, std::span<const Scalar> b,
                         bool transposed) {
  const auto ax = transposed ? a.multiply_transposed(x) : a.multiply(x);
  double m = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) m = std::max(m, static_cast<double>(std::abs(ax[i] - b[i])));
  return m;
}

namespace {

template <typename Scalar>
void check_finite(std::span<const Scalar> x, const char* what) {
  for (const auto& v : x) {
    if (!std::isfinite(std::abs(v))) throw SolverError(std::string(what) + ": non-finite solution");
  }
}

}  // namespace

template <typename Scalar>
LinearSolution<Scalar> solve(const SparseMatrix<Scalar>& a, std::span<const Scalar> b) {
  auto lu = std::make_shared<const SparseLu<Scalar>>(a);
  LinearSolution<Scalar> out;
  out.x = lu->solve(b);
  check_finite<Scalar>(out.x, "solve");
  out.residual_norm = residual_inf_norm<Scalar>(a, out.x, b);
  out.factorization = std::move(lu);
  return out;
}

template <typename Scalar>
std::vector<Scalar> solve_transposed(const SparseMatrix<Scalar>& a, std::span<const Scalar> c) {
  const SparseLu<Scalar> lu(a);
  auto x = lu.solve_transposed(c);
  check_finite<Scalar>(x, "solve_transposed");
  return x;
}

#define PEDS_INSTANTIATE(S)                                                                             \
  template struct SparseMatrix<S>;                                                                      \
  template class TripletBuilder<S>;                                                                     \
  template class SparseLu<S>;                                                                           \
  template double inf_norm<S>(std::span<const S>);                                                      \
  template double residual_inf_norm<S>(const SparseMatrix<S>&, std::span<const S>, std::span<const S>, \
                                       bool);                                                           \
  template LinearSolution<S> solve<S>(const SparseMatrix<S>&, std::span<const S>);                      \
  template std::vector<S> solve_transposed<S>(const SparseMatrix<S>&, std::span<const S>);

PEDS_INSTANTIATE(double)
PEDS_INSTANTIATE(Complex)

#undef PEDS_INSTANTIATE

}  // namespace peds
