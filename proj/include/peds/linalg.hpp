// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace peds {

using Complex = std::complex<double>;

// Compressed-row sparse matrix. Columns are sorted and unique within each row.
template <typename Scalar>
struct SparseMatrix {
  int n = 0;
  std::vector<int> row_offsets;
  std::vector<int> cols;
  std::vector<Scalar> values;

  std::size_t nonzeros() const { return values.size(); }
  // Throws ValidationError if the storage is malformed.
  void validate() const;
  std::vector<Scalar> multiply(std::span<const Scalar> x) const;
  std::vector<Scalar> multiply_transposed(std::span<const Scalar> x) const;
  // Position of (row, col) in `values`, or -1 if structurally zero.
  std::ptrdiff_t find(int row, int col) const;
};

// Accumulates (row, col, value) entries; duplicates are summed on build().
template <typename Scalar>
class TripletBuilder {
 public:
  explicit TripletBuilder(int n) : n_(n) {}
  void add(int row, int col, Scalar value) { entries_.push_back({row, col, value}); }
  void reserve(std::size_t count) { entries_.reserve(count); }
  SparseMatrix<Scalar> build() const;

 private:
  struct Entry {
    int row, col;
    Scalar value;
  };
  int n_;
  std::vector<Entry> entries_;
};

// Direct LU factorization with a fill-reducing column ordering. Immutable after
// construction apart from refactor(); concurrent solves are safe.
template <typename Scalar>
class SparseLu {
 public:
  explicit SparseLu(const SparseMatrix<Scalar>& a);
  ~SparseLu();
  SparseLu(SparseLu&&) noexcept;
  SparseLu& operator=(SparseLu&&) noexcept;

  // Numeric refactorization reusing the symbolic analysis; `a` must have the
  // sparsity pattern of the matrix passed to the constructor.
  void refactor(const SparseMatrix<Scalar>& a);

  int size() const { return n_; }
  std::vector<Scalar> solve(std::span<const Scalar> b) const;
  // Solves A^T x = c. For complex systems this is the plain transpose, never
  // the conjugate transpose: adjoint sensitivities here use the bilinear
  // pairing lambda^T A u.
  std::vector<Scalar> solve_transposed(std::span<const Scalar> c) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int n_ = 0;
};

template <typename Scalar>
struct LinearSolution {
  std::vector<Scalar> x;
  double residual_norm = 0.0;  // ||A x - b||_inf
  std::shared_ptr<const SparseLu<Scalar>> factorization;
};

template <typename Scalar>
double residual_inf_norm(const SparseMatrix<Scalar>& a, std::span<const Scalar> x, std::span<const Scalar> b,
                         bool transposed = false);

template <typename Scalar>
double inf_norm(std::span<const Scalar> v);

// Factorize and solve; throws SolverError for singular matrices.
template <typename Scalar>
LinearSolution<Scalar> solve(const SparseMatrix<Scalar>& a, std::span<const Scalar> b);

template <typename Scalar>
std::vector<Scalar> solve_transposed(const SparseMatrix<Scalar>& a, std::span<const Scalar> c);

}  // namespace peds
