// Compressed sparse-column storage and the least-squares kernels: column
// scaling, normal-matrix formation, products with A and A^T, and triangular
// solves in a chosen application format.
//
// All matrices are stored in fp64. "In format f" means inner products are
// accumulated in fp64 with one final rounding per output component (matvec,
// form_normal), or that every elementary operation is rounded individually
// (triangular solves), matching how a narrow-precision kernel would behave.

#ifndef ICLS_SPARSE_HPP
#define ICLS_SPARSE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "icls/fp.hpp"

namespace icls {

using index_t = std::int64_t;

struct Triplet {
    index_t row;
    index_t col;
    double value;
};

// Compressed sparse-column matrix. Row indices are strictly increasing within
// each column and no explicit zeros are stored after construction.
struct SparseMatrix {
    index_t m = 0;
    index_t n = 0;
    std::vector<index_t> col_ptr;  // length n+1
    std::vector<index_t> row_idx;
    std::vector<double> values;

    index_t nnz() const { return static_cast<index_t>(row_idx.size()); }

    // Sums duplicates, drops exact zeros, sorts rows within columns.
    static SparseMatrix from_triplets(index_t m, index_t n,
                                      std::vector<Triplet> entries);
};

SparseMatrix transpose(const SparseMatrix& A);

// Column-scaled problem B = A * diag(S) with unit column norms.
struct ScaledProblem {
    SparseMatrix B;
    std::vector<double> S;
    std::vector<double> b;
};

// Lower triangle of B^T B rounded into `format`; entries whose fp64 inner
// product was nonzero but rounded to exactly zero are dropped and counted.
struct NormalMatrix {
    SparseMatrix C;
    FpFormat format;
    std::int64_t lost_entries = 0;
};

// S[j] = 1 / ||A(:,j)||_2 computed in fp64. Throws ZeroColumn.
ScaledProblem scale_columns(const SparseMatrix& A);

NormalMatrix form_normal(const SparseMatrix& B, const FpFormat& format);

// y = A x (resp. A^T y), fp64 accumulation, one final rounding per component
// when format is narrower than fp64. Overflow is reported through `flags`.
std::vector<double> matvec(const SparseMatrix& A, std::span<const double> x,
                           const FpFormat& format, RoundFlags* flags = nullptr);
std::vector<double> matvec_t(const SparseMatrix& A, std::span<const double> y,
                             const FpFormat& format,
                             RoundFlags* flags = nullptr);

// Entry-wise cast of a matrix into `format`; entries that underflow to zero
// drop out of the pattern (counted into `lost` when given).
SparseMatrix squeeze_matrix(const SparseMatrix& A, const FpFormat& format,
                            std::int64_t* lost = nullptr);

// Forward substitution with L (resp. backward substitution with L^T), every
// multiply/subtract/divide rounded to `format`. Throws ApplyBreakdown when an
// intermediate rounds to +/-inf.
std::vector<double> solve_lower(const SparseMatrix& L,
                                std::span<const double> rhs,
                                const FpFormat& format);
std::vector<double> solve_upper_t(const SparseMatrix& L,
                                  std::span<const double> rhs,
                                  const FpFormat& format);

}  // namespace icls

#endif  // ICLS_SPARSE_HPP
