#include "icls/sparse.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "icls/errors.hpp"

namespace icls {

SparseMatrix SparseMatrix::from_triplets(index_t m, index_t n,
                                         std::vector<Triplet> entries) {
    if (m < 0 || n < 0) throw DimensionError("negative matrix dimension");
    for (const Triplet& t : entries) {
        if (t.row < 0 || t.row >= m || t.col < 0 || t.col >= n)
            throw DimensionError("triplet index (" + std::to_string(t.row) +
                                 "," + std::to_string(t.col) +
                                 ") outside " + std::to_string(m) + "x" +
                                 std::to_string(n));
    }
    std::sort(entries.begin(), entries.end(),
              [](const Triplet& a, const Triplet& b) {
                  return a.col != b.col ? a.col < b.col : a.row < b.row;
              });

    SparseMatrix A;
    A.m = m;
    A.n = n;
    A.col_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    A.row_idx.reserve(entries.size());
    A.values.reserve(entries.size());

    std::size_t k = 0;
    for (index_t j = 0; j < n; ++j) {
        while (k < entries.size() && entries[k].col == j) {
            index_t row = entries[k].row;
            double sum = 0.0;
            while (k < entries.size() && entries[k].col == j &&
                   entries[k].row == row) {
                sum += entries[k].value;
                ++k;
            }
            if (sum != 0.0) {
                A.row_idx.push_back(row);
                A.values.push_back(sum);
            }
        }
        A.col_ptr[static_cast<std::size_t>(j) + 1] =
            static_cast<index_t>(A.row_idx.size());
    }
    return A;
}

SparseMatrix transpose(const SparseMatrix& A) {
    SparseMatrix T;
    T.m = A.n;
    T.n = A.m;
    T.col_ptr.assign(static_cast<std::size_t>(A.m) + 1, 0);
    T.row_idx.resize(A.row_idx.size());
    T.values.resize(A.values.size());

    for (index_t r : A.row_idx) ++T.col_ptr[static_cast<std::size_t>(r) + 1];
    for (index_t i = 0; i < A.m; ++i)
        T.col_ptr[static_cast<std::size_t>(i) + 1] +=
            T.col_ptr[static_cast<std::size_t>(i)];

    std::vector<index_t> next(T.col_ptr.begin(), T.col_ptr.end() - 1);
    for (index_t j = 0; j < A.n; ++j) {
        for (index_t p = A.col_ptr[j]; p < A.col_ptr[j + 1]; ++p) {
            const index_t i = A.row_idx[p];
            const index_t q = next[static_cast<std::size_t>(i)]++;
            T.row_idx[q] = j;
            T.values[q] = A.values[p];
        }
    }
    return T;
}

ScaledProblem scale_columns(const SparseMatrix& A) {
    ScaledProblem out;
    out.B = A;
    out.S.resize(static_cast<std::size_t>(A.n));
    for (index_t j = 0; j < A.n; ++j) {
        double sumsq = 0.0;
        for (index_t p = A.col_ptr[j]; p < A.col_ptr[j + 1]; ++p)
            sumsq += A.values[p] * A.values[p];
        const double norm = std::sqrt(sumsq);
        if (norm == 0.0) throw ZeroColumn(j);
        const double s = 1.0 / norm;
        out.S[static_cast<std::size_t>(j)] = s;
        for (index_t p = A.col_ptr[j]; p < A.col_ptr[j + 1]; ++p)
            out.B.values[p] = A.values[p] * s;
    }
    return out;
}

NormalMatrix form_normal(const SparseMatrix& B, const FpFormat& format) {
    const SparseMatrix BT = transpose(B);  // row-wise access to B
    NormalMatrix out;
    out.format = format;
    SparseMatrix& C = out.C;
    C.m = B.n;
    C.n = B.n;
    C.col_ptr.assign(static_cast<std::size_t>(B.n) + 1, 0);

    std::vector<double> work(static_cast<std::size_t>(B.n), 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(B.n), false);
    std::vector<index_t> touched;

    for (index_t j = 0; j < B.n; ++j) {
        touched.clear();
        // C(i,j) = sum_k B(k,i) B(k,j) over shared rows k, i >= j.
        for (index_t p = B.col_ptr[j]; p < B.col_ptr[j + 1]; ++p) {
            const index_t k = B.row_idx[p];
            const double v = B.values[p];
            for (index_t q = BT.col_ptr[k]; q < BT.col_ptr[k + 1]; ++q) {
                const index_t i = BT.row_idx[q];
                if (i < j) continue;
                if (!seen[static_cast<std::size_t>(i)]) {
                    seen[static_cast<std::size_t>(i)] = true;
                    touched.push_back(i);
                }
                work[static_cast<std::size_t>(i)] += BT.values[q] * v;
            }
        }
        std::sort(touched.begin(), touched.end());
        for (index_t i : touched) {
            const double exact = work[static_cast<std::size_t>(i)];
            work[static_cast<std::size_t>(i)] = 0.0;
            seen[static_cast<std::size_t>(i)] = false;
            if (exact == 0.0) continue;  // cancelled exactly in fp64
            const double rounded = round_to(format, exact);
            if (rounded == 0.0) {
                ++out.lost_entries;
                continue;
            }
            C.row_idx.push_back(i);
            C.values.push_back(rounded);
        }
        C.col_ptr[static_cast<std::size_t>(j) + 1] =
            static_cast<index_t>(C.row_idx.size());
    }
    return out;
}

namespace {

void round_components(std::vector<double>& y, const FpFormat& format,
                      RoundFlags* flags) {
    if (format.is_double()) {
        if (flags)
            for (double v : y)
                if (std::isinf(v)) flags->overflow = true;
        return;
    }
    RoundFlags local;
    for (double& v : y) v = round_to(format, v, local);
    if (flags) {
        flags->overflow |= local.overflow;
        flags->underflow_to_zero |= local.underflow_to_zero;
        flags->became_subnormal |= local.became_subnormal;
    }
}

}  // namespace

std::vector<double> matvec(const SparseMatrix& A, std::span<const double> x,
                           const FpFormat& format, RoundFlags* flags) {
    if (static_cast<index_t>(x.size()) != A.n)
        throw DimensionError("matvec: x has length " +
                             std::to_string(x.size()) + ", expected " +
                             std::to_string(A.n));
    std::vector<double> y(static_cast<std::size_t>(A.m), 0.0);
    for (index_t j = 0; j < A.n; ++j) {
        const double xj = x[static_cast<std::size_t>(j)];
        if (xj == 0.0) continue;
        for (index_t p = A.col_ptr[j]; p < A.col_ptr[j + 1]; ++p)
            y[static_cast<std::size_t>(A.row_idx[p])] += A.values[p] * xj;
    }
    round_components(y, format, flags);
    return y;
}

std::vector<double> matvec_t(const SparseMatrix& A, std::span<const double> y,
                             const FpFormat& format, RoundFlags* flags) {
    if (static_cast<index_t>(y.size()) != A.m)
        throw DimensionError("matvec_t: y has length " +
                             std::to_string(y.size()) + ", expected " +
                             std::to_string(A.m));
    std::vector<double> out(static_cast<std::size_t>(A.n), 0.0);
    for (index_t j = 0; j < A.n; ++j) {
        double dot = 0.0;
        for (index_t p = A.col_ptr[j]; p < A.col_ptr[j + 1]; ++p)
            dot += A.values[p] * y[static_cast<std::size_t>(A.row_idx[p])];
        out[static_cast<std::size_t>(j)] = dot;
    }
    round_components(out, format, flags);
    return out;
}

namespace {

void check_lower_triangular(const SparseMatrix& L) {
    if (L.m != L.n) throw DimensionError("triangular solve: matrix not square");
    for (index_t j = 0; j < L.n; ++j) {
        if (L.col_ptr[j] == L.col_ptr[j + 1] || L.row_idx[L.col_ptr[j]] != j)
            throw NotSymmetric("column " + std::to_string(j) +
                               " is missing its diagonal");
        if (!(L.values[L.col_ptr[j]] > 0.0))
            throw NotSymmetric("column " + std::to_string(j) +
                               " has nonpositive diagonal");
    }
}

}  // namespace

std::vector<double> solve_lower(const SparseMatrix& L,
                                std::span<const double> rhs,
                                const FpFormat& format) {
    check_lower_triangular(L);
    if (static_cast<index_t>(rhs.size()) != L.n)
        throw DimensionError("solve_lower: rhs length mismatch");
    const bool wide = format.is_double();
    std::vector<double> x(rhs.begin(), rhs.end());
    for (index_t j = 0; j < L.n; ++j) {
        const double diag = L.values[L.col_ptr[j]];
        double xj = x[static_cast<std::size_t>(j)] / diag;
        if (!wide) xj = round_to(format, xj);
        if (std::isinf(xj)) throw ApplyBreakdown(j);
        x[static_cast<std::size_t>(j)] = xj;
        for (index_t p = L.col_ptr[j] + 1; p < L.col_ptr[j + 1]; ++p) {
            const index_t i = L.row_idx[p];
            double& xi = x[static_cast<std::size_t>(i)];
            xi = wide ? xi - L.values[p] * xj
                      : fma_rounded(format, xi, L.values[p], xj);
            if (std::isinf(xi)) throw ApplyBreakdown(i);
        }
    }
    return x;
}

std::vector<double> solve_upper_t(const SparseMatrix& L,
                                  std::span<const double> rhs,
                                  const FpFormat& format) {
    check_lower_triangular(L);
    if (static_cast<index_t>(rhs.size()) != L.n)
        throw DimensionError("solve_upper_t: rhs length mismatch");
    const bool wide = format.is_double();
    std::vector<double> y(rhs.begin(), rhs.end());
    for (index_t j = L.n - 1; j >= 0; --j) {
        double acc = y[static_cast<std::size_t>(j)];
        for (index_t p = L.col_ptr[j] + 1; p < L.col_ptr[j + 1]; ++p) {
            const double yi = y[static_cast<std::size_t>(L.row_idx[p])];
            acc = wide ? acc - L.values[p] * yi
                       : fma_rounded(format, acc, L.values[p], yi);
            if (std::isinf(acc)) throw ApplyBreakdown(j);
        }
        double yj = acc / L.values[L.col_ptr[j]];
        if (!wide) yj = round_to(format, yj);
        if (std::isinf(yj)) throw ApplyBreakdown(j);
        y[static_cast<std::size_t>(j)] = yj;
    }
    return y;
}

SparseMatrix squeeze_matrix(const SparseMatrix& A, const FpFormat& format,
                            std::int64_t* lost) {
    if (format.is_double()) {
        if (lost) *lost = 0;
        return A;
    }
    auto [vals, audit] = squeeze_values(format, A.values);
    if (lost) *lost = audit.underflowed_to_zero;
    SparseMatrix out;
    out.m = A.m;
    out.n = A.n;
    out.col_ptr.assign(static_cast<std::size_t>(A.n) + 1, 0);
    for (index_t j = 0; j < A.n; ++j) {
        for (index_t p = A.col_ptr[j]; p < A.col_ptr[j + 1]; ++p) {
            if (vals[static_cast<std::size_t>(p)] == 0.0) continue;
            out.row_idx.push_back(A.row_idx[static_cast<std::size_t>(p)]);
            out.values.push_back(vals[static_cast<std::size_t>(p)]);
        }
        out.col_ptr[static_cast<std::size_t>(j) + 1] =
            static_cast<index_t>(out.row_idx.size());
    }
    return out;
}

}  // namespace icls
