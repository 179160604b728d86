// Independent reference implementations used to cross-check the library:
// a bit-level binary16 encoder, dense least-squares / Cholesky / eigenvalue
// solvers, a dense level-fill recurrence, a guarded dense replica of the
// memory-limited factorization, and seeded problem generators. Everything
// here is written directly against the underlying definitions and shares no
// code with the library kernels it checks.

#pragma once

#include <cstdint>
#include <vector>

#include "icls/fp.hpp"
#include "icls/sparse.hpp"

namespace oracle {

using icls::index_t;
using Dense = std::vector<std::vector<double>>;  // row-major, rectangular

// --- binary16 conversion straight from the IEEE-754 bit layouts ---
// Encode a finite-or-infinite double to the nearest (ties-to-even) binary16
// bit pattern, and decode back. roundtrip_half is the conversion oracle.
std::uint16_t encode_half(double x);
double decode_half(std::uint16_t h);
double roundtrip_half(double x);

// --- dense helpers ---
Dense zeros(index_t rows, index_t cols);
Dense to_dense(const icls::SparseMatrix& A);
icls::SparseMatrix to_sparse(const Dense& A);
std::vector<double> mat_vec(const Dense& A, const std::vector<double>& x);
std::vector<double> mat_tvec(const Dense& A, const std::vector<double>& y);
// A * A^T for a square matrix (used on dense factors).
Dense gram_lower(const Dense& A);
Dense add(const Dense& A, const Dense& B);
double max_abs(const Dense& A);
double max_abs_diff(const Dense& A, const Dense& B);
double norm2(const std::vector<double>& v);

// --- dense least squares min ||b - A x|| via Householder QR (m >= n) ---
std::vector<double> least_squares(Dense A, std::vector<double> b);

// --- dense Cholesky A = L L^T; false when a pivot is nonpositive ---
bool cholesky(const Dense& A, Dense& L);

// --- eigenvalues of a symmetric matrix by cyclic Jacobi, ascending ---
std::vector<double> jacobi_eigenvalues(Dense S, int max_sweeps = 64);
// Largest singular value via Jacobi on A^T A.
double spectral_norm(const Dense& A);

// --- exact level-of-fill pattern by the dense O(n^3) min-plus recurrence ---
// Returns per-column sorted row lists (diagonal included) of the positions
// whose fill level is <= ell; input is the symmetric nonzero pattern of C.
std::vector<std::vector<index_t>> level_pattern(const Dense& C, index_t ell);

// --- guarded dense replica of the memory-limited factorization ---
// Runs one attempt at the given shift with every elementary update operation
// checked for overflow, mirroring the production operation order exactly so
// that factors agree bitwise when no breakdown occurs.
struct MemicRef {
    bool completed = false;  // false when a pivot or scaling test failed
    Dense L, R;              // dense factors of the attempt
    // overflowed[j]: some elementary update while assembling column j
    // produced an infinity (recorded even where the production code would
    // run unguarded).
    std::vector<bool> overflowed;
};
MemicRef memic_reference(const Dense& C, double alpha, index_t lsize,
                         index_t rsize, const icls::FpFormat& fmt);

// --- seeded deterministic generator (splitmix64) ---
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed) {}
    std::uint64_t next();
    double uniform();    // [0, 1)
    double symmetric();  // [-1, 1]
};

std::vector<double> random_vec(index_t n, Rng& rng);
// Sparse full-column-rank least-squares matrix (m > n), well conditioned:
// a strong entry per column plus random off-band fill.
icls::SparseMatrix random_ls_matrix(index_t m, index_t n, index_t extra_per_col,
                                    Rng& rng);
// Dense diagonally dominant SPD matrix with off-diagonal density in (0, 1].
Dense random_spd(index_t n, double density, double offdiag_scale, Rng& rng);
// Banded diagonally dominant SPD matrix (half bandwidth `band`).
Dense banded_spd(index_t n, index_t band, double offdiag_scale, Rng& rng);
// Dense m x n matrix with prescribed log-spaced singular values
// sigma_1 = 1 .. sigma_n = 10^-log10_kappa (orthogonal factors applied as
// random Householder reflections, so the spectrum is exact).
Dense graded_matrix(index_t m, index_t n, double log10_kappa, Rng& rng);

}  // namespace oracle
