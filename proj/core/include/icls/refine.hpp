// Mixed-precision iterative refinement for sparse least squares: an
// incomplete Cholesky factor of the scaled normal matrix is computed once in
// a low precision, every correction problem is solved by preconditioned LSQR
// in a working precision, and residuals are formed in a high precision.
#pragma once

#include <limits>
#include <span>
#include <vector>

#include "icls/icfact.hpp"
#include "icls/krylov.hpp"

namespace icls {

enum class RefineTermination {
    converged_gs,       // backward-error ratio dropped below delta2
    stagnated,          // relative residual decrease fell below eta
    residual_increase,  // the residual norm grew after an update
    itmax,
};

const char* to_string(RefineTermination t);

// Format ordering: unit roundoffs must satisfy fact >= work >= residual
// (the factor is the coarsest, the residual the finest).
struct RefineConfig {
    FpFormat fact_format = fp32();
    FpFormat work_format = fp64();
    FpFormat residual_format = fp64();
    index_t itmax = 20;
    // Inner correction-solve stopping (defaults: the estimator-based
    // criterion with delta = 1e-5).
    StoppingConfig inner{};
    // Outer acceptance on the explicit backward-error ratio.
    double delta2 = 1e-8;
    // Outer stagnation threshold, 1e3 times the fp64 unit roundoff.
    double eta = 1e3 * 0x1.0p-53;
    // Start from x = S (L L^T)^{-1} S A^T b instead of x = 0 when the factor
    // is complete (no dropping possible).
    bool warm_start_if_complete = true;
    ReorthPolicy reorth{};
    ShiftPolicy shifts{};
};

struct OuterRow {
    index_t inner_iterations = 0;
    Termination inner_termination = Termination::max_iter;
    double rnorm = 0;     // residual norm after the update
    double ratio_gs = 0;  // backward-error ratio after the update
};

struct RefineReport {
    index_t nout = 0;  // outer passes executed
    index_t nsol = 0;  // initial solve (if any) plus total inner iterations
    std::vector<OuterRow> outer;
    RefineTermination termination = RefineTermination::itmax;
    std::vector<double> x;
    // Products with the non-transposed matrix, for the accounting identity
    // matvec_count == nsol + nout.
    index_t matvec_count = 0;
    double final_ratio_gs = std::numeric_limits<double>::quiet_NaN();
    // Factorization summary.
    double alpha = 0;
    index_t nnz_factor = 0;
    index_t restarts = 0;
    std::int64_t squeeze_lost = 0;  // entries lost casting B to the factor format
    std::int64_t normal_lost = 0;   // entries lost forming the normal matrix
    double norm_estimate = 0;
};

// Iterative refinement driver. Scales A, squeezes the scaled matrix to the
// factor format, factorizes its normal matrix (complete factorization when
// the limits are unlimited), then alternates residual evaluation, correction
// solve, and update until acceptance, stagnation, residual increase, or
// itmax. Outer tests run in that order. Throws factorization and solver
// errors (ShiftBudgetExceeded, ApplyBreakdown, ...), DimensionError, Error on
// invalid configuration.
RefineReport lsqr_ir(const SparseMatrix& A, std::span<const double> b,
                     const RefineConfig& cfg, const MemLimits& limits);

}  // namespace icls
