// Incomplete Cholesky factorizations of the (scaled, possibly shifted) normal
// matrix: level-based IC(l) and left-looking memory-limited IC(lsize,rsize),
// with per-operation rounding in a chosen factorization format, breakdown
// detection (B1 tiny/negative pivot, B2 scaling overflow, B3 update overflow),
// look-ahead on the remaining diagonal, an a-priori per-column overflow test
// that lets safe columns run unguarded, and global-shift restarts.

#ifndef ICLS_ICFACT_HPP
#define ICLS_ICFACT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "icls/fp.hpp"
#include "icls/sparse.hpp"

namespace icls {

enum class BreakdownKind { B1, B2, B3 };

struct BreakdownEvent {
    index_t column;
    BreakdownKind kind;
    std::string action;  // e.g. "restart with alpha=..."
};

// A completed factorization: C(alpha) ~= L L^T with every entry on the grid
// of `format`, finite, and with a strictly positive diagonal.
struct ICFactor {
    SparseMatrix L;
    FpFormat format;
    double alpha = 0.0;
    std::int64_t restarts = 0;
    std::vector<BreakdownEvent> breakdown_log;
    // The temporary factor, retained only when IcOptions::keep_r is set
    // (diagnostics; normally discarded at the end of the factorization).
    SparseMatrix R;
};

// Level-of-fill pattern: per-column sorted row lists, diagonal included.
struct LevelPattern {
    index_t level = 0;
    std::vector<std::vector<index_t>> pattern;
};

// Memory budget for the memory-limited factorization. lsize counts
// off-diagonal entries kept per column of L (the diagonal pivot is always
// retained); rsize counts entries per column of the temporary factor R.
struct MemLimits {
    index_t lsize = 10;
    index_t rsize = 10;

    static MemLimits unlimited();
    bool is_unlimited(index_t n) const { return lsize >= n - 1; }
};

// Running per-row quantities over the finalized columns 1..j-1: the largest
// stored off-diagonal magnitude and the stored-entry counts in L and R.
struct RowMax {
    std::vector<double> mu;
    std::vector<index_t> lcount;
    std::vector<index_t> rcount;
};

// Global shift schedule: alpha0 = alpha0_scale * max_j c_jj on the first
// breakdown, then multiplied by `growth`; exceeding max_j c_jj throws.
struct ShiftPolicy {
    double alpha0_scale = 1e-3;
    double growth = 2.0;
};

struct IcOptions {
    bool keep_r = false;
    // When set, receives the columns of the final (successful) attempt whose
    // updates ran without per-operation overflow checks because the a-priori
    // bound cleared them.
    std::vector<index_t>* record_unguarded = nullptr;
};

// Exact level-l fill pattern of the Cholesky factor of C.
LevelPattern symbolic_levels(const NormalMatrix& C, index_t level);

// Numeric left-looking factorization restricted to the level-l pattern.
// Throws ShiftBudgetExceeded, NotSymmetric.
ICFactor ic_level(const NormalMatrix& C, index_t level, const FpFormat& format,
                  const ShiftPolicy& shifts = {});

// Left-looking memory-limited factorization: the lsize largest-magnitude
// off-diagonals of each column go to L, the next rsize to R; the discarded
// R R^T update is the per-column error term. Tie-break on equal magnitudes is
// by smaller row index. Throws ShiftBudgetExceeded, NotSymmetric.
ICFactor ic_memory_limited(const NormalMatrix& C, const MemLimits& limits,
                           const FpFormat& format,
                           const ShiftPolicy& shifts = {},
                           const IcOptions& options = {});

// True iff no elementary update in column j can overflow the format, using
// the running row maxima/counts over the unfactored rows i >= j. When true
// the column-j update loop runs unguarded; when false, per-operation overflow
// checks are enabled for that column.
bool b3_safe(index_t j, double cmax_j, const RowMax& rowmax,
             const MemLimits& limits, const FpFormat& format);

// Next shift after a breakdown: alpha0_scale * diag_max if alpha was zero,
// else growth * alpha. Throws ShiftBudgetExceeded past diag_max.
double next_shift(const ShiftPolicy& policy, double current_alpha,
                  double diag_max);

}  // namespace icls

#endif  // ICLS_ICFACT_HPP
