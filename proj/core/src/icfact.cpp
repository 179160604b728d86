#include "icls/icfact.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "icls/errors.hpp"

namespace icls {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// C must hold the lower triangle with the diagonal first in every column,
// strictly positive and finite.
void validate_normal(const SparseMatrix& C) {
    if (C.m != C.n) throw NotSymmetric("matrix is not square");
    for (index_t j = 0; j < C.n; ++j) {
        if (C.col_ptr[j] == C.col_ptr[j + 1])
            throw NotSymmetric("column " + std::to_string(j) + " is empty");
        if (C.row_idx[C.col_ptr[j]] != j)
            throw NotSymmetric("column " + std::to_string(j) +
                               " is missing its diagonal");
        const double d = C.values[C.col_ptr[j]];
        if (!(d > 0.0) || !std::isfinite(d))
            throw NotSymmetric("column " + std::to_string(j) +
                               " has nonpositive diagonal");
        for (index_t p = C.col_ptr[j]; p < C.col_ptr[j + 1]; ++p)
            if (C.row_idx[p] < j)
                throw NotSymmetric("entry above the diagonal in column " +
                                   std::to_string(j));
    }
}

// Internal control-flow signal: a breakdown aborts the current attempt and
// the driver restarts with a larger shift.
struct Breakdown {
    index_t column;
    BreakdownKind kind;
};

struct Entry {
    index_t row;
    double value;
};

// Workspace for one factorization attempt at a fixed shift.
struct Attempt {
    index_t n = 0;
    const FpFormat* fmt = nullptr;
    // Finalized columns (diagonal first, rows ascending) and per-row lists of
    // (column, value) so that rows of L and R are readily available.
    std::vector<std::vector<Entry>> lcols, rcols;
    std::vector<std::vector<Entry>> lrows, rrows;
    // Look-ahead diagonals and the shifted reference diagonals, both kept on
    // the factorization grid.
    std::vector<double> d, dref;
    RowMax rowmax;
    std::vector<index_t> unguarded;

    Attempt(index_t n_, const FpFormat& f) : n(n_), fmt(&f) {
        lcols.resize(n);
        rcols.resize(n);
        lrows.resize(n);
        rrows.resize(n);
        d.resize(n);
        dref.resize(n);
        rowmax.mu.assign(n, 0.0);
        rowmax.lcount.assign(n, 0);
        rowmax.rcount.assign(n, 0);
    }
};

std::string shift_action(double alpha) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "restart with alpha=%.6e", alpha);
    return buf;
}

// Initializes the shifted diagonals; a diagonal that rounds to +inf means the
// shift is no longer representable and the budget is semantically exhausted.
void init_diagonals(Attempt& a, const SparseMatrix& C, double alpha) {
    for (index_t j = 0; j < a.n; ++j) {
        const double cjj = round_to(*a.fmt, C.values[C.col_ptr[j]]);
        const double shifted = round_to(*a.fmt, cjj + alpha);
        if (std::isinf(shifted)) throw ShiftBudgetExceeded(alpha);
        a.dref[j] = shifted;
        a.d[j] = shifted;
    }
}

// Applies one finalized column to the running structures: row lists, row
// maxima/counts, look-ahead diagonals (updated by L entries only; R entries
// never touch a diagonal because an index pair (j,k) is stored in exactly one
// of L and R).
void finalize_column(Attempt& a, index_t j, const std::vector<Entry>& lsel,
                     const std::vector<Entry>& rsel) {
    for (const Entry& e : lsel) {
        a.lcols[j].push_back(e);
        if (e.row == j) continue;  // row structures track off-diagonals only
        a.lrows[e.row].push_back({j, e.value});
        a.rowmax.mu[e.row] = std::max(a.rowmax.mu[e.row], std::fabs(e.value));
        ++a.rowmax.lcount[e.row];
    }
    for (const Entry& e : rsel) {
        a.rcols[j].push_back(e);
        a.rrows[e.row].push_back({j, e.value});
        a.rowmax.mu[e.row] = std::max(a.rowmax.mu[e.row], std::fabs(e.value));
        ++a.rowmax.rcount[e.row];
    }
    for (const Entry& e : lsel) {
        if (e.row == j) continue;
        double& di = a.d[e.row];
        di = fma_rounded(*a.fmt, di, e.value, e.value);
        if (std::isinf(di)) throw Breakdown{j, BreakdownKind::B3};
        // Look-ahead: a future pivot that has already collapsed is a B1
        // breakdown detected at this step.
        if (di <= a.fmt->unit_roundoff * a.dref[e.row])
            throw Breakdown{e.row, BreakdownKind::B1};
    }
}

// Update w by the finalized columns that have an entry in row j, excluding
// the R*R^T cross products. `allowed` filters target positions (the level
// pattern); null admits everything. Guarded mode checks every elementary
// operation for overflow.
void update_column(Attempt& a, index_t j, std::vector<double>& w,
                   std::vector<char>& inw, std::vector<index_t>& touched,
                   const std::vector<char>* allowed, bool guarded) {
    const FpFormat& fmt = *a.fmt;
    auto apply = [&](index_t i, double x, double y) {
        if (allowed && !(*allowed)[i]) return;
        if (!inw[i]) {
            inw[i] = 1;
            touched.push_back(i);
        }
        double& wi = w[i];
        wi = fma_rounded(fmt, wi, x, y);
        if (guarded && std::isinf(wi)) throw Breakdown{j, BreakdownKind::B3};
    };
    auto from_row = [&](const std::vector<Entry>& row, bool include_r) {
        for (const Entry& jk : row) {
            const index_t k = jk.row;  // contributing column index
            const auto& lk = a.lcols[k];
            auto it = std::lower_bound(
                lk.begin(), lk.end(), j,
                [](const Entry& e, index_t r) { return e.row < r; });
            for (; it != lk.end(); ++it) apply(it->row, it->value, jk.value);
            if (include_r) {
                const auto& rk = a.rcols[k];
                auto rt = std::lower_bound(
                    rk.begin(), rk.end(), j,
                    [](const Entry& e, index_t r) { return e.row < r; });
                for (; rt != rk.end(); ++rt)
                    apply(rt->row, rt->value, jk.value);
            }
        }
    };
    from_row(a.lrows[j], true);   // k with l_jk != 0: L and R entries of col k
    from_row(a.rrows[j], false);  // k with r_jk != 0: only L entries of col k
}

// Shared per-column epilogue: B1 pivot test, scaling with B2 guard, and the
// magnitude selection into L (and R for the memory-limited variant).
struct ColumnResult {
    std::vector<Entry> lsel, rsel;
};

ColumnResult select_and_scale(Attempt& a, index_t j, std::vector<double>& w,
                              std::vector<index_t>& touched, index_t lsize,
                              index_t rsize) {
    const FpFormat& fmt = *a.fmt;
    const double wj = w[j];
    assert(wj == a.d[j]);  // same rounded operations in the same order
    if (wj <= fmt.unit_roundoff * a.dref[j])
        throw Breakdown{j, BreakdownKind::B1};

    const double ljj = round_to(fmt, std::sqrt(wj));

    std::vector<Entry> cand;
    cand.reserve(touched.size());
    for (index_t i : touched)
        if (i != j && w[i] != 0.0) cand.push_back({i, w[i]});
    std::sort(cand.begin(), cand.end(), [](const Entry& x, const Entry& y) {
        const double ax = std::fabs(x.value), ay = std::fabs(y.value);
        return ax != ay ? ax > ay : x.row < y.row;
    });
    const std::size_t nl = std::min<std::size_t>(cand.size(), lsize);
    const std::size_t nr =
        std::min<std::size_t>(cand.size() - nl, static_cast<std::size_t>(rsize));

    // B2: the division of the largest retained magnitude must stay finite;
    // rounded division is monotone in the numerator, so one test covers all.
    if (nl + nr > 0) {
        const double vmax = std::fabs(cand[0].value);
        if (std::isinf(round_to(fmt, vmax / ljj)))
            throw Breakdown{j, BreakdownKind::B2};
    }

    ColumnResult out;
    out.lsel.push_back({j, ljj});
    auto scaled = [&](const Entry& e) -> Entry {
        return {e.row, round_to(fmt, e.value / ljj)};
    };
    for (std::size_t k = 0; k < nl; ++k) {
        Entry e = scaled(cand[k]);
        if (e.value != 0.0) out.lsel.push_back(e);
    }
    for (std::size_t k = nl; k < nl + nr; ++k) {
        Entry e = scaled(cand[k]);
        if (e.value != 0.0) out.rsel.push_back(e);
    }
    std::sort(out.lsel.begin(), out.lsel.end(),
              [](const Entry& x, const Entry& y) { return x.row < y.row; });
    std::sort(out.rsel.begin(), out.rsel.end(),
              [](const Entry& x, const Entry& y) { return x.row < y.row; });
    return out;
}

// Largest magnitude in the lower part of column j after snapping to the
// factorization grid, with the shifted diagonal.
std::vector<double> column_maxima(const Attempt& a, const SparseMatrix& C) {
    std::vector<double> cmax(a.n, 0.0);
    for (index_t j = 0; j < a.n; ++j) {
        double m = std::fabs(a.dref[j]);
        for (index_t p = C.col_ptr[j] + 1; p < C.col_ptr[j + 1]; ++p)
            m = std::max(m, std::fabs(round_to(*a.fmt, C.values[p])));
        cmax[j] = m;
    }
    return cmax;
}

// One attempt of the memory-limited factorization (pattern == nullptr) or of
// the pattern-restricted level factorization.
void run_attempt(Attempt& a, const SparseMatrix& C, double alpha,
                 const MemLimits& limits, const LevelPattern* pattern) {
    init_diagonals(a, C, alpha);
    const std::vector<double> cmax = column_maxima(a, C);

    std::vector<double> w(a.n, 0.0);
    std::vector<char> inw(a.n, 0);
    std::vector<index_t> touched;
    std::vector<char> allowed;
    if (pattern) allowed.assign(a.n, 0);

    for (index_t j = 0; j < a.n; ++j) {
        touched.clear();
        if (pattern)
            for (index_t i : pattern->pattern[j]) allowed[i] = 1;

        // Initialize from column j of C (lower part), diagonal shifted.
        for (index_t p = C.col_ptr[j]; p < C.col_ptr[j + 1]; ++p) {
            const index_t i = C.row_idx[p];
            const double v = (i == j) ? a.dref[j]
                                      : round_to(*a.fmt, C.values[p]);
            if (!inw[i]) {
                inw[i] = 1;
                touched.push_back(i);
            }
            w[i] = v;
        }

        const bool safe = b3_safe(j, cmax[j], a.rowmax, limits, *a.fmt);
        if (safe) a.unguarded.push_back(j);

        try {
            update_column(a, j, w, inw, touched,
                          pattern ? &allowed : nullptr, !safe);
            const index_t lsize = pattern ? a.n : limits.lsize;
            const index_t rsize = pattern ? 0 : limits.rsize;
            ColumnResult sel = select_and_scale(a, j, w, touched, lsize, rsize);
            finalize_column(a, j, sel.lsel, sel.rsel);
        } catch (...) {
            for (index_t i : touched) {
                w[i] = 0.0;
                inw[i] = 0;
            }
            if (pattern)
                for (index_t i : pattern->pattern[j]) allowed[i] = 0;
            throw;
        }
        for (index_t i : touched) {
            w[i] = 0.0;
            inw[i] = 0;
        }
        if (pattern)
            for (index_t i : pattern->pattern[j]) allowed[i] = 0;
    }
}

SparseMatrix assemble(index_t n, const std::vector<std::vector<Entry>>& cols) {
    SparseMatrix M;
    M.m = n;
    M.n = n;
    M.col_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    for (index_t j = 0; j < n; ++j) {
        for (const Entry& e : cols[j]) {
            M.row_idx.push_back(e.row);
            M.values.push_back(e.value);
        }
        M.col_ptr[static_cast<std::size_t>(j) + 1] =
            static_cast<index_t>(M.row_idx.size());
    }
    return M;
}

ICFactor factorize(const NormalMatrix& C, const MemLimits& limits,
                   const FpFormat& format, const ShiftPolicy& shifts,
                   const IcOptions& options, const LevelPattern* pattern) {
    validate_normal(C.C);
    if (!pattern && (limits.lsize < 1 || limits.rsize < 0))
        throw Error("invalid memory limits: lsize must be >= 1, rsize >= 0");

    double diag_max = 0.0;
    for (index_t j = 0; j < C.C.n; ++j)
        diag_max = std::max(diag_max, C.C.values[C.C.col_ptr[j]]);

    ICFactor out;
    out.format = format;
    double alpha = 0.0;
    for (;;) {
        Attempt a(C.C.n, format);
        try {
            run_attempt(a, C.C, alpha, limits, pattern);
        } catch (const Breakdown& bd) {
            alpha = next_shift(shifts, alpha, diag_max);
            out.breakdown_log.push_back({bd.column, bd.kind,
                                         shift_action(alpha)});
            ++out.restarts;
            continue;
        }
        out.alpha = alpha;
        out.L = assemble(a.n, a.lcols);
        if (options.keep_r) out.R = assemble(a.n, a.rcols);
        if (options.record_unguarded)
            *options.record_unguarded = std::move(a.unguarded);
        return out;
    }
}

}  // namespace

MemLimits MemLimits::unlimited() {
    return MemLimits{std::numeric_limits<index_t>::max() / 2, 0};
}

LevelPattern symbolic_levels(const NormalMatrix& C, index_t level) {
    validate_normal(C.C);
    const index_t n = C.C.n;
    LevelPattern out;
    out.level = level;
    out.pattern.resize(static_cast<std::size_t>(n));

    struct Lev {
        index_t idx;  // row for column lists, column for row lists
        index_t lev;
    };
    std::vector<std::vector<Lev>> cols(n), rows(n);
    std::vector<index_t> lev(static_cast<std::size_t>(n),
                             std::numeric_limits<index_t>::max());
    std::vector<index_t> touched;

    for (index_t j = 0; j < n; ++j) {
        touched.clear();
        for (index_t p = C.C.col_ptr[j]; p < C.C.col_ptr[j + 1]; ++p) {
            const index_t i = C.C.row_idx[p];
            touched.push_back(i);
            lev[i] = 0;
        }
        for (const Lev& jk : rows[j]) {
            for (const Lev& ik : cols[jk.idx]) {
                if (ik.idx < j) continue;
                const index_t cand = ik.lev + jk.lev + 1;
                if (cand > level) continue;
                if (lev[ik.idx] == std::numeric_limits<index_t>::max())
                    touched.push_back(ik.idx);
                lev[ik.idx] = std::min(lev[ik.idx], cand);
            }
        }
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()),
                      touched.end());
        for (index_t i : touched) {
            if (lev[i] <= level) {
                out.pattern[j].push_back(i);
                cols[j].push_back({i, lev[i]});
                if (i > j) rows[i].push_back({j, lev[i]});
            }
            lev[i] = std::numeric_limits<index_t>::max();
        }
    }
    return out;
}

ICFactor ic_level(const NormalMatrix& C, index_t level, const FpFormat& format,
                  const ShiftPolicy& shifts) {
    const LevelPattern pattern = symbolic_levels(C, level);
    return factorize(C, MemLimits::unlimited(), format, shifts, {}, &pattern);
}

ICFactor ic_memory_limited(const NormalMatrix& C, const MemLimits& limits,
                           const FpFormat& format, const ShiftPolicy& shifts,
                           const IcOptions& options) {
    return factorize(C, limits, format, shifts, options, nullptr);
}

bool b3_safe(index_t j, double cmax_j, const RowMax& rowmax,
             const MemLimits& limits, const FpFormat& format) {
    (void)limits;  // the running row counts already reflect what was stored
    const index_t n = static_cast<index_t>(rowmax.mu.size());
    double mu_star = 0.0;
    index_t lr_max = 0, l_max = 0;
    for (index_t i = j; i < n; ++i) {
        mu_star = std::max(mu_star, rowmax.mu[i]);
        lr_max = std::max(lr_max, rowmax.lcount[i] + rowmax.rcount[i]);
        l_max = std::max(l_max, rowmax.lcount[i]);
    }
    const double terms =
        static_cast<double>(std::min(rowmax.lcount[j], lr_max)) +
        static_cast<double>(std::min(rowmax.rcount[j], l_max));
    const double bound = cmax_j + mu_star * rowmax.mu[j] * terms;
    return bound <= format.x_max;
}

double next_shift(const ShiftPolicy& policy, double current_alpha,
                  double diag_max) {
    const double next = current_alpha == 0.0
                            ? policy.alpha0_scale * diag_max
                            : policy.growth * current_alpha;
    if (!(next > current_alpha) || next > diag_max)
        throw ShiftBudgetExceeded(next);
    return next;
}

}  // namespace icls
