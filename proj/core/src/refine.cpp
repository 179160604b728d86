#include "icls/refine.hpp"

#include <cmath>

#include "icls/errors.hpp"

namespace icls {

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

const char* to_string(RefineTermination t) {
    switch (t) {
        case RefineTermination::converged_gs: return "converged_gs";
        case RefineTermination::stagnated: return "stagnated";
        case RefineTermination::residual_increase: return "residual_increase";
        case RefineTermination::itmax: return "itmax";
    }
    return "unknown";
}

RefineReport lsqr_ir(const SparseMatrix& A, std::span<const double> b,
                     const RefineConfig& cfg, const MemLimits& limits) {
    if (static_cast<index_t>(b.size()) != A.m)
        throw DimensionError("lsqr_ir: right-hand side length mismatch");
    if (cfg.fact_format.unit_roundoff < cfg.work_format.unit_roundoff ||
        cfg.work_format.unit_roundoff < cfg.residual_format.unit_roundoff)
        throw Error("lsqr_ir: format precisions must be ordered "
                    "fact <= work <= residual");
    if (!(cfg.delta2 > 0.0) || !(cfg.eta > 0.0) || !(cfg.inner.delta > 0.0))
        throw Error("lsqr_ir: tolerances must be positive");

    const index_t m = A.m;
    const index_t n = A.n;
    const FpFormat& wf = cfg.work_format;
    const FpFormat& rf = cfg.residual_format;

    ScaledProblem sp = scale_columns(A);
    RefineReport rep;
    SparseMatrix B_ell = squeeze_matrix(sp.B, cfg.fact_format,
                                        &rep.squeeze_lost);
    NormalMatrix C = form_normal(B_ell, cfg.fact_format);
    rep.normal_lost = C.lost_entries;
    const ICFactor factor =
        ic_memory_limited(C, limits, cfg.fact_format, cfg.shifts);
    rep.alpha = factor.alpha;
    rep.nnz_factor = factor.L.nnz();
    rep.restarts = factor.restarts;
    const IcPreconditioner M(factor, wf);

    const SparseMatrix B_w = squeeze_matrix(sp.B, wf, nullptr);

    index_t products = 0;  // products with the non-transposed matrix

    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    bool x_nonzero = false;
    if (cfg.warm_start_if_complete && limits.is_unlimited(n) &&
        limits.rsize == 0) {
        // Complete factor: direct initial solve x = S (L L^T)^{-1} S A^T b in
        // the working format (the setup transpose product is uncounted).
        std::vector<double> t = matvec_t(A, b, wf);
        for (index_t j = 0; j < n; ++j) {
            const std::size_t js = static_cast<std::size_t>(j);
            t[js] = round_to(wf, sp.S[js] * t[js]);
        }
        t = solve_lower(factor.L, t, wf);
        t = solve_upper_t(factor.L, t, wf);
        for (index_t j = 0; j < n; ++j) {
            const std::size_t js = static_cast<std::size_t>(j);
            x[js] = round_to(wf, sp.S[js] * t[js]);
        }
        rep.nsol = 1;
        x_nonzero = true;
    }

    // One deterministic norm estimate shared by every inner solve (the inner
    // solver would otherwise recompute the identical value each pass).
    const double norm_est = estimate_norm2(preconditioned_op(B_w, M, wf));
    rep.norm_estimate = norm_est;

    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        rep.termination = RefineTermination::converged_gs;
        rep.final_ratio_gs = 0.0;
        rep.x = x;
        return rep;
    }
    double base_q;
    {
        const std::vector<double> atb = matvec_t(A, b, fp64());
        base_q = norm2(atb) / bnorm;
    }

    auto residual = [&](const std::vector<double>& xx) {
        const std::vector<double> ax = matvec(A, xx, rf);
        ++products;
        std::vector<double> rr(static_cast<std::size_t>(m));
        for (std::size_t k = 0; k < rr.size(); ++k)
            rr[k] = round_to(rf, b[k] - ax[k]);
        return rr;
    };

    std::vector<double> r(static_cast<std::size_t>(m));
    if (x_nonzero) {
        r = residual(x);
    } else {
        for (std::size_t k = 0; k < r.size(); ++k)
            r[k] = round_to(rf, b[k]);
    }
    double rnorm = norm2(r);

    RefineTermination term = RefineTermination::itmax;
    for (index_t i = 1; i <= cfg.itmax; ++i) {
        if (rnorm == 0.0) {
            term = RefineTermination::converged_gs;
            rep.final_ratio_gs = 0.0;
            break;
        }
        // Cast the residual to the working format and solve the correction
        // problem min ||r - B g||, then map d = S M^{-1} z.
        std::vector<double> rw(r.size());
        for (std::size_t k = 0; k < r.size(); ++k)
            rw[k] = round_to(wf, r[k]);
        LsqrOptions iopts;
        iopts.norm_estimate = norm_est;
        iopts.compute_true_residual = false;
        iopts.a_product_counter = &products;
        const SolveReport inner =
            lsqr(B_w, rw, M, cfg.inner, cfg.reorth, wf, iopts);
        rep.nsol += inner.iterations;

        const std::vector<double> d = unscale_solution(M, sp.S, inner.z, wf);
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] = round_to(wf, x[j] + d[j]);
        rep.nout = i;

        // The convergence-test residual doubles as the next pass's residual.
        const std::vector<double> rnext = residual(x);
        const double rnorm_next = norm2(rnext);
        double ratio = 0.0;
        if (rnorm_next > 0.0 && base_q > 0.0) {
            const std::vector<double> atr = matvec_t(A, rnext, fp64());
            ratio = (norm2(atr) / rnorm_next) / base_q;
        }
        rep.outer.push_back(
            {inner.iterations, inner.termination, rnorm_next, ratio});
        rep.final_ratio_gs = ratio;

        if (ratio < cfg.delta2) {
            term = RefineTermination::converged_gs;
            break;
        }
        if (rnorm_next > rnorm) {
            term = RefineTermination::residual_increase;
            break;
        }
        if ((rnorm - rnorm_next) / rnorm_next <= cfg.eta) {
            term = RefineTermination::stagnated;
            break;
        }
        r = rnext;
        rnorm = rnorm_next;
    }

    rep.termination = term;
    rep.x = std::move(x);
    rep.matvec_count = products;
    return rep;
}

}  // namespace icls
