#include "icls/krylov.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>

#include "icls/errors.hpp"

namespace icls {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

// Deterministic start vector for the norm estimator (splitmix64).
std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

void IcPreconditioner::apply_inv(std::span<double> v) const {
    const std::vector<double> x = solve_upper_t(factor_->L, v, *format_);
    std::copy(x.begin(), x.end(), v.begin());
}

void IcPreconditioner::apply_inv_t(std::span<double> v) const {
    const std::vector<double> x = solve_lower(factor_->L, v, *format_);
    std::copy(x.begin(), x.end(), v.begin());
}

const char* to_string(Termination t) {
    switch (t) {
        case Termination::converged: return "converged";
        case Termination::max_iter: return "max_iter";
        case Termination::stagnation: return "stagnation";
        case Termination::lucky_breakdown: return "lucky_breakdown";
        case Termination::apply_breakdown: return "apply_breakdown";
        case Termination::memory_cap: return "memory_cap";
    }
    return "unknown";
}

std::pair<index_t, double> adaptive_estimate(EstimatorState& est, index_t i,
                                             double phi) {
    assert(i >= 2);
    est.delta.resize(static_cast<std::size_t>(i), 0.0);
    est.delta[static_cast<std::size_t>(i - 1)] = phi * phi;
    const double delta_i = est.delta[static_cast<std::size_t>(i - 1)];

    // suf[j] = sum of delta_j..delta_{i-1} (1-based j); the full-window sums
    // through delta_i are suf[j] + delta_i, which avoids cancellation in the
    // while-loop denominator.
    std::vector<double> suf(static_cast<std::size_t>(i) + 1, 0.0);
    for (index_t j = i - 1; j >= 1; --j)
        suf[static_cast<std::size_t>(j)] =
            suf[static_cast<std::size_t>(j) + 1] +
            est.delta[static_cast<std::size_t>(j - 1)];
    auto sum_to_i = [&](index_t j) {
        return suf[static_cast<std::size_t>(j)] + delta_i;
    };

    // p: the most recent window start whose full sum dwarfs the current one,
    // i.e. the largest j < i with sum(ell..i)/sum(j..i) <= tol; fallback 1.
    const double top = sum_to_i(est.ell);
    index_t p = 1;
    for (index_t j = i - 1; j >= 1; --j) {
        const double denom = sum_to_i(j);
        if (denom > 0.0 && top / denom <= est.tol) {
            p = j;
            break;
        }
    }

    // S bounds sum(j..i)/delta_j over the probe range, skipping zero terms.
    double S = 0.0;
    for (index_t j = p; j < i; ++j) {
        const double dj = est.delta[static_cast<std::size_t>(j - 1)];
        if (dj != 0.0) S = std::max(S, sum_to_i(j) / dj);
    }

    // Advance the window start while the latest term is provably a small
    // fraction of the remaining error; each advance emits an estimate.
    index_t ell = est.ell;
    double estim = kInf;
    const double sdi = S * delta_i;
    while (ell < i) {
        const double denom = suf[static_cast<std::size_t>(ell)];
        bool advance;
        if (sdi == 0.0)
            advance = true;
        else if (denom == 0.0)
            advance = false;
        else
            advance = (sdi / denom <= est.tau);
        if (!advance) break;
        estim = sum_to_i(ell);
        ++ell;
    }
    est.ell = std::max(est.ell, ell - 1);
    est.estimate = estim;
    return {est.ell, estim};
}

double ratio_gs(const SparseMatrix& A, std::span<const double> r_i,
                std::span<const double> r_0) {
    auto quotient = [&](std::span<const double> r) {
        const double rn = norm2(r);
        if (rn == 0.0) return 0.0;
        const std::vector<double> atr = matvec_t(A, r, fp64());
        return norm2(atr) / rn;
    };
    const double base = quotient(r_0);
    if (base == 0.0) return 0.0;
    return quotient(r_i) / base;
}

double ratio_ps(double est_norm_atr, double est_norm_a, double est_norm_r) {
    const double denom = est_norm_a * est_norm_r;
    if (denom == 0.0) return est_norm_atr == 0.0 ? 0.0 : kInf;
    return est_norm_atr / denom;
}

double ratio_pt(double estim, double est_norm_a, double norm_x, double norm_b,
                bool take_sqrt) {
    const double num = take_sqrt ? std::sqrt(estim) : estim;
    const double denom = est_norm_a * norm_x + norm_b;
    if (denom == 0.0) return num == 0.0 ? 0.0 : kInf;
    return num / denom;
}

double estimate_norm2(const LinearOp& op, double tol, index_t maxit) {
    if (op.rows <= 0 || op.cols <= 0) return 0.0;
    std::vector<double> x(static_cast<std::size_t>(op.cols));
    std::uint64_t state = 0x5EEDD1CEULL;
    for (double& v : x) {
        const double u = static_cast<double>(splitmix64(state) >> 11) *
                         0x1.0p-53;  // [0,1)
        v = 2.0 * u - 1.0;
    }
    double xn = norm2(x);
    if (xn == 0.0) {
        x[0] = 1.0;
        xn = 1.0;
    }
    for (double& v : x) v /= xn;

    std::vector<double> y(static_cast<std::size_t>(op.rows));
    std::vector<double> t(static_cast<std::size_t>(op.cols));
    double sigma = 0.0;
    for (index_t it = 0; it < maxit; ++it) {
        op.apply(x, y);
        op.apply_t(y, t);
        const double lam = norm2(t);  // ||Op^T Op x|| with unit x
        if (lam == 0.0) return 0.0;
        const double next = std::sqrt(lam);
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = t[k] / lam;
        if (it > 0 && std::fabs(next - sigma) <= tol * next) return next;
        sigma = next;
    }
    return sigma;
}

double estimate_norm2(const SparseMatrix& A, double tol, index_t maxit) {
    LinearOp op;
    op.rows = A.m;
    op.cols = A.n;
    op.apply = [&A](std::span<const double> x, std::span<double> y) {
        const std::vector<double> r = matvec(A, x, fp64());
        std::copy(r.begin(), r.end(), y.begin());
    };
    op.apply_t = [&A](std::span<const double> x, std::span<double> y) {
        const std::vector<double> r = matvec_t(A, x, fp64());
        std::copy(r.begin(), r.end(), y.begin());
    };
    return estimate_norm2(op, tol, maxit);
}

LinearOp preconditioned_op(const SparseMatrix& B, const Preconditioner& M,
                           const FpFormat& matvec_format) {
    LinearOp op;
    op.rows = B.m;
    op.cols = B.n;
    op.apply = [&B, &M, &matvec_format](std::span<const double> x,
                                        std::span<double> y) {
        std::vector<double> v(x.begin(), x.end());
        M.apply_inv(v);
        const std::vector<double> r = matvec(B, v, matvec_format);
        std::copy(r.begin(), r.end(), y.begin());
    };
    op.apply_t = [&B, &M, &matvec_format](std::span<const double> x,
                                          std::span<double> y) {
        std::vector<double> r = matvec_t(B, x, matvec_format);
        M.apply_inv_t(r);
        std::copy(r.begin(), r.end(), y.begin());
    };
    return op;
}

double reorthogonalize(const std::vector<std::vector<double>>& basis,
                       std::span<double> v, index_t window) {
    const index_t count = static_cast<index_t>(basis.size());
    const index_t start =
        (window > 0 && window < count) ? count - window : 0;
    for (index_t j = start; j < count; ++j) {
        const std::vector<double>& u = basis[static_cast<std::size_t>(j)];
        const double proj = dot(u, v);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= proj * u[k];
    }
    const double nv = norm2(v);
    if (nv > 0.0)
        for (double& x : v) x /= nv;
    return nv;
}

std::vector<double> unscale_solution(const Preconditioner& M,
                                     std::span<const double> S,
                                     std::span<const double> z,
                                     const FpFormat& format) {
    std::vector<double> x(z.begin(), z.end());
    M.apply_inv(x);
    for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = round_to(format, S[j] * x[j]);
    return x;
}

SolveReport lsqr(const SparseMatrix& B, std::span<const double> b,
                 const Preconditioner& M, const StoppingConfig& cfg,
                 const ReorthPolicy& reorth, const FpFormat& matvec_format,
                 const LsqrOptions& opts) {
    const index_t m = B.m;
    const index_t n = B.n;
    if (static_cast<index_t>(b.size()) != m)
        throw DimensionError("lsqr: right-hand side length mismatch");

    const FpFormat& wfmt = matvec_format;
    SolveReport rep;
    LsqrState st;

    const bool store_q = reorth.kind == ReorthKind::full ||
                         reorth.kind == ReorthKind::partial;
    const bool store_p = reorth.kind != ReorthKind::none;
    const index_t window =
        reorth.kind == ReorthKind::partial ? reorth.window : 0;

    // Initialization: beta_1 q_1 = b, mu_1 p_1 = (B M^{-1})^T q_1, w_1 = p_1.
    const double beta1 = norm2(b);
    if (beta1 == 0.0) throw Error("lsqr: zero right-hand side");
    st.beta = beta1;
    st.q.resize(static_cast<std::size_t>(m));
    for (std::size_t k = 0; k < st.q.size(); ++k)
        st.q[k] = round_to(wfmt, b[k] / beta1);

    std::vector<double> t = matvec_t(B, st.q, wfmt);
    M.apply_inv_t(t);
    const double mu1 = norm2(t);
    st.z.assign(static_cast<std::size_t>(n), 0.0);
    rep.estimator = EstimatorState{};
    if (mu1 == 0.0) {
        // b is (numerically exactly) orthogonal to the range: z = 0 is
        // optimal and the recurrence cannot start.
        rep.termination = Termination::lucky_breakdown;
        rep.z = st.z;
        if (opts.compute_true_residual) {
            rep.rnorm_true = beta1;
            rep.atr_norm_true = 0.0;
        }
        return rep;
    }
    st.mu = mu1;
    st.p.resize(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < st.p.size(); ++k)
        st.p[k] = round_to(wfmt, t[k] / mu1);
    st.w = st.p;
    st.rhobar = mu1;
    st.phibar = beta1;
    st.frob2 = mu1 * mu1;

    auto push_basis = [&](std::vector<std::vector<double>>& basis,
                          const std::vector<double>& vec) -> bool {
        if (reorth.max_vectors > 0 &&
            static_cast<index_t>(basis.size()) >= reorth.max_vectors)
            return false;
        basis.push_back(vec);
        if (reorth.kind == ReorthKind::partial && window > 0 &&
            static_cast<index_t>(basis.size()) > window)
            basis.erase(basis.begin());
        return true;
    };
    if (store_q && !push_basis(st.Q, st.q)) {
        rep.termination = Termination::memory_cap;
        rep.z = st.z;
        return rep;
    }
    if (store_p && !push_basis(st.P, st.p)) {
        rep.termination = Termination::memory_cap;
        rep.z = st.z;
        return rep;
    }

    double norm_est = opts.norm_estimate;
    if (norm_est == 0.0)
        norm_est = estimate_norm2(preconditioned_op(B, M, wfmt));

    // GS machinery: explicit residual products, on the supplied matrix or on
    // the preconditioned operator itself.
    const bool gs_active =
        cfg.criterion == StopCriterion::GS || opts.record_gs;
    auto gs_quotient = [&](std::span<const double> r) -> double {
        const double rn = norm2(r);
        if (rn == 0.0) return 0.0;
        std::vector<double> atr;
        if (opts.gs_matrix) {
            atr = matvec_t(*opts.gs_matrix, r, fp64());
        } else {
            atr = matvec_t(B, r, fp64());
            M.apply_inv_t(atr);
        }
        return norm2(atr) / rn;
    };
    double gs_base = 0.0;
    if (gs_active) {
        gs_base = gs_quotient(b);  // r^(0) = b since z starts at 0
        ++rep.gs_matvec_pairs;
    }
    std::vector<double> gs_minima;  // running minima for stagnation tracking

    auto count_product = [&]() {
        if (opts.a_product_counter) ++*opts.a_product_counter;
    };

    Termination term = Termination::max_iter;
    bool done = false;
    for (index_t i = 1; i <= cfg.max_iterations && !done; ++i) {
        // beta_{i+1} q_{i+1} = B M^{-1} p_i - mu_i q_i
        std::vector<double> mp = st.p;
        M.apply_inv(mp);
        std::vector<double> u = matvec(B, mp, wfmt);
        count_product();
        for (std::size_t k = 0; k < u.size(); ++k)
            u[k] = round_to(wfmt, u[k] - st.mu * st.q[k]);
        // The projection pass leaves u normalized; its post-projection norm
        // is the recurrence coefficient.
        double beta;
        if (store_q) {
            beta = reorthogonalize(st.Q, u, window);
        } else {
            beta = norm2(u);
            if (beta > 0.0)
                for (double& x : u) x /= beta;
        }

        double mu = 0.0;
        bool mu_alive = false;
        if (beta > 0.0) {
            for (std::size_t k = 0; k < u.size(); ++k)
                st.q[k] = round_to(wfmt, u[k]);
            if (store_q && !push_basis(st.Q, st.q)) {
                term = Termination::memory_cap;
                st.i = i;
                rep.iterations = i - 1;
                done = true;
                break;
            }
            // mu_{i+1} p_{i+1} = (B M^{-1})^T q_{i+1} - beta_{i+1} p_i
            std::vector<double> v = matvec_t(B, st.q, wfmt);
            M.apply_inv_t(v);
            for (std::size_t k = 0; k < v.size(); ++k)
                v[k] = round_to(wfmt, v[k] - beta * st.p[k]);
            if (store_p) {
                mu = reorthogonalize(st.P, v, window);
            } else {
                mu = norm2(v);
                if (mu > 0.0)
                    for (double& x : v) x /= mu;
            }
            if (mu > 0.0) {
                mu_alive = true;
                for (std::size_t k = 0; k < v.size(); ++k)
                    st.p[k] = round_to(wfmt, v[k]);
                if (store_p && !push_basis(st.P, st.p)) {
                    term = Termination::memory_cap;
                    st.i = i;
                    rep.iterations = i - 1;
                    done = true;
                    break;
                }
            }
        }
        st.beta = beta;
        st.mu = mu;

        // Givens rotation eliminating beta_{i+1}; scalars in fp64.
        const double rho = std::hypot(st.rhobar, beta);
        const double c = st.rhobar / rho;
        const double s = beta / rho;
        const double gamma = s * mu;
        const double phi = c * st.phibar;
        st.rhobar = -c * mu;
        st.phibar = s * st.phibar;
        st.c = c;
        st.s = s;
        st.rho = rho;
        st.phi = phi;
        st.gamma = gamma;

        // z^(i) = z^(i-1) + (phi/rho) w^(i); w^(i+1) = p^(i+1) - (gamma/rho) w^(i).
        const double zstep = phi / rho;
        for (std::size_t k = 0; k < st.z.size(); ++k)
            st.z[k] = round_to(wfmt, st.z[k] + zstep * st.w[k]);
        if (mu_alive) {
            const double wstep = gamma / rho;
            for (std::size_t k = 0; k < st.w.size(); ++k)
                st.w[k] = round_to(wfmt, st.p[k] - wstep * st.w[k]);
        }
        st.frob2 += beta * beta + mu * mu;
        st.i = i;

        // Estimates per the recurrence: ||r^(i)|| ~= phibar^(i+1) and
        // ||(B M^{-1})^T r^(i)|| ~= phibar^(i+1) mu^(i+1) |c^(i)|.
        IterRow row;
        row.iter = i;
        row.phibar = st.phibar;
        row.est_normt_r = st.phibar * mu * std::fabs(c);

        double estim = kInf;
        if (i == 1) {
            rep.estimator.delta.push_back(phi * phi);
        } else {
            auto [ell, e] = adaptive_estimate(rep.estimator, i, phi);
            row.est_ell = ell;
            estim = e;
        }
        row.estim = estim;
        const double znorm = norm2(st.z);
        row.ratio_pt = ratio_pt(estim, norm_est, znorm, beta1, cfg.pt_sqrt);
        row.ratio_ps =
            ratio_ps(row.est_normt_r, std::sqrt(st.frob2), st.phibar);

        const bool gs_due =
            gs_active && (i % std::max<index_t>(cfg.check_period, 1) == 0);
        if (gs_due) {
            std::vector<double> mz = st.z;
            M.apply_inv(mz);
            const std::vector<double> bz = matvec(B, mz, fp64());
            std::vector<double> r(b.begin(), b.end());
            for (std::size_t k = 0; k < r.size(); ++k) r[k] -= bz[k];
            row.ratio_gs = gs_base == 0.0 ? 0.0 : gs_quotient(r) / gs_base;
            ++rep.gs_matvec_pairs;
        }

        // Stopping tests; an exactly zero residual estimate always stops.
        bool stop = st.phibar == 0.0;
        switch (cfg.criterion) {
            case StopCriterion::PT:
                stop = stop || row.ratio_pt <= cfg.delta;
                break;
            case StopCriterion::PS:
                stop = stop || row.ratio_ps <= cfg.delta;
                if (!stop && cfg.delta_b > 0.0)
                    stop = st.phibar <=
                           cfg.delta_b *
                               (std::sqrt(st.frob2) * znorm + beta1);
                break;
            case StopCriterion::GS:
                if (gs_due) {
                    stop = stop || row.ratio_gs <= cfg.delta;
                    const double prev_min =
                        gs_minima.empty() ? kInf : gs_minima.back();
                    gs_minima.push_back(std::min(prev_min, row.ratio_gs));
                    const std::size_t w =
                        static_cast<std::size_t>(cfg.stagnation_window);
                    if (!stop && gs_minima.size() > w &&
                        gs_minima.back() >=
                            gs_minima[gs_minima.size() - 1 - w] *
                                (1.0 - cfg.stagnation_rtol)) {
                        term = Termination::stagnation;
                        rep.history.push_back(row);
                        rep.iterations = i;
                        if (opts.observer) opts.observer(st);
                        done = true;
                    }
                }
                break;
        }
        if (done && term == Termination::stagnation) break;

        rep.history.push_back(row);
        rep.iterations = i;
        if (opts.observer) opts.observer(st);

        if (stop) {
            term = Termination::converged;
            break;
        }
        if (!mu_alive) {
            // The bidiagonalization cannot continue (beta or mu vanished).
            term = Termination::lucky_breakdown;
            break;
        }
    }

    rep.termination = term;
    rep.z = st.z;
    rep.norm_estimate = norm_est;
    rep.frob_estimate = std::sqrt(st.frob2);
    if (opts.compute_true_residual) {
        std::vector<double> mz = st.z;
        M.apply_inv(mz);
        const std::vector<double> bz = matvec(B, mz, fp64());
        std::vector<double> r(b.begin(), b.end());
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= bz[k];
        rep.rnorm_true = norm2(r);
        std::vector<double> atr = matvec_t(B, r, fp64());
        M.apply_inv_t(atr);
        rep.atr_norm_true = norm2(atr);
    }
    rep.estimator.delta.shrink_to_fit();
    return rep;
}

}  // namespace icls
