#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "icls/errors.hpp"
#include "icls/fp.hpp"
#include "icls/icfact.hpp"
#include "icls/krylov.hpp"
#include "icls/sparse.hpp"
#include "support/oracles.hpp"

using icls::fp64;
using icls::IdentityPreconditioner;
using icls::index_t;
using icls::lsqr;
using icls::LsqrOptions;
using icls::ReorthKind;
using icls::ReorthPolicy;
using icls::SparseMatrix;
using icls::StopCriterion;
using icls::StoppingConfig;
using icls::Termination;
using oracle::Dense;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

struct TestProblem {
    SparseMatrix B;
    Dense DB;
    std::vector<double> b;
};

TestProblem make_problem(index_t m, index_t n, std::uint64_t seed) {
    oracle::Rng rng(seed);
    TestProblem tp;
    tp.B = oracle::random_ls_matrix(m, n, 5, rng);
    tp.DB = oracle::to_dense(tp.B);
    tp.b = oracle::random_vec(m, rng);
    return tp;
}

StoppingConfig pt_stop(double delta, index_t maxit = 500) {
    StoppingConfig cfg;
    cfg.criterion = StopCriterion::PT;
    cfg.delta = delta;
    cfg.max_iterations = maxit;
    return cfg;
}

}  // namespace

TEST_SUITE("krylov") {

TEST_CASE("bidiagonalization invariants hold along the run") {
    const TestProblem tp = make_problem(40, 15, 0x41);
    const IdentityPreconditioner M;
    LsqrOptions opts;
    double prev_phibar = kInf;
    int checked = 0;
    opts.observer = [&](const icls::LsqrState& st) {
        CHECK(std::abs(oracle::norm2(st.q) - 1.0) <= 1e-12);
        CHECK(std::abs(oracle::norm2(st.p) - 1.0) <= 1e-12);
        CHECK(std::abs(st.c * st.c + st.s * st.s - 1.0) <= 4 * 0x1.0p-52);
        CHECK(st.phibar <= prev_phibar * (1.0 + 4 * 0x1.0p-52));
        prev_phibar = st.phibar;
        ++checked;
    };
    const auto rep = lsqr(tp.B, tp.b, M, pt_stop(1e-10), ReorthPolicy{}, fp64(),
                          opts);
    CHECK(checked == rep.iterations);
    CHECK(rep.termination == Termination::converged);
    // History mirrors the run length and carries monotone phibar.
    REQUIRE(static_cast<index_t>(rep.history.size()) == rep.iterations);
    for (std::size_t k = 1; k < rep.history.size(); ++k)
        CHECK(rep.history[k].phibar <=
              rep.history[k - 1].phibar * (1.0 + 4 * 0x1.0p-52));
}

TEST_CASE("estimated and true residual norms agree at exit") {
    const TestProblem tp = make_problem(50, 18, 0x42);
    const IdentityPreconditioner M;
    ReorthPolicy full;
    full.kind = ReorthKind::full;
    const auto rep =
        lsqr(tp.B, tp.b, M, pt_stop(1e-12), full, fp64(), LsqrOptions{});
    CHECK(rep.termination == Termination::converged);
    const double bnorm = oracle::norm2(tp.b);
    // rnorm_true is the explicitly recomputed residual norm.
    std::vector<double> r = tp.b;
    const std::vector<double> ax = oracle::mat_vec(tp.DB, rep.z);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= ax[i];
    CHECK(std::abs(rep.rnorm_true - oracle::norm2(r)) <= 1e-10 * bnorm);
    CHECK(std::abs(rep.history.back().phibar - oracle::norm2(r)) <=
          1e-8 * bnorm);
}

TEST_CASE("full reorthogonalization keeps the stored basis orthonormal") {
    const TestProblem tp = make_problem(60, 25, 0x43);
    const IdentityPreconditioner M;
    ReorthPolicy full;
    full.kind = ReorthKind::full;
    std::vector<std::vector<double>> qs;
    LsqrOptions opts;
    opts.observer = [&](const icls::LsqrState& st) { qs.push_back(st.q); };
    (void)lsqr(tp.B, tp.b, M, pt_stop(1e-12, 100), full, fp64(), opts);
    REQUIRE(qs.size() >= 5);
    for (std::size_t a = 0; a < qs.size(); ++a) {
        for (std::size_t b = 0; b < a; ++b)
            CHECK(std::abs(dot(qs[a], qs[b])) <= 1e-10);
        CHECK(std::abs(dot(qs[a], qs[a]) - 1.0) <= 1e-10);
    }
}

TEST_CASE("orthonormal columns converge in one iteration to the projection") {
    // B with exactly orthonormal columns: the first Krylov step already spans
    // the solution.
    oracle::Rng rng(0x44);
    const Dense DB = oracle::graded_matrix(30, 8, 0.0, rng);  // sigma == 1
    const SparseMatrix B = oracle::to_sparse(DB);
    const std::vector<double> b = oracle::random_vec(30, rng);
    const IdentityPreconditioner M;
    const auto rep =
        lsqr(B, b, M, pt_stop(1e-10), ReorthPolicy{}, fp64(), LsqrOptions{});
    // The iterate is exact after one step; the windowed estimator needs two
    // more steps to shed the initial large term and certify it.
    CHECK(rep.termination == Termination::converged);
    CHECK(rep.iterations <= 3);
    const std::vector<double> want = oracle::least_squares(DB, b);
    double diff = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < want.size(); ++j) {
        diff += (rep.z[j] - want[j]) * (rep.z[j] - want[j]);
        scale += want[j] * want[j];
    }
    CHECK(std::sqrt(diff) <= 1e-12 * std::sqrt(scale));
}

TEST_CASE("right-hand side orthogonal to the range is a lucky breakdown") {
    oracle::Rng rng(0x45);
    const Dense U = oracle::graded_matrix(20, 6, 0.0, rng);  // orthonormal cols
    const SparseMatrix B = oracle::to_sparse(U);
    std::vector<double> b = oracle::random_vec(20, rng);
    // Project out the range: b <- b - U (U^T b).
    const std::vector<double> utb = oracle::mat_tvec(U, b);
    const std::vector<double> uutb = oracle::mat_vec(U, utb);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= uutb[i];
    // Feed the residual of that projection through again to clean roundoff.
    const IdentityPreconditioner M;
    const auto rep =
        lsqr(B, b, M, pt_stop(1e-10), ReorthPolicy{}, fp64(), LsqrOptions{});
    // mu_1 is ~1e-16 rather than an exact zero, so either an immediate lucky
    // breakdown or a converged run with a negligible solution is acceptable.
    const double zn = oracle::norm2(rep.z);
    CHECK(zn <= 1e-10 * oracle::norm2(b));
    const std::vector<double> atr = oracle::mat_tvec(U, b);
    CHECK(oracle::norm2(atr) <= 1e-12 * oracle::norm2(b));
}

TEST_CASE("zero right-hand side is rejected") {
    const TestProblem tp = make_problem(10, 4, 0x46);
    const IdentityPreconditioner M;
    const std::vector<double> zero(10, 0.0);
    CHECK_THROWS_AS((void)lsqr(tp.B, zero, M, pt_stop(1e-8), ReorthPolicy{},
                               fp64(), LsqrOptions{}),
                    icls::Error);
}

TEST_CASE("adaptive estimator: geometric decay advances and sums the window") {
    icls::EstimatorState est;
    // 1-based shadow of the recorded terms; delta_1 stays 0 because the
    // standalone calls start at i = 2 and the state zero-fills earlier slots.
    std::vector<double> deltas{0.0, 0.0};
    double last_finite = kInf;
    index_t last_ell = 1;
    for (index_t i = 2; i <= 24; ++i) {
        const double phi = std::pow(0.25, static_cast<double>(i));
        deltas.push_back(phi * phi);
        const auto [ell, estim] = icls::adaptive_estimate(est, i, phi);
        CHECK(ell >= last_ell);  // the window start never retreats
        last_ell = ell;
        if (std::isfinite(estim)) {
            last_finite = estim;
            // The emitted value is exactly the window sum delta_ell..delta_i.
            double want = 0.0;
            for (index_t j = ell; j < static_cast<index_t>(deltas.size());
                 ++j)
                want += deltas[static_cast<std::size_t>(j)];
            CHECK(estim == doctest::Approx(want).epsilon(1e-12));
        }
    }
    CHECK(std::isfinite(last_finite));
    CHECK(last_ell > 1);  // strong decay must advance the window
}

TEST_CASE("adaptive estimator: a huge late term suppresses the estimate") {
    icls::EstimatorState est;
    for (index_t i = 2; i <= 10; ++i)
        (void)icls::adaptive_estimate(est, i, std::pow(0.5, double(i)));
    const index_t ell_before = est.ell;
    const auto [ell, estim] = icls::adaptive_estimate(est, 11, 1e6);
    CHECK(estim == kInf);
    CHECK(ell == ell_before);  // no advance on a spike
}

TEST_CASE("adaptive estimator: 200 random decaying sequences obey the window contract") {
    oracle::Rng rng(0x47);
    for (int rep = 0; rep < 200; ++rep) {
        icls::EstimatorState est;
        std::vector<double> deltas{0.0, 0.0};
        double phi = 1.0;
        index_t prev_ell = 1;
        const index_t len = 10 + static_cast<index_t>(rng.next() % 30);
        for (index_t i = 2; i <= len; ++i) {
            phi *= 0.2 + 0.6 * rng.uniform();  // decay factor in (0.2, 0.8)
            deltas.push_back(phi * phi);
            const auto [ell, estim] = icls::adaptive_estimate(est, i, phi);
            CHECK(ell >= prev_ell);
            CHECK(ell >= 1);
            CHECK(ell < i);
            prev_ell = ell;
            if (std::isfinite(estim)) {
                double want = 0.0;
                for (index_t j = ell;
                     j < static_cast<index_t>(deltas.size()); ++j)
                    want += deltas[static_cast<std::size_t>(j)];
                CHECK(estim == doctest::Approx(want).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("stopping ratios: closed-form spot values") {
    // ratio_gs of the initial residual against itself is exactly 1.
    const TestProblem tp = make_problem(12, 5, 0x48);
    CHECK(icls::ratio_gs(tp.B, tp.b, tp.b) == doctest::Approx(1.0));
    // ratio_ps is a plain quotient.
    CHECK(icls::ratio_ps(2.0, 4.0, 0.5) == doctest::Approx(1.0));
    CHECK(icls::ratio_ps(0.0, 4.0, 0.5) == 0.0);
    // ratio_pt takes the square root of the squared-norm estimate.
    CHECK(icls::ratio_pt(4.0, 1.0, 3.0, 7.0, true) ==
          doctest::Approx(2.0 / 10.0));
    CHECK(icls::ratio_pt(4.0, 1.0, 3.0, 7.0, false) ==
          doctest::Approx(4.0 / 10.0));
}

TEST_CASE("converged PT run reports an exit ratio at or under its tolerance") {
    const TestProblem tp = make_problem(45, 16, 0x49);
    const IdentityPreconditioner M;
    const auto rep = lsqr(tp.B, tp.b, M, pt_stop(1e-8), ReorthPolicy{}, fp64(),
                          LsqrOptions{});
    REQUIRE(rep.termination == Termination::converged);
    CHECK(rep.history.back().ratio_pt <= 1e-8);
}

TEST_CASE("spectral norm estimation matches dense eigen-oracles") {
    // Known diagonal.
    const SparseMatrix D =
        SparseMatrix::from_triplets(2, 2, {{0, 0, 3.0}, {1, 1, 1.0}});
    CHECK(icls::estimate_norm2(D) == doctest::Approx(3.0).epsilon(1e-6));
    // Scaled identity.
    std::vector<icls::Triplet> t;
    for (index_t i = 0; i < 7; ++i) t.push_back({i, i, 2.5});
    CHECK(icls::estimate_norm2(SparseMatrix::from_triplets(7, 7, t)) ==
          doctest::Approx(2.5).epsilon(1e-9));
    // Rectangular with a clear spectral gap (one decade of graded singular
    // values), against the Jacobi singular-value oracle.
    oracle::Rng rng(0x4A);
    const Dense DA = oracle::graded_matrix(40, 15, 1.0, rng);
    const SparseMatrix A = oracle::to_sparse(DA);
    const double want = oracle::spectral_norm(DA);
    CHECK(icls::estimate_norm2(A) == doctest::Approx(want).epsilon(1e-3));
}

TEST_CASE("reorthogonalize projects out the stored directions") {
    oracle::Rng rng(0x4B);
    // Build an orthonormal basis of 4 vectors in R^10 from the graded helper.
    const Dense U = oracle::graded_matrix(10, 4, 0.0, rng);
    std::vector<std::vector<double>> basis;
    for (index_t k = 0; k < 4; ++k) {
        std::vector<double> col(10);
        for (index_t i = 0; i < 10; ++i) col[i] = U[i][k];
        basis.push_back(col);
    }
    // A vector already orthogonal to the basis is unchanged.
    std::vector<double> v = oracle::random_vec(10, rng);
    const std::vector<double> utv = oracle::mat_tvec(U, v);
    const std::vector<double> uutv = oracle::mat_vec(U, utv);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= uutv[i];
    std::vector<double> v_before = v;
    const double norm_after = icls::reorthogonalize(basis, v);
    CHECK(norm_after ==
          doctest::Approx(oracle::norm2(v_before)).epsilon(1e-12));
    // The call renormalizes: the direction is unchanged, the length is 1.
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(std::abs(v[i] - v_before[i] / norm_after) <= 1e-13);
    // A vector inside the span is annihilated.
    std::vector<double> inside(10, 0.0);
    for (index_t k = 0; k < 4; ++k)
        for (index_t i = 0; i < 10; ++i)
            inside[i] += (1.0 + static_cast<double>(k)) * U[i][k];
    const double res = icls::reorthogonalize(basis, inside);
    CHECK(res <= 1e-12);
    // Any vector ends up orthogonal to every stored direction.
    std::vector<double> w = oracle::random_vec(10, rng);
    (void)icls::reorthogonalize(basis, w);
    for (const auto& q : basis) CHECK(std::abs(dot(q, w)) <= 1e-12);
}

TEST_CASE("a complete-factor preconditioner does not change the solution") {
    oracle::Rng rng(0x4C);
    const SparseMatrix A = oracle::random_ls_matrix(50, 20, 6, rng);
    const std::vector<double> b = oracle::random_vec(50, rng);
    const icls::ScaledProblem sp = icls::scale_columns(A);
    const icls::NormalMatrix N = icls::form_normal(sp.B, fp64());
    const icls::ICFactor F =
        icls::ic_memory_limited(N, icls::MemLimits::unlimited(), fp64());
    const icls::IcPreconditioner M(F, fp64());
    const IdentityPreconditioner I;

    const auto rep_p =
        lsqr(sp.B, b, M, pt_stop(1e-12), ReorthPolicy{}, fp64(),
             LsqrOptions{});
    const auto rep_i =
        lsqr(sp.B, b, I, pt_stop(1e-12), ReorthPolicy{}, fp64(),
             LsqrOptions{});
    CHECK(rep_p.termination == Termination::converged);
    CHECK(rep_p.iterations <= 3);  // near-direct with a complete factor
    const std::vector<double> xp =
        icls::unscale_solution(M, sp.S, rep_p.z, fp64());
    const std::vector<double> xi =
        icls::unscale_solution(I, sp.S, rep_i.z, fp64());
    double diff = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < xp.size(); ++j) {
        diff += (xp[j] - xi[j]) * (xp[j] - xi[j]);
        scale += xi[j] * xi[j];
    }
    CHECK(std::sqrt(diff) <= 1e-6 * std::sqrt(scale));
}

TEST_CASE("basis storage cap ends the run with memory_cap") {
    const TestProblem tp = make_problem(60, 30, 0x4D);
    const IdentityPreconditioner M;
    ReorthPolicy full;
    full.kind = ReorthKind::full;
    full.max_vectors = 5;
    const auto rep =
        lsqr(tp.B, tp.b, M, pt_stop(1e-14, 500), full, fp64(), LsqrOptions{});
    CHECK(rep.termination == Termination::memory_cap);
    CHECK(rep.iterations <= 6);
    CHECK(icls::to_string(rep.termination) == std::string("memory_cap"));
}

TEST_CASE("recorded GS ratios decrease and count matvec pairs") {
    const TestProblem tp = make_problem(40, 14, 0x4E);
    const IdentityPreconditioner M;
    LsqrOptions opts;
    opts.record_gs = true;
    opts.gs_matrix = &tp.B;
    const auto rep =
        lsqr(tp.B, tp.b, M, pt_stop(1e-10), ReorthPolicy{}, fp64(), opts);
    index_t recorded = 0;
    double first = kInf, last = kInf;
    for (const auto& row : rep.history) {
        if (!std::isnan(row.ratio_gs)) {
            if (recorded == 0) first = row.ratio_gs;
            last = row.ratio_gs;
            ++recorded;
        }
    }
    REQUIRE(recorded >= 2);
    CHECK(last < first);
    // One pair for the baseline quotient plus one per recorded check.
    CHECK(rep.gs_matvec_pairs == recorded + 1);
}

TEST_CASE("an unreachable GS tolerance ends in stagnation, not max_iter") {
    const TestProblem tp = make_problem(35, 12, 0x4F);
    const IdentityPreconditioner M;
    StoppingConfig cfg;
    cfg.criterion = StopCriterion::GS;
    cfg.delta = 1e-30;  // far below what fp64 can reach
    cfg.max_iterations = 3000;
    LsqrOptions opts;
    opts.gs_matrix = &tp.B;
    const auto rep = lsqr(tp.B, tp.b, M, cfg, ReorthPolicy{}, fp64(), opts);
    CHECK(rep.termination == Termination::stagnation);
    CHECK(rep.iterations < 3000);
}

}  // TEST_SUITE("krylov")
