// Preconditioned LSQR on the column-scaled least-squares problem, with
// optional reorthogonalization of the bidiagonalization bases, three stopping
// criteria, an adaptive solution-error estimator driving the estimator-based
// criterion, and a power-iteration 2-norm estimator.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "icls/fp.hpp"
#include "icls/icfact.hpp"
#include "icls/sparse.hpp"

namespace icls {

// Right preconditioner M: the solver needs products with M^{-1} and M^{-T}.
// Both applications must be linear and nonsingular; they run in the
// implementation's declared application format.
class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    // v <- M^{-1} v. Throws ApplyBreakdown if the application overflows.
    virtual void apply_inv(std::span<double> v) const = 0;
    // v <- M^{-T} v. Throws ApplyBreakdown if the application overflows.
    virtual void apply_inv_t(std::span<double> v) const = 0;
    virtual const FpFormat& apply_format() const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    void apply_inv(std::span<double>) const override {}
    void apply_inv_t(std::span<double>) const override {}
    const FpFormat& apply_format() const override { return fp64(); }
};

// M = L^T for an incomplete Cholesky factor L of B^T B, so that M^{-1} is an
// upper-triangular backward solve and M^{-T} a lower-triangular forward
// solve, both in the given application format.
class IcPreconditioner final : public Preconditioner {
public:
    IcPreconditioner(const ICFactor& factor, const FpFormat& format)
        : factor_(&factor), format_(&format) {}
    void apply_inv(std::span<double> v) const override;
    void apply_inv_t(std::span<double> v) const override;
    const FpFormat& apply_format() const override { return *format_; }

private:
    const ICFactor* factor_;
    const FpFormat* format_;
};

enum class StopCriterion { GS, PS, PT };

enum class Termination {
    converged,
    max_iter,
    stagnation,
    lucky_breakdown,
    apply_breakdown,
    memory_cap,
};

const char* to_string(Termination t);

struct StoppingConfig {
    StopCriterion criterion = StopCriterion::PT;
    double delta = 1e-5;
    // Secondary consistent-system tolerance for PS: additionally stop when
    // est||r|| <= delta_b * (est||A||*||z|| + ||b||). 0 disables it.
    double delta_b = 0.0;
    index_t max_iterations = 3000;
    // The GS ratio costs an explicit matrix-vector product pair; it is
    // evaluated every check_period iterations.
    index_t check_period = 1;
    // Divide the square root of the estimator value in the PT ratio (the
    // estimator tracks a squared energy-norm error); disable to divide the
    // raw value.
    bool pt_sqrt = true;
    // GS only: declare stagnation when the running minimum of the ratio has
    // not improved by a relative stagnation_rtol over the last
    // stagnation_window checks.
    index_t stagnation_window = 50;
    double stagnation_rtol = 1e-3;
};

enum class ReorthKind { none, full, one_sided, partial };

struct ReorthPolicy {
    ReorthKind kind = ReorthKind::none;
    // partial: project against the last min(window, i) stored vectors.
    index_t window = 0;
    // Cap on stored vectors per basis; exceeding it ends the solve with
    // Termination::memory_cap. 0 means unlimited.
    index_t max_vectors = 0;
};

// Adaptive estimator for the squared energy-norm solution error
// ||x - x^(l-1)||^2_{A^T A} ~= sum_{k>=l} delta_k with delta_k the squared
// iterate-step weights phi_k^2 produced by the solver recurrence.
struct EstimatorState {
    std::vector<double> delta;  // delta[k-1] holds phi_k^2
    index_t ell = 1;            // l_{i-1}, 1-based; nondecreasing
    double tau = 0.25;
    double tol = 1e-4;
    double estimate = std::numeric_limits<double>::infinity();
};

// Appends delta_i = phi_i^2 and advances the window start l as far as the
// delay test allows. Returns (l_i, estim_{l_i}); the estimate is +inf when
// the advance test never fired on this call. Requires i >= 2 with entries
// 1..i-1 already recorded.
std::pair<index_t, double> adaptive_estimate(EstimatorState& est, index_t i,
                                             double phi);

// Bidiagonalization state exposed to observers (tests hook invariants).
struct LsqrState {
    index_t i = 0;
    std::vector<double> q, p, w, z;
    double beta = 0, mu = 0, rhobar = 0, phibar = 0;
    double c = 0, s = 0, rho = 0, phi = 0, gamma = 0;
    double frob2 = 0;  // running squared Frobenius-norm accumulation
    std::vector<std::vector<double>> Q, P;  // stored bases (policy-dependent)
};

struct IterRow {
    index_t iter = 0;
    double phibar = 0;       // estimated ||r||
    double est_normt_r = 0;  // estimated ||op^T r|| for the solved operator
    double ratio_pt = std::numeric_limits<double>::quiet_NaN();
    double ratio_gs = std::numeric_limits<double>::quiet_NaN();
    double ratio_ps = std::numeric_limits<double>::quiet_NaN();
    index_t est_ell = 0;  // estimator window start (0 = none emitted)
    double estim = std::numeric_limits<double>::infinity();
};

struct SolveReport {
    index_t iterations = 0;
    Termination termination = Termination::max_iter;
    std::vector<IterRow> history;
    std::vector<double> z;  // solution of the preconditioned problem
    // True norms of the preconditioned system at exit, accumulated in fp64
    // (NaN when their computation was disabled).
    double rnorm_true = std::numeric_limits<double>::quiet_NaN();
    double atr_norm_true = std::numeric_limits<double>::quiet_NaN();
    index_t gs_matvec_pairs = 0;  // explicit product pairs spent on GS checks
    double norm_estimate = 0;     // 2-norm estimate used by the PT ratio
    double frob_estimate = 0;     // Frobenius estimate at exit
    EstimatorState estimator;
};

struct LsqrOptions {
    // Precomputed 2-norm estimate of the preconditioned operator; 0 means
    // compute one internally (fixed seed, deterministic).
    double norm_estimate = 0.0;
    // Record the GS ratio each check period even when it is not the stopping
    // criterion (it still costs the explicit products).
    bool record_gs = false;
    // Matrix defining the GS ratio; defaults to the preconditioned operator
    // itself. Supplying the original (unscaled) matrix evaluates the ratio on
    // the original problem; the residual is unchanged by column scaling.
    const SparseMatrix* gs_matrix = nullptr;
    // Counts products with the non-transposed matrix performed by solver
    // iterations (excludes norm estimation and GS checks).
    index_t* a_product_counter = nullptr;
    // Compute true residual norms of the preconditioned system at exit (one
    // extra product pair).
    bool compute_true_residual = true;
    std::function<void(const LsqrState&)> observer;
};

// Preconditioned LSQR for min ||b - B M^{-1} z||_2. Matrix products run in
// matvec_format, which also rounds the recurrence vector updates;
// preconditioner applications run in the preconditioner's format; all
// recurrence scalars and stopping arithmetic are fp64. The caller maps the
// solution back via x = S M^{-1} z. Throws ApplyBreakdown (propagated from
// the preconditioner application).
SolveReport lsqr(const SparseMatrix& B, std::span<const double> b,
                 const Preconditioner& M, const StoppingConfig& cfg,
                 const ReorthPolicy& reorth, const FpFormat& matvec_format,
                 const LsqrOptions& opts = {});

// x = S * (M^{-1} z), each component rounded to `format`.
std::vector<double> unscale_solution(const Preconditioner& M,
                                     std::span<const double> S,
                                     std::span<const double> z,
                                     const FpFormat& format);

// (||A^T r_i|| / ||r_i||) / (||A^T r_0|| / ||r_0||), explicit fp64 products.
double ratio_gs(const SparseMatrix& A, std::span<const double> r_i,
                std::span<const double> r_0);

// Recurrence-only backward-error ratio: est||A^T r|| / (est||A|| * est||r||).
double ratio_ps(double est_norm_atr, double est_norm_a, double est_norm_r);

// Estimator-based ratio: estim / (est||A|| * ||x|| + ||b||), with the square
// root of estim taken by default (estim approximates a squared norm).
double ratio_pt(double estim, double est_norm_a, double norm_x, double norm_b,
                bool take_sqrt = true);

// General linear operator for norm estimation of composed operators.
struct LinearOp {
    index_t rows = 0;
    index_t cols = 0;
    std::function<void(std::span<const double>, std::span<double>)> apply;
    std::function<void(std::span<const double>, std::span<double>)> apply_t;
};

// Largest-singular-value estimate by power iteration on Op^T Op from a fixed
// deterministic start vector; stops on relative change < tol or maxit.
// Returns a lower bound on ||Op||_2 up to iteration error.
double estimate_norm2(const LinearOp& op, double tol = 1e-4,
                      index_t maxit = 100);
double estimate_norm2(const SparseMatrix& A, double tol = 1e-4,
                      index_t maxit = 100);

// The preconditioned operator B M^{-1} with products in matvec_format and
// applications in the preconditioner's format (used for PT norm estimates).
LinearOp preconditioned_op(const SparseMatrix& B, const Preconditioner& M,
                           const FpFormat& matvec_format);

// One classical Gram-Schmidt pass of v against the last `window` stored
// basis vectors (all of them when window <= 0), then renormalization.
// Returns the post-projection norm; v is left unnormalized (and should be
// treated as a breakdown) when that norm is 0.
double reorthogonalize(const std::vector<std::vector<double>>& basis,
                       std::span<double> v, index_t window = 0);

}  // namespace icls
