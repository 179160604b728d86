// Batch experiment runner: single preconditioned solves, mixed-precision
// refinement runs, lsize/level sweeps, and stopping-criterion comparisons,
// with per-run histories, summary records, and printed tables.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icls/io.hpp"
#include "icls/refine.hpp"

namespace icls {

// Flag-level description of one run; string fields mirror the CLI values.
struct RunConfig {
    std::string matrix_path;
    std::uint64_t rhs_seed = 0;
    std::string precond = "ic-mem";  // none | ic-level | ic-mem
    index_t level = 1;
    index_t lsize = 10;
    index_t rsize = -1;  // negative: default to lsize
    std::string fact = "fp64";
    std::string apply;  // empty: default to fact
    std::string matvec = "fp64";
    std::string stop = "pt";  // gs | ps | pt
    double delta = 1e-5;
    double delta2 = 1e-8;          // refinement outer acceptance
    double eta = 1e3 * 0x1.0p-53;  // refinement stagnation threshold
    index_t maxit = 3000;
    std::string reorth = "none";  // none | full | one-sided | partial:K
    index_t itmax_outer = 20;
    bool record_gs = false;  // record the explicit ratio every iteration
    bool refine = false;     // refinement run instead of a single solve
};

struct RunOutcome {
    RunRecord record;
    std::vector<IterRow> history;
    // Refinement-only counters (zero for single solves).
    index_t nout = 0;
    index_t nsol = 0;
};

// Executes one run (solve or refinement per cfg.refine). Max-iteration,
// apply-breakdown, and memory-cap outcomes are recorded as data in the
// returned record; ParseError, ShiftBudgetExceeded, IoError, and invalid
// configurations propagate as exceptions.
RunOutcome execute_run(const RunConfig& cfg);

struct SweepPlan {
    std::vector<RunConfig> runs;
};

// Runs every entry of the plan, in parallel across runs when threads > 1;
// results are returned in plan order. Each run is independent and the
// execution is deterministic given the plan (timings aside).
std::vector<RunOutcome> execute_plan(const SweepPlan& plan, index_t threads);

// Parallelism cap from the ICLS_THREADS environment variable (>= 1;
// defaults to 1 when unset or unparsable).
index_t thread_cap_from_env();

// Full command-line driver (subcommands: solve, refine, sweep-lsize,
// sweep-level, compare-stop). Returns the process exit code: nonzero on
// parse/configuration/factorization-budget failures, zero otherwise.
int run_cli(int argc, const char* const* argv);

}  // namespace icls
