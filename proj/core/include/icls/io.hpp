// Problem ingestion (Matrix Market), deterministic right-hand-side
// generation, and experiment result serialization (CSV / JSON).
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "icls/krylov.hpp"
#include "icls/sparse.hpp"

namespace icls {

// How to turn a matrix file into a solvable overdetermined problem.
struct ProblemSpec {
    std::string path;
    // Transpose at load when m < n so the system is overdetermined; square
    // inputs are accepted as-is.
    bool transpose_if_underdetermined = true;
    std::uint64_t rhs_seed = 0;
};

struct Problem {
    SparseMatrix A;
    std::vector<double> b;
    std::string path;
};

// One solver run's configuration and outcome, serializable to CSV and JSON
// (snake_case field names) and round-trippable through both.
struct RunRecord {
    std::string problem;
    std::string precond;  // none | ic-level | ic-mem
    index_t level = 0;
    index_t lsize = 0;
    index_t rsize = 0;
    std::string fact_format;
    std::string apply_format;
    std::string matvec_format;
    std::string stop;  // gs | ps | pt
    double delta = 0;
    std::string reorth;  // none | full | one-sided | partial:K
    std::uint64_t rhs_seed = 0;
    index_t iterations = 0;
    std::string termination;
    double final_ratio_pt = std::numeric_limits<double>::quiet_NaN();
    double final_ratio_gs = std::numeric_limits<double>::quiet_NaN();
    double final_ratio_ps = std::numeric_limits<double>::quiet_NaN();
    double rnorm_true = std::numeric_limits<double>::quiet_NaN();
    double alpha = 0;
    index_t nnz_factor = 0;
    double wall_seconds = 0;
};

// Coordinate or array Matrix Market file, real or integer field, general or
// symmetric; symmetric inputs are expanded, duplicates summed, one-based
// indices converted. Throws ParseError{line}, DimensionError, IoError.
SparseMatrix load_matrix_market(const std::string& path);

// Writes A in coordinate real general format with full double precision
// (a written matrix re-loads with identical pattern and values).
void write_matrix_market(const std::string& path, const SparseMatrix& A);

// Loads the matrix per the spec and generates the seeded right-hand side.
Problem load_problem(const ProblemSpec& spec);

// Deterministic components uniform in [-1, 1] from a 64-bit splitmix
// generator; bitwise identical for identical (m, seed) on any platform.
std::vector<double> random_rhs(index_t m, std::uint64_t seed);

enum class OutputFormat { csv, json };

// Writes one summary file of records (`summary.csv` / `summary.json`) and one
// per-iteration history file per run (`run_001.csv`, ...) under `dir`,
// creating the directory when needed. History columns: iter, phibar,
// est_normt_r, ratio_pt, ratio_gs (empty when not computed), rnorm_true
// (final row only). `histories` must be empty or match `records` in length.
// Throws IoError.
void write_history(const std::vector<RunRecord>& records,
                   const std::vector<std::vector<IterRow>>& histories,
                   const std::string& dir, OutputFormat format);

// Reads back a summary file produced by write_history.
std::vector<RunRecord> read_run_records(const std::string& path,
                                        OutputFormat format);

}  // namespace icls
