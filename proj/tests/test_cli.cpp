#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "icls/experiment.hpp"
#include "icls/fp.hpp"
#include "icls/icfact.hpp"
#include "icls/io.hpp"
#include "icls/sparse.hpp"
#include "support/oracles.hpp"

using icls::index_t;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "icls-cli-tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "icls");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return icls::run_cli(static_cast<int>(argv.size()), argv.data());
}

// A tall well-conditioned test matrix written once per binary run.
const std::string& fixture_matrix() {
    static const std::string path = [] {
        oracle::Rng rng(0x71);
        const icls::SparseMatrix A = oracle::random_ls_matrix(20, 8, 4, rng);
        const std::string p = (scratch_dir() / "fixture.mtx").string();
        icls::write_matrix_market(p, A);
        return p;
    }();
    return path;
}

// Square nonsingular system: any right-hand side is consistent.
const std::string& square_matrix() {
    static const std::string path = [] {
        oracle::Rng rng(0x72);
        std::vector<icls::Triplet> t;
        for (index_t j = 0; j < 10; ++j) {
            t.push_back({j, j, 3.0 + rng.uniform()});
            if (j > 0) t.push_back({j, j - 1, 0.5 * rng.symmetric()});
        }
        const std::string p = (scratch_dir() / "square.mtx").string();
        icls::write_matrix_market(p,
                                  icls::SparseMatrix::from_triplets(10, 10, t));
        return p;
    }();
    return path;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// Drop the trailing wall_seconds column from a summary CSV line.
std::string strip_timing(const std::string& line) {
    const auto pos = line.rfind(',');
    return line.substr(0, pos);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("solve on a consistent square system drives the residual to zero") {
    const fs::path out = scratch_dir() / "solve-square";
    const int rc = run({"solve", "--matrix", square_matrix(), "--precond",
                        "none", "--delta", "1e-12", "--out", out.string(),
                        "--format", "csv"});
    CHECK(rc == 0);
    const auto recs = icls::read_run_records(
        (out / "summary.csv").string(), icls::OutputFormat::csv);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].termination == "converged");
    CHECK(recs[0].rnorm_true <= 1e-8);
    CHECK(recs[0].iterations > 0);
    CHECK(recs[0].precond == "none");
    CHECK(recs[0].stop == "pt");
}

TEST_CASE("identical invocations produce identical outputs modulo timing") {
    const fs::path out1 = scratch_dir() / "det-1";
    const fs::path out2 = scratch_dir() / "det-2";
    for (const fs::path& o : {out1, out2}) {
        const int rc =
            run({"solve", "--matrix", fixture_matrix(), "--precond", "ic-mem",
                 "--lsize", "4", "--fact", "fp32", "--delta", "1e-8", "--out",
                 o.string(), "--format", "csv"});
        REQUIRE(rc == 0);
    }
    const auto s1 = read_lines((out1 / "summary.csv").string());
    const auto s2 = read_lines((out2 / "summary.csv").string());
    REQUIRE(s1.size() == s2.size());
    for (std::size_t k = 0; k < s1.size(); ++k)
        CHECK(strip_timing(s1[k]) == strip_timing(s2[k]));
    // Per-iteration history contains no timing and must match bytewise.
    const auto h1 = read_lines((out1 / "run_001.csv").string());
    const auto h2 = read_lines((out2 / "run_001.csv").string());
    CHECK(h1 == h2);
    REQUIRE(h1.size() >= 2);
}

TEST_CASE("reported factor size matches an in-process refactorization") {
    const fs::path out = scratch_dir() / "nnz-check";
    const int rc = run({"solve", "--matrix", fixture_matrix(), "--precond",
                        "ic-mem", "--lsize", "5", "--rsize", "5", "--fact",
                        "fp64", "--out", out.string(), "--format", "csv"});
    REQUIRE(rc == 0);
    const auto recs = icls::read_run_records(
        (out / "summary.csv").string(), icls::OutputFormat::csv);
    REQUIRE(recs.size() == 1);

    const icls::Problem prob = icls::load_problem({fixture_matrix(), true, 0});
    const icls::ScaledProblem sp = icls::scale_columns(prob.A);
    const icls::SparseMatrix Bf =
        icls::squeeze_matrix(sp.B, icls::fp64(), nullptr);
    const icls::NormalMatrix N = icls::form_normal(Bf, icls::fp64());
    const icls::ICFactor F =
        icls::ic_memory_limited(N, icls::MemLimits{5, 5}, icls::fp64());
    CHECK(recs[0].nnz_factor == F.L.nnz());
    CHECK(recs[0].alpha == F.alpha);
    CHECK(recs[0].lsize == 5);
    CHECK(recs[0].rsize == 5);
}

TEST_CASE("lsize sweeps grow the factor monotonically") {
    const fs::path out = scratch_dir() / "sweep";
    const int rc = run({"sweep-lsize", "--matrix", fixture_matrix(), "--from",
                        "2", "--to", "7", "--step", "5", "--fact", "fp64",
                        "--out", out.string(), "--format", "json"});
    REQUIRE(rc == 0);
    const auto recs = icls::read_run_records(
        (out / "summary.json").string(), icls::OutputFormat::json);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].lsize == 2);
    CHECK(recs[1].lsize == 7);
    CHECK(recs[0].precond == "ic-mem");
    CHECK(recs[1].nnz_factor >= recs[0].nnz_factor);
    // Default rsize trails lsize in the sweep.
    CHECK(recs[0].rsize == 2);
    CHECK(recs[1].rsize == 7);
}

TEST_CASE("stop-rule comparison emits one run per criterion") {
    const fs::path out = scratch_dir() / "compare";
    const int rc = run({"compare-stop", "--matrix", fixture_matrix(),
                        "--precond", "ic-mem", "--lsize", "4", "--delta",
                        "1e-6", "--out", out.string(), "--format", "json"});
    REQUIRE(rc == 0);
    const auto recs = icls::read_run_records(
        (out / "summary.json").string(), icls::OutputFormat::json);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].stop == "gs");
    CHECK(recs[1].stop == "ps");
    CHECK(recs[2].stop == "pt");
    for (const auto& r : recs) CHECK(r.termination == "converged");
}

TEST_CASE("refine subcommand reports refinement outcomes") {
    // A tall inconsistent system: the optimal residual is orthogonal to the
    // range, so the backward-error ratio can actually reach the target.
    const fs::path out = scratch_dir() / "refine";
    const int rc = run({"refine", "--matrix", fixture_matrix(), "--fact",
                        "fp32", "--lsize", "6", "--delta2", "1e-8", "--out",
                        out.string(), "--format", "csv"});
    REQUIRE(rc == 0);
    const auto recs = icls::read_run_records(
        (out / "summary.csv").string(), icls::OutputFormat::csv);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].termination == "converged_gs");
    CHECK(recs[0].fact_format == "fp32");
    CHECK(recs[0].stop == "pt");
    CHECK(recs[0].final_ratio_gs < 1e-8);
}

TEST_CASE("usage errors exit nonzero") {
    CHECK(run({"solve"}) != 0);                       // missing --matrix
    CHECK(run({"solve", "--matrix", fixture_matrix(), "--no-such-flag"}) != 0);
    CHECK(run({"frobnicate"}) != 0);                  // unknown subcommand
    CHECK(run({"solve", "--matrix", "/nonexistent/x.mtx"}) != 0);
    CHECK(run({"solve", "--matrix", fixture_matrix(), "--fact", "fp8"}) != 0);
    CHECK(run({"solve", "--matrix", fixture_matrix(), "--reorth",
               "partial:notanumber"}) != 0);
}

TEST_CASE("worker count comes from the environment with a floor of one") {
    unsetenv("ICLS_THREADS");
    CHECK(icls::thread_cap_from_env() == 1);
    setenv("ICLS_THREADS", "3", 1);
    CHECK(icls::thread_cap_from_env() == 3);
    setenv("ICLS_THREADS", "0", 1);
    CHECK(icls::thread_cap_from_env() == 1);
    setenv("ICLS_THREADS", "junk", 1);
    CHECK(icls::thread_cap_from_env() == 1);
    // A threaded sweep produces the same records as a serial one.
    setenv("ICLS_THREADS", "2", 1);
    const fs::path out_par = scratch_dir() / "sweep-par";
    REQUIRE(run({"sweep-lsize", "--matrix", fixture_matrix(), "--from", "2",
                 "--to", "6", "--step", "2", "--out", out_par.string(),
                 "--format", "csv"}) == 0);
    unsetenv("ICLS_THREADS");
    const fs::path out_ser = scratch_dir() / "sweep-ser";
    REQUIRE(run({"sweep-lsize", "--matrix", fixture_matrix(), "--from", "2",
                 "--to", "6", "--step", "2", "--out", out_ser.string(),
                 "--format", "csv"}) == 0);
    const auto p = read_lines((out_par / "summary.csv").string());
    const auto s = read_lines((out_ser / "summary.csv").string());
    REQUIRE(p.size() == s.size());
    for (std::size_t k = 0; k < p.size(); ++k)
        CHECK(strip_timing(p[k]) == strip_timing(s[k]));
}

}  // TEST_SUITE("cli")
