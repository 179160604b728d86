#include "icls/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "icls/errors.hpp"

namespace icls {

namespace {

ReorthPolicy parse_reorth(const std::string& s) {
    ReorthPolicy p;
    if (s == "none") {
        p.kind = ReorthKind::none;
    } else if (s == "full") {
        p.kind = ReorthKind::full;
    } else if (s == "one-sided") {
        p.kind = ReorthKind::one_sided;
    } else if (s.rfind("partial:", 0) == 0) {
        p.kind = ReorthKind::partial;
        char* end = nullptr;
        const long long k = std::strtoll(s.c_str() + 8, &end, 10);
        if (end == s.c_str() + 8 || *end != '\0' || k < 1)
            throw Error("invalid reorthogonalization window in '" + s + "'");
        p.window = static_cast<index_t>(k);
    } else {
        throw Error("unknown reorthogonalization policy '" + s + "'");
    }
    return p;
}

StopCriterion parse_stop(const std::string& s) {
    if (s == "gs") return StopCriterion::GS;
    if (s == "ps") return StopCriterion::PS;
    if (s == "pt") return StopCriterion::PT;
    throw Error("unknown stopping criterion '" + s + "'");
}

// Resolves the defaulting rules shared by every execution path.
RunConfig resolved(RunConfig cfg) {
    if (cfg.apply.empty()) cfg.apply = cfg.fact;
    if (cfg.rsize < 0) cfg.rsize = cfg.lsize;
    return cfg;
}

void fill_record_config(RunRecord& rec, const RunConfig& cfg) {
    rec.problem = cfg.matrix_path;
    rec.precond = cfg.refine ? "ic-mem" : cfg.precond;
    rec.level = cfg.level;
    rec.lsize = cfg.lsize;
    rec.rsize = cfg.rsize;
    rec.fact_format = cfg.fact;
    rec.apply_format = cfg.apply;
    rec.matvec_format = cfg.matvec;
    rec.stop = cfg.refine ? "pt" : cfg.stop;
    rec.delta = cfg.delta;
    rec.reorth = cfg.reorth;
    rec.rhs_seed = cfg.rhs_seed;
}

RunOutcome execute_solve(const RunConfig& cfg) {
    RunOutcome out;
    RunRecord& rec = out.record;
    fill_record_config(rec, cfg);

    const auto t0 = std::chrono::steady_clock::now();
    const Problem prob =
        load_problem({cfg.matrix_path, true, cfg.rhs_seed});
    const ScaledProblem sp = scale_columns(prob.A);

    const FpFormat& ff = format_by_name(cfg.fact);
    const FpFormat& af = format_by_name(cfg.apply);
    const FpFormat& mf = format_by_name(cfg.matvec);

    std::optional<ICFactor> factor;
    std::unique_ptr<Preconditioner> M;
    if (cfg.precond == "none") {
        M = std::make_unique<IdentityPreconditioner>();
    } else {
        const SparseMatrix B_ell = squeeze_matrix(sp.B, ff);
        const NormalMatrix C = form_normal(B_ell, ff);
        if (cfg.precond == "ic-level")
            factor = ic_level(C, cfg.level, ff);
        else if (cfg.precond == "ic-mem")
            factor =
                ic_memory_limited(C, {cfg.lsize, cfg.rsize}, ff);
        else
            throw Error("unknown preconditioner '" + cfg.precond + "'");
        rec.alpha = factor->alpha;
        rec.nnz_factor = factor->L.nnz();
        M = std::make_unique<IcPreconditioner>(*factor, af);
    }

    StoppingConfig scfg;
    scfg.criterion = parse_stop(cfg.stop);
    scfg.delta = cfg.delta;
    scfg.max_iterations = cfg.maxit;
    const ReorthPolicy reorth = parse_reorth(cfg.reorth);
    LsqrOptions opts;
    opts.gs_matrix = &prob.A;
    opts.record_gs = cfg.record_gs;

    try {
        SolveReport rep = lsqr(sp.B, prob.b, *M, scfg, reorth, mf, opts);
        rec.iterations = rep.iterations;
        rec.termination = to_string(rep.termination);
        rec.rnorm_true = rep.rnorm_true;
        if (!rep.history.empty()) {
            const IterRow& last = rep.history.back();
            rec.final_ratio_pt = last.ratio_pt;
            rec.final_ratio_gs = last.ratio_gs;
            rec.final_ratio_ps = last.ratio_ps;
        }
        out.history = std::move(rep.history);
    } catch (const ApplyBreakdown&) {
        rec.termination = to_string(Termination::apply_breakdown);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
}

RunOutcome execute_refinement(const RunConfig& cfg) {
    RunOutcome out;
    RunRecord& rec = out.record;
    fill_record_config(rec, cfg);

    const auto t0 = std::chrono::steady_clock::now();
    const Problem prob =
        load_problem({cfg.matrix_path, true, cfg.rhs_seed});

    RefineConfig rc;
    rc.fact_format = format_by_name(cfg.fact);
    rc.work_format = format_by_name(cfg.matvec);
    rc.residual_format = fp64();
    rc.itmax = cfg.itmax_outer;
    rc.inner.delta = cfg.delta;
    rc.inner.max_iterations = cfg.maxit;
    rc.delta2 = cfg.delta2;
    rc.eta = cfg.eta;
    rc.reorth = parse_reorth(cfg.reorth);

    try {
        const RefineReport rr =
            lsqr_ir(prob.A, prob.b, rc, {cfg.lsize, cfg.rsize});
        rec.iterations = rr.nsol;
        rec.termination = to_string(rr.termination);
        rec.final_ratio_gs = rr.final_ratio_gs;
        rec.alpha = rr.alpha;
        rec.nnz_factor = rr.nnz_factor;
        out.nout = rr.nout;
        out.nsol = rr.nsol;
        if (!rr.outer.empty()) rec.rnorm_true = rr.outer.back().rnorm;
        for (std::size_t k = 0; k < rr.outer.size(); ++k) {
            IterRow row;
            row.iter = static_cast<index_t>(k + 1);
            row.phibar = rr.outer[k].rnorm;
            row.est_normt_r = std::numeric_limits<double>::quiet_NaN();
            row.ratio_gs = rr.outer[k].ratio_gs;
            out.history.push_back(row);
        }
    } catch (const ApplyBreakdown&) {
        rec.termination = to_string(Termination::apply_breakdown);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
}

}  // namespace

RunOutcome execute_run(const RunConfig& cfg) {
    const RunConfig r = resolved(cfg);
    return r.refine ? execute_refinement(r) : execute_solve(r);
}

std::vector<RunOutcome> execute_plan(const SweepPlan& plan, index_t threads) {
    std::vector<RunOutcome> results(plan.runs.size());
    if (plan.runs.empty()) return results;
    const index_t nthreads = std::max<index_t>(
        1, std::min<index_t>(threads,
                             static_cast<index_t>(plan.runs.size())));
    if (nthreads == 1) {
        for (std::size_t k = 0; k < plan.runs.size(); ++k)
            results[k] = execute_run(plan.runs[k]);
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= plan.runs.size()) return;
            try {
                results[k] = execute_run(plan.runs[k]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (index_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

index_t thread_cap_from_env() {
    const char* env = std::getenv("ICLS_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (end == env || v < 1) return 1;
    return static_cast<index_t>(v);
}

namespace {

std::string identifier(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

std::string short_num(double v) {
    if (std::isnan(v)) return "-";
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
}

void print_table(const std::vector<RunConfig>& cfgs,
                 const std::vector<RunOutcome>& outs, bool compare) {
    std::ostream& os = std::cout;
    if (compare)
        os << std::left << std::setw(6) << "stop";
    else
        os << std::left << std::setw(16) << "identifier" << std::setw(10)
           << "precond" << std::setw(7) << "param";
    os << std::setw(6) << "fact" << std::setw(6) << "apply" << std::setw(8)
       << "matvec" << std::setw(10) << "delta" << std::setw(7) << "iters"
       << std::setw(6) << "nout" << std::setw(19) << "termination"
       << std::setw(11) << "ratio" << std::setw(9) << "nz(L)" << std::setw(11)
       << "alpha" << std::setw(9) << "seconds" << '\n';
    for (std::size_t k = 0; k < outs.size(); ++k) {
        const RunConfig cfg = resolved(cfgs[k]);
        const RunRecord& r = outs[k].record;
        if (compare) {
            os << std::left << std::setw(6) << r.stop;
        } else {
            std::string param;
            if (r.precond == "ic-level")
                param = std::to_string(r.level);
            else if (r.precond == "ic-mem")
                param = std::to_string(r.lsize);
            os << std::left << std::setw(16) << identifier(r.problem)
               << std::setw(10) << r.precond << std::setw(7) << param;
        }
        // Report the ratio of the active criterion (refinement reports the
        // explicit outer ratio).
        double ratio = r.final_ratio_pt;
        if (cfg.refine || r.stop == "gs") ratio = r.final_ratio_gs;
        else if (r.stop == "ps") ratio = r.final_ratio_ps;
        os << std::setw(6) << r.fact_format << std::setw(6) << r.apply_format
           << std::setw(8) << r.matvec_format << std::setw(10)
           << short_num(r.delta) << std::setw(7) << r.iterations
           << std::setw(6)
           << (cfg.refine ? std::to_string(outs[k].nout) : std::string("-"))
           << std::setw(19) << r.termination << std::setw(11)
           << short_num(ratio) << std::setw(9) << r.nnz_factor
           << std::setw(11) << short_num(r.alpha) << std::setw(9)
           << short_num(r.wall_seconds) << '\n';
    }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{
        "Sparse least-squares experiments: low-precision incomplete-Cholesky "
        "preconditioned LSQR, mixed-precision iterative refinement, and "
        "parameter sweeps"};
    app.require_subcommand(1);

    RunConfig base;
    std::string out_dir;
    std::string out_format = "csv";
    index_t sweep_from = 0, sweep_to = 0, sweep_step = 1;
    bool rsize_given = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--matrix", base.matrix_path,
                        "Matrix Market problem file")
            ->required();
        sub->add_option("--rhs-seed", base.rhs_seed,
                        "seed for the generated right-hand side");
        sub->add_option("--precond", base.precond,
                        "preconditioner: none, ic-level, ic-mem")
            ->check(CLI::IsMember({"none", "ic-level", "ic-mem"}));
        sub->add_option("--level", base.level, "fill level for ic-level");
        sub->add_option("--lsize", base.lsize,
                        "kept entries per factor column (ic-mem)");
        sub->add_option("--rsize", base.rsize,
                        "temporary entries per column (default: lsize)")
            ->each([&](const std::string&) { rsize_given = true; });
        sub->add_option("--fact", base.fact, "factorization format")
            ->check(CLI::IsMember({"fp16", "fp32", "fp64"}));
        sub->add_option("--apply", base.apply,
                        "preconditioner application format (default: --fact)")
            ->check(CLI::IsMember({"fp16", "fp32", "fp64"}));
        sub->add_option("--matvec", base.matvec, "matrix product format")
            ->check(CLI::IsMember({"fp16", "fp32", "fp64"}));
        sub->add_option("--stop", base.stop, "stopping criterion")
            ->check(CLI::IsMember({"gs", "ps", "pt"}));
        sub->add_option("--delta", base.delta, "stopping tolerance");
        sub->add_option("--delta2", base.delta2,
                        "outer acceptance tolerance (refine)");
        sub->add_option("--eta", base.eta, "outer stagnation threshold");
        sub->add_option("--maxit", base.maxit, "iteration cap per solve");
        sub->add_option("--reorth", base.reorth,
                        "none, full, one-sided, or partial:K");
        sub->add_option("--itmax-outer", base.itmax_outer,
                        "outer pass cap (refine)");
        sub->add_option("--out", out_dir, "output directory for records");
        sub->add_option("--format", out_format, "output format")
            ->check(CLI::IsMember({"csv", "json"}));
    };

    CLI::App* solve = app.add_subcommand("solve", "one preconditioned solve");
    add_common(solve);
    CLI::App* refine_cmd =
        app.add_subcommand("refine", "one mixed-precision refinement run");
    add_common(refine_cmd);
    CLI::App* sweep_lsize = app.add_subcommand(
        "sweep-lsize", "solves over a range of memory limits");
    add_common(sweep_lsize);
    sweep_lsize->add_option("--from", sweep_from, "first lsize")
        ->default_val(5);
    sweep_lsize->add_option("--to", sweep_to, "last lsize")->default_val(60);
    sweep_lsize->add_option("--step", sweep_step, "lsize increment")
        ->default_val(5);
    CLI::App* sweep_level = app.add_subcommand(
        "sweep-level", "solves over a range of fill levels");
    add_common(sweep_level);
    sweep_level->add_option("--from", sweep_from, "first level")
        ->default_val(0);
    sweep_level->add_option("--to", sweep_to, "last level")->default_val(3);
    sweep_level->add_option("--step", sweep_step, "level increment")
        ->default_val(1);
    CLI::App* compare = app.add_subcommand(
        "compare-stop", "one solve per stopping criterion");
    add_common(compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        SweepPlan plan;
        bool compare_mode = false;
        if (solve->parsed()) {
            plan.runs.push_back(base);
        } else if (refine_cmd->parsed()) {
            RunConfig cfg = base;
            cfg.refine = true;
            plan.runs.push_back(cfg);
        } else if (sweep_lsize->parsed()) {
            if (sweep_step < 1) throw Error("--step must be >= 1");
            for (index_t v = sweep_from; v <= sweep_to; v += sweep_step) {
                RunConfig cfg = base;
                cfg.precond = "ic-mem";
                cfg.lsize = v;
                if (!rsize_given) cfg.rsize = -1;  // track lsize
                plan.runs.push_back(cfg);
            }
        } else if (sweep_level->parsed()) {
            if (sweep_step < 1) throw Error("--step must be >= 1");
            for (index_t v = sweep_from; v <= sweep_to; v += sweep_step) {
                RunConfig cfg = base;
                cfg.precond = "ic-level";
                cfg.level = v;
                plan.runs.push_back(cfg);
            }
        } else if (compare->parsed()) {
            compare_mode = true;
            for (const char* s : {"gs", "ps", "pt"}) {
                RunConfig cfg = base;
                cfg.stop = s;
                cfg.record_gs = true;
                plan.runs.push_back(cfg);
            }
        }

        const std::vector<RunOutcome> outcomes =
            execute_plan(plan, thread_cap_from_env());

        print_table(plan.runs, outcomes, compare_mode);

        if (!out_dir.empty()) {
            std::vector<RunRecord> records;
            std::vector<std::vector<IterRow>> histories;
            records.reserve(outcomes.size());
            histories.reserve(outcomes.size());
            for (const RunOutcome& o : outcomes) {
                records.push_back(o.record);
                histories.push_back(o.history);
            }
            write_history(records, histories, out_dir,
                          out_format == "json" ? OutputFormat::json
                                               : OutputFormat::csv);
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace icls
