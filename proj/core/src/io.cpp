#include "icls/io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "icls/errors.hpp"

namespace icls {

namespace {

using nlohmann::json;

std::string lower(std::string s) {
    for (char& c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

long long parse_int(const std::string& tok, index_t line) {
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
        throw ParseError(line, "expected an integer, got '" + tok + "'");
    return v;
}

double parse_real(const std::string& tok, index_t line) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw ParseError(line, "expected a number, got '" + tok + "'");
    return v;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

SparseMatrix load_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");

    index_t lineno = 0;
    std::string line;
    auto next_line = [&](bool required) -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            return true;
        }
        if (required) throw ParseError(lineno, "unexpected end of file");
        return false;
    };

    next_line(true);
    std::vector<std::string> header = split_ws(line);
    if (header.size() < 5 || lower(header[0]) != "%%matrixmarket" ||
        lower(header[1]) != "matrix")
        throw ParseError(lineno, "not a Matrix Market matrix header");
    const std::string fmt = lower(header[2]);
    const std::string field = lower(header[3]);
    const std::string sym = lower(header[4]);
    if (fmt != "coordinate" && fmt != "array")
        throw ParseError(lineno, "unsupported format '" + fmt + "'");
    if (field != "real" && field != "integer")
        throw ParseError(lineno, "unsupported field '" + field + "'");
    if (sym != "general" && sym != "symmetric")
        throw ParseError(lineno, "unsupported symmetry '" + sym + "'");
    const bool symmetric = sym == "symmetric";

    // Size line: first non-comment, non-blank line.
    std::vector<std::string> size_toks;
    for (;;) {
        next_line(true);
        if (!line.empty() && line[0] == '%') continue;
        size_toks = split_ws(line);
        if (size_toks.empty()) continue;
        break;
    }

    const index_t expected_size_fields = fmt == "coordinate" ? 3 : 2;
    if (static_cast<index_t>(size_toks.size()) != expected_size_fields)
        throw ParseError(lineno, "malformed size line");
    const long long m = parse_int(size_toks[0], lineno);
    const long long n = parse_int(size_toks[1], lineno);
    if (m <= 0 || n <= 0)
        throw DimensionError("nonpositive dimensions in '" + path + "'");

    std::vector<Triplet> trips;
    auto push_entry = [&](long long i, long long j, double v) {
        if (i < 1 || i > m || j < 1 || j > n)
            throw DimensionError("entry index out of range at line " +
                                 std::to_string(lineno));
        trips.push_back({static_cast<index_t>(i - 1),
                         static_cast<index_t>(j - 1), v});
        if (symmetric && i != j)
            trips.push_back({static_cast<index_t>(j - 1),
                             static_cast<index_t>(i - 1), v});
    };

    if (fmt == "coordinate") {
        const long long nz = parse_int(size_toks[2], lineno);
        if (nz < 0) throw DimensionError("negative entry count");
        trips.reserve(static_cast<std::size_t>(symmetric ? 2 * nz : nz));
        long long seen = 0;
        while (seen < nz) {
            next_line(true);
            if (!line.empty() && line[0] == '%') continue;
            const std::vector<std::string> toks = split_ws(line);
            if (toks.empty()) continue;
            if (toks.size() != 3)
                throw ParseError(lineno, "expected 'row col value'");
            const long long i = parse_int(toks[0], lineno);
            const long long j = parse_int(toks[1], lineno);
            const double v = parse_real(toks[2], lineno);
            push_entry(i, j, v);
            ++seen;
        }
    } else {
        if (symmetric && m != n)
            throw DimensionError("symmetric array matrix must be square");
        // Column-major dense values; symmetric stores the lower triangle.
        long long i = 1, j = 1;
        auto advance = [&]() {
            ++i;
            if (i > m) {
                ++j;
                i = symmetric ? j : 1;
            }
        };
        if (symmetric) i = j;
        long long remaining = symmetric ? n * (n + 1) / 2 : m * n;
        while (remaining > 0) {
            next_line(true);
            if (!line.empty() && line[0] == '%') continue;
            const std::vector<std::string> toks = split_ws(line);
            for (const std::string& tok : toks) {
                if (remaining == 0)
                    throw ParseError(lineno, "extra values after matrix data");
                const double v = parse_real(tok, lineno);
                push_entry(i, j, v);
                advance();
                --remaining;
            }
        }
    }

    return SparseMatrix::from_triplets(static_cast<index_t>(m),
                                       static_cast<index_t>(n),
                                       std::move(trips));
}

void write_matrix_market(const std::string& path, const SparseMatrix& A) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << A.m << ' ' << A.n << ' ' << A.nnz() << '\n';
    for (index_t j = 0; j < A.n; ++j)
        for (index_t p = A.col_ptr[j]; p < A.col_ptr[j + 1]; ++p)
            out << (A.row_idx[static_cast<std::size_t>(p)] + 1) << ' '
                << (j + 1) << ' '
                << format_double(A.values[static_cast<std::size_t>(p)])
                << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

Problem load_problem(const ProblemSpec& spec) {
    Problem prob;
    prob.path = spec.path;
    prob.A = load_matrix_market(spec.path);
    if (spec.transpose_if_underdetermined && prob.A.m < prob.A.n)
        prob.A = transpose(prob.A);
    prob.b = random_rhs(prob.A.m, spec.rhs_seed);
    return prob;
}

std::vector<double> random_rhs(index_t m, std::uint64_t seed) {
    std::vector<double> b(static_cast<std::size_t>(m));
    std::uint64_t state = seed;
    for (double& v : b) {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        const double u = static_cast<double>(z >> 11) * 0x1.0p-53;  // [0,1)
        v = 2.0 * u - 1.0;
    }
    return b;
}

namespace {

const char* const kRecordFields[] = {
    "problem",       "precond",        "level",
    "lsize",         "rsize",          "fact_format",
    "apply_format",  "matvec_format",  "stop",
    "delta",         "reorth",         "rhs_seed",
    "iterations",    "termination",    "final_ratio_pt",
    "final_ratio_gs", "final_ratio_ps", "rnorm_true",
    "alpha",         "nnz_factor",     "wall_seconds",
};

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// Numeric CSV field; NaN becomes an empty field.
std::string csv_num(double v) {
    if (std::isnan(v)) return "";
    return format_double(v);
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    field += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

double field_or_nan(const std::string& s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) return std::numeric_limits<double>::quiet_NaN();
    return v;
}

json record_to_json(const RunRecord& r) {
    json j;
    j["problem"] = r.problem;
    j["precond"] = r.precond;
    j["level"] = r.level;
    j["lsize"] = r.lsize;
    j["rsize"] = r.rsize;
    j["fact_format"] = r.fact_format;
    j["apply_format"] = r.apply_format;
    j["matvec_format"] = r.matvec_format;
    j["stop"] = r.stop;
    j["delta"] = r.delta;
    j["reorth"] = r.reorth;
    j["rhs_seed"] = r.rhs_seed;
    j["iterations"] = r.iterations;
    j["termination"] = r.termination;
    j["final_ratio_pt"] = r.final_ratio_pt;
    j["final_ratio_gs"] = r.final_ratio_gs;
    j["final_ratio_ps"] = r.final_ratio_ps;
    j["rnorm_true"] = r.rnorm_true;
    j["alpha"] = r.alpha;
    j["nnz_factor"] = r.nnz_factor;
    j["wall_seconds"] = r.wall_seconds;
    return j;
}

double json_num(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null())
        return std::numeric_limits<double>::quiet_NaN();
    return j[key].get<double>();
}

RunRecord record_from_json(const json& j) {
    RunRecord r;
    r.problem = j.value("problem", "");
    r.precond = j.value("precond", "");
    r.level = j.value("level", index_t{0});
    r.lsize = j.value("lsize", index_t{0});
    r.rsize = j.value("rsize", index_t{0});
    r.fact_format = j.value("fact_format", "");
    r.apply_format = j.value("apply_format", "");
    r.matvec_format = j.value("matvec_format", "");
    r.stop = j.value("stop", "");
    r.delta = json_num(j, "delta");
    r.reorth = j.value("reorth", "");
    r.rhs_seed = j.value("rhs_seed", std::uint64_t{0});
    r.iterations = j.value("iterations", index_t{0});
    r.termination = j.value("termination", "");
    r.final_ratio_pt = json_num(j, "final_ratio_pt");
    r.final_ratio_gs = json_num(j, "final_ratio_gs");
    r.final_ratio_ps = json_num(j, "final_ratio_ps");
    r.rnorm_true = json_num(j, "rnorm_true");
    r.alpha = json_num(j, "alpha");
    r.nnz_factor = j.value("nnz_factor", index_t{0});
    r.wall_seconds = json_num(j, "wall_seconds");
    return r;
}

void write_summary_csv(std::ostream& out,
                       const std::vector<RunRecord>& records) {
    bool first = true;
    for (const char* f : kRecordFields) {
        if (!first) out << ',';
        out << f;
        first = false;
    }
    out << '\n';
    for (const RunRecord& r : records) {
        out << csv_quote(r.problem) << ',' << csv_quote(r.precond) << ','
            << r.level << ',' << r.lsize << ',' << r.rsize << ','
            << r.fact_format << ',' << r.apply_format << ','
            << r.matvec_format << ',' << r.stop << ','
            << format_double(r.delta) << ',' << csv_quote(r.reorth) << ','
            << r.rhs_seed << ',' << r.iterations << ','
            << csv_quote(r.termination) << ',' << csv_num(r.final_ratio_pt)
            << ',' << csv_num(r.final_ratio_gs) << ','
            << csv_num(r.final_ratio_ps) << ',' << csv_num(r.rnorm_true)
            << ',' << format_double(r.alpha) << ',' << r.nnz_factor << ','
            << format_double(r.wall_seconds) << '\n';
    }
}

void write_run_csv(std::ostream& out, const std::vector<IterRow>& history,
                   double rnorm_true) {
    out << "iter,phibar,est_normt_r,ratio_pt,ratio_gs,rnorm_true\n";
    for (std::size_t k = 0; k < history.size(); ++k) {
        const IterRow& row = history[k];
        out << row.iter << ',' << format_double(row.phibar) << ','
            << format_double(row.est_normt_r) << ','
            << csv_num(row.ratio_pt) << ',' << csv_num(row.ratio_gs) << ',';
        if (k + 1 == history.size()) out << csv_num(rnorm_true);
        out << '\n';
    }
}

void write_run_json(std::ostream& out, const std::vector<IterRow>& history,
                    double rnorm_true) {
    json arr = json::array();
    for (std::size_t k = 0; k < history.size(); ++k) {
        const IterRow& row = history[k];
        json j;
        j["iter"] = row.iter;
        j["phibar"] = row.phibar;
        j["est_normt_r"] = row.est_normt_r;
        j["ratio_pt"] = row.ratio_pt;
        j["ratio_gs"] = row.ratio_gs;
        if (k + 1 == history.size()) j["rnorm_true"] = rnorm_true;
        arr.push_back(std::move(j));
    }
    out << arr.dump(2) << '\n';
}

}  // namespace

void write_history(const std::vector<RunRecord>& records,
                   const std::vector<std::vector<IterRow>>& histories,
                   const std::string& dir, OutputFormat format) {
    if (!histories.empty() && histories.size() != records.size())
        throw IoError("write_history: records/histories length mismatch");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "'");

    const char* ext = format == OutputFormat::csv ? "csv" : "json";
    const std::filesystem::path base(dir);

    {
        const std::string path = (base / (std::string("summary.") + ext))
                                     .string();
        std::ofstream out(path);
        if (!out) throw IoError("cannot write '" + path + "'");
        if (format == OutputFormat::csv) {
            write_summary_csv(out, records);
        } else {
            json arr = json::array();
            for (const RunRecord& r : records)
                arr.push_back(record_to_json(r));
            out << arr.dump(2) << '\n';
        }
        if (!out) throw IoError("write failed for '" + path + "'");
    }

    for (std::size_t k = 0; k < histories.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "run_%03zu.%s", k + 1, ext);
        const std::string path = (base / name).string();
        std::ofstream out(path);
        if (!out) throw IoError("cannot write '" + path + "'");
        const double rt = records[k].rnorm_true;
        if (format == OutputFormat::csv)
            write_run_csv(out, histories[k], rt);
        else
            write_run_json(out, histories[k], rt);
        if (!out) throw IoError("write failed for '" + path + "'");
    }
}

std::vector<RunRecord> read_run_records(const std::string& path,
                                        OutputFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<RunRecord> out;

    if (format == OutputFormat::json) {
        json doc;
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw ParseError(0, std::string("invalid JSON: ") + e.what());
        }
        if (!doc.is_array()) throw ParseError(0, "expected a JSON array");
        for (const json& j : doc) out.push_back(record_from_json(j));
        return out;
    }

    std::string line;
    if (!std::getline(in, line)) return out;
    const std::vector<std::string> names = csv_split(line);
    index_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::vector<std::string> f = csv_split(line);
        if (f.size() != names.size())
            throw ParseError(lineno, "wrong number of CSV fields");
        RunRecord r;
        for (std::size_t k = 0; k < names.size(); ++k) {
            const std::string& key = names[k];
            const std::string& v = f[k];
            if (key == "problem") r.problem = v;
            else if (key == "precond") r.precond = v;
            else if (key == "level") r.level = static_cast<index_t>(field_or_nan(v));
            else if (key == "lsize") r.lsize = static_cast<index_t>(field_or_nan(v));
            else if (key == "rsize") r.rsize = static_cast<index_t>(field_or_nan(v));
            else if (key == "fact_format") r.fact_format = v;
            else if (key == "apply_format") r.apply_format = v;
            else if (key == "matvec_format") r.matvec_format = v;
            else if (key == "stop") r.stop = v;
            else if (key == "delta") r.delta = field_or_nan(v);
            else if (key == "reorth") r.reorth = v;
            else if (key == "rhs_seed")
                r.rhs_seed = static_cast<std::uint64_t>(
                    std::strtoull(v.c_str(), nullptr, 10));
            else if (key == "iterations")
                r.iterations = static_cast<index_t>(field_or_nan(v));
            else if (key == "termination") r.termination = v;
            else if (key == "final_ratio_pt") r.final_ratio_pt = field_or_nan(v);
            else if (key == "final_ratio_gs") r.final_ratio_gs = field_or_nan(v);
            else if (key == "final_ratio_ps") r.final_ratio_ps = field_or_nan(v);
            else if (key == "rnorm_true") r.rnorm_true = field_or_nan(v);
            else if (key == "alpha") r.alpha = field_or_nan(v);
            else if (key == "nnz_factor")
                r.nnz_factor = static_cast<index_t>(field_or_nan(v));
            else if (key == "wall_seconds") r.wall_seconds = field_or_nan(v);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace icls
