#include "icls/fp.hpp"

#include <cassert>
#include <cmath>
#include <string>

#include "icls/errors.hpp"

namespace icls {

namespace {

// Builds the derived constants of a binary format with t significand bits
// (including the implicit bit) and e exponent bits.
constexpr FpFormat make_format(int t, int e, const char* name) {
    const int emax = (1 << (e - 1)) - 1;
    // Largest finite value: (2 - 2^(1-t)) * 2^emax.
    double x_max = 2.0;
    {
        double ulp = 1.0;
        for (int k = 0; k < t - 1; ++k) ulp *= 0.5;  // 2^(1-t)
        x_max -= ulp;
        for (int k = 0; k < emax; ++k) x_max *= 2.0;
    }
    double x_min_normal = 1.0;
    for (int k = 0; k < emax - 1; ++k) x_min_normal *= 0.5;  // 2^(1-emax)
    double x_min_subnormal = x_min_normal;
    for (int k = 0; k < t - 1; ++k) x_min_subnormal *= 0.5;
    double u = 1.0;
    for (int k = 0; k < t; ++k) u *= 0.5;  // 2^-t
    return FpFormat{t, e, u, x_min_subnormal, x_min_normal, x_max, name};
}

constexpr FpFormat kFp16 = make_format(11, 5, "fp16");
constexpr FpFormat kFp32 = make_format(24, 8, "fp32");
constexpr FpFormat kFp64 = make_format(53, 11, "fp64");

}  // namespace

const FpFormat& fp16() { return kFp16; }
const FpFormat& fp32() { return kFp32; }
const FpFormat& fp64() { return kFp64; }

const FpFormat& format_by_name(std::string_view name) {
    if (name == "fp16") return kFp16;
    if (name == "fp32") return kFp32;
    if (name == "fp64") return kFp64;
    throw Error("unknown floating-point format name: " + std::string(name));
}

double round_to(const FpFormat& format, double x, RoundFlags& flags) {
    assert(!std::isnan(x));
    if (format.is_double() || x == 0.0 || std::isinf(x)) return x;

    // Quantum of the target grid around |x|: 2^(exp-t) in the normal range,
    // the fixed subnormal spacing below it. frexp gives |x| = m * 2^exp with
    // m in [0.5, 1), so the normal quantum exponent is exp - t.
    int exp = 0;
    std::frexp(x, &exp);
    const int emin = 2 - (1 << (format.exponent_bits - 1));  // 1 - emax
    int shift = exp - format.significand_bits;
    const int sub_shift = emin - (format.significand_bits - 1);
    if (shift < sub_shift) shift = sub_shift;

    // nearbyint under the default FE_TONEAREST mode is round-half-to-even,
    // and the ldexp scalings are exact, so this is a single correct rounding.
    double y = std::ldexp(std::nearbyint(std::ldexp(x, -shift)), shift);

    if (y == 0.0) {
        flags.underflow_to_zero = true;
        return std::copysign(0.0, x);
    }
    if (std::fabs(y) > format.x_max) {
        flags.overflow = true;
        return std::copysign(HUGE_VAL, x);
    }
    if (std::fabs(y) < format.x_min_normal) flags.became_subnormal = true;
    return y;
}

double round_to(const FpFormat& format, double x) {
    RoundFlags flags;
    return round_to(format, x, flags);
}

double fma_rounded(const FpFormat& format, double acc, double a, double b,
                   RoundFlags& flags) {
    const double prod = round_to(format, a * b, flags);
    return round_to(format, acc - prod, flags);
}

double fma_rounded(const FpFormat& format, double acc, double a, double b) {
    RoundFlags flags;
    return fma_rounded(format, acc, a, b, flags);
}

std::pair<std::vector<double>, ConversionAudit> squeeze_values(
    const FpFormat& format, std::span<const double> values) {
    std::vector<double> out;
    out.reserve(values.size());
    ConversionAudit audit;
    audit.total = static_cast<std::int64_t>(values.size());
    for (double v : values) {
        RoundFlags flags;
        const double r = round_to(format, v, flags);
        if (flags.underflow_to_zero) ++audit.underflowed_to_zero;
        if (flags.became_subnormal) ++audit.became_subnormal;
        if (flags.overflow) ++audit.overflowed;
        out.push_back(r);
    }
    return {std::move(out), audit};
}

}  // namespace icls
