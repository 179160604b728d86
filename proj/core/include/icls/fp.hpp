// Emulated reduced-precision IEEE arithmetic.
//
// Values are always stored in fp64 but constrained to the grid of a narrower
// binary format; every elementary operation that claims to run "in fp16" (or
// fp32) rounds its fp64 result back onto that grid with round-to-nearest-even.
// Subnormals are kept (full IEEE gradual underflow), and overflow saturates to
// +/-inf exactly as a hardware conversion would.

#ifndef ICLS_FP_HPP
#define ICLS_FP_HPP

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace icls {

// Descriptor of a binary floating-point format. significand_bits includes the
// implicit leading bit, so unit_roundoff = 2^-significand_bits.
struct FpFormat {
    int significand_bits;
    int exponent_bits;
    double unit_roundoff;
    double x_min_subnormal;
    double x_min_normal;
    double x_max;
    const char* name;

    bool is_double() const { return significand_bits >= 53; }
};

const FpFormat& fp16();
const FpFormat& fp32();
const FpFormat& fp64();

// Accepts "fp16", "fp32", "fp64"; throws Error otherwise.
const FpFormat& format_by_name(std::string_view name);

// Sticky per-operation flags. Overflow is set only when a finite input rounds
// to +/-inf; underflow_to_zero only when a nonzero input rounds to zero.
struct RoundFlags {
    bool overflow = false;
    bool underflow_to_zero = false;
    bool became_subnormal = false;
};

// Round-to-nearest-even representative of x in `format`, re-expressed in
// fp64. Infinities pass through unchanged; NaN is rejected by a debug
// assertion (never produced or consumed by the library).
double round_to(const FpFormat& format, double x);
double round_to(const FpFormat& format, double x, RoundFlags& flags);

// The factorization update primitive: acc - a*b with the product and the
// subtraction each rounded separately (no fused behaviour).
double fma_rounded(const FpFormat& format, double acc, double a, double b);
double fma_rounded(const FpFormat& format, double acc, double a, double b,
                   RoundFlags& flags);

// Conversion audit for squeezing a value sequence into a narrower format.
struct ConversionAudit {
    std::int64_t total = 0;
    std::int64_t underflowed_to_zero = 0;
    std::int64_t became_subnormal = 0;
    std::int64_t overflowed = 0;
};

// Rounds every value via round_to and classifies the losses.
std::pair<std::vector<double>, ConversionAudit> squeeze_values(
    const FpFormat& format, std::span<const double> values);

}  // namespace icls

#endif  // ICLS_FP_HPP
