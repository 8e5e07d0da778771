#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace ishm {

// Philox4x32-10 block function (Salmon et al., Random123). Exposed for the
// known-answer tests.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;
PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept;

// Counter-based generator. The 64-bit seed is the Philox key, the stream id
// occupies the upper half of the counter and the draw index the lower half,
// so any (seed, stream, position) is addressable without shared state.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0, std::uint64_t stream_id = 0) noexcept
        : seed_(seed), stream_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t position() const noexcept { return position_; }

    // Independent child stream; the parent is left untouched.
    SeededRng fork(std::uint64_t stream_id) const noexcept;

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 bits of resolution.
    double next_unit() noexcept;
    // Uniform integer on [0, bound); bound must be positive.
    std::uint64_t next_below(std::uint64_t bound);

    // [lo, hi); lo == hi returns lo.
    double next_uniform(double lo, double hi);
    // Box-Muller on two uniforms, always consuming exactly two draws.
    double next_gaussian(double mu, double sigma);
    // s * U[lo, hi] with s = +/-1 equiprobable. One draw for the sign, one for
    // the magnitude.
    double next_signed_uniform(double lo, double hi);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t position_ = 0;  // index of the next 64-bit word
    std::uint64_t cached_block_ = ~std::uint64_t{0};
    std::array<std::uint32_t, 4> block_{};
};

enum class DistKind { Uniform, Gaussian, SignedUniform };

// A sampling distribution as written in parameter tables: U[a,b],
// N(mu, sigma^2) (p2 is the standard deviation), or +/-U[a,b].
struct DistSpec {
    DistKind kind = DistKind::Uniform;
    double p1 = 0.0;
    double p2 = 0.0;

    static DistSpec uniform(double lo, double hi) { return {DistKind::Uniform, lo, hi}; }
    static DistSpec gaussian(double mu, double sigma) { return {DistKind::Gaussian, mu, sigma}; }
    static DistSpec signed_uniform(double lo, double hi) { return {DistKind::SignedUniform, lo, hi}; }

    void validate() const;
    double sample(SeededRng& rng) const;
    bool contains(double x) const;
};

// Parses decimal or 0x-prefixed hexadecimal 64-bit seeds / stream ids.
std::uint64_t parse_seed(std::string_view text);

// Mixes a 64-bit word (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace ishm
