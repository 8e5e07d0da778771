#include "ishm/rng.hpp"

#include "ishm/error.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

namespace ishm {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = std::uint64_t{a} * std::uint64_t{b};
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

std::string describe(double lo, double hi) {
    return "[" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
        mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

SeededRng SeededRng::fork(std::uint64_t stream_id) const noexcept {
    return SeededRng(seed_, mix64(stream_ ^ mix64(stream_id ^ 0x5851f42d4c957f2dull)));
}

std::uint64_t SeededRng::next_u64() noexcept {
    const std::uint64_t block = position_ >> 1;
    if (block != cached_block_) {
        const PhiloxCounter ctr{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                                static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        const PhiloxKey key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
        block_ = philox4x32_10(ctr, key);
        cached_block_ = block;
    }
    const std::size_t half = (position_ & 1u) * 2;
    ++position_;
    return std::uint64_t{block_[half]} | (std::uint64_t{block_[half + 1]} << 32);
}

double SeededRng::next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::next_below(std::uint64_t bound) {
    if (bound == 0) throw InvalidDistribution("next_below: bound must be positive");
    // Lemire's multiply-shift with rejection.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        __extension__ using u128 = unsigned __int128;
        const u128 m = static_cast<u128>(next_u64()) * bound;
        if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
}

double SeededRng::next_uniform(double lo, double hi) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw InvalidDistribution("uniform: invalid interval " + describe(lo, hi));
    const double u = next_unit();
    if (lo == hi) return lo;
    const double x = lo + (hi - lo) * u;
    return x < hi ? x : std::nextafter(hi, lo);
}

double SeededRng::next_gaussian(double mu, double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma) || !std::isfinite(mu))
        throw InvalidDistribution("gaussian: sigma must be finite and >= 0, got " + std::to_string(sigma));
    const double u1 = 1.0 - next_unit();  // (0, 1]
    const double u2 = next_unit();
    if (sigma == 0.0) return mu;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mu + sigma * z;
}

double SeededRng::next_signed_uniform(double lo, double hi) {
    if (!(lo >= 0.0)) throw InvalidDistribution("signed uniform: lower bound must be >= 0");
    if (!(lo <= hi)) throw InvalidDistribution("signed uniform: invalid interval " + describe(lo, hi));
    const bool positive = next_unit() < 0.5;
    const double magnitude = next_uniform(lo, hi);
    return positive ? magnitude : -magnitude;
}

void DistSpec::validate() const {
    switch (kind) {
    case DistKind::Uniform:
        if (!(p1 <= p2)) throw InvalidDistribution("uniform: invalid interval " + describe(p1, p2));
        break;
    case DistKind::Gaussian:
        if (!(p2 >= 0.0)) throw InvalidDistribution("gaussian: sigma must be >= 0");
        break;
    case DistKind::SignedUniform:
        if (!(p1 >= 0.0) || !(p1 <= p2))
            throw InvalidDistribution("signed uniform: invalid interval " + describe(p1, p2));
        break;
    }
}

double DistSpec::sample(SeededRng& rng) const {
    switch (kind) {
    case DistKind::Uniform: return rng.next_uniform(p1, p2);
    case DistKind::Gaussian: return rng.next_gaussian(p1, p2);
    case DistKind::SignedUniform: return rng.next_signed_uniform(p1, p2);
    }
    return 0.0;
}

bool DistSpec::contains(double x) const {
    switch (kind) {
    case DistKind::Uniform: return x >= p1 && x <= p2;
    case DistKind::Gaussian: return std::isfinite(x);
    case DistKind::SignedUniform: return std::abs(x) >= p1 && std::abs(x) <= p2;
    }
    return false;
}

std::uint64_t parse_seed(std::string_view text) {
    int base = 10;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
        text.remove_prefix(2);
        base = 16;
    }
    std::uint64_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value, base);
    if (text.empty() || ec != std::errc{} || ptr != end)
        throw InvalidConfig("invalid seed '" + std::string(text) + "'");
    return value;
}

}  // namespace ishm
