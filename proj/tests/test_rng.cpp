#include "ishm/error.hpp"
#include "ishm/rng.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace ishm;

TEST_CASE("philox4x32-10 known answers") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("golden first draw for seed 42") {
    SeededRng r(42, 0);
    CHECK(r.next_unit() == 0x1.dfd524ee73abcp-2);
}

TEST_CASE("uniform draws") {
    SeededRng r(1);
    CHECK(r.next_uniform(3.0, 3.0) == 3.0);
    CHECK_THROWS_AS(r.next_uniform(2.0, 1.0), InvalidDistribution);
    CHECK_THROWS_AS(r.next_uniform(0.0, INFINITY), InvalidDistribution);

    double sum = 0.0;
    bool in_range = true;
    for (int i = 0; i < 1'000'000; ++i) {
        const double x = r.next_uniform(0.0, 1.0);
        in_range = in_range && x >= 0.0 && x < 1.0;
        sum += x;
    }
    CHECK(in_range);
    CHECK(std::abs(sum / 1e6 - 0.5) < 0.002);

    SeededRng s(2);
    for (int i = 0; i < 10000; ++i) {
        const double x = s.next_uniform(-3.5, 7.25);
        REQUIRE(x >= -3.5);
        REQUIRE(x < 7.25);
    }
}

TEST_CASE("uniform draws pass a Kolmogorov-Smirnov test") {
    SeededRng r(7);
    const int n = 100'000;
    std::vector<double> xs(n);
    for (double& x : xs) x = r.next_unit();
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i)
        d = std::max({d, (i + 1.0) / n - xs[i], xs[i] - static_cast<double>(i) / n});
    // Asymptotic 1% critical value.
    CHECK(d < 1.6276 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("gaussian draws") {
    SeededRng r(3);
    CHECK(r.next_gaussian(5.0, 0.0) == 5.0);
    CHECK_THROWS_AS(r.next_gaussian(0.0, -1.0), InvalidDistribution);

    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < 1'000'000; ++i) {
        const double z = r.next_gaussian(0.0, 1.0);
        s1 += z;
        s2 += z * z;
    }
    const double mean = s1 / 1e6;
    CHECK(std::abs(std::sqrt(s2 / 1e6 - mean * mean) - 1.0) < 0.005);

    double m = 0.0;
    for (int i = 0; i < 1'000'000; ++i) m += r.next_gaussian(2.0, 0.25);
    CHECK(std::abs(m / 1e6 - 2.0) < 0.002);
}

TEST_CASE("gaussian draws always consume two words") {
    SeededRng r(11);
    r.next_gaussian(0.0, 1.0);
    CHECK(r.position() == 2);
    r.next_gaussian(1.0, 0.0);
    CHECK(r.position() == 4);
}

TEST_CASE("signed uniform draws") {
    SeededRng r(4);
    CHECK(r.next_signed_uniform(0.0, 0.0) == 0.0);
    int positive = 0;
    for (int i = 0; i < 100'000; ++i) {
        const double x = r.next_signed_uniform(2.0, 4.0);
        REQUIRE(std::abs(x) >= 2.0);
        REQUIRE(std::abs(x) <= 4.0);
        positive += x > 0.0;
    }
    CHECK(std::abs(positive / 1e5 - 0.5) < 0.01);
}

TEST_CASE("forked streams") {
    const SeededRng r(99);
    SeededRng a = r.fork(1), b = r.fork(2);
    CHECK(a.next_u64() != b.next_u64());

    SeededRng c = r.fork(1), d = r.fork(1);
    for (int i = 0; i < 100; ++i) REQUIRE(c.next_u64() == d.next_u64());
    CHECK(r.position() == 0);

    SeededRng x = r.fork(10), y = r.fork(11);
    const int n = 100'000;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double u = x.next_unit(), v = y.next_unit();
        sx += u, sy += v, sxx += u * u, syy += v * v, sxy += u * v;
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double rho = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
    CHECK(std::abs(rho) < 0.01);
}

TEST_CASE("streams are reproducible and position addressable") {
    SeededRng a(123, 5), b(123, 5);
    std::vector<std::uint64_t> first;
    for (int i = 0; i < 17; ++i) first.push_back(a.next_u64());
    for (int i = 0; i < 17; ++i) CHECK(b.next_u64() == first[static_cast<std::size_t>(i)]);
}

TEST_CASE("next_below") {
    SeededRng r(8);
    CHECK_THROWS_AS(r.next_below(0), InvalidDistribution);
    std::vector<int> counts(6);
    for (int i = 0; i < 60000; ++i) ++counts[r.next_below(6)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("distribution specs") {
    SeededRng r(5);
    CHECK(DistSpec::uniform(1, 2).contains(1.5));
    CHECK_FALSE(DistSpec::signed_uniform(2, 4).contains(0.0));
    CHECK(DistSpec::signed_uniform(2, 4).contains(-3.0));
    CHECK_THROWS_AS(DistSpec::uniform(2, 1).validate(), InvalidDistribution);
    CHECK_THROWS_AS(DistSpec::gaussian(0, -1).validate(), InvalidDistribution);
    for (int i = 0; i < 1000; ++i) REQUIRE(DistSpec::uniform(0.5, 2.0).contains(DistSpec::uniform(0.5, 2.0).sample(r)));
}

TEST_CASE("seed parsing") {
    CHECK(parse_seed("42") == 42u);
    CHECK(parse_seed("0x2A") == 42u);
    CHECK(parse_seed("18446744073709551615") == ~std::uint64_t{0});
    CHECK_THROWS_AS(parse_seed(""), InvalidConfig);
    CHECK_THROWS_AS(parse_seed("12x"), InvalidConfig);
    CHECK_THROWS_AS(parse_seed("-1"), InvalidConfig);
}
