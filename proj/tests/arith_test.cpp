#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "d4census/arith.hpp"

using namespace d4c;

namespace {

// Independent oracle: factor by repeated division over all candidates.
std::vector<std::pair<uint64_t, int>> trial_factor(uint64_t n) {
    std::vector<std::pair<uint64_t, int>> out;
    for (uint64_t d = 2; d * d <= n; ++d) {
        int e = 0;
        while (n % d == 0) n /= d, ++e;
        if (e) out.push_back({d, e});
    }
    if (n > 1) out.push_back({n, 1});
    return out;
}

bool brute_is_fundamental(int64_t D) {
    if (D == 1 || D == 0) return false;
    auto sqfree = [](int64_t m) {
        uint64_t a = (uint64_t)(m > 0 ? m : -m);
        for (uint64_t d = 2; d * d <= a; ++d)
            if (a % (d * d) == 0) return false;
        return true;
    };
    int64_t r = ((D % 4) + 4) % 4;
    if (r == 1) return sqfree(D);
    if (r == 0) {
        int64_t m = D / 4;
        int64_t mr = ((m % 4) + 4) % 4;
        return (mr == 2 || mr == 3) && sqfree(m);
    }
    return false;
}

}  // namespace

TEST_CASE("factorize basics") {
    CHECK(factorize(1).factors.empty());
    auto f12 = factorize(12).factors;
    REQUIRE(f12.size() == 2);
    CHECK(f12[0] == std::pair<uint64_t, int>{2, 2});
    CHECK(f12[1] == std::pair<uint64_t, int>{3, 1});
    // derived via the repeated-division oracle
    auto f2048 = factorize(2048).factors;
    REQUIRE(f2048.size() == 1);
    CHECK(f2048[0] == std::pair<uint64_t, int>{2, 11});
    CHECK(trial_factor(2048) == f2048);

    std::mt19937_64 rng(12345);
    for (int i = 0; i < 200; ++i) {
        uint64_t n = rng() % 1000000 + 1;
        CHECK(factorize(n).factors == trial_factor(n));
    }
    // a few larger semiprimes through the rho path
    CHECK(factorize(1000003ull * 1000033ull).factors ==
          std::vector<std::pair<uint64_t, int>>{{1000003, 1}, {1000033, 1}});
}

TEST_CASE("mobius") {
    CHECK(mobius(1) == 1);
    CHECK(mobius(12) == 0);
    CHECK(mobius(30) == -1);
    for (uint64_t n = 1; n <= 500; ++n) {
        auto f = factorize(n);
        bool sf = f.is_squarefree();
        CHECK((mobius(n) != 0) == sf);
    }
}

TEST_CASE("kronecker") {
    CHECK(kronecker(5, 4) == 1);
    CHECK(kronecker(-4, 2) == 0);
    CHECK(kronecker(8, 3) == -1);  // 2 is a non-residue mod 3

    // complete multiplicativity in n
    std::mt19937_64 rng(99);
    for (int i = 0; i < 500; ++i) {
        int64_t D = (int64_t)(rng() % 200) - 100;
        if (D == 0) continue;
        uint64_t m = rng() % 50 + 1, n = rng() % 50 + 1;
        CHECK(kronecker(D, m * n) == kronecker(D, m) * kronecker(D, n));
    }
    // against Euler criterion at odd primes
    for (uint64_t p : {3ull, 5ull, 7ull, 11ull, 13ull, 101ull}) {
        for (int64_t D = -20; D <= 20; ++D) {
            if (D == 0) continue;
            int64_t r = ((D % (int64_t)p) + (int64_t)p) % (int64_t)p;
            int expect;
            if (r == 0) {
                expect = 0;
            } else {
                expect = -1;
                for (uint64_t x = 1; x < p; ++x)
                    if ((x * x) % p == (uint64_t)r) { expect = 1; break; }
            }
            CHECK(kronecker(D, p) == expect);
        }
    }
}

TEST_CASE("fundamental discriminants") {
    CHECK(is_fundamental_discriminant(-3));
    CHECK(!is_fundamental_discriminant(9));
    CHECK(is_fundamental_discriminant(12));
    for (int64_t D = -300; D <= 300; ++D) {
        if (D == 0) continue;
        CHECK(is_fundamental_discriminant(D) == brute_is_fundamental(D));
    }

    CHECK(fundamental_discriminants(0, 13, +1) == std::vector<int64_t>{5, 8, 12, 13});
    CHECK(fundamental_discriminants(0, 13, +1, {5}) == std::vector<int64_t>{5, 13});
    CHECK(fundamental_discriminants(0, 10, +1, {}, 3) == std::vector<int64_t>{5, 8});

    // negative side, brute force comparison
    auto neg = fundamental_discriminants(0, 50, -1);
    std::vector<int64_t> expect;
    for (int64_t a = 1; a <= 50; ++a)
        if (brute_is_fundamental(-a)) expect.push_back(-a);
    CHECK(neg == expect);
}

TEST_CASE("euler products") {
    // local factor of the leading-constant product at p = 3 is 68/81
    CHECK(conductor_density_factor(3) == doctest::Approx(68.0 / 81.0).epsilon(1e-15));

    EulerProductSpec zeta2;
    zeta2.local_factor = [](uint64_t p) { return 1.0 - 1.0 / ((double)p * p); };
    zeta2.p_max = 1000000;
    auto r = euler_product(zeta2);
    double target = 6.0 / (M_PI * M_PI);
    CHECK(std::abs(r.value - target) <= r.tail_bound);

    // zeta(2)*A = zeta(2)^{-1} * prod(1 + 1/(p+1)^2)
    EulerProductSpec a_spec;
    a_spec.local_factor = [](uint64_t p) { return conductor_density_factor(p); };
    a_spec.p_max = 1000000;
    a_spec.log_majorant_scale = 1.5;
    auto a = euler_product(a_spec);
    EulerProductSpec b_spec;
    b_spec.local_factor = [](uint64_t p) { double q = (double)p + 1; return 1.0 + 1.0 / (q * q); };
    b_spec.p_max = 1000000;
    auto b = euler_product(b_spec);
    double z2 = M_PI * M_PI / 6.0;
    CHECK(std::abs(z2 * a.value - b.value / z2) <= z2 * a.tail_bound + b.tail_bound / z2 + 1e-12);
}

TEST_CASE("prime log sum") {
    auto v3 = prime_log_sum(3);
    CHECK(v3.value == doctest::Approx(std::log(2.0) / 10 + std::log(3.0) / 17).epsilon(1e-15));
    auto small = prime_log_sum(1000);
    auto big = prime_log_sum(1000000);
    CHECK(std::abs(big.value - small.value) <= small.tail_bound);
}

TEST_CASE("fundamental discriminant density") {
    // counts within 0.5% of 6/pi^2 * X at X = 10^6
    int64_t X = 1000000;
    auto pos = fundamental_discriminants(0, X, +1);
    auto neg = fundamental_discriminants(0, X, -1);
    double count = (double)(pos.size() + neg.size());
    double predict = 6.0 / (M_PI * M_PI) * (double)X;
    CHECK(std::abs(count / predict - 1.0) < 0.005);
}

TEST_CASE("square decompose") {
    auto d = square_decompose(-300);
    CHECK(d.sign == -1);
    CHECK(d.core == 3);
    CHECK(d.root == 10);
    CHECK(fundamental_discriminant_of(-300) == -3);
    CHECK(fundamental_discriminant_of(8) == 8);
    CHECK(fundamental_discriminant_of(2) == 8);
    CHECK(fundamental_discriminant_of(5) == 5);
    CHECK(fundamental_discriminant_of(6) == 24);
}

TEST_CASE("isqrt") {
    for (uint64_t n = 0; n < 5000; ++n) {
        uint64_t r = isqrt64(n);
        CHECK(r * r <= n);
        CHECK((r + 1) * (r + 1) > n);
    }
}
