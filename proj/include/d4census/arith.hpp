#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace d4c {

using std::int64_t;
using std::uint64_t;

// Exact factorization of a positive 63-bit integer.
struct Factorization {
    uint64_t value = 1;
    std::vector<std::pair<uint64_t, int>> factors;  // (prime, exponent), primes increasing

    int exponent_of(uint64_t p) const {
        for (auto& [q, e] : factors)
            if (q == p) return e;
        return 0;
    }
    bool is_squarefree() const {
        for (auto& [p, e] : factors)
            if (e > 1) return false;
        return true;
    }
};

struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic factorization, inputs capped at 63 bits.
Factorization factorize(uint64_t n);

bool is_prime(uint64_t n);

int mobius(uint64_t n);

// General Kronecker symbol (D | n), n >= 1, any integer D.
int kronecker(int64_t D, uint64_t n);
// Full Kronecker symbol (a | b) for arbitrary integers (b may be negative or zero).
int kronecker_full(int64_t a, int64_t b);

bool is_fundamental_discriminant(int64_t D);

// Squarefree core and sign: n = sign * core * square^2 with core >= 1 squarefree.
struct SquareDecomposition {
    int sign = 1;
    uint64_t core = 1;    // squarefree part of |n|
    uint64_t root = 1;    // |n| = core * root^2
};
SquareDecomposition square_decompose(int64_t n);

// Fundamental discriminant of Q(sqrt(n)), n not a square (sign carried through).
int64_t fundamental_discriminant_of(int64_t n);

// All fundamental discriminants D with lo < |D| <= hi of the requested sign,
// ascending |D|.  Optional filter on D mod 8 (residues taken in 0..7) and a
// coprimality constraint on |D|.
std::vector<int64_t> fundamental_discriminants(int64_t lo, int64_t hi, int sign,
                                               const std::vector<int>& mod8_filter = {},
                                               uint64_t coprime_to = 0);

// Primes p <= n, ascending.
const std::vector<uint64_t>& primes_up_to(uint64_t n);

// Truncated Euler product with a certified tail bound.
//
// local_factor(p) must satisfy |log local_factor(p)| <= log_majorant_scale / p^2
// for all p > p_max; the tail bound is an explicit prime-sum estimate built on
// pi(x) < 1.2551 x/log x and pi(x) > x/log x (x >= 17).
struct EulerProductSpec {
    std::function<double(uint64_t)> local_factor;
    uint64_t p_max = 1000000;
    double log_majorant_scale = 1.0;
};

struct IntervalValue {
    double value = 0.0;
    double tail_bound = 0.0;
};

IntervalValue euler_product(const EulerProductSpec& spec);

// sum_{p > P} 1/p^2, certified upper bound.
double prime_square_tail_bound(uint64_t P);

// Truncated sum_p log p / (p^2 + 2p + 2) with certified tail bound.
IntervalValue prime_log_sum(uint64_t p_max);

// The Euler factor 1 - 1/p^2 - 2/p^3 + 2/p^4 appearing in the leading constant.
double conductor_density_factor(uint64_t p);

// Integer square root, exact: largest r with r*r <= n.
uint64_t isqrt64(uint64_t n);

}  // namespace d4c
