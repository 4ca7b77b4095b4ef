#include "d4census/arith.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

namespace d4c {

namespace {

using u128 = unsigned __int128;

uint64_t mulmod(uint64_t a, uint64_t b, uint64_t m) {
    return (uint64_t)((u128)a * b % m);
}

uint64_t powmod(uint64_t a, uint64_t e, uint64_t m) {
    uint64_t r = 1;
    a %= m;
    while (e) {
        if (e & 1) r = mulmod(r, a, m);
        a = mulmod(a, a, m);
        e >>= 1;
    }
    return r;
}

bool miller_rabin(uint64_t n, uint64_t a) {
    if (a % n == 0) return true;
    uint64_t d = n - 1;
    int s = 0;
    while ((d & 1) == 0) d >>= 1, ++s;
    uint64_t x = powmod(a, d, n);
    if (x == 1 || x == n - 1) return true;
    for (int i = 1; i < s; ++i) {
        x = mulmod(x, x, n);
        if (x == n - 1) return true;
    }
    return false;
}

uint64_t pollard_rho(uint64_t n) {
    if ((n & 1) == 0) return 2;
    for (uint64_t c = 1;; ++c) {
        auto f = [&](uint64_t v) { return (uint64_t)(((u128)v * v + c) % n); };
        uint64_t x = f(2), y = f(f(2)), d = 1;
        bool met = false;
        while (d == 1 && !met) {
            uint64_t prod = 1;
            uint64_t x0 = x, y0 = y;
            for (int i = 0; i < 64; ++i) {
                uint64_t diff = x > y ? x - y : y - x;
                if (diff == 0) { met = true; break; }
                prod = mulmod(prod, diff, n);
                x = f(x);
                y = f(f(y));
            }
            if (prod != 1) d = std::gcd(prod, n);
            if (d == n) {
                // batched gcd overshot; replay this batch one step at a time
                x = x0;
                y = y0;
                d = 1;
                for (int i = 0; i < 64 && d == 1; ++i) {
                    uint64_t diff = x > y ? x - y : y - x;
                    if (diff == 0) break;
                    d = std::gcd(diff, n);
                    x = f(x);
                    y = f(f(y));
                }
                break;
            }
        }
        if (d != 1 && d != n) return d;
        // full collision without a factor: retry with the next constant
    }
}

void factor_rec(uint64_t n, std::vector<uint64_t>& out) {
    if (n == 1) return;
    if (is_prime(n)) {
        out.push_back(n);
        return;
    }
    uint64_t d = pollard_rho(n);
    factor_rec(d, out);
    factor_rec(n / d, out);
}

}  // namespace

bool is_prime(uint64_t n) {
    if (n < 2) return false;
    for (uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        if (n % p == 0) return n == p;
    }
    // deterministic base set for n < 3.3 * 10^24 (covers 64 bits)
    for (uint64_t a : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        if (!miller_rabin(n, a)) return false;
    }
    return true;
}

Factorization factorize(uint64_t n) {
    if (n == 0) throw input_error("factorize: n must be positive");
    if (n > (uint64_t(1) << 63)) throw input_error("factorize: input exceeds 63-bit cap");
    Factorization f;
    f.value = n;
    std::vector<uint64_t> ps;
    for (uint64_t p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull,
                       37ull, 41ull, 43ull, 47ull, 53ull, 59ull, 61ull, 67ull, 71ull, 73ull,
                       79ull, 83ull, 89ull, 97ull}) {
        while (n % p == 0) {
            ps.push_back(p);
            n /= p;
        }
    }
    factor_rec(n, ps);
    std::sort(ps.begin(), ps.end());
    for (uint64_t p : ps) {
        if (!f.factors.empty() && f.factors.back().first == p)
            f.factors.back().second++;
        else
            f.factors.push_back({p, 1});
    }
    return f;
}

int mobius(uint64_t n) {
    Factorization f = factorize(n);
    for (auto& [p, e] : f.factors)
        if (e > 1) return 0;
    return (f.factors.size() % 2 == 0) ? 1 : -1;
}

int kronecker_full(int64_t a, int64_t b) {
    // Standard Kronecker symbol (a|b), multiplicative in b, (a|0) defined as
    // 1 when a = +-1 and 0 otherwise.
    if (b == 0) return (a == 1 || a == -1) ? 1 : 0;
    int result = 1;
    if (b < 0) {
        b = -b;
        if (a < 0) result = -result;
    }
    int v2 = 0;
    while ((b & 1) == 0) b >>= 1, ++v2;
    if (v2 > 0) {
        int64_t am = ((a % 8) + 8) % 8;
        if (am % 2 == 0) return 0;
        if (v2 % 2 == 1 && (am == 3 || am == 5)) result = -result;  // (a|2) = (2|a)
    }
    // now b odd positive; (a|b) is the Jacobi symbol, periodic in a mod b
    a %= b;
    if (a < 0) a += b;
    // Jacobi(a, b)
    uint64_t A = (uint64_t)a, B = (uint64_t)b;
    while (A != 0) {
        int t = 0;
        while ((A & 1) == 0) A >>= 1, ++t;
        if (t % 2 == 1 && (B % 8 == 3 || B % 8 == 5)) result = -result;
        if ((A & 3) == 3 && (B & 3) == 3) result = -result;
        std::swap(A, B);
        A %= B;
    }
    if (B != 1) return 0;
    return result;
}

int kronecker(int64_t D, uint64_t n) {
    if (n > (uint64_t)INT64_MAX) throw input_error("kronecker: n too large");
    return kronecker_full(D, (int64_t)n);
}

bool is_fundamental_discriminant(int64_t D) {
    if (D == 0 || D == 1) return false;
    int64_t m = ((D % 4) + 4) % 4;
    uint64_t a = (uint64_t)(D > 0 ? D : -D);
    if (m == 1) {
        return factorize(a).is_squarefree();
    }
    if (m == 0) {
        if (a % 4 != 0) return false;
        uint64_t q = a / 4;
        int64_t qm = ((D / 4) % 4 + 4) % 4;
        if (qm != 2 && qm != 3) return false;
        return factorize(q).is_squarefree();
    }
    return false;
}

SquareDecomposition square_decompose(int64_t n) {
    if (n == 0) throw input_error("square_decompose: n must be nonzero");
    SquareDecomposition d;
    d.sign = n > 0 ? 1 : -1;
    uint64_t a = (uint64_t)(n > 0 ? n : -n);
    Factorization f = factorize(a);
    for (auto& [p, e] : f.factors) {
        for (int i = 0; i + 1 < e; i += 2) d.root *= p;
        if (e % 2 == 1) d.core *= p;
    }
    return d;
}

int64_t fundamental_discriminant_of(int64_t n) {
    SquareDecomposition sd = square_decompose(n);
    int64_t m = (int64_t)sd.core * sd.sign;
    if (m == 1) throw input_error("fundamental_discriminant_of: square input");
    int64_t r = ((m % 4) + 4) % 4;
    return (r == 1) ? m : 4 * m;
}

std::vector<int64_t> fundamental_discriminants(int64_t lo, int64_t hi, int sign,
                                               const std::vector<int>& mod8_filter,
                                               uint64_t coprime_to) {
    if (lo >= hi) throw input_error("fundamental_discriminants: lo < hi required");
    if (lo < 0) lo = 0;
    std::vector<int64_t> out;
    std::vector<char> sqfree((size_t)hi + 1, 1);
    for (int64_t d = 2; d * d <= hi; ++d) {
        int64_t d2 = d * d;
        for (int64_t v = d2; v <= hi; v += d2) sqfree[(size_t)v] = 0;
    }
    auto emit = [&](int64_t absD) {
        int64_t D = sign >= 0 ? absD : -absD;
        if (!mod8_filter.empty()) {
            int r = (int)(((D % 8) + 8) % 8);
            if (std::find(mod8_filter.begin(), mod8_filter.end(), r) == mod8_filter.end()) return;
        }
        if (coprime_to != 0 && std::gcd((uint64_t)absD, coprime_to) != 1) return;
        out.push_back(D);
    };
    for (int64_t a = lo + 1; a <= hi; ++a) {
        int64_t D = sign >= 0 ? a : -a;
        int64_t r4 = ((D % 4) + 4) % 4;
        if (r4 == 1) {
            if (a != 1 && sqfree[(size_t)a]) emit(a);
        } else if (r4 == 0) {
            if (a % 4 != 0) continue;
            int64_t q = D / 4;
            int64_t qr = ((q % 4) + 4) % 4;
            if ((qr == 2 || qr == 3) && sqfree[(size_t)(a / 4)]) emit(a);
        }
    }
    return out;
}

const std::vector<uint64_t>& primes_up_to(uint64_t n) {
    static std::mutex mtx;
    static std::vector<uint64_t> primes;
    static uint64_t limit = 0;
    std::lock_guard<std::mutex> lock(mtx);
    if (n <= limit) return primes;
    uint64_t nn = std::max<uint64_t>(n, 1 << 16);
    std::vector<char> comp(nn + 1, 0);
    primes.clear();
    for (uint64_t i = 2; i <= nn; ++i) {
        if (!comp[i]) {
            primes.push_back(i);
            for (uint64_t j = i * i; j <= nn; j += i) comp[j] = 1;
        }
    }
    limit = nn;
    return primes;
}

double prime_square_tail_bound(uint64_t P) {
    // sum_{p > P} p^{-2} <= (2*1.2551 - 1)/(P log P) for P >= 17
    // from Abel summation with pi(x) < 1.2551 x/log x and pi(x) > x/log x.
    if (P < 17) P = 17;
    double lp = std::log((double)P);
    return (2 * 1.2551 - 1.0) / ((double)P * lp);
}

IntervalValue euler_product(const EulerProductSpec& spec) {
    const auto& ps = primes_up_to(spec.p_max);
    double logsum = 0.0;
    for (uint64_t p : ps) {
        if (p > spec.p_max) break;
        double f = spec.local_factor(p);
        if (!(f > 0.0) || !(f < 2.0)) throw input_error("euler_product: local factor out of range");
        logsum += std::log(f);
    }
    double value = std::exp(logsum);
    double tail_log = spec.log_majorant_scale * prime_square_tail_bound(spec.p_max);
    // |prod - value| <= value * (exp(tail_log) - 1)
    double tail = value * std::expm1(tail_log) * 1.0000001 + 1e-300;
    return {value, tail};
}

IntervalValue prime_log_sum(uint64_t p_max) {
    if (p_max < 2) throw input_error("prime_log_sum: p_max >= 2 required");
    const auto& ps = primes_up_to(p_max);
    double s = 0.0;
    for (uint64_t p : ps) {
        if (p > p_max) break;
        double pd = (double)p;
        s += std::log(pd) / (pd * pd + 2 * pd + 2);
    }
    // sum_{p > P} log p / (p^2+2p+2) <= sum_{p>P} log p / p^2 <= 1.5102 / P
    double tail = 1.5102 / (double)p_max;
    return {s, tail};
}

double conductor_density_factor(uint64_t p) {
    double pd = (double)p;
    return 1.0 - 1.0 / (pd * pd) - 2.0 / (pd * pd * pd) + 2.0 / (pd * pd * pd * pd);
}

uint64_t isqrt64(uint64_t n) {
    if (n == 0) return 0;
    uint64_t r = (uint64_t)std::sqrt((double)n);
    while (r > 0 && r * r > n) --r;
    while ((r + 1) * (r + 1) <= n && (r + 1) != 0) ++r;
    return r;
}

}  // namespace d4c
