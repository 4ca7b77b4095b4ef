#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>

#include "d4census/relext.hpp"

using namespace d4c;

namespace {

// ---------------------------------------------------------------------------
// test oracle: quartic field discriminant via Dedekind's criterion

using Poly = std::vector<int64_t>;  // coefficients, low degree first

Poly poly_mod(Poly f, int64_t p) {
    for (auto& c : f) c = ((c % p) + p) % p;
    while (f.size() > 1 && f.back() == 0) f.pop_back();
    return f;
}

Poly poly_mul(const Poly& a, const Poly& b, int64_t p) {
    Poly c(a.size() + b.size() - 1, 0);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) c[i + j] = (c[i + j] + a[i] * b[j]) % p;
    return poly_mod(c, p);
}

Poly poly_divmod(Poly a, const Poly& b, int64_t p, Poly* quot) {
    auto inv = [&](int64_t x) {
        int64_t r = 1, e = p - 2, base = ((x % p) + p) % p;
        while (e) {
            if (e & 1) r = r * base % p;
            base = base * base % p;
            e >>= 1;
        }
        return r;
    };
    a = poly_mod(a, p);
    Poly q(std::max<size_t>(a.size(), 1), 0);
    int64_t bi = inv(b.back());
    while (a.size() >= b.size() && !(a.size() == 1 && a[0] == 0)) {
        int64_t c = a.back() * bi % p;
        size_t shift = a.size() - b.size();
        q[shift] = c;
        for (size_t i = 0; i < b.size(); ++i)
            a[shift + i] = ((a[shift + i] - c * b[i]) % p + p) % p;
        while (a.size() > 1 && a.back() == 0) a.pop_back();
        if (a.size() < b.size()) break;
    }
    if (quot) *quot = poly_mod(q, p);
    return poly_mod(a, p);
}

Poly poly_gcd(Poly a, Poly b, int64_t p) {
    a = poly_mod(a, p);
    b = poly_mod(b, p);
    while (!(b.size() == 1 && b[0] == 0)) {
        Poly r = poly_divmod(a, b, p, nullptr);
        a = b;
        b = r;
    }
    return a;
}

// radical of f mod p: product of the distinct irreducible factors
Poly poly_radical(const Poly& f, int64_t p) {
    Poly fb = poly_mod(f, p);
    if (p <= 3) {
        // brute force: strip monic factors by ascending degree; whatever the
        // division leaves has no factor of smaller degree
        Poly rad{1};
        auto divisible = [&](const Poly& g) {
            Poly r = poly_divmod(fb, g, p, nullptr);
            return r.size() == 1 && r[0] == 0;
        };
        for (size_t deg = 1; deg < 4; ++deg) {
            int64_t count = 1;
            for (size_t i = 0; i < deg; ++i) count *= p;
            for (int64_t code = 0; code < count; ++code) {
                Poly g(deg + 1, 0);
                g[deg] = 1;
                int64_t c = code;
                for (size_t i = 0; i < deg; ++i) {
                    g[i] = c % p;
                    c /= p;
                }
                if (fb.size() <= deg) break;
                if (!divisible(g)) continue;
                rad = poly_mul(rad, g, p);
                while (divisible(g)) {
                    Poly q;
                    poly_divmod(fb, g, p, &q);
                    fb = q;
                }
            }
        }
        if (fb.size() > 1) rad = poly_mul(rad, fb, p);
        return rad;
    }
    // p > deg f: the derivative of a nonconstant f cannot vanish
    Poly df(std::max<size_t>(f.size() - 1, 1), 0);
    for (size_t i = 1; i < f.size(); ++i) df[i - 1] = ((int64_t)(i % p) * (f[i] % p)) % p;
    Poly g = poly_gcd(fb, poly_mod(df, p), p);
    if (g.size() == 1) return fb;
    Poly q;
    poly_divmod(fb, g, p, &q);
    return q;
}

// Dedekind's criterion for monic f at p: returns true when Z[x]/(f) is
// p-maximal. g1 = radical of f mod p, h1 = f/g1 mod p, F = (g1*h1 - f)/p;
// maximal iff gcd(F, g1, h1) = 1 mod p.
bool dedekind_p_maximal(const Poly& f, int64_t p) {
    Poly fb = poly_mod(f, p);
    Poly g1 = poly_radical(fb, p);
    Poly h1;
    poly_divmod(fb, g1, p, &h1);
    // lift g1, h1 monic to Z and form (g1*h1 - f)/p
    Poly gh(g1.size() + h1.size() - 1, 0);
    for (size_t i = 0; i < g1.size(); ++i)
        for (size_t j = 0; j < h1.size(); ++j) gh[i + j] += g1[i] * h1[j];
    Poly F(std::max(gh.size(), f.size()), 0);
    for (size_t i = 0; i < F.size(); ++i) {
        int64_t v = (i < gh.size() ? gh[i] : 0) - (i < f.size() ? f[i] : 0);
        if (v % p != 0) throw std::runtime_error("dedekind: lift mismatch");
        F[i] = v / p;
    }
    Poly g = poly_gcd(poly_gcd(poly_mod(F, p), g1, p), h1, p);
    return g.size() == 1;
}

// |disc| of the quartic field Q(sqrt(alpha)) when Z[theta] is p-maximal at all
// p dividing disc(f); empty when the criterion fails somewhere
std::optional<mpz_class> quartic_disc_oracle(const mpz_class& T, const mpz_class& N) {
    // f = x^4 - T x^2 + N, disc = 16 N (T^2 - 4N)^2
    mpz_class disc = 16 * N * (T * T - 4 * N) * (T * T - 4 * N);
    if (disc == 0) return std::nullopt;
    mpz_class ad = abs(disc);
    if (!ad.fits_slong_p()) return std::nullopt;
    Factorization fac = factorize((uint64_t)ad.get_si());
    if (!T.fits_slong_p() || !N.fits_slong_p()) return std::nullopt;
    Poly f{(int64_t)N.get_si(), 0, (int64_t)(-T.get_si()), 0, 1};
    for (auto& [p, e] : fac.factors) {
        if (e < 2) continue;  // p-maximal automatically when p^2 does not divide
        if (p > 1000000) return std::nullopt;
        if (!dedekind_p_maximal(f, (int64_t)p)) return std::nullopt;
    }
    return ad;
}

// brute-force Kummer classes with N(d) <= Y via bounded coordinate search;
// candidates are bucketed by the square class of the norm (a necessary
// condition for equivalence) before the exact pairwise square test
std::multiset<std::pair<int64_t, int>> brute_extensions(const QuadraticField& K, int64_t Y,
                                                        int64_t B) {
    std::map<std::pair<int, int64_t>, std::vector<QElem>> buckets;
    for (int64_t u = -B; u <= B; ++u) {
        for (int64_t v = -B; v <= B; ++v) {
            QElem g = K.elem(u, v);
            if (g.is_zero()) continue;
            mpq_class N = g.norm();
            mpz_class s = N.get_num() * N.get_den();
            if (!s.fits_slong_p()) continue;
            SquareDecomposition sd = square_decompose(s.get_si());
            if (sd.sign > 0 && sd.core == 1 && sqrt_in_field(g)) continue;  // square
            auto& bucket = buckets[{sd.sign, (int64_t)sd.core}];
            bool known = false;
            for (auto& c : bucket) {
                if (sqrt_in_field(c * g)) {
                    known = true;
                    break;
                }
            }
            if (!known) bucket.push_back(g);
        }
    }
    std::multiset<std::pair<int64_t, int>> out;
    for (auto& [key, bucket] : buckets) {
        for (auto& c : bucket) {
            mpz_class nrel = relative_discriminant_norm(K, c);
            if (nrel > Y) continue;
            GaloisType t = galois_type(K, c);
            out.insert({nrel.get_si(), (int)t});
        }
    }
    return out;
}

}  // namespace

TEST_CASE("relative discriminant worked examples") {
    auto K2 = QuadraticField::make(8);
    QElem r2(0, 1, 1, 2);
    CHECK(relative_discriminant_norm(*K2, r2) == 32);
    QIdeal d = relative_discriminant(*K2, r2);
    CHECK(d.norm() == 32);

    auto Ki = QuadraticField::make(-4);
    QElem i(0, 1, 1, -1);
    CHECK(relative_discriminant_norm(*Ki, i) == 16);  // disc Q(zeta8) = 256 = 16 * 16

    CHECK_THROWS(relative_discriminant_norm(*K2, QElem(9, 0, 1, 2)));
}

TEST_CASE("galois types") {
    auto K2 = QuadraticField::make(8);
    CHECK(galois_type(*K2, QElem(0, 1, 1, 2)) == GaloisType::D4);  // x^4 - 2

    auto K5 = QuadraticField::make(5);
    QElem a5(5, 1, 2, 5);  // (5 + sqrt5)/2, norm 5: x^4 - 5x^2 + 5
    CHECK(a5.norm() == 5);
    CHECK(galois_type(*K5, a5) == GaloisType::C4);

    auto Ki = QuadraticField::make(-4);
    CHECK(galois_type(*Ki, QElem(0, 1, 1, -1)) == GaloisType::V4);  // x^4 + 1

    CHECK_THROWS(galois_type(*K2, QElem(2, 0, 1, 2)));  // (sqrt2)^2 is a square class? no: 2 = (sqrt2)^2
}

TEST_CASE("flipped discriminants") {
    auto K2 = QuadraticField::make(8);
    CHECK(flipped_discriminant(*K2, QElem(0, 1, 1, 2)) == -8);
    auto K5 = QuadraticField::make(-20);
    QElem a(1, 1, 1, -5);  // 1 + sqrt(-5), norm 6
    CHECK(flipped_discriminant(*K5, a) == 24);
    auto Ki = QuadraticField::make(-4);
    QElem b(1, 1, 1, -1);  // 1 + i, norm 2
    CHECK(flipped_discriminant(*Ki, b) == 8);
    // norm in the -1 class
    QElem c(1, 2, 1, -1);  // 1 + 2i, norm 5 -> not -1; use 2 + i? norm 5 too
    (void)c;
    QElem m(0, 1, 1, -1);
    CHECK_THROWS(flipped_discriminant(*Ki, m));  // norm 1 is a square
}

TEST_CASE("x^4 - 2 full record and the discriminant oracle") {
    auto K = QuadraticField::make(8);
    std::vector<D4Record> recs;
    EnumOptions opt;
    opt.with_alpha = true;
    enumerate_extensions(*K, 32, opt, [&](const D4Record& r) { recs.push_back(r); });
    bool found = false;
    for (auto& r : recs) {
        if (r.N_rel == 32 && r.D_flip == -8) {
            found = true;
            CHECK(r.conductor == 256);
            CHECK(r.J == 4);
            CHECK(r.q == 2);
            CHECK(r.i2 == 1);
            CHECK(r.d_odd == 1);
            // cross-check against the maximal-order discriminant oracle
            REQUIRE(r.has_alpha);
            mpq_class T = r.alpha.trace(), N = r.alpha.norm();
            REQUIRE(T.get_den() == 1);
            REQUIRE(N.get_den() == 1);
            auto disc = quartic_disc_oracle(T.get_num(), N.get_num());
            if (disc) {
                CHECK(*disc == mpz_class(64) * r.N_rel);  // D_K^2 * N_rel
            }
        }
    }
    CHECK(found);
    // the defining example: x^4 - 2 itself
    auto disc = quartic_disc_oracle(0, -2);
    REQUIRE(disc.has_value());
    CHECK(*disc == 2048);
}

TEST_CASE("no unramified quadratic extension when h = 1") {
    auto K = QuadraticField::make(-3);
    int count = 0;
    EnumOptions opt;
    opt.d4_only = false;
    opt.dedup = false;
    enumerate_extensions(*K, 1, opt, [&](const D4Record&) { ++count; });
    CHECK(count == 0);
}

TEST_CASE("enumeration matches the bounded-height oracle") {
    struct Case {
        int64_t D;
        int64_t Y;
        int64_t B;
    };
    std::vector<Case> cases = {{-4, 100, 40}, {-3, 60, 40}, {-20, 80, 40},
                               {-8, 80, 40},  {-24, 60, 40}, {5, 60, 60},
                               {8, 60, 80}};
    for (auto& c : cases) {
        auto K = QuadraticField::make(c.D);
        std::multiset<std::pair<int64_t, int>> brute = brute_extensions(*K, c.Y, c.B);
        std::multiset<std::pair<int64_t, int>> mine;
        EnumOptions opt;
        opt.d4_only = false;
        opt.dedup = false;
        enumerate_extensions(*K, c.Y, opt,
                             [&](const D4Record& r) { mine.insert({(int64_t)r.N_rel.get_si(), (int)r.type}); });
        CHECK(mine == brute);
    }
}

TEST_CASE("dedup halves the raw D4 count") {
    for (int64_t D : {-4ll, -20ll, 8ll, -24ll, 40ll, 13ll}) {
        auto K = QuadraticField::make(D);
        int raw = 0, dd = 0;
        EnumOptions opt;
        opt.d4_only = true;
        opt.dedup = false;
        enumerate_extensions(*K, 200, opt, [&](const D4Record&) { ++raw; });
        opt.dedup = true;
        enumerate_extensions(*K, 200, opt, [&](const D4Record&) { ++dd; });
        CHECK(raw == 2 * dd);
    }
}

TEST_CASE("flip invariants hold on a sweep") {
    // N_rel = |D_flip| q^2 with v_2(q) in 0..3, d_odd squarefree; enforced by
    // construction (fill_flip_invariants throws), so enumerate a batch
    int n = 0;
    for (int64_t D : {-4ll, -8ll, -20ll, 8ll, 12ll, 13ll, -23ll, 40ll}) {
        auto K = QuadraticField::make(D);
        EnumOptions opt;
        enumerate_extensions(*K, 300, opt, [&](const D4Record& r) {
            mpz_class ad(r.D_flip > 0 ? r.D_flip : -r.D_flip);
            CHECK(r.N_rel == ad * r.q * r.q);
            CHECK(r.i2 <= 3);
            ++n;
        });
    }
    CHECK(n > 50);
}

TEST_CASE("records sharing 2-adic data share the flipped 2-adic valuation") {
    // Lemma: identical local data at 2 forces identical v_2(D_flip)
    std::map<std::tuple<int, int, int>, std::set<int>> groups;
    for (int64_t D : {17ll, 41ll, -31ll, 5ll, -19ll, 12ll, 8ll, -40ll}) {
        auto K = QuadraticField::make(D);
        EnumOptions opt;
        enumerate_extensions(*K, 400, opt, [&](const D4Record& r) {
            int v2n = 0;
            mpz_class n = r.N_rel;
            while (n % 2 == 0) {
                n /= 2;
                ++v2n;
            }
            int dm8 = (int)(((r.D_K % 8) + 8) % 8);
            int ncls = q2_class_of(r.norm_alpha);
            mpz_class f(r.D_flip);
            int v2f = 0;
            mpz_class af = abs(f);
            while (af % 2 == 0) {
                af /= 2;
                ++v2f;
            }
            groups[{dm8, v2n, ncls}].insert(v2f);
        });
    }
    for (auto& [k, vs] : groups) CHECK(vs.size() == 1);
}

TEST_CASE("cache round trip") {
    auto K = QuadraticField::make(8);
    EnumOptions opt;
    opt.with_alpha = true;
    std::vector<D4Record> recs;
    enumerate_extensions(*K, 64, opt, [&](const D4Record& r) { recs.push_back(r); });
    REQUIRE(!recs.empty());
    for (auto& r : recs) {
        std::string line = record_to_json(r);
        D4Record back = record_from_json(line);
        CHECK(back.D_K == r.D_K);
        CHECK(back.N_rel == r.N_rel);
        CHECK(back.conductor == r.conductor);
        CHECK(back.D_flip == r.D_flip);
        CHECK(back.i2 == r.i2);
        CHECK(back.norm_alpha == r.norm_alpha);
        CHECK(back.alpha == r.alpha);
        CHECK(record_to_json(back) == line);  // byte-stable
    }
}
