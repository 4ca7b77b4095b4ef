#include "d4census/localalg.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <sstream>

namespace d4c {

int q2_class_of(const mpq_class& q) {
    if (q == 0) throw input_error("q2_class_of: zero");
    mpz_class num = q.get_num(), den = q.get_den();
    int v = 0;
    mpz_class n = num < 0 ? mpz_class(-num) : num;
    while (n % 2 == 0) {
        n /= 2;
        ++v;
    }
    mpz_class d = den;
    while (d % 2 == 0) {
        d /= 2;
        --v;
    }
    // odd part of q modulo 8, sign included
    int no = (int)mpz_class(n % 8).get_si();
    int dn = (int)mpz_class(d % 8).get_si();
    int u = (no * ((dn == 1) ? 1 : (dn == 3) ? 3 : (dn == 5) ? 5 : 7)) % 8;  // inverses mod 8 are self
    if (sgn(num) < 0) u = (8 - u) % 8;
    // unit reps mod 8: 1 -> 1, 3 -> -5, 5 -> 5, 7 -> -1
    int base;
    switch (u) {
        case 1: base = 0; break;   // 1
        case 5: base = 1; break;   // 5
        case 7: base = 2; break;   // -1
        case 3: base = 3; break;   // -5
        default: throw input_error("q2_class_of: even odd-part");
    }
    return (v % 2 == 0) ? base : 4 + base;  // {1,5,-1,-5, 2,10,-2,-10}
}

int q2_class_of_int(int64_t n) { return q2_class_of(mpq_class(n)); }

int q2_disc_exponent(int cls) {
    static const int table[8] = {0, 0, 2, 2, 3, 3, 3, 3};
    if (cls < 0 || cls >= 8) throw input_error("q2_disc_exponent: bad class");
    return table[cls];
}

int q2_mul(int i, int j) {
    mpq_class p = mpq_class(kQ2Reps[i]) * mpq_class(kQ2Reps[j]);
    return q2_class_of(p);
}

mpq_class Pair2::weight() const {
    mpq_class w(1, aut);
    w /= mpq_class(mpz_class(1) << v_cond());
    w.canonicalize();
    return w;
}

// ---------------------------------------------------------------------------
// enumeration of pairs over a 2-adic quadratic field via its global shadow

namespace {

struct ShadowData {
    int64_t D;
    FieldPtr K;
    std::vector<QElem> reps;  // representative per local square class id (16)
};

const ShadowData& shadow(int64_t D) {
    static std::mutex mtx;
    static std::map<int64_t, ShadowData> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(D);
    if (it != cache.end()) return it->second;
    ShadowData sd;
    sd.D = D;
    sd.K = QuadraticField::make(D);
    sd.reps.assign(16, QElem());
    std::vector<bool> have(16, false);
    int found = 0;
    // deterministic scan over small elements (and their doubles for v = 1)
    for (int64_t r = 1; r <= 12 && found < 16; ++r) {
        for (int64_t u = -r; u <= r && found < 16; ++u) {
            for (int64_t v = -r; v <= r && found < 16; ++v) {
                QElem g = sd.K->elem(u, v);
                if (g.is_zero()) continue;
                int w = sd.K->valuation(g, 2);
                if (w < 0 || w > 1) continue;
                int cls = sd.K->local2_class_of(g);
                if (!have[cls]) {
                    have[cls] = true;
                    sd.reps[cls] = g;
                    ++found;
                }
            }
        }
    }
    if (found != 16) throw input_error("shadow: did not find all 16 local classes");
    auto [pos, ok] = cache.emplace(D, std::move(sd));
    return pos->second;
}

std::vector<Pair2> field_pairs(int bucket, int64_t shadow_D) {
    const ShadowData& sd = shadow(shadow_D);
    const QuadraticField& K = *sd.K;
    int e = (q2_class_of_int(K.d0()) >= 2) ? 2 : 1;  // ramified shadows have e = 2
    int f = (e == 1) ? 2 : 1;
    int vdk = q2_disc_exponent(q2_class_of_int(K.d0()));
    std::vector<Pair2> out;
    std::vector<bool> done(16, false);
    for (int cls = 0; cls < 16; ++cls) {
        if (done[cls]) continue;
        const QElem& delta = sd.reps[cls];
        mpq_class N = delta.norm();
        // fold: sigma(delta) = N(delta) * delta modulo squares
        QElem nd(N.get_num(), 0, N.get_den(), K.d0());
        QElem partner_elt = nd * delta;
        int partner = K.local2_class_of(partner_elt);
        done[cls] = true;
        if (partner != cls) done[partner] = true;
        Pair2 P;
        P.bucket = bucket;
        P.shadow = shadow_D;
        P.delta_class = std::min(cls, partner);
        P.v_disc_k = vdk;
        P.l_split = (cls == 0);
        int v = K.valuation(delta, 2);
        if (v % 2 != 0) {
            P.v_rel = f * (2 * e + 1);
        } else {
            int m = K.max_square_level(delta);
            P.v_rel = f * 2 * (e - m);
        }
        P.n_class = q2_class_of(N);
        P.v_flip = q2_disc_exponent(P.n_class);
        if (cls == 0) {
            P.aut = 4;
        } else {
            bool n_sq = K.is_square_at_2(nd);
            bool nd_delta_sq = K.is_square_at_2(partner_elt);
            P.aut = (n_sq || nd_delta_sq) ? 4 : 2;
        }
        std::ostringstream nm;
        nm << "k" << shadow_D << ".c" << P.delta_class;
        P.name = nm.str();
        out.push_back(P);
    }
    return out;
}

std::vector<Pair2> split_pairs() {
    std::vector<Pair2> out;
    for (int c1 = 0; c1 < 8; ++c1) {
        for (int c2 = c1; c2 < 8; ++c2) {
            Pair2 P;
            P.bucket = 1;
            P.shadow = 0;
            P.delta_class = c1 * 8 + c2;
            P.v_disc_k = 0;
            P.v_rel = q2_disc_exponent(c1) + q2_disc_exponent(c2);
            P.n_class = q2_mul(c1, c2);
            P.v_flip = q2_disc_exponent(P.n_class);
            P.aut = (c1 == c2) ? 8 : 4;
            P.l_split = (c1 == 0 && c2 == 0);
            std::ostringstream nm;
            nm << "split.c" << c1 << "x" << c2;
            P.name = nm.str();
            out.push_back(P);
        }
    }
    return out;
}

}  // namespace

const std::vector<Pair2>& pairs2_bucket(int dk_mod8) {
    static std::mutex mtx;
    static std::map<int, std::vector<Pair2>> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(dk_mod8);
    if (it != cache.end()) return it->second;
    std::vector<Pair2> out;
    switch (dk_mod8) {
        case 1: out = split_pairs(); break;
        case 5: out = field_pairs(5, 5); break;
        case 4: {
            out = field_pairs(4, -4);
            auto more = field_pairs(4, -20);
            out.insert(out.end(), more.begin(), more.end());
            break;
        }
        case 0: {
            for (int64_t d : {8ll, -8ll, 40ll, -40ll}) {
                auto more = field_pairs(0, d);
                out.insert(out.end(), more.begin(), more.end());
            }
            break;
        }
        default:
            throw input_error("pairs2_bucket: bucket must be one of 1, 5, 4, 0");
    }
    auto [pos, ok] = cache.emplace(dk_mod8, std::move(out));
    return pos->second;
}

std::vector<Pair2> pairs2_all() {
    std::vector<Pair2> out;
    for (int b : {1, 5, 4, 0}) {
        const auto& v = pairs2_bucket(b);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

size_t flip_pair2_index(size_t idx) {
    static std::mutex mtx;
    static std::vector<size_t> table;
    std::lock_guard<std::mutex> lock(mtx);
    if (table.empty()) {
        auto all = pairs2_all();
        table.assign(all.size(), (size_t)-1);
        auto k_class = [](const Pair2& P) {
            if (P.shadow == 0) return 0;
            int64_t d0 = P.shadow;
            if (((d0 % 4) + 4) % 4 != 1) d0 /= 4;
            return q2_class_of_int(d0);
        };
        for (size_t i = 0; i < all.size(); ++i) {
            if (table[i] != (size_t)-1) continue;
            const Pair2& P = all[i];
            int k_class_of_P = k_class(P);
            int vk2 = q2_disc_exponent(P.n_class);
            int v_rel2 = P.v_disc_k + P.v_rel - vk2;
            int n2 = k_class_of_P;
            // candidates in the flipped bucket
            std::vector<size_t> cand;
            for (size_t j = 0; j < all.size(); ++j) {
                const Pair2& Q = all[j];
                if (k_class(Q) != P.n_class) continue;
                if (Q.v_rel != v_rel2 || Q.n_class != n2) continue;
                if (Q.aut != P.aut) continue;
                if (table[j] != (size_t)-1 && table[j] != i) continue;
                cand.push_back(j);
            }
            if (cand.empty()) throw input_error("flip_pair2: no candidate");
            size_t target;
            if (std::find(cand.begin(), cand.end(), i) != cand.end()) {
                target = i;  // ambiguous groups: self-flip when possible
            } else {
                target = cand[0];
            }
            table[i] = target;
            table[target] = i;
        }
    }
    return table.at(idx);
}

WeightTable weight_table2(int dk_mod8) {
    const auto& pairs = pairs2_bucket(dk_mod8);
    std::vector<int> rows, cols;
    for (auto& P : pairs) {
        rows.push_back(P.v_rel);
        cols.push_back(P.v_flip);
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    WeightTable T;
    T.v_rel_values = rows;
    T.v_flip_values = cols;
    T.entry.assign(rows.size(), std::vector<mpq_class>(cols.size(), mpq_class(0)));
    for (auto& P : pairs) {
        size_t r = std::find(rows.begin(), rows.end(), P.v_rel) - rows.begin();
        size_t c = std::find(cols.begin(), cols.end(), P.v_flip) - cols.begin();
        T.entry[r][c] += P.weight();
    }
    return T;
}

mpq_class mu_sigma_2i(int i) {
    mpq_class total(0);
    for (auto& P : pairs2_all())
        if (P.j_exponent() == i) total += P.weight();
    total.canonicalize();
    return total;
}

mpq_class mu_sigma2_total() {
    mpq_class total(0);
    for (auto& P : pairs2_all()) total += P.weight();
    total.canonicalize();
    return total;
}

mpq_class mu_sigma2_central(int i) {
    mpq_class total(0);
    for (auto& P : pairs2_all())
        if (P.v_disc_k == 0 && P.v_rel == 2 * i) total += P.weight();
    total.canonicalize();
    return total;
}

// ---------------------------------------------------------------------------
// odd primes: class-invariant enumeration (everything is tame)

namespace {

// Q_p square classes as 2 bits: (valuation mod 2, nonresidue bit)
struct QpClass {
    int v, b;
    bool operator==(const QpClass& o) const { return v == o.v && b == o.b; }
};

QpClass qp_mul(QpClass x, QpClass y) { return {(x.v + y.v) % 2, (x.b + y.b) % 2}; }

}  // namespace

mpq_class PairOdd::weight(uint64_t p) const {
    mpz_class pw;
    mpz_ui_pow_ui(pw.get_mpz_t(), (unsigned long)p, (unsigned long)v_cond());
    mpq_class w(1, aut * pw);
    w.canonicalize();
    return w;
}

std::vector<PairOdd> pairs_odd(uint64_t p) {
    if (p == 2 || !is_prime(p)) throw input_error("pairs_odd: p must be an odd prime");
    int minus_one_bit = (p % 4 == 1) ? 0 : 1;  // legendre(-1, p)
    std::vector<PairOdd> out;
    // etale quadratics over Q_p: ids 0 split, 1 unram, 2 ram(pi = p*square),
    // 3 ram(pi = p*nonsquare); disc exponents and Q_p classes
    auto alg_vdisc = [](int a) { return a >= 2 ? 1 : 0; };
    auto alg_class = [](int a) -> QpClass {
        switch (a) {
            case 0: return {0, 0};
            case 1: return {0, 1};
            case 2: return {1, 0};
            default: return {1, 1};
        }
    };
    auto flip_v = [](QpClass c) { return c.v; };

    // K_p split: unordered pairs of etale algebras
    for (int a1 = 0; a1 < 4; ++a1) {
        for (int a2 = a1; a2 < 4; ++a2) {
            PairOdd P;
            P.k_type = 0;
            P.delta_id = a1 * 4 + a2;
            P.v_disc_k = 0;
            P.v_rel = alg_vdisc(a1) + alg_vdisc(a2);
            QpClass n = qp_mul(alg_class(a1), alg_class(a2));
            P.n_class = n.v * 2 + n.b;
            P.v_flip = flip_v(n);
            P.aut = (a1 == a2) ? 8 : 4;
            P.l_split = (a1 == 0 && a2 == 0);
            std::ostringstream nm;
            nm << "split." << a1 << "x" << a2;
            P.name = nm.str();
            out.push_back(P);
        }
    }
    // K_p unramified: delta classes (v_K mod 2, unit residue bit in F_{p^2})
    // N maps (v, b) -> (0, b) [norm of the Teichmueller nonsquare is a
    // nonsquare]; rational units embed with trivial bit, so N(delta) is always
    // a square in K and every pair has aut 4 and is sigma-fixed.
    for (int v = 0; v < 2; ++v) {
        for (int b = 0; b < 2; ++b) {
            PairOdd P;
            P.k_type = 1;
            P.delta_id = v * 2 + b;
            P.v_disc_k = 0;
            P.v_rel = (v == 1) ? 2 : 0;  // f = 2, tame v(d) = 1
            QpClass n{0, b};
            P.n_class = n.v * 2 + n.b;
            P.v_flip = 0;
            P.aut = 4;
            P.l_split = (v == 0 && b == 0);
            std::ostringstream nm;
            nm << "unram." << (v ? "pi" : "") << (b ? "u" : (v ? "" : "1"));
            P.name = nm.str();
            out.push_back(P);
        }
    }
    // K_p ramified, uniformizer pi = sqrt(p u0), u0 in {square, nonsquare}
    for (int b0 = 0; b0 < 2; ++b0) {
        // delta classes of K^x/2: (v_K mod 2, residue bit)
        // embedding of a rational class (v, b): (0, b + v*b0) with even v_K
        // sq_in_K(v, b) <=> b + v*b0 = 0 (valuations of rationals are even)
        auto emb_bit = [&](QpClass c) { return (c.b + c.v * b0) % 2; };
        // N on K-classes: (vK, bK) -> N(pi)^{vK}; N(pi) = -p*u0
        QpClass npi{1, (minus_one_bit + b0) % 2};
        for (int vK = 0; vK < 2; ++vK) {
            for (int bK = 0; bK < 2; ++bK) {
                QpClass n = vK ? npi : QpClass{0, 0};
                // fold: partner = delta + embed(N(delta)); rational classes
                // embed with even valuation, so only the bit moves
                int partner_b = (bK + emb_bit(n)) % 2;
                if (vK == 1 && partner_b < bK) continue;  // keep one per orbit
                PairOdd P;
                P.k_type = 2 + b0;
                P.delta_id = vK * 2 + bK;
                P.v_disc_k = 1;
                P.v_rel = vK;  // f = 1, tame
                P.n_class = n.v * 2 + n.b;
                P.v_flip = flip_v(n);
                bool n_sq_in_K = (emb_bit(n) == 0);  // v_K of a rational is even
                bool nd_sq = (vK % 2 == 0) && ((bK + emb_bit(n)) % 2 == 0);
                P.aut = (vK == 0 && bK == 0) ? 4 : ((n_sq_in_K || nd_sq) ? 4 : 2);
                P.l_split = (vK == 0 && bK == 0);
                std::ostringstream nm;
                nm << "ram" << (b0 ? "n" : "p") << "." << (vK ? "pi" : "") << (bK ? "u" : (vK ? "" : "1"));
                P.name = nm.str();
                out.push_back(P);
            }
        }
    }
    return out;
}

mpq_class mu_sigma_p(uint64_t p) {
    mpq_class total(0);
    for (auto& P : pairs_odd(p)) total += P.weight(p);
    total.canonicalize();
    return total;
}

mpq_class mu_sigma_p_central(uint64_t p) {
    mpq_class total(0);
    for (auto& P : pairs_odd(p)) {
        if (P.v_disc_k == 0 && P.v_cond() == 2) total += P.weight(p);
    }
    total.canonicalize();
    return total;
}

size_t flip_pair_odd_index(uint64_t p, size_t idx) {
    auto all = pairs_odd(p);
    // flipped K type from the class of N(delta)
    auto type_of_nclass = [](int nc) {
        int v = nc / 2, b = nc % 2;
        if (v == 0) return b == 0 ? 0 : 1;
        return 2 + b;
    };
    auto nclass_of_type = [](int t) {
        switch (t) {
            case 0: return 0;
            case 1: return 1;
            case 2: return 2;
            default: return 3;
        }
    };
    std::vector<size_t> table(all.size(), (size_t)-1);
    for (size_t i = 0; i < all.size(); ++i) {
        if (table[i] != (size_t)-1) continue;
        const PairOdd& P = all[i];
        int kt2 = type_of_nclass(P.n_class);
        int v_rel2 = P.v_disc_k + P.v_rel - P.v_flip;
        int n2 = nclass_of_type(P.k_type);
        std::vector<size_t> cand;
        for (size_t j = 0; j < all.size(); ++j) {
            const PairOdd& Q = all[j];
            if (Q.k_type != kt2 || Q.v_rel != v_rel2 || Q.n_class != n2) continue;
            if (Q.aut != P.aut) continue;
            if (table[j] != (size_t)-1 && table[j] != i) continue;
            cand.push_back(j);
        }
        if (cand.empty()) throw input_error("flip_pair_odd: no candidate");
        size_t target = (std::find(cand.begin(), cand.end(), i) != cand.end()) ? i : cand[0];
        table[i] = target;
        table[target] = i;
    }
    return table.at(idx);
}

// ---------------------------------------------------------------------------

const std::vector<PairInf>& pairs_inf() {
    static const std::vector<PairInf> pairs = {
        {0, 8, 0, "inf.r4_r2"},
        {1, 4, 3, "inf.r2c_r2"},
        {2, 8, 2, "inf.c2_r2"},
        {3, 4, 1, "inf.c2_c"},
    };
    return pairs;
}

mpq_class relative_quadratic_mass_q(uint64_t p) {
    mpq_class total(0);
    if (p == 2) {
        for (int c = 0; c < 8; ++c) {
            total += mpq_class(mpz_class(1), mpz_class(2) * (mpz_class(1) << q2_disc_exponent(c)));
        }
    } else {
        // classes 1, u, p, up with disc exponents 0, 0, 1, 1
        total = 1 + mpq_class(mpz_class(1), mpz_class(p));
    }
    total.canonicalize();
    return total;
}

// shadow discriminant whose completion at 2 matches the local class of d0
static int64_t shadow_disc_for_class(int cls) {
    switch (cls) {
        case 1: return 5;     // unramified
        case 2: return -4;    // -1
        case 3: return -20;   // -5
        case 4: return 8;     // 2
        case 5: return 40;    // 10
        case 6: return -8;    // -2
        case 7: return -40;   // -10
    }
    throw input_error("shadow_disc_for_class: split class has no field shadow");
}

mpq_class relative_quadratic_mass(const QuadraticField& K, uint64_t p) {
    // mass over ONE prime above p: sum over quadratic etale algebras A of the
    // completion of 1/(2 D_{A/K_P})
    SplitType st = K.split_type(p);
    if (st == SplitType::split) return relative_quadratic_mass_q(p);
    if (p != 2) {
        mpz_class np = (st == SplitType::inert) ? mpz_class(p) * p : mpz_class(p);
        mpq_class total = 1 + mpq_class(mpz_class(1), np);
        total.canonicalize();
        return total;
    }
    // p = 2, K_2 a field: enumerate the 16 local square classes in the shadow
    int cls = q2_class_of_int(K.d0());
    const ShadowData& sd = shadow(shadow_disc_for_class(cls));
    const QuadraticField& S = *sd.K;
    int e = (cls >= 2) ? 2 : 1;
    int f = (e == 1) ? 2 : 1;
    mpq_class total(0);
    for (int c = 0; c < 16; ++c) {
        const QElem& delta = sd.reps[c];
        int v = S.valuation(delta, 2);
        int vd;
        if (v % 2 != 0) {
            vd = 2 * e + 1;
        } else {
            vd = 2 * (e - S.max_square_level(delta));
        }
        // D_{A/K_P} = (N P)^{vd} = 2^{f vd}
        total += mpq_class(mpz_class(1), mpz_class(2) * (mpz_class(1) << (f * vd)));
    }
    total.canonicalize();
    return total;
}

}  // namespace d4c
