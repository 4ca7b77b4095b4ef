#include "d4census/relext.hpp"

#include <algorithm>

#include "json.hpp"

namespace d4c {

namespace {

// squarefree kernel of (alpha): primes with odd valuation, via exact factoring
// of the principal ideal of alpha * z^2 (same square class)
QIdeal kernel_ideal(const QuadraticField& K, const QElem& alpha) {
    QElem g(alpha.x * alpha.z, alpha.y * alpha.z, 1, alpha.d0);
    QIdeal I = K.principal_ideal(g);
    mpz_class n = I.norm();
    if (!n.fits_slong_p()) throw input_error("kernel_ideal: norm exceeds factoring cap");
    Factorization f = factorize((uint64_t)n.get_si());
    QIdeal ker = K.unit_ideal();
    for (auto& [p, e] : f.factors) {
        (void)e;
        SplitType st = K.split_type(p);
        auto sp = K.split_prime(p);
        if (st == SplitType::split) {
            if (K.valuation(g, p, false) % 2 != 0) ker = K.mul(ker, sp.prime);
            if (K.valuation(g, p, true) % 2 != 0) ker = K.mul(ker, sp.conj_prime);
        } else {
            if (K.valuation(g, p, false) % 2 != 0) ker = K.mul(ker, sp.prime);
        }
    }
    return ker;
}

}  // namespace

namespace {

// 2-adic exponent data: product over P | 2 of NP^{v_P(d_{L/K})}
mpz_class rel_disc_two_part(const QuadraticField& K, const QElem& alpha) {
    int64_t dm8 = ((K.D() % 8) + 8) % 8;
    int e = (dm8 == 0 || dm8 == 4) ? 2 : 1;
    int f = (dm8 == 5) ? 2 : 1;
    int g = (dm8 == 1) ? 2 : 1;  // number of primes over 2
    mpz_class two_part(1);
    for (int comp = 0; comp < g; ++comp) {
        bool conj = comp == 1;
        int v = K.valuation(alpha, 2, conj);
        int vd;
        if (v % 2 != 0) {
            vd = 2 * e + 1;
        } else {
            // divide out tau^v to reach a local unit; even powers of the
            // uniformizer do not change the square class
            QElem unit_part = alpha;
            if (v != 0) {
                QElem tau = (dm8 == 1 || dm8 == 5)
                                ? QElem(2, 0, 1, K.d0())
                                : ((K.d0() % 2 == 0) ? QElem(0, 1, 1, K.d0())
                                                     : QElem(1, 1, 1, K.d0()));
                QElem base = (v > 0) ? tau.inverse() : tau;
                QElem pw(1, 0, 1, K.d0());
                for (int i = 0; i < std::abs(v); ++i) pw = pw * base;
                unit_part = alpha * pw;
            }
            int m = K.max_square_level(unit_part, conj);
            vd = 2 * (e - m);
        }
        two_part <<= (f * vd);
    }
    return two_part;
}

}  // namespace

mpz_class relative_discriminant_norm(const QuadraticField& K, const QElem& alpha) {
    if (sqrt_in_field(alpha)) throw input_error("relative_discriminant: alpha is a square");
    QIdeal ker = kernel_ideal(K, alpha);
    mpz_class odd = ker.norm();
    while (odd % 2 == 0) odd /= 2;
    return odd * rel_disc_two_part(K, alpha);
}

QIdeal relative_discriminant(const QuadraticField& K, const QElem& alpha) {
    // assemble the ideal 4 a / c^2 from the norm data
    if (sqrt_in_field(alpha)) throw input_error("relative_discriminant: alpha is a square");
    QIdeal ker = kernel_ideal(K, alpha);
    // odd part of the kernel
    mpz_class n = ker.norm();
    QIdeal d = K.unit_ideal();
    Factorization f = factorize((uint64_t)n.get_si());
    for (auto& [p, e] : f.factors) {
        (void)e;
        if (p == 2) continue;
        auto sp = K.split_prime(p);
        QElem g(alpha.x * alpha.z, alpha.y * alpha.z, 1, alpha.d0);
        if (K.valuation(g, p, false) % 2 != 0) d = K.mul(d, sp.prime);
        if (sp.type == SplitType::split && K.valuation(g, p, true) % 2 != 0)
            d = K.mul(d, sp.conj_prime);
    }
    // 2-part: P^{v_d} per prime over 2
    int64_t dm8 = ((K.D() % 8) + 8) % 8;
    int e2 = (dm8 == 0 || dm8 == 4) ? 2 : 1;
    int g2 = (dm8 == 1) ? 2 : 1;
    auto sp2 = K.split_prime(2);
    for (int comp = 0; comp < g2; ++comp) {
        bool conj = comp == 1;
        int v = K.valuation(alpha, 2, conj);
        int vd;
        if (v % 2 != 0) {
            vd = 2 * e2 + 1;
        } else {
            QElem unit_part = alpha;
            if (v != 0) {
                QElem tau = (dm8 == 1 || dm8 == 5)
                                ? QElem(2, 0, 1, K.d0())
                                : ((K.d0() % 2 == 0) ? QElem(0, 1, 1, K.d0())
                                                     : QElem(1, 1, 1, K.d0()));
                QElem base = (v > 0) ? tau.inverse() : tau;
                QElem pw(1, 0, 1, K.d0());
                for (int i = 0; i < std::abs(v); ++i) pw = pw * base;
                unit_part = alpha * pw;
            }
            int m = K.max_square_level(unit_part, conj);
            vd = 2 * (e2 - m);
        }
        QIdeal P = conj ? sp2.conj_prime : sp2.prime;
        for (int i = 0; i < vd; ++i) d = K.mul(d, P);
    }
    return d;
}

GaloisType galois_type(const QuadraticField& K, const QElem& alpha) {
    if (sqrt_in_field(alpha)) throw input_error("galois_type: alpha is a square");
    mpq_class N = alpha.norm();
    auto is_rat_square = [](const mpz_class& m) {
        if (m <= 0) return false;
        mpz_class r = sqrt(m);
        return r * r == m;
    };
    if (N > 0 && is_rat_square(N.get_num()) && is_rat_square(N.get_den()))
        return GaloisType::V4;
    mpq_class Nd = N * K.d0();
    Nd.canonicalize();
    if (Nd > 0 && is_rat_square(Nd.get_num()) && is_rat_square(Nd.get_den()))
        return GaloisType::C4;
    return GaloisType::D4;
}

int64_t flipped_discriminant(const QuadraticField& K, const QElem& alpha) {
    (void)K;
    mpq_class N = alpha.norm();
    mpz_class s = N.get_num() * N.get_den();
    if (!s.fits_slong_p()) throw input_error("flipped_discriminant: norm exceeds cap");
    int64_t v = s.get_si();
    SquareDecomposition sd = square_decompose(v);
    if (sd.core == 1 && sd.sign == 1)
        throw input_error("flipped_discriminant: norm is a square (not D4)");
    return fundamental_discriminant_of(sd.sign * (int64_t)sd.core);
}

void fill_flip_invariants(D4Record& rec) {
    mpz_class ad = mpz_class(rec.D_flip >= 0 ? rec.D_flip : -rec.D_flip);
    if (rec.N_rel % ad != 0)
        throw invariant_violation("flip invariant: |D_flip| does not divide N_rel");
    rec.J = rec.N_rel / ad;
    mpz_class r = sqrt(rec.J);
    if (r * r != rec.J) throw invariant_violation("flip invariant: J is not a square");
    rec.q = r;
    rec.i2 = 0;
    mpz_class q = rec.q;
    while (q % 2 == 0) {
        q /= 2;
        rec.i2 += 1;
    }
    rec.d_odd = q;
    if (rec.i2 > 3) throw invariant_violation("flip invariant: v_2(q) out of range");
    mpz_class dd = rec.d_odd;
    for (mpz_class p = 3; p * p <= dd; p += 2) {
        if (dd % (p * p) == 0) throw invariant_violation("flip invariant: d_odd not squarefree");
        while (dd % p == 0) dd /= p;
    }
}

// ---------------------------------------------------------------------------
// enumeration

namespace {

struct TwoDivisor {
    QIdeal ideal;
    uint64_t norm;
    uint64_t genus_vec;
};

}  // namespace

void enumerate_extensions(const QuadraticField& K, int64_t Y, const EnumOptions& opt,
                          const RecordSink& sink) {
    if (Y < 1) return;
    const int64_t D = K.D();
    // squarefree divisors of (2)
    std::vector<TwoDivisor> two_divs;
    {
        TwoDivisor one{K.unit_ideal(), 1, 0};
        two_divs.push_back(one);
        auto sp = K.split_prime(2);
        if (sp.type == SplitType::split) {
            two_divs.push_back({sp.prime, 2, K.genus_vector(sp.prime)});
            two_divs.push_back({sp.conj_prime, 2, K.genus_vector(sp.conj_prime)});
            two_divs.push_back({K.mul(sp.prime, sp.conj_prime), 4,
                                (uint64_t)(K.genus_vector(sp.prime) ^
                                           K.genus_vector(sp.conj_prime))});
        } else if (sp.type == SplitType::inert) {
            two_divs.push_back({sp.prime, 4, K.genus_vector(sp.prime)});
        } else {
            two_divs.push_back({sp.prime, 2, K.genus_vector(sp.prime)});
        }
    }
    // Selmer subset products
    const auto& basis = K.selmer_basis();
    size_t nsub = size_t(1) << basis.size();
    std::vector<QElem> selmer_prod(nsub, QElem(1, 0, 1, K.d0()));
    for (size_t s = 1; s < nsub; ++s) {
        int low = __builtin_ctzll(s);
        selmer_prod[s] = selmer_prod[s & (s - 1)] * basis[low];
    }
    // odd primes up to Y with their prime ideals and genus vectors
    struct OddPrime {
        uint64_t p;
        SplitType st;
        QIdeal P, Pc;
        uint64_t vec;
    };
    std::vector<OddPrime> odd_primes;
    {
        const auto& ps = primes_up_to((uint64_t)Y);
        for (uint64_t p : ps) {
            if (p == 2) continue;
            if ((int64_t)p > Y) break;
            OddPrime op;
            op.p = p;
            op.st = K.split_type(p);
            if (op.st == SplitType::inert && (int64_t)(p * p) > Y) continue;
            auto sp = K.split_prime(p);
            op.P = sp.prime;
            op.Pc = sp.conj_prime;
            if (op.st == SplitType::inert) {
                op.vec = 0;  // (p) is principal with positive norm
            } else if (D % (int64_t)p == 0) {
                op.vec = K.genus_vector(sp.prime);
            } else {
                uint64_t v = 0;
                const auto& pd = K.prime_discriminants();
                for (size_t i = 0; i < pd.size(); ++i)
                    if (kronecker(pd[i], p) == -1) v |= (1ull << i);
                op.vec = v;
            }
            odd_primes.push_back(op);
        }
    }

    auto process_kernel = [&](const QIdeal& a_full, uint64_t genus_vec) {
        // square-class test by genus characters
        bool ok = genus_vec == 0 ||
                  (K.is_real() && K.unit_norm() == 1 && genus_vec == K.negative_norm_genus_vector());
        if (!ok) return;
        mpz_class norm_odd = a_full.norm();
        while (norm_odd % 2 == 0) norm_odd /= 2;
        auto qroot = K.sqrt_of_inverse_class(a_full);
        if (!qroot) throw invariant_violation("enumerate: genus square class has no root");
        QIdeal aq2 = K.mul(a_full, K.mul(*qroot, *qroot));
        auto alpha0 = K.principal_generator(aq2);
        if (!alpha0) throw invariant_violation("enumerate: a q^2 not principal");
        bool a_trivial = a_full.is_unit_ideal();
        QIdeal a_conj = K.conj_ideal(a_full);
        bool self_conj = a_conj == a_full;
        bool keep_by_kernel = a_full < a_conj;
        for (size_t s = 0; s < nsub; ++s) {
            QElem alpha = *alpha0 * selmer_prod[s];
            // only the trivial kernel can carry the square class
            if (a_trivial && sqrt_in_field(alpha)) continue;
            mpz_class nrel = norm_odd * rel_disc_two_part(K, alpha);
            if (nrel > Y) continue;
            GaloisType type = galois_type(K, alpha);
            if (opt.d4_only && type != GaloisType::D4) continue;
            if (opt.dedup && type == GaloisType::D4) {
                if (!self_conj) {
                    if (!keep_by_kernel) continue;
                } else {
                    // partner class is N(alpha) * alpha
                    mpq_class N = alpha.norm();
                    QElem partner =
                        QElem(N.get_num(), 0, N.get_den(), K.d0()) * alpha;
                    if (!K.signature_less(alpha, partner)) continue;
                }
            }
            D4Record rec;
            rec.D_K = D;
            rec.N_rel = nrel;
            rec.conductor = mpz_class(D > 0 ? D : -D) * nrel;
            rec.type = type;
            rec.norm_alpha = alpha.norm();
            if (K.is_real()) {
                rec.sign1 = alpha.sign_emb1();
                rec.sign2 = alpha.sign_emb2();
                rec.inf_pair = (rec.sign1 > 0 && rec.sign2 > 0)   ? 0
                               : (rec.sign1 < 0 && rec.sign2 < 0) ? 2
                                                                  : 1;
            } else {
                rec.inf_pair = 3;
            }
            if (type == GaloisType::D4) {
                rec.D_flip = flipped_discriminant(K, alpha);
                fill_flip_invariants(rec);
            }
            if (opt.with_alpha) {
                rec.has_alpha = true;
                rec.alpha = alpha;
            }
            sink(rec);
        }
    };

    // DFS over squarefree odd ideals of norm <= Y
    std::function<void(size_t, int64_t, QIdeal, uint64_t)> dfs =
        [&](size_t i, int64_t budget, QIdeal a, uint64_t vec) {
            if (i == odd_primes.size()) {
                for (auto& c : two_divs)
                    process_kernel(K.mul(a, c.ideal), vec ^ c.genus_vec);
                return;
            }
            const OddPrime& op = odd_primes[i];
            // skip
            dfs(i + 1, budget, a, vec);
            int64_t p = (int64_t)op.p;
            if (p > budget) return;
            if (op.st == SplitType::split) {
                dfs(i + 1, budget / p, K.mul(a, op.P), vec ^ op.vec);
                dfs(i + 1, budget / p, K.mul(a, op.Pc), vec ^ op.vec);
                if (p <= budget / p) dfs(i + 1, budget / (p * p), K.mul(a, K.mul(op.P, op.Pc)), vec);
            } else if (op.st == SplitType::inert) {
                if (p <= budget / p) dfs(i + 1, budget / (p * p), K.mul(a, op.P), vec ^ op.vec);
            } else {
                dfs(i + 1, budget / p, K.mul(a, op.P), vec ^ op.vec);
            }
        };
    dfs(0, Y, K.unit_ideal(), 0);
}

// ---------------------------------------------------------------------------
// cache serialization

std::string record_to_json(const D4Record& rec) {
    nlohmann::json j;
    j["dk"] = rec.D_K;
    j["nrel"] = rec.N_rel.get_str();
    j["cond"] = rec.conductor.get_str();
    j["type"] = rec.type == GaloisType::D4 ? "D4" : rec.type == GaloisType::C4 ? "C4" : "V4";
    if (rec.type == GaloisType::D4) {
        j["dflip"] = rec.D_flip;
        j["j"] = rec.J.get_str();
        j["i2"] = rec.i2;
        j["dodd"] = rec.d_odd.get_str();
    }
    j["nalpha"] = rec.norm_alpha.get_str();
    if (rec.has_alpha) {
        j["alpha"] = {rec.alpha.x.get_str(), rec.alpha.y.get_str(), rec.alpha.z.get_str()};
    }
    return j.dump();
}

D4Record record_from_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    D4Record rec;
    rec.D_K = j.at("dk").get<int64_t>();
    rec.N_rel = mpz_class(j.at("nrel").get<std::string>());
    rec.conductor = mpz_class(j.at("cond").get<std::string>());
    std::string t = j.at("type").get<std::string>();
    rec.type = t == "D4" ? GaloisType::D4 : t == "C4" ? GaloisType::C4 : GaloisType::V4;
    if (rec.type == GaloisType::D4) {
        rec.D_flip = j.at("dflip").get<int64_t>();
        rec.J = mpz_class(j.at("j").get<std::string>());
        rec.i2 = j.at("i2").get<int>();
        rec.d_odd = mpz_class(j.at("dodd").get<std::string>());
        mpz_class r = sqrt(rec.J);
        rec.q = r;
    }
    rec.norm_alpha = mpq_class(j.at("nalpha").get<std::string>());
    if (j.contains("alpha")) {
        rec.has_alpha = true;
        int64_t d0 = rec.D_K;
        if (((d0 % 4) + 4) % 4 != 1) d0 /= 4;
        rec.alpha = QElem(mpz_class(j["alpha"][0].get<std::string>()),
                          mpz_class(j["alpha"][1].get<std::string>()),
                          mpz_class(j["alpha"][2].get<std::string>()), d0);
    }
    return rec;
}

}  // namespace d4c
