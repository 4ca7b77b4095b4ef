#include "d4census/census.hpp"

#include <atomic>
#include <chrono>
#include <cstring>
#include <thread>

#include "json.hpp"

namespace d4c {

namespace {

double mpq_to_double(const mpq_class& q) { return q.get_d(); }

// ---------------------------------------------------------------------------
// record invariants at the constrained places

struct Tuple2 {
    int k_class;  // q2 class of d0, 0 for split
    int v_rel;
    int n_class;
    bool operator<(const Tuple2& o) const {
        return std::tie(k_class, v_rel, n_class) < std::tie(o.k_class, o.v_rel, o.n_class);
    }
    bool operator==(const Tuple2& o) const {
        return k_class == o.k_class && v_rel == o.v_rel && n_class == o.n_class;
    }
};

Tuple2 tuple_of_pair2(const Pair2& P) {
    int k = 0;
    if (P.shadow != 0) {
        int64_t d0 = P.shadow;
        if (((d0 % 4) + 4) % 4 != 1) d0 /= 4;
        k = q2_class_of_int(d0);
    }
    return {k, P.v_rel, P.n_class};
}

int v_p_of(const mpz_class& n, uint64_t p) {
    int v = 0;
    mpz_class m = n;
    while (m != 0 && m % p == 0) {
        m /= p;
        ++v;
    }
    return v;
}

// class of a nonzero rational at an odd prime: 2*(v mod 2) + nonresidue bit
int qp_class_of(const mpq_class& q, uint64_t p) {
    mpz_class num = q.get_num(), den = q.get_den();
    int v = v_p_of(num, p) - v_p_of(den, p);
    mpz_class u = num * den;
    mpz_class pk;
    mpz_ui_pow_ui(pk.get_mpz_t(), (unsigned long)p,
                  (unsigned long)(v_p_of(num, p) + v_p_of(den, p)));
    u /= pk;
    mpz_class pm(p);
    u = ((u % pm) + pm) % pm;  // sign folded into the residue
    int bit = kronecker_full(u.get_si(), (int64_t)p) == -1 ? 1 : 0;
    return 2 * (((v % 2) + 2) % 2) + bit;
}

Tuple2 tuple2_of_record(const D4Record& rec) {
    int64_t d0 = rec.D_K;
    if (((d0 % 4) + 4) % 4 != 1) d0 /= 4;
    int dm8 = (int)(((rec.D_K % 8) + 8) % 8);
    int k = (dm8 == 1) ? 0 : q2_class_of_int(d0);
    return {k, v_p_of(rec.N_rel, 2), q2_class_of(rec.norm_alpha)};
}

struct TupleOdd {
    int k_type, v_rel, n_class;
    bool operator==(const TupleOdd& o) const {
        return k_type == o.k_type && v_rel == o.v_rel && n_class == o.n_class;
    }
};

int odd_k_type(int64_t D, uint64_t p) {
    int kr = kronecker(D, p);
    if (kr == 1) return 0;
    if (kr == -1) return 1;
    int64_t d0 = D;
    if (((d0 % 4) + 4) % 4 != 1) d0 /= 4;
    int64_t m = d0 / (int64_t)p;
    int64_t pm = (int64_t)p;
    int64_t r = ((m % pm) + pm) % pm;
    return kronecker_full(r, pm) == -1 ? 3 : 2;
}

TupleOdd tuple_odd_of_record(const D4Record& rec, uint64_t p) {
    return {odd_k_type(rec.D_K, p), v_p_of(rec.N_rel, p), qp_class_of(rec.norm_alpha, p)};
}

// representative pair index for a record tuple; -1 when no pair matches
int pair2_index_of(const Tuple2& t) {
    static std::mutex mtx;
    static std::map<Tuple2, int> cache;
    std::lock_guard<std::mutex> lock(mtx);
    if (cache.empty()) {
        auto all = pairs2_all();
        for (size_t i = 0; i < all.size(); ++i) {
            Tuple2 u = tuple_of_pair2(all[i]);
            if (!cache.count(u)) cache[u] = (int)i;
        }
    }
    auto it = cache.find(t);
    return it == cache.end() ? -1 : it->second;
}

int pair_odd_index_of(uint64_t p, const TupleOdd& t) {
    auto all = pairs_odd(p);
    for (size_t i = 0; i < all.size(); ++i) {
        if (all[i].k_type == t.k_type && all[i].v_rel == t.v_rel && all[i].n_class == t.n_class)
            return (int)i;
    }
    return -1;
}

// ---------------------------------------------------------------------------
// deterministic chunked parallel runner

template <typename T, typename Fn>
std::vector<T> run_chunks(size_t n_chunks, int workers, Fn&& fn) {
    std::vector<T> results(n_chunks);
    if (workers <= 1) {
        for (size_t i = 0; i < n_chunks; ++i) results[i] = fn(i);
        return results;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                while (true) {
                    size_t i = next.fetch_add(1);
                    if (i >= n_chunks) break;
                    results[i] = fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

std::vector<int64_t> discriminant_list(int64_t bound) {
    auto pos = fundamental_discriminants(0, bound, +1);
    auto neg = fundamental_discriminants(0, bound, -1);
    std::vector<int64_t> all;
    all.reserve(pos.size() + neg.size());
    size_t i = 0, j = 0;
    while (i < pos.size() || j < neg.size()) {
        if (j >= neg.size() || (i < pos.size() && pos[i] < -neg[j])) {
            all.push_back(pos[i++]);
        } else {
            all.push_back(neg[j++]);
        }
    }
    return all;
}

}  // namespace

// ---------------------------------------------------------------------------
// GlobalSpec

bool GlobalSpec::matches(const D4Record& rec) const {
    if (allow_inf && !(*allow_inf)[rec.inf_pair]) return false;
    if (allow2) {
        int idx = pair2_index_of(tuple2_of_record(rec));
        if (idx < 0) throw invariant_violation("spec: record has no 2-adic pair class");
        if (!(*allow2)[idx]) return false;
    }
    for (auto& [p, allowed] : allow_odd) {
        int idx = pair_odd_index_of(p, tuple_odd_of_record(rec, p));
        if (idx < 0) throw invariant_violation("spec: record has no odd pair class");
        if (!allowed[idx]) return false;
    }
    return true;
}

void GlobalSpec::validate() const {
    if (allow2) {
        auto all = pairs2_all();
        if (allow2->size() != all.size()) throw input_error("spec: bad allow2 length");
        std::map<Tuple2, char> seen;
        for (size_t i = 0; i < all.size(); ++i) {
            Tuple2 t = tuple_of_pair2(all[i]);
            auto it = seen.find(t);
            if (it == seen.end())
                seen[t] = (*allow2)[i];
            else if (it->second != (*allow2)[i])
                throw input_error("spec: allowed set splits an invariant class at 2");
        }
    }
    for (auto& [p, allowed] : allow_odd) {
        auto all = pairs_odd(p);
        if (allowed.size() != all.size()) throw input_error("spec: bad odd allow length");
        for (size_t i = 0; i < all.size(); ++i) {
            for (size_t j = i + 1; j < all.size(); ++j) {
                if (all[i].k_type == all[j].k_type && all[i].v_rel == all[j].v_rel &&
                    all[i].n_class == all[j].n_class && allowed[i] != allowed[j])
                    throw input_error("spec: allowed set splits an invariant class at p");
            }
        }
    }
}

GlobalSpec GlobalSpec::flipped() const {
    GlobalSpec out;
    if (allow2) {
        auto all = pairs2_all();
        std::vector<char> f(all.size(), 0);
        for (size_t i = 0; i < all.size(); ++i)
            if ((*allow2)[i]) f[flip_pair2_index(i)] = 1;
        out.allow2 = f;
    }
    for (auto& [p, allowed] : allow_odd) {
        std::vector<char> f(allowed.size(), 0);
        for (size_t i = 0; i < allowed.size(); ++i)
            if (allowed[i]) f[flip_pair_odd_index(p, i)] = 1;
        out.allow_odd[p] = f;
    }
    if (allow_inf) {
        std::array<char, 4> f{0, 0, 0, 0};
        const auto& inf = pairs_inf();
        for (int i = 0; i < 4; ++i)
            if ((*allow_inf)[i]) f[inf[i].flip_id] = 1;
        out.allow_inf = f;
    }
    return out;
}

bool GlobalSpec::flip_closed() const {
    GlobalSpec f = flipped();
    if (allow2.has_value() != f.allow2.has_value()) return false;
    if (allow2 && *allow2 != *f.allow2) return false;
    if (allow_odd.size() != f.allow_odd.size()) return false;
    for (auto& [p, a] : allow_odd) {
        auto it = f.allow_odd.find(p);
        if (it == f.allow_odd.end() || it->second != a) return false;
    }
    if (allow_inf.has_value() != f.allow_inf.has_value()) return false;
    if (allow_inf && *allow_inf != *f.allow_inf) return false;
    return true;
}

mpq_class GlobalSpec::mu2() const {
    mpq_class total(0);
    auto all = pairs2_all();
    for (size_t i = 0; i < all.size(); ++i)
        if (!allow2 || (*allow2)[i]) total += all[i].weight();
    total.canonicalize();
    return total;
}

mpq_class GlobalSpec::mu2_i(int want) const {
    mpq_class total(0);
    auto all = pairs2_all();
    for (size_t i = 0; i < all.size(); ++i)
        if ((!allow2 || (*allow2)[i]) && all[i].j_exponent() == want) total += all[i].weight();
    total.canonicalize();
    return total;
}

mpq_class GlobalSpec::mu_odd(uint64_t p) const {
    auto it = allow_odd.find(p);
    auto all = pairs_odd(p);
    mpq_class total(0);
    for (size_t i = 0; i < all.size(); ++i)
        if (it == allow_odd.end() || it->second[i]) total += all[i].weight(p);
    total.canonicalize();
    return total;
}

mpq_class GlobalSpec::mu_odd_central(uint64_t p) const {
    auto it = allow_odd.find(p);
    auto all = pairs_odd(p);
    mpq_class total(0);
    for (size_t i = 0; i < all.size(); ++i)
        if ((it == allow_odd.end() || it->second[i]) && all[i].v_disc_k == 0 &&
            all[i].v_cond() == 2)
            total += all[i].weight(p);
    total.canonicalize();
    return total;
}

mpq_class GlobalSpec::mu_inf() const {
    mpq_class total(0);
    for (auto& P : pairs_inf())
        if (!allow_inf || (*allow_inf)[P.id]) total += P.weight();
    total.canonicalize();
    return total;
}

uint64_t GlobalSpec::m_constrained() const {
    uint64_t m = 1;
    auto incomplete = [](const std::vector<char>& v) {
        for (char c : v)
            if (!c) return true;
        return false;
    };
    if (allow2 && incomplete(*allow2)) m *= 2;
    for (auto& [p, v] : allow_odd)
        if (incomplete(v)) m *= p;
    return m;
}

std::string GlobalSpec::to_json() const {
    nlohmann::json j;
    if (allow2) {
        std::vector<int> idx;
        for (size_t i = 0; i < allow2->size(); ++i)
            if ((*allow2)[i]) idx.push_back((int)i);
        j["2"] = idx;
    }
    for (auto& [p, allowed] : allow_odd) {
        std::vector<int> idx;
        for (size_t i = 0; i < allowed.size(); ++i)
            if (allowed[i]) idx.push_back((int)i);
        j[std::to_string(p)] = idx;
    }
    if (allow_inf) {
        std::vector<int> idx;
        for (int i = 0; i < 4; ++i)
            if ((*allow_inf)[i]) idx.push_back(i);
        j["inf"] = idx;
    }
    return j.dump();
}

GlobalSpec GlobalSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GlobalSpec out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::string key = it.key();
        std::vector<int> idx = it.value().get<std::vector<int>>();
        if (key == "inf") {
            std::array<char, 4> a{0, 0, 0, 0};
            for (int i : idx) {
                if (i < 0 || i > 3) throw input_error("spec json: bad inf pair id");
                a[i] = 1;
            }
            out.allow_inf = a;
        } else if (key == "2") {
            std::vector<char> a(pairs2_all().size(), 0);
            for (int i : idx) {
                if (i < 0 || (size_t)i >= a.size()) throw input_error("spec json: bad pair id at 2");
                a[i] = 1;
            }
            out.allow2 = a;
        } else {
            uint64_t p = std::stoull(key);
            if (p < 3 || !is_prime(p)) throw input_error("spec json: bad prime key");
            std::vector<char> a(pairs_odd(p).size(), 0);
            for (int i : idx) {
                if (i < 0 || (size_t)i >= a.size()) throw input_error("spec json: bad pair id");
                a[i] = 1;
            }
            out.allow_odd[p] = a;
        }
    }
    out.validate();
    return out;
}

uint64_t GlobalSpec::hash() const {
    std::string s = to_json();
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= (unsigned char)c;
        h *= 1099511628211ull;
    }
    return h;
}

GlobalSpec spec_restrict_i2(std::vector<int> allowed_i2) {
    GlobalSpec out;
    auto all = pairs2_all();
    std::vector<char> a(all.size(), 0);
    for (size_t i = 0; i < all.size(); ++i)
        a[i] = std::find(allowed_i2.begin(), allowed_i2.end(), all[i].j_exponent()) !=
               allowed_i2.end();
    out.allow2 = a;
    out.validate();
    return out;
}

GlobalSpec spec_restrict_vcond2(std::vector<int> allowed_vcond) {
    GlobalSpec out;
    auto all = pairs2_all();
    std::vector<char> a(all.size(), 0);
    for (size_t i = 0; i < all.size(); ++i)
        a[i] = std::find(allowed_vcond.begin(), allowed_vcond.end(), all[i].v_cond()) !=
               allowed_vcond.end();
    out.allow2 = a;
    out.validate();
    return out;
}

GlobalSpec spec_restrict_odd_central(uint64_t p, bool central_only) {
    GlobalSpec out;
    auto all = pairs_odd(p);
    std::vector<char> a(all.size(), 0);
    for (size_t i = 0; i < all.size(); ++i) {
        bool central = all[i].v_disc_k == 0 && all[i].v_cond() == 2;
        a[i] = central_only ? central : !central;
    }
    out.allow_odd[p] = a;
    out.validate();
    return out;
}

GlobalSpec spec_restrict_odd_k_unramified(uint64_t p) {
    GlobalSpec out;
    auto all = pairs_odd(p);
    std::vector<char> a(all.size(), 0);
    for (size_t i = 0; i < all.size(); ++i) a[i] = all[i].v_disc_k == 0;
    out.allow_odd[p] = a;
    out.validate();
    return out;
}

GlobalSpec spec_restrict_inf(std::vector<int> pair_ids) {
    GlobalSpec out;
    std::array<char, 4> a{0, 0, 0, 0};
    for (int i : pair_ids) a[i] = 1;
    out.allow_inf = a;
    return out;
}

// ---------------------------------------------------------------------------
// reports

std::string CensusReport::to_json() const {
    nlohmann::json j;
    j["x"] = x;
    j["method"] = method;
    j["n_exact"] = n_exact.get_str();
    j["main"] = {{"value", main.value}, {"err", main.err}};
    j["secondary"] = {{"value", secondary.value}, {"err", secondary.err}};
    j["residual"] = residual;
    j["fields"] = fields;
    j["records"] = records;
    if (m_quartic_warning) j["m_quartic_warning"] = true;
    return j.dump();
}

std::string CensusReport::csv_header() {
    return "x,method,n_exact,main,main_err,secondary,secondary_err,residual";
}

std::string CensusReport::to_csv_row() const {
    char buf[512];
    snprintf(buf, sizeof(buf), "%lld,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g", (long long)x,
             method.c_str(), n_exact.get_str().c_str(), main.value, main.err, secondary.value,
             secondary.err, residual);
    return buf;
}

// ---------------------------------------------------------------------------
// counting engines

namespace {

struct ChunkCount {
    mpz_class total = 0;
    uint64_t fields = 0, records = 0;
};

void fill_report_terms(CensusReport& rep, const GlobalSpec& spec) {
    AsymptoticTerms terms = main_and_secondary(spec);
    double x = (double)rep.x;
    rep.main = {terms.main_at(x), terms.main_coeff.err * x * std::log(x)};
    rep.secondary = {terms.secondary_at(x), terms.secondary_coeff.err * x};
    rep.residual = mpq_to_double(mpq_class(rep.n_exact)) - rep.main.value - rep.secondary.value;
    uint64_t m = spec.m_constrained();
    rep.m_quartic_warning = (double)m * m * m * m > (double)rep.x;
}

}  // namespace

CensusReport count_oracle(int64_t X, const GlobalSpec& spec, const CensusOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    if (X < 1 || X > 10000000) throw input_error("count_oracle: X out of the desk-scale range");
    primes_up_to((uint64_t)std::max<int64_t>(X, 100));
    pairs2_all();
    std::vector<int64_t> ds = discriminant_list(X);
    if (opt.max_fields && ds.size() > *opt.max_fields)
        throw ResourceCap("count_oracle: field cap exceeded",
                          std::abs(ds[*opt.max_fields]));
    size_t chunk = 64;
    size_t n_chunks = (ds.size() + chunk - 1) / chunk;
    EnumOptions eo;
    eo.d4_only = true;
    eo.dedup = true;
    auto results = run_chunks<ChunkCount>(n_chunks, opt.workers, [&](size_t ci) {
        ChunkCount out;
        for (size_t i = ci * chunk; i < std::min(ds.size(), (ci + 1) * chunk); ++i) {
            int64_t D = ds[i];
            QuadraticField K(D);
            int64_t Y = X / std::abs(D);
            if (Y < 1) continue;
            out.fields += 1;
            enumerate_extensions(K, Y, eo, [&](const D4Record& rec) {
                out.records += 1;
                if (spec.matches(rec)) out.total += 1;
            });
        }
        return out;
    });
    CensusReport rep;
    rep.x = X;
    rep.method = "oracle";
    for (auto& r : results) {
        rep.n_exact += r.total;
        rep.fields += r.fields;
        rep.records += r.records;
    }
    fill_report_terms(rep, spec);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

namespace {

struct HypChunk {
    mpz_class a1_sigma = 0, a1_phi = 0, piece2 = 0, piece3 = 0;
    uint64_t fields = 0, records = 0;
};

mpz_class hyperbola_total(int64_t X, const GlobalSpec& spec, TieConvention conv,
                          const CensusOptions& opt, uint64_t* fields_out, uint64_t* records_out) {
    primes_up_to((uint64_t)std::max<int64_t>(X, 100));
    pairs2_all();
    GlobalSpec phi = spec.flipped();
    int64_t s = (int64_t)isqrt64((uint64_t)X);
    std::vector<int64_t> ds = discriminant_list(s);
    size_t chunk = 16;
    size_t n_chunks = (ds.size() + chunk - 1) / chunk;
    EnumOptions eo;
    eo.d4_only = true;
    eo.dedup = true;
    mpz_class XX(X);
    auto results = run_chunks<HypChunk>(n_chunks, opt.workers, [&](size_t ci) {
        HypChunk out;
        for (size_t i = ci * chunk; i < std::min(ds.size(), (ci + 1) * chunk); ++i) {
            int64_t D = ds[i];
            int64_t a = std::abs(D);
            mpz_class a2 = mpz_class(a) * a;
            bool in_a1;
            if (conv == TieConvention::ties_to_first)
                in_a1 = a2 <= XX;
            else
                in_a1 = a2 < XX;
            QuadraticField K(D);
            int64_t Y = X / a;
            if (Y < 1) continue;
            out.fields += 1;
            enumerate_extensions(K, Y, eo, [&](const D4Record& rec) {
                out.records += 1;
                bool mt_sigma = spec.matches(rec);
                bool mt_phi = phi.matches(rec);
                if (in_a1 && mt_sigma) out.a1_sigma += 1;
                if (in_a1 && mt_phi) out.a1_phi += 1;
                if (!mt_phi) return;
                const mpz_class& b = rec.N_rel;
                mpz_class q4 = rec.q * rec.q * rec.q * rec.q;
                mpz_class aq4 = a2 * q4;
                mpz_class b2 = b * b;
                mpz_class Xq4 = XX * q4;
                if (conv == TieConvention::ties_to_first) {
                    if (aq4 < XX && b2 <= Xq4) out.piece2 += 1;
                    if (aq4 >= XX && a2 <= XX) out.piece3 += 1;
                } else {
                    if (aq4 < XX && b2 < Xq4) out.piece2 += 1;
                    if (aq4 >= XX && a2 < XX && b2 < Xq4) out.piece3 += 1;
                    // corner |D_K|^2 = X = N_rel^2/q^4: in both exceptional
                    // sets at once, compensating the double subtraction
                    if (a2 >= XX && b2 >= Xq4) out.piece3 -= 1;
                }
            });
        }
        return out;
    });
    HypChunk sum;
    for (auto& r : results) {
        sum.a1_sigma += r.a1_sigma;
        sum.a1_phi += r.a1_phi;
        sum.piece2 += r.piece2;
        sum.piece3 += r.piece3;
        sum.fields += r.fields;
        sum.records += r.records;
    }
    if (fields_out) *fields_out = sum.fields;
    if (records_out) *records_out = sum.records;
    return sum.a1_sigma + sum.a1_phi - sum.piece2 - sum.piece3;
}

}  // namespace

mpz_class hyperbola_count(int64_t X, const GlobalSpec& spec, TieConvention conv,
                          const CensusOptions& opt) {
    return hyperbola_total(X, spec, conv, opt, nullptr, nullptr);
}

CensusReport count_hyperbola(int64_t X, const GlobalSpec& spec, const CensusOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    if (X < 1) throw input_error("count_hyperbola: X must be positive");
    CensusReport rep;
    rep.x = X;
    rep.method = "hyperbola";
    rep.n_exact =
        hyperbola_total(X, spec, TieConvention::ties_to_first, opt, &rep.fields, &rep.records);
    fill_report_terms(rep, spec);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// ---------------------------------------------------------------------------
// asymptotic terms

AsymptoticTerms main_and_secondary(const GlobalSpec& spec, uint64_t p_max) {
    // product over p of (1-1/p)^2 mu(Sigma_p), complete factors from the
    // Euler product and constrained primes patched by exact rational ratios
    EulerProductSpec eps;
    eps.local_factor = [](uint64_t p) { return conductor_density_factor(p); };
    eps.p_max = p_max;
    eps.log_majorant_scale = 1.5;
    IntervalValue A = euler_product(eps);
    double ratio = 1.0;
    // p = 2 restriction
    mpq_class mu2s = spec.mu2();
    if (spec.allow2) {
        mpq_class complete(5, 2);
        ratio *= mpq_to_double(mu2s) / mpq_to_double(complete);
    }
    for (auto& [p, allowed] : spec.allow_odd) {
        (void)allowed;
        mpq_class r = spec.mu_odd(p) / mu_sigma_p(p);
        r.canonicalize();
        ratio *= mpq_to_double(r);
    }
    double mu_inf = mpq_to_double(spec.mu_inf());
    AsymptoticTerms out;
    out.main_coeff.value = 0.5 * mu_inf * A.value * ratio;
    out.main_coeff.err = 0.5 * mu_inf * A.tail_bound * std::abs(ratio);
    if (mu2s == 0 || out.main_coeff.value == 0) {
        out.secondary_coeff = {0, 0};
        return out;
    }
    // odd part: 2 sum_p log p mu(Sigma_{p^2})/mu(Sigma_p), complete primes via
    // the closed form log p/(p^2+2p+2); the 2-adic part enters through the
    // grouping-independent combination 2 log2 sum_i i mu(Sigma_{2^{2i}})/mu_2
    IntervalValue psum = prime_log_sum(p_max);
    double odd_sum = psum.value - std::log(2.0) / 10.0;
    double sum_err = 2.0 * psum.tail_bound;
    for (auto& [p, allowed] : spec.allow_odd) {
        (void)allowed;
        double pd = (double)p;
        double complete_term = std::log(pd) / (pd * pd + 2 * pd + 2);
        mpq_class r = spec.mu_odd_central(p) / spec.mu_odd(p);
        odd_sum += std::log(pd) * mpq_to_double(r) - complete_term;
    }
    mpq_class iw(0);
    for (int i = 1; i <= 3; ++i) iw += i * spec.mu2_i(i);
    iw /= mu2s;
    iw.canonicalize();
    double two_term = 2.0 * std::log(2.0) * mpq_to_double(iw);
    double factor = 1.0 - 2.0 * odd_sum - two_term;
    out.secondary_coeff.value = out.main_coeff.value * factor;
    out.secondary_coeff.err =
        out.main_coeff.err * std::abs(factor) + out.main_coeff.value * sum_err;
    return out;
}

// ---------------------------------------------------------------------------
// L-values

namespace {

// smallest-prime-factor sieve shared by the L-value machinery
const std::vector<int32_t>& spf_up_to(size_t n) {
    static std::mutex mtx;
    static std::vector<int32_t> spf;
    std::lock_guard<std::mutex> lock(mtx);
    if (spf.size() > n) return spf;
    size_t nn = std::max<size_t>(n + 1, 1 << 16);
    spf.assign(nn, 0);
    for (size_t i = 2; i < nn; ++i) {
        if (spf[i] == 0) {
            for (size_t j = i; j < nn; j += i)
                if (spf[j] == 0) spf[j] = (int32_t)i;
        }
    }
    return spf;
}

// chi_D values for n < M via multiplicativity
void chi_table(int64_t D, size_t M, const std::vector<int32_t>& spf, std::vector<int8_t>& chi) {
    chi.assign(M, 0);
    if (M > 1) chi[1] = 1;
    for (size_t n = 2; n < M; ++n) {
        int32_t p = spf[n];
        size_t m = n / p;
        if (m % p == 0) {
            // chi multiplicative, compute prime power directly
            chi[n] = (int8_t)(chi[m] * chi[p]);
        } else {
            if ((size_t)p == n) {
                chi[n] = (int8_t)kronecker(D, (uint64_t)p);
            } else {
                chi[n] = (int8_t)(chi[m] * chi[p]);
            }
        }
    }
}

}  // namespace

double smoothed_L(int64_t D, double N) {
    if (N < 1) throw input_error("smoothed_L: N >= 1 required");
    size_t M = (size_t)std::ceil(N * 41.5) + 2;  // e^{-n/N} < 1e-18 beyond
    const auto& spf = spf_up_to(M);
    std::vector<int8_t> chi;
    chi_table(D, M, spf, chi);
    double w = 1.0;
    const double w0 = std::exp(-1.0 / N);
    double sum = 0.0;
    for (size_t n = 1; n < M; ++n) {
        w *= w0;
        if (chi[n]) sum += (double)chi[n] * w / (double)n;
    }
    return sum;
}

ValueErr inverse_L2(int64_t D, uint64_t p_max) {
    const auto& ps = primes_up_to(p_max);
    double prod = 1.0;
    for (uint64_t p : ps) {
        if (p > p_max) break;
        int c = kronecker(D, p);
        if (c) prod *= 1.0 - (double)c / ((double)p * (double)p);
    }
    double tail = prime_square_tail_bound(p_max) * 1.1;  // |log factor| <= 1.05/p^2
    return {prod, std::abs(prod) * (std::exp(tail) - 1.0)};
}

// ---------------------------------------------------------------------------
// the constant c

ConstantEstimate estimate_c(int64_t T, const CensusOptions& opt) {
    if (T < 100 || T > 10000000) throw input_error("estimate_c: T out of range");
    size_t M_max = (size_t)(41.5 * std::max<double>(10000.0, (double)T)) + 2;
    spf_up_to(M_max);
    primes_up_to(std::max<uint64_t>((uint64_t)200000, 2));

    // kappa = (1/2 zeta(2)) prod (1 + 1/(p+1)^2)
    EulerProductSpec bs;
    bs.local_factor = [](uint64_t p) {
        double q = (double)p + 1;
        return 1.0 + 1.0 / (q * q);
    };
    bs.p_max = 1000000;
    IntervalValue B = euler_product(bs);
    const double zeta2 = M_PI * M_PI / 6.0;
    double kappa = B.value / (2.0 * zeta2);

    // calibration of the smoothing-error constant against the class number
    // formula on small discriminants
    double cal = 0.0;
    {
        for (int64_t D : {-4, -8, -20, -23, 5, 8, 40, 60, -163, 997, -1003, 1234 * 4 + 1}) {
            if (!is_fundamental_discriminant(D)) continue;
            QuadraticField K(D);
            double N = 10000.0;
            double approx = smoothed_L(D, N);
            double exact;
            if (D < 0) {
                int w = (D == -3) ? 6 : (D == -4) ? 4 : 2;
                exact = 2 * M_PI * (double)K.class_number() /
                        (w * std::sqrt((double)-D));
            } else {
                exact = 2.0 * (double)K.class_number() * K.regulator() / std::sqrt((double)D);
            }
            double shape = std::pow((double)std::abs(D), 1.0 / 6.0) / std::sqrt(N);
            cal = std::max(cal, std::abs(approx - exact) / shape);
        }
        cal = std::max(cal, 1.0) * 2.0;  // conservative margin
    }

    ConstantEstimate out;
    out.T = T;
    double trunc_total = 0.0;
    double shape_max = 0.0;
    for (int sign = 0; sign < 2; ++sign) {
        auto ds = fundamental_discriminants(0, T, sign == 0 ? +1 : -1);
        std::vector<double> ell(ds.size());
        std::vector<double> errs(ds.size());
        size_t chunk = 256;
        size_t n_chunks = (ds.size() + chunk - 1) / chunk;
        run_chunks<int>(n_chunks, opt.workers, [&](size_t ci) {
            for (size_t i = ci * chunk; i < std::min(ds.size(), (ci + 1) * chunk); ++i) {
                int64_t D = ds[i];
                double N = std::max(10000.0, (double)std::abs(D));
                double L1 = smoothed_L(D, N);
                ValueErr L2i = inverse_L2(D);
                ell[i] = L1 * L2i.value;
                errs[i] = cal * std::pow((double)std::abs(D), 1.0 / 6.0) / std::sqrt(N) *
                              std::abs(L2i.value) +
                          std::abs(L1) * L2i.err;
            }
            return 0;
        });
        // exact piecewise integral of (S(t) - kappa t)/t^2 from 1 to T
        double S = 0.0, integral = 0.0, prev_t = 1.0;
        for (size_t i = 0; i < ds.size(); ++i) {
            double t = (double)std::abs(ds[i]);
            if (t > prev_t) {
                integral += S * (1.0 / prev_t - 1.0 / t) - kappa * std::log(t / prev_t);
                prev_t = t;
            }
            S += ell[i];
            double E = S - kappa * t;
            if (t > 64) shape_max = std::max(shape_max, std::abs(E) / std::pow(t, 13.0 / 18.0));
            trunc_total += errs[i] * (1.0 / t - 1.0 / (double)T);
        }
        integral += S * (1.0 / prev_t - 1.0 / (double)T) -
                    kappa * std::log((double)T / prev_t);
        if (sign == 0)
            out.c_plus = integral;
        else
            out.c_minus = integral;
    }
    out.value = out.c_plus + 0.5 * out.c_minus;
    out.shape_bound = shape_max;
    out.tail_part = 2.0 * shape_max * (18.0 / 5.0) * std::pow((double)T, -5.0 / 18.0);
    out.trunc_part = trunc_total;
    out.uncertainty = out.tail_part + out.trunc_part;
    return out;
}

// ---------------------------------------------------------------------------
// Theorem 1.3 counts

QuadCountReport quad_count_q(int64_t X, const std::vector<int>& allowed) {
    QuadCountReport rep;
    auto pos = fundamental_discriminants(0, X, +1);
    auto neg = fundamental_discriminants(0, X, -1);
    auto ok = [&](int64_t D) {
        if (allowed.empty()) return true;
        int64_t d0 = D;
        if (((d0 % 4) + 4) % 4 != 1) d0 /= 4;
        int cls = q2_class_of_int(d0);
        return std::find(allowed.begin(), allowed.end(), cls) != allowed.end();
    };
    mpz_class count = 0;
    for (int64_t D : pos)
        if (ok(D)) count += 1;
    for (int64_t D : neg)
        if (ok(D)) count += 1;
    rep.exact = count;
    // prediction: X / zeta(2) * (2/3) * mass(allowed classes at 2)
    mpq_class mass(0);
    for (int c = 0; c < 8; ++c) {
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), c) == allowed.end())
            continue;
        mass += mpq_class(mpz_class(1), mpz_class(2) * (mpz_class(1) << q2_disc_exponent(c)));
    }
    mass.canonicalize();
    const double zeta2 = M_PI * M_PI / 6.0;
    rep.predicted = (double)X / zeta2 * mpq_to_double(mpq_class(2, 3) * mass);
    rep.predicted_err = 0;
    return rep;
}

mpq_class quadcount_local_factor_complete(const QuadraticField& K, uint64_t p) {
    SplitType st = K.split_type(p);
    mpz_class np;
    if (p == 2) {
        int dm8 = (int)(((K.D() % 8) + 8) % 8);
        np = (dm8 == 5) ? 4 : 2;
    } else {
        np = (st == SplitType::inert) ? mpz_class(p) * p : mpz_class(p);
    }
    mpq_class factor = mpq_class(np, np + 1) * relative_quadratic_mass(K, p);
    factor.canonicalize();
    // split p: two primes, identical factors
    if (st == SplitType::split) factor = factor * factor;
    return factor;
}

QuadCountReport quad_count_over(int64_t D, int64_t X, const CensusOptions& opt) {
    (void)opt;
    QuadraticField K(D);
    QuadCountReport rep;
    mpz_class count = 0;
    EnumOptions eo;
    eo.d4_only = false;
    eo.dedup = false;
    enumerate_extensions(K, X, eo, [&](const D4Record&) { count += 1; });
    rep.exact = count;
    // residue of zeta_K at 1 by the class number formula
    double res;
    if (D < 0) {
        int w = (D == -3) ? 6 : (D == -4) ? 4 : 2;
        res = 2 * M_PI * (double)K.class_number() / (w * std::sqrt((double)-D));
    } else {
        res = 4.0 * (double)K.class_number() * K.regulator() / (2.0 * std::sqrt((double)D));
    }
    // zeta_K(2) by an Euler product over rational primes
    double zk2 = 1.0;
    const auto& ps = primes_up_to(100000);
    for (uint64_t p : ps) {
        double f = 1.0 - 1.0 / ((double)p * p);
        switch (K.split_type(p)) {
            case SplitType::split: zk2 /= f * f; break;
            case SplitType::inert: zk2 /= (1.0 - 1.0 / ((double)p * p * (double)p * p)); break;
            case SplitType::ramified: zk2 /= f; break;
        }
    }
    double mu_inf = (D > 0) ? 1.0 : 0.5;
    rep.predicted = (double)X * res / zk2 * mu_inf;
    rep.predicted_err = rep.predicted * 4.0 * prime_square_tail_bound(100000);
    return rep;
}

std::string QuadCountReport::to_json() const {
    nlohmann::json j;
    j["exact"] = exact.get_str();
    j["predicted"] = predicted;
    j["predicted_err"] = predicted_err;
    return j.dump();
}

// ---------------------------------------------------------------------------
// character sum verifier

CharSumReport verify_char_sum(uint64_t n, uint64_t d, std::optional<int> mod8, int64_t X) {
    CharSumReport rep;
    rep.n = (int64_t)n;
    rep.d = (int64_t)d;
    rep.mod8 = mod8;
    rep.x = X;
    double sum = 0.0;
    int64_t counted = 0;
    for (int64_t D : fundamental_discriminants(X, 2 * X, +1)) {
        if (d > 1 && std::gcd((uint64_t)D, d) != 1) continue;
        if (mod8 && (int)(((D % 8) + 8) % 8) != *mod8) continue;
        sum += kronecker(D, n);
        ++counted;
    }
    (void)counted;
    rep.observed = sum;
    // main term per the square / non-square dichotomy
    SquareDecomposition sd = square_decompose((int64_t)n);
    bool square = (sd.core == 1);
    const double zeta2 = M_PI * M_PI / 6.0;
    if (square) {
        double mass;
        if (!mod8) {
            mass = 1.5;
        } else {
            switch (*mod8) {
                case 1: mass = 0.5; break;
                case 5: mass = 0.5; break;
                case 4: mass = 0.25; break;
                case 0: mass = 0.25; break;
                default: mass = 0.0;
            }
        }
        double psi = 1.0;
        Factorization f = factorize(n * d);
        for (auto& [p, e] : f.factors) {
            (void)e;
            psi *= (double)p / ((double)p + 1);
        }
        rep.main_term = (double)X * mass / (3.0 * zeta2) * psi;
    } else {
        rep.main_term = 0.0;
    }
    double denom = std::sqrt((double)X) * std::pow((double)n, 0.25) *
                   std::pow((double)std::max<uint64_t>(d, 1), 0.25);
    rep.normalized_residual = (rep.observed - rep.main_term) / denom;
    return rep;
}

std::string CharSumReport::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["d"] = d;
    if (mod8) j["mod8"] = *mod8;
    j["x"] = x;
    j["observed"] = observed;
    j["main_term"] = main_term;
    j["normalized_residual"] = normalized_residual;
    return j.dump();
}

// ---------------------------------------------------------------------------
// fit report

FitReport fit_report(const std::vector<int64_t>& grid, const GlobalSpec& spec, int64_t c_T,
                     const CensusOptions& opt) {
    FitReport out;
    out.c = estimate_c(c_T, opt);
    AsymptoticTerms terms = main_and_secondary(spec);
    for (int64_t x : grid) {
        CensusReport rep = count_hyperbola(x, spec, opt);
        FitRow row;
        row.x = x;
        row.n_exact = rep.n_exact;
        row.main = terms.main_at((double)x);
        row.secondary_no_c = terms.secondary_at((double)x);
        row.c_times_x = out.c.value * (double)x;
        double n = mpq_to_double(mpq_class(row.n_exact));
        row.residual = n - row.main - row.secondary_no_c;
        row.residual2 = row.residual - row.c_times_x;
        out.rows.push_back(row);
    }
    // least squares of log|residual2| on log x
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (auto& r : out.rows) {
        if (std::abs(r.residual2) < 1) continue;
        double lx = std::log((double)r.x), ly = std::log(std::abs(r.residual2));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
    }
    if (m >= 2) out.exponent_fit = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    if (!out.rows.empty()) {
        auto& last = out.rows.back();
        double n = mpq_to_double(mpq_class(last.n_exact));
        out.ratio_main_last = n / last.main;
        out.ratio_full_last = n / (last.main + last.secondary_no_c + last.c_times_x);
    }
    return out;
}

std::string FitReport::to_json() const {
    nlohmann::json j;
    j["c"] = {{"value", c.value},
              {"uncertainty", c.uncertainty},
              {"c_plus", c.c_plus},
              {"c_minus", c.c_minus},
              {"T", c.T}};
    j["exponent_fit"] = exponent_fit;
    j["rows"] = nlohmann::json::array();
    for (auto& r : rows) {
        j["rows"].push_back({{"x", r.x},
                             {"n_exact", r.n_exact.get_str()},
                             {"main", r.main},
                             {"secondary_no_c", r.secondary_no_c},
                             {"c_times_x", r.c_times_x},
                             {"residual2", r.residual2}});
    }
    return j.dump();
}

std::string FitReport::to_csv() const {
    std::string out = "x,n_exact,main,secondary_no_c,c_times_x,residual,residual2\n";
    char buf[512];
    for (auto& r : rows) {
        snprintf(buf, sizeof(buf), "%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", (long long)r.x,
                 r.n_exact.get_str().c_str(), r.main, r.secondary_no_c, r.c_times_x, r.residual,
                 r.residual2);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dirichlet series via ray-class characters, base field Q

PhiSeriesCheck phi2_series_q(double s, int64_t d_max) {
    PhiSeriesCheck out;
    // direct side
    for (int sign : {+1, -1}) {
        for (int64_t D : fundamental_discriminants(0, d_max, sign)) {
            out.lhs += std::pow((double)std::abs(D), -s);
        }
    }
    out.lhs_tail = (6.0 / (M_PI * M_PI)) * 2.0 * std::pow((double)d_max, 1.0 - s) / (s - 1.0) * 2.0;
    // character side: the quadratic ray-class characters mod (8) are the
    // trivial one and chi_8; beta runs over (Z/8)^x, c over {1, 2}
    auto Lval = [&](int which) {
        // which = 0: zeta(s)(1 - 2^{-s}); which = 1: L(s, chi_8)
        double sum = 0;
        for (int64_t n = 1; n < 2000000; ++n) {
            if (n % 2 == 0) continue;
            if (which == 0)
                sum += std::pow((double)n, -s);
            else
                sum += (double)kronecker(8, (uint64_t)n) * std::pow((double)n, -s);
        }
        return sum;
    };
    double L0 = Lval(0), L1 = Lval(1);
    double zeta2s = 0;
    for (int64_t n = 1; n < 2000000; ++n) zeta2s += std::pow((double)n, -2 * s);
    double total = 0;
    for (int c = 0; c < 2; ++c) {
        for (int beta : {1, 3, 5, 7}) {
            int64_t rep = (c == 1) ? 2 * beta : beta;
            int cls = q2_class_of_int(rep);
            double d2 = std::pow(2.0, (double)q2_disc_exponent(cls));
            // chi evaluated at the ray class of (beta^{-1}); chi_8(beta^{-1}) =
            // chi_8(beta)
            double term = std::pow(d2, -s) * (L0 + (double)kronecker(8, (uint64_t)beta) * L1);
            total += term;
        }
    }
    out.rhs = -1.0 + 0.5 / (zeta2s * (1.0 - std::pow(2.0, -2 * s))) * total;
    out.rhs_tail = 4.0 * std::pow(2.0e6, 1.0 - s) / (s - 1.0);
    return out;
}

}  // namespace d4c
