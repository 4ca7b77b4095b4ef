#include "d4census/quadfield.hpp"

#include <algorithm>
#include <numeric>
#include <cassert>
#include <cmath>
#include <sstream>

namespace d4c {

namespace {

mpz_class mod_floor(const mpz_class& x, const mpz_class& m) {
    mpz_class r = x % m;
    if (r < 0) r += m;
    return r;
}

struct FormHash {
    size_t operator()(const Form& f) const {
        uint64_t h = 0x9e3779b97f4a7c15ull;
        for (int64_t v : {f.a, f.b, f.c}) {
            h ^= (uint64_t)v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return (size_t)h;
    }
};

int64_t squarefree_radicand(int64_t D) {
    int64_t r = ((D % 4) + 4) % 4;
    return r == 1 ? D : D / 4;
}

// normalized tie rules for definite reduced forms
void normalize_ties(Form& f) {
    if ((f.b < 0) && (-f.b == f.a || f.a == f.c)) f.b = -f.b;
}

// rho step on a reduced real-form state (a > 0, b in the reduced window)
struct RhoStep {
    int64_t a, b;
};

RhoStep real_rho(int64_t D, int64_t sq, int64_t a, int64_t b, QElem* gamma, int64_t d0, int s) {
    __int128 bb = (__int128)b * b;
    int64_t c = (int64_t)(((__int128)D - bb) / (4 * a));  // positive for reduced states
    if (gamma) {
        QElem step(-b, -s, 2 * a, d0);
        *gamma = *gamma * step;
    }
    int64_t a2 = c;
    int64_t lo = sq + 1 - 2 * a2;
    int64_t nb = -b;
    int64_t k = (nb - lo) % (2 * a2);
    if (k < 0) k += 2 * a2;
    return {a2, lo + k};
}

}  // namespace

// ---------------------------------------------------------------------------
// QElem

QElem::QElem(mpz_class x_, mpz_class y_, mpz_class z_, int64_t d0_)
    : x(std::move(x_)), y(std::move(y_)), z(std::move(z_)), d0(d0_) {
    reduce();
}

void QElem::reduce() {
    if (z == 0) throw input_error("QElem: zero denominator");
    if (z < 0) {
        z = -z;
        x = -x;
        y = -y;
    }
    mpz_class g = gcd(gcd(x, y), z);
    if (g > 1) {
        x /= g;
        y /= g;
        z /= g;
    }
}

QElem QElem::operator+(const QElem& o) const {
    return QElem(x * o.z + o.x * z, y * o.z + o.y * z, z * o.z, d0);
}

QElem QElem::operator-(const QElem& o) const {
    return QElem(x * o.z - o.x * z, y * o.z - o.y * z, z * o.z, d0);
}

QElem QElem::operator*(const QElem& o) const {
    return QElem(x * o.x + mpz_class(d0) * y * o.y, x * o.y + y * o.x, z * o.z, d0);
}

QElem QElem::operator-() const { return QElem(-x, -y, z, d0); }

QElem QElem::conj() const { return QElem(x, -y, z, d0); }

QElem QElem::inverse() const {
    mpz_class n = x * x - mpz_class(d0) * y * y;
    if (n == 0) throw input_error("QElem: inverse of zero");
    return QElem(x * z, -y * z, n, d0);
}

mpq_class QElem::norm() const {
    mpq_class n(x * x - mpz_class(d0) * y * y, z * z);
    n.canonicalize();
    return n;
}

mpq_class QElem::trace() const {
    mpq_class t(2 * x, z);
    t.canonicalize();
    return t;
}

int QElem::sign_emb1() const {
    if (y == 0) return sgn(x);
    if (x == 0) return sgn(y);
    if (x > 0 && y > 0) return 1;
    if (x < 0 && y < 0) return -1;
    mpz_class lhs = x * x, rhs = y * y * d0;
    int big = (lhs > rhs) ? 1 : -1;
    return big > 0 ? sgn(x) : sgn(y);
}

int QElem::sign_emb2() const { return conj().sign_emb1(); }

bool QElem::is_integral() const {
    if (z == 1) return true;
    if (z == 2) {
        int64_t r = ((d0 % 4) + 4) % 4;
        return r == 1 && mod_floor(x - y, 2) == 0;
    }
    return false;
}

std::string QElem::str() const {
    std::ostringstream os;
    os << "(" << x.get_str() << (y >= 0 ? "+" : "-") << mpz_class(abs(y)).get_str() << "*sqrt("
       << d0 << "))/" << z.get_str();
    return os.str();
}

std::optional<QElem> sqrt_in_field(const QElem& beta) {
    if (beta.is_zero()) return QElem(0, 0, 1, beta.d0);
    mpq_class X(beta.x, beta.z), Y(beta.y, beta.z);
    X.canonicalize();
    Y.canonicalize();
    auto rat_sqrt = [](const mpq_class& q) -> std::optional<mpq_class> {
        if (q < 0) return std::nullopt;
        mpz_class num = q.get_num(), den = q.get_den();
        mpz_class rn = sqrt(num), rd = sqrt(den);
        if (rn * rn != num || rd * rd != den) return std::nullopt;
        return mpq_class(rn, rd);
    };
    if (Y == 0) {
        if (auto u = rat_sqrt(X)) return QElem(u->get_num(), 0, u->get_den(), beta.d0);
        mpq_class xd = X / beta.d0;
        xd.canonicalize();
        if (auto v = rat_sqrt(xd)) return QElem(0, v->get_num(), v->get_den(), beta.d0);
        return std::nullopt;
    }
    // (u + v sqrt d)^2 = beta: t = u^2 solves t^2 - X t + d (Y/2)^2 = 0
    mpq_class disc = X * X - mpq_class(beta.d0) * Y * Y;
    auto sd = rat_sqrt(disc);
    if (!sd) return std::nullopt;
    for (int pm = 0; pm < 2; ++pm) {
        mpq_class t = (X + (pm ? *sd : -*sd)) / 2;
        auto u = rat_sqrt(t);
        if (!u || *u == 0) continue;
        mpq_class v = Y / (2 * (*u));
        mpq_class uu = *u, vv = v;
        if (uu * uu + mpq_class(beta.d0) * vv * vv == X && 2 * uu * vv == Y) {
            mpz_class den = lcm(uu.get_den(), vv.get_den());
            return QElem(uu.get_num() * (den / uu.get_den()), vv.get_num() * (den / vv.get_den()),
                         den, beta.d0);
        }
    }
    return std::nullopt;
}

std::string QIdeal::str() const {
    std::ostringstream os;
    os << m.get_str() << "*[" << a.get_str() << ", " << t.get_str() << "+w]";
    return os.str();
}

// ---------------------------------------------------------------------------
// field construction

QuadraticField::QuadraticField(int64_t D) : D_(D) {
    if (!is_fundamental_discriminant(D)) throw input_error("QuadraticField: D not fundamental");
    if (D > 100000000 || D < -100000000) throw input_error("QuadraticField: |D| exceeds cap");
    d0_ = squarefree_radicand(D);
    w_ = (D == -3) ? 6 : (D == -4) ? 4 : 2;
    eps_ = QElem(1, 0, 1, d0_);
    build_class_group();
    build_unit();
    build_genus();
    build_selmer();
}

QElem QuadraticField::theta() const {
    if (((D_ % 4) + 4) % 4 == 1) return QElem(1, 1, 2, d0_);
    return QElem(0, 1, 1, d0_);
}

QElem QuadraticField::omega() const {
    if (((D_ % 4) + 4) % 4 == 1) return QElem(D_, 1, 2, d0_);
    return QElem(D_ / 2, 1, 1, d0_);
}

QElem QuadraticField::elem(const mpz_class& u, const mpz_class& v) const {
    if (((D_ % 4) + 4) % 4 == 1) return QElem(2 * u + v * D_, v, 2, d0_);
    return QElem(u + v * (D_ / 2), v, 1, d0_);
}

std::pair<mpq_class, mpq_class> QuadraticField::omega_coords(const QElem& e) const {
    int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
    mpq_class v(2 * e.y, e.z * s);
    v.canonicalize();
    mpq_class u = mpq_class(e.x, e.z) - mpq_class(D_) * mpq_class(e.y, e.z * s);
    u.canonicalize();
    return {u, v};
}

// ---------------------------------------------------------------------------
// ideals and forms

QIdeal QuadraticField::unit_ideal() const {
    QIdeal I;
    I.m = 1;
    I.a = 1;
    I.t = 0;
    return I;
}

QIdeal QuadraticField::ideal_from_form(Form f) const {
    QIdeal I;
    I.m = 1;
    I.a = std::abs(f.a);
    mpz_class num = -(mpz_class(f.b) + D_);
    if (mod_floor(num, 2) != 0) throw input_error("ideal_from_form: parity");
    I.t = mod_floor(num / 2, I.a);
    return I;
}

QIdeal QuadraticField::conj_ideal(const QIdeal& I) const {
    QIdeal J;
    J.m = I.m;
    J.a = I.a;
    J.t = I.a == 1 ? 0 : mod_floor(-(I.t + D_), I.a);
    return J;
}

QIdeal QuadraticField::mul(const QIdeal& I, const QIdeal& J) const {
    mpz_class n0 = (mpz_class(D_) * D_ - D_) / 4;  // w^2 = D w - n0
    struct Row {
        mpz_class x, y;
    };
    std::vector<Row> rows = {
        {I.a * J.a, 0},
        {I.a * J.t, I.a},
        {J.a * I.t, J.a},
        {I.t * J.t - n0, I.t + J.t + D_},
    };
    mpz_class G = 0, S = 0;
    for (auto& r : rows) {
        if (r.y == 0) continue;
        if (G == 0) {
            G = r.y;
            S = r.x;
        } else {
            mpz_class g, u, v;
            mpz_gcdext(g.get_mpz_t(), u.get_mpz_t(), v.get_mpz_t(), G.get_mpz_t(),
                       r.y.get_mpz_t());
            S = u * S + v * r.x;
            G = g;
        }
    }
    if (G < 0) {
        G = -G;
        S = -S;
    }
    if (G == 0) throw input_error("ideal mul: degenerate module");
    mpz_class A = 0;
    for (auto& r : rows) A = gcd(A, r.x - (r.y / G) * S);
    if (A < 0) A = -A;
    if (A == 0) throw input_error("ideal mul: degenerate module");
    if (A % G != 0 || S % G != 0) throw input_error("ideal mul: not an ideal");
    QIdeal R;
    R.m = I.m * J.m * G;
    R.a = A / G;
    R.t = mod_floor(S / G, R.a);
    return R;
}

QIdeal QuadraticField::principal_ideal(const QElem& g) const {
    if (g.is_zero()) throw input_error("principal_ideal: zero");
    if (!g.is_integral()) throw input_error("principal_ideal: element not integral");
    auto [u, v] = omega_coords(g);
    if (u.get_den() != 1 || v.get_den() != 1) throw input_error("principal_ideal: coords");
    mpz_class uu = u.get_num(), vv = v.get_num();
    mpz_class n0 = (mpz_class(D_) * D_ - D_) / 4;
    struct Row {
        mpz_class x, y;
    };
    std::vector<Row> rows = {{uu, vv}, {-vv * n0, uu + vv * D_}};
    mpz_class G = 0, S = 0;
    for (auto& r : rows) {
        if (r.y == 0) continue;
        if (G == 0) {
            G = r.y;
            S = r.x;
        } else {
            mpz_class g2, p, q;
            mpz_gcdext(g2.get_mpz_t(), p.get_mpz_t(), q.get_mpz_t(), G.get_mpz_t(),
                       r.y.get_mpz_t());
            S = p * S + q * r.x;
            G = g2;
        }
    }
    QIdeal I;
    if (G == 0) {
        I.m = abs(uu);
        I.a = 1;
        I.t = 0;
        return I;
    }
    if (G < 0) {
        G = -G;
        S = -S;
    }
    mpz_class A = 0;
    for (auto& r : rows) A = gcd(A, r.x - (r.y / G) * S);
    if (A < 0) A = -A;
    if (A % G != 0 || S % G != 0) throw input_error("principal_ideal: hnf");
    I.m = G;
    I.a = A / G;
    I.t = mod_floor(S / G, I.a);
    return I;
}

// ---------------------------------------------------------------------------
// reduction

QuadraticField::WalkResult QuadraticField::reduce_ideal(const QIdeal& I) const {
    mpz_class a = I.a;
    mpz_class b = -(2 * I.t + D_);
    QElem gamma(1, 0, 1, d0_);
    int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
    int64_t sq = (D_ > 0) ? (int64_t)isqrt64((uint64_t)D_) : 0;
    auto normalize = [&]() {
        mpz_class lo = (D_ < 0) ? mpz_class(-a + 1) : mpz_class(sq + 1 - 2 * a);
        mpz_class q;
        mpz_class num = b - lo;
        mpz_class den = 2 * a;
        mpz_fdiv_q(q.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
        b -= 2 * q * a;
    };
    auto is_reduced = [&]() -> bool {
        if (D_ < 0) {
            mpz_class c = (b * b - D_) / (4 * a);
            return abs(b) <= a && a <= c;
        }
        return b >= 1 && b <= sq && b + 2 * a > sq && 2 * a - b <= sq;
    };
    int guard = 0;
    normalize();
    while (!is_reduced()) {
        if (++guard > 2000000) throw input_error("reduction walk exceeded step cap");
        mpz_class c = (b * b - D_) / (4 * a);
        QElem step(-b, -s, 2 * a, d0_);
        gamma = gamma * step;
        a = abs(c);
        b = -b;
        normalize();
    }
    Form f;
    if (!a.fits_slong_p() || !b.fits_slong_p()) throw input_error("reduce: overflow");
    f.a = a.get_si();
    f.b = b.get_si();
    f.c = (int64_t)mpz_class((b * b - D_) / (4 * a)).get_si();
    if (D_ < 0) normalize_ties(f);
    return {f, gamma};
}

Form QuadraticField::canonical_cycle_key(Form reduced) const {
    if (D_ < 0) {
        Form f = reduced;
        normalize_ties(f);
        return f;
    }
    int64_t sq = (int64_t)isqrt64((uint64_t)D_);
    int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
    Form best = reduced;
    int64_t a = reduced.a, b = reduced.b;
    int guard = 0;
    while (true) {
        RhoStep st = real_rho(D_, sq, a, b, nullptr, d0_, s);
        a = st.a;
        b = st.b;
        Form f{a, b, (int64_t)(((__int128)b * b - D_) / (4 * a))};
        if (f < best) best = f;
        if (a == reduced.a && b == reduced.b) break;
        if (++guard > 2000000) throw input_error("cycle walk exceeded cap");
    }
    return best;
}

QElem QuadraticField::cycle_prefix_generator(Form from, Form to) const {
    QElem gamma(1, 0, 1, d0_);
    if (from == to) return gamma;
    if (D_ < 0) throw input_error("cycle walk only for real fields");
    int64_t sq = (int64_t)isqrt64((uint64_t)D_);
    int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
    int64_t a = from.a, b = from.b;
    int guard = 0;
    while (true) {
        RhoStep st = real_rho(D_, sq, a, b, &gamma, d0_, s);
        a = st.a;
        b = st.b;
        if (a == to.a && b == to.b) return gamma;
        if (a == from.a && b == from.b) throw input_error("cycle walk: target not in cycle");
        if (++guard > 2000000) throw input_error("cycle walk exceeded cap");
    }
}

void QuadraticField::build_class_group() {
    std::vector<Form> reduced;
    if (D_ < 0) {
        int64_t limit = (int64_t)isqrt64((uint64_t)((-D_) / 3));
        for (int64_t a = 1; a <= std::max<int64_t>(limit, 1); ++a) {
            for (int64_t b = -a + 1; b <= a; ++b) {
                __int128 num = (__int128)b * b - D_;
                if (num % (4 * a) != 0) continue;
                int64_t c = (int64_t)(num / (4 * a));
                if (c < a) continue;
                if (a == c && b < 0) continue;
                reduced.push_back({a, b, c});
            }
        }
        h_ = reduced.size();
        class_keys_ = reduced;
        key_to_class_.clear();
        for (size_t i = 0; i < reduced.size(); ++i)
            key_to_class_[FormHash{}(reduced[i])] = i;
        principal_key_ = reduce_ideal(unit_ideal()).reduced;
        h_narrow_ = h_;
    } else {
        int64_t sq = (int64_t)isqrt64((uint64_t)D_);
        int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
        for (int64_t a = 1; a <= sq; ++a) {
            int64_t lo = std::max<int64_t>(sq + 1 - 2 * a, 1);
            for (int64_t b = lo; b <= sq; ++b) {
                if ((b & 1) != (D_ & 1)) continue;
                if (2 * a - b > sq) continue;
                if ((((__int128)b * b - D_) % (4 * a)) != 0) continue;
                reduced.push_back({a, b, (int64_t)(((__int128)b * b - D_) / (4 * a))});
            }
        }
        std::unordered_map<Form, int, FormHash> cycle_of;
        std::vector<Form> cycle_min;
        for (auto& f : reduced) cycle_of[f] = -1;
        int ncyc = 0;
        for (auto& f : reduced) {
            if (cycle_of[f] >= 0) continue;
            Form best = f;
            std::vector<Form> members{f};
            int64_t a = f.a, b = f.b;
            int guard = 0;
            while (true) {
                RhoStep st = real_rho(D_, sq, a, b, nullptr, d0_, s);
                a = st.a;
                b = st.b;
                if (a == f.a && b == f.b) break;
                Form g{a, b, (int64_t)(((__int128)b * b - D_) / (4 * a))};
                members.push_back(g);
                if (g < best) best = g;
                if (++guard > 2000000) throw input_error("class group: cycle cap");
            }
            for (auto& g : members) cycle_of[g] = ncyc;
            cycle_min.push_back(best);
            ++ncyc;
        }
        h_ = (uint64_t)ncyc;
        class_keys_ = cycle_min;
        key_to_class_.clear();
        for (auto& [f, ci] : cycle_of) key_to_class_[FormHash{}(f)] = (size_t)ci;
        Form f1 = reduce_ideal(unit_ideal()).reduced;
        principal_key_ = class_keys_[key_to_class_.at(FormHash{}(f1))];
        h_narrow_ = 0;  // set after the unit computation
    }
    // odd-norm representatives per class
    class_reps_.clear();
    class_reps_.resize(class_keys_.size());
    for (size_t i = 0; i < class_keys_.size(); ++i) {
        Form f = class_keys_[i];
        bool found = false;
        QIdeal rep;
        if (D_ > 0) {
            int64_t sq = (int64_t)isqrt64((uint64_t)D_);
            int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
            int64_t a = f.a, b = f.b;
            int guard = 0;
            while (true) {
                if (a % 2 == 1) {
                    Form g{a, b, (int64_t)(((__int128)b * b - D_) / (4 * a))};
                    rep = ideal_from_form(g);
                    found = true;
                    break;
                }
                RhoStep st = real_rho(D_, sq, a, b, nullptr, d0_, s);
                a = st.a;
                b = st.b;
                if (a == f.a && b == f.b) break;
                if (++guard > 2000000) throw input_error("odd rep: cycle cap");
            }
        } else if (f.a % 2 == 1) {
            rep = ideal_from_form(f);
            found = true;
        }
        if (!found) rep = ideal_of_norm_in_class(f, true);
        class_reps_[i] = rep;
    }
    // square-root table
    sqrt_class_.assign(class_keys_.size(), (size_t)-1);
    for (size_t i = 0; i < class_keys_.size(); ++i) {
        QIdeal sq2 = mul(class_reps_[i], class_reps_[i]);
        Form kk = reduce_ideal(sq2).reduced;
        size_t j = key_to_class_.at(FormHash{}(kk));
        sqrt_class_[j] = i;
    }
}

int64_t represented_value_coprime(Form f, int64_t disc, int64_t modulus, int64_t* px,
                                  int64_t* py) {
    (void)disc;
    for (int64_t R = 2; R <= 4096; R *= 2) {
        for (int64_t x = -R; x <= R; ++x) {
            for (int64_t y = -R; y <= R; ++y) {
                if (std::gcd(std::abs(x), std::abs(y)) != 1) continue;
                __int128 v = (__int128)f.a * x * x + (__int128)f.b * x * y + (__int128)f.c * y * y;
                if (v <= 0 || v > INT64_MAX) continue;
                int64_t vv = (int64_t)v;
                if (std::gcd(vv, modulus) != 1) continue;
                if (px) *px = x;
                if (py) *py = y;
                return vv;
            }
        }
    }
    throw input_error("represented_value_coprime: scan cap exceeded");
}

QIdeal QuadraticField::ideal_of_norm_in_class(Form f, bool odd_only) const {
    int64_t x, y;
    int64_t modulus = odd_only ? 2 : 1;
    int64_t v = represented_value_coprime(f, D_, modulus, &x, &y);
    mpz_class g, ww, uu;
    mpz_gcdext(g.get_mpz_t(), ww.get_mpz_t(), uu.get_mpz_t(), mpz_class(x).get_mpz_t(),
               mpz_class(y).get_mpz_t());
    if (g != 1) throw input_error("ideal_of_norm_in_class: not primitive");
    // matrix [[x, -uu],[y, ww]] has determinant x*ww + y*uu = 1
    mpz_class u = -uu, w = ww;
    mpz_class bp = 2 * mpz_class(f.a) * x * u + mpz_class(f.b) * (x * w + y * u) +
                   2 * mpz_class(f.c) * y * w;
    if (mod_floor(bp + D_, 2) != 0) throw input_error("ideal_of_norm_in_class: parity");
    QIdeal I;
    I.m = 1;
    I.a = v;
    I.t = mod_floor(-(bp + D_) / 2, I.a);
    return I;
}

Form QuadraticField::class_key(const QIdeal& I) const {
    Form red = reduce_ideal(I).reduced;
    auto it = key_to_class_.find(FormHash{}(red));
    if (it == key_to_class_.end()) throw input_error("class_key: unknown reduced form");
    return class_keys_[it->second];
}

std::vector<QIdeal> QuadraticField::class_representatives() const { return class_reps_; }

bool QuadraticField::is_principal(const QIdeal& I) const {
    Form red = reduce_ideal(I).reduced;
    size_t idx = key_to_class_.at(FormHash{}(red));
    return class_keys_[idx] == principal_key_;
}

std::optional<QIdeal> QuadraticField::sqrt_of_inverse_class(const QIdeal& I) const {
    Form key = reduce_ideal(conj_ideal(I)).reduced;
    size_t idx = key_to_class_.at(FormHash{}(key));
    size_t root = sqrt_class_[idx];
    if (root == (size_t)-1) return std::nullopt;
    return class_reps_[root];
}

std::optional<QElem> QuadraticField::principal_generator(const QIdeal& I) const {
    WalkResult w = reduce_ideal(I);
    auto it = key_to_class_.find(FormHash{}(w.reduced));
    if (it == key_to_class_.end()) throw input_error("principal_generator: unknown form");
    size_t idx = it->second;
    if (!(class_keys_[idx] == principal_key_)) return std::nullopt;
    QElem gamma = w.gamma;
    Form unit_red = reduce_ideal(unit_ideal()).reduced;
    if (D_ > 0) {
        if (!(w.reduced == unit_red)) gamma = gamma * cycle_prefix_generator(w.reduced, unit_red);
    } else {
        if (!(w.reduced == unit_red)) return std::nullopt;
    }
    QElem g = gamma.inverse() * QElem(I.m, 0, 1, d0_);
    mpq_class n = g.norm();
    if (abs(n.get_num()) != I.norm() * n.get_den())
        throw input_error("principal_generator: norm mismatch");
    return canonicalize_generator(g);
}

// ---------------------------------------------------------------------------
// units

void QuadraticField::build_unit() {
    if (D_ < 0) {
        unit_norm_ = 1;
        regulator_ = 0;
        h_narrow_ = h_;
        return;
    }
    int64_t sq = (int64_t)isqrt64((uint64_t)D_);
    int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
    Form start = reduce_ideal(unit_ideal()).reduced;
    QElem gamma(1, 0, 1, d0_);
    int64_t a = start.a, b = start.b;
    uint64_t steps = 0;
    do {
        RhoStep st = real_rho(D_, sq, a, b, &gamma, d0_, s);
        a = st.a;
        b = st.b;
        if (++steps > 1000000) throw input_error("fundamental unit: period cap exceeded");
    } while (!(a == start.a && b == start.b));
    period_ = steps;
    mpq_class n = gamma.norm();
    if (abs(n) != 1) throw input_error("fundamental unit: norm not a unit");
    unit_norm_ = (n > 0) ? 1 : -1;
    QElem e = gamma;
    if (e.sign_emb1() < 0) e = -e;
    // |e| > |conj e| iff x and y have the same sign (e > 0 here)
    if (!(sgn(e.x) * sgn(e.y) > 0)) e = e.inverse();
    if (e.sign_emb1() < 0) e = -e;
    eps_ = e;
    // regulator = log(emb1(eps))
    signed long ex1, ex2;
    double m1 = mpz_get_d_2exp(&ex1, e.x.get_mpz_t());
    double m2 = mpz_get_d_2exp(&ex2, e.y.get_mpz_t());
    double l1 = (e.x == 0) ? -1e300 : std::log(std::abs(m1)) + (double)ex1 * std::log(2.0);
    double l2 = (e.y == 0) ? -1e300
                           : std::log(std::abs(m2)) + (double)ex2 * std::log(2.0) +
                                 0.5 * std::log((double)d0_);
    double hi = std::max(l1, l2), lodiff = -std::abs(l1 - l2);
    regulator_ = hi + std::log1p(std::exp(lodiff)) - std::log(e.z.get_d());
    h_narrow_ = (unit_norm_ == -1) ? h_ : 2 * h_;
}

QElem QuadraticField::canonicalize_generator(const QElem& g) const {
    std::vector<QElem> cands;
    if (D_ < 0) {
        QElem t = theta();
        if (D_ == -4) {
            QElem i = t;  // sqrt(-1)
            QElem cur = g;
            for (int k = 0; k < 4; ++k) {
                cands.push_back(cur);
                cur = cur * i;
            }
        } else if (D_ == -3) {
            QElem z6 = QElem(1, 1, 2, d0_);  // (1+sqrt(-3))/2
            QElem cur = g;
            for (int k = 0; k < 6; ++k) {
                cands.push_back(cur);
                cur = cur * z6;
            }
        } else {
            cands = {g, -g};
        }
    } else {
        // balance |log emb1| against the norm, then fix sign
        QElem cur = g;
        mpq_class n = abs(cur.norm());
        double logn = 0.5 * (std::log(std::abs(n.get_num().get_d()) + 1e-300) -
                             std::log(n.get_den().get_d()));
        auto log_emb = [&](const QElem& v) {
            signed long e1, e2;
            double a1 = mpz_get_d_2exp(&e1, v.x.get_mpz_t());
            double a2 = mpz_get_d_2exp(&e2, v.y.get_mpz_t());
            double l1 = (v.x == 0) ? -1e300 : std::log(std::abs(a1)) + e1 * std::log(2.0);
            double l2 = (v.y == 0) ? -1e300
                                   : std::log(std::abs(a2)) + e2 * std::log(2.0) +
                                         0.5 * std::log((double)d0_);
            // |x| + |y|sqrt(d) upper/lower bounds suffice for balancing
            double hi = std::max(l1, l2);
            return hi - std::log(v.z.get_d());
        };
        if (regulator_ > 1e-9) {
            double k = std::floor((log_emb(cur) - logn) / regulator_ + 0.5);
            int kk = (int)k;
            QElem epow(1, 0, 1, d0_);
            QElem base = (kk >= 0) ? eps_.inverse() : eps_;
            for (int i = 0; i < std::abs(kk); ++i) epow = epow * base;
            cur = cur * epow;
        }
        cands = {cur, -cur};
    }
    // deterministic choice: positive first coordinate wins, then the smallest
    // encoding
    auto better = [](const QElem& p, const QElem& q) {
        auto rank = [](const QElem& v) { return (v.x > 0) ? 0 : (v.x == 0 && v.y > 0) ? 1 : 2; };
        if (rank(p) != rank(q)) return rank(p) < rank(q);
        if (p.z != q.z) return p.z < q.z;
        if (cmp(abs(p.y), abs(q.y)) != 0) return cmp(abs(p.y), abs(q.y)) < 0;
        if (cmp(abs(p.x), abs(q.x)) != 0) return cmp(abs(p.x), abs(q.x)) < 0;
        if (p.x != q.x) return p.x > q.x;
        return p.y > q.y;
    };
    QElem best = cands[0];
    for (auto& c : cands)
        if (better(c, best)) best = c;
    return best;
}

PrimeSplitting QuadraticField::split_prime(uint64_t p) const {
    PrimeSplitting out;
    out.type = split_type(p);
    if (out.type == SplitType::inert) {
        QIdeal I;
        I.m = p;
        I.a = 1;
        I.t = 0;
        out.prime = I;
        out.conj_prime = I;
        return out;
    }
    // find b with b^2 = D mod 4p, b = D mod 2
    int64_t b = -1;
    if (p == 2) {
        int64_t dm8 = ((D_ % 8) + 8) % 8;
        if (dm8 == 1) b = 1;
        else if (dm8 == 0) b = 0;
        else b = 2;  // D = 4 mod 8
    } else {
        if (D_ % (int64_t)p == 0) {
            // ramified odd: b = 0 if D even else p
            b = (D_ % 2 == 0) ? 0 : (int64_t)p;
        } else {
            // Tonelli-Shanks mod p
            int64_t dd = ((D_ % (int64_t)p) + (int64_t)p) % (int64_t)p;
            uint64_t r = 0;
            bool found = false;
            // p is odd and small enough that a direct scan is acceptable only
            // for tiny p; use Tonelli-Shanks
            auto powm = [&](uint64_t a, uint64_t e) {
                uint64_t res = 1;
                a %= p;
                while (e) {
                    if (e & 1) res = (uint64_t)((unsigned __int128)res * a % p);
                    a = (uint64_t)((unsigned __int128)a * a % p);
                    e >>= 1;
                }
                return res;
            };
            uint64_t a = (uint64_t)dd;
            if (p % 4 == 3) {
                r = powm(a, (p + 1) / 4);
                found = true;
            } else {
                // Tonelli-Shanks
                uint64_t q = p - 1;
                int ss = 0;
                while ((q & 1) == 0) q >>= 1, ++ss;
                uint64_t zq = 2;
                while (powm(zq, (p - 1) / 2) != p - 1) ++zq;
                uint64_t mm = ss, cc = powm(zq, q), tt = powm(a, q), rr = powm(a, (q + 1) / 2);
                while (tt != 1) {
                    uint64_t t2 = tt;
                    uint64_t i = 0;
                    while (t2 != 1) {
                        t2 = (uint64_t)((unsigned __int128)t2 * t2 % p);
                        ++i;
                        if (i == mm) throw input_error("tonelli: no root");
                    }
                    uint64_t bpow = cc;
                    for (uint64_t j = 0; j + i + 1 < mm; ++j)
                        bpow = (uint64_t)((unsigned __int128)bpow * bpow % p);
                    mm = i;
                    cc = (uint64_t)((unsigned __int128)bpow * bpow % p);
                    tt = (uint64_t)((unsigned __int128)tt * cc % p);
                    rr = (uint64_t)((unsigned __int128)rr * bpow % p);
                }
                r = rr;
                found = true;
            }
            if (!found) throw input_error("split_prime: no sqrt");
            b = (int64_t)r;
            // match parity of D (p odd, so adding p flips parity)
            if (((b % 2) + 2) % 2 != ((D_ % 2) + 2) % 2) b += (int64_t)p;
        }
    }
    QIdeal P;
    P.m = 1;
    P.a = p;
    if (mod_floor(mpz_class(b + D_), 2) != 0) throw input_error("split_prime: parity");
    P.t = mod_floor(mpz_class(-(b + D_)) / 2, P.a);
    out.prime = P;
    out.conj_prime = (out.type == SplitType::ramified) ? P : conj_ideal(P);
    return out;
}

SplitType QuadraticField::split_type(uint64_t p) const {
    int k = kronecker(D_, p);
    if (k == 1) return SplitType::split;
    if (k == -1) return SplitType::inert;
    return SplitType::ramified;
}

// ---------------------------------------------------------------------------
// genus characters

void QuadraticField::build_genus() {
    prime_discs_.clear();
    Factorization f = factorize((uint64_t)(D_ > 0 ? D_ : -D_));
    int64_t odd_part = 1;
    for (auto& [p, e] : f.factors) {
        if (p == 2) continue;
        int64_t ps = (p % 4 == 1) ? (int64_t)p : -(int64_t)p;
        prime_discs_.push_back(ps);
        odd_part *= ps;
    }
    int64_t two_part = D_ / odd_part;
    if (two_part != 1) {
        if (two_part != -4 && two_part != 8 && two_part != -8)
            throw input_error("genus: bad 2-part of discriminant");
        prime_discs_.push_back(two_part);
    }
    std::sort(prime_discs_.begin(), prime_discs_.end(),
              [](int64_t a, int64_t b) { return std::abs(a) < std::abs(b); });
    // negative-norm principal class vector (real fields with N(eps) = +1)
    z_vec_ = 0;
    if (D_ > 0 && unit_norm_ == 1) {
        bool found = false;
        for (int64_t R = 2; R <= 4096 && !found; R *= 2) {
            for (int64_t u = -R; u <= R && !found; ++u) {
                for (int64_t v = 1; v <= R && !found; ++v) {
                    __int128 n = (__int128)u * u - (__int128)d0_ * v * v;
                    if (n >= 0) continue;
                    int64_t an = (int64_t)(-n);
                    if (std::gcd(an, 2 * std::abs(D_)) != 1) continue;
                    uint64_t vec = 0;
                    for (size_t i = 0; i < prime_discs_.size(); ++i)
                        if (kronecker(prime_discs_[i], (uint64_t)an) == -1) vec |= (1ull << i);
                    z_vec_ = vec;
                    found = true;
                }
            }
        }
        if (!found) throw input_error("genus: no negative-norm element found");
    }
    int t = (int)prime_discs_.size();
    r2_ = t - 1;
    if (D_ > 0 && unit_norm_ == 1 && z_vec_ != 0) r2_ -= 1;
    if (r2_ < 0) throw input_error("genus: negative 2-rank");
}

uint64_t QuadraticField::genus_vector_form(Form f) const {
    int64_t v = represented_value_coprime(f, D_, 2 * std::abs(D_));
    uint64_t vec = 0;
    for (size_t i = 0; i < prime_discs_.size(); ++i)
        if (kronecker(prime_discs_[i], (uint64_t)v) == -1) vec |= (1ull << i);
    return vec;
}

uint64_t QuadraticField::genus_vector(const QIdeal& I) const {
    Form red = reduce_ideal(I).reduced;
    return genus_vector_form(red);
}

bool QuadraticField::is_square_class(const QIdeal& I) const {
    uint64_t v = genus_vector(I);
    if (v == 0) return true;
    return D_ > 0 && unit_norm_ == 1 && v == z_vec_;
}

// ---------------------------------------------------------------------------
// local arithmetic at 2

namespace {

int v2_mpz(const mpz_class& n) {
    if (n == 0) return 1 << 20;
    return (int)mpz_scan1(n.get_mpz_t(), 0);
}

int inv_mod8(int a) {
    a = ((a % 8) + 8) % 8;
    for (int b = 1; b < 8; b += 2)
        if ((a * b) % 8 == 1) return b;
    throw input_error("inv_mod8: even argument");
}

}  // namespace

void QuadraticField::build_local2() {
    int64_t dm8 = ((D_ % 8) + 8) % 8;
    if (dm8 == 1) return;  // split: no tables needed
    // local basis: (1, w0) with w0 = (1+sqrt(d0))/2 (inert) or sqrt(d0) (ramified);
    // multiplication constants: w0^2 = w0*tr - nm
    int64_t tr, nm;
    if (dm8 == 5) {
        tr = 1;
        nm = (1 - d0_) / 4 % 8;
    } else {
        tr = 0;
        nm = (-d0_) % 8;
    }
    auto mulres = [&](std::pair<int, int> p, std::pair<int, int> q) {
        int u = (p.first * q.first + ((nm % 8) + 8) % 8 * 0) % 8;
        // (a + b w)(c + d w) = ac + (ad + bc) w + bd w^2, w^2 = tr*w - nm
        int a = p.first, b = p.second, c = q.first, d = q.second;
        int x = (a * c - b * d * (int)(((nm % 8) + 8) % 8)) % 8;
        int y = (a * d + b * c + b * d * (int)(((tr % 8) + 8) % 8)) % 8;
        (void)u;
        return std::make_pair(((x % 8) + 8) % 8, ((y % 8) + 8) % 8);
    };
    auto is_unit_res = [&](std::pair<int, int> r) {
        if (dm8 == 5) return (r.first % 2 != 0) || (r.second % 2 != 0);
        // ramified: P = [2, t0 + w0-ish]; residue map w0 -> r0 mod 2
        // w0 = sqrt(d0): w0^2 = d0: mod P: w0 = d0 mod 2... use norm parity instead
        // unit <=> N(a + b w0) = a^2 - d0 b^2 odd
        int n = (r.first * r.first - (int)(((d0_ % 8) + 8) % 8) * r.second * r.second) % 2;
        return (n % 2 + 2) % 2 == 1;
    };
    // squares modulo 8 O
    std::vector<std::pair<int, int>> squares;
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            auto s = mulres({a, b}, {a, b});
            squares.push_back(s);
        }
    std::sort(squares.begin(), squares.end());
    squares.erase(std::unique(squares.begin(), squares.end()), squares.end());
    auto make_level = [&](const std::vector<std::pair<int, int>>& fuzz) {
        // squares + fuzz elements, all mod 8
        std::vector<std::pair<int, int>> out;
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b) {
                std::pair<int, int> r{a, b};
                if (!is_unit_res(r)) continue;
                bool hit = false;
                for (auto& s : squares) {
                    for (auto& fz : fuzz) {
                        std::pair<int, int> cand{((s.first + fz.first) % 8),
                                                 ((s.second + fz.second) % 8)};
                        if (cand == r) {
                            hit = true;
                            break;
                        }
                    }
                    if (hit) break;
                }
                if (hit) out.push_back(r);
            }
        std::sort(out.begin(), out.end());
        return out;
    };
    auto ideal_fuzz = [&](int level) {
        // elements of P^level modulo 8 O
        // P^level generators: for inert P = (2): P^L = (2^L); ramified: P^2 = (2)
        std::vector<std::pair<int, int>> fz;
        if (dm8 == 5) {
            int mod = (level >= 3) ? 8 : (1 << level);
            for (int a = 0; a < 8; a += mod)
                for (int b = 0; b < 8; b += mod) fz.push_back({a, b});
        } else {
            // ramified: P^{2k} = (2^k); P^{2k+1} = 2^k * P; P = (2, t0 + w0)
            int k = level / 2;
            bool odd = level % 2;
            int scale = 1 << k;
            std::vector<std::pair<int, int>> base;
            if (!odd) {
                base = {{1, 0}, {0, 1}};
            } else {
                // P generated by 2 and tau = t0 + w0
                int t0 = (dm8 == 0) ? 0 : 1;  // tau = w0 (D=0 mod 8) or 1 + w0
                base = {{2, 0}, {t0, 1}};
            }
            for (int ca = 0; ca < 8; ++ca)
                for (int cb = 0; cb < 8; ++cb) {
                    int u = (ca * base[0].first + cb * base[1].first) * scale % 8;
                    int v = (ca * base[0].second + cb * base[1].second) * scale % 8;
                    fz.push_back({(u + 8) % 8, (v + 8) % 8});
                }
        }
        std::sort(fz.begin(), fz.end());
        fz.erase(std::unique(fz.begin(), fz.end()), fz.end());
        return fz;
    };
    if (dm8 == 5) {
        l2_.sq_level[2] = make_level(ideal_fuzz(2));
        l2_.sq_level[3] = make_level(ideal_fuzz(3));
    } else {
        l2_.sq_level[2] = make_level(ideal_fuzz(2));
        l2_.sq_level[4] = make_level(ideal_fuzz(4));
        l2_.sq_level[5] = make_level(ideal_fuzz(5));
    }
    // unit classes: partition unit residues by ratio in squares mod P^{2e+1}
    const auto& full = (dm8 == 5) ? l2_.sq_level[3] : l2_.sq_level[5];
    auto in_full = [&](std::pair<int, int> r) {
        return std::binary_search(full.begin(), full.end(), r);
    };
    std::vector<std::pair<int, int>> reps;
    auto inverse_res = [&](std::pair<int, int> r) {
        for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b)
                if (mulres(r, {a, b}) == std::make_pair(1, 0)) return std::make_pair(a, b);
        throw input_error("local2: residue not invertible");
    };
    l2_.unit_class.clear();
    // class 0 must contain 1
    reps.push_back({1, 0});
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            std::pair<int, int> r{a, b};
            if (!is_unit_res(r)) continue;
            int cls = -1;
            for (size_t i = 0; i < reps.size(); ++i) {
                auto ratio = mulres(r, inverse_res(reps[i]));
                if (in_full(ratio)) {
                    cls = (int)i;
                    break;
                }
            }
            if (cls < 0) {
                reps.push_back(r);
                cls = (int)reps.size() - 1;
            }
            l2_.unit_class[r] = cls;
        }
    l2_.count = (int)reps.size();
    if (l2_.count != 8) throw input_error("local2: expected 8 unit classes");
}

std::pair<int, int> QuadraticField::residue8(const QElem& beta_in, bool at_conj, int* val_out) const {
    int64_t dm8 = ((D_ % 8) + 8) % 8;
    if (dm8 == 1) throw input_error("residue8: split case handled separately");
    QElem beta = at_conj ? beta_in.conj() : beta_in;
    // local basis coords of the numerator
    mpz_class c1, c2;
    if (dm8 == 5) {
        c1 = beta.x - beta.y;  // beta*z = (x - y) + 2y w0
        c2 = 2 * beta.y;
    } else {
        c1 = beta.x;
        c2 = beta.y;
    }
    int v;
    if (dm8 == 5) {
        int vnum = std::min(v2_mpz(c1), v2_mpz(c2));
        int vden = v2_mpz(beta.z);
        v = vnum - vden;
        mpz_class u1 = c1 >> vnum, u2 = c2 >> vnum;
        mpz_class zo = beta.z >> vden;
        int iz = inv_mod8((int)mpz_class(zo % 8).get_si());
        if (val_out) *val_out = v;
        return {(int)mpz_class(((u1 * iz) % 8 + 8) % 8).get_si(),
                (int)mpz_class(((u2 * iz) % 8 + 8) % 8).get_si()};
    }
    // ramified: divide by tau^v exactly, then reduce
    mpz_class nrm = c1 * c1 - mpz_class(d0_) * c2 * c2;
    if (nrm == 0) throw input_error("residue8: zero element");
    v = v2_mpz(nrm) - 2 * v2_mpz(beta.z);
    QElem e = beta;
    if (v != 0) {
        // tau: canonical uniformizer (v = 1): sqrt(d0) if d0 even, 1 + sqrt(d0) if odd
        QElem tau = (d0_ % 2 == 0) ? QElem(0, 1, 1, d0_) : QElem(1, 1, 1, d0_);
        QElem tinv = tau.inverse();
        QElem pw(1, 0, 1, d0_);
        QElem base = (v > 0) ? tinv : tau;
        for (int i = 0; i < std::abs(v); ++i) pw = pw * base;
        e = e * pw;
    }
    // now v_P(e) = 0; strip the 2-part of the denominator (coords divisible)
    int k = v2_mpz(e.z);
    mpz_class ex = e.x >> k, ey = e.y >> k, ez = e.z >> k;
    if ((e.x & ((mpz_class(1) << k) - 1)) != 0 || (e.y & ((mpz_class(1) << k) - 1)) != 0)
        throw input_error("residue8: unexpected 2-adic denominator");
    int iz = inv_mod8((int)mpz_class(ez % 8).get_si());
    if (val_out) *val_out = v;
    return {(int)mpz_class(((ex * iz) % 8 + 8) % 8).get_si(),
            (int)mpz_class(((ey * iz) % 8 + 8) % 8).get_si()};
}

int QuadraticField::valuation(const QElem& beta, uint64_t p, bool at_conj) const {
    if (beta.is_zero()) throw input_error("valuation: zero element");
    SplitType st = split_type(p);
    mpz_class zp = beta.z;
    int vz = 0;
    while (zp % p == 0) {
        zp /= p;
        ++vz;
    }
    if (st == SplitType::inert) {
        mpz_class c1, c2;
        if (p == 2 && ((D_ % 8) + 8) % 8 == 5) {
            c1 = beta.x - beta.y;
            c2 = 2 * beta.y;
        } else {
            c1 = beta.x;
            c2 = beta.y;
        }
        auto vp = [&](const mpz_class& n) {
            if (n == 0) return 1 << 20;
            int v = 0;
            mpz_class m = n;
            while (m % p == 0) {
                m /= p;
                ++v;
            }
            return v;
        };
        return std::min(vp(c1), vp(c2)) - vz;
    }
    if (st == SplitType::ramified) {
        mpz_class nrm = beta.x * beta.x - mpz_class(d0_) * beta.y * beta.y;
        int v = 0;
        while (nrm % p == 0) {
            nrm /= p;
            ++v;
        }
        return v - 2 * vz;
    }
    // split: component embedding with adaptive precision
    mpz_class nrm = abs(beta.x * beta.x - mpz_class(d0_) * beta.y * beta.y);
    int vn = 0;
    {
        mpz_class m = nrm;
        while (m % p == 0) {
            m /= p;
            ++vn;
        }
    }
    int K = vn + 4;
    // root w of w^2 - D w + n0 = 0 mod p^K with w = -t0 mod p (canonical prime)
    QIdeal P = split_prime(p).prime;
    mpz_class pk;
    mpz_ui_pow_ui(pk.get_mpz_t(), (unsigned long)p, (unsigned long)K);
    mpz_class n0 = (mpz_class(D_) * D_ - D_) / 4;
    mpz_class w = mod_floor(-P.t, p);
    if (at_conj) w = mod_floor(mpz_class(D_) - w, p);
    // Newton lift: w <- w - f(w)/f'(w); f'(w) = 2w - D invertible mod p
    mpz_class mod = p;
    while (mod < pk) {
        mod = mod * mod;
        if (mod > pk) mod = pk;
        mpz_class fw = mod_floor(w * w - D_ * w + n0, mod);
        mpz_class fpw = mod_floor(2 * w - D_, mod);
        mpz_class inv;
        if (mpz_invert(inv.get_mpz_t(), fpw.get_mpz_t(), mod.get_mpz_t()) == 0)
            throw input_error("valuation: derivative not invertible");
        w = mod_floor(w - fw * inv, mod);
    }
    // beta*z in omega coords: (x - yD, 2y) / s... use sqrt(d), sqrt(D) = 2w - D
    // beta = (x + y sqrt(d0))/z; sqrt(d0) = (2 w - D)/s
    int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
    mpz_class val = mod_floor(beta.x * s + beta.y * (2 * w - D_), pk);
    // component of numerator*s: valuation of val minus v_p(s) (s odd or p odd handles)
    int v = 0;
    if (val == 0) {
        v = K;  // >= K; K chosen > vn so this cannot happen for nonzero beta
        throw input_error("valuation: precision exhausted");
    }
    while (val % p == 0) {
        val /= p;
        ++v;
    }
    int vs = 0;
    if (p == 2 && s == 2) vs = 1;
    return v - vs - vz;
}

int QuadraticField::odd_class_bit(const QElem& beta, uint64_t p, bool at_conj) const {
    if (p == 2) throw input_error("odd_class_bit: p must be odd");
    SplitType st = split_type(p);
    int v = valuation(beta, p, at_conj);
    if (st == SplitType::split) {
        // unit part of the component value
        mpz_class nrm = abs(beta.x * beta.x - mpz_class(d0_) * beta.y * beta.y);
        int vn = 0;
        {
            mpz_class m = nrm;
            while (m != 0 && m % p == 0) {
                m /= p;
                ++vn;
            }
        }
        int K = vn + 4;
        QIdeal P = split_prime(p).prime;
        mpz_class pk;
        mpz_ui_pow_ui(pk.get_mpz_t(), (unsigned long)p, (unsigned long)K);
        mpz_class n0 = (mpz_class(D_) * D_ - D_) / 4;
        mpz_class w = mod_floor(-P.t, p);
        if (at_conj) w = mod_floor(mpz_class(D_) - w, p);
        mpz_class mod = p;
        while (mod < pk) {
            mod = mod * mod;
            if (mod > pk) mod = pk;
            mpz_class fw = mod_floor(w * w - D_ * w + n0, mod);
            mpz_class fpw = mod_floor(2 * w - D_, mod);
            mpz_class inv;
            mpz_invert(inv.get_mpz_t(), fpw.get_mpz_t(), mod.get_mpz_t());
            w = mod_floor(w - fw * inv, mod);
        }
        int s = (((D_ % 4) + 4) % 4 == 1) ? 1 : 2;
        mpz_class val = mod_floor(beta.x * s + beta.y * (2 * w - D_), pk);
        mpz_class zz = beta.z * s;
        int vzz = 0;
        while (zz % p == 0) {
            zz /= p;
            ++vzz;
        }
        while (val % p == 0) val /= p;
        // val/zz unit; legendre
        mpz_class u = mod_floor(val, p);
        mpz_class zinv;
        mpz_class pm(p);
        mpz_invert(zinv.get_mpz_t(), mpz_class(mod_floor(zz, pm)).get_mpz_t(), pm.get_mpz_t());
        u = mod_floor(u * zinv, pm);
        return kronecker((int64_t)u.get_si(), p) == -1 ? 1 : 0;
    }
    if (st == SplitType::inert) {
        // residue in F_{p^2} = F_p[w], character x -> x^{(p^2-1)/2}
        // strip p-powers: beta / p^v (v = v_P here since e = 1)
        mpz_class c1 = beta.x, c2 = beta.y, z = beta.z;
        auto strip = [&](mpz_class& a, mpz_class& b, int count) {
            for (int i = 0; i < count; ++i) {
                a /= p;
                b /= p;
            }
        };
        int vz = 0;
        while (z % p == 0) {
            z /= p;
            ++vz;
        }
        int vnum = v + vz;
        strip(c1, c2, vnum);
        // value (c1 + c2 sqrt d)/z in F_{p^2}
        mpz_class pm(p);
        mpz_class zinv;
        mpz_invert(zinv.get_mpz_t(), mpz_class(mod_floor(z, pm)).get_mpz_t(), pm.get_mpz_t());
        int64_t A = mpz_class(mod_floor(c1 * zinv, pm)).get_si();
        int64_t B = mpz_class(mod_floor(c2 * zinv, pm)).get_si();
        // compute (A + B W)^{(p^2-1)/2} with W^2 = d0 mod p
        int64_t d = (int64_t)mod_floor(mpz_class(d0_), pm).get_si();
        uint64_t e = ((uint64_t)p * p - 1) / 2;
        auto mulf = [&](std::pair<int64_t, int64_t> u1, std::pair<int64_t, int64_t> u2) {
            unsigned __int128 x =
                (unsigned __int128)(uint64_t)u1.first * (uint64_t)u2.first % p +
                (unsigned __int128)((unsigned __int128)(uint64_t)u1.second * (uint64_t)u2.second %
                                    p) *
                    (uint64_t)d % p;
            unsigned __int128 y = (unsigned __int128)(uint64_t)u1.first * (uint64_t)u2.second % p +
                                  (unsigned __int128)(uint64_t)u1.second * (uint64_t)u2.first % p;
            return std::make_pair((int64_t)(x % p), (int64_t)(y % p));
        };
        std::pair<int64_t, int64_t> base{((A % (int64_t)p) + (int64_t)p) % (int64_t)p,
                                         ((B % (int64_t)p) + (int64_t)p) % (int64_t)p};
        std::pair<int64_t, int64_t> acc{1, 0};
        while (e) {
            if (e & 1) acc = mulf(acc, base);
            base = mulf(base, base);
            e >>= 1;
        }
        if (acc.second != 0) throw input_error("odd_class_bit: bad character value");
        return acc.first == 1 ? 0 : 1;
    }
    // ramified: unit part via the canonical uniformizer tau = prime's second generator
    QIdeal P = split_prime(p).prime;
    QElem tau = elem(P.t, 1);  // t + omega, v_P = 1
    QElem e = beta;
    if (v != 0) {
        QElem base = (v > 0) ? tau.inverse() : tau;
        QElem pw(1, 0, 1, d0_);
        for (int i = 0; i < std::abs(v); ++i) pw = pw * base;
        e = e * pw;
    }
    // strip p from denominator: coords of numerator divisible by p^{vp(z)}
    mpz_class z = e.z, pm(p);
    int k = 0;
    while (z % p == 0) {
        z /= p;
        ++k;
    }
    mpz_class scale;
    mpz_ui_pow_ui(scale.get_mpz_t(), (unsigned long)p, (unsigned long)k);
    if (e.x % scale != 0 || e.y % scale != 0)
        throw input_error("odd_class_bit: unexpected denominator");
    mpz_class ex = e.x / scale, ey = e.y / scale;
    // residue map: sqrt(d0) -> r with r = rd mod p (d0 = r^2, p | d0: r = 0)
    // element = ex + ey * sqrt(d0): residue ex mod p (sqrt(d0) in P)
    mpz_class zinv;
    mpz_invert(zinv.get_mpz_t(), mpz_class(mod_floor(z, pm)).get_mpz_t(), pm.get_mpz_t());
    mpz_class u = mod_floor(ex * zinv, pm);
    if (u == 0) throw input_error("odd_class_bit: residue vanished");
    return kronecker((int64_t)u.get_si(), p) == -1 ? 1 : 0;
}

int QuadraticField::local2_class_count() const {
    return (((D_ % 8) + 8) % 8 == 1) ? 64 : 16;
}

int QuadraticField::local2_class_of(const QElem& beta) const {
    int64_t dm8 = ((D_ % 8) + 8) % 8;
    if (dm8 == 1) {
        int idx = 0;
        for (int comp = 0; comp < 2; ++comp) {
            int v = valuation(beta, 2, comp == 1);
            // odd part of the component mod 8
            mpz_class nrm = abs(beta.x * beta.x - mpz_class(d0_) * beta.y * beta.y);
            int vn = v2_mpz(nrm);
            int K = vn + 6;
            mpz_class pk = mpz_class(1) << K;
            mpz_class n0 = (mpz_class(D_) * D_ - D_) / 4;
            QIdeal P = split_prime(2).prime;
            mpz_class w = mod_floor(-P.t, 2);
            if (comp == 1) w = mod_floor(mpz_class(D_) - w, 2);
            mpz_class mod = 2;
            while (mod < pk) {
                mod = mod * mod;
                if (mod > pk) mod = pk;
                mpz_class fw = mod_floor(w * w - D_ * w + n0, mod);
                mpz_class fpw = mod_floor(2 * w - D_, mod);
                mpz_class inv;
                mpz_invert(inv.get_mpz_t(), fpw.get_mpz_t(), mod.get_mpz_t());
                w = mod_floor(w - fw * inv, mod);
            }
            mpz_class val = mod_floor(beta.x + beta.y * (2 * w - D_), pk);  // s = 1 here
            int vv = v2_mpz(val);
            mpz_class odd = (val >> vv) % 8;
            int vz = v2_mpz(beta.z);
            mpz_class zo = (beta.z >> vz) % 8;
            int u = (int)((odd.get_si() * inv_mod8((int)zo.get_si())) % 8);
            int ucls = ((u % 8) + 8) % 8 / 2;  // 1,3,5,7 -> 0,1,2,3
            idx = idx * 8 + (v % 2 != 0 ? 4 : 0) + ucls;
        }
        return idx;
    }
    int v;
    auto r = residue8(beta, false, &v);
    auto it = l2_.unit_class.find(r);
    if (it == l2_.unit_class.end()) throw input_error("local2_class_of: residue not a unit");
    return ((v % 2 + 2) % 2) * 8 + it->second;
}

int QuadraticField::max_square_level(const QElem& beta, bool at_conj) const {
    int64_t dm8 = ((D_ % 8) + 8) % 8;
    if (dm8 == 1) {
        int v = valuation(beta, 2, at_conj);
        if (v != 0) throw input_error("max_square_level: not a unit locally");
        // component odd value mod 8 via class machinery
        int cls = local2_class_of(beta);
        int comp = at_conj ? cls % 8 : cls / 8;
        int ucls = comp % 4;          // 1, 3, 5, 7 -> 0..3
        int u = 2 * ucls + 1;         // back to residue mod 8
        if (u == 1) return 1;         // full square locally (1 mod 8 => unramified/split anyway m=e)
        if (u % 4 == 1) return 1;     // 5 mod 8: square mod 4
        return 0;
    }
    int v;
    auto r = residue8(beta, at_conj, &v);
    if (v != 0) throw input_error("max_square_level: not a unit locally");
    auto in_level = [&](int L) {
        const auto& s = l2_.sq_level.at(L);
        return std::binary_search(s.begin(), s.end(), r);
    };
    if (dm8 == 5) {
        return in_level(2) ? 1 : 0;
    }
    if (in_level(4)) return 2;
    if (in_level(2)) return 1;
    return 0;
}

bool QuadraticField::is_square_at_2(const QElem& beta, bool at_conj) const {
    int64_t dm8 = ((D_ % 8) + 8) % 8;
    if (dm8 == 1) {
        int v = valuation(beta, 2, at_conj);
        if (v % 2 != 0) return false;
        int cls = local2_class_of(beta);
        int comp = at_conj ? cls % 8 : cls / 8;
        return comp % 4 == 0;  // unit residue 1 mod 8
    }
    int v;
    auto r = residue8(beta, at_conj, &v);
    if (v % 2 != 0) return false;
    int L = (dm8 == 5) ? 3 : 5;
    const auto& s = l2_.sq_level.at(L);
    return std::binary_search(s.begin(), s.end(), r);
}

// ---------------------------------------------------------------------------
// signatures and the Selmer group

std::vector<uint64_t> QuadraticField::element_signature(
    const QElem& beta, const std::vector<uint64_t>& extra_probes) const {
    std::vector<uint64_t> sig;
    if (D_ > 0) {
        sig.push_back(beta.sign_emb1() < 0 ? 1 : 0);
        sig.push_back(beta.sign_emb2() < 0 ? 1 : 0);
    }
    int cls = local2_class_of(beta);
    for (int b = 0; b < 6; ++b) sig.push_back((cls >> b) & 1);
    for (auto& disc : prime_discs_) {
        uint64_t p = (uint64_t)std::abs(disc);
        if (p == 4 || p == 8) continue;  // 2-part covered above
        sig.push_back((uint64_t)(((valuation(beta, p) % 2) + 2) % 2));
        sig.push_back((uint64_t)odd_class_bit(beta, p));
    }
    for (uint64_t q : extra_probes) {
        sig.push_back((uint64_t)(((valuation(beta, q) % 2) + 2) % 2));
        sig.push_back((uint64_t)odd_class_bit(beta, q));
    }
    return sig;
}

bool QuadraticField::signature_less(const QElem& a, const QElem& b) const {
    auto sa = element_signature(a, {});
    auto sb = element_signature(b, {});
    if (sa != sb) return sa < sb;
    for (uint64_t q = 3; q < 100000; q += 2) {
        if (!is_prime(q)) continue;
        if (std::abs(D_) % (int64_t)q == 0) continue;
        if (split_type(q) == SplitType::ramified) continue;
        std::vector<uint64_t> probe{q};
        auto pa = element_signature(a, probe);
        auto pb = element_signature(b, probe);
        if (pa != pb) return pa < pb;
    }
    throw input_error("signature_less: probe cap exceeded");
}

void QuadraticField::build_selmer() {
    build_local2();
    std::vector<QElem> raw;
    // torsion part of the unit group modulo squares: i generates it for Q(i),
    // -1 everywhere else (for D = -3, -1 = zeta6^3 is equivalent to zeta6)
    if (D_ == -4)
        raw.push_back(theta());
    else
        raw.push_back(QElem(-1, 0, 1, d0_));
    if (D_ > 0) raw.push_back(eps_);
    // lifts of a basis of Cl(K)[2]
    size_t principal_idx = key_to_class_.at(FormHash{}(principal_key_));
    auto class_index = [&](const QIdeal& I) {
        return key_to_class_.at(FormHash{}(reduce_ideal(I).reduced));
    };
    auto mul_class = [&](size_t i, size_t j) {
        return class_index(mul(class_reps_[i], class_reps_[j]));
    };
    std::vector<size_t> torsion;
    for (size_t i = 0; i < class_reps_.size(); ++i) {
        if (class_index(mul(class_reps_[i], class_reps_[i])) == principal_idx) torsion.push_back(i);
    }
    std::vector<size_t> span{principal_idx};
    std::vector<size_t> basis_classes;
    for (size_t c : torsion) {
        if (std::find(span.begin(), span.end(), c) != span.end()) continue;
        basis_classes.push_back(c);
        std::vector<size_t> grown = span;
        for (size_t s : span) grown.push_back(mul_class(c, s));
        span = std::move(grown);
    }
    if (span.size() != (size_t(1) << r2_))
        throw input_error("selmer: 2-torsion size disagrees with genus rank");
    for (size_t c : basis_classes) {
        QIdeal sq = mul(class_reps_[c], class_reps_[c]);
        auto g = principal_generator(sq);
        if (!g) throw input_error("selmer: torsion square not principal");
        raw.push_back(*g);
    }
    int target = unit_rank() + 1 + r2_;
    std::vector<std::vector<uint64_t>> sigs;
    for (auto& g : raw) sigs.push_back(element_signature(g, {}));
    uint64_t next_q = 3;
    for (int rounds = 0;; ++rounds) {
        // Gaussian elimination over F2, tracking selected generators
        size_t width = sigs.empty() ? 0 : sigs[0].size();
        std::vector<size_t> chosen;
        std::vector<std::vector<uint64_t>> rows;
        for (size_t i = 0; i < raw.size(); ++i) {
            std::vector<uint64_t> v = sigs[i];
            for (size_t r = 0; r < rows.size(); ++r) {
                // reduce v by rows (each row has a pivot)
                size_t piv = 0;
                while (piv < width && rows[r][piv] == 0) ++piv;
                if (piv < width && v[piv]) {
                    for (size_t k = 0; k < width; ++k) v[k] ^= rows[r][k];
                }
            }
            bool nonzero = false;
            for (auto b : v) nonzero |= (b != 0);
            if (nonzero) {
                rows.push_back(v);
                chosen.push_back(i);
                // keep rows in echelon order by pivot
                std::sort(rows.begin(), rows.end(), [&](auto& A, auto& B) {
                    size_t pa = 0, pb = 0;
                    while (pa < width && !A[pa]) ++pa;
                    while (pb < width && !B[pb]) ++pb;
                    return pa < pb;
                });
            }
        }
        if ((int)chosen.size() == target) {
            selmer_basis_.clear();
            for (size_t i : chosen) selmer_basis_.push_back(raw[i]);
            return;
        }
        if ((int)chosen.size() > target) throw input_error("selmer: rank exceeds formula");
        // extend every signature by one more probe prime
        bool added = false;
        while (next_q < 100000) {
            uint64_t q = next_q;
            next_q += 2;
            if (!is_prime(q)) continue;
            if (std::abs(D_) % (int64_t)q == 0) continue;
            for (size_t i = 0; i < raw.size(); ++i) {
                auto ext = element_signature(raw[i], {q});
                sigs[i].push_back(ext[ext.size() - 2]);
                sigs[i].push_back(ext[ext.size() - 1]);
            }
            added = true;
            break;
        }
        if (!added) throw input_error("selmer: probe primes exhausted");
    }
}

FieldPtr QuadraticField::make(int64_t D) {
    static std::mutex mtx;
    static std::map<int64_t, FieldPtr> registry;
    {
        std::lock_guard<std::mutex> lock(mtx);
        auto it = registry.find(D);
        if (it != registry.end()) return it->second;
    }
    auto f = std::make_shared<const QuadraticField>(D);
    std::lock_guard<std::mutex> lock(mtx);
    auto [it, inserted] = registry.emplace(D, f);
    return it->second;
}

}  // namespace d4c
