#pragma once

#include <gmpxx.h>

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "d4census/arith.hpp"

namespace d4c {

// Element (x + y*sqrt(d0))/z of K = Q(sqrt(d0)), d0 squarefree, z > 0, reduced.
struct QElem {
    mpz_class x, y, z;
    int64_t d0 = 0;

    QElem() : x(0), y(0), z(1) {}
    QElem(mpz_class x_, mpz_class y_, mpz_class z_, int64_t d0_);
    static QElem from_int(int64_t v, int64_t d0) { return QElem(v, 0, 1, d0); }

    void reduce();
    bool is_zero() const { return x == 0 && y == 0; }
    bool is_rational() const { return y == 0; }

    QElem operator+(const QElem& o) const;
    QElem operator-(const QElem& o) const;
    QElem operator*(const QElem& o) const;
    QElem operator-() const;
    QElem inverse() const;
    QElem conj() const;
    bool operator==(const QElem& o) const { return x == o.x && y == o.y && z == o.z; }

    mpq_class norm() const;   // x^2 - d0 y^2 over z^2
    mpq_class trace() const;  // 2x/z
    int sign_emb1() const;    // sign under sqrt(d0) -> +|sqrt(d0)| (real d0 only)
    int sign_emb2() const;
    bool is_integral() const;
    std::string str() const;
};

// Square root in K, exact. Returns nothing when beta is not a square in K.
std::optional<QElem> sqrt_in_field(const QElem& beta);

// Integral ideal m * (a Z + (t + w) Z), w = (D + sqrt(D))/2, norm = m^2 a.
struct QIdeal {
    mpz_class m, a, t;  // m >= 1, a >= 1, 0 <= t < a

    bool operator==(const QIdeal& o) const { return m == o.m && a == o.a && t == o.t; }
    bool operator<(const QIdeal& o) const {
        if (m != o.m) return m < o.m;
        if (a != o.a) return a < o.a;
        return t < o.t;
    }
    mpz_class norm() const { return m * m * a; }
    bool is_unit_ideal() const { return m == 1 && a == 1; }
    std::string str() const;
};

enum class SplitType { split, inert, ramified };

struct PrimeSplitting {
    SplitType type;
    QIdeal prime;       // canonical prime above p (norm p for split/ramified, p^2 inert)
    QIdeal conj_prime;  // = prime for inert/ramified
};

// Binary quadratic form (a, b, c) of discriminant D, exact int64 arithmetic.
struct Form {
    int64_t a, b, c;
    bool operator==(const Form& o) const { return a == o.a && b == o.b && c == o.c; }
    bool operator<(const Form& o) const {
        if (a != o.a) return a < o.a;
        if (b != o.b) return b < o.b;
        return c < o.c;
    }
};

class QuadraticField;
using FieldPtr = std::shared_ptr<const QuadraticField>;

class QuadraticField {
public:
    // Class data, unit, genus characters and the Selmer group are computed on
    // construction.  |D| capped at 10^8.
    explicit QuadraticField(int64_t D);

    int64_t D() const { return D_; }
    int64_t d0() const { return d0_; }
    bool is_real() const { return D_ > 0; }
    int unit_rank() const { return D_ > 0 ? 1 : 0; }
    int num_roots_of_unity() const { return w_; }

    uint64_t class_number() const { return h_; }
    uint64_t narrow_class_number() const { return h_narrow_; }
    int two_rank() const { return r2_; }  // r_2(Cl(K))

    // units (real case)
    const QElem& fundamental_unit() const { return eps_; }
    int unit_norm() const { return unit_norm_; }
    double regulator() const { return regulator_; }

    PrimeSplitting split_prime(uint64_t p) const;
    SplitType split_type(uint64_t p) const;
    QIdeal conj_ideal(const QIdeal& I) const;
    QIdeal mul(const QIdeal& I, const QIdeal& J) const;
    QIdeal unit_ideal() const;
    QIdeal principal_ideal(const QElem& g) const;  // ideal generated by integral g

    // [I] in Cl(K)^2, decided by genus characters (ordinary class group).
    bool is_square_class(const QIdeal& I) const;
    // Some ideal q of odd norm with [I q^2] principal, if one exists.
    std::optional<QIdeal> sqrt_of_inverse_class(const QIdeal& I) const;
    // Canonical generator when I is principal (ordinary sense).
    std::optional<QElem> principal_generator(const QIdeal& I) const;
    bool is_principal(const QIdeal& I) const;

    // canonical key identifying the ordinary ideal class of I
    Form class_key(const QIdeal& I) const;
    Form principal_key() const { return principal_key_; }
    std::vector<QIdeal> class_representatives() const;  // one per ordinary class, odd norm

    // Selmer group S(K) = V(K)/K^x2
    const std::vector<QElem>& selmer_basis() const { return selmer_basis_; }
    int selmer_rank() const { return (int)selmer_basis_.size(); }

    // genus characters: one prime discriminant per factor of D
    const std::vector<int64_t>& prime_discriminants() const { return prime_discs_; }
    uint64_t genus_vector(const QIdeal& I) const;  // bitmask over prime_discs_
    uint64_t genus_vector_form(Form f) const;
    uint64_t negative_norm_genus_vector() const { return z_vec_; }  // real, N(eps)=+1

    // local data at 2: square class index of an element, canonical local model
    int local2_class_count() const;
    int local2_class_of(const QElem& beta) const;
    // largest m <= e(P|2) with beta a square modulo P^{2m} (needs v_P(beta) = 0)
    int max_square_level(const QElem& beta, bool at_conj = false) const;
    bool is_square_at_2(const QElem& beta, bool at_conj = false) const;

    // exact valuation of nonzero beta at the canonical prime above p
    int valuation(const QElem& beta, uint64_t p, bool at_conj = false) const;
    // square-class bit of the unit part of beta at the canonical prime above
    // an odd p (0 = residue square, 1 = non-square); inert p uses the norm
    // character of the residue field
    int odd_class_bit(const QElem& beta, uint64_t p, bool at_conj = false) const;

    // signature of beta over the field's fixed probe places plus extra split
    // probe primes; used for Selmer reduction and conjugate dedup
    std::vector<uint64_t> element_signature(const QElem& beta,
                                            const std::vector<uint64_t>& extra_probes) const;
    // first probe primes distinguishing beta from beta' when fixed places tie
    bool signature_less(const QElem& a, const QElem& b) const;

    QElem theta() const;            // sqrt(d0) or (1 + sqrt(d0))/2
    QElem omega() const;            // (D + sqrt(D))/2 in the (x,y,z) encoding
    QElem elem(const mpz_class& u, const mpz_class& v) const;  // u + v*omega
    std::pair<mpq_class, mpq_class> omega_coords(const QElem& e) const;

    // canonical associate among unit multiples (w roots of unity, eps powers)
    QElem canonicalize_generator(const QElem& g) const;

    static FieldPtr make(int64_t D);  // memoized registry

private:
    int64_t D_, d0_;
    int w_ = 2;
    uint64_t h_ = 0, h_narrow_ = 0;
    int r2_ = 0;
    QElem eps_;
    int unit_norm_ = 1;
    double regulator_ = 0.0;
    uint64_t period_ = 0;

    std::vector<int64_t> prime_discs_;
    uint64_t z_vec_ = 0;

    Form principal_key_;
    std::vector<Form> class_keys_;                       // canonical key per class
    std::vector<QIdeal> class_reps_;                     // odd-norm representative per class
    std::unordered_map<uint64_t, size_t> key_to_class_;  // hashed canonical form -> index
    std::vector<size_t> sqrt_class_;                     // index of a square root class, or npos

    std::vector<QElem> selmer_basis_;

    // reduction walk: returns reduced form key and gamma with I_red = gamma * I
    struct WalkResult {
        Form reduced;
        QElem gamma;
    };
    WalkResult reduce_ideal(const QIdeal& I) const;
    Form canonical_cycle_key(Form reduced) const;
    QElem cycle_prefix_generator(Form from, Form to) const;  // walk along cycle

    void build_class_group();
    void build_unit();
    void build_genus();
    void build_local2();
    void build_selmer();

    QIdeal ideal_from_form(Form f) const;
    QIdeal ideal_of_norm_in_class(Form f, bool odd_only) const;

    // local square-class tables at 2 (inert/ramified cases)
    struct Local2Tables {
        // unit residue (u, v) mod 8 in the omega0 basis -> class id, class 0 = squares
        std::map<std::pair<int, int>, int> unit_class;
        int count = 0;
        // squares modulo P^L for the m-level search, elements of O/8O
        std::map<int, std::vector<std::pair<int, int>>> sq_level;
    };
    Local2Tables l2_;
    // residue of an integral element modulo 8 in the local basis, unit part only
    std::pair<int, int> residue8(const QElem& beta, bool at_conj, int* val_out) const;

    friend struct FieldTestHook;
};

// value represented by form coprime to modulus (positive), with witnesses
int64_t represented_value_coprime(Form f, int64_t disc, int64_t modulus, int64_t* px = nullptr,
                                  int64_t* py = nullptr);

}  // namespace d4c
