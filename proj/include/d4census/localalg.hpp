#pragma once

#include <array>
#include <string>
#include <vector>

#include "d4census/quadfield.hpp"

namespace d4c {

// ---------------------------------------------------------------------------
// square classes of Q_2^x: canonical representative order

inline constexpr std::array<int, 8> kQ2Reps = {1, 5, -1, -5, 2, 10, -2, -10};

// class index of a nonzero rational in Q_2^x / (Q_2^x)^2
int q2_class_of(const mpq_class& q);
int q2_class_of_int(int64_t n);
// v_2 of the discriminant of Q_2(sqrt(rep)) (0 for split/unramified)
int q2_disc_exponent(int cls);
int q2_mul(int i, int j);

// ---------------------------------------------------------------------------
// pairs (L_2, K_2): quartic etale algebra over Q_2 with quadratic subalgebra,
// up to isomorphism of pairs

struct Pair2 {
    int bucket;        // D_K mod 8: one of 1, 5, 4, 0
    int64_t shadow;    // global discriminant whose completion is K_2 (0 = split)
    int delta_class;   // class id in the shadow field (or c1*8+c2 for split K_2)
    int v_disc_k;      // v_2(disc K_2)
    int v_rel;         // v_2(D_{L_2/K_2})
    int n_class;       // Q_2 class of N(delta)
    int v_flip;        // v_2(disc of Q_2(sqrt N(delta)))
    int aut;           // |Aut(L_2, K_2)|
    bool l_split;      // L_2 = K_2 x K_2
    std::string name;

    int v_cond() const { return v_disc_k + v_rel; }
    int j_exponent() const { return (v_rel - v_flip) / 2; }  // J_2 = 2^{2i}
    mpq_class weight() const;                                // 1/(aut 2^{v_cond})
};

// all pair classes whose K_2 matches the congruence bucket of D_K mod 8
const std::vector<Pair2>& pairs2_bucket(int dk_mod8);
std::vector<Pair2> pairs2_all();

// index (within pairs2_all ordering) of the flipped pair
size_t flip_pair2_index(size_t idx);

struct WeightTable {
    std::vector<int> v_rel_values;
    std::vector<int> v_flip_values;
    std::vector<std::vector<mpq_class>> entry;  // [row][col]
};
WeightTable weight_table2(int dk_mod8);

mpq_class mu_sigma_2i(int i);  // total weight of pairs with J_2 = 2^{2i}
mpq_class mu_sigma2_total();
// central-inertia-style grouping: pairs with unramified K_2 and v_rel = 2i;
// this is the attribution behind the printed 7 log2/20 split
mpq_class mu_sigma2_central(int i);

// ---------------------------------------------------------------------------
// pairs at odd p, by class invariants (tame case)

struct PairOdd {
    // K_p type: 0 split, 1 unramified, 2 ramified sqrt(p*u0) with u0 square,
    // 3 ramified with u0 the nonresidue
    int k_type;
    int delta_id;  // case-dependent small id
    int v_disc_k;  // v_p(disc K_p), 0 or 1
    int v_rel;     // v_p(D_{L_p/K_p})
    int n_class;   // class of N(delta): 2 bits (v_p mod 2, nonresidue bit)
    int v_flip;
    int aut;
    bool l_split;
    std::string name;

    int v_cond() const { return v_disc_k + v_rel; }
    mpq_class weight(uint64_t p) const;  // 1/(aut p^{v_cond})
};

std::vector<PairOdd> pairs_odd(uint64_t p);
mpq_class mu_sigma_p(uint64_t p);          // complete local mass
mpq_class mu_sigma_p_central(uint64_t p);  // mu(Sigma_{p^2}): C = p^2, K_p unramified
// index of the flipped pair within pairs_odd(p); depends only on p mod 4
size_t flip_pair_odd_index(uint64_t p, size_t idx);

// ---------------------------------------------------------------------------
// infinite place: pairs over R

struct PairInf {
    int id;        // 0 (R^4,R^2), 1 (R^2xC,R^2), 2 (C^2,R^2), 3 (C^2,C)
    int aut;       // 8, 4, 8, 4
    int flip_id;   // involution: 0->0, 1->3, 2->2, 3->1
    std::string name;
    mpq_class weight() const { return mpq_class(1, aut); }
};
const std::vector<PairInf>& pairs_inf();

// relative quadratic-algebra mass over a completion of a quadratic field:
// sum over quadratic etale algebras A of F of 1/(2 * D_{A/F}); the complete
// local factor (1 + 1/Np)^{-1} * mass equals 1
mpq_class relative_quadratic_mass(const QuadraticField& K, uint64_t p);
mpq_class relative_quadratic_mass_q(uint64_t p);  // base field Q at p

}  // namespace d4c
