#pragma once

#include <functional>

#include "d4census/localalg.hpp"
#include "d4census/quadfield.hpp"

namespace d4c {

enum class GaloisType { D4, C4, V4 };

struct invariant_violation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One quadratic extension L = K(sqrt(alpha)) of K = Q(sqrt(D_K)).
struct D4Record {
    int64_t D_K = 0;
    mpz_class N_rel;      // norm of the relative discriminant d_{L/K}
    mpz_class conductor;  // |D_K| * N_rel
    GaloisType type = GaloisType::D4;

    // flip data (D4 only)
    int64_t D_flip = 0;
    mpz_class J, q;
    int i2 = 0;
    mpz_class d_odd;

    // local invariants used by spec filters
    mpq_class norm_alpha;
    int sign1 = 0, sign2 = 0;  // signs of alpha at the real embeddings (real K)
    int inf_pair = 3;          // index into pairs_inf()

    bool has_alpha = false;
    QElem alpha;
};

// CDO: d_{L/K} = 4a/c^2 with a the squarefree kernel of (alpha) and c | (2)
// maximal coprime to a with alpha a square mod c^2
QIdeal relative_discriminant(const QuadraticField& K, const QElem& alpha);
mpz_class relative_discriminant_norm(const QuadraticField& K, const QElem& alpha);

GaloisType galois_type(const QuadraticField& K, const QElem& alpha);

// fundamental discriminant of Q(sqrt(N(alpha))), D4 case
int64_t flipped_discriminant(const QuadraticField& K, const QElem& alpha);

// fills D_flip, J, q, i2, d_odd from D_K, N_rel, norm_alpha
void fill_flip_invariants(D4Record& rec);

struct EnumOptions {
    bool d4_only = true;
    bool dedup = true;        // one record per Q-isomorphism class of the quartic
    bool with_alpha = false;  // carry the exact Kummer generator
};

using RecordSink = std::function<void(const D4Record&)>;

// All quadratic extensions L/K with N(d_{L/K}) <= Y, one record per
// K-isomorphism class (or per quartic field when dedup is on).
void enumerate_extensions(const QuadraticField& K, int64_t Y, const EnumOptions& opt,
                          const RecordSink& sink);

// JSON Lines serialization of records (cache format)
std::string record_to_json(const D4Record& rec);
D4Record record_from_json(const std::string& line);

}  // namespace d4c
