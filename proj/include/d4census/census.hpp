#pragma once

#include <array>
#include <cmath>
#include <vector>
#include <map>
#include <optional>
#include <string>

#include "d4census/relext.hpp"

namespace d4c {

// ---------------------------------------------------------------------------
// global collections of local specifications

struct GlobalSpec {
    // allowed pair classes, indexed against pairs2_all() / pairs_odd(p) /
    // pairs_inf(); a missing entry means the place is unconstrained
    std::optional<std::vector<char>> allow2;
    std::map<uint64_t, std::vector<char>> allow_odd;
    std::optional<std::array<char, 4>> allow_inf;

    static GlobalSpec complete() { return {}; }
    bool is_complete() const { return !allow2 && allow_odd.empty() && !allow_inf; }

    bool matches(const D4Record& rec) const;
    GlobalSpec flipped() const;
    bool flip_closed() const;

    // masses
    mpq_class mu2() const;
    mpq_class mu2_i(int i) const;  // mu(Sigma_{2^{2i}})
    mpq_class mu_odd(uint64_t p) const;
    mpq_class mu_odd_central(uint64_t p) const;
    mpq_class mu_inf() const;
    uint64_t m_constrained() const;  // product of constrained finite primes

    // serialization; the JSON schema is documented in docs/local-classes.md
    std::string to_json() const;
    static GlobalSpec from_json(const std::string& text);
    uint64_t hash() const;

    // validation: every allowed set must be a union of classes the record
    // invariants can see; throws otherwise
    void validate() const;
};

// helpers for building the standard restricted specs
GlobalSpec spec_restrict_i2(std::vector<int> allowed_i2);
GlobalSpec spec_restrict_vcond2(std::vector<int> allowed_vcond);
GlobalSpec spec_restrict_odd_central(uint64_t p, bool central_only);
GlobalSpec spec_restrict_odd_k_unramified(uint64_t p);
GlobalSpec spec_restrict_inf(std::vector<int> pair_ids);

// ---------------------------------------------------------------------------

struct ValueErr {
    double value = 0;
    double err = 0;
};

struct CensusReport {
    int64_t x = 0;
    std::string method;  // "oracle" | "hyperbola"
    mpz_class n_exact;
    ValueErr main, secondary;  // secondary excludes the non-multiplicative c
    double residual = 0;       // n_exact - main - secondary
    double seconds = 0;
    uint64_t fields = 0, records = 0;
    bool m_quartic_warning = false;  // m^4 > X in Theorem 1.2's regime
    std::string to_json() const;
    std::string to_csv_row() const;
    static std::string csv_header();
};

struct CensusOptions {
    int workers = 1;
    std::optional<uint64_t> max_fields;  // resource cap; throws ResourceCap beyond
    std::string cache_dir;               // JSON Lines record cache, append-only
};

struct ResourceCap : std::runtime_error {
    int64_t resume_abs_d;  // smallest |D| not yet processed
    ResourceCap(const std::string& w, int64_t resume)
        : std::runtime_error(w), resume_abs_d(resume) {}
};

CensusReport count_oracle(int64_t X, const GlobalSpec& spec, const CensusOptions& opt = {});
CensusReport count_hyperbola(int64_t X, const GlobalSpec& spec, const CensusOptions& opt = {});

// hyperbola boundary conventions; totals must agree (property-tested)
enum class TieConvention { ties_to_first, ties_to_correction };
mpz_class hyperbola_count(int64_t X, const GlobalSpec& spec, TieConvention conv,
                          const CensusOptions& opt = {});

// Theorem-style asymptotic terms: main = kappa X log X, secondary (without c)
struct AsymptoticTerms {
    ValueErr main_coeff;       // (1/2) mu_inf prod (1-1/p)^2 mu_p
    ValueErr secondary_coeff;  // main_coeff * (1 - sums)
    double main_at(double x) const { return main_coeff.value * x * std::log(x); }
    double secondary_at(double x) const { return secondary_coeff.value * x; }
};
AsymptoticTerms main_and_secondary(const GlobalSpec& spec, uint64_t p_max = 1000000);

// smoothed L(1, chi_D) per the inverse-Mellin truncation; n with the weight
// below 1e-18 are dropped
double smoothed_L(int64_t D, double N);
// 1/L(2, chi_D) by Euler product over p <= p_max with a certified tail bound
ValueErr inverse_L2(int64_t D, uint64_t p_max = 200000);

struct ConstantEstimate {
    double value = 0;        // c = c_plus + c_minus / 2
    double c_plus = 0, c_minus = 0;
    double uncertainty = 0;  // truncation + tail, reported conservatively
    double tail_part = 0, trunc_part = 0;
    int64_t T = 0;
    double shape_bound = 0;  // max |E(t)| / t^{13/18} observed
};
ConstantEstimate estimate_c(int64_t T, const CensusOptions& opt = {});

// Theorem 1.3 counts: base field Q or a quadratic field
struct QuadCountReport {
    mpz_class exact;
    double predicted = 0;
    double predicted_err = 0;
    std::string to_json() const;
};
QuadCountReport quad_count_q(int64_t X, const std::vector<int>& allowed_q2_classes = {});
QuadCountReport quad_count_over(int64_t D, int64_t X, const CensusOptions& opt = {});

// the complete local factor of the Theorem 1.3 constant at p (exact rational)
mpq_class quadcount_local_factor_complete(const QuadraticField& K, uint64_t p);

struct CharSumReport {
    int64_t n = 0, d = 0;
    std::optional<int> mod8;
    int64_t x = 0;
    double observed = 0;
    double main_term = 0;
    double normalized_residual = 0;  // (obs-main)/X^{1/2} n^{1/4} d^{1/4}
    std::string to_json() const;
};
CharSumReport verify_char_sum(uint64_t n, uint64_t d, std::optional<int> mod8, int64_t X);

struct FitRow {
    int64_t x;
    mpz_class n_exact;
    double main, secondary_no_c, c_times_x, residual, residual2;
};
struct FitReport {
    std::vector<FitRow> rows;
    ConstantEstimate c;
    double exponent_fit = 0;  // slope of log|residual2| against log x
    double ratio_main_last = 0, ratio_full_last = 0;
    std::string to_json() const;
    std::string to_csv() const;
};
FitReport fit_report(const std::vector<int64_t>& grid, const GlobalSpec& spec, int64_t c_T,
                     const CensusOptions& opt = {});

// Dirichlet series Phi_{Q,2}(C_2, s) both ways: direct sum over quadratic
// fields against the ray-class character formula (base field Q only)
struct PhiSeriesCheck {
    double lhs = 0, rhs = 0, lhs_tail = 0, rhs_tail = 0;
};
PhiSeriesCheck phi2_series_q(double s, int64_t d_max);

}  // namespace d4c
