#pragma once

#include <span>

#include "sdmem/model.hpp"
#include "sdmem/suffstats.hpp"

namespace sdmem {

/// Per-subject quantities of the closed-form likelihood when B = C.
///   g     = (I + V Omega)^{-1} V
///   r     = (V + Omega^{-1})^{-1}
///   gamma = g (V^{-1} U - mu)
///   loglik = -1/2 log det(I + V Omega) - 1/2 (mu - V^{-1}U)' g (mu - V^{-1}U) + 1/2 U' V^{-1} U
struct LikelihoodTerms {
    Matrix g;
    Matrix r;
    Vector gamma;
    double loglik = 0.0;
};

// Throws SingularV when the smallest eigenvalue of V is <= 1e-10 ||V||.
LikelihoodTerms subject_loglik(const SuffStats& stats, const Theta& theta);

// The theta-free part 1/2 U' V^{-1} U included in subject_loglik.
double reference_term(const SuffStats& stats);

double population_loglik(std::span<const SuffStats> stats, const Theta& theta);

struct Score {
    Vector mu;     // dl/dmu
    Matrix omega;  // symmetric dl/dOmega, entries treated as free
};

Score score(std::span<const SuffStats> stats, const Theta& theta);

/// Subject terms for separate designs (p fixed, d random):
///   w = U2 - S mu,  R = (V2 + Omega^{-1})^{-1},  G = (I + V2 Omega)^{-1} V2,  P = (I + V2 Omega)^{-1} w
///   loglik = -1/2 log det(I + V2 Omega) + U1'mu - 1/2 mu'V1 mu + 1/2 w'R w
///   dl/dmu = U1 - V1 mu - S'R w,  dl/dOmega = 1/2 (-G + P P')
/// With B = C this equals subject_loglik, reference term included.
struct GeneralTerms {
    double loglik = 0.0;
    double logdet = 0.0;  // log det(I + V2 Omega)
    Matrix r;
    Matrix g;
    Vector w;
    Vector p;
};

// Factor of Omega, shared by all subjects of one evaluation.
struct OmegaFactor {
    Matrix chol;  // Omega = chol chol'; lower Cholesky factor, or any d x k factor
    explicit OmegaFactor(const Matrix& omega);
    // Rank-deficient Omega = f f' with f of size d x k, k <= d (k = 0 means Omega = 0).
    static OmegaFactor from_factor(Matrix f);

private:
    OmegaFactor() = default;
};

// Returns log det(I + V Omega) and fills r = (V + Omega^{-1})^{-1}.
double determinant_terms(const Matrix& v, const OmegaFactor& factor, Matrix& r);

GeneralTerms subject_terms(const GeneralSuffStats& stats, const Theta& theta, const OmegaFactor& factor);
GeneralTerms subject_terms(const GeneralSuffStats& stats, const Vector& mu, const OmegaFactor& factor);

double population_loglik(std::span<const GeneralSuffStats> stats, const Theta& theta);
Score score(std::span<const GeneralSuffStats> stats, const Theta& theta);

// Both at once; cheaper than separate calls.
double loglik_and_score(std::span<const GeneralSuffStats> stats, const Theta& theta, Score* out);
// Same with Omega given by its factor, which may be rank-deficient.
double loglik_and_score(std::span<const GeneralSuffStats> stats, const Vector& mu, const OmegaFactor& factor,
                        Score* out);

}  // namespace sdmem
