#pragma once

#include <span>
#include <string>
#include <vector>

#include "sdmem/likelihood.hpp"

namespace sdmem {

/// Log-Cholesky coordinates of an SPD matrix: Omega = L L', L lower triangular,
/// stored row by row as (log L00, L10, log L11, L20, L21, log L22, ...).
namespace omega_param {
int size(int d);
Vector encode(const Matrix& omega);
Matrix decode(const Vector& eta, int d);
// Gradient in eta of a function whose derivative in the free entries of Omega is `grad_omega`.
Vector chain(const Vector& eta, const Matrix& grad_omega, int d);
}  // namespace omega_param

struct TracePoint {
    int iteration = 0;
    double loglik = 0.0;
    double score_norm = 0.0;
    double step = 0.0;
};

struct MleFit {
    Theta theta_hat;
    double loglik = 0.0;
    double score_norm = 0.0;  // max-abs entry of (dl/dmu, dl/dOmega) at theta_hat
    double last_step = 0.0;   // max-abs change of the Omega coordinates in the final iteration
    int iterations = 0;
    bool converged = false;
    // Maximum over semidefinite Omega with a singular Omega-hat; converged is then set by
    // the first-order conditions on the boundary instead of the score norm.
    bool boundary = false;
    // Negative Hessian over (mu, vech Omega); vech runs row-wise over the lower triangle.
    Matrix observed_information;
    std::vector<TracePoint> trace;
    std::vector<std::string> warnings;
};

enum class FitMethod { Profile, FixedPoint };

struct FitOptions {
    FitMethod method = FitMethod::Profile;
    int max_iterations = 500;
    double score_tolerance = 1e-6;  // times N
    double step_tolerance = 1e-2;
    bool observed_information = true;
    int extra_starts = 0;  // jittered restarts on top of the initial value
    std::uint64_t jitter_seed = 7;
};

/// mu maximizing the likelihood for fixed Omega:
///   [sum (V1 - S'RS)]^{-1} sum (U1 - S'R U2),
/// which reduces to [sum G]^{-1} sum (I + V Omega)^{-1} U when B = C.
/// Throws SingularInformation when the system's condition number exceeds 1e12.
Vector mu_given_omega(std::span<const GeneralSuffStats> stats, const Matrix& omega);
Vector mu_given_omega(std::span<const SuffStats> stats, const Matrix& omega);

/// Starting value. B = C: mu0 = mean of V^{-1}U, Omega0 from the sample covariance of V^{-1}U.
/// General: mu0 = (sum V1)^{-1} sum U1, Omega0 from V2^{-1}(U2 - S mu0).
/// The covariance is shrunk as 0.9 S + 0.1 diag(S) with eigenvalues floored at 1e-4.
Theta default_init(std::span<const SuffStats> stats);
Theta default_init(std::span<const GeneralSuffStats> stats);

MleFit fit_mle(std::span<const GeneralSuffStats> stats, const Theta& init, const FitOptions& options = {});
MleFit fit_mle(std::span<const GeneralSuffStats> stats, const FitOptions& options = {});
MleFit fit_mle(std::span<const SuffStats> stats, const Theta& init, const FitOptions& options = {});
MleFit fit_mle(std::span<const SuffStats> stats, const FitOptions& options = {});

// Full score flattened over (mu, vech Omega); off-diagonal entries count both triangles.
Vector flat_score(std::span<const GeneralSuffStats> stats, const Theta& theta);

Matrix observed_information(std::span<const GeneralSuffStats> stats, const Theta& theta, double step = 1e-5);

// Row-wise lower-triangle vectorization and its inverse.
Vector vech(const Matrix& m);
Matrix unvech(const Vector& v, int d);

}  // namespace sdmem
