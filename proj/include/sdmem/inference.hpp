#pragma once

#include <span>
#include <vector>

#include "sdmem/estimate.hpp"

namespace sdmem {

// Upper tail of the chi-square distribution with k degrees of freedom: Q(k/2, x/2).
double chi2_sf(double x, int k);

// Regularized upper incomplete gamma function Q(a, x).
double gamma_q(double a, double x);

enum class CovarianceSource { ObservedInformation, ReplicateCovariance };

/// H0: L beta = eta0 with beta = mu[selector], L of size k x s and rank k.
struct WaldSpec {
    std::vector<int> selector;
    Matrix l_matrix;
    Vector eta0;
    CovarianceSource cov_source = CovarianceSource::ObservedInformation;
    double alpha = 0.05;
};

struct WaldResult {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    bool reject = false;  // p_value < alpha
};

// W = (L b - eta0)' (L V L')^{-1} (L b - eta0).
WaldResult wald_test(const Vector& beta_hat, const Matrix& beta_cov, const WaldSpec& spec);

// Uses the fit's observed information for the covariance.
WaldResult wald_test(const MleFit& fit, const WaldSpec& spec);

Vector select_beta(const Vector& mu, const std::vector<int>& selector);

// Sample covariance (divisor M - 1) of beta across fits.
Matrix beta_covariance(std::span<const MleFit> fits, const std::vector<int>& selector);
Matrix beta_covariance(std::span<const Vector> mu_hats, const std::vector<int>& selector);

// Beta block of the inverse observed information.
Matrix beta_covariance(const MleFit& fit, const std::vector<int>& selector);

}  // namespace sdmem
