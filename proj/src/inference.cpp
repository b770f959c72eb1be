#include "sdmem/inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace sdmem {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 100000;

// P(a, x) by its power series; converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < kMaxTerms; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by the modified Lentz continued fraction; for x >= a + 1.
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxTerms; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_selector(const std::vector<int>& selector, Eigen::Index p) {
    if (selector.empty()) throw Error(ErrorKind::InvalidArgument, "empty beta selector");
    for (int j : selector) {
        if (j < 0 || j >= p) throw Error(ErrorKind::DimensionMismatch, "beta selector index out of range");
    }
}

}  // namespace

double gamma_q(double a, double x) {
    if (!(a > 0.0) || !(x >= 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma_q needs a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    if (x < a + 1.0) return std::max(0.0, 1.0 - gamma_p_series(a, x));
    return gamma_q_fraction(a, x);
}

double chi2_sf(double x, int k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "chi-square degrees of freedom must be positive");
    if (std::isnan(x)) throw Error(ErrorKind::InvalidArgument, "chi-square argument is NaN");
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * k, 0.5 * x);
}

Vector select_beta(const Vector& mu, const std::vector<int>& selector) {
    check_selector(selector, mu.size());
    Vector out(static_cast<Eigen::Index>(selector.size()));
    for (std::size_t j = 0; j < selector.size(); ++j) out[static_cast<Eigen::Index>(j)] = mu[selector[j]];
    return out;
}

WaldResult wald_test(const Vector& beta_hat, const Matrix& beta_cov, const WaldSpec& spec) {
    const Eigen::Index s = beta_hat.size();
    const Matrix& l = spec.l_matrix;
    const Eigen::Index k = l.rows();
    if (k < 1 || l.cols() != s || spec.eta0.size() != k || beta_cov.rows() != s || beta_cov.cols() != s) {
        throw Error(ErrorKind::DimensionMismatch, "Wald test: L must be k x s, eta0 length k, covariance s x s");
    }
    if (k > s) throw Error(ErrorKind::RankDeficient, "more restrictions than coefficients");
    Eigen::JacobiSVD<Matrix> svd(l);
    const Vector sv = svd.singularValues();
    const double threshold = 1e-10 * sv.maxCoeff();
    if (!(sv.maxCoeff() > 0.0) || (sv.array() > threshold).count() < k) {
        throw Error(ErrorKind::RankDeficient, "restriction matrix L is rank deficient");
    }
    Matrix restricted = l * beta_cov * l.transpose();
    restricted = 0.5 * (restricted + restricted.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(restricted);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e14) {
        std::ostringstream os;
        os << "L V L' is singular (eigenvalues " << lo << " .. " << hi << ")";
        throw Error(ErrorKind::SingularRestrictedCovariance, os.str());
    }
    const Vector resid = l * beta_hat - spec.eta0;
    const Vector z = es.eigenvectors().transpose() * resid;
    WaldResult out;
    out.statistic = std::max(0.0, z.cwiseQuotient(es.eigenvalues()).dot(z));
    out.df = static_cast<int>(k);
    out.p_value = chi2_sf(out.statistic, out.df);
    out.reject = out.p_value < spec.alpha;
    return out;
}

Matrix beta_covariance(std::span<const Vector> mu_hats, const std::vector<int>& selector) {
    if (mu_hats.size() < 2) throw Error(ErrorKind::TooFewReplicates, "replicate covariance needs at least two fits");
    std::vector<Vector> betas;
    for (const auto& mu : mu_hats) betas.push_back(select_beta(mu, selector));
    const Eigen::Index s = betas.front().size();
    Vector mean = Vector::Zero(s);
    for (const auto& b : betas) mean += b;
    mean /= static_cast<double>(betas.size());
    Matrix cov = Matrix::Zero(s, s);
    for (const auto& b : betas) cov += (b - mean) * (b - mean).transpose();
    cov /= static_cast<double>(betas.size() - 1);
    return 0.5 * (cov + cov.transpose());
}

Matrix beta_covariance(std::span<const MleFit> fits, const std::vector<int>& selector) {
    std::vector<Vector> mus;
    mus.reserve(fits.size());
    for (const auto& f : fits) mus.push_back(f.theta_hat.mu);
    return beta_covariance(std::span<const Vector>(mus), selector);
}

Matrix beta_covariance(const MleFit& fit, const std::vector<int>& selector) {
    const Matrix& info = fit.observed_information;
    if (info.size() == 0) throw Error(ErrorKind::SingularInformation, "fit carries no observed information");
    check_selector(selector, fit.theta_hat.mu.size());
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (info + info.transpose()));
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e14) {
        std::ostringstream os;
        os << "observed information is not invertible (eigenvalues " << lo << " .. " << hi << ")";
        throw Error(ErrorKind::SingularInformation, os.str());
    }
    const Matrix inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    const auto s = static_cast<Eigen::Index>(selector.size());
    Matrix out(s, s);
    for (Eigen::Index a = 0; a < s; ++a) {
        for (Eigen::Index b = 0; b < s; ++b) out(a, b) = inv(selector[a], selector[b]);
    }
    return 0.5 * (out + out.transpose());
}

WaldResult wald_test(const MleFit& fit, const WaldSpec& spec) {
    if (spec.cov_source != CovarianceSource::ObservedInformation) {
        throw Error(ErrorKind::InvalidArgument, "a single fit supports only the observed-information covariance");
    }
    return wald_test(select_beta(fit.theta_hat.mu, spec.selector), beta_covariance(fit, spec.selector), spec);
}

}  // namespace sdmem
