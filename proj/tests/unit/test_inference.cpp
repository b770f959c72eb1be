#include "doctest.h"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sdmem/inference.hpp"
#include "sdmem/models.hpp"

using namespace sdmem;

namespace {

WaldSpec spec_for(int k, int s) {
    WaldSpec spec;
    for (int j = 0; j < s; ++j) spec.selector.push_back(j);
    spec.l_matrix = Matrix::Identity(k, s);
    spec.eta0 = Vector::Zero(k);
    return spec;
}

}  // namespace

TEST_CASE("chi-square tail at known points") {
    CHECK(chi2_sf(0.0, 3) == 1.0);
    CHECK(chi2_sf(2.0 * std::log(20.0), 2) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(chi2_sf(1.96 * 1.96, 1) == doctest::Approx(0.04999579).epsilon(1e-6));
    CHECK(std::abs(chi2_sf(11.0705, 5) - 0.05) < 1e-5);
    CHECK(chi2_sf(1e4, 5) < 1e-300);
    CHECK_THROWS_AS(chi2_sf(1.0, 0), Error);
}

TEST_CASE("incomplete gamma agrees with an independent implementation") {
    for (double a : {0.5, 1.0, 1.5, 2.5, 5.0, 12.5, 40.0}) {
        for (double x : {1e-3, 0.1, 0.7, 1.0, 2.0, 5.0, 10.0, 30.0, 80.0}) {
            const double want = boost::math::gamma_q(a, x);
            if (want < 1e-300) continue;
            CHECK(gamma_q(a, x) == doctest::Approx(want).epsilon(1e-10));
        }
    }
}

TEST_CASE("chi-square tail is decreasing in x") {
    for (int k : {1, 2, 5, 11}) {
        double prev = 1.0;
        for (double x = 0.05; x < 60.0; x += 0.05) {
            const double q = chi2_sf(x, k);
            CHECK(q <= prev);
            prev = q;
        }
    }
}

TEST_CASE("chi-square tail matches simulated frequencies") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    const int n = 1000000;
    const std::vector<double> cuts{2.0, 4.35, 9.24, 15.0};
    std::vector<int> above(cuts.size(), 0);
    for (int i = 0; i < n; ++i) {
        double w = 0.0;
        for (int j = 0; j < 5; ++j) {
            const double z = normal(rng);
            w += z * z;
        }
        for (std::size_t c = 0; c < cuts.size(); ++c) above[c] += w > cuts[c] ? 1 : 0;
    }
    for (std::size_t c = 0; c < cuts.size(); ++c) {
        const double p = chi2_sf(cuts[c], 5);
        const double freq = static_cast<double>(above[c]) / n;
        CHECK(std::abs(freq - p) < 4.0 * std::sqrt(p * (1.0 - p) / n));
    }
}

TEST_CASE("Wald statistic examples") {
    WaldSpec one = spec_for(1, 1);
    const WaldResult r = wald_test(Vector::Constant(1, 1.96), Matrix::Identity(1, 1), one);
    CHECK(r.statistic == doctest::Approx(3.8416).epsilon(1e-12));
    CHECK(r.df == 1);
    CHECK(r.p_value == doctest::Approx(0.05).epsilon(1e-3));

    const WaldSpec three = spec_for(3, 3);
    const WaldResult null = wald_test(Vector::Zero(3), Matrix::Identity(3, 3), three);
    CHECK(null.statistic == 0.0);
    CHECK(null.p_value == 1.0);
    CHECK_FALSE(null.reject);

    const WaldResult far = wald_test(Vector::Constant(3, 10.0), Matrix::Identity(3, 3), three);
    CHECK(far.reject);
}

TEST_CASE("Wald statistic is invariant to rescaling rows of L") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        const int s = 2 + rep % 4;
        const int k = 1 + rep % s;
        WaldSpec spec = spec_for(k, s);
        spec.l_matrix = oracle::random_matrix(k, s, rng);
        spec.eta0 = oracle::random_vector(k, rng);
        const Vector beta = oracle::random_vector(s, rng);
        const Matrix cov = oracle::random_spd(s, rng);
        const double w = wald_test(beta, cov, spec).statistic;
        WaldSpec scaled = spec;
        for (int i = 0; i < k; ++i) {
            const double c = 0.1 + 10.0 * static_cast<double>(i + 1);
            scaled.l_matrix.row(i) *= c;
            scaled.eta0[i] *= c;
        }
        CHECK(wald_test(beta, cov, scaled).statistic == doctest::Approx(w).epsilon(1e-10));
    }
}

TEST_CASE("Wald test errors") {
    WaldSpec spec = spec_for(2, 2);
    spec.l_matrix << 1.0, 2.0, 2.0, 4.0;
    try {
        wald_test(Vector::Zero(2), Matrix::Identity(2, 2), spec);
        FAIL("expected RankDeficient");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RankDeficient);
    }

    WaldSpec ok = spec_for(2, 2);
    Matrix singular(2, 2);
    singular << 1.0, 1.0, 1.0, 1.0;
    try {
        wald_test(Vector::Zero(2), singular, ok);
        FAIL("expected SingularRestrictedCovariance");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularRestrictedCovariance);
    }

    WaldSpec tall = spec_for(2, 2);
    tall.l_matrix = Matrix::Identity(3, 2);
    tall.eta0 = Vector::Zero(3);
    CHECK_THROWS_AS(wald_test(Vector::Zero(2), Matrix::Identity(2, 2), tall), Error);
}

TEST_CASE("replicate covariance of beta") {
    const std::vector<Vector> same{Vector::Constant(3, 1.0), Vector::Constant(3, 1.0)};
    CHECK(beta_covariance(same, {1, 2}).norm() == 0.0);

    Vector a(3), b(3);
    a << 0.0, 1.0, 2.0;
    b << 5.0, 3.0, 2.0;
    const std::vector<Vector> pair{a, b};
    const Matrix cov = beta_covariance(pair, {1, 2});
    CHECK(cov(0, 0) == doctest::Approx(2.0));
    CHECK(cov(1, 1) == 0.0);
    CHECK(select_beta(b, {0, 2}) == Vector((Vector(2) << 5.0, 2.0).finished()));

    const std::vector<Vector> one{a};
    try {
        beta_covariance(one, {0});
        FAIL("expected TooFewReplicates");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooFewReplicates);
    }
    CHECK_THROWS_AS(beta_covariance(pair, {3}), Error);
}

TEST_CASE("observed-information covariance of beta") {
    MleFit fit;
    fit.theta_hat.mu = Vector::Zero(3);
    fit.theta_hat.omega = Matrix::Identity(1, 1);
    Vector diag(4);
    diag << 1.0, 4.0, 10.0, 2.0;
    fit.observed_information = diag.asDiagonal();
    const Matrix cov = beta_covariance(fit, {1, 2});
    CHECK(cov(0, 0) == doctest::Approx(0.25));
    CHECK(cov(1, 1) == doctest::Approx(0.1));
    CHECK(cov(0, 1) == 0.0);

    fit.observed_information(2, 2) = 0.0;
    fit.observed_information(1, 1) = 0.0;
    CHECK_THROWS_AS(beta_covariance(fit, {1, 2}), Error);

    MleFit empty = fit;
    empty.observed_information.resize(0, 0);
    try {
        beta_covariance(empty, {1});
        FAIL("expected SingularInformation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularInformation);
    }
}

TEST_CASE("observed and replicate covariances agree on transfer data") {
    const ModelEntry& entry = registry::get("transfer5");
    const int replicates = 100;
    std::vector<MleFit> fits;
    Matrix observed = Matrix::Zero(5, 5);
    for (int m = 0; m < replicates; ++m) {
        const auto stats =
            oracle::general_stats(entry.spec, oracle::simulate_entry(entry, 100, 1e-2, 1, 500 + static_cast<std::uint64_t>(m)));
        MleFit fit = fit_mle(stats);
        // Boundary maxima carry no observed information.
        if (!fit.converged || fit.boundary) continue;
        observed += beta_covariance(fit, entry.beta_selector);
        fits.push_back(std::move(fit));
    }
    REQUIRE(fits.size() >= 90);
    observed /= static_cast<double>(fits.size());
    const Matrix replicate = beta_covariance(fits, entry.beta_selector);
    for (int j = 0; j < 5; ++j) {
        const double ratio = observed(j, j) / replicate(j, j);
        MESSAGE("beta" << j + 1 << " observed/replicate variance " << ratio);
        CHECK(ratio > 0.5);
        CHECK(ratio < 2.0);
    }

    WaldSpec spec;
    spec.selector = entry.beta_selector;
    spec.l_matrix = Matrix::Identity(5, 5);
    spec.eta0 = select_beta(entry.theta_true.mu, entry.beta_selector);
    const WaldResult r = wald_test(fits.front(), spec);
    CHECK(r.df == 5);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
}
