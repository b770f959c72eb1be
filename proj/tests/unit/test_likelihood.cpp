#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sdmem/likelihood.hpp"
#include "sdmem/models.hpp"

using namespace sdmem;

namespace {

SuffStats scalar_stats(double u, double v) {
    SuffStats st;
    st.u = Vector::Constant(1, u);
    st.v = Matrix::Constant(1, 1, v);
    st.subject_id = "x";
    return st;
}

Theta scalar_theta(double mu, double omega) { return Theta{Vector::Constant(1, mu), Matrix::Constant(1, 1, omega)}; }

}  // namespace

TEST_CASE("scalar example against quadrature") {
    const SuffStats st = scalar_stats(1.0, 2.0);
    const Theta theta = scalar_theta(0.5, 0.25);
    const LikelihoodTerms terms = subject_loglik(st, theta);
    CHECK(terms.g(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
    CHECK(std::abs(terms.gamma[0]) < 1e-15);
    CHECK(terms.loglik == doctest::Approx(-0.5 * std::log(1.5) + 0.25).epsilon(1e-14));
    // Frozen from the quadrature oracle.
    CHECK(std::abs(terms.loglik - 0.0472674459459178) < 1e-10);
    CHECK(std::abs(terms.loglik - oracle::log_marginal_quadrature(st, theta)) < 1e-9);
}

TEST_CASE("closed form matches quadrature for random d = 1 and d = 2 instances") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 40; ++rep) {
        const int d = 1 + rep % 2;
        const SuffStats st = oracle::random_stats(d, rng);
        const Theta theta{oracle::random_vector(d, rng), oracle::random_spd(d, rng, 0.1)};
        const double closed = subject_loglik(st, theta).loglik;
        const double quad = oracle::log_marginal_quadrature(st, theta);
        CHECK(std::abs(closed - quad) < 1e-6);
    }
}

TEST_CASE("general form matches quadrature and reduces to the B = C form") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 30; ++rep) {
        const int d = 1 + rep % 2;
        const int p = d + 1 + rep % 3;
        const GeneralSuffStats st = oracle::random_general_stats(p, d, rng);
        const Theta theta{oracle::random_vector(p, rng), oracle::random_spd(d, rng, 0.1)};
        const std::vector<GeneralSuffStats> one{st};
        CHECK(std::abs(population_loglik(one, theta) - oracle::log_marginal_quadrature(st, theta)) < 1e-6);
    }
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 1 + rep % 4;
        const std::vector<SuffStats> simple{oracle::random_stats(d, rng), oracle::random_stats(d, rng)};
        const Theta theta{oracle::random_vector(d, rng), oracle::random_spd(d, rng)};
        const double a = population_loglik(simple, theta);
        const double b = population_loglik(to_general(simple), theta);
        CHECK(std::abs(a - b) < 1e-10 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("mu at V^{-1}U zeroes the quadratic term") {
    std::mt19937_64 rng(5);
    const SuffStats st = oracle::random_stats(3, rng);
    const Vector z = st.v.ldlt().solve(st.u);
    const Theta theta{z, oracle::random_spd(3, rng)};
    const LikelihoodTerms terms = subject_loglik(st, theta);
    CHECK(terms.gamma.norm() < 1e-10);
    const Matrix k = Matrix::Identity(3, 3) + st.v * theta.omega;
    CHECK(terms.loglik == doctest::Approx(-0.5 * std::log(k.determinant()) + reference_term(st)).epsilon(1e-12));
}

TEST_CASE("g satisfies (I + V Omega) g = V and has positive real eigenvalues") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 30; ++rep) {
        const int d = 1 + rep % 5;
        const SuffStats st = oracle::random_stats(d, rng);
        const Theta theta{oracle::random_vector(d, rng), oracle::random_spd(d, rng)};
        const LikelihoodTerms terms = subject_loglik(st, theta);
        const Matrix k = Matrix::Identity(d, d) + st.v * theta.omega;
        CHECK((k * terms.g - st.v).norm() < 1e-8 * st.v.norm());
        const Eigen::VectorXcd ev = terms.g.eigenvalues();
        for (Eigen::Index j = 0; j < ev.size(); ++j) {
            CHECK(std::abs(ev[j].imag()) < 1e-8 * std::abs(ev[j]));
            CHECK(ev[j].real() > 0.0);
        }
    }
}

TEST_CASE("population sums subjects") {
    std::mt19937_64 rng(7);
    const SuffStats st = oracle::random_stats(2, rng);
    const Theta theta{oracle::random_vector(2, rng), oracle::random_spd(2, rng)};
    const std::vector<SuffStats> one{st};
    const std::vector<SuffStats> two{st, st};
    CHECK(population_loglik(one, theta) == subject_loglik(st, theta).loglik);
    CHECK(population_loglik(two, theta) == 2.0 * population_loglik(one, theta));
}

TEST_CASE("likelihood differences do not depend on the reference term") {
    std::mt19937_64 rng(8);
    std::vector<SuffStats> stats;
    for (int i = 0; i < 5; ++i) stats.push_back(oracle::random_stats(2, rng));
    const Theta a{oracle::random_vector(2, rng), oracle::random_spd(2, rng)};
    const Theta b{oracle::random_vector(2, rng), oracle::random_spd(2, rng)};
    double ref = 0.0;
    for (const auto& st : stats) ref += reference_term(st);
    const double diff = population_loglik(stats, a) - population_loglik(stats, b);
    const double shifted = (population_loglik(stats, a) - ref) - (population_loglik(stats, b) - ref);
    CHECK(std::abs(diff - shifted) < 1e-10 * std::max(1.0, std::abs(ref)));
}

TEST_CASE("analytic score matches finite differences") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 1 + rep % 3;
        std::vector<SuffStats> stats;
        for (int i = 0; i < 4; ++i) stats.push_back(oracle::random_stats(d, rng));
        const Theta theta{oracle::random_vector(d, rng), oracle::random_spd(d, rng)};
        const Score s = score(stats, theta);
        const auto fd = oracle::fd_score([&](const Theta& t) { return population_loglik(stats, t); }, theta);
        CHECK((s.mu - fd.mu).norm() <= 1e-5 * std::max(1.0, fd.mu.norm()));
        CHECK((oracle::symmetric_directions(s.omega) - fd.omega).norm() <= 1e-5 * std::max(1.0, fd.omega.norm()));
        CHECK((s.omega - s.omega.transpose()).norm() == 0.0);
    }
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 1 + rep % 3;
        const int p = d + rep % 4;
        std::vector<GeneralSuffStats> stats;
        for (int i = 0; i < 4; ++i) stats.push_back(oracle::random_general_stats(p, d, rng));
        const Theta theta{oracle::random_vector(p, rng), oracle::random_spd(d, rng)};
        Score s;
        const double ll = loglik_and_score(stats, theta, &s);
        CHECK(ll == doctest::Approx(population_loglik(stats, theta)).epsilon(1e-13));
        const auto fd = oracle::fd_score([&](const Theta& t) { return population_loglik(stats, t); }, theta);
        CHECK((s.mu - fd.mu).norm() <= 1e-5 * std::max(1.0, fd.mu.norm()));
        CHECK((oracle::symmetric_directions(s.omega) - fd.omega).norm() <= 1e-5 * std::max(1.0, fd.omega.norm()));
    }
}

TEST_CASE("singular V and invalid Omega are reported with the subject") {
    SuffStats st = scalar_stats(1.0, 0.0);
    st.subject_id = "s17";
    const std::vector<SuffStats> bad{scalar_stats(1.0, 1.0), st};
    try {
        population_loglik(bad, scalar_theta(0.0, 1.0));
        FAIL("expected SingularV");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularV);
        CHECK(std::string(e.what()).find("s17") != std::string::npos);
    }
    const std::vector<SuffStats> ok{scalar_stats(1.0, 1.0)};
    try {
        population_loglik(ok, scalar_theta(0.0, -1.0));
        FAIL("expected NotPositiveDefinite");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
    }
}

TEST_CASE("general form tolerates a singular V2 block") {
    // Subjects whose effect columns never move still contribute through V1.
    GeneralSuffStats st;
    st.u1 = Vector::Constant(2, 1.0);
    st.v1 = Matrix::Identity(2, 2);
    st.u2 = Vector::Zero(1);
    st.v2 = Matrix::Zero(1, 1);
    st.s = Matrix::Zero(1, 2);
    const std::vector<GeneralSuffStats> stats{st};
    const Theta theta{Vector::Constant(2, 0.5), Matrix::Constant(1, 1, 0.3)};
    CHECK(population_loglik(stats, theta) == doctest::Approx(1.0 - 0.25).epsilon(1e-14));
}

TEST_CASE("true parameters beat perturbed ones on simulated transfer data") {
    const ModelEntry& entry = registry::get("transfer5");
    int wins = 0, trials = 0;
    for (int rep = 0; rep < 10; ++rep) {
        const auto paths = oracle::simulate_entry(entry, 50, 1e-3, 10, 1000 + static_cast<std::uint64_t>(rep));
        const auto stats = oracle::general_stats(entry.spec, paths);
        const double at_truth = population_loglik(stats, entry.theta_true);
        for (int k = 0; k < 11; ++k) {
            for (double delta : {-0.5, 0.5}) {
                Theta moved = entry.theta_true;
                moved.mu[k] += delta;
                wins += at_truth > population_loglik(stats, moved) ? 1 : 0;
                ++trials;
            }
        }
    }
    MESSAGE("truth preferred in " << wins << " of " << trials);
    CHECK(wins >= 0.95 * trials);
}

TEST_CASE("rank-deficient factor matches the nearly singular limit") {
    std::mt19937_64 rng(10);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 2 + rep % 3;
        const int p = d + rep % 2;
        const int k = rep % d;
        std::vector<GeneralSuffStats> stats;
        for (int i = 0; i < 3; ++i) stats.push_back(oracle::random_general_stats(p, d, rng));
        const Vector mu = oracle::random_vector(p, rng);
        const Matrix f = oracle::random_matrix(d, k, rng);
        Score s;
        const double ll = loglik_and_score(stats, mu, OmegaFactor::from_factor(f), &s);
        const Theta near{mu, f * f.transpose() + 1e-9 * Matrix::Identity(d, d)};
        const Score sn = score(stats, near);
        CHECK(std::abs(ll - population_loglik(stats, near)) < 1e-6 * std::max(1.0, std::abs(ll)));
        CHECK((s.mu - sn.mu).norm() < 1e-5 * std::max(1.0, sn.mu.norm()));
        CHECK((s.omega - sn.omega).norm() < 1e-5 * std::max(1.0, sn.omega.norm()));
        if (k == 0) {
            double fixed_only = 0.0;
            for (const auto& st : stats) fixed_only += st.u1.dot(mu) - 0.5 * mu.dot(st.v1 * mu);
            CHECK(ll == doctest::Approx(fixed_only).epsilon(1e-12));
        }
    }
}
