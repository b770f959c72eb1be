#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sdmem/model.hpp"
#include "sdmem/rng.hpp"

namespace sdmem {

struct SimPlan {
    double fine_step = 1e-4;  // Euler step delta
    int thin_factor = 1;      // keep every b-th fine point
    int n_subjects = 1;
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;
    Theta theta_true;
    // Either a single template shared by all subjects or one entry per subject.
    std::vector<SubjectConfig> subjects;
    // Optional random initial condition; replaces SubjectConfig::x0 when set.
    std::function<Vector(std::size_t subject, Engine& rng)> x0_sampler;

    double observation_step() const { return fine_step * thin_factor; }
    const SubjectConfig& subject(std::size_t i) const;
    void validate(const ModelSpec& model) const;
};

struct RealizedSubject {
    Trajectory trajectory;
    Vector phi;
    std::uint64_t stream_seed = 0;
};

/// phi = L z with Omega = L L' and z standard normal.
Vector draw_random_effect(const Matrix& omega, Engine& rng);

/// Euler-Maruyama path of
///   X_{k+1} = X_k + [A + B mu + C phi] delta + Sigma sqrt(delta) xi_k,
/// recorded at every thin_factor-th fine step. The first state is x0 exactly.
Trajectory euler_maruyama(const ModelSpec& model, const SubjectConfig& subject, const Vector& x0,
                          const Vector& mu, const Vector& phi, const SimPlan& plan, Engine& rng);

inline Trajectory euler_maruyama(const ModelSpec& model, const SubjectConfig& subject, const Vector& mu,
                                 const Vector& phi, const SimPlan& plan, Engine& rng) {
    return euler_maruyama(model, subject, subject.x0, mu, phi, plan, rng);
}

std::uint64_t subject_stream_seed(const SimPlan& plan, std::size_t index);

// Subject `index` of the population, reproducible in isolation.
RealizedSubject simulate_subject(const ModelSpec& model, const SimPlan& plan, std::size_t index);

std::vector<RealizedSubject> simulate_population(const ModelSpec& model, const SimPlan& plan, int jobs = 1);

// Keeps points 0, b, 2b, ...; the last point must land on the horizon.
Trajectory thin(const Trajectory& traj, int factor);

}  // namespace sdmem
