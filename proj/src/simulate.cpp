#include "sdmem/simulate.hpp"

#include <cmath>
#include <sstream>

#include "sdmem/parallel.hpp"

namespace sdmem {

namespace {

// Number of fine steps covering [t0, horizon]; delta must divide the span.
long fine_step_count(double span, double delta) {
    const double ratio = span / delta;
    const long n = std::lround(ratio);
    if (n <= 0 || std::abs(static_cast<double>(n) * delta - span) > 1e-9 * span) {
        std::ostringstream os;
        os << "fine step " << delta << " does not divide the observation span " << span;
        throw Error(ErrorKind::InvalidArgument, os.str());
    }
    return n;
}

Vector covariate_at(const SubjectConfig& subject, double t) {
    return subject.covariates.empty() ? Vector() : subject.covariates(t);
}

}  // namespace

const SubjectConfig& SimPlan::subject(std::size_t i) const {
    if (subjects.empty()) throw Error(ErrorKind::InvalidArgument, "simulation plan has no subject configuration");
    return subjects.size() == 1 ? subjects.front() : subjects.at(i);
}

void SimPlan::validate(const ModelSpec& model) const {
    if (!(fine_step > 0.0) || thin_factor < 1 || n_subjects < 1) {
        throw Error(ErrorKind::InvalidArgument, "simulation plan needs fine_step > 0, thin_factor >= 1, n_subjects >= 1");
    }
    if (subjects.size() != 1 && subjects.size() != static_cast<std::size_t>(n_subjects)) {
        throw Error(ErrorKind::InvalidArgument, "plan must carry one subject template or one config per subject");
    }
    validate_theta(theta_true, model.fixed_dim, model.effect_dim);
    for (const auto& s : subjects) {
        if (s.x0.size() != model.state_dim) {
            throw Error(ErrorKind::DimensionMismatch, "subject x0 does not match the state dimension");
        }
        if (!(s.horizon > s.t0) || s.t0 < 0.0) {
            throw Error(ErrorKind::InvalidArgument, "subject needs 0 <= t0 < horizon");
        }
        const long steps = fine_step_count(s.horizon - s.t0, fine_step);
        if (steps % thin_factor != 0) {
            throw Error(ErrorKind::InvalidArgument, "thin factor does not divide the number of fine steps");
        }
    }
}

Vector draw_random_effect(const Matrix& omega, Engine& rng) {
    Eigen::LLT<Matrix> llt(omega);
    if (omega.rows() == 0 || llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)) {
        throw Error(ErrorKind::NotPositiveDefinite, "random-effect covariance is not positive definite");
    }
    Vector z(omega.rows());
    NormalSource normal(rng);
    normal.fill(z);
    return llt.matrixL() * z;
}

Trajectory euler_maruyama(const ModelSpec& model, const SubjectConfig& subject, const Vector& x0,
                          const Vector& mu, const Vector& phi, const SimPlan& plan, Engine& rng) {
    const int r = model.state_dim;
    if (x0.size() != r || mu.size() != model.fixed_dim || phi.size() != model.effect_dim) {
        throw Error(ErrorKind::DimensionMismatch, "euler_maruyama: x0/mu/phi dimensions do not match the model");
    }
    const double delta = plan.fine_step;
    const long steps = fine_step_count(subject.horizon - subject.t0, delta);
    const int b = plan.thin_factor;
    if (steps % b != 0) {
        throw Error(ErrorKind::InvalidArgument, "thin factor does not divide the number of fine steps");
    }
    const long n_obs = steps / b;

    const Vector cov0 = covariate_at(subject, subject.t0);
    const bool constant_cov = subject.covariates.empty() || subject.covariates.constant.has_value();
    const Eigen::Index s = cov0.size();

    Trajectory traj;
    traj.subject_id = subject.id;
    traj.times.resize(static_cast<std::size_t>(n_obs + 1));
    traj.states.resize(r, n_obs + 1);
    traj.covariates.resize(s, n_obs + 1);

    // With C a column subset of B the drift is A + B (mu + E phi).
    Vector effective = mu;
    const bool column_effects = !model.effect_design;
    if (column_effects) {
        const auto cols = model.resolved_effect_columns();
        for (std::size_t j = 0; j < cols.size(); ++j) effective[cols[j]] += phi[static_cast<Eigen::Index>(j)];
    }

    DesignEvaluator design(model);
    DiffusionEvaluator diffusion(model);
    NormalSource normal(rng);

    Vector x = x0;
    Vector cov = cov0;
    Vector drift(r);
    Vector xi(r);
    const double sqrt_delta = std::sqrt(delta);

    traj.times[0] = subject.t0;
    traj.states.col(0) = x;
    if (s > 0) traj.covariates.col(0) = cov;

    for (long k = 0; k < steps; ++k) {
        const double t = subject.t0 + static_cast<double>(k) * delta;
        if (!constant_cov) cov = covariate_at(subject, t);
        design.evaluate(t, x, cov);
        if (column_effects) {
            drift.noalias() = design.design() * effective;
        } else {
            drift.noalias() = design.design() * mu;
            drift.noalias() += design.effects() * phi;
        }
        drift += design.offset();
        normal.fill(xi);
        xi *= sqrt_delta;
        const Matrix& sigma = diffusion.sigma(t, x);
        x += drift * delta;
        x.noalias() += sigma * xi;
        if (!x.allFinite()) {
            std::ostringstream os;
            os << "state became non-finite at t = " << subject.t0 + static_cast<double>(k + 1) * delta;
            throw Error(ErrorKind::NonFiniteState, os.str());
        }
        if ((k + 1) % b == 0) {
            const long j = (k + 1) / b;
            const double tj = j == n_obs ? subject.horizon : subject.t0 + static_cast<double>(k + 1) * delta;
            traj.times[static_cast<std::size_t>(j)] = tj;
            traj.states.col(j) = x;
            if (s > 0) traj.covariates.col(j) = constant_cov ? cov0 : covariate_at(subject, tj);
        }
    }
    return traj;
}

std::uint64_t subject_stream_seed(const SimPlan& plan, std::size_t index) {
    return derive_seed({plan.seed, plan.replicate, static_cast<std::uint64_t>(index)});
}

RealizedSubject simulate_subject(const ModelSpec& model, const SimPlan& plan, std::size_t index) {
    RealizedSubject out;
    out.stream_seed = subject_stream_seed(plan, index);
    Engine rng = make_stream(out.stream_seed);
    const SubjectConfig& config = plan.subject(index);
    try {
        out.phi = draw_random_effect(plan.theta_true.omega, rng);
        const Vector x0 = plan.x0_sampler ? plan.x0_sampler(index, rng) : config.x0;
        out.trajectory = euler_maruyama(model, config, x0, plan.theta_true.mu, out.phi, plan, rng);
    } catch (const Error& e) {
        throw Error(e.kind(), "subject " + std::to_string(index) + ": " + e.message());
    }
    if (out.trajectory.subject_id.empty() || plan.subjects.size() == 1) {
        out.trajectory.subject_id = std::to_string(index);
    }
    return out;
}

std::vector<RealizedSubject> simulate_population(const ModelSpec& model, const SimPlan& plan, int jobs) {
    model.validate();
    plan.validate(model);
    std::vector<RealizedSubject> out(static_cast<std::size_t>(plan.n_subjects));
    parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = simulate_subject(model, plan, i); });
    return out;
}

Trajectory thin(const Trajectory& traj, int factor) {
    if (factor < 1) throw Error(ErrorKind::InvalidArgument, "thin factor must be >= 1");
    const auto n = static_cast<Eigen::Index>(traj.size());
    if (n == 0 || (n - 1) % factor != 0) {
        throw Error(ErrorKind::InvalidArgument, "thin factor does not divide the trajectory length");
    }
    const Eigen::Index m = (n - 1) / factor + 1;
    Trajectory out;
    out.subject_id = traj.subject_id;
    out.times.resize(static_cast<std::size_t>(m));
    out.states.resize(traj.states.rows(), m);
    out.covariates.resize(traj.covariates.rows(), m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index k = j * factor;
        out.times[static_cast<std::size_t>(j)] = traj.times[static_cast<std::size_t>(k)];
        out.states.col(j) = traj.states.col(k);
        out.covariates.col(j) = traj.covariates.col(k);
    }
    return out;
}

}  // namespace sdmem
