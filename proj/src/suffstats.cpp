#include "sdmem/suffstats.hpp"

#include <cmath>
#include <numeric>

#include "sdmem/simulate.hpp"

namespace sdmem {

std::string_view to_string(Scheme scheme) {
    return scheme == Scheme::FirstOrder ? "first" : "ito";
}

Scheme parse_scheme(std::string_view text) {
    if (text == "first" || text == "first_order") return Scheme::FirstOrder;
    if (text == "ito" || text == "ito_higher_order") return Scheme::ItoHigherOrder;
    throw Error(ErrorKind::InvalidArgument, "unknown scheme '" + std::string(text) + "' (expected first or ito)");
}

void check_psd(const Matrix& v, const std::string& what) {
    if (v.size() == 0) return;
    const double norm = v.norm();
    if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, norm)) {
        throw Error(ErrorKind::InvalidArgument, what + " is not symmetric");
    }
    const double lambda = min_eigenvalue(v);
    if (lambda < -1e-8 * norm) {
        throw Error(ErrorKind::NotPositiveDefinite, what + " has eigenvalue " + std::to_string(lambda));
    }
}

namespace {

void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

// Stochastic integral sum_k h(t_k, X_k) dX_k for one step, replaced by the Ito identity
// on the gradient part of h.
class ItoIncrement {
public:
    ItoIncrement(const ModelSpec& model)
        : ito_(*model.ito),
          h_now_(model.fixed_dim),
          h_next_(model.fixed_dim),
          dhdt_(Vector::Zero(model.fixed_dim)),
          hess_(static_cast<std::size_t>(model.fixed_dim), Matrix::Zero(model.state_dim, model.state_dim)),
          rem_(Matrix::Zero(model.fixed_dim, model.state_dim)) {}

    void add(double t, double t_next, VecIn x, VecIn x_next, VecIn cov, const Matrix& gamma, VecOut u) {
        const double dt = t_next - t;
        ito_.potential(t, x, cov, h_now_);
        ito_.potential(t_next, x_next, cov, h_next_);
        ito_.hessian(t, x, cov, hess_);
        if (ito_.time_derivative) ito_.time_derivative(t, x, cov, dhdt_);
        for (Eigen::Index j = 0; j < u.size(); ++j) {
            const double trace = (hess_[static_cast<std::size_t>(j)].cwiseProduct(gamma)).sum();
            u[j] += h_next_[j] - h_now_[j] - dt * (dhdt_[j] + 0.5 * trace);
        }
        if (ito_.remainder) {
            ito_.remainder(t, x, cov, rem_);
            u.noalias() += rem_ * (x_next - x);
        }
    }

private:
    const ItoAntiderivative& ito_;
    Vector h_now_;
    Vector h_next_;
    Vector dhdt_;
    std::vector<Matrix> hess_;
    Matrix rem_;
};

}  // namespace

GeneralSuffStats suffstats_general(const ModelSpec& model, const Trajectory& traj, Scheme scheme) {
    traj.validate();
    if (traj.size() < 2) {
        throw Error(ErrorKind::TooFewPoints, "trajectory '" + traj.subject_id + "' needs at least two points");
    }
    if (traj.states.rows() != model.state_dim) {
        throw Error(ErrorKind::DimensionMismatch, "trajectory state dimension does not match model");
    }
    const bool ito = scheme == Scheme::ItoHigherOrder;
    if (ito && (!model.ito || !model.ito->potential || !model.ito->hessian)) {
        throw Error(ErrorKind::MissingAntiderivative, "model '" + model.name + "' has no Ito antiderivative");
    }
    if (ito && model.effect_design) {
        throw Error(ErrorKind::MissingAntiderivative,
                    "Ito scheme needs the random-effect design to be a column subset of the fixed design");
    }

    const int r = model.state_dim;
    const int p = model.fixed_dim;
    const int d = model.effect_dim;
    const bool separate = static_cast<bool>(model.effect_design);

    GeneralSuffStats out;
    out.subject_id = traj.subject_id;
    out.scheme = scheme;
    out.u1 = Vector::Zero(p);
    out.v1 = Matrix::Zero(p, p);

    Vector u2 = Vector::Zero(separate ? d : 0);
    Matrix v2 = Matrix::Zero(separate ? d : 0, separate ? d : 0);
    Matrix s = Matrix::Zero(separate ? d : 0, separate ? p : 0);

    DesignEvaluator design(model);
    DiffusionEvaluator diffusion(model);
    std::optional<ItoIncrement> ito_step;
    if (ito) ito_step.emplace(model);

    Matrix hb(p, r);
    Matrix hb_dt(p, r);
    Matrix hc(d, r);
    Vector resid(r);
    Matrix g(r, r);

    const auto n = static_cast<Eigen::Index>(traj.size());
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
        const double t = traj.times[static_cast<std::size_t>(k)];
        const double t_next = traj.times[static_cast<std::size_t>(k + 1)];
        const double dt = t_next - t;
        const auto x = traj.states.col(k);
        const auto x_next = traj.states.col(k + 1);
        const auto cov = traj.covariates.col(k);

        design.evaluate(t, x, cov);
        const Matrix& gamma_inv = diffusion.gamma_inverse(t, x);
        hb.noalias() = design.design().transpose() * gamma_inv;
        resid = x_next - x - design.offset() * dt;

        if (ito) {
            const Matrix& sigma = diffusion.sigma(t, x);
            g.noalias() = sigma * sigma.transpose();
            ito_step->add(t, t_next, x, x_next, cov, g, out.u1);
            out.u1.noalias() -= hb * (design.offset() * dt);
        } else {
            out.u1.noalias() += hb * resid;
        }
        hb_dt = hb * dt;
        out.v1.noalias() += hb_dt * design.design();

        if (separate) {
            hc.noalias() = design.effects().transpose() * gamma_inv;
            u2.noalias() += hc * resid;
            hc *= dt;
            v2.noalias() += hc * design.effects();
            s.noalias() += hc * design.design();
        }
    }
    symmetrize(out.v1);

    if (separate) {
        symmetrize(v2);
        out.u2 = std::move(u2);
        out.v2 = std::move(v2);
        out.s = std::move(s);
    } else {
        const auto cols = model.resolved_effect_columns();
        out.u2.resize(d);
        out.v2.resize(d, d);
        out.s.resize(d, p);
        for (int a = 0; a < d; ++a) {
            const int ca = cols[static_cast<std::size_t>(a)];
            out.u2[a] = out.u1[ca];
            out.s.row(a) = out.v1.row(ca);
            for (int c = 0; c < d; ++c) out.v2(a, c) = out.v1(ca, cols[static_cast<std::size_t>(c)]);
        }
    }
    check_psd(out.v1, "V1 of subject '" + traj.subject_id + "'");
    check_psd(out.v2, "V2 of subject '" + traj.subject_id + "'");
    return out;
}

SuffStats suffstats(const ModelSpec& model, const Trajectory& traj, Scheme scheme) {
    if (!model.shares_design()) {
        throw Error(ErrorKind::InvalidArgument,
                    "model '" + model.name + "' has separate fixed and random designs; use suffstats_general");
    }
    GeneralSuffStats g = suffstats_general(model, traj, scheme);
    SuffStats out;
    out.u = std::move(g.u1);
    out.v = std::move(g.v1);
    out.subject_id = std::move(g.subject_id);
    out.scheme = scheme;
    return out;
}

SuffStats suffstats_first_order(const ModelSpec& model, const Trajectory& traj) {
    return suffstats(model, traj, Scheme::FirstOrder);
}

SuffStats suffstats_ito(const ModelSpec& model, const Trajectory& traj) {
    return suffstats(model, traj, Scheme::ItoHigherOrder);
}

GeneralSuffStats to_general(const SuffStats& stats) {
    GeneralSuffStats g;
    g.u1 = stats.u;
    g.v1 = stats.v;
    g.u2 = stats.u;
    g.v2 = stats.v;
    g.s = stats.v;
    g.subject_id = stats.subject_id;
    g.scheme = stats.scheme;
    return g;
}

std::vector<GeneralSuffStats> to_general(std::span<const SuffStats> stats) {
    std::vector<GeneralSuffStats> out;
    out.reserve(stats.size());
    for (const auto& s : stats) out.push_back(to_general(s));
    return out;
}

DiscretizationStudy discretization_error_study(const ModelSpec& model, const Theta& theta,
                                               const SubjectConfig& subject, const std::vector<int>& steps,
                                               int replicates, int reference_n, std::uint64_t seed) {
    if (steps.empty() || replicates < 1) {
        throw Error(ErrorKind::InvalidArgument, "discretization study needs grid sizes and replicates");
    }
    for (int n : steps) {
        if (n < 1 || reference_n % n != 0) {
            throw Error(ErrorKind::InvalidArgument, "every grid size must divide the reference grid size");
        }
    }
    SimPlan plan;
    plan.fine_step = (subject.horizon - subject.t0) / reference_n;
    plan.thin_factor = 1;
    plan.n_subjects = 1;
    plan.seed = seed;
    plan.theta_true = theta;
    plan.subjects = {subject};
    plan.validate(model);

    std::vector<double> sum_u(steps.size(), 0.0);
    std::vector<double> sum_v(steps.size(), 0.0);
    for (int m = 0; m < replicates; ++m) {
        plan.replicate = static_cast<std::uint64_t>(m);
        const RealizedSubject fine = simulate_subject(model, plan, 0);
        const GeneralSuffStats ref = suffstats_general(model, fine.trajectory);
        for (std::size_t j = 0; j < steps.size(); ++j) {
            const GeneralSuffStats coarse = suffstats_general(model, thin(fine.trajectory, reference_n / steps[j]));
            sum_u[j] += (coarse.u1 - ref.u1).squaredNorm();
            sum_v[j] += (coarse.v1 - ref.v1).squaredNorm();
        }
    }

    DiscretizationStudy study;
    study.reference_n = reference_n;
    for (std::size_t j = 0; j < steps.size(); ++j) {
        DiscretizationRow row;
        row.n = steps[j];
        row.rms_u = std::sqrt(sum_u[j] / replicates);
        row.rms_v = std::sqrt(sum_v[j] / replicates);
        row.rms = std::sqrt((sum_u[j] + sum_v[j]) / replicates);
        study.rows.push_back(row);
    }
    if (steps.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (const auto& row : study.rows) {
            mx += std::log(row.n);
            my += std::log(row.rms);
        }
        mx /= static_cast<double>(steps.size());
        my /= static_cast<double>(steps.size());
        double sxy = 0.0, sxx = 0.0;
        for (const auto& row : study.rows) {
            const double dx = std::log(row.n) - mx;
            sxy += dx * (std::log(row.rms) - my);
            sxx += dx * dx;
        }
        study.slope = sxy / sxx;
    }
    return study;
}

}  // namespace sdmem
