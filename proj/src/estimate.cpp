#include "sdmem/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "sdmem/rng.hpp"

namespace sdmem {

namespace omega_param {

int size(int d) { return d * (d + 1) / 2; }

Vector encode(const Matrix& omega) {
    Eigen::LLT<Matrix> llt(omega);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "cannot encode a non-PD omega");
    const Matrix l = llt.matrixL();
    const int d = static_cast<int>(omega.rows());
    Vector eta(size(d));
    int k = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) eta[k++] = i == j ? std::log(l(i, i)) : l(i, j);
    }
    return eta;
}

namespace {
Matrix lower_factor(const Vector& eta, int d) {
    Matrix l = Matrix::Zero(d, d);
    int k = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) l(i, j) = i == j ? std::exp(eta[k++]) : eta[k++];
    }
    return l;
}
}  // namespace

Matrix decode(const Vector& eta, int d) {
    if (eta.size() != size(d)) throw Error(ErrorKind::DimensionMismatch, "log-Cholesky vector has wrong length");
    const Matrix l = lower_factor(eta, d);
    Matrix omega = l * l.transpose();
    return 0.5 * (omega + omega.transpose());
}

// dl/dL = (M + M') L for dl = tr(M dOmega); M is symmetric here.
Vector chain(const Vector& eta, const Matrix& grad_omega, int d) {
    const Matrix l = lower_factor(eta, d);
    const Matrix dl = (grad_omega + grad_omega.transpose()) * l;
    Vector out(size(d));
    int k = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) out[k++] = i == j ? dl(i, i) * l(i, i) : dl(i, j);
    }
    return out;
}

}  // namespace omega_param

Vector vech(const Matrix& m) {
    const int d = static_cast<int>(m.rows());
    Vector out(omega_param::size(d));
    int k = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) out[k++] = m(i, j);
    }
    return out;
}

Matrix unvech(const Vector& v, int d) {
    Matrix m(d, d);
    int k = 0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            m(i, j) = v[k];
            m(j, i) = v[k];
            ++k;
        }
    }
    return m;
}

namespace {

Matrix floor_eigenvalues(const Matrix& m, double floor) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    const Vector lambda = es.eigenvalues().cwiseMax(floor);
    Matrix out = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

Matrix shrunk_covariance(const std::vector<Vector>& points) {
    const Eigen::Index d = points.front().size();
    Vector mean = Vector::Zero(d);
    for (const auto& z : points) mean += z;
    mean /= static_cast<double>(points.size());
    Matrix cov = Matrix::Zero(d, d);
    for (const auto& z : points) cov += (z - mean) * (z - mean).transpose();
    if (points.size() > 1) cov /= static_cast<double>(points.size() - 1);
    Matrix diag = cov.diagonal().asDiagonal();
    return floor_eigenvalues(0.9 * cov + 0.1 * diag, 1e-4);
}

Vector solve_spd_system(const Matrix& a, const Vector& b) {
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
        std::ostringstream os;
        os << "information matrix is numerically singular (eigenvalues " << lo << " .. " << hi << ")";
        throw Error(ErrorKind::SingularInformation, os.str());
    }
    return es.eigenvectors() * (es.eigenvectors().transpose() * b).cwiseQuotient(es.eigenvalues());
}

void require_subjects(std::size_t n) {
    if (n < 2) throw Error(ErrorKind::Identifiability, "at least two subjects are needed to estimate omega");
}

double max_abs(const Score& s) {
    double out = s.mu.size() ? s.mu.cwiseAbs().maxCoeff() : 0.0;
    if (s.omega.size()) out = std::max(out, s.omega.cwiseAbs().maxCoeff());
    return out;
}

Vector mu_given_factor(std::span<const GeneralSuffStats> stats, const OmegaFactor& factor);

// Orthonormal bases of the range of f (first k columns) and of its complement.
Matrix range_basis(const Matrix& f) {
    if (f.cols() == 0) return Matrix::Identity(f.rows(), f.rows());
    return Eigen::HouseholderQR<Matrix>(f).householderQ() * Matrix::Identity(f.rows(), f.rows());
}

// Profile objective f(eta) = -l(mu_hat(Omega), Omega). With full rank, Omega is decoded
// from the log-Cholesky eta; with rank k < d, eta holds the d x k factor F of Omega = F F'.
class Profile {
public:
    Profile(std::span<const GeneralSuffStats> stats, int d, int rank = -1) : stats_(stats), d_(d), rank_(rank) {}

    struct Point {
        Vector eta;
        Theta theta;
        double f = std::numeric_limits<double>::infinity();
        Vector grad;
        double score_norm = std::numeric_limits<double>::infinity();
    };

    Point operator()(const Vector& eta) const {
        if (rank_ >= 0) return on_face(eta);
        Point pt;
        pt.eta = eta;
        pt.theta.omega = omega_param::decode(eta, d_);
        pt.theta.mu = mu_given_omega(stats_, pt.theta.omega);
        Score s;
        pt.f = -loglik_and_score(stats_, pt.theta, &s);
        pt.grad = -omega_param::chain(eta, s.omega, d_);
        pt.score_norm = max_abs(s);
        return pt;
    }

    // Returns nullopt when the point cannot be evaluated (numerical breakdown).
    std::optional<Point> try_eval(const Vector& eta) const {
        if (!eta.allFinite() || eta.cwiseAbs().maxCoeff() > 300.0) return std::nullopt;
        try {
            Point pt = (*this)(eta);
            if (!std::isfinite(pt.f) || !pt.grad.allFinite()) return std::nullopt;
            return pt;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

    int dim() const { return full() ? omega_param::size(d_) : d_ * rank_; }
    bool full() const { return rank_ < 0; }

private:
    // Score norm covers mu and the Omega-score on the range of F (S Q), the stationarity
    // conditions of the factored problem.
    Point on_face(const Vector& eta) const {
        Point pt;
        pt.eta = eta;
        const Matrix f = eta.reshaped(d_, rank_);
        const OmegaFactor factor = OmegaFactor::from_factor(f);
        pt.theta.omega = f * f.transpose();
        pt.theta.mu = mu_given_factor(stats_, factor);
        Score s;
        pt.f = -loglik_and_score(stats_, pt.theta.mu, factor, &s);
        pt.grad = -(2.0 * s.omega * f).reshaped();
        const Matrix face = s.omega * range_basis(f).leftCols(rank_);
        pt.score_norm = s.mu.size() ? s.mu.cwiseAbs().maxCoeff() : 0.0;
        if (face.size()) pt.score_norm = std::max(pt.score_norm, face.cwiseAbs().maxCoeff());
        return pt;
    }

    std::span<const GeneralSuffStats> stats_;
    int d_;
    int rank_;
};

struct RunResult {
    Profile::Point best;
    int iterations = 0;
    double last_step = 0.0;
    bool boundary = false;  // stalled while a Cholesky pivot of Omega collapsed
    double start_scale = 0.0;
    std::vector<TracePoint> trace;
};

// A pivot of Omega below 1e-6 of its largest scale, with the objective flat over 20 iterations.
// start_scale: sqrt of the largest starting variance, so a collapsing d = 1 fit is caught too.
bool at_boundary(const Profile::Point& x, const std::vector<TracePoint>& trace, int d, double start_scale) {
    if (trace.size() < 21) return false;
    const Matrix l = Eigen::LLT<Matrix>(x.theta.omega).matrixL();
    const double scale = std::max(start_scale, std::sqrt(x.theta.omega.diagonal().maxCoeff()));
    if (!(l.diagonal().minCoeff() < 1e-6 * scale) || d == 0) return false;
    const double gain = trace.back().loglik - trace[trace.size() - 21].loglik;
    return gain < 1e-8 * std::max(1.0, std::abs(trace.back().loglik));
}

// Backtracking search along dir; accepts on the Armijo condition, or on the
// approximate Wolfe condition when f has stopped changing above roundoff.
std::optional<Profile::Point> line_search(const Profile& profile, const Profile::Point& x, const Vector& dir,
                                          double alpha) {
    const double slope = x.grad.dot(dir);
    const double noise = 1e-10 * std::max(1.0, std::abs(x.f));
    for (int k = 0; k < 60; ++k, alpha *= 0.5) {
        auto trial = profile.try_eval(x.eta + alpha * dir);
        if (!trial) continue;
        if (trial->f <= x.f + 1e-4 * alpha * slope) return trial;
        const double new_slope = trial->grad.dot(dir);
        if (trial->f <= x.f + noise && std::abs(new_slope) <= 0.9 * std::abs(slope)) return trial;
    }
    return std::nullopt;
}

Matrix fd_hessian(const Profile& profile, const Profile::Point& x) {
    const int n = profile.dim();
    Matrix h(n, n);
    for (int j = 0; j < n; ++j) {
        const double step = 1e-5 * std::max(1.0, std::abs(x.eta[j]));
        Vector up = x.eta, down = x.eta;
        up[j] += step;
        down[j] -= step;
        h.col(j) = (profile(up).grad - profile(down).grad) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
}

// Quasi-Newton on the profile objective, then a Newton polish if that stalls. On the
// full parametrization it stops early at a boundary maximum.
RunResult minimize(const Profile& profile, const Vector& eta0, const FitOptions& options, double tol,
                   double start_scale, int d) {
    RunResult run;
    Profile::Point x = profile(eta0);
    const int n = profile.dim();
    Matrix hinv = Matrix::Identity(n, n);
    run.start_scale = start_scale;
    bool scaled = false;
    int it = 0;
    run.trace.push_back({0, -x.f, x.score_norm, 0.0});

    auto accept = [&](Profile::Point next) {
        run.last_step = (next.eta - x.eta).cwiseAbs().maxCoeff();
        x = std::move(next);
        ++it;
        run.trace.push_back({it, -x.f, x.score_norm, run.last_step});
    };

    // Quasi-Newton phase.
    while (n > 0 && it < options.max_iterations && x.score_norm >= tol) {
        Vector dir = -hinv * x.grad;
        if (x.grad.dot(dir) >= 0.0) {
            hinv.setIdentity();
            dir = -x.grad;
        }
        const double longest = dir.cwiseAbs().maxCoeff();
        if (longest > 2.0) dir *= 2.0 / longest;
        auto next = line_search(profile, x, dir, 1.0);
        if (!next) break;
        const Vector s = next->eta - x.eta;
        const Vector y = next->grad - x.grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                hinv *= sy / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Matrix id = Matrix::Identity(n, n);
            hinv = (id - rho * s * y.transpose()) * hinv * (id - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        accept(std::move(*next));
        if (profile.full() && at_boundary(x, run.trace, d, start_scale)) {
            run.boundary = true;
            break;
        }
    }

    // Newton polish with a finite-difference Hessian when the quasi-Newton phase stalls.
    for (int polish = 0; n > 0 && polish < 20 && !run.boundary && it < options.max_iterations && x.score_norm >= tol;
         ++polish) {
        const Matrix h = fd_hessian(profile, x);
        Eigen::SelfAdjointEigenSolver<Matrix> es(h);
        const double top = es.eigenvalues().cwiseAbs().maxCoeff();
        const Vector lambda = es.eigenvalues().cwiseAbs().cwiseMax(1e-10 * std::max(top, 1e-300));
        const Vector dir = -es.eigenvectors() * (es.eigenvectors().transpose() * x.grad).cwiseQuotient(lambda);
        auto next = line_search(profile, x, dir, 1.0);
        if (!next) {
            auto full = profile.try_eval(x.eta + dir);
            if (!full || full->score_norm >= x.score_norm) break;
            next = std::move(full);
        }
        accept(std::move(*next));
    }

    run.best = std::move(x);
    run.iterations = it;
    return run;
}

RunResult run_profile(std::span<const GeneralSuffStats> stats, const Matrix& omega0, const FitOptions& options) {
    const int d = static_cast<int>(omega0.rows());
    const double tol = options.score_tolerance * static_cast<double>(stats.size());
    const double start_scale = omega0.size() ? std::sqrt(omega0.diagonal().maxCoeff()) : 0.0;
    return minimize(Profile(stats, d), omega_param::encode(omega0), options, tol, start_scale, d);
}

// Refits a boundary point on the face Omega = F F' spanned by its non-negligible
// eigenvectors, dropping further directions while F keeps losing rank.
RunResult run_face(std::span<const GeneralSuffStats> stats, const Matrix& omega, double start_scale,
                   const FitOptions& options, double tol) {
    const int d = static_cast<int>(omega.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(omega);
    Matrix f;
    {
        const double floor = 1e-8 * std::max(start_scale * start_scale, es.eigenvalues().maxCoeff());
        int k = 0;
        while (k < d && es.eigenvalues()[d - 1 - k] >= floor) ++k;
        f = es.eigenvectors().rightCols(k) * es.eigenvalues().tail(k).cwiseSqrt().asDiagonal();
    }
    RunResult total;
    for (;;) {
        const int k = static_cast<int>(f.cols());
        RunResult run = minimize(Profile(stats, d, k), f.reshaped(), options, tol, start_scale, d);
        total.iterations += run.iterations;
        total.last_step = run.last_step;
        total.trace.insert(total.trace.end(), run.trace.begin(), run.trace.end());
        total.best = std::move(run.best);
        if (total.best.score_norm < tol || k == 0) break;
        const Matrix fk = total.best.eta.reshaped(d, k);
        Eigen::JacobiSVD<Matrix> svd(fk, Eigen::ComputeThinU);
        const Vector& sv = svd.singularValues();
        if (!(sv[k - 1] < 1e-3 * std::max(start_scale, sv[0]))) break;
        f = svd.matrixU().leftCols(k - 1) * sv.head(k - 1).asDiagonal();
    }
    total.start_scale = start_scale;
    return total;
}

RunResult run_fixed_point(std::span<const GeneralSuffStats> stats, const Matrix& omega0, const FitOptions& options) {
    const double tol = options.score_tolerance * static_cast<double>(stats.size());
    const int d = static_cast<int>(omega0.rows());
    RunResult run;
    Matrix omega = omega0;
    for (int it = 0;; ++it) {
        Theta theta{mu_given_omega(stats, omega), omega};
        Score s;
        const double ll = loglik_and_score(stats, theta, &s);
        const double norm = max_abs(s);
        run.trace.push_back({it, ll, norm, run.last_step});
        run.best.eta = omega_param::encode(omega);
        run.best.theta = theta;
        run.best.f = -ll;
        run.best.grad = -omega_param::chain(run.best.eta, s.omega, d);
        run.best.score_norm = norm;
        run.iterations = it;
        if (norm < tol || it >= options.max_iterations) break;

        // E-step moments of phi given the data: mean R w, covariance R.
        const OmegaFactor factor(omega);
        Matrix moment = Matrix::Zero(d, d);
        for (const auto& st : stats) {
            Matrix r;
            determinant_terms(st.v2, factor, r);
            const Vector m = r * (st.u2 - st.s * theta.mu);
            moment += m * m.transpose() + r;
        }
        moment /= static_cast<double>(stats.size());
        Matrix next = 0.5 * omega + 0.5 * moment;
        next = 0.5 * (next + next.transpose()).eval();
        run.last_step = (omega_param::encode(next) - run.best.eta).cwiseAbs().maxCoeff();
        omega = std::move(next);
    }
    return run;
}

Vector jitter(const Vector& eta, std::uint64_t seed, int k) {
    Engine rng = make_stream(derive_seed({seed, static_cast<std::uint64_t>(k)}));
    NormalSource normal(rng);
    Vector out = eta;
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += 0.3 * normal();
    return out;
}

Vector mu_given_factor(std::span<const GeneralSuffStats> stats, const OmegaFactor& factor) {
    const Eigen::Index p = stats.front().u1.size();
    Matrix a = Matrix::Zero(p, p);
    Vector b = Vector::Zero(p);
    Matrix r;
    for (const auto& st : stats) {
        if (st.u1.size() != p || st.v2.rows() != factor.chol.rows()) {
            throw Error(ErrorKind::DimensionMismatch, "statistics do not match omega dimensions");
        }
        determinant_terms(st.v2, factor, r);
        const Matrix srt = st.s.transpose() * r;
        a += st.v1 - srt * st.s;
        b += st.u1 - srt * st.u2;
    }
    return solve_spd_system(a, b);
}

}  // namespace

Vector mu_given_omega(std::span<const GeneralSuffStats> stats, const Matrix& omega) {
    if (stats.empty()) throw Error(ErrorKind::InvalidArgument, "no subjects");
    return mu_given_factor(stats, OmegaFactor(omega));
}

Vector mu_given_omega(std::span<const SuffStats> stats, const Matrix& omega) {
    const auto general = to_general(stats);
    return mu_given_omega(std::span<const GeneralSuffStats>(general), omega);
}

Theta default_init(std::span<const SuffStats> stats) {
    if (stats.empty()) throw Error(ErrorKind::InvalidArgument, "no subjects");
    std::vector<Vector> points;
    for (const auto& st : stats) {
        const double lambda = min_eigenvalue(st.v);
        if (!(lambda > 1e-10 * st.v.norm())) {
            throw Error(ErrorKind::SingularV, "subject " + st.subject_id + ": V is singular");
        }
        points.push_back(st.v.ldlt().solve(st.u));
    }
    Theta theta;
    theta.mu = Vector::Zero(points.front().size());
    for (const auto& z : points) theta.mu += z;
    theta.mu /= static_cast<double>(points.size());
    theta.omega = shrunk_covariance(points);
    return theta;
}

Theta default_init(std::span<const GeneralSuffStats> stats) {
    if (stats.empty()) throw Error(ErrorKind::InvalidArgument, "no subjects");
    const Eigen::Index p = stats.front().u1.size();
    Matrix v1 = Matrix::Zero(p, p);
    Vector u1 = Vector::Zero(p);
    for (const auto& st : stats) {
        v1 += st.v1;
        u1 += st.u1;
    }
    Theta theta;
    theta.mu = solve_spd_system(v1, u1);
    std::vector<Vector> points;
    for (const auto& st : stats) {
        const double lambda = min_eigenvalue(st.v2);
        if (!(lambda > 1e-10 * st.v2.norm())) {
            throw Error(ErrorKind::SingularV, "subject " + st.subject_id + ": V2 is singular");
        }
        points.push_back(st.v2.ldlt().solve(st.u2 - st.s * theta.mu));
    }
    theta.omega = shrunk_covariance(points);
    return theta;
}

Vector flat_score(std::span<const GeneralSuffStats> stats, const Theta& theta) {
    const Score s = score(stats, theta);
    const int d = static_cast<int>(theta.omega.rows());
    Vector out(theta.mu.size() + omega_param::size(d));
    out.head(theta.mu.size()) = s.mu;
    Eigen::Index k = theta.mu.size();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) out[k++] = i == j ? s.omega(i, i) : 2.0 * s.omega(i, j);
    }
    return out;
}

Matrix observed_information(std::span<const GeneralSuffStats> stats, const Theta& theta, double step) {
    const Eigen::Index p = theta.mu.size();
    const int d = static_cast<int>(theta.omega.rows());
    const Eigen::Index n = p + omega_param::size(d);
    Matrix info(n, n);
    auto shifted = [&](Eigen::Index c, double h) {
        Theta t = theta;
        if (c < p) {
            t.mu[c] += h;
        } else {
            Eigen::Index k = p;
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j <= i; ++j, ++k) {
                    if (k != c) continue;
                    t.omega(i, j) += h;
                    if (i != j) t.omega(j, i) += h;
                }
            }
        }
        return t;
    };
    for (Eigen::Index c = 0; c < n; ++c) {
        info.col(c) = -(flat_score(stats, shifted(c, step)) - flat_score(stats, shifted(c, -step))) / (2.0 * step);
    }
    return 0.5 * (info + info.transpose());
}

// First-order conditions for a maximum over semidefinite Omega = F F': the score vanishes
// for mu and on the range of F, and is negative semidefinite on its complement.
bool boundary_optimal(std::span<const GeneralSuffStats> stats, const Profile::Point& x, int d, double tol) {
    if (!(x.score_norm < tol)) return false;
    const int k = static_cast<int>(x.eta.size()) / std::max(d, 1);
    const Matrix f = x.eta.reshaped(d, k);
    Score s;
    loglik_and_score(stats, x.theta.mu, OmegaFactor::from_factor(f), &s);
    const Matrix null = range_basis(f).rightCols(d - k);
    if (null.cols() == 0) return true;
    const Matrix block = null.transpose() * s.omega * null;
    return Eigen::SelfAdjointEigenSolver<Matrix>(block, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() < tol;
}

MleFit fit_mle(std::span<const GeneralSuffStats> stats, const Theta& init, const FitOptions& options) {
    require_subjects(stats.size());
    validate_theta(init, static_cast<int>(stats.front().u1.size()), static_cast<int>(stats.front().u2.size()));

    auto run_once = [&](const Matrix& omega0) {
        return options.method == FitMethod::Profile ? run_profile(stats, omega0, options)
                                                    : run_fixed_point(stats, omega0, options);
    };
    RunResult best = run_once(init.omega);
    if (options.extra_starts > 0) {
        const Vector eta0 = omega_param::encode(init.omega);
        const int d = static_cast<int>(init.omega.rows());
        for (int k = 0; k < options.extra_starts; ++k) {
            RunResult other;
            try {
                other = run_once(omega_param::decode(jitter(eta0, options.jitter_seed, k), d));
            } catch (const Error&) {
                continue;
            }
            if (other.best.f < best.best.f) best = std::move(other);
        }
    }

    const double tol = options.score_tolerance * static_cast<double>(stats.size());
    MleFit fit;
    fit.theta_hat = best.best.theta;
    fit.loglik = -best.best.f;
    fit.score_norm = best.best.score_norm;
    fit.iterations = best.iterations;
    fit.last_step = best.last_step;
    fit.converged = fit.score_norm < tol && fit.last_step < options.step_tolerance;
    fit.trace = std::move(best.trace);

    if (best.boundary && !fit.converged) {
        const int d = static_cast<int>(fit.theta_hat.omega.rows());
        const RunResult face = run_face(stats, fit.theta_hat.omega, best.start_scale, options, tol);
        fit.iterations += face.iterations;
        fit.trace.insert(fit.trace.end(), face.trace.begin(), face.trace.end());
        fit.boundary = -face.best.f >= fit.loglik - 1e-8 * std::max(1.0, std::abs(fit.loglik)) &&
                       boundary_optimal(stats, face.best, d, tol);
        if (fit.boundary) {
            fit.theta_hat = face.best.theta;
            fit.theta_hat.omega = 0.5 * (fit.theta_hat.omega + fit.theta_hat.omega.transpose()).eval();
            fit.loglik = -face.best.f;
            fit.score_norm = face.best.score_norm;
            fit.last_step = face.last_step;
        }
        fit.converged = fit.boundary;
        fit.warnings.push_back(fit.boundary ? "maximum on the boundary: omega is singular"
                                            : "stalled near the boundary: omega is nearly singular");
    }
    if (!fit.converged) {
        std::ostringstream os;
        os << "no convergence after " << fit.iterations << " iterations (score norm " << fit.score_norm << ")";
        fit.warnings.push_back(os.str());
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(fit.theta_hat.omega, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < 1e-6 || es.eigenvalues().maxCoeff() > 1e6) {
        std::ostringstream os;
        os << "omega eigenvalues outside [1e-6, 1e6]: " << es.eigenvalues().minCoeff() << " .. "
           << es.eigenvalues().maxCoeff();
        fit.warnings.push_back(os.str());
    }
    if (options.observed_information) {
        try {
            fit.observed_information = observed_information(stats, fit.theta_hat);
        } catch (const Error& e) {
            fit.warnings.push_back(std::string("observed information unavailable: ") + e.what());
        }
    }
    return fit;
}

MleFit fit_mle(std::span<const GeneralSuffStats> stats, const FitOptions& options) {
    require_subjects(stats.size());
    return fit_mle(stats, default_init(stats), options);
}

MleFit fit_mle(std::span<const SuffStats> stats, const Theta& init, const FitOptions& options) {
    const auto general = to_general(stats);
    return fit_mle(std::span<const GeneralSuffStats>(general), init, options);
}

MleFit fit_mle(std::span<const SuffStats> stats, const FitOptions& options) {
    require_subjects(stats.size());
    return fit_mle(stats, default_init(stats), options);
}

}  // namespace sdmem
