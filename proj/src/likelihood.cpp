#include "sdmem/likelihood.hpp"

#include <cmath>
#include <sstream>

namespace sdmem {

namespace {

template <class F>
auto tagged(const std::string& subject_id, std::size_t index, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const Error& e) {
        const std::string id = subject_id.empty() ? std::to_string(index) : subject_id;
        throw Error(e.kind(), "subject " + id + ": " + e.message());
    }
}

void check_invertible_v(const Matrix& v) {
    const double norm = v.norm();
    const double lambda = v.size() == 0 ? 0.0 : min_eigenvalue(v);
    if (!(lambda > 1e-10 * norm)) {
        std::ostringstream os;
        os << "V is singular (smallest eigenvalue " << lambda << ", norm " << norm << ")";
        throw Error(ErrorKind::SingularV, os.str());
    }
}

}  // namespace

// K = I + L'VL is symmetric PD with det K = det(I + V Omega); R = L K^{-1} L'.
double determinant_terms(const Matrix& v, const OmegaFactor& factor, Matrix& r) {
    const Matrix& chol = factor.chol;
    const Eigen::Index rank = chol.cols();
    const Matrix k = Matrix::Identity(rank, rank) + chol.transpose() * v * chol;
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::NotPositiveDefinite, "I + V Omega lost positive definiteness");
    }
    const Matrix lk = llt.matrixL();
    const Matrix m = lk.triangularView<Eigen::Lower>().solve(chol.transpose());
    r = m.transpose() * m;
    return 2.0 * lk.diagonal().array().log().sum();
}

OmegaFactor::OmegaFactor(const Matrix& omega) {
    Eigen::LLT<Matrix> llt(omega);
    if (omega.rows() == 0 || llt.info() != Eigen::Success) {
        throw Error(ErrorKind::NotPositiveDefinite, "omega is not positive definite");
    }
    chol = llt.matrixL();
}

OmegaFactor OmegaFactor::from_factor(Matrix f) {
    if (f.cols() > f.rows() || !f.allFinite()) throw Error(ErrorKind::InvalidArgument, "bad omega factor");
    OmegaFactor out;
    out.chol = std::move(f);
    return out;
}

LikelihoodTerms subject_loglik(const SuffStats& stats, const Theta& theta) {
    validate_theta(theta, static_cast<int>(stats.u.size()));
    if (stats.v.rows() != stats.u.size() || stats.v.cols() != stats.u.size()) {
        throw Error(ErrorKind::DimensionMismatch, "V does not match U");
    }
    check_invertible_v(stats.v);
    const OmegaFactor factor(theta.omega);
    LikelihoodTerms out;
    const double logdet = determinant_terms(stats.v, factor, out.r);
    out.g = stats.v - stats.v * out.r * stats.v;
    out.g = 0.5 * (out.g + out.g.transpose()).eval();
    const Vector z = stats.v.ldlt().solve(stats.u);
    const Vector diff = theta.mu - z;
    out.gamma = -(out.g * diff);
    out.loglik = -0.5 * logdet - 0.5 * diff.dot(out.g * diff) + 0.5 * stats.u.dot(z);
    return out;
}

double reference_term(const SuffStats& stats) {
    check_invertible_v(stats.v);
    return 0.5 * stats.u.dot(stats.v.ldlt().solve(stats.u));
}

double population_loglik(std::span<const SuffStats> stats, const Theta& theta) {
    double total = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        total += tagged(stats[i].subject_id, i, [&] { return subject_loglik(stats[i], theta).loglik; });
    }
    return total;
}

Score score(std::span<const SuffStats> stats, const Theta& theta) {
    const auto d = theta.mu.size();
    Score out{Vector::Zero(d), Matrix::Zero(d, d)};
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const LikelihoodTerms t = tagged(stats[i].subject_id, i, [&] { return subject_loglik(stats[i], theta); });
        out.mu += t.gamma;
        out.omega += t.gamma * t.gamma.transpose() - t.g;
    }
    out.omega *= 0.5;
    out.omega = 0.5 * (out.omega + out.omega.transpose()).eval();
    return out;
}

GeneralTerms subject_terms(const GeneralSuffStats& stats, const Theta& theta, const OmegaFactor& factor) {
    if (theta.omega.rows() != factor.chol.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "statistics do not match theta dimensions");
    }
    return subject_terms(stats, theta.mu, factor);
}

GeneralTerms subject_terms(const GeneralSuffStats& stats, const Vector& mu, const OmegaFactor& factor) {
    const Eigen::Index p = stats.u1.size();
    const Eigen::Index d = stats.u2.size();
    if (mu.size() != p || factor.chol.rows() != d || stats.v1.rows() != p || stats.v2.rows() != d ||
        stats.s.rows() != d || stats.s.cols() != p) {
        throw Error(ErrorKind::DimensionMismatch, "statistics do not match theta dimensions");
    }
    GeneralTerms out;
    out.logdet = determinant_terms(stats.v2, factor, out.r);
    out.g = stats.v2 - stats.v2 * out.r * stats.v2;
    out.g = 0.5 * (out.g + out.g.transpose()).eval();
    out.w = stats.u2 - stats.s * mu;
    const Vector rw = out.r * out.w;
    out.p = out.w - stats.v2 * rw;
    out.loglik = -0.5 * out.logdet + stats.u1.dot(mu) - 0.5 * mu.dot(stats.v1 * mu) + 0.5 * out.w.dot(rw);
    return out;
}

double loglik_and_score(std::span<const GeneralSuffStats> stats, const Theta& theta, Score* out) {
    if (stats.empty()) throw Error(ErrorKind::InvalidArgument, "no subjects");
    validate_theta(theta, static_cast<int>(stats.front().u1.size()), static_cast<int>(stats.front().u2.size()));
    return loglik_and_score(stats, theta.mu, OmegaFactor(theta.omega), out);
}

double loglik_and_score(std::span<const GeneralSuffStats> stats, const Vector& mu, const OmegaFactor& factor,
                        Score* out) {
    if (stats.empty()) throw Error(ErrorKind::InvalidArgument, "no subjects");
    const auto p = mu.size();
    const auto d = factor.chol.rows();
    if (out) *out = Score{Vector::Zero(p), Matrix::Zero(d, d)};
    double total = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const GeneralTerms t = tagged(stats[i].subject_id, i, [&] { return subject_terms(stats[i], mu, factor); });
        total += t.loglik;
        if (out) {
            out->mu += stats[i].u1 - stats[i].v1 * mu - stats[i].s.transpose() * (t.r * t.w);
            out->omega += t.p * t.p.transpose() - t.g;
        }
    }
    if (out) {
        out->omega *= 0.5;
        out->omega = 0.5 * (out->omega + out->omega.transpose()).eval();
    }
    return total;
}

double population_loglik(std::span<const GeneralSuffStats> stats, const Theta& theta) {
    return loglik_and_score(stats, theta, nullptr);
}

Score score(std::span<const GeneralSuffStats> stats, const Theta& theta) {
    Score out;
    loglik_and_score(stats, theta, &out);
    return out;
}

}  // namespace sdmem
