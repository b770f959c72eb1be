#include "sdmem/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sdmem {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::DimensionMismatch: return "dimension-mismatch";
        case ErrorKind::NotPositiveDefinite: return "not-positive-definite";
        case ErrorKind::SingularGamma: return "singular-gamma";
        case ErrorKind::SingularV: return "singular-v";
        case ErrorKind::SingularInformation: return "singular-information";
        case ErrorKind::NonFiniteState: return "non-finite-state";
        case ErrorKind::TooFewPoints: return "too-few-points";
        case ErrorKind::MissingAntiderivative: return "missing-antiderivative";
        case ErrorKind::RankDeficient: return "rank-deficient";
        case ErrorKind::SingularRestrictedCovariance: return "singular-restricted-covariance";
        case ErrorKind::TooFewReplicates: return "too-few-replicates";
        case ErrorKind::Identifiability: return "identifiability";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

void ModelSpec::validate() const {
    if (state_dim <= 0 || fixed_dim <= 0 || effect_dim <= 0 || covariate_dim < 0) {
        throw Error(ErrorKind::InvalidArgument, "model '" + name + "' has invalid dimensions");
    }
    if (!drift_design || !diffusion) {
        throw Error(ErrorKind::InvalidArgument, "model '" + name + "' needs drift_design and diffusion");
    }
    if (!effect_design) {
        const auto cols = resolved_effect_columns();
        if (static_cast<int>(cols.size()) != effect_dim) {
            throw Error(ErrorKind::DimensionMismatch,
                        "model '" + name + "': effect_columns must list effect_dim columns of the design");
        }
        for (int c : cols) {
            if (c < 0 || c >= fixed_dim) {
                throw Error(ErrorKind::DimensionMismatch, "model '" + name + "': effect column out of range");
            }
        }
    }
}

std::vector<int> ModelSpec::resolved_effect_columns() const {
    if (!effect_columns.empty()) return effect_columns;
    std::vector<int> all(static_cast<std::size_t>(fixed_dim));
    std::iota(all.begin(), all.end(), 0);
    return all;
}

bool ModelSpec::shares_design() const {
    if (effect_design || effect_dim != fixed_dim) return false;
    const auto cols = resolved_effect_columns();
    for (int j = 0; j < fixed_dim; ++j) {
        if (cols[static_cast<std::size_t>(j)] != j) return false;
    }
    return true;
}

CovariateTrack constant_covariates(Vector value) {
    CovariateTrack track;
    track.constant = std::move(value);
    return track;
}

CovariateTrack piecewise_constant_covariates(std::vector<double> times, std::vector<Vector> values) {
    if (times.empty() || times.size() != values.size()) {
        throw Error(ErrorKind::InvalidArgument, "piecewise covariates need matching non-empty times and values");
    }
    if (!std::is_sorted(times.begin(), times.end())) {
        throw Error(ErrorKind::InvalidArgument, "piecewise covariate breakpoints must be sorted");
    }
    CovariateTrack track;
    track.fn = [times = std::move(times), values = std::move(values)](double t) {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        const auto k = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
        return values[k];
    };
    return track;
}

void Trajectory::validate() const {
    const auto n = static_cast<Eigen::Index>(times.size());
    if (states.cols() != n || covariates.cols() != n) {
        throw Error(ErrorKind::DimensionMismatch, "trajectory '" + subject_id + "': states/covariates length differs from times");
    }
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (!(times[k] > times[k - 1])) {
            throw Error(ErrorKind::InvalidArgument, "trajectory '" + subject_id + "': times must be strictly increasing");
        }
    }
}

Matrix gamma(const ModelSpec& model, double t, VecIn x) {
    Matrix sigma(model.state_dim, model.state_dim);
    model.diffusion(t, x, sigma);
    return sigma * sigma.transpose();
}

namespace {

Matrix invert_gamma(const Matrix& g) {
    Eigen::LLT<Matrix> llt(g);
    const double scale = g.diagonal().cwiseAbs().maxCoeff();
    if (llt.info() != Eigen::Success || scale <= 0.0) {
        throw Error(ErrorKind::SingularGamma, "Gamma = Sigma Sigma' is not positive definite");
    }
    const Matrix l = llt.matrixL();
    const double min_pivot = l.diagonal().minCoeff();
    if (min_pivot * min_pivot < 1e-12 * scale) {
        throw Error(ErrorKind::SingularGamma, "Gamma pivot below 1e-12 of the largest diagonal entry");
    }
    Matrix inv = llt.solve(Matrix::Identity(g.rows(), g.cols()));
    return 0.5 * (inv + inv.transpose());
}

}  // namespace

Matrix gamma_inverse(const ModelSpec& model, double t, VecIn x) {
    return invert_gamma(gamma(model, t, x));
}

double min_eigenvalue(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

void validate_theta(const Theta& theta, int fixed_dim, int effect_dim) {
    if (theta.mu.size() != fixed_dim) {
        throw Error(ErrorKind::DimensionMismatch,
                    "mu has length " + std::to_string(theta.mu.size()) + ", expected " + std::to_string(fixed_dim));
    }
    if (theta.omega.rows() != effect_dim || theta.omega.cols() != effect_dim) {
        throw Error(ErrorKind::DimensionMismatch, "omega must be " + std::to_string(effect_dim) + "x" +
                                                      std::to_string(effect_dim));
    }
    if (!theta.mu.allFinite() || !theta.omega.allFinite()) {
        throw Error(ErrorKind::InvalidArgument, "theta has non-finite entries");
    }
    if ((theta.omega - theta.omega.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw Error(ErrorKind::NotPositiveDefinite, "omega is not symmetric");
    }
    const double lambda = min_eigenvalue(theta.omega);
    if (!(lambda > 0.0)) {
        std::ostringstream os;
        os << "omega smallest eigenvalue " << lambda;
        throw Error(ErrorKind::NotPositiveDefinite, os.str());
    }
}

DesignEvaluator::DesignEvaluator(const ModelSpec& model)
    : model_(model),
      offset_(Vector::Zero(model.state_dim)),
      design_(Matrix::Zero(model.state_dim, model.fixed_dim)),
      effects_(Matrix::Zero(model.state_dim, model.effect_dim)) {
    if (!model.effect_design) columns_ = model.resolved_effect_columns();
}

void DesignEvaluator::evaluate(double t, VecIn x, VecIn cov) {
    if (model_.drift_offset) {
        model_.drift_offset(t, x, cov, offset_);
    }
    model_.drift_design(t, x, cov, design_);
    if (model_.effect_design) {
        model_.effect_design(t, x, cov, effects_);
    } else {
        for (std::size_t j = 0; j < columns_.size(); ++j) {
            effects_.col(static_cast<Eigen::Index>(j)) = design_.col(columns_[j]);
        }
    }
}

DiffusionEvaluator::DiffusionEvaluator(const ModelSpec& model)
    : model_(model), sigma_(model.state_dim, model.state_dim) {}

const Matrix& DiffusionEvaluator::sigma(double t, VecIn x) {
    if (!model_.constant_diffusion || !sigma_ready_) {
        model_.diffusion(t, x, sigma_);
        sigma_ready_ = true;
    }
    return sigma_;
}

const Matrix& DiffusionEvaluator::gamma_inverse(double t, VecIn x) {
    if (!model_.constant_diffusion || !gamma_inv_ready_) {
        const Matrix& s = sigma(t, x);
        gamma_inv_ = invert_gamma(s * s.transpose());
        gamma_inv_ready_ = true;
    }
    return gamma_inv_;
}

}  // namespace sdmem
