#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdmem/error.hpp"

namespace sdmem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VecIn = Eigen::Ref<const Vector>;
using VecOut = Eigen::Ref<Vector>;
using MatOut = Eigen::Ref<Matrix>;

// Callbacks write into caller-owned buffers that are already sized.
using OffsetFn = std::function<void(double t, VecIn x, VecIn cov, VecOut out)>;
using DesignFn = std::function<void(double t, VecIn x, VecIn cov, MatOut out)>;
using DiffusionFn = std::function<void(double t, VecIn x, MatOut out)>;

/// Antiderivative data for the Ito-corrected stochastic integral.
///
/// The integrand h(t,x) = B(t,x,D)' Gamma(t,x)^{-1} (p x r) is split row-wise as
/// h_j = grad_x H_j + remainder_j. Rows with a gradient part are integrated by
/// the telescoping Ito identity, the remainder by the left-endpoint rule.
struct ItoAntiderivative {
    std::function<void(double t, VecIn x, VecIn cov, VecOut out)> potential;            // H, length p
    std::function<void(double t, VecIn x, VecIn cov, std::vector<Matrix>& out)> hessian;  // p blocks r x r
    std::function<void(double t, VecIn x, VecIn cov, VecOut out)> time_derivative;      // optional dH/dt
    std::function<void(double t, VecIn x, VecIn cov, MatOut out)> remainder;            // optional p x r
};

/// One SDMEM family:
///   dX = [A(t,X,D) + B(t,X,D) mu + C(t,X,D) phi] dt + Sigma(t,X) dW,  phi ~ N(0, Omega).
///
/// When effect_design is empty, C is the column subset of B listed in
/// effect_columns (all columns if that list is empty), so random effects
/// attach to a subset of the fixed effects.
struct ModelSpec {
    std::string name;
    int state_dim = 0;      // r
    int fixed_dim = 0;      // p
    int effect_dim = 0;     // d
    int covariate_dim = 0;  // s

    OffsetFn drift_offset;  // empty means A = 0
    DesignFn drift_design;  // B, r x p
    DesignFn effect_design; // C, r x d (optional)
    std::vector<int> effect_columns;
    DiffusionFn diffusion;  // Sigma, r x r
    bool constant_diffusion = false;

    std::optional<ItoAntiderivative> ito;

    void validate() const;

    // True when C == B, i.e. every fixed effect carries a random effect.
    bool shares_design() const;

    // Column indices of B carrying random effects; only meaningful without effect_design.
    std::vector<int> resolved_effect_columns() const;
};

struct Theta {
    Vector mu;     // fixed effect, length p
    Matrix omega;  // random-effect covariance, d x d
};

/// Deterministic covariate path D(t). A track built from a constant value is
/// evaluated once per path instead of once per step.
struct CovariateTrack {
    std::function<Vector(double t)> fn;
    std::optional<Vector> constant;

    bool empty() const { return !fn && !constant; }
    Vector operator()(double t) const { return constant ? *constant : fn(t); }
};

CovariateTrack constant_covariates(Vector value);

// Right-continuous step function: value k holds on [times[k], times[k+1]).
CovariateTrack piecewise_constant_covariates(std::vector<double> times, std::vector<Vector> values);

struct SubjectConfig {
    std::string id;
    Vector x0;
    double t0 = 0.0;
    double horizon = 1.0;
    CovariateTrack covariates;  // empty means no covariates (s = 0)
};

struct Trajectory {
    std::string subject_id;
    std::vector<double> times;
    Matrix states;      // r x n, column k observed at times[k]
    Matrix covariates;  // s x n

    std::size_t size() const { return times.size(); }
    void validate() const;
};

/// Gamma(t,x) = Sigma Sigma'.
Matrix gamma(const ModelSpec& model, double t, VecIn x);

/// Inverse of Gamma(t,x) through a Cholesky factorization.
/// Throws SingularGamma when a pivot falls below 1e-12 of the largest diagonal entry.
Matrix gamma_inverse(const ModelSpec& model, double t, VecIn x);

void validate_theta(const Theta& theta, int fixed_dim, int effect_dim);
inline void validate_theta(const Theta& theta, int d) { validate_theta(theta, d, d); }

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& symmetric);

// Evaluates A, B and C at one point into reusable buffers.
class DesignEvaluator {
public:
    explicit DesignEvaluator(const ModelSpec& model);

    void evaluate(double t, VecIn x, VecIn cov);

    const Vector& offset() const { return offset_; }
    const Matrix& design() const { return design_; }
    const Matrix& effects() const { return effects_; }

private:
    const ModelSpec& model_;
    std::vector<int> columns_;
    Vector offset_;
    Matrix design_;
    Matrix effects_;
};

// Sigma and Gamma^{-1} along a path, computed once when the model declares a constant diffusion.
class DiffusionEvaluator {
public:
    explicit DiffusionEvaluator(const ModelSpec& model);

    const Matrix& sigma(double t, VecIn x);
    const Matrix& gamma_inverse(double t, VecIn x);

private:
    const ModelSpec& model_;
    Matrix sigma_;
    Matrix gamma_inv_;
    bool sigma_ready_ = false;
    bool gamma_inv_ready_ = false;
};

}  // namespace sdmem
