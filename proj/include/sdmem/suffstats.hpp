#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdmem/model.hpp"

namespace sdmem {

enum class Scheme { FirstOrder, ItoHigherOrder };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view text);

/// (U_i, V_i) for a model whose random effects sit on every fixed effect (B = C):
///   U = int C' Gamma^{-1} [dX - A dt],  V = int C' Gamma^{-1} C dt.
struct SuffStats {
    Vector u;
    Matrix v;
    std::string subject_id;
    Scheme scheme = Scheme::FirstOrder;
};

/// Statistics for separate fixed (B, p columns) and random (C, d columns) designs:
///   U1 = int B'G^{-1}[dX - A dt], V1 = int B'G^{-1}B dt,
///   U2 = int C'G^{-1}[dX - A dt], V2 = int C'G^{-1}C dt, S = int C'G^{-1}B dt.
struct GeneralSuffStats {
    Vector u1;
    Matrix v1;
    Vector u2;
    Matrix v2;
    Matrix s;  // d x p
    std::string subject_id;
    Scheme scheme = Scheme::FirstOrder;
};

// Left-endpoint discretization; requires model.shares_design().
SuffStats suffstats_first_order(const ModelSpec& model, const Trajectory& traj);

// Ito-corrected stochastic integral with the model's antiderivative; V as in first order.
SuffStats suffstats_ito(const ModelSpec& model, const Trajectory& traj);

// All five integrals; U1 and U2 use the requested scheme.
GeneralSuffStats suffstats_general(const ModelSpec& model, const Trajectory& traj,
                                   Scheme scheme = Scheme::FirstOrder);

SuffStats suffstats(const ModelSpec& model, const Trajectory& traj, Scheme scheme);

// The quintet of a B = C model: u1 = u2 = u, v1 = v2 = s = v.
GeneralSuffStats to_general(const SuffStats& stats);
std::vector<GeneralSuffStats> to_general(std::span<const SuffStats> stats);

// Throws when v is asymmetric or has an eigenvalue below -1e-8 * ||v||.
void check_psd(const Matrix& v, const std::string& what);

struct DiscretizationRow {
    int n = 0;            // grid intervals
    double rms_u = 0.0;   // sqrt(mean |U - U^n|^2)
    double rms_v = 0.0;   // sqrt(mean ||V - V^n||_F^2)
    double rms = 0.0;     // sqrt(mean |U - U^n|^2 + ||V - V^n||_F^2)
};

struct DiscretizationStudy {
    std::vector<DiscretizationRow> rows;
    int reference_n = 0;
    double slope = 0.0;  // least-squares slope of log rms against log n
};

/// RMS error of first-order statistics on coarse grids against the statistics of
/// the finest grid, all computed from the same simulated paths. Each replicate
/// simulates one subject of `subject` with theta over reference_n Euler steps.
DiscretizationStudy discretization_error_study(const ModelSpec& model, const Theta& theta,
                                               const SubjectConfig& subject, const std::vector<int>& steps,
                                               int replicates, int reference_n, std::uint64_t seed);

}  // namespace sdmem
