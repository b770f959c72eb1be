#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdmem/estimate.hpp"
#include "sdmem/io.hpp"
#include "sdmem/models.hpp"
#include "sdmem/suffstats.hpp"

namespace sdmem {

inline constexpr const char* kToolkitVersion = "sdmem 0.1.0";

// Shared: one fine path per (N, replicate), thinned to every dt of the grid.
// Independent: a fresh path per (N, dt, replicate).
enum class PathMode { Shared, Independent };

struct ExperimentPlan {
    std::string model;
    Theta theta_true;  // empty mu means the model's reference values
    std::vector<int> n_grid;
    std::vector<double> dt_grid;
    int replicates = 100;
    std::uint64_t seed = 1;
    double fine_step = 1e-4;
    PathMode paths = PathMode::Shared;
    Scheme scheme = Scheme::FirstOrder;
    FitOptions fit = [] {
        FitOptions o;
        o.observed_information = false;
        return o;
    }();
    std::string output_dir;

    // Fills theta_true from the registry when empty and checks the grid.
    void resolve();
    const ModelEntry& entry() const;

    static ExperimentPlan from_key_values(const std::map<std::string, std::string>& kv);
    io::Json to_json() const;
};

struct ReplicateRecord {
    int n = 0;
    double dt = 0.0;
    int replicate = 0;
    std::uint64_t seed = 0;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    double score_norm = 0.0;
    Vector mu;
    Matrix omega;
    std::string error;  // non-empty when the fit threw
};

struct ParameterSummary {
    std::string name;
    double truth = 0.0;
    double rel_bias = 0.0;  // NaN when truth is 0
    double abs_bias = 0.0;
    double rmse = 0.0;
};

struct CellSummary {
    int n = 0;
    double dt = 0.0;
    int replicates = 0;
    int used = 0;  // converged fits entering the summary
    int failures = 0;
    bool cell_failed = false;  // more than 20% failures
    std::vector<ParameterSummary> params;
};

struct McResult {
    std::vector<CellSummary> cells;
    std::vector<ReplicateRecord> records;  // ordered by cell, then replicate
};

using Progress = std::function<void(const std::string&)>;

// Seed of replicate m in cell (n, dt); dt only enters for independent paths.
std::uint64_t replicate_seed(const ExperimentPlan& plan, int n, double dt, int m);

McResult run_mc(ExperimentPlan plan, int jobs = 1, const Progress& progress = {});

// Reported quantities: fixed effects, diag(Omega), then derived scales.
std::vector<std::string> summary_names(const ModelEntry& entry);
std::vector<double> summary_values(const ModelEntry& entry, const Vector& mu, const Matrix& omega);

// Summaries of (n, dt) over replicates below max_replicate (all when negative).
CellSummary summarize_cell(const ExperimentPlan& plan, std::span<const ReplicateRecord> records, int n, double dt,
                           int max_replicate = -1);

void write_replicates_csv(std::ostream& out, const ModelEntry& entry, std::span<const ReplicateRecord> records);
void write_summary_csv(std::ostream& out, std::span<const CellSummary> cells);
std::vector<CellSummary> read_summary_csv(std::istream& in);
// Paper-style layout: one row per parameter, a (rel. bias, RMSE) column pair per cell.
void write_table(std::ostream& out, std::span<const CellSummary> cells);

// summary.csv, replicates.csv, table.txt and manifest.json under plan.output_dir.
void write_outputs(const ExperimentPlan& plan, const McResult& result);

struct PowerPoint {
    Vector beta;
    int replicates = 0;
    int used = 0;
    double rejection_rate = 0.0;
    double std_error = 0.0;
};

/// Rejection rate of H0: beta = 0 at each true beta, using the replicate
/// covariance of beta-hat from the same simulation. The plan must hold one N and one dt.
std::vector<PowerPoint> run_power_study(const ExperimentPlan& plan, const std::vector<Vector>& betas,
                                        double level = 0.05, int jobs = 1, const Progress& progress = {});

}  // namespace sdmem
