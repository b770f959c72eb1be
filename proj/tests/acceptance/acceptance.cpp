// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (all when none given)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sdmem/harness.hpp"
#include "sdmem/inference.hpp"
#include "sdmem/likelihood.hpp"
#include "sdmem/models.hpp"
#include "sdmem/simulate.hpp"
#include "sdmem/suffstats.hpp"

using namespace sdmem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "  failed: " << what << '\n';
        }
    }
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

const CellSummary& cell_of(const McResult& r, int n, double dt) {
    for (const auto& c : r.cells)
        if (c.n == n && c.dt == dt) return c;
    throw std::runtime_error("no such cell");
}

void print_cells(Outcome& out, std::span<const CellSummary> cells) {
    std::ostringstream table;
    write_table(table, cells);
    out.detail << table.str();
}

// 1. Closed form against numerical integration over the random effect.
void quadrature(Outcome& out) {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int d = 1 + rep % 2;
        const SuffStats st = oracle::random_stats(d, rng);
        const Theta theta{oracle::random_vector(d, rng), oracle::random_spd(d, rng, 0.1)};
        const double closed = subject_loglik(st, theta).loglik;
        const double quad = oracle::log_marginal_quadrature(st, theta);
        worst = std::max(worst, std::abs(closed - quad) / std::max(1.0, std::abs(quad)));
    }
    out.detail << "  worst relative error " << fmt(worst) << " over 50 instances\n";
    out.require(worst < 1e-6, "relative error < 1e-6");
}

// 2. Analytic score against central differences on simulated statistics of each model.
void score_check(Outcome& out) {
    std::mt19937_64 rng(202);
    for (const char* name : {"transfer5", "fhn", "ou"}) {
        const ModelEntry& entry = registry::get(name);
        const auto stats = oracle::general_stats(entry.spec, oracle::simulate_entry(entry, 10, 1e-3, 10, 203));
        const int p = entry.spec.fixed_dim, d = entry.spec.effect_dim;
        double worst = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            Theta theta = entry.theta_true;
            theta.mu += 0.2 * oracle::random_vector(p, rng).cwiseProduct(entry.theta_true.mu.cwiseAbs() +
                                                                          Vector::Ones(p));
            theta.omega = oracle::random_spd(d, rng, 0.05, 0.5);
            Score s;
            loglik_and_score(stats, theta, &s);
            const auto fd = oracle::fd_score([&](const Theta& t) { return population_loglik(stats, t); }, theta);
            Vector analytic(p + d * d), numeric(p + d * d);
            analytic << s.mu, oracle::symmetric_directions(s.omega).reshaped();
            numeric << fd.mu, fd.omega.reshaped();
            worst = std::max(worst, (analytic - numeric).norm() / std::max(1.0, numeric.norm()));
        }
        out.detail << "  " << name << ": worst relative error " << fmt(worst) << '\n';
        out.require(worst < 1e-4, std::string(name) + " relative error < 1e-4");
    }
}

// 3. gamma and gamma gamma' - G have mean zero at the true parameter.
void moments(Outcome& out) {
    const ModelEntry& entry = registry::get("ou");
    const int m = 500;
    const auto paths = oracle::simulate_entry(entry, m, 1e-3, 1, 303);
    std::vector<double> first, second;
    for (const auto& path : paths) {
        const SuffStats st = suffstats(entry.spec, path, Scheme::FirstOrder);
        const LikelihoodTerms t = subject_loglik(st, entry.theta_true);
        first.push_back(t.gamma[0]);
        second.push_back(t.gamma[0] * t.gamma[0] - t.g(0, 0));
    }
    for (const auto& [label, v] : {std::pair{"gamma", &first}, std::pair{"gamma^2 - G", &second}}) {
        double mean = 0.0, var = 0.0;
        for (double x : *v) mean += x;
        mean /= m;
        for (double x : *v) var += (x - mean) * (x - mean);
        const double se = std::sqrt(var / (m - 1) / m);
        out.detail << "  " << label << ": mean " << fmt(mean) << ", se " << fmt(se) << ", z " << fmt(mean / se)
                   << '\n';
        out.require(std::abs(mean) < 4.0 * se, std::string(label) + " within 4 se of 0");
    }
}

// 4. RMS error of the discretized statistics decays like n^(-1/2).
void discretization_order(Outcome& out) {
    const ModelEntry& entry = registry::get("ou");
    SubjectConfig c = entry.subject(0);
    c.horizon = 5.0;
    const DiscretizationStudy study =
        discretization_error_study(entry.spec, entry.theta_true, c, {100, 200, 400, 800}, 200, 12800, 404);
    for (const auto& row : study.rows) out.detail << "  n=" << row.n << " rms " << fmt(row.rms) << '\n';
    out.detail << "  slope " << fmt(study.slope) << '\n';
    out.require(study.slope >= -0.65 && study.slope <= -0.35, "slope in [-0.65, -0.35]");
}

ExperimentPlan transfer_plan(std::vector<int> n_grid, std::vector<double> dt_grid, int m, std::uint64_t seed,
                             double fine_step = 1e-4) {
    ExperimentPlan plan;
    plan.model = "transfer5";
    plan.n_grid = std::move(n_grid);
    plan.dt_grid = std::move(dt_grid);
    plan.replicates = m;
    plan.seed = seed;
    plan.fine_step = fine_step;
    plan.paths = PathMode::Shared;
    plan.resolve();
    return plan;
}

// Shared by criteria 5 and 6.
const McResult& transfer_table() {
    static const McResult result = run_mc(transfer_plan({50}, {0.001, 0.01, 0.1}, 100, 505));
    return result;
}

// 5. Transfer model at N = 50, dt = 0.001.
void transfer_fine(Outcome& out) {
    const McResult& r = transfer_table();
    print_cells(out, r.cells);
    const CellSummary& cell = cell_of(r, 50, 0.001);
    out.require(!cell.cell_failed, "cell not failed");
    for (int j = 0; j < 11; ++j) {
        const auto& p = cell.params[static_cast<std::size_t>(j)];
        out.require(std::abs(p.rel_bias) < 0.02, p.name + " |rel bias| " + fmt(p.rel_bias) + " < 0.02");
    }
    const double rmse = cell.params[0].rmse;
    out.require(rmse >= 0.055 && rmse <= 0.11, "RMSE(alpha1) " + fmt(rmse) + " in [0.055, 0.11]");
    for (int j = 11; j < 17; ++j) {
        const auto& p = cell.params[static_cast<std::size_t>(j)];
        out.require(p.rel_bias >= -0.10 && p.rel_bias <= 0.02, p.name + " rel bias " + fmt(p.rel_bias) + " in [-0.10, 0.02]");
    }
}

// 6. Same simulation observed at dt = 0.1, first 50 replicates.
void transfer_coarse(Outcome& out) {
    const McResult& r = transfer_table();
    ExperimentPlan plan = transfer_plan({50}, {0.001, 0.01, 0.1}, 100, 505);
    const CellSummary cell = summarize_cell(plan, r.records, 50, 0.1, 50);
    const auto& p = cell.params[0];
    out.detail << "  " << cell.used << "/" << cell.replicates << " converged, " << p.name << " rel bias "
               << fmt(p.rel_bias) << '\n';
    out.require(!cell.cell_failed, "cell not failed");
    out.require(p.rel_bias < -0.10, "rel bias of alpha1 < -0.10");
}

// 7. Neuron model at N = 50, dt = 0.001.
void neuron(Outcome& out) {
    ExperimentPlan plan;
    plan.model = "fhn";
    plan.n_grid = {50};
    plan.dt_grid = {0.001};
    plan.replicates = 100;
    plan.seed = 707;
    plan.fine_step = 1e-4;
    plan.resolve();
    const McResult r = run_mc(plan);
    print_cells(out, r.cells);
    const CellSummary& cell = r.cells.front();
    out.require(!cell.cell_failed, "cell not failed");
    for (int j = 0; j < 4; ++j) {
        const auto& p = cell.params[static_cast<std::size_t>(j)];
        out.require(std::abs(p.rel_bias) < 0.02, p.name + " |rel bias| " + fmt(p.rel_bias) + " < 0.02");
    }
    const double rmse = cell.params[0].rmse;
    out.require(rmse >= 0.15 && rmse <= 0.30, "RMSE(1/eps) " + fmt(rmse) + " in [0.15, 0.30]");
}

// 8. Wald test of beta = 0 when beta is 0.
void wald_size(Outcome& out) {
    ExperimentPlan plan = transfer_plan({20}, {0.01}, 200, 808, 1e-3);
    const auto points = run_power_study(plan, {Vector::Zero(5)}, 0.05);
    const PowerPoint& p = points.front();
    out.detail << "  rejection rate " << fmt(p.rejection_rate) << " (se " << fmt(p.std_error) << ") over " << p.used
               << "/" << p.replicates << " fits\n";
    out.require(p.used >= 160, "at least 80% of fits usable");
    out.require(p.rejection_rate >= 0.03 && p.rejection_rate <= 0.12, "rate in [0.03, 0.12]");
}

// 9. Byte-identical output for different worker counts.
void determinism(Outcome& out) {
    auto csv = [](int jobs) {
        ExperimentPlan plan;
        plan.model = "transfer5";
        plan.n_grid = {10, 20};
        plan.dt_grid = {0.01, 0.1};
        plan.replicates = 6;
        plan.seed = 909;
        plan.fine_step = 1e-3;
        plan.resolve();
        const McResult r = run_mc(plan, jobs);
        std::ostringstream rep, sum;
        write_replicates_csv(rep, plan.entry(), r.records);
        write_summary_csv(sum, r.cells);
        return std::make_pair(rep.str(), sum.str());
    };
    const auto one = csv(1);
    const auto three = csv(3);
    out.detail << "  replicates.csv " << one.first.size() << " bytes\n";
    out.require(one.first == three.first, "replicates.csv identical for jobs 1 and 3");
    out.require(one.second == three.second, "summary.csv identical for jobs 1 and 3");
}

// 10. RMSE decreases with the number of subjects.
void consistency(Outcome& out) {
    const McResult r = run_mc(transfer_plan({20, 50, 100}, {0.001}, 50, 1010));
    print_cells(out, r.cells);
    const auto& a = cell_of(r, 20, 0.001);
    const auto& b = cell_of(r, 50, 0.001);
    const auto& c = cell_of(r, 100, 0.001);
    for (const auto* cell : {&a, &b, &c}) out.require(!cell->cell_failed, "N=" + std::to_string(cell->n) + " not failed");
    for (std::size_t j = 0; j < a.params.size(); ++j) {
        const double r20 = a.params[j].rmse, r50 = b.params[j].rmse, r100 = c.params[j].rmse;
        out.require(r20 > r50 && r50 > r100,
                    a.params[j].name + " RMSE " + fmt(r20) + " > " + fmt(r50) + " > " + fmt(r100));
    }
}

struct Criterion {
    int id;
    const char* title;
    std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "closed-form likelihood matches quadrature", quadrature},
        {2, "analytic score matches finite differences", score_check},
        {3, "moment identities at the true parameter", moments},
        {4, "discretization error order", discretization_order},
        {5, "transfer5 N=50 dt=0.001 bias and RMSE", transfer_fine},
        {6, "transfer5 N=50 dt=0.1 bias of alpha1", transfer_coarse},
        {7, "fhn N=50 dt=0.001 bias and RMSE", neuron},
        {8, "Wald false-positive rate", wald_size},
        {9, "determinism across worker counts", determinism},
        {10, "RMSE decreases in N", consistency},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        Outcome out;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(out);
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail << "  exception: " << e.what() << '\n';
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << out.detail.str();
        std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.title << " ("
                  << fmt(secs) << " s)" << std::endl;
        failed += out.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
