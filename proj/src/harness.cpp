#include "sdmem/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include "sdmem/inference.hpp"
#include "sdmem/parallel.hpp"
#include "sdmem/simulate.hpp"

namespace sdmem {

namespace {

// n such that n * unit == value within 1e-9 relative; 0 when there is none.
long integer_ratio(double value, double unit) {
    const long n = std::lround(value / unit);
    if (n <= 0 || std::abs(static_cast<double>(n) * unit - value) > 1e-9 * value) return 0;
    return n;
}

std::string fixed(double v, int precision) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    return io::parse_list(s).at(0);
}

}  // namespace

const ModelEntry& ExperimentPlan::entry() const { return registry::get(model); }

void ExperimentPlan::resolve() {
    const ModelEntry& e = entry();
    if (theta_true.mu.size() == 0) theta_true.mu = e.theta_true.mu;
    if (theta_true.omega.size() == 0) theta_true.omega = e.theta_true.omega;
    validate_theta(theta_true, e.spec.fixed_dim, e.spec.effect_dim);
    if (n_grid.empty() || dt_grid.empty() || replicates < 1) {
        throw Error(ErrorKind::InvalidArgument, "plan needs non-empty n_grid, dt_grid and replicates >= 1");
    }
    for (int n : n_grid) {
        if (n < 2) throw Error(ErrorKind::InvalidArgument, "every N must be at least 2");
    }
    const double finest = *std::min_element(dt_grid.begin(), dt_grid.end());
    for (double dt : dt_grid) {
        if (!(dt > 0.0) || integer_ratio(dt, fine_step) == 0) {
            throw Error(ErrorKind::InvalidArgument, "every dt must be a positive integer multiple of the fine step");
        }
        if (paths == PathMode::Shared && integer_ratio(dt, finest) == 0) {
            throw Error(ErrorKind::InvalidArgument, "shared paths need every dt to be a multiple of the smallest dt");
        }
    }
}

ExperimentPlan ExperimentPlan::from_key_values(const std::map<std::string, std::string>& kv) {
    ExperimentPlan plan;
    std::vector<double> mu, omega_diag;
    for (const auto& [key, value] : kv) {
        if (key == "model") plan.model = value;
        else if (key == "n_grid" || key == "n") plan.n_grid = io::parse_int_list(value);
        else if (key == "dt_grid" || key == "dt") plan.dt_grid = io::parse_list(value);
        else if (key == "replicates" || key == "m") plan.replicates = std::stoi(value);
        else if (key == "seed") plan.seed = std::stoull(value);
        else if (key == "fine_step") plan.fine_step = std::stod(value);
        else if (key == "paths") {
            if (value == "shared") plan.paths = PathMode::Shared;
            else if (value == "independent") plan.paths = PathMode::Independent;
            else throw Error(ErrorKind::InvalidArgument, "paths must be shared or independent");
        } else if (key == "scheme") plan.scheme = parse_scheme(value);
        else if (key == "mu") mu = io::parse_list(value);
        else if (key == "omega_diag") omega_diag = io::parse_list(value);
        else if (key == "output_dir") plan.output_dir = value;
        else if (key == "max_iterations") plan.fit.max_iterations = std::stoi(value);
        else if (key == "extra_starts") plan.fit.extra_starts = std::stoi(value);
        else throw Error(ErrorKind::InvalidArgument, "unknown plan key '" + key + "'");
    }
    if (plan.model.empty()) throw Error(ErrorKind::InvalidArgument, "plan needs a model");
    if (!mu.empty()) plan.theta_true.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    if (!omega_diag.empty()) {
        plan.theta_true.omega =
            Eigen::Map<const Vector>(omega_diag.data(), static_cast<Eigen::Index>(omega_diag.size())).asDiagonal();
    }
    return plan;
}

io::Json ExperimentPlan::to_json() const {
    io::Json j;
    j["model"] = model;
    j["theta_true"] = io::theta_to_json(theta_true);
    j["n_grid"] = n_grid;
    j["dt_grid"] = dt_grid;
    j["replicates"] = replicates;
    j["seed"] = seed;
    j["fine_step"] = fine_step;
    j["paths"] = paths == PathMode::Shared ? "shared" : "independent";
    j["scheme"] = std::string(to_string(scheme));
    j["max_iterations"] = fit.max_iterations;
    j["extra_starts"] = fit.extra_starts;
    return j;
}

std::uint64_t replicate_seed(const ExperimentPlan& plan, int n, double dt, int m) {
    if (plan.paths == PathMode::Shared) {
        return derive_seed({plan.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(m)});
    }
    return derive_seed({plan.seed, static_cast<std::uint64_t>(n), std::bit_cast<std::uint64_t>(dt),
                        static_cast<std::uint64_t>(m)});
}

std::vector<std::string> summary_names(const ModelEntry& entry) {
    std::vector<std::string> names = entry.parameter_names;
    for (const auto& e : entry.effect_names) names.push_back("var_" + e);
    if (entry.derived) {
        for (const auto& [name, value] : entry.derived(entry.theta_true.mu)) names.push_back(name);
    }
    return names;
}

std::vector<double> summary_values(const ModelEntry& entry, const Vector& mu, const Matrix& omega) {
    std::vector<double> out(mu.data(), mu.data() + mu.size());
    for (Eigen::Index j = 0; j < omega.rows(); ++j) out.push_back(omega(j, j));
    if (entry.derived) {
        for (const auto& [name, value] : entry.derived(mu)) out.push_back(value);
    }
    return out;
}

CellSummary summarize_cell(const ExperimentPlan& plan, std::span<const ReplicateRecord> records, int n, double dt,
                           int max_replicate) {
    const ModelEntry& entry = plan.entry();
    const auto names = summary_names(entry);
    const Vector& mu_true = plan.theta_true.mu.size() > 0 ? plan.theta_true.mu : entry.theta_true.mu;
    const Matrix& omega_true = plan.theta_true.omega.size() > 0 ? plan.theta_true.omega : entry.theta_true.omega;
    const auto truth = summary_values(entry, mu_true, omega_true);
    const std::size_t q = names.size();

    CellSummary cell;
    cell.n = n;
    cell.dt = dt;
    std::vector<double> sum_rel(q, 0.0), sum_abs(q, 0.0), sum_sq(q, 0.0);
    for (const auto& rec : records) {
        if (rec.n != n || rec.dt != dt || (max_replicate >= 0 && rec.replicate >= max_replicate)) continue;
        ++cell.replicates;
        if (!rec.converged || !rec.error.empty()) {
            ++cell.failures;
            continue;
        }
        ++cell.used;
        const auto est = summary_values(entry, rec.mu, rec.omega);
        for (std::size_t j = 0; j < q; ++j) {
            const double diff = est[j] - truth[j];
            sum_abs[j] += diff;
            sum_rel[j] += diff / truth[j];
            sum_sq[j] += diff * diff;
        }
    }
    cell.cell_failed = cell.failures * 5 > cell.replicates;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t j = 0; j < q; ++j) {
        ParameterSummary p;
        p.name = names[j];
        p.truth = truth[j];
        if (cell.used > 0) {
            p.abs_bias = sum_abs[j] / cell.used;
            p.rel_bias = truth[j] == 0.0 ? nan : sum_rel[j] / cell.used;
            p.rmse = std::sqrt(sum_sq[j] / cell.used);
        } else {
            p.abs_bias = p.rel_bias = p.rmse = nan;
        }
        cell.params.push_back(std::move(p));
    }
    return cell;
}

namespace {

struct Task {
    int n;
    int dt_index;  // -1: all dts from one shared path
    int replicate;
};

ReplicateRecord fit_replicate(const ExperimentPlan& plan, const ModelEntry& entry,
                              const std::vector<Trajectory>& trajectories, ReplicateRecord rec) {
    try {
        std::vector<GeneralSuffStats> stats;
        stats.reserve(trajectories.size());
        for (const auto& t : trajectories) stats.push_back(suffstats_general(entry.spec, t, plan.scheme));
        const MleFit fit = fit_mle(std::span<const GeneralSuffStats>(stats), plan.fit);
        rec.converged = fit.converged;
        rec.iterations = fit.iterations;
        rec.loglik = fit.loglik;
        rec.score_norm = fit.score_norm;
        rec.mu = fit.theta_hat.mu;
        rec.omega = fit.theta_hat.omega;
    } catch (const Error& e) {
        rec.error = e.what();
    }
    return rec;
}

std::vector<ReplicateRecord> run_task(const ExperimentPlan& plan, const ModelEntry& entry, const Task& task) {
    const bool shared = task.dt_index < 0;
    std::vector<std::size_t> dts;
    if (shared) {
        for (std::size_t k = 0; k < plan.dt_grid.size(); ++k) dts.push_back(k);
    } else {
        dts.push_back(static_cast<std::size_t>(task.dt_index));
    }
    const double base_dt = shared ? *std::min_element(plan.dt_grid.begin(), plan.dt_grid.end())
                                  : plan.dt_grid[static_cast<std::size_t>(task.dt_index)];

    SimPlan sim;
    sim.fine_step = plan.fine_step;
    sim.thin_factor = static_cast<int>(integer_ratio(base_dt, plan.fine_step));
    sim.n_subjects = task.n;
    sim.seed = replicate_seed(plan, task.n, base_dt, task.replicate);
    sim.replicate = 0;
    sim.theta_true = plan.theta_true;
    for (int i = 0; i < task.n; ++i) sim.subjects.push_back(entry.subject(static_cast<std::size_t>(i)));

    std::vector<ReplicateRecord> out;
    std::vector<Trajectory> base;
    std::string sim_error;
    try {
        for (auto& s : simulate_population(entry.spec, sim)) base.push_back(std::move(s.trajectory));
    } catch (const Error& e) {
        sim_error = e.what();
    }
    for (std::size_t k : dts) {
        ReplicateRecord rec;
        rec.n = task.n;
        rec.dt = plan.dt_grid[k];
        rec.replicate = task.replicate;
        rec.seed = sim.seed;
        if (!sim_error.empty()) {
            rec.error = sim_error;
            out.push_back(std::move(rec));
            continue;
        }
        const int factor = static_cast<int>(integer_ratio(plan.dt_grid[k], base_dt));
        if (factor == 1) {
            out.push_back(fit_replicate(plan, entry, base, std::move(rec)));
        } else {
            std::vector<Trajectory> coarse;
            coarse.reserve(base.size());
            for (const auto& t : base) coarse.push_back(thin(t, factor));
            out.push_back(fit_replicate(plan, entry, coarse, std::move(rec)));
        }
    }
    return out;
}

}  // namespace

McResult run_mc(ExperimentPlan plan, int jobs, const Progress& progress) {
    plan.resolve();
    const ModelEntry& entry = plan.entry();

    std::vector<Task> tasks;
    for (int n : plan.n_grid) {
        if (plan.paths == PathMode::Shared) {
            for (int m = 0; m < plan.replicates; ++m) tasks.push_back({n, -1, m});
        } else {
            for (std::size_t k = 0; k < plan.dt_grid.size(); ++k) {
                for (int m = 0; m < plan.replicates; ++m) tasks.push_back({n, static_cast<int>(k), m});
            }
        }
    }

    std::vector<std::vector<ReplicateRecord>> results(tasks.size());
    std::mutex report;
    std::size_t done = 0;
    parallel_for(tasks.size(), jobs, [&](std::size_t t) {
        results[t] = run_task(plan, entry, tasks[t]);
        if (progress) {
            std::lock_guard<std::mutex> guard(report);
            ++done;
            progress(plan.model + ": " + std::to_string(done) + "/" + std::to_string(tasks.size()) + " replicates");
        }
    });

    McResult result;
    for (int n : plan.n_grid) {
        for (double dt : plan.dt_grid) {
            for (std::size_t t = 0; t < tasks.size(); ++t) {
                if (tasks[t].n != n) continue;
                for (const auto& rec : results[t]) {
                    if (rec.dt == dt) result.records.push_back(rec);
                }
            }
            result.cells.push_back(summarize_cell(plan, result.records, n, dt));
        }
    }
    return result;
}

void write_replicates_csv(std::ostream& out, const ModelEntry& entry, std::span<const ReplicateRecord> records) {
    out << "n,dt,replicate,seed,converged,iterations,loglik,score_norm";
    for (const auto& name : entry.parameter_names) out << ',' << name;
    const auto d = static_cast<Eigen::Index>(entry.effect_names.size());
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) out << ",omega_" << i + 1 << '_' << j + 1;
    }
    out << ",error\n";
    for (const auto& rec : records) {
        out << rec.n << ',' << io::format_double(rec.dt) << ',' << rec.replicate << ',' << rec.seed << ','
            << (rec.converged ? 1 : 0) << ',' << rec.iterations << ',' << io::format_double(rec.loglik) << ','
            << io::format_double(rec.score_norm);
        const bool have = rec.error.empty();
        for (std::size_t j = 0; j < entry.parameter_names.size(); ++j) {
            out << ',' << (have ? io::format_double(rec.mu[static_cast<Eigen::Index>(j)]) : "");
        }
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) out << ',' << (have ? io::format_double(rec.omega(i, j)) : "");
        }
        std::string err = rec.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << ',' << err << '\n';
    }
}

void write_summary_csv(std::ostream& out, std::span<const CellSummary> cells) {
    out << "n,dt,parameter,truth,rel_bias,abs_bias,rmse,replicates,used,failures,cell_failed\n";
    for (const auto& cell : cells) {
        for (const auto& p : cell.params) {
            out << cell.n << ',' << io::format_double(cell.dt) << ',' << p.name << ',' << io::format_double(p.truth)
                << ',' << io::format_double(p.rel_bias) << ',' << io::format_double(p.abs_bias) << ','
                << io::format_double(p.rmse) << ',' << cell.replicates << ',' << cell.used << ',' << cell.failures
                << ',' << (cell.cell_failed ? 1 : 0) << '\n';
        }
    }
}

std::vector<CellSummary> read_summary_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Io, "empty summary file");
    std::vector<CellSummary> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 11) throw Error(ErrorKind::Io, "summary row has " + std::to_string(f.size()) + " fields");
        const int n = std::stoi(f[0]);
        const double dt = to_double(f[1]);
        if (cells.empty() || cells.back().n != n || cells.back().dt != dt) {
            CellSummary c;
            c.n = n;
            c.dt = dt;
            c.replicates = std::stoi(f[7]);
            c.used = std::stoi(f[8]);
            c.failures = std::stoi(f[9]);
            c.cell_failed = f[10] == "1";
            cells.push_back(std::move(c));
        }
        cells.back().params.push_back({f[2], to_double(f[3]), to_double(f[4]), to_double(f[5]), to_double(f[6])});
    }
    return cells;
}

void write_table(std::ostream& out, std::span<const CellSummary> cells) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-14s %9s", "parameter", "truth");
    out << buf;
    for (const auto& cell : cells) {
        const std::string label = "N=" + std::to_string(cell.n) + " dt=" + io::format_double(cell.dt);
        std::snprintf(buf, sizeof buf, " | %-19s", label.c_str());
        out << buf;
    }
    out << '\n';
    std::snprintf(buf, sizeof buf, "%-14s %9s", "", "");
    out << buf;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::snprintf(buf, sizeof buf, " | %9s %9s", "rel.bias", "RMSE");
        out << buf;
    }
    out << '\n';
    if (cells.empty()) return;
    for (std::size_t j = 0; j < cells.front().params.size(); ++j) {
        const auto& first = cells.front().params[j];
        std::snprintf(buf, sizeof buf, "%-14s %9s", first.name.c_str(), fixed(first.truth, 3).c_str());
        out << buf;
        for (const auto& cell : cells) {
            const auto& p = cell.params.at(j);
            std::snprintf(buf, sizeof buf, " | %9s %9s", fixed(p.rel_bias, 3).c_str(), fixed(p.rmse, 3).c_str());
            out << buf;
        }
        out << '\n';
    }
    for (const auto& cell : cells) {
        out << "N=" << cell.n << " dt=" << io::format_double(cell.dt) << ": " << cell.used << '/' << cell.replicates
            << " converged" << (cell.cell_failed ? " (cell failed: more than 20% non-converged)" : "") << '\n';
    }
}

void write_outputs(const ExperimentPlan& plan, const McResult& result) {
    namespace fs = std::filesystem;
    if (plan.output_dir.empty()) throw Error(ErrorKind::InvalidArgument, "plan has no output directory");
    fs::create_directories(plan.output_dir);
    const fs::path dir(plan.output_dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("summary.csv");
        write_summary_csv(out, result.cells);
    }
    {
        auto out = open("replicates.csv");
        write_replicates_csv(out, plan.entry(), result.records);
    }
    {
        auto out = open("table.txt");
        write_table(out, result.cells);
    }
    io::Json manifest;
    manifest["toolkit"] = kToolkitVersion;
    manifest["plan"] = plan.to_json();
    io::Json seeds = io::Json::array();
    for (const auto& rec : result.records) {
        seeds.push_back({{"n", rec.n}, {"dt", rec.dt}, {"replicate", rec.replicate}, {"seed", rec.seed}});
    }
    manifest["seeds"] = std::move(seeds);
    io::write_json((dir / "manifest.json").string(), manifest);
}

std::vector<PowerPoint> run_power_study(const ExperimentPlan& plan, const std::vector<Vector>& betas, double level,
                                        int jobs, const Progress& progress) {
    ExperimentPlan base = plan;
    base.resolve();
    const ModelEntry& entry = base.entry();
    if (entry.beta_selector.empty()) throw Error(ErrorKind::InvalidArgument, "model has no treatment block");
    if (base.n_grid.size() != 1 || base.dt_grid.size() != 1) {
        throw Error(ErrorKind::InvalidArgument, "power study needs a single N and a single dt");
    }
    const auto s = static_cast<Eigen::Index>(entry.beta_selector.size());
    WaldSpec spec;
    spec.selector = entry.beta_selector;
    spec.l_matrix = Matrix::Identity(s, s);
    spec.eta0 = Vector::Zero(s);
    spec.cov_source = CovarianceSource::ReplicateCovariance;
    spec.alpha = level;

    std::vector<PowerPoint> out;
    for (std::size_t k = 0; k < betas.size(); ++k) {
        if (betas[k].size() != s) throw Error(ErrorKind::DimensionMismatch, "beta alternative has wrong length");
        ExperimentPlan p = base;
        for (Eigen::Index j = 0; j < s; ++j) p.theta_true.mu[entry.beta_selector[static_cast<std::size_t>(j)]] = betas[k][j];
        p.seed = derive_seed({base.seed, static_cast<std::uint64_t>(k)});
        const McResult mc = run_mc(p, jobs, progress);

        std::vector<Vector> mus;
        for (const auto& rec : mc.records) {
            if (rec.converged && rec.error.empty()) mus.push_back(rec.mu);
        }
        PowerPoint point;
        point.beta = betas[k];
        point.replicates = static_cast<int>(mc.records.size());
        point.used = static_cast<int>(mus.size());
        const Matrix cov = beta_covariance(std::span<const Vector>(mus), spec.selector);
        int rejections = 0;
        for (const auto& mu : mus) {
            if (wald_test(select_beta(mu, spec.selector), cov, spec).reject) ++rejections;
        }
        point.rejection_rate = static_cast<double>(rejections) / point.used;
        point.std_error = std::sqrt(point.rejection_rate * (1.0 - point.rejection_rate) / point.used);
        out.push_back(std::move(point));
    }
    return out;
}

}  // namespace sdmem
