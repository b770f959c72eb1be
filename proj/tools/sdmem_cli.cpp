#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sdmem/harness.hpp"
#include "sdmem/inference.hpp"
#include "sdmem/io.hpp"
#include "sdmem/models.hpp"
#include "sdmem/simulate.hpp"

using namespace sdmem;
namespace fs = std::filesystem;

namespace {

void list_models() {
    for (const auto& name : registry::names()) {
        const ModelEntry& e = registry::get(name);
        std::cout << name << ": r=" << e.spec.state_dim << " p=" << e.spec.fixed_dim << " d=" << e.spec.effect_dim
                  << " s=" << e.spec.covariate_dim << (e.spec.ito ? " ito" : "") << "\n  " << e.description
                  << "\n  mu = " << io::vector_to_json(e.theta_true.mu).dump()
                  << "\n  diag(omega) = " << io::vector_to_json(e.theta_true.omega.diagonal()).dump() << '\n';
    }
}

// Rows separated by ';' or newlines, entries by ','; a readable file path is read instead.
Matrix parse_matrix(const std::string& text) {
    std::string body = text;
    if (fs::is_regular_file(text)) {
        std::ifstream in(text);
        std::stringstream ss;
        ss << in.rdbuf();
        body = ss.str();
    }
    std::vector<std::vector<double>> rows;
    std::string row;
    for (char& c : body) {
        if (c == '\n') c = ';';
    }
    std::istringstream is(body);
    while (std::getline(is, row, ';')) {
        auto values = io::parse_list(row);
        if (!values.empty()) rows.push_back(std::move(values));
    }
    if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "empty matrix");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw Error(ErrorKind::InvalidArgument, "ragged matrix rows");
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int run_simulate(const std::string& model, int n, double dt_fine, int thin, double t_end, std::uint64_t seed,
                 const std::string& theta_path, const std::string& out) {
    const ModelEntry& e = registry::get(model);
    SimPlan plan;
    plan.fine_step = dt_fine;
    plan.thin_factor = thin;
    plan.n_subjects = n;
    plan.seed = seed;
    plan.theta_true = theta_path.empty() ? e.theta_true : io::theta_from_json(io::read_json(theta_path));
    for (int i = 0; i < n; ++i) {
        SubjectConfig c = e.subject(static_cast<std::size_t>(i));
        if (t_end > 0.0) c.horizon = t_end;
        plan.subjects.push_back(std::move(c));
    }
    const auto population = simulate_population(e.spec, plan);
    std::vector<Trajectory> trajectories;
    io::Json subjects = io::Json::array();
    for (const auto& s : population) {
        trajectories.push_back(s.trajectory);
        subjects.push_back({{"subject_id", s.trajectory.subject_id},
                            {"stream_seed", s.stream_seed},
                            {"phi", io::vector_to_json(s.phi)}});
    }
    io::write_trajectories(out, trajectories);
    io::Json sidecar;
    sidecar["toolkit"] = kToolkitVersion;
    sidecar["model"] = model;
    sidecar["plan"] = {{"fine_step", dt_fine}, {"thin_factor", thin}, {"n_subjects", n}, {"seed", seed},
                       {"horizon", plan.subjects.front().horizon}};
    sidecar["theta_true"] = io::theta_to_json(plan.theta_true);
    sidecar["subjects"] = std::move(subjects);
    io::write_json(fs::path(out).replace_extension(".json").string(), sidecar);
    return 0;
}

int run_estimate(const std::string& data, const std::string& model, const std::string& scheme,
                 const std::string& init, const std::string& out, const std::string& dump_stats,
                 const std::string& trace, int extra_starts) {
    const ModelEntry& e = registry::get(model);
    const auto trajectories = io::read_trajectories(data);
    std::vector<GeneralSuffStats> stats;
    for (const auto& t : trajectories) stats.push_back(suffstats_general(e.spec, t, parse_scheme(scheme)));
    if (!dump_stats.empty()) io::write_json(dump_stats, io::stats_to_json(stats));

    FitOptions options;
    options.extra_starts = extra_starts;
    const std::span<const GeneralSuffStats> view(stats);
    const MleFit fit = init == "default" ? fit_mle(view, options)
                                         : fit_mle(view, io::theta_from_json(io::read_json(init)), options);
    io::Json j = io::fit_to_json(fit);
    j["model"] = model;
    j["scheme"] = scheme;
    j["n_subjects"] = stats.size();
    if (e.derived) {
        for (const auto& [name, value] : e.derived(fit.theta_hat.mu)) j["derived"][name] = value;
    }
    if (!trace.empty()) {
        std::ofstream tr(trace);
        if (!tr) throw Error(ErrorKind::Io, "cannot write " + trace);
        tr << "iteration,loglik,score_norm,step\n";
        for (const auto& p : fit.trace) {
            tr << p.iteration << ',' << io::format_double(p.loglik) << ',' << io::format_double(p.score_norm) << ','
               << io::format_double(p.step) << '\n';
        }
    }
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        io::write_json(out, j);
    }
    for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

int run_wald(const std::string& fit_path, const std::string& fits_dir, const std::string& select,
             const std::string& l_text, const std::string& eta0_text, double alpha) {
    WaldSpec spec;
    spec.selector = io::parse_int_list(select);
    const auto s = static_cast<Eigen::Index>(spec.selector.size());
    spec.l_matrix = l_text.empty() ? Matrix(Matrix::Identity(s, s)) : parse_matrix(l_text);
    spec.eta0 = eta0_text.empty() ? Vector(Vector::Zero(spec.l_matrix.rows())) : to_vector(io::parse_list(eta0_text));
    spec.alpha = alpha;

    io::Json out = io::Json::array();
    auto report = [&](const std::string& name, const WaldResult& r) {
        out.push_back({{"fit", name},
                       {"statistic", r.statistic},
                       {"df", r.df},
                       {"p_value", r.p_value},
                       {"reject", r.reject},
                       {"alpha", alpha}});
    };
    if (!fits_dir.empty()) {
        spec.cov_source = CovarianceSource::ReplicateCovariance;
        std::vector<std::string> paths;
        for (const auto& entry : fs::directory_iterator(fits_dir)) {
            if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
        }
        std::sort(paths.begin(), paths.end());
        std::vector<MleFit> fits;
        for (const auto& p : paths) fits.push_back(io::fit_from_json(io::read_json(p)));
        const Matrix cov = beta_covariance(std::span<const MleFit>(fits), spec.selector);
        for (std::size_t k = 0; k < fits.size(); ++k) {
            report(paths[k], wald_test(select_beta(fits[k].theta_hat.mu, spec.selector), cov, spec));
        }
    } else {
        const MleFit fit = io::fit_from_json(io::read_json(fit_path));
        report(fit_path, wald_test(fit, spec));
    }
    std::cout << (out.size() == 1 ? out.front() : out).dump(2) << '\n';
    return 0;
}

ExperimentPlan load_plan(const std::string& path, const std::string& out) {
    ExperimentPlan plan = ExperimentPlan::from_key_values(io::read_key_values(path));
    if (!out.empty()) plan.output_dir = out;
    if (plan.output_dir.empty()) throw Error(ErrorKind::InvalidArgument, "no output directory (use --out)");
    return plan;
}

Progress stderr_progress(bool quiet) {
    if (quiet) return {};
    return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

int run_mc_command(const std::string& plan_path, int jobs, const std::string& out, bool quiet) {
    ExperimentPlan plan = load_plan(plan_path, out);
    const McResult result = run_mc(plan, jobs, stderr_progress(quiet));
    plan.resolve();
    write_outputs(plan, result);
    write_table(std::cout, result.cells);
    return 0;
}

int run_power_command(const std::string& plan_path, const std::string& betas_text, double level, int jobs,
                      const std::string& out, bool quiet) {
    ExperimentPlan plan = load_plan(plan_path, out);
    const Matrix betas = parse_matrix(betas_text);
    std::vector<Vector> alternatives;
    for (Eigen::Index i = 0; i < betas.rows(); ++i) alternatives.push_back(betas.row(i).transpose());
    const auto points = run_power_study(plan, alternatives, level, jobs, stderr_progress(quiet));
    fs::create_directories(plan.output_dir);
    std::ofstream csv(fs::path(plan.output_dir) / "power.csv");
    csv << "beta,replicates,used,rejection_rate,std_error\n";
    for (const auto& p : points) {
        std::string beta;
        for (Eigen::Index j = 0; j < p.beta.size(); ++j) beta += (j ? " " : "") + io::format_double(p.beta[j]);
        csv << beta << ',' << p.replicates << ',' << p.used << ',' << io::format_double(p.rejection_rate) << ','
            << io::format_double(p.std_error) << '\n';
        std::cout << "beta = (" << beta << "): rejection rate " << p.rejection_rate << " +- " << p.std_error << " ("
                  << p.used << " fits)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and maximum-likelihood estimation for SDE mixed-effects models"};
    app.require_subcommand(0, 1);
    bool list_flag = false;
    app.add_flag("--list-models", list_flag, "Print the registered models");

    auto* list = app.add_subcommand("list-models", "Print the registered models");

    auto* sim = app.add_subcommand("simulate", "Simulate a population to CSV");
    std::string sim_model = "transfer5", sim_theta, sim_out;
    int sim_n = 10, sim_thin = 10;
    double sim_dt = 1e-4, sim_t_end = 0.0;
    std::uint64_t sim_seed = 1;
    sim->add_option("--model", sim_model, "Registered model name")->capture_default_str();
    sim->add_option("--n", sim_n, "Number of subjects")->capture_default_str();
    sim->add_option("--dt-fine", sim_dt, "Euler step")->capture_default_str();
    sim->add_option("--thin", sim_thin, "Keep every b-th fine point")->capture_default_str();
    sim->add_option("--t-end", sim_t_end, "Horizon (default: model's)");
    sim->add_option("--seed", sim_seed, "Seed")->capture_default_str();
    sim->add_option("--theta", sim_theta, "JSON with mu and omega (default: model's reference values)");
    sim->add_option("--out", sim_out, "Output CSV; a .json sidecar is written next to it")->required();

    auto* est = app.add_subcommand("estimate", "Fit the maximum-likelihood estimate");
    std::string est_data, est_model = "transfer5", est_scheme = "first", est_init = "default", est_out, est_dump,
                                  est_trace;
    int est_starts = 0;
    est->add_option("--data", est_data, "Trajectory CSV")->required();
    est->add_option("--model", est_model, "Registered model name")->capture_default_str();
    est->add_option("--scheme", est_scheme, "first or ito")->capture_default_str();
    est->add_option("--init", est_init, "default or a theta JSON file")->capture_default_str();
    est->add_option("--out", est_out, "Output JSON (default: stdout)");
    est->add_option("--dump-stats", est_dump, "Write per-subject statistics as JSON");
    est->add_option("--trace", est_trace, "Write per-iteration loglik and score norm as CSV");
    est->add_option("--extra-starts", est_starts, "Jittered restarts")->capture_default_str();

    auto* wald = app.add_subcommand("wald", "Wald test of L beta = eta0");
    std::string wald_fit, wald_dir, wald_select, wald_l, wald_eta0;
    double wald_alpha = 0.05;
    auto* fit_opt = wald->add_option("--fit", wald_fit, "Fit JSON (observed-information covariance)");
    auto* dir_opt = wald->add_option("--fits-dir", wald_dir, "Directory of fit JSONs (replicate covariance)");
    fit_opt->excludes(dir_opt);
    wald->add_option("--select", wald_select, "Indices of beta within mu, e.g. 6,7,8,9,10")->required();
    wald->add_option("--L", wald_l, "Restriction matrix: rows separated by ';' or a CSV file (default identity)");
    wald->add_option("--eta0", wald_eta0, "Right-hand side (default zero)");
    wald->add_option("--alpha", wald_alpha, "Level")->capture_default_str();

    auto* mc = app.add_subcommand("mc", "Run a Monte Carlo plan");
    std::string mc_plan, mc_out;
    int mc_jobs = 1;
    bool mc_quiet = false;
    mc->add_option("--plan", mc_plan, "Plan file (key = value lines)")->required();
    mc->add_option("--jobs", mc_jobs, "Worker threads")->capture_default_str();
    mc->add_option("--out", mc_out, "Output directory (overrides output_dir)");
    mc->add_flag("--quiet", mc_quiet, "No progress output");

    auto* power = app.add_subcommand("power", "Wald rejection rates of beta = 0 over true betas");
    std::string pw_plan, pw_betas, pw_out;
    double pw_level = 0.05;
    int pw_jobs = 1;
    bool pw_quiet = false;
    power->add_option("--plan", pw_plan, "Plan file with one N and one dt")->required();
    power->add_option("--betas", pw_betas, "True betas, rows separated by ';'")->required();
    power->add_option("--level", pw_level, "Test level")->capture_default_str();
    power->add_option("--jobs", pw_jobs, "Worker threads")->capture_default_str();
    power->add_option("--out", pw_out, "Output directory (overrides output_dir)");
    power->add_flag("--quiet", pw_quiet, "No progress output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list_flag || list->parsed()) {
            list_models();
            return 0;
        }
        if (sim->parsed()) {
            return run_simulate(sim_model, sim_n, sim_dt, sim_thin, sim_t_end, sim_seed, sim_theta, sim_out);
        }
        if (est->parsed()) {
            return run_estimate(est_data, est_model, est_scheme, est_init, est_out, est_dump, est_trace, est_starts);
        }
        if (wald->parsed()) {
            if (wald_fit.empty() && wald_dir.empty()) throw Error(ErrorKind::InvalidArgument, "give --fit or --fits-dir");
            return run_wald(wald_fit, wald_dir, wald_select, wald_l, wald_eta0, wald_alpha);
        }
        if (mc->parsed()) return run_mc_command(mc_plan, mc_jobs, mc_out, mc_quiet);
        if (power->parsed()) return run_power_command(pw_plan, pw_betas, pw_level, pw_jobs, pw_out, pw_quiet);
        std::cout << app.help();
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
