#include "sdmem/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace sdmem::io {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep)) out.push_back(trim(cell));
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& text) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw Error(ErrorKind::Io, "not a number: '" + text + "'");
    return value;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
    return out;
}

}  // namespace

std::string format_double(double value) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) throw Error(ErrorKind::Io, "cannot format number");
    return std::string(buf, end);
}

void write_trajectories(std::ostream& out, std::span<const Trajectory> trajectories) {
    const Eigen::Index r = trajectories.empty() ? 0 : trajectories.front().states.rows();
    const Eigen::Index s = trajectories.empty() ? 0 : trajectories.front().covariates.rows();
    out << "subject_id,t";
    for (Eigen::Index j = 1; j <= r; ++j) out << ",x_" << j;
    for (Eigen::Index j = 1; j <= s; ++j) out << ",d_" << j;
    out << '\n';
    for (const auto& traj : trajectories) {
        if (traj.states.rows() != r || traj.covariates.rows() != s) {
            throw Error(ErrorKind::DimensionMismatch, "trajectories differ in state or covariate dimension");
        }
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const auto col = static_cast<Eigen::Index>(k);
            out << traj.subject_id << ',' << format_double(traj.times[k]);
            for (Eigen::Index j = 0; j < r; ++j) out << ',' << format_double(traj.states(j, col));
            for (Eigen::Index j = 0; j < s; ++j) out << ',' << format_double(traj.covariates(j, col));
            out << '\n';
        }
    }
}

void write_trajectories(const std::string& path, std::span<const Trajectory> trajectories) {
    auto out = open_out(path);
    write_trajectories(out, trajectories);
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::Io, "empty trajectory file");
    const auto header = split(trim(line), ',');
    if (header.size() < 3 || header[0] != "subject_id" || header[1] != "t") {
        throw Error(ErrorKind::Io, "trajectory header must start with subject_id,t");
    }
    std::size_t r = 0, s = 0;
    for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c].rfind("x_", 0) == 0) {
            if (s > 0) throw Error(ErrorKind::Io, "state columns must precede covariate columns");
            ++r;
        } else if (header[c].rfind("d_", 0) == 0) {
            ++s;
        } else {
            throw Error(ErrorKind::Io, "unexpected column '" + header[c] + "'");
        }
    }

    struct Rows {
        std::vector<double> times;
        std::vector<std::vector<double>> values;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Rows> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(trim(line), ',');
        if (cells.size() != header.size()) {
            throw Error(ErrorKind::Io, "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                           " fields, expected " + std::to_string(header.size()));
        }
        auto [it, fresh] = rows.try_emplace(cells[0]);
        if (fresh) order.push_back(cells[0]);
        it->second.times.push_back(parse_double(cells[1]));
        std::vector<double> v;
        for (std::size_t c = 2; c < cells.size(); ++c) v.push_back(parse_double(cells[c]));
        it->second.values.push_back(std::move(v));
    }

    std::vector<Trajectory> out;
    for (const auto& id : order) {
        const Rows& src = rows.at(id);
        Trajectory traj;
        traj.subject_id = id;
        traj.times = src.times;
        const auto n = static_cast<Eigen::Index>(src.times.size());
        traj.states.resize(static_cast<Eigen::Index>(r), n);
        traj.covariates.resize(static_cast<Eigen::Index>(s), n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& v = src.values[static_cast<std::size_t>(k)];
            for (std::size_t j = 0; j < r; ++j) traj.states(static_cast<Eigen::Index>(j), k) = v[j];
            for (std::size_t j = 0; j < s; ++j) traj.covariates(static_cast<Eigen::Index>(j), k) = v[r + j];
        }
        traj.validate();
        out.push_back(std::move(traj));
    }
    return out;
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
    auto in = open_in(path);
    return read_trajectories(in);
}

Json vector_to_json(const Vector& v) {
    Json j = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v[k]);
    return j;
}

Json matrix_to_json(const Matrix& m) {
    Json j = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        j.push_back(std::move(row));
    }
    return j;
}

Vector vector_from_json(const Json& j) {
    if (!j.is_array()) throw Error(ErrorKind::Io, "expected a JSON array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
    return v;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array()) throw Error(ErrorKind::Io, "expected a JSON array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw Error(ErrorKind::Io, "matrix rows differ in length");
        }
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

Json theta_to_json(const Theta& theta) {
    return Json{{"mu", vector_to_json(theta.mu)}, {"omega", matrix_to_json(theta.omega)}};
}

Theta theta_from_json(const Json& j) {
    const Json& src = j.contains("theta_hat") ? j.at("theta_hat") : j;
    if (!src.contains("mu") || !src.contains("omega")) throw Error(ErrorKind::Io, "theta JSON needs mu and omega");
    return Theta{vector_from_json(src.at("mu")), matrix_from_json(src.at("omega"))};
}

Json fit_to_json(const MleFit& fit) {
    Json j;
    j["theta_hat"] = theta_to_json(fit.theta_hat);
    j["loglik"] = fit.loglik;
    j["score_norm"] = fit.score_norm;
    j["last_step"] = fit.last_step;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["boundary"] = fit.boundary;
    j["observed_information"] = matrix_to_json(fit.observed_information);
    j["warnings"] = fit.warnings;
    return j;
}

MleFit fit_from_json(const Json& j) {
    MleFit fit;
    fit.theta_hat = theta_from_json(j);
    fit.loglik = j.value("loglik", 0.0);
    fit.score_norm = j.value("score_norm", 0.0);
    fit.last_step = j.value("last_step", 0.0);
    fit.iterations = j.value("iterations", 0);
    fit.converged = j.value("converged", false);
    fit.boundary = j.value("boundary", false);
    if (j.contains("observed_information")) fit.observed_information = matrix_from_json(j.at("observed_information"));
    if (j.contains("warnings")) fit.warnings = j.at("warnings").get<std::vector<std::string>>();
    return fit;
}

Json stats_to_json(std::span<const GeneralSuffStats> stats) {
    Json out = Json::array();
    for (const auto& st : stats) {
        out.push_back(Json{{"subject_id", st.subject_id},
                           {"scheme", std::string(to_string(st.scheme))},
                           {"u1", vector_to_json(st.u1)},
                           {"v1", matrix_to_json(st.v1)},
                           {"u2", vector_to_json(st.u2)},
                           {"v2", matrix_to_json(st.v2)},
                           {"s", matrix_to_json(st.s)}});
    }
    return out;
}

Json read_json(const std::string& path) {
    auto in = open_in(path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::Io, "'" + path + "': " + e.what());
    }
}

void write_json(const std::string& path, const Json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

std::map<std::string, std::string> read_key_values(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::Io, "line " + std::to_string(line_no) + ": expected key = value");
        }
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
    auto in = open_in(path);
    return read_key_values(in);
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& cell : split(text, ',')) {
        if (!cell.empty()) out.push_back(parse_double(cell));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (double v : parse_list(text)) {
        if (v != static_cast<int>(v)) throw Error(ErrorKind::Io, "expected integers in '" + text + "'");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

}  // namespace sdmem::io
