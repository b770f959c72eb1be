#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdmem/estimate.hpp"
#include "sdmem/model.hpp"
#include "sdmem/suffstats.hpp"

namespace sdmem::io {

using Json = nlohmann::json;

// Shortest text that reads back to the same double.
std::string format_double(double value);

// Columns subject_id, t, x_1..x_r, d_1..d_s; one row per observation.
void write_trajectories(std::ostream& out, std::span<const Trajectory> trajectories);
void write_trajectories(const std::string& path, std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_trajectories(std::istream& in);
std::vector<Trajectory> read_trajectories(const std::string& path);

Json vector_to_json(const Vector& v);
Json matrix_to_json(const Matrix& m);
Vector vector_from_json(const Json& j);
Matrix matrix_from_json(const Json& j);

Json theta_to_json(const Theta& theta);
Theta theta_from_json(const Json& j);

Json fit_to_json(const MleFit& fit);
MleFit fit_from_json(const Json& j);

Json stats_to_json(std::span<const GeneralSuffStats> stats);

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& j);

// "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> read_key_values(std::istream& in);
std::map<std::string, std::string> read_key_values(const std::string& path);

// Comma-separated numbers, e.g. "1,2,3".
std::vector<double> parse_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace sdmem::io
