#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kamstark/dynamics.hpp"
#include "kamstark/measure_mc.hpp"
#include "kamstark/nonlinear_kam.hpp"

namespace kamstark {

// Object keys are kept in a std::map, so dump() emits them sorted.
using Json = nlohmann::json;

std::string version_string();

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t h);
// Hash of the canonical dump of a configuration.
std::string config_hash(const Json& config);

// Fixed round-trip formatting used by every CSV writer.
std::string format_number(double x);

Json to_json(const BoundCheck& c);
Json checks_json(const std::vector<BoundCheck>& checks);
std::vector<BoundCheck> checks_from_json(const Json& j);
Json to_json(const DualScalar& d);

Json model_json(const LatticeModel& m);
// Resamples the realization from (window, delta, seed, amplitude).
LatticeModel model_from_json(const Json& j);

Json diagonalization_json(const DiagonalizationResult& r);
Json hamiltonian_json(const NonlinearHamiltonian& h);

// Term count, coefficient mass and an order-independent content hash.
Json series_digest(const TFSeries& f);
Json normal_form_json(const NormalForm& n);
Json schedule_json(const Schedule& s);
Json kam_run_json(const KamRun& run);

Json measure_json(const MeasureResult& m);
// Columns eps, rejected_frac, ci_lo, ci_hi after `#` provenance lines.
std::string measure_csv(const MeasureResult& m, const std::string& provenance);
// Columns t, mass, energy, M_d, edge_mass after `#` provenance lines.
std::string trajectory_csv(const Trajectory& t, const std::string& provenance);

// Adds kind, version, config and config_hash to an artifact body.
Json envelope(std::string_view kind, const Json& config, Json body);
std::string provenance_lines(std::string_view kind, const Json& config);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace kamstark
