#include "kamstark/serialize.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#ifndef KAMSTARK_VERSION_STRING
#define KAMSTARK_VERSION_STRING "0.0.0+gunknown"
#endif

namespace kamstark {

std::string version_string() { return KAMSTARK_VERSION_STRING; }

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string config_hash(const Json& config) { return hex64(fnv1a(config.dump())); }

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json to_json(const BoundCheck& c) {
  return Json{{"name", c.name},           {"step", c.step}, {"measured", c.measured}, {"threshold", c.threshold},
              {"pass", c.pass},           {"detail", c.detail}};
}

Json checks_json(const std::vector<BoundCheck>& checks) {
  Json a = Json::array();
  for (const auto& c : checks) a.push_back(to_json(c));
  return a;
}

std::vector<BoundCheck> checks_from_json(const Json& j) {
  std::vector<BoundCheck> out;
  for (const auto& e : j) {
    BoundCheck c;
    c.name = e.value("name", "");
    c.step = e.value("step", -1);
    c.measured = e.value("measured", 0.0);
    c.threshold = e.value("threshold", 0.0);
    c.pass = e.value("pass", false);
    c.detail = e.value("detail", "");
    out.push_back(std::move(c));
  }
  return out;
}

Json to_json(const DualScalar& d) { return Json{{"value", d.value}, {"grad", d.grad}}; }

Json model_json(const LatticeModel& m) {
  return Json{{"window", m.window.to_string()}, {"delta", m.delta}, {"seed", m.seed}, {"amplitude", m.amplitude}};
}

LatticeModel model_from_json(const Json& j) {
  try {
    return LatticeModel::sample(SiteWindow::parse(j.at("window").get<std::string>()), j.at("delta").get<double>(),
                                j.at("seed").get<std::uint64_t>(), j.value("amplitude", 0.1));
  } catch (const Json::exception& e) {
    fail(Error::Code::invalid_argument, std::string("model: ") + e.what());
  }
}

Json diagonalization_json(const DiagonalizationResult& r) {
  Json eig = Json::array();
  for (int n = r.model.window.lo(); n <= r.model.window.hi(); ++n) {
    const DualScalar d = r.eigenvalue(n);
    eig.push_back(Json{{"site", n}, {"value", d.value}, {"interior", r.interior.contains(n)}});
  }
  Json bounds = Json::array();
  for (int k = 0; k < static_cast<int>(r.step_norms.size()); ++k) bounds.push_back(r.constants.step_bound(k));

  const LatticeOperator& g = r.transform;
  Json diags = Json::array();
  for (int l = -g.bandwidth(); l <= g.bandwidth(); ++l) {
    Json rows = Json::array();
    const double* v = g.diag_values(l);
    for (int i = 0; i < g.size(); ++i) rows.push_back(g.row_valid(l, i) ? v[i] : 0.0);
    diags.push_back(Json{{"offset", l}, {"values", std::move(rows)}});
  }
  return Json{{"model", model_json(r.model)},
              {"interior", r.interior.to_string()},
              {"active", r.active},
              {"constants",
               {{"C_delta", r.constants.c_delta}, {"eps0", r.constants.eps0}, {"r", r.constants.r}, {"alpha", r.constants.alpha}}},
              {"steps", r.steps},
              {"step_norms", r.step_norms},
              {"step_bounds", std::move(bounds)},
              {"eigenvalues", std::move(eig)},
              {"truncation_mass", r.truncation_mass},
              {"tail_mass", r.tail_mass},
              {"transform", {{"layout", "diagonal l holds entries (m, m - l), rows indexed from window lo"},
                             {"window", g.window().to_string()},
                             {"bandwidth", g.bandwidth()},
                             {"diagonals", std::move(diags)}}},
              {"checks", checks_json(r.checks)},
              {"all_pass", r.all_pass()}};
}

Json hamiltonian_json(const NonlinearHamiltonian& h) {
  Json freq = Json::array();
  for (int n = h.sites.lo(); n <= h.sites.hi(); ++n) {
    const DualScalar& d = h.frequency(n);
    freq.push_back(Json{{"site", n}, {"value", d.value}, {"grad", d.grad}});
  }
  Json entries = Json::array();
  for (std::size_t i = 0; i < h.tensor.size(); ++i) {
    const auto& k = h.tensor.key(i);
    entries.push_back(Json{{"sites", {k[0], k[1], k[2], k[3]}}, {"value", h.tensor.value(i)}});
  }
  return Json{{"model", model_json(h.model)},
              {"eps", h.eps},
              {"sites", h.sites.to_string()},
              {"grad_sites", h.grad_sites},
              {"frequencies", std::move(freq)},
              {"tensor",
               {{"entries", std::move(entries)}, {"kept_mass", h.tensor.kept_mass()}, {"dropped_mass", h.tensor.dropped_mass()}}},
              {"checks", checks_json(h.checks)},
              {"all_pass", all_pass(h.checks)}};
}

Json series_digest(const TFSeries& f) {
  std::uint64_t h = fnv1a("");
  double mass = 0.0;
  for (const auto& [key, c] : f.sorted()) {
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(&key), sizeof key), h);
    const double parts[2] = {c.v.real(), c.v.imag()};
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(parts), sizeof parts), h);
    mass += c.norm(f.nparams());
  }
  return Json{{"terms", f.size()},
              {"mass", mass},
              {"hash", hex64(h)},
              {"overflow_mass", f.overflow_mass},
              {"pruned_mass", f.pruned_mass}};
}

Json normal_form_json(const NormalForm& n) {
  Json omega = Json::array();
  for (const auto& c : n.omega) omega.push_back(c.v.real());
  Json normal = Json::array();
  for (const auto& [site, c] : n.normal) normal.push_back(Json{{"site", site}, {"value", c.v.real()}});
  return Json{{"tangential", n.tangential}, {"actions", n.actions}, {"energy", n.energy.v.real()}, {"omega", omega}, {"normal", normal}};
}

Json schedule_json(const Schedule& s) {
  Json levels = Json::array();
  for (const auto& l : s.levels) {
    levels.push_back(Json{{"nu", l.nu}, {"eps", l.eps}, {"gamma", l.gamma}, {"K", l.k}, {"s", l.s}, {"r", l.r}, {"rho", l.rho}});
  }
  return Json{{"eps0", s.eps0}, {"c", s.c}, {"b", s.b}, {"tau", s.tau}, {"d", s.d}, {"levels", std::move(levels)}};
}

Json kam_run_json(const KamRun& run) {
  Json steps = Json::array();
  Json history = Json::array();
  history.push_back(normal_form_json(run.initial.normal));
  for (const auto& st : run.steps) {
    const auto& hs = st.homological;
    steps.push_back(Json{{"nu", st.nu},
                         {"x_low", st.x_low},
                         {"x_low_next", st.x_low_next},
                         {"x_high_next", st.x_high_next},
                         {"contraction_exponent", std::log(st.x_low_next) / std::log(st.x_low)},
                         {"omega_drift", st.omega_drift},
                         {"normal_drift_ratio", st.normal_drift_ratio},
                         {"lie_order", st.lie_order},
                         {"overflow_mass", st.overflow_mass},
                         {"pruned_mass", st.pruned_mass},
                         {"homological_residual", hs.residual_norm},
                         {"zero_average_max", hs.zero_average_max},
                         {"min_divisor_ratio", hs.min_divisor_ratio},
                         {"solved_terms", hs.solved_terms},
                         {"generator", series_digest(hs.generator)},
                         {"perturbation", series_digest(st.perturbation)},
                         {"checks", checks_json(st.checks)}});
    history.push_back(normal_form_json(st.normal));
  }
  return Json{{"schedule", schedule_json(run.schedule)},
              {"initial_perturbation", series_digest(run.initial.perturbation)},
              {"steps", std::move(steps)},
              {"normal_form_history", std::move(history)},
              {"checks", checks_json(run.checks)},
              {"all_pass", run.all_pass()}};
}

Json measure_json(const MeasureResult& m) {
  Json rows = Json::array();
  for (const auto& r : m.rows) {
    rows.push_back(Json{{"eps", r.eps},
                        {"gamma0", r.gamma0},
                        {"samples", r.samples},
                        {"rejected", r.rejected},
                        {"rejected_frac", r.fraction},
                        {"ci_lo", r.ci_lo},
                        {"ci_hi", r.ci_hi},
                        {"rejected_by_level", r.rejected_by_level},
                        {"rejected_by_class", r.rejected_by_class},
                        {"saturated", r.saturated}});
  }
  return Json{{"k_cut", m.k_cut},     {"tau", m.tau},           {"rows", std::move(rows)}, {"slope", m.slope},
              {"slope_points", m.slope_points}, {"twist_min", m.twist_min}, {"checks", checks_json(m.checks)},
              {"all_pass", all_pass(m.checks)}};
}

std::string measure_csv(const MeasureResult& m, const std::string& provenance) {
  std::ostringstream os;
  os << provenance << "eps,rejected_frac,ci_lo,ci_hi\n";
  for (const auto& r : m.rows) {
    os << format_number(r.eps) << ',' << format_number(r.fraction) << ',' << format_number(r.ci_lo) << ','
       << format_number(r.ci_hi) << '\n';
  }
  return os.str();
}

std::string trajectory_csv(const Trajectory& t, const std::string& provenance) {
  std::ostringstream os;
  os << provenance << "t,mass,energy,M_d,edge_mass\n";
  for (const auto& o : t.samples) {
    os << format_number(o.t) << ',' << format_number(o.mass) << ',' << format_number(o.energy) << ','
       << format_number(o.moment) << ',' << format_number(o.edge_mass) << '\n';
  }
  return os.str();
}

Json envelope(std::string_view kind, const Json& config, Json body) {
  body["kind"] = std::string(kind);
  body["version"] = version_string();
  body["config"] = config;
  body["config_hash"] = config_hash(config);
  return body;
}

std::string provenance_lines(std::string_view kind, const Json& config) {
  return "# kamstark " + std::string(kind) + " version " + version_string() + " config_hash " + config_hash(config) +
         "\n# config " + config.dump() + "\n";
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Error::Code::io, "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(Error::Code::io, "'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Error::Code::io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(Error::Code::io, "write to '" + path + "' failed");
}

}  // namespace kamstark
