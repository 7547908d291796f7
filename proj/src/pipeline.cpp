#include "kamstark/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace kamstark {

namespace {

constexpr double kStarkDelta = 1.0 / 60.0;

// Reads fields with defaults, validates types and records the effective value.
class ConfigReader {
public:
  ConfigReader(const Json& in, std::string command) : in_(in), command_(std::move(command)) {
    if (!in_.is_object()) fail(Error::Code::invalid_argument, "config: expected a JSON object");
    effective_["command"] = command_;
    seen_.insert("command");
  }

  double number(const std::string& key, double def) {
    const Json* v = find(key);
    double x = def;
    if (v) {
      if (v->is_number()) {
        x = v->get<double>();
      } else if (v->is_string()) {
        x = parse_double(key, v->get<std::string>());
      } else {
        bad(key, "a number");
      }
    }
    if (!std::isfinite(x)) bad(key, "a finite number");
    effective_[key] = x;
    return x;
  }

  long integer(const std::string& key, long def) {
    const Json* v = find(key);
    long x = def;
    if (v) {
      if (v->is_number_integer()) {
        x = v->get<long>();
      } else if (v->is_string()) {
        const std::string s = v->get<std::string>();
        char* end = nullptr;
        x = std::strtol(s.c_str(), &end, 10);
        if (s.empty() || *end != '\0') bad(key, "an integer");
      } else {
        bad(key, "an integer");
      }
    }
    effective_[key] = x;
    return x;
  }

  bool flag(const std::string& key, bool def) {
    const Json* v = find(key);
    bool x = def;
    if (v) {
      if (!v->is_boolean()) bad(key, "true or false");
      x = v->get<bool>();
    }
    effective_[key] = x;
    return x;
  }

  std::string text(const std::string& key, const std::string& def) {
    const Json* v = find(key);
    std::string x = def;
    if (v) {
      if (!v->is_string()) bad(key, "a string");
      x = v->get<std::string>();
    }
    effective_[key] = x;
    return x;
  }

  SiteWindow window(const std::string& key, const std::string& def) {
    const std::string s = text(key, def);
    try {
      return SiteWindow::parse(s);
    } catch (const Error& e) {
      fail(Error::Code::invalid_argument, key == "window" ? e.what() : key + ": " + e.what());
    }
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& def) {
    const Json* v = find(key);
    std::vector<double> out = def;
    if (v) {
      out.clear();
      if (v->is_array()) {
        for (const auto& e : *v) {
          if (!e.is_number()) bad(key, "a list of numbers");
          out.push_back(e.get<double>());
        }
      } else if (v->is_string()) {
        for (const auto& part : split(v->get<std::string>())) out.push_back(parse_double(key, part));
      } else {
        bad(key, "a list of numbers");
      }
    }
    effective_[key] = out;
    return out;
  }

  std::vector<int> integers(const std::string& key, const std::vector<int>& def) {
    std::vector<int> out;
    for (double x : numbers(key, std::vector<double>(def.begin(), def.end()))) {
      if (x != std::floor(x) || std::abs(x) > 1e6) bad(key, "a list of integers");
      out.push_back(static_cast<int>(x));
    }
    effective_[key] = out;
    return out;
  }

  bool has(const std::string& key) const { return in_.contains(key); }
  void keep(const std::string& key, Json value) {
    seen_.insert(key);
    effective_[key] = std::move(value);
  }

  // Rejects keys that no reader consumed.
  Json finish() const {
    for (const auto& [key, value] : in_.items()) {
      if (key == "out" || key == "command") continue;
      if (!seen_.count(key)) fail(Error::Code::invalid_argument, "unknown option '" + key + "' for " + command_);
    }
    return effective_;
  }

private:
  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = in_.find(key);
    if (it == in_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& what) {
    fail(Error::Code::invalid_argument, key + ": expected " + what);
  }

  static double parse_double(const std::string& key, const std::string& s) {
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') bad(key, "a number, got '" + s + "'");
    return x;
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    return parts;
  }

  const Json& in_;
  std::string command_;
  Json effective_ = Json::object();
  std::set<std::string> seen_;
};

std::string output_path(const Json& config, const std::string& default_name) {
  if (config.contains("out") && config["out"].is_string() && !config["out"].get<std::string>().empty()) {
    return config["out"].get<std::string>();
  }
  const char* dir = std::getenv(kOutDirEnv);
  if (dir && *dir) return (std::filesystem::path(dir) / default_name).string();
  return default_name;
}

std::string sidecar_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.extension() == ".csv") return p.replace_extension(".json").string();
  return path + ".json";
}

Json hashable(Json config) {
  config.erase("out");
  return config;
}

std::vector<std::string> failed_names(const std::vector<BoundCheck>& checks) {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.pass) out.push_back(c.name + (c.step >= 0 ? "@" + std::to_string(c.step) : std::string()));
  return out;
}

// ---- per-command configuration ----

struct DiagonalizeConfig {
  LatticeModel model;
  DiagonalizeOptions options;
  Json effective;
};

DiagonalizeConfig read_diagonalize(const Json& in) {
  ConfigReader r(in, "diagonalize");
  const SiteWindow w = r.window("window", "-64:64");
  const double delta = r.number("delta", kStarkDelta);
  const long seed = r.integer("seed", 1);
  const double amplitude = r.number("amplitude", 0.1);
  DiagonalizeConfig c;
  c.options.target = r.number("target", 1e-12);
  c.options.max_steps = static_cast<int>(r.integer("max_steps", 9));
  c.options.active = r.integers("active", {});
  if (w.size() < 8) fail(Error::Code::invalid_argument, "window: need at least 8 sites");
  if (!(delta >= 0.0)) fail(Error::Code::invalid_argument, "delta: must be nonnegative");
  if (seed < 0) fail(Error::Code::invalid_argument, "seed: must be nonnegative");
  if (!(c.options.target > 0.0)) fail(Error::Code::invalid_argument, "target: must be positive");
  if (c.options.max_steps < 1) fail(Error::Code::invalid_argument, "max_steps: must be positive");
  for (int a : c.options.active)
    if (!w.contains(a)) fail(Error::Code::invalid_argument, "active: site " + std::to_string(a) + " outside window");
  c.model = LatticeModel::sample(w, delta, static_cast<std::uint64_t>(seed), amplitude);
  c.effective = r.finish();
  return c;
}

// Hamiltonian inputs: the diagonalization configuration plus tensor options.
struct HamiltonianConfig {
  DiagonalizeConfig diag;
  double eps = 1e-4;
  std::vector<int> sites;
  std::string tensor_window;  // empty: interior of the diagonalization
  double prune_tol = 1e-14;
  Json effective;
};

HamiltonianConfig hamiltonian_from(const Json& source, double eps, std::vector<int> sites, std::string tensor_window,
                                   double prune_tol) {
  HamiltonianConfig c;
  c.diag = read_diagonalize(source);
  c.eps = eps;
  c.sites = std::move(sites);
  c.tensor_window = std::move(tensor_window);
  c.prune_tol = prune_tol;
  if (!(eps >= 0.0 && eps < 1.0)) fail(Error::Code::invalid_argument, "eps: must lie in [0, 1)");
  if (c.sites.empty() || c.sites.size() > static_cast<std::size_t>(kMaxParams)) {
    fail(Error::Code::invalid_argument, "sites: need 1.." + std::to_string(kMaxParams) + " sites");
  }
  if (!(prune_tol >= 0.0)) fail(Error::Code::invalid_argument, "prune_tol: must be nonnegative");
  if (!c.tensor_window.empty()) {
    try {
      SiteWindow::parse(c.tensor_window);
    } catch (const Error& e) {
      fail(Error::Code::invalid_argument, std::string("tensor_window: ") + e.what());
    }
  }
  c.effective = Json{{"eps", eps}, {"sites", c.sites}, {"tensor_window", c.tensor_window}, {"prune_tol", prune_tol},
                     {"source", c.diag.effective}};
  return c;
}

struct LinearStage {
  DiagonalizationResult lin;
  NonlinearHamiltonian ham;
};

LinearStage build_stage(const HamiltonianConfig& c, const LatticeModel& model) {
  DiagonalizeOptions opt = c.diag.options;
  opt.active = c.sites;
  LinearStage s;
  s.lin = diagonalize(model, opt);
  TensorOptions to;
  to.grad_sites = c.sites;
  to.prune_tol = c.prune_tol;
  if (!c.tensor_window.empty()) {
    to.sites = SiteWindow::parse(c.tensor_window);
    to.use_interior = false;
  }
  for (int j : c.sites) {
    const SiteWindow& w = to.use_interior ? s.lin.interior : to.sites;
    if (!w.contains(j)) fail(Error::Code::invalid_argument, "sites: site " + std::to_string(j) + " outside the tensor window");
  }
  s.ham = build_hamiltonian(s.lin, c.eps, to);
  return s;
}

Json require_artifact(const std::string& path, const std::string& kind, const std::string& field) {
  if (path.empty()) fail(Error::Code::invalid_argument, field + ": path required");
  Json a = read_json_file(path);
  if (!a.is_object() || a.value("kind", "") != kind) {
    fail(Error::Code::invalid_argument, field + ": '" + path + "' is not a " + kind + " artifact");
  }
  if (!a.contains("config") || config_hash(a["config"]) != a.value("config_hash", "")) {
    fail(Error::Code::invalid_argument, field + ": '" + path + "' has a config hash mismatch");
  }
  return a;
}

HamiltonianConfig hamiltonian_from_artifact(const Json& artifact) {
  const Json& cfg = artifact.at("config");
  return hamiltonian_from(cfg.at("source"), cfg.at("eps").get<double>(), cfg.at("sites").get<std::vector<int>>(),
                          cfg.value("tensor_window", ""), cfg.value("prune_tol", 1e-14));
}

struct KamConfig {
  HamiltonianConfig ham;
  std::vector<int> sites;
  std::vector<double> xi;  // empty: the realization's own values
  KamRunOptions options;
  Json effective;
};

KamConfig read_kam(const Json& in, const Json& ham_artifact) {
  ConfigReader r(in, "kam");
  r.text("ham", "");
  const HamiltonianConfig base = hamiltonian_from_artifact(ham_artifact);
  KamConfig c;
  c.sites = r.integers("sites", base.sites);
  const double eps = r.number("eps", base.eps);
  c.options.steps = static_cast<int>(r.integer("steps", 2));
  const Json* xi_field = in.contains("xi") ? &in["xi"] : nullptr;
  if (!xi_field || (xi_field->is_string() && xi_field->get<std::string>() == "auto")) {
    r.text("xi", "auto");
  } else {
    c.xi = r.numbers("xi", {});
    if (c.xi.size() != c.sites.size()) fail(Error::Code::invalid_argument, "xi: need 'auto' or one value per site");
    for (double x : c.xi)
      if (std::abs(x) > 0.1) fail(Error::Code::invalid_argument, "xi: values must lie in [-1/10, 1/10]");
  }
  c.options.action_angle.tangential = c.sites;
  c.options.action_angle.actions = r.numbers("actions", {});
  c.options.step.lie_prune = r.number("lie_prune", 1e-3);
  c.options.step.k_plus_override = r.number("k_plus", -1.0);
  c.options.step.contraction_constant = r.number("contraction_constant", 1.0);
  c.options.step.enforce_resonance = r.flag("enforce_resonance", true);
  if (c.options.steps < 0 || c.options.steps > 3) fail(Error::Code::invalid_argument, "steps: must lie in 0..3");
  if (!c.options.action_angle.actions.empty() && c.options.action_angle.actions.size() != c.sites.size()) {
    fail(Error::Code::invalid_argument, "actions: need one value per site");
  }
  c.ham = hamiltonian_from(base.diag.effective, eps, c.sites, base.tensor_window, base.prune_tol);
  Json eff = r.finish();
  eff.erase("ham");
  eff["hamiltonian"] = c.ham.effective;
  c.effective = eff;
  return c;
}

LatticeModel kam_model(const KamConfig& c) {
  LatticeModel m = c.ham.diag.model;
  for (std::size_t i = 0; i < c.xi.size(); ++i) {
    if (!m.window.contains(c.sites[i])) fail(Error::Code::invalid_argument, "sites: outside window");
    m.disorder[static_cast<std::size_t>(m.window.index(c.sites[i]))] = c.xi[i];
  }
  return m;
}

// ---- commands ----

CommandResult cmd_diagonalize(const Json& in) {
  const DiagonalizeConfig c = read_diagonalize(in);
  const DiagonalizationResult r = diagonalize(c.model, c.options);
  const std::string out = output_path(in, "result.json");
  const Json cfg = hashable(c.effective);
  write_text_file(out, envelope("diagonalize", cfg, diagonalization_json(r)).dump(1) + "\n");
  CommandResult res;
  res.exit_code = r.all_pass() ? 0 : 1;
  res.files = {out};
  res.summary = Json{{"steps", r.steps},
                     {"final_norm", r.step_norms.empty() ? 0.0 : r.step_norms.back()},
                     {"checks", r.checks.size()},
                     {"failed", failed_names(r.checks)}};
  return res;
}

CommandResult cmd_hamiltonian(const Json& in) {
  ConfigReader r(in, "hamiltonian");
  const std::string from = r.text("from", "");
  const double eps = r.number("eps", 1e-4);
  const std::vector<int> sites = r.integers("sites", {-1, 0});
  const std::string tw = r.text("tensor_window", "");
  const double prune_tol = r.number("prune_tol", 1e-14);
  r.finish();
  const Json diag = require_artifact(from, "diagonalize", "from");
  const HamiltonianConfig c = hamiltonian_from(diag.at("config"), eps, sites, tw, prune_tol);
  const LinearStage s = build_stage(c, c.diag.model);

  // the artifact must describe the same realization
  double mismatch = 0.0;
  for (const auto& e : diag.at("eigenvalues")) {
    mismatch = std::max(mismatch, std::abs(e.at("value").get<double>() - s.lin.eigenvalue(e.at("site").get<int>()).value));
  }
  if (mismatch > 1e-12) fail(Error::Code::invalid_argument, "from: stored eigenvalues differ from the recomputation");

  const std::string out = output_path(in, "ham.json");
  Json body = hamiltonian_json(s.ham);
  body["source_hash"] = diag.at("config_hash");
  write_text_file(out, envelope("hamiltonian", c.effective, std::move(body)).dump(1) + "\n");
  CommandResult res;
  res.exit_code = all_pass(s.ham.checks) ? 0 : 1;
  res.files = {out};
  res.summary = Json{{"tensor_entries", s.ham.tensor.size()},
                     {"dropped_mass", s.ham.tensor.dropped_mass()},
                     {"failed", failed_names(s.ham.checks)}};
  return res;
}

struct KamOutcome {
  KamConfig config;
  LatticeModel model;
  LinearStage stage;
  KamRun run;
};

KamOutcome execute_kam(const KamConfig& c) {
  KamOutcome o{c, kam_model(c), {}, {}};
  o.stage = build_stage(c.ham, o.model);
  o.run = run_nonlinear_kam(o.stage.ham, c.options);
  return o;
}

CommandResult cmd_kam(const Json& in) {
  const std::string ham_path = in.value("ham", "");
  const Json ham = require_artifact(ham_path, "hamiltonian", "ham");
  const KamConfig c = read_kam(in, ham);
  const std::string out = output_path(in, "kamlog.json");
  CommandResult res;
  res.files = {out};
  Json body;
  try {
    const KamOutcome o = execute_kam(c);
    body = kam_run_json(o.run);
    body["model"] = model_json(o.model);
    res.exit_code = o.run.all_pass() ? 0 : 1;
    Json omega = Json::array();
    for (const auto& st : o.run.steps) omega = normal_form_json(st.normal)["omega"];
    res.summary = Json{{"steps", o.run.steps.size()}, {"omega", omega}, {"failed", failed_names(o.run.checks)}};
  } catch (const Error& e) {
    if (e.code() != Error::Code::resonance) throw;
    // an excluded parameter is reported as a failed non-resonance verdict
    const BoundCheck check{"non_resonance", -1, 0.0, 0.0, false, e.what()};
    body = Json{{"checks", checks_json({check})}, {"all_pass", false}, {"model", model_json(kam_model(c))}};
    res.exit_code = 1;
    res.summary = Json{{"failed", {"non_resonance"}}, {"detail", e.what()}};
  }
  write_text_file(out, envelope("kam", hashable(c.effective), std::move(body)).dump(1) + "\n");
  return res;
}

CommandResult cmd_measure(const Json& in) {
  ConfigReader r(in, "measure");
  MeasureConfig m;
  m.window = r.window("window", "-32:32");
  m.delta = r.number("delta", kStarkDelta);
  m.seed = static_cast<std::uint64_t>(r.integer("seed", 1));
  m.sample_seed = static_cast<std::uint64_t>(r.integer("sample_seed", 7));
  m.tangential = r.integers("sites", {-1, 1});
  m.actions = r.numbers("actions", {});
  m.eps_list = r.numbers("eps", {1e-6, 1e-8, 1e-10, 1e-12});
  m.samples = static_cast<int>(r.integer("samples", 20000));
  m.levels = static_cast<int>(r.integer("levels", 2));
  m.xi_half_width = r.number("xi_half_width", 0.1);
  m.k_cut = static_cast<int>(r.integer("k_cut", -1));
  m.tau = r.number("tau", -1.0);
  m.nonlinear_shift = r.flag("nonlinear_shift", true);
  const Json eff = r.finish();
  if (m.samples < 1000) fail(Error::Code::invalid_argument, "samples: must be at least 1000");
  const MeasureResult res_m = measure_sweep(m);

  const std::string out = output_path(in, "measure.csv");
  const std::string side = sidecar_path(out);
  const Json cfg = hashable(eff);
  write_text_file(out, measure_csv(res_m, provenance_lines("measure", cfg)));
  write_text_file(side, envelope("measure", cfg, measure_json(res_m)).dump(1) + "\n");
  CommandResult res;
  res.exit_code = all_pass(res_m.checks) ? 0 : 1;
  res.files = {out, side};
  Json fr = Json::array();
  for (const auto& row : res_m.rows) fr.push_back(row.fraction);
  res.summary = Json{{"rejected_frac", fr}, {"slope", res_m.slope}, {"twist_min", res_m.twist_min},
                     {"failed", failed_names(res_m.checks)}};
  return res;
}

CommandResult cmd_evolve(const Json& in) {
  ConfigReader r(in, "evolve");
  const std::string model_path = r.text("model", "");
  const std::string init = r.text("init", "site:0");
  EvolutionOptions opt;
  opt.T = r.number("T", 1000.0);
  opt.dt = r.number("dt", 1e-3);
  opt.scheme = parse_scheme(r.text("scheme", "splitstep"));
  opt.stride = r.number("stride", 1.0);
  opt.d = r.number("d", 2.0);
  opt.field = r.flag("stark", true) ? 1.0 : 0.0;
  opt.disorder = r.flag("disorder", true);
  opt.mass_tol = r.number("mass_tol", 1e-6);
  const double factor = r.number("factor", 4.0);
  const long defect_points = r.integer("defect_points", 100);
  std::optional<double> eps;
  if (r.has("eps")) eps = r.number("eps", 0.0);
  // lattice used when neither a model artifact nor a torus is given
  const SiteWindow w = r.window("window", "-32:32");
  const double delta = r.number("delta", kStarkDelta);
  const long seed = r.integer("seed", 1);
  Json eff = r.finish();
  if (!(opt.T > 0.0) || !(opt.dt > 0.0) || !(opt.stride > 0.0)) {
    fail(Error::Code::invalid_argument, "T, dt, stride: must be positive");
  }
  if (!(factor > 1.0)) fail(Error::Code::invalid_argument, "factor: must exceed 1");
  if (eps && !(*eps >= 0.0 && *eps < 1.0)) fail(Error::Code::invalid_argument, "eps: must lie in [0, 1)");

  const auto colon = init.find(':');
  const std::string kind = init.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : init.substr(colon + 1);
  if (colon == std::string::npos || arg.empty() || (kind != "site" && kind != "eigen" && kind != "torus")) {
    fail(Error::Code::invalid_argument, "init: expected site:N, eigen:N or torus:PATH, got '" + init + "'");
  }

  CommandResult res;
  Json summary;
  Trajectory traj;
  double eps_used = eps.value_or(1e-6);
  if (kind == "torus") {
    const Json log = require_artifact(arg, "kam", "init");
    Json kcfg = log.at("config");
    const Json ham_cfg = kcfg.at("hamiltonian");
    const double kam_eps = ham_cfg.at("eps").get<double>();
    if (eps && *eps != kam_eps) fail(Error::Code::invalid_argument, "eps: differs from the torus eps " + format_number(kam_eps));
    eps_used = kam_eps;
    // rebuild the run from its recorded configuration
    Json ham_artifact = Json{{"config", ham_cfg}};
    kcfg.erase("hamiltonian");
    const KamOutcome o = execute_kam(read_kam(kcfg, ham_artifact));
    std::vector<double> linear;
    for (int j : o.config.sites) linear.push_back(o.stage.lin.eigenvalue(j).value);
    const TorusSampler sampler(o.run, o.stage.ham, o.stage.lin);
    const TorusRun tr = run_torus(o.model, eps_used, sampler, linear, opt, static_cast<int>(defect_points));
    traj = tr.trajectory;
    summary = Json{{"defect", tr.defect},
                   {"defect_time", tr.defect_time},
                   {"recovered_frequencies", tr.recovered},
                   {"linear_frequencies", tr.linear},
                   {"torus_frequencies", sampler.frequencies()},
                   {"max_shift", tr.max_shift}};
    eff["torus_hash"] = log.at("config_hash");
  } else {
    LatticeModel model = model_path.empty() ? LatticeModel::sample(w, delta, static_cast<std::uint64_t>(seed))
                                            : model_from_json(read_json_file(model_path).at("model"));
    if (!model_path.empty()) eff["model_json"] = model_json(model);
    const long n = std::strtol(arg.c_str(), nullptr, 10);
    if (std::to_string(n) != arg) fail(Error::Code::invalid_argument, "init: site must be an integer, got '" + arg + "'");
    const int site = static_cast<int>(n);
    if (!model.window.contains(site)) fail(Error::Code::invalid_argument, "init: site " + arg + " outside the window");
    LatticeState u0 = LatticeState::localized(model.window, site);
    if (kind == "eigen") {
      DiagonalizeOptions dopt;
      dopt.active = {site};
      const DiagonalizationResult lin = diagonalize(model, dopt);
      for (int k = model.window.lo(); k <= model.window.hi(); ++k) {
        u0.u[static_cast<std::size_t>(model.window.index(k))] = lin.transform.value(k, site);
      }
    }
    traj = integrate(model, eps_used, u0, opt);
  }
  eff["eps"] = eps_used;
  const LocalizationVerdict v = verify_localization(traj, factor);
  summary["localization"] = Json{{"max_ratio", v.max_ratio}, {"factor", v.factor}, {"bounded", v.bounded}};
  summary["mass_drift"] = traj.mass_drift;
  summary["energy_drift"] = traj.energy_drift;
  summary["edge_contaminated"] = traj.edge_contaminated;

  const std::string out = output_path(in, "traj.csv");
  const std::string side = sidecar_path(out);
  const Json cfg = hashable(eff);
  write_text_file(out, trajectory_csv(traj, provenance_lines("evolve", cfg)));
  const std::vector<BoundCheck> checks{
      BoundCheck{"weighted_norm_growth", -1, v.max_ratio, factor, v.bounded, "max_t M_d(t)/M_d(0) over the horizon"}};
  Json body = summary;
  body["checks"] = checks_json(checks);
  body["all_pass"] = v.bounded;
  write_text_file(side, envelope("evolve", cfg, body).dump(1) + "\n");
  res.exit_code = v.bounded ? 0 : 1;
  res.files = {out, side};
  res.summary = summary;
  return res;
}

CommandResult cmd_check_bounds(const Json& in) {
  ConfigReader r(in, "check-bounds");
  const SiteWindow w = r.window("window", "-64:64");
  const double delta = r.number("delta", kStarkDelta);
  const long seeds = r.integer("seeds", 20);
  const long first = r.integer("seed_start", 1);
  DiagonalizeOptions opt;
  opt.target = r.number("target", 1e-12);
  opt.max_steps = static_cast<int>(r.integer("max_steps", 9));
  const Json eff = r.finish();
  if (seeds < 1) fail(Error::Code::invalid_argument, "seeds: must be positive");
  if (first < 0) fail(Error::Code::invalid_argument, "seed_start: must be nonnegative");

  struct Worst {
    double ratio = 0.0;
    long failures = 0;
    long count = 0;
  };
  std::map<std::string, Worst> worst;
  Json per_seed = Json::array();
  long failing_seeds = 0;
  for (long s = first; s < first + seeds; ++s) {
    const LatticeModel m = LatticeModel::sample(w, delta, static_cast<std::uint64_t>(s));
    const DiagonalizationResult d = diagonalize(m, opt);
    for (const auto& c : d.checks) {
      auto& e = worst[c.name];
      ++e.count;
      if (!c.pass) ++e.failures;
      if (c.threshold > 0.0) e.ratio = std::max(e.ratio, c.measured / c.threshold);
    }
    if (!d.all_pass()) ++failing_seeds;
    per_seed.push_back(Json{{"seed", s}, {"steps", d.steps}, {"all_pass", d.all_pass()}, {"failed", failed_names(d.checks)}});
  }
  Json agg = Json::object();
  for (const auto& [name, e] : worst) {
    agg[name] = Json{{"evaluations", e.count}, {"failures", e.failures}, {"max_measured_over_threshold", e.ratio}};
  }
  const std::string out = output_path(in, "check_bounds.json");
  const Json cfg = hashable(eff);
  Json body{{"seeds", per_seed}, {"aggregate", agg}, {"failing_seeds", failing_seeds}, {"all_pass", failing_seeds == 0}};
  write_text_file(out, envelope("check-bounds", cfg, std::move(body)).dump(1) + "\n");
  CommandResult res;
  res.exit_code = failing_seeds == 0 ? 0 : 1;
  res.files = {out};
  res.summary = Json{{"seeds", seeds}, {"failing_seeds", failing_seeds}};
  return res;
}

CommandResult cmd_report(const Json& in) {
  ConfigReader r(in, "report");
  std::vector<std::string> inputs;
  if (in.contains("inputs")) {
    const Json& v = in["inputs"];
    if (v.is_array()) {
      for (const auto& e : v) {
        if (!e.is_string()) fail(Error::Code::invalid_argument, "inputs: expected a list of paths");
        inputs.push_back(e.get<std::string>());
      }
    } else if (v.is_string()) {
      std::stringstream ss(v.get<std::string>());
      std::string item;
      while (std::getline(ss, item, ',')) inputs.push_back(item);
    } else {
      fail(Error::Code::invalid_argument, "inputs: expected a list of paths");
    }
  }
  r.keep("inputs", inputs);
  const bool gnuplot = r.flag("gnuplot", true);
  const Json eff = r.finish();
  if (inputs.empty()) fail(Error::Code::invalid_argument, "inputs: at least one artifact path is required");

  Json artifacts = Json::array();
  std::ostringstream gp;
  bool any_fail = false;
  for (const auto& path : inputs) {
    const std::filesystem::path p(path);
    if (p.extension() == ".csv") {
      std::ifstream f(path);
      if (!f) fail(Error::Code::io, "cannot open '" + path + "'");
      std::string line, header, kind;
      long rows = 0;
      while (std::getline(f, line)) {
        if (line.rfind("# kamstark ", 0) == 0) {
          std::istringstream ls(line.substr(11));
          ls >> kind;
        } else if (!line.empty() && line[0] != '#') {
          if (header.empty()) {
            header = line;
          } else {
            ++rows;
          }
        }
      }
      artifacts.push_back(Json{{"path", path}, {"kind", kind}, {"columns", header}, {"rows", rows}});
      if (kind == "evolve") {
        gp << "set title 'weighted moment'\nset xlabel 't'\nset ylabel 'M_d'\n"
           << "plot '" << path << "' using 1:4 every ::1 with lines title 'M_d'\n\n";
      } else if (kind == "measure") {
        gp << "set title 'rejected fraction'\nset logscale xy\nset xlabel 'eps'\n"
           << "plot '" << path << "' using 1:2:3:4 every ::1 with yerrorlines title 'rejected'\nunset logscale\n\n";
      }
      continue;
    }
    const Json a = read_json_file(path);
    const std::vector<BoundCheck> checks = a.contains("checks") ? checks_from_json(a["checks"]) : std::vector<BoundCheck>{};
    const bool pass = a.value("all_pass", all_pass(checks));
    any_fail = any_fail || !pass;
    artifacts.push_back(Json{{"path", path},
                             {"kind", a.value("kind", "")},
                             {"config_hash", a.value("config_hash", "")},
                             {"version", a.value("version", "")},
                             {"all_pass", pass},
                             {"failed", failed_names(checks)}});
  }
  const std::string out = output_path(in, "report.json");
  const Json cfg = hashable(eff);
  CommandResult res;
  res.files = {out};
  write_text_file(out, envelope("report", cfg, Json{{"artifacts", artifacts}, {"all_pass", !any_fail}}).dump(1) + "\n");
  if (gnuplot && !gp.str().empty()) {
    const std::string script = std::filesystem::path(out).replace_extension(".gp").string();
    write_text_file(script, "set datafile separator ','\nset datafile commentschars '#'\n# config_hash " +
                                config_hash(cfg) + " version " + version_string() + "\n" + gp.str());
    res.files.push_back(script);
  }
  res.exit_code = any_fail ? 1 : 0;
  res.summary = Json{{"artifacts", artifacts.size()}, {"all_pass", !any_fail}};
  return res;
}

using Handler = CommandResult (*)(const Json&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table{
      {"diagonalize", cmd_diagonalize}, {"hamiltonian", cmd_hamiltonian}, {"kam", cmd_kam},
      {"measure", cmd_measure},         {"evolve", cmd_evolve},           {"check-bounds", cmd_check_bounds},
      {"report", cmd_report}};
  return table;
}

std::string command_of(const Json& config) {
  if (!config.is_object() || !config.contains("command") || !config["command"].is_string()) {
    fail(Error::Code::invalid_argument, "command: missing");
  }
  const std::string cmd = config["command"].get<std::string>();
  if (!handlers().count(cmd)) fail(Error::Code::invalid_argument, "command: unknown subcommand '" + cmd + "'");
  return cmd;
}

}  // namespace

std::vector<std::string> command_names() {
  return {"diagonalize", "hamiltonian", "kam", "measure", "evolve", "check-bounds", "report"};
}

std::string usage_text() {
  return "usage: kamstark <command> [options]\n"
         "commands:\n"
         "  diagonalize   linear KAM diagonalization of the Stark lattice (writes result.json)\n"
         "  hamiltonian   quartic Hamiltonian in the diagonal frame (writes ham.json)\n"
         "  kam           nonlinear KAM steps on tangential sites (writes kamlog.json)\n"
         "  measure       Monte Carlo rejected-parameter fraction (writes measure.csv)\n"
         "  evolve        direct integration of the lattice equation (writes traj.csv)\n"
         "  check-bounds  linear bound verdicts over many seeds (writes check_bounds.json)\n"
         "  report        collect verdicts and plot scripts from artifacts (writes report.json)\n"
         "exit status: 0 all bounds hold, 1 a bound failed, 2 usage error, 3 runtime failure\n"
         "default output directory: $" +
         std::string(kOutDirEnv) + "\n";
}

CommandResult run_command(const Json& config) {
  const std::string cmd = command_of(config);
  CommandResult res = handlers().at(cmd)(config);
  res.summary["command"] = cmd;
  res.summary["exit_code"] = res.exit_code;
  res.summary["files"] = res.files;
  res.summary["version"] = version_string();
  return res;
}

}  // namespace kamstark
