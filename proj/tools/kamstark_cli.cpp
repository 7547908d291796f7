#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kamstark/kamstark.h"

namespace {

using Json = nlohmann::json;

struct ValueOption {
  const char* flag;
  const char* key;
  const char* help;
};

struct SwitchOption {
  const char* flag;
  const char* key;
  bool value;  // stored when the switch is present
  const char* help;
};

struct CommandSpec {
  const char* name;
  const char* help;
  std::vector<ValueOption> values;
  std::vector<SwitchOption> switches;
};

const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> specs{
      {"diagonalize",
       "linear KAM diagonalization",
       {{"--window", "window", "site window lo:hi (default -64:64)"},
        {"--delta", "delta", "hopping strength (default 1/60)"},
        {"--seed", "seed", "disorder seed (default 1)"},
        {"--amplitude", "amplitude", "disorder half-width (default 0.1)"},
        {"--target", "target", "stopping norm (default 1e-12)"},
        {"--max-steps", "max_steps", "step limit (default 9)"},
        {"--active", "active", "comma list of sites carrying derivatives (default all)"}},
       {}},
      {"hamiltonian",
       "quartic Hamiltonian in the diagonal frame",
       {{"--from", "from", "diagonalize artifact (result.json)"},
        {"--eps", "eps", "nonlinearity (default 1e-4)"},
        {"--sites", "sites", "comma list of parameter sites (default -1,0)"},
        {"--tensor-window", "tensor_window", "tensor index range lo:hi (default interior)"},
        {"--prune-tol", "prune_tol", "tensor pruning threshold (default 1e-14)"}},
       {}},
      {"kam",
       "nonlinear KAM steps",
       {{"--ham", "ham", "hamiltonian artifact (ham.json)"},
        {"--sites", "sites", "tangential sites (default: the hamiltonian's)"},
        {"--eps", "eps", "nonlinearity (default: the hamiltonian's)"},
        {"--steps", "steps", "KAM steps 0..3 (default 2)"},
        {"--xi", "xi", "'auto' or one disorder value per tangential site"},
        {"--actions", "actions", "comma list of actions (default 1 each)"},
        {"--lie-prune", "lie_prune", "high-part pruning factor (default 1e-3)"},
        {"--k-plus", "k_plus", "Fourier cutoff override"},
        {"--contraction-constant", "contraction_constant", "schedule constant c (default 1)"}},
       {{"--no-enforce-resonance", "enforce_resonance", false, "record small divisors instead of failing"}}},
      {"measure",
       "Monte Carlo rejected-parameter fraction",
       {{"--window", "window", "site window (default -32:32)"},
        {"--delta", "delta", "hopping strength (default 1/60)"},
        {"--seed", "seed", "disorder seed (default 1)"},
        {"--sample-seed", "sample_seed", "parameter draw seed (default 7)"},
        {"--sites", "sites", "tangential sites (default -1,1)"},
        {"--actions", "actions", "comma list of actions"},
        {"--eps", "eps", "comma list of eps (default 1e-6,1e-8,1e-10,1e-12)"},
        {"--samples", "samples", "samples per eps (default 20000, at least 1000)"},
        {"--levels", "levels", "schedule levels 1..2 (default 2)"},
        {"--xi-half-width", "xi_half_width", "parameter box half-width (default 0.1)"},
        {"--k-cut", "k_cut", "Fourier cutoff (default from the tail criterion)"},
        {"--tau", "tau", "Diophantine exponent (default b+1)"}},
       {{"--no-nonlinear-shift", "nonlinear_shift", false, "use linear frequencies at every level"}}},
      {"evolve",
       "direct integration of the lattice equation",
       {{"--model", "model", "artifact holding a model section"},
        {"--window", "window", "site window when no model is given (default -32:32)"},
        {"--delta", "delta", "hopping strength (default 1/60)"},
        {"--seed", "seed", "disorder seed (default 1)"},
        {"--eps", "eps", "nonlinearity (default 1e-6 or the torus eps)"},
        {"--init", "init", "site:N, eigen:N or torus:kamlog.json (default site:0)"},
        {"--T", "T", "horizon (default 1000)"},
        {"--dt", "dt", "time step (default 1e-3)"},
        {"--scheme", "scheme", "splitstep, rk4 or exprk4 (default splitstep)"},
        {"--stride", "stride", "observation spacing (default 1)"},
        {"--d", "d", "moment weight exponent (default 2)"},
        {"--factor", "factor", "allowed growth of M_d (default 4)"},
        {"--mass-tol", "mass_tol", "allowed relative mass drift (default 1e-6)"},
        {"--defect-points", "defect_points", "defect samples for torus runs (default 100)"}},
       {{"--no-stark", "stark", false, "remove the linear potential"},
        {"--no-disorder", "disorder", false, "remove the random potential"}}},
      {"check-bounds",
       "linear bound verdicts over many seeds",
       {{"--window", "window", "site window (default -64:64)"},
        {"--delta", "delta", "hopping strength (default 1/60)"},
        {"--seeds", "seeds", "number of seeds (default 20)"},
        {"--seed-start", "seed_start", "first seed (default 1)"},
        {"--target", "target", "stopping norm (default 1e-12)"},
        {"--max-steps", "max_steps", "step limit (default 9)"}},
       {}},
      {"report",
       "collect verdicts and plot scripts",
       {{"--inputs", "inputs", "comma list of artifact paths"}},
       {{"--no-gnuplot", "gnuplot", false, "skip the plot script"}}},
  };
  return specs;
}

int exit_for(ks_status s) {
  switch (s) {
    case KS_OK: return 0;
    case KS_ERR_USAGE:
    case KS_ERR_INVALID:
    case KS_ERR_IO: return 2;
    default: return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stark lattice KAM toolkit"};
  app.set_version_flag("--version", std::string(ks_version()));
  app.require_subcommand(0, 1);
  std::string config_file;
  app.add_option("--config", config_file, "JSON file with configuration fields (flags override it)");

  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::map<CLI::App*, const CommandSpec*> by_app;
  std::string out;
  for (const auto& spec : commands()) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    by_app[sub] = &spec;
    sub->add_option("--config", config_file, "JSON file with configuration fields (flags override it)");
    sub->add_option("--out", out, "output path (default in $KAMSTARK_OUT_DIR or the working directory)");
    for (const auto& v : spec.values) sub->add_option(v.flag, values[std::string(spec.name) + "/" + v.key], v.help);
    for (const auto& s : spec.switches) sub->add_flag(s.flag, switches[std::string(spec.name) + "/" + s.key], s.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "kamstark: " << e.what() << "\n" << ks_usage();
    return 2;
  }

  const auto chosen = app.get_subcommands();
  if (chosen.empty()) {
    std::cerr << ks_usage();
    return 2;
  }
  CLI::App* sub = chosen.front();
  const CommandSpec& spec = *by_app.at(sub);

  Json config = Json::object();
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) {
      std::cerr << "kamstark: config: cannot open '" << config_file << "'\n";
      return 2;
    }
    try {
      config = Json::parse(in);
    } catch (const Json::exception& e) {
      std::cerr << "kamstark: config: " << e.what() << "\n";
      return 2;
    }
    if (!config.is_object()) {
      std::cerr << "kamstark: config: expected a JSON object\n";
      return 2;
    }
  }
  config["command"] = spec.name;
  if (sub->count("--out") > 0) config["out"] = out;
  for (const auto& v : spec.values) {
    if (sub->count(v.flag) > 0) config[v.key] = values[std::string(spec.name) + "/" + v.key];
  }
  for (const auto& s : spec.switches) {
    if (sub->count(s.flag) > 0) config[s.key] = s.value;
  }

  ks_result* result = nullptr;
  const ks_status st = ks_run(config.dump().c_str(), &result);
  if (st != KS_OK) {
    std::cerr << "kamstark: " << ks_status_name(st) << ": " << ks_last_error() << "\n";
    return exit_for(st);
  }
  const std::unique_ptr<ks_result, decltype(&ks_result_destroy)> guard(result, ks_result_destroy);
  std::cout << ks_result_summary(result) << "\n";
  return ks_result_exit_code(result);
}
