#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "kamstark/nonlinear_kam.hpp"

namespace kamstark {

// exprk4: integrating-factor RK4 with the linear part propagated exactly in its eigenbasis.
enum class Scheme { splitstep, rk4, exprk4 };
Scheme parse_scheme(std::string_view text);
std::string scheme_name(Scheme s);

struct LatticeState {
  SiteWindow window;
  std::vector<cplx> u;  // indexed by window.index(n)
  double t = 0.0;

  static LatticeState localized(SiteWindow w, int site);
};

struct EvolutionOptions {
  double T = 1000.0;
  double dt = 1e-3;
  Scheme scheme = Scheme::splitstep;
  double stride = 1.0;    // observation spacing
  double d = 2.0;         // weight exponent of the moment
  double field = 1.0;     // coefficient of the linear potential n u_n
  bool disorder = true;   // include v_n
  int edge_sites = 4;
  double edge_tol = 1e-10;
  double mass_tol = 1e-6;
};

struct Observation {
  double t = 0.0;
  double mass = 0.0;
  double energy = 0.0;
  double moment = 0.0;     // sum <n>^{2d} |u_n|^2
  double edge_mass = 0.0;  // mass on the outer edge_sites at each end
};

struct Trajectory {
  std::vector<Observation> samples;
  LatticeState final;
  double mass_drift = 0.0;    // max relative deviation
  double energy_drift = 0.0;  // max relative deviation
  bool edge_contaminated = false;
};

// Called at every observation time with the current amplitudes.
using Observer = std::function<void(double t, const std::vector<cplx>& u)>;

// i u_n' + delta (u_{n+1} + u_{n-1}) + (field n + v_n) u_n + eps |u_n|^2 u_n = 0 on the window.
Trajectory integrate(const LatticeModel& model, double eps, const LatticeState& u0, const EvolutionOptions& opt,
                     const Observer& observer = {});

// H = sum (field n + v_n)|u|^2 + delta sum (conj(u_n) u_{n+1} + c.c.) + (eps/2) sum |u|^4
double lattice_energy(const LatticeModel& model, double eps, const std::vector<cplx>& u, double field = 1.0,
                      bool disorder = true);
double weighted_moment(const SiteWindow& w, const std::vector<cplx>& u, double d);
double lattice_mass(const std::vector<cplx>& u);

struct LocalizationVerdict {
  double max_ratio = 0.0;  // max_t M_d(t) / M_d(0) over the horizon
  double factor = 4.0;
  bool bounded = false;
};
LocalizationVerdict verify_localization(const Trajectory& traj, double factor = 4.0);

// RK4 in the diagonal frame with the Hamiltonian vector field.
std::vector<cplx> integrate_q_frame(const NonlinearHamiltonian& h, std::vector<cplx> q0, double T, double dt);

struct TorusRun {
  Trajectory trajectory;
  double defect = 0.0;          // max_t sum <n>^d |u_n - u_sampler_n|
  double defect_time = 0.0;
  std::vector<double> defect_times;
  std::vector<double> defect_values;
  std::vector<double> recovered;  // fitted phase velocities of the tangential modes
  std::vector<double> linear;     // linear eigenvalues at the tangential sites
  double max_shift = 0.0;         // max_j |recovered_j - linear_j|
};

// Integrates from the sampler's state at t = 0, compares against the sampler at `defect_points`
// evenly spaced times, and fits the phase velocity of each tangential mode.
TorusRun run_torus(const LatticeModel& model, double eps, const TorusSampler& sampler,
                   const std::vector<double>& linear_frequencies, const EvolutionOptions& opt,
                   int defect_points = 100);

}  // namespace kamstark
