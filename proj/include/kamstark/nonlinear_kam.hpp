#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kamstark/hamiltonian_build.hpp"
#include "kamstark/tf_series.hpp"

namespace kamstark {

// N = e + <omega, I> + sum_n Omega_n q_n qbar_n
struct NormalForm {
  std::vector<int> tangential;
  std::vector<double> actions;
  int nparams = 0;
  Coef energy;
  std::vector<Coef> omega;
  std::map<int, Coef> normal;  // Omega_n keyed by site

  int nangles() const { return static_cast<int>(tangential.size()); }
  TFSeries as_series() const;
  NormalForm& operator+=(const NormalForm& correction);
};

struct ActionAngleOptions {
  std::vector<int> tangential{-1, 0};
  std::vector<double> actions;  // y_j; empty means 1 for every tangential site
  int action_order = 2;         // Taylor order of sqrt(I + y) in I
};

struct ActionAngleHamiltonian {
  NormalForm normal;
  TFSeries perturbation;  // quartic part in (theta, I, q, qbar)
  double eps = 0.0;
  std::vector<BoundCheck> checks;
};

// Substitutes q_j = sqrt(I_j + y_j) e^{i theta_j} on the tangential sites.
ActionAngleHamiltonian action_angle_hamiltonian(const NonlinearHamiltonian& h, const ActionAngleOptions& opt);

TFSeries low_part(const TFSeries& f);   // weight <= 2
TFSeries high_part(const TFSeries& f);  // weight >= 3

// Coefficient decay per class: |c| <= eps^{1/2} e^{-n*/8} for terms touching >= 1 tangential site,
// eps^{1/2} e^{-(n+ - n-)/8} for purely normal terms.
std::vector<BoundCheck> check_decay_classes(const ActionAngleHamiltonian& aa, double eps);

struct ScheduleLevel {
  int nu = 0;
  double eps = 0.0;
  double gamma = 0.0;
  double k = 0.0;
  double s = 0.0;
  double r = 0.0;
  double rho = 0.0;
};

struct Schedule {
  double eps0 = 0.0;
  double c = 1.0;
  int b = 1;
  double tau = 2.0;
  double d = 2.0;
  std::vector<ScheduleLevel> levels;

  static Schedule make(double eps0, int b, int nlevels, double s0 = 0.5, double r0 = 0.5, double rho0 = 0.125,
                       double c = 1.0, double d = 2.0);
  SeriesDomain domain(int nu) const;
};

// Largest |k| needed so that sum_{|k| > kcut} |k|^{-(tau+1)} < 0.01.
int fourier_cutoff(int b, double tau);

struct HomologicalOptions {
  double gamma = 1.0;
  double tau = 2.0;
  double k_plus = 8.0;
  bool enforce_resonance = true;
  BracketOptions caps;
};

struct DivisorRecord {
  MultiIndex key;
  double divisor = 0.0;
  double threshold = 0.0;
};

struct HomologicalSolution {
  TFSeries generator;
  NormalForm correction;  // N-hat, zero-based
  TFSeries routed;        // P-hat: modes beyond K+
  TFSeries residual;
  double residual_norm = 0.0;
  double zero_average_max = 0.0;
  double min_divisor_ratio = 0.0;
  DivisorRecord worst;
  std::vector<DivisorRecord> resonances;  // only filled when not enforcing
  std::size_t solved_terms = 0;
};

HomologicalSolution solve_homological(const NormalForm& n, const TFSeries& p, const HomologicalOptions& opt,
                                      const SeriesDomain& dom);

struct StepOptions {
  BracketOptions caps;
  int lie_order_max = 8;
  double lie_tol = 1e-18;     // stop once an order is this small relative to the first
  double lie_prune = 1e-3;    // high-part terms below lie_prune * eps_{nu+1} are dropped
  double contraction_constant = 1.0;
  double k_plus_override = -1.0;
  bool enforce_resonance = true;
};

struct NonlinearStep {
  int nu = 0;
  NormalForm normal;        // N_+
  TFSeries perturbation;    // P_+
  HomologicalSolution homological;
  double x_low = 0.0;       // ||X_{P low}|| on the current domain
  double x_low_next = 0.0;  // ||X_{P_+ low}|| on the next domain
  double x_high_next = 0.0;
  double omega_drift = 0.0;
  double normal_drift_ratio = 0.0;  // max_n |Omega-hat_n| / (eps^{5/6} e^{-rho|n|})
  int lie_order = 0;
  double overflow_mass = 0.0;
  double pruned_mass = 0.0;
  std::vector<BoundCheck> checks;
};

NonlinearStep kam_nonlinear_step(const NormalForm& n, const TFSeries& p, const Schedule& schedule, int nu,
                                 const StepOptions& opt);

struct KamRunOptions {
  ActionAngleOptions action_angle;
  int steps = 2;
  double s0 = 0.5;
  double r0 = 0.5;
  double rho0 = 0.125;
  StepOptions step;
};

struct KamRun {
  ActionAngleHamiltonian initial;
  Schedule schedule;
  std::vector<NonlinearStep> steps;  // empty when eps = 0
  std::vector<BoundCheck> checks;  // aggregate of every stage
  bool all_pass() const { return kamstark::all_pass(checks); }
};

// Requires |n_j| <= |ln eps| / 6 for every tangential site.
KamRun run_nonlinear_kam(const NonlinearHamiltonian& h, const KamRunOptions& opt);

// Quasi-periodic state on the final torus (I = 0, q = 0) carried back through the time-1 flows of the
// stored generators, then to the lattice frame by u = G q.
class TorusSampler {
public:
  TorusSampler(const KamRun& run, const NonlinearHamiltonian& h, const DiagonalizationResult& lin,
               std::vector<double> theta0 = {}, int flow_substeps = 4);

  SeriesPoint coordinates(double t) const;     // action-angle frame of the initial Hamiltonian
  std::vector<cplx> q_frame(double t) const;   // indexed by sites().index(n)
  std::vector<cplx> physical(double t) const;  // indexed by window().index(n)

  const std::vector<double>& frequencies() const noexcept { return omega_; }
  const std::vector<int>& tangential() const noexcept { return tangential_; }
  const SiteWindow& sites() const noexcept { return sites_; }
  const SiteWindow& window() const noexcept { return window_; }
  // Column of G for a Hamiltonian site, over the lattice window.
  const std::vector<double>& mode(int site) const { return columns_.at(static_cast<std::size_t>(sites_.index(site))); }

  struct Flow;  // compiled vector field of one generator

private:
  void apply_flow(const Flow& flow, std::vector<cplx>& state) const;

  std::vector<int> tangential_;
  std::vector<double> actions_;
  std::vector<double> theta0_;
  std::vector<double> omega_;
  SiteWindow sites_;
  SiteWindow window_;
  std::vector<int> normal_;                 // normal sites in state order
  std::vector<std::vector<double>> columns_;
  std::vector<std::shared_ptr<const Flow>> flows_;  // outermost first
  int substeps_ = 4;
};

}  // namespace kamstark
