#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kamstark/weighted_ops.hpp"

namespace kamstark {

// Disordered Stark lattice L = D + delta*Delta + V on a finite window.
struct LatticeModel {
  SiteWindow window;
  double delta = 1.0 / 60.0;
  std::uint64_t seed = 0;
  double amplitude = 0.1;
  std::vector<double> disorder;  // v_n, indexed by window.index(n)

  // v_n depends only on (seed, n), so overlapping windows share a realization.
  static LatticeModel sample(SiteWindow w, double delta, std::uint64_t seed, double amplitude = 0.1);
  static double site_disorder(std::uint64_t seed, int n, double amplitude = 0.1);

  double v(int n) const { return disorder.at(static_cast<std::size_t>(window.index(n))); }
};

struct KamConstants {
  double delta = 0.0;
  double r = 0.125;
  double alpha = 0.1;
  double hopping_norm = 0.0;  // ||Delta||_r = 2 e^r
  double c_delta = 0.0;       // 4 delta e^r exp(4 delta e^r)
  double eps0 = 0.0;          // 2 C alpha
  double u_bound = 0.0;       // 2 delta e^r exp(2 delta e^r)

  static KamConstants for_delta(double delta, double r = 0.125, double alpha = 0.1);
  // Scheduled bound eps0^{(5/4)^k}.
  double step_bound(int k) const;
};

struct BoundCheck {
  std::string name;
  int step = -1;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = true;
  std::string detail;
};

bool all_pass(const std::vector<BoundCheck>& checks);

// Antisymmetric nearest-neighbour generator: W_{m,m+1} = -1, W_{m+1,m} = +1.
LatticeOperator hopping_generator(SiteWindow w, int nparams);
// Nearest-neighbour hopping Delta.
LatticeOperator hopping_operator(SiteWindow w, int nparams);
// Diagonal disorder V with unit gradients on the active sites.
LatticeOperator disorder_operator(const LatticeModel& model, const std::vector<int>& active);

struct FirstConjugation {
  LatticeOperator u;          // e^{-delta W}
  LatticeOperator remainder;  // sum_{n>=1} ad^n_{delta W}(V)/n!
  double tail_bound = 0.0;
};

FirstConjugation first_conjugation(const LatticeModel& model, const std::vector<int>& active,
                                   const SeriesOptions& opt);

struct KamStepResult {
  LatticeOperator generator;        // W with [W, D] = diag P - P
  std::vector<DualScalar> offsets;  // new f_n = d_n - n
  LatticeOperator remainder;        // P_+
  double tail_bound = 0.0;
};

// One linear KAM step on D + P, with D = diag(n + f_n).
KamStepResult kam_step(const std::vector<DualScalar>& offsets, const LatticeOperator& p, const SeriesOptions& opt);

// Solves [W, D] = diag P - P entrywise with quotient-rule gradients.
LatticeOperator solve_linear_homological(const std::vector<DualScalar>& offsets, const LatticeOperator& p);

struct DiagonalizeOptions {
  double target = 1e-12;
  int max_steps = 9;
  int forced_steps = -1;      // exactly this many steps when >= 0
  std::vector<int> active;    // empty: every window site
  double prune_tol = 1e-20;
  double series_tol = 1e-20;
  int edge_margin = -1;       // -1: window size / 4
  bool strict = false;        // throw on the first violated bound
  bool track_transform = true;
};

struct DiagonalizationResult {
  LatticeModel model;
  KamConstants constants;
  std::vector<int> active;
  SiteWindow interior;
  std::vector<DualScalar> offsets;  // f_n, eigenvalue d_n = n + f_n
  LatticeOperator transform;        // G with G^T L G = diag(d)
  LatticeOperator first_u;
  std::vector<double> step_norms;   // ||P^k||^alpha_r for k = 0..steps
  int steps = 0;
  double truncation_mass = 0.0;
  double tail_mass = 0.0;
  std::vector<BoundCheck> checks;

  DualScalar eigenvalue(int n) const;
  bool all_pass() const { return kamstark::all_pass(checks); }
  int param_index(int site) const;  // -1 if site is not active
};

DiagonalizationResult diagonalize(const LatticeModel& model, const DiagonalizeOptions& opt = {});

// Re-evaluates the transform-level bounds on an existing result.
std::vector<BoundCheck> check_transform_bounds(const DiagonalizationResult& res);

}  // namespace kamstark
