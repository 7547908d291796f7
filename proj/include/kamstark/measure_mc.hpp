#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kamstark/linear_kam.hpp"

namespace kamstark {

// Frequencies entering the small-divisor conditions at one sampled parameter point.
struct NormalFrequencies {
  std::vector<int> tangential;
  std::vector<double> omega;
  SiteWindow sites;           // lattice window; normal sites are the non-tangential ones
  std::vector<double> normal; // indexed by sites.index(n); tangential entries unused

  bool is_normal(int n) const;
  double frequency(int n) const { return normal[static_cast<std::size_t>(sites.index(n))]; }
};

struct ResonanceThresholds {
  double gamma = 0.1;
  double tau = 2.0;
  double k_plus = 8.0;
  int k_cut = 10;
};

enum class ResonanceClass { R0, R1, R2, R3 };
std::string class_name(ResonanceClass c);

struct Violation {
  int level = 0;
  ResonanceClass cls = ResonanceClass::R0;
  std::vector<int> k;
  int m = 0;  // R1: the sign in front of Omega_n; R0: unused
  int n = 0;
  double divisor = 0.0;
  double threshold = 0.0;
};

struct ResonanceReport {
  std::vector<double> xi;
  bool accepted = true;
  std::vector<Violation> violations;
};

// All k with 0 < |k|_1 <= kcut in Z^b, in a fixed order, with |k|_1^tau.
struct ModeSet {
  std::vector<std::vector<int>> k;
  std::vector<int> l1;
  std::vector<double> weight;
};
ModeSet enumerate_modes(int b, int kcut, double tau);

// Exhaustive check of the four families:
//   R0 |<k,w>| < g/|k|^t, R1 |<k,w> +- W_n| < g/(|k|^t K), R2 |<k,w> + W_m + W_n| < g/(|k|^t K^2),
//   R3 |<k,w> + W_m - W_n| < g/(|k|^t K^2) with m != n.
ResonanceReport resonance_check(const NormalFrequencies& f, const ResonanceThresholds& th, int level,
                                bool first_only = false);

// Resonance scan that precomputes sorted pair sums/differences over sites whose frequency does not
// depend on the sample, and checks the remaining (zone) sites directly.
class ResonanceScanner {
public:
  ResonanceScanner(const NormalFrequencies& base, std::vector<int> zone, ModeSet modes);
  // Only gamma and k_plus of `th` are read; the modes are fixed at construction.
  std::optional<Violation> first_violation(const NormalFrequencies& f, const ResonanceThresholds& th, int level) const;

private:
  struct PairTable {
    int cmin = 0;
    std::vector<std::vector<double>> values;  // by c - cmin, sorted
    const std::vector<double>* at(int c) const;
  };
  static bool near_pair(const PairTable& t, int c, double target, double thr);
  std::pair<int, int> locate_pair(const NormalFrequencies& f, bool sum, int c, double x, double thr) const;

  ModeSet modes_;
  SiteWindow sites_;
  std::vector<int> zone_;
  std::vector<char> in_zone_;
  PairTable sums_;   // W_m + W_n - (m + n), m <= n fixed
  PairTable diffs_;  // W_m - W_n - (m - n), m != n fixed
};

// Linear frequencies near the tangential sites for a given xi, plus first-order nonlinear shifts.
struct FrequencySample {
  NormalFrequencies linear;
  std::vector<double> omega_shift;   // per unit eps
  std::map<int, double> zone_shift;  // per unit eps
  std::vector<double> omega_jacobian;       // b x b, d omega_j / d xi_i at row j
  std::vector<double> normal_jacobian_max;  // per i: max_n |d Omega_n / d xi_i|
  NormalFrequencies at_eps(double eps) const;
};

class FrequencyProvider {
public:
  FrequencyProvider(const LatticeModel& model, std::vector<int> tangential, std::vector<double> actions,
                    int local_radius = 24, int zone_radius = 8);
  FrequencySample evaluate(const std::vector<double>& xi) const;
  const NormalFrequencies& base() const { return base_; }
  const std::vector<int>& zone() const { return zone_; }

private:
  LatticeModel model_;
  std::vector<int> tangential_;
  std::vector<double> actions_;
  SiteWindow local_;
  std::vector<int> zone_;
  NormalFrequencies base_;
};

struct MeasureConfig {
  SiteWindow window{-32, 32};
  double delta = 1.0 / 60.0;
  std::uint64_t seed = 1;          // lattice realization
  std::uint64_t sample_seed = 7;   // parameter draws
  std::vector<int> tangential{-1, 1};
  std::vector<double> actions;     // empty: 1 per site
  std::vector<double> eps_list{1e-6, 1e-8, 1e-10, 1e-12};
  int samples = 20000;
  int levels = 2;
  double xi_half_width = 0.1;
  double gamma_override = -1.0;
  double k_plus_override = -1.0;
  double tau = -1.0;               // default b + 1
  int k_cut = -1;                  // default from the tail criterion
  int local_radius = 24;
  int zone_radius = 8;
  bool nonlinear_shift = true;
  double slope_lo = 1.0 / 32.0;
  double slope_hi = 1.0 / 8.0;
};

struct MeasureRow {
  double eps = 0.0;
  double gamma0 = 0.0;
  long samples = 0;
  long rejected = 0;
  double fraction = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::vector<long> rejected_by_level;  // first violating level
  std::array<long, 4> rejected_by_class{};
  bool saturated = false;
};

struct MeasureResult {
  int k_cut = 0;
  double tau = 0.0;
  std::vector<MeasureRow> rows;
  double slope = 0.0;
  int slope_points = 0;
  double twist_min = 0.0;  // min over samples and modes of |d_xi divisor| / |k|_1
  std::vector<BoundCheck> checks;
};

// Wilson score interval at 95%.
std::pair<double, double> wilson_interval(long hits, long n);

// Draw i of the parameter sequence: uniform in [-h, h]^b.
std::vector<double> sample_parameters(std::uint64_t seed, long index, int b, double half_width);

MeasureResult measure_sweep(const MeasureConfig& cfg);

// Exact rejected fraction for one tangential site with delta = 0 and level-0 frequencies
// omega = j + xi, Omega_n = n + v_n: union of the resonant xi-intervals over every family.
double affine_rejected_fraction(const LatticeModel& model, int site, const ResonanceThresholds& th,
                                double half_width = 0.1);

}  // namespace kamstark
