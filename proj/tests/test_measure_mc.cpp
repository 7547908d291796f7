#include <doctest.h>

#include <cmath>
#include <random>

#include "kamstark/measure_mc.hpp"

using namespace kamstark;

namespace {

NormalFrequencies stark_frequencies(const LatticeModel& m, std::vector<int> tangential, std::vector<double> omega) {
  NormalFrequencies f;
  f.tangential = std::move(tangential);
  f.omega = std::move(omega);
  f.sites = m.window;
  for (int n = m.window.lo(); n <= m.window.hi(); ++n) f.normal.push_back(n + m.v(n));
  return f;
}

}  // namespace

TEST_CASE("Wilson interval matches the score formula") {
  const double z = 1.959963984540054;
  for (auto [hits, n] : {std::pair<long, long>{0, 100}, {37, 1000}, {500, 1000}, {1000, 1000}}) {
    const double p = static_cast<double>(hits) / n;
    const double den = 1.0 + z * z / n;
    const double centre = (p + z * z / (2.0 * n)) / den;
    const double half = z / den * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n));
    const auto [lo, hi] = wilson_interval(hits, n);
    CHECK(lo == doctest::Approx(centre - half).epsilon(1e-12));
    CHECK(hi == doctest::Approx(centre + half).epsilon(1e-12));
    CHECK(lo <= p);
    CHECK(hi >= p);
  }
  CHECK(wilson_interval(0, 100).first == doctest::Approx(0.0));
}

TEST_CASE("parameter draws are indexed, bounded and reproducible") {
  const auto a = sample_parameters(7, 123, 2, 0.1);
  CHECK(a == sample_parameters(7, 123, 2, 0.1));
  CHECK(a != sample_parameters(7, 124, 2, 0.1));
  CHECK(a != sample_parameters(8, 123, 2, 0.1));
  double mean = 0.0;
  for (long i = 0; i < 20000; ++i) {
    for (double x : sample_parameters(3, i, 2, 0.1)) {
      CHECK(std::abs(x) <= 0.1);
      mean += x;
    }
  }
  CHECK(std::abs(mean / 40000.0) <= 3.0 * 0.1 / std::sqrt(3.0 * 40000.0));
}

TEST_CASE("mode enumeration counts the l1 ball") {
  for (int kcut : {1, 3, 6}) {
    CHECK(enumerate_modes(1, kcut, 2.0).k.size() == static_cast<std::size_t>(2 * kcut));
    CHECK(enumerate_modes(2, kcut, 3.0).k.size() == static_cast<std::size_t>(2 * kcut * (kcut + 1)));
  }
  const ModeSet m = enumerate_modes(2, 4, 3.0);
  for (std::size_t i = 0; i < m.k.size(); ++i) {
    CHECK(m.l1[i] == std::abs(m.k[i][0]) + std::abs(m.k[i][1]));
    CHECK(m.weight[i] == doctest::Approx(std::pow(m.l1[i], 3.0)));
  }
}

TEST_CASE("planted resonances are found in the right family") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-8, 8), 0.0, 1);
  ResonanceThresholds th;
  th.gamma = 1e-3;
  th.k_cut = 4;

  // <k, omega> = 0 for k = (1, 1)
  NormalFrequencies r0 = stark_frequencies(m, {-1, 1}, {-1.3, 1.3});
  ResonanceReport rep = resonance_check(r0, th, 0);
  CHECK_FALSE(rep.accepted);
  bool found = false;
  for (const auto& v : rep.violations)
    found = found || (v.cls == ResonanceClass::R0 && std::abs(v.k[0]) == 1 && v.k[0] == v.k[1] && v.divisor < 1e-12);
  CHECK(found);

  // 2 omega = Omega_5
  NormalFrequencies r1 = stark_frequencies(m, {0}, {0.0});
  r1.omega[0] = 0.5 * r1.frequency(5);
  rep = resonance_check(r1, th, 0);
  found = false;
  for (const auto& v : rep.violations) found = found || (v.cls == ResonanceClass::R1 && v.n == 5 && std::abs(v.k[0]) == 2);
  CHECK(found);
  CHECK(class_name(ResonanceClass::R3) == "R3");

  // shrinking gamma accepts a generic point
  NormalFrequencies generic = stark_frequencies(m, {0}, {0.0371});
  th.gamma = 1e-9;
  CHECK(resonance_check(generic, th, 0).accepted);
}

TEST_CASE("pair-table scanner agrees with the exhaustive check") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-20, 20), 0.0, 2);
  const std::vector<int> tangential{-1, 1};
  const NormalFrequencies base = stark_frequencies(m, tangential, {-1.0, 1.0});
  std::vector<int> zone;
  for (int n = -4; n <= 4; ++n)
    if (n != -1 && n != 1) zone.push_back(n);
  ResonanceThresholds th;
  th.tau = 3.0;
  th.k_cut = 6;
  const ResonanceScanner scanner(base, zone, enumerate_modes(2, th.k_cut, th.tau));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  int agree = 0, rejected = 0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    NormalFrequencies f = base;
    f.omega = {-1.0 + u(rng), 1.0 + u(rng)};
    for (int n : zone) f.normal[static_cast<std::size_t>(f.sites.index(n))] += 0.01 * u(rng);
    th.gamma = t % 2 == 0 ? 0.02 : 0.002;
    th.k_plus = 4.0;
    const bool exhaustive = resonance_check(f, th, 0, true).accepted;
    const bool scanned = !scanner.first_violation(f, th, 0).has_value();
    agree += exhaustive == scanned;
    rejected += !exhaustive;
  }
  CHECK(agree == trials);
  CHECK(rejected > 20);
  CHECK(rejected < trials - 20);
}

TEST_CASE("Monte Carlo rejection matches the exact interval union") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-10, 10), 0.0, 3);
  ResonanceThresholds th;
  th.gamma = 0.01;
  th.tau = 2.0;
  th.k_plus = 4.0;
  th.k_cut = 8;
  const double exact = affine_rejected_fraction(m, 0, th);
  CHECK(exact > 0.05);
  CHECK(exact < 0.95);
  const long n = 20000;
  long hits = 0;
  NormalFrequencies f = stark_frequencies(m, {0}, {0.0});
  for (long i = 0; i < n; ++i) {
    f.omega[0] = 0.0 + sample_parameters(11, i, 1, 0.1)[0];
    hits += !resonance_check(f, th, 0, true).accepted;
  }
  const double p = static_cast<double>(hits) / n;
  CHECK(std::abs(p - exact) <= 3.0 * std::sqrt(exact * (1.0 - exact) / n));
}

TEST_CASE("frequency provider: linear values and first-order shifts") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 1);
  const FrequencyProvider p(m, {-1, 1}, {});
  const FrequencySample at0 = p.evaluate({m.v(-1), m.v(1)});
  // xi equal to the realized disorder reproduces the base realization
  CHECK(at0.linear.omega[0] == doctest::Approx(p.base().omega[0]).epsilon(1e-12));
  const FrequencySample sh = p.evaluate({m.v(-1) + 0.01, m.v(1)});
  CHECK(sh.linear.omega[0] - at0.linear.omega[0] == doctest::Approx(0.01 * at0.omega_jacobian[0]).epsilon(1e-3));
  CHECK(std::abs(at0.omega_jacobian[0] - 1.0) < 0.2);
  const NormalFrequencies shifted = at0.at_eps(1e-6);
  CHECK(shifted.omega[0] - at0.linear.omega[0] == doctest::Approx(1e-6 * at0.omega_shift[0]).epsilon(1e-6));
}

TEST_CASE("sweep is deterministic and its interval narrows like 1/sqrt(N)") {
  MeasureConfig cfg;
  cfg.window = SiteWindow(-24, 24);
  cfg.eps_list = {1e-4};
  cfg.samples = 1000;
  cfg.levels = 1;
  const MeasureResult a = measure_sweep(cfg);
  const MeasureResult b = measure_sweep(cfg);
  REQUIRE(a.rows.size() == 1);
  CHECK(a.rows[0].rejected == b.rows[0].rejected);
  CHECK(a.rows[0].fraction > 0.0);
  CHECK(a.rows[0].fraction < 1.0);
  cfg.samples = 4000;
  const MeasureResult c = measure_sweep(cfg);
  const double wa = a.rows[0].ci_hi - a.rows[0].ci_lo;
  const double wc = c.rows[0].ci_hi - c.rows[0].ci_lo;
  CHECK(wa / wc == doctest::Approx(2.0).epsilon(0.25));
  long by_class = 0;
  for (long x : c.rows[0].rejected_by_class) by_class += x;
  CHECK(by_class == c.rows[0].rejected);
  CHECK(c.twist_min > 0.0);
}
