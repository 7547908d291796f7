#include "kamstark/measure_mc.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "kamstark/nonlinear_kam.hpp"

namespace kamstark {

bool NormalFrequencies::is_normal(int n) const {
  return sites.contains(n) && std::find(tangential.begin(), tangential.end(), n) == tangential.end();
}

std::string class_name(ResonanceClass c) {
  switch (c) {
    case ResonanceClass::R0: return "R0";
    case ResonanceClass::R1: return "R1";
    case ResonanceClass::R2: return "R2";
    case ResonanceClass::R3: return "R3";
  }
  return "?";
}

ModeSet enumerate_modes(int b, int kcut, double tau) {
  ModeSet out;
  std::vector<int> k(static_cast<std::size_t>(b), -kcut);
  while (true) {
    int l1 = 0;
    for (int v : k) l1 += std::abs(v);
    if (l1 > 0 && l1 <= kcut) {
      out.k.push_back(k);
      out.l1.push_back(l1);
      out.weight.push_back(std::pow(static_cast<double>(l1), tau));
    }
    int j = 0;
    while (j < b && k[j] == kcut) k[j++] = -kcut;
    if (j == b) break;
    ++k[j];
  }
  return out;
}

namespace {

double pairing(const std::vector<int>& k, const std::vector<double>& omega) {
  double x = 0.0;
  for (std::size_t j = 0; j < k.size(); ++j) x += k[j] * omega[j];
  return x;
}

}  // namespace

ResonanceReport resonance_check(const NormalFrequencies& f, const ResonanceThresholds& th, int level,
                                bool first_only) {
  const int b = static_cast<int>(f.tangential.size());
  const ModeSet modes = enumerate_modes(b, th.k_cut, th.tau);
  ResonanceReport rep;
  rep.xi = f.omega;
  std::vector<int> normal;
  for (int n = f.sites.lo(); n <= f.sites.hi(); ++n)
    if (f.is_normal(n)) normal.push_back(n);

  auto record = [&](ResonanceClass cls, const std::vector<int>& k, int m, int n, double div, double thr) {
    rep.violations.push_back(Violation{level, cls, k, m, n, div, thr});
  };
  for (std::size_t i = 0; i < modes.k.size(); ++i) {
    const auto& k = modes.k[i];
    const double x = pairing(k, f.omega);
    const double t0 = th.gamma / modes.weight[i];
    const double t1 = t0 / th.k_plus;
    const double t2 = t1 / th.k_plus;
    if (std::abs(x) < t0) record(ResonanceClass::R0, k, 0, 0, std::abs(x), t0);
    for (int n : normal) {
      for (int s : {1, -1}) {
        const double d = std::abs(x + s * f.frequency(n));
        if (d < t1) record(ResonanceClass::R1, k, s, n, d, t1);
      }
    }
    for (std::size_t a = 0; a < normal.size(); ++a) {
      const int m = normal[a];
      for (std::size_t c = 0; c < normal.size(); ++c) {
        const int n = normal[c];
        if (c >= a) {
          const double d = std::abs(x + f.frequency(m) + f.frequency(n));
          if (d < t2) record(ResonanceClass::R2, k, m, n, d, t2);
        }
        if (c != a) {
          const double d = std::abs(x + f.frequency(m) - f.frequency(n));
          if (d < t2) record(ResonanceClass::R3, k, m, n, d, t2);
        }
      }
    }
    if (first_only && !rep.violations.empty()) break;
  }
  rep.accepted = rep.violations.empty();
  return rep;
}

const std::vector<double>* ResonanceScanner::PairTable::at(int c) const {
  const int i = c - cmin;
  if (i < 0 || i >= static_cast<int>(values.size())) return nullptr;
  return &values[static_cast<std::size_t>(i)];
}

ResonanceScanner::ResonanceScanner(const NormalFrequencies& base, std::vector<int> zone, ModeSet modes)
    : modes_(std::move(modes)), sites_(base.sites), zone_(std::move(zone)) {
  in_zone_.assign(static_cast<std::size_t>(sites_.size()), 0);
  for (int z : zone_)
    if (sites_.contains(z)) in_zone_[static_cast<std::size_t>(sites_.index(z))] = 1;
  std::vector<int> fixed;
  for (int n = sites_.lo(); n <= sites_.hi(); ++n)
    if (base.is_normal(n) && !in_zone_[static_cast<std::size_t>(sites_.index(n))]) fixed.push_back(n);

  const int span = sites_.hi() - sites_.lo();
  sums_.cmin = 2 * sites_.lo();
  sums_.values.assign(static_cast<std::size_t>(2 * span + 1), {});
  diffs_.cmin = -span;
  diffs_.values.assign(static_cast<std::size_t>(2 * span + 1), {});
  for (std::size_t a = 0; a < fixed.size(); ++a) {
    const int m = fixed[a];
    for (std::size_t c = 0; c < fixed.size(); ++c) {
      const int n = fixed[c];
      if (c >= a) sums_.values[static_cast<std::size_t>(m + n - sums_.cmin)].push_back(
          base.frequency(m) + base.frequency(n) - (m + n));
      if (c != a) diffs_.values[static_cast<std::size_t>(m - n - diffs_.cmin)].push_back(
          base.frequency(m) - base.frequency(n) - (m - n));
    }
  }
  for (auto& v : sums_.values) std::sort(v.begin(), v.end());
  for (auto& v : diffs_.values) std::sort(v.begin(), v.end());
}

bool ResonanceScanner::near_pair(const PairTable& t, int c, double target, double thr) {
  const auto* v = t.at(c);
  if (v == nullptr || v->empty()) return false;
  const auto it = std::lower_bound(v->begin(), v->end(), target - thr);
  return it != v->end() && *it < target + thr;
}

std::pair<int, int> ResonanceScanner::locate_pair(const NormalFrequencies& f, bool sum, int c, double x,
                                                  double thr) const {
  for (int m = sites_.lo(); m <= sites_.hi(); ++m) {
    const int n = sum ? c - m : m - c;
    if (!f.is_normal(m) || !f.is_normal(n) || (sum && n < m) || (!sum && m == n)) continue;
    const double d = sum ? x + f.frequency(m) + f.frequency(n) : x + f.frequency(m) - f.frequency(n);
    if (std::abs(d) < thr) return {m, n};
  }
  return {0, 0};
}

std::optional<Violation> ResonanceScanner::first_violation(const NormalFrequencies& f, const ResonanceThresholds& th,
                                                           int level) const {
  double spread = 0.0;  // max |Omega_n - n|
  for (int n = sites_.lo(); n <= sites_.hi(); ++n)
    if (f.is_normal(n)) spread = std::max(spread, std::abs(f.frequency(n) - n));
  for (std::size_t i = 0; i < modes_.k.size(); ++i) {
    const auto& k = modes_.k[i];
    const double x = pairing(k, f.omega);
    const double t0 = th.gamma / modes_.weight[i];
    const double t1 = t0 / th.k_plus;
    const double t2 = t1 / th.k_plus;
    if (std::abs(x) < t0) return Violation{level, ResonanceClass::R0, k, 0, 0, std::abs(x), t0};
    const double gap = std::abs(x - std::round(x));
    for (int s : {1, -1}) {
      if (gap > spread + t1) break;
      const int n0 = static_cast<int>(std::lround(-s * x));
      for (int n = n0 - 1; n <= n0 + 1; ++n) {
        if (!f.is_normal(n)) continue;
        const double d = std::abs(x + s * f.frequency(n));
        if (d < t1) return Violation{level, ResonanceClass::R1, k, s, n, d, t1};
      }
    }
    if (gap > 2.0 * spread + t2) continue;
    const int c0 = static_cast<int>(std::lround(-x));
    for (int c = c0 - 1; c <= c0 + 1; ++c) {
      if (std::abs(x + c) > 2.0 * spread + t2) continue;
      // sums m + n = c
      if (near_pair(sums_, c, -x - c, t2)) {
        const auto [m, n] = locate_pair(f, true, c, x, t2);
        return Violation{level, ResonanceClass::R2, k, m, n, std::abs(x + f.frequency(m) + f.frequency(n)), t2};
      }
      for (int z : zone_) {
        const int n = c - z;
        if (!f.is_normal(z) || !f.is_normal(n)) continue;
        const double d = std::abs(x + f.frequency(z) + f.frequency(n));
        if (d < t2) return Violation{level, ResonanceClass::R2, k, std::min(z, n), std::max(z, n), d, t2};
      }
      // differences m - n = c
      if (c == 0) continue;
      if (near_pair(diffs_, c, -x - c, t2)) {
        const auto [m, n] = locate_pair(f, false, c, x, t2);
        return Violation{level, ResonanceClass::R3, k, m, n, std::abs(x + f.frequency(m) - f.frequency(n)), t2};
      }
      for (int z : zone_) {
        if (!f.is_normal(z)) continue;
        for (const auto [m, n] : {std::pair{z, z - c}, std::pair{z + c, z}}) {
          if (!f.is_normal(m) || !f.is_normal(n)) continue;
          const double d = std::abs(x + f.frequency(m) - f.frequency(n));
          if (d < t2) return Violation{level, ResonanceClass::R3, k, m, n, d, t2};
        }
      }
    }
  }
  return std::nullopt;
}

NormalFrequencies FrequencySample::at_eps(double eps) const {
  NormalFrequencies f = linear;
  for (std::size_t j = 0; j < f.omega.size(); ++j) f.omega[j] += eps * omega_shift[j];
  for (const auto& [n, s] : zone_shift) f.normal[static_cast<std::size_t>(f.sites.index(n))] += eps * s;
  return f;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tridiagonal_eigen(const SiteWindow& w, double delta,
                                                                 const std::vector<double>& disorder,
                                                                 bool vectors) {
  const int n = w.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    h(i, i) = w.site(i) + disorder[static_cast<std::size_t>(i)];
    if (i + 1 < n) h(i, i + 1) = h(i + 1, i) = delta;
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, vectors ? Eigen::ComputeEigenvectors
                                                                   : Eigen::EigenvaluesOnly);
}

}  // namespace

FrequencyProvider::FrequencyProvider(const LatticeModel& model, std::vector<int> tangential,
                                     std::vector<double> actions, int local_radius, int zone_radius)
    : model_(model), tangential_(std::move(tangential)), actions_(std::move(actions)) {
  if (tangential_.empty()) fail(Error::Code::invalid_argument, "measure: need at least one tangential site");
  if (actions_.empty()) actions_.assign(tangential_.size(), 1.0);
  if (actions_.size() != tangential_.size()) fail(Error::Code::invalid_argument, "measure: one action per site");
  const auto [jmin, jmax] = std::minmax_element(tangential_.begin(), tangential_.end());
  const SiteWindow& w = model_.window;
  for (int j : tangential_)
    if (!w.contains(j)) fail(Error::Code::invalid_argument, "measure: tangential site " + std::to_string(j) + " outside window");
  local_ = SiteWindow(std::max(w.lo(), *jmin - local_radius), std::min(w.hi(), *jmax + local_radius));

  base_.tangential = tangential_;
  base_.sites = w;
  const auto es = tridiagonal_eigen(w, model_.delta, model_.disorder, false);
  base_.normal.assign(es.eigenvalues().data(), es.eigenvalues().data() + w.size());
  for (int j : tangential_) base_.omega.push_back(base_.frequency(j));
  for (int n = std::max(w.lo(), *jmin - zone_radius); n <= std::min(w.hi(), *jmax + zone_radius); ++n)
    if (base_.is_normal(n)) zone_.push_back(n);
}

FrequencySample FrequencyProvider::evaluate(const std::vector<double>& xi) const {
  const int b = static_cast<int>(tangential_.size());
  if (static_cast<int>(xi.size()) != b) fail(Error::Code::invalid_argument, "measure: xi has wrong length");
  std::vector<double> disorder;
  for (int n = local_.lo(); n <= local_.hi(); ++n) disorder.push_back(model_.v(n));
  for (int j = 0; j < b; ++j) disorder[static_cast<std::size_t>(local_.index(tangential_[j]))] = xi[j];
  const auto es = tridiagonal_eigen(local_, model_.delta, disorder, true);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const Eigen::MatrixXd& psi = es.eigenvectors();  // column i belongs to site local_.site(i)

  FrequencySample out;
  out.linear = base_;
  auto col = [&](int site) { return local_.index(site); };
  for (int j = 0; j < b; ++j) out.linear.omega[j] = ev(col(tangential_[j]));
  for (int n : zone_) out.linear.normal[static_cast<std::size_t>(base_.sites.index(n))] = ev(col(n));

  // G(a,a,c,c) = (1/2) sum_k psi_a(k)^2 psi_c(k)^2
  auto overlap = [&](int a, int c) { return 0.5 * (psi.col(col(a)).array().square() * psi.col(col(c)).array().square()).sum(); };
  out.omega_shift.assign(static_cast<std::size_t>(b), 0.0);
  for (int j = 0; j < b; ++j) {
    double s = 2.0 * overlap(tangential_[j], tangential_[j]) * actions_[j];
    for (int i = 0; i < b; ++i)
      if (i != j) s += 4.0 * overlap(tangential_[j], tangential_[i]) * actions_[i];
    out.omega_shift[j] = s;
  }
  for (int n : zone_) {
    double s = 0.0;
    for (int j = 0; j < b; ++j) s += 4.0 * overlap(tangential_[j], n) * actions_[j];
    out.zone_shift[n] = s;
  }
  // d lambda_n / d v_i = psi_n(i)^2
  out.omega_jacobian.assign(static_cast<std::size_t>(b * b), 0.0);
  out.normal_jacobian_max.assign(static_cast<std::size_t>(b), 0.0);
  for (int i = 0; i < b; ++i) {
    const int row = col(tangential_[i]);
    for (int j = 0; j < b; ++j) out.omega_jacobian[static_cast<std::size_t>(j * b + i)] = psi(row, col(tangential_[j])) * psi(row, col(tangential_[j]));
    for (int n = local_.lo(); n <= local_.hi(); ++n) {
      if (!base_.is_normal(n)) continue;
      out.normal_jacobian_max[i] = std::max(out.normal_jacobian_max[i], psi(row, col(n)) * psi(row, col(n)));
    }
  }
  return out;
}

std::pair<double, double> wilson_interval(long hits, long n) {
  if (n <= 0) return {0.0, 1.0};
  const double z = 1.959963984540054;
  const double p = static_cast<double>(hits) / n;
  const double z2n = z * z / n;
  const double centre = (p + z2n / 2.0) / (1.0 + z2n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n);
  const double lo = hits == 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = hits == n ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

std::vector<double> sample_parameters(std::uint64_t seed, long index, int b, double half_width) {
  const auto idx = static_cast<std::uint64_t>(index);
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(idx & 0xffffffffu), static_cast<std::uint32_t>(idx >> 32)};
  std::mt19937_64 gen(seq);
  std::vector<double> xi(static_cast<std::size_t>(b));
  for (auto& x : xi) x = half_width * (2.0 * static_cast<double>(gen() >> 11) * 0x1p-53 - 1.0);
  return xi;
}

MeasureResult measure_sweep(const MeasureConfig& cfg) {
  const int b = static_cast<int>(cfg.tangential.size());
  if (b < 1 || b > kMaxAngles) fail(Error::Code::invalid_argument, "measure: need 1..4 tangential sites");
  if (cfg.samples < 1) fail(Error::Code::invalid_argument, "measure: samples must be positive");
  if (cfg.levels < 1 || cfg.levels > 2) fail(Error::Code::invalid_argument, "measure: levels must be 1 or 2");
  if (cfg.eps_list.empty()) fail(Error::Code::invalid_argument, "measure: empty eps list");
  for (double e : cfg.eps_list)
    if (!(e > 0.0 && e < 1.0)) fail(Error::Code::invalid_argument, "measure: eps must lie in (0, 1)");

  MeasureResult res;
  res.tau = cfg.tau > 0.0 ? cfg.tau : b + 1.0;
  res.k_cut = cfg.k_cut > 0 ? cfg.k_cut : fourier_cutoff(b, res.tau);
  const ModeSet modes = enumerate_modes(b, res.k_cut, res.tau);

  const LatticeModel model = LatticeModel::sample(cfg.window, cfg.delta, cfg.seed);
  const FrequencyProvider provider(model, cfg.tangential, cfg.actions, cfg.local_radius, cfg.zone_radius);
  const ResonanceScanner scanner(provider.base(), provider.zone(), modes);

  // thresholds[e][level]
  std::vector<std::vector<ResonanceThresholds>> thresholds;
  for (double e : cfg.eps_list) {
    const Schedule sch = Schedule::make(e, b, cfg.levels);
    std::vector<ResonanceThresholds> per;
    for (int nu = 0; nu < cfg.levels; ++nu) {
      ResonanceThresholds th;
      th.gamma = cfg.gamma_override > 0.0 ? cfg.gamma_override : sch.levels[static_cast<std::size_t>(nu)].gamma;
      th.k_plus = cfg.k_plus_override > 0.0 ? cfg.k_plus_override : sch.levels[static_cast<std::size_t>(nu) + 1].k;
      th.tau = res.tau;
      th.k_cut = res.k_cut;
      per.push_back(th);
    }
    thresholds.push_back(per);
    MeasureRow row;
    row.eps = e;
    row.gamma0 = per[0].gamma;
    row.samples = cfg.samples;
    row.rejected_by_level.assign(static_cast<std::size_t>(cfg.levels), 0);
    res.rows.push_back(row);
  }

  res.twist_min = std::numeric_limits<double>::infinity();
  for (long s = 0; s < cfg.samples; ++s) {
    const auto xi = sample_parameters(cfg.sample_seed, s, b, cfg.xi_half_width);
    const FrequencySample fs = provider.evaluate(xi);
    for (std::size_t i = 0; i < modes.k.size(); ++i) {
      const auto& k = modes.k[i];
      int imax = 0;
      for (int j = 1; j < b; ++j)
        if (std::abs(k[j]) > std::abs(k[imax])) imax = j;
      double d = 0.0;
      for (int j = 0; j < b; ++j) d += k[j] * fs.omega_jacobian[static_cast<std::size_t>(j * b + imax)];
      const double twist = (std::abs(d) - 2.0 * fs.normal_jacobian_max[imax]) / modes.l1[i];
      res.twist_min = std::min(res.twist_min, twist);
    }
    const std::optional<Violation> v0 = scanner.first_violation(fs.linear, thresholds[0][0], 0);
    for (std::size_t e = 0; e < cfg.eps_list.size(); ++e) {
      MeasureRow& row = res.rows[e];
      std::optional<Violation> hit;
      if (cfg.gamma_override > 0.0 && cfg.k_plus_override > 0.0) {
        hit = v0;
      } else {
        hit = scanner.first_violation(fs.linear, thresholds[e][0], 0);
      }
      if (!hit && cfg.levels > 1) {
        const NormalFrequencies f1 = cfg.nonlinear_shift ? fs.at_eps(cfg.eps_list[e]) : fs.linear;
        hit = scanner.first_violation(f1, thresholds[e][1], 1);
      }
      if (hit) {
        ++row.rejected;
        ++row.rejected_by_level[static_cast<std::size_t>(hit->level)];
        ++row.rejected_by_class[static_cast<std::size_t>(hit->cls)];
      }
    }
  }

  std::vector<double> lx;
  std::vector<double> ly;
  for (auto& row : res.rows) {
    row.fraction = static_cast<double>(row.rejected) / row.samples;
    std::tie(row.ci_lo, row.ci_hi) = wilson_interval(row.rejected, row.samples);
    row.saturated = row.rejected == 0 || row.rejected == row.samples;
    if (!row.saturated) {
      lx.push_back(std::log(row.eps));
      ly.push_back(std::log(row.fraction));
    }
  }
  res.slope_points = static_cast<int>(lx.size());
  BoundCheck slope{"measure_slope", -1, 0.0, cfg.slope_hi, false, ""};
  if (lx.size() >= 2) {
    const double n = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sx += lx[i];
      sy += ly[i];
      sxx += lx[i] * lx[i];
      sxy += lx[i] * ly[i];
    }
    const double den = n * sxx - sx * sx;
    res.slope = den != 0.0 ? (n * sxy - sx * sy) / den : 0.0;
    slope.measured = res.slope;
    slope.pass = res.slope >= cfg.slope_lo && res.slope <= cfg.slope_hi;
    slope.detail = "band [" + std::to_string(cfg.slope_lo) + ", " + std::to_string(cfg.slope_hi) + "] over " +
                   std::to_string(lx.size()) + " points";
  } else {
    slope.detail = "degenerate fit: fewer than two unsaturated eps values; widen the eps range";
  }
  res.checks.push_back(slope);
  const double twist_bound = 1.0 / (6.0 * b);
  res.checks.push_back(BoundCheck{"frequency_twist", -1, res.twist_min, twist_bound, res.twist_min >= twist_bound,
                                  "min over samples of |d divisor / d xi_i| / |k| with |k_i| maximal"});
  return res;
}

double affine_rejected_fraction(const LatticeModel& model, int site, const ResonanceThresholds& th,
                                double half_width) {
  const SiteWindow& w = model.window;
  std::vector<int> normal;
  for (int n = w.lo(); n <= w.hi(); ++n)
    if (n != site) normal.push_back(n);
  auto freq = [&](int n) { return n + model.v(n); };
  std::vector<std::pair<double, double>> iv;
  // |k xi + c| < t
  auto add = [&](int k, double c, double t) {
    double a = (-c - t) / k;
    double b = (-c + t) / k;
    if (a > b) std::swap(a, b);
    a = std::max(a, -half_width);
    b = std::min(b, half_width);
    if (a < b) iv.emplace_back(a, b);
  };
  for (int k = -th.k_cut; k <= th.k_cut; ++k) {
    if (k == 0) continue;
    const double t0 = th.gamma / std::pow(std::abs(k), th.tau);
    const double t1 = t0 / th.k_plus;
    const double t2 = t1 / th.k_plus;
    const double base = static_cast<double>(k) * site;
    add(k, base, t0);
    for (int n : normal) {
      add(k, base + freq(n), t1);
      add(k, base - freq(n), t1);
    }
    for (std::size_t a = 0; a < normal.size(); ++a) {
      for (std::size_t c = 0; c < normal.size(); ++c) {
        if (c >= a) add(k, base + freq(normal[a]) + freq(normal[c]), t2);
        if (c != a) add(k, base + freq(normal[a]) - freq(normal[c]), t2);
      }
    }
  }
  std::sort(iv.begin(), iv.end());
  double total = 0.0;
  double cur_a = 0.0;
  double cur_b = -std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : iv) {
    if (a > cur_b) {
      if (std::isfinite(cur_b)) total += cur_b - cur_a;
      cur_a = a;
      cur_b = b;
    } else {
      cur_b = std::max(cur_b, b);
    }
  }
  if (std::isfinite(cur_b)) total += cur_b - cur_a;
  return total / (2.0 * half_width);
}

}  // namespace kamstark
