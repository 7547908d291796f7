#include "kamstark/nonlinear_kam.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace kamstark {

namespace {

const cplx kI(0.0, 1.0);

MultiIndex action_key(int j) {
  MultiIndex k;
  k.l[j] = 1;
  return k;
}

MultiIndex normal_key(int n) {
  MultiIndex k;
  k.add_alpha(n);
  k.add_beta(n);
  return k;
}

Coef from_dual(const DualScalar& d, const std::vector<int>& param_map) {
  Coef c;
  c.v = d.value;
  for (std::size_t p = 0; p < param_map.size(); ++p) c.g[p] = d.grad[static_cast<std::size_t>(param_map[p])];
  return c;
}

// Generalized binomial coefficient C(x, l).
double gbinom(double x, int l) {
  double out = 1.0;
  for (int i = 0; i < l; ++i) out *= (x - i) / (i + 1);
  return out;
}

std::string key_text(const MultiIndex& key, int nangles) {
  std::string s = "k=(";
  for (int j = 0; j < nangles; ++j) s += (j ? "," : "") + std::to_string(key.k[j]);
  s += ") q=(";
  for (int i = 0; i < key.na; ++i) s += (i ? "," : "") + std::to_string(key.a[i]);
  s += ") qbar=(";
  for (int i = 0; i < key.nb; ++i) s += (i ? "," : "") + std::to_string(key.b[i]);
  return s + ")";
}

}  // namespace

TFSeries NormalForm::as_series() const {
  TFSeries s(nangles(), nparams);
  s.add(MultiIndex{}, energy);
  for (int j = 0; j < nangles(); ++j) s.add(action_key(j), omega[static_cast<std::size_t>(j)]);
  for (const auto& [n, c] : normal) s.add(normal_key(n), c);
  return s;
}

NormalForm& NormalForm::operator+=(const NormalForm& o) {
  energy += o.energy;
  for (std::size_t j = 0; j < omega.size() && j < o.omega.size(); ++j) omega[j] += o.omega[j];
  for (const auto& [n, c] : o.normal) normal[n] += c;
  return *this;
}

ActionAngleHamiltonian action_angle_hamiltonian(const NonlinearHamiltonian& h, const ActionAngleOptions& opt) {
  const auto& tang = opt.tangential;
  const int b = static_cast<int>(tang.size());
  if (b < 1 || b > kMaxAngles) fail(Error::Code::invalid_argument, "action-angle: need 1..4 tangential sites");
  if (std::set<int>(tang.begin(), tang.end()).size() != tang.size()) {
    fail(Error::Code::invalid_argument, "action-angle: tangential sites must be distinct");
  }
  std::vector<double> y = opt.actions.empty() ? std::vector<double>(static_cast<std::size_t>(b), 1.0) : opt.actions;
  if (static_cast<int>(y.size()) != b) fail(Error::Code::invalid_argument, "action-angle: one action per site");
  for (double v : y)
    if (!(v > 0.0)) fail(Error::Code::invalid_argument, "action-angle: actions must be positive");

  std::vector<int> param_map;
  for (int j : tang) {
    if (!h.sites.contains(j)) {
      fail(Error::Code::invalid_argument, "action-angle: tangential site " + std::to_string(j) + " outside sites");
    }
    const auto it = std::find(h.grad_sites.begin(), h.grad_sites.end(), j);
    if (it == h.grad_sites.end()) {
      fail(Error::Code::invalid_argument,
           "action-angle: tangential site " + std::to_string(j) + " carries no gradient in the Hamiltonian");
    }
    param_map.push_back(static_cast<int>(it - h.grad_sites.begin()));
  }
  auto tindex = [&](int site) {
    const auto it = std::find(tang.begin(), tang.end(), site);
    return it == tang.end() ? -1 : static_cast<int>(it - tang.begin());
  };

  ActionAngleHamiltonian out;
  out.eps = h.eps;
  NormalForm& nf = out.normal;
  nf.tangential = tang;
  nf.actions = y;
  nf.nparams = b;
  for (int t = 0; t < b; ++t) {
    const Coef d = from_dual(h.frequency(tang[t]), param_map);
    nf.omega.push_back(d);
    nf.energy += d * y[t];
  }
  for (int n = h.sites.lo(); n <= h.sites.hi(); ++n) {
    if (tindex(n) < 0) nf.normal[n] = from_dual(h.frequency(n), param_map);
  }

  TFSeries& p = out.perturbation;
  p = TFSeries(b, b);
  for (std::size_t e = 0; e < h.tensor.size(); ++e) {
    Coef base;
    base.v = h.eps * h.tensor.value(e);
    for (int t = 0; t < b; ++t) base.g[t] = h.eps * h.tensor.grad(e)[param_map[t]];
    QuadKey perm = h.tensor.key(e);
    do {
      // q_{m1} qbar_{m2} q_{m3} qbar_m with (m, m1, m2, m3) = perm
      int acount[kMaxAngles] = {};
      int bcount[kMaxAngles] = {};
      MultiIndex rest;
      auto place = [&](int site, bool bar) {
        const int t = tindex(site);
        if (t >= 0) {
          (bar ? bcount : acount)[t]++;
        } else if (bar) {
          rest.add_beta(site);
        } else {
          rest.add_alpha(site);
        }
      };
      place(perm[1], false);
      place(perm[3], false);
      place(perm[0], true);
      place(perm[2], true);

      // product over tangential sites of (I_t + y_t)^{p_t/2} e^{i (a_t - b_t) theta_t}
      std::vector<std::pair<MultiIndex, double>> expansion{{rest, 1.0}};
      for (int t = 0; t < b; ++t) {
        const int pw = acount[t] + bcount[t];
        if (pw == 0) continue;
        std::vector<std::pair<MultiIndex, double>> next;
        for (const auto& [key, c] : expansion) {
          for (int l = 0; key.l_total() + l <= opt.action_order; ++l) {
            const double coeff = gbinom(0.5 * pw, l) * std::pow(y[t], 0.5 * pw - l);
            if (coeff == 0.0) break;
            MultiIndex k2 = key;
            k2.k[t] = static_cast<std::int8_t>(acount[t] - bcount[t]);
            k2.l[t] = static_cast<std::uint8_t>(l);
            next.emplace_back(k2, c * coeff);
          }
        }
        expansion = std::move(next);
      }
      for (const auto& [key, c] : expansion) p.add(key, base * c);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return out;
}

TFSeries low_part(const TFSeries& f) {
  return f.filtered([](const MultiIndex& k) { return k.weight() <= 2; });
}

TFSeries high_part(const TFSeries& f) {
  return f.filtered([](const MultiIndex& k) { return k.weight() >= 3; });
}

std::vector<BoundCheck> check_decay_classes(const ActionAngleHamiltonian& aa, double eps) {
  const double amp = std::sqrt(eps);
  BoundCheck touching{"decay_tangential_classes", -1, 0.0, 0.0, true, ""};
  BoundCheck normal{"decay_normal_class", -1, 0.0, 0.0, true, ""};
  double worst_t = 0.0;
  double worst_n = 0.0;
  for (const auto& [key, c] : aa.perturbation.terms()) {
    const bool has_angle = key.q_degree() < 4;  // at least one tangential index
    int nmax = 0;
    int nplus = -1 << 20;
    int nminus = 1 << 20;
    for (int i = 0; i < key.na; ++i) {
      nmax = std::max(nmax, std::abs(static_cast<int>(key.a[i])));
      nplus = std::max(nplus, static_cast<int>(key.a[i]));
      nminus = std::min(nminus, static_cast<int>(key.a[i]));
    }
    for (int i = 0; i < key.nb; ++i) {
      nmax = std::max(nmax, std::abs(static_cast<int>(key.b[i])));
      nplus = std::max(nplus, static_cast<int>(key.b[i]));
      nminus = std::min(nminus, static_cast<int>(key.b[i]));
    }
    if (key.q_degree() == 0) nplus = nminus = 0;
    const double mag = c.norm(aa.perturbation.nparams());
    if (has_angle) {
      const double bound = amp * std::exp(-nmax / 8.0);
      if (mag / bound > worst_t) {
        worst_t = mag / bound;
        touching.measured = mag;
        touching.threshold = bound;
      }
    } else {
      const double bound = amp * std::exp(-(nplus - nminus) / 8.0);
      if (mag / bound > worst_n) {
        worst_n = mag / bound;
        normal.measured = mag;
        normal.threshold = bound;
      }
    }
  }
  touching.pass = worst_t <= 1.0;
  normal.pass = worst_n <= 1.0;
  return {touching, normal};
}

Schedule Schedule::make(double eps0, int b, int nlevels, double s0, double r0, double rho0, double c, double d) {
  if (!(eps0 > 0.0 && eps0 < 1.0)) fail(Error::Code::invalid_argument, "schedule: eps0 must lie in (0, 1)");
  Schedule s;
  s.eps0 = eps0;
  s.c = c;
  s.b = b;
  s.tau = b + 1.0;
  s.d = d;
  double shrink = 0.0;
  for (int nu = 0; nu <= nlevels; ++nu) {
    ScheduleLevel lv;
    lv.nu = nu;
    if (nu == 0) {
      lv.eps = eps0;
      lv.k = std::ceil(2.0 * std::abs(std::log(eps0)));
      lv.rho = rho0;
    } else {
      const ScheduleLevel& prev = s.levels.back();
      lv.eps = c * std::pow(prev.eps, 1.25);
      lv.k = 2.0 * std::abs(std::log(prev.eps)) * prev.k;
      lv.rho = 1.0 / lv.k;
      shrink += std::pow(2.0, -(nu + 1));
    }
    lv.gamma = std::pow(lv.eps, 1.0 / 16.0);
    lv.s = s0 * (1.0 - shrink);
    lv.r = r0 * (1.0 - shrink);
    s.levels.push_back(lv);
  }
  return s;
}

SeriesDomain Schedule::domain(int nu) const {
  const ScheduleLevel& lv = levels.at(static_cast<std::size_t>(nu));
  return SeriesDomain{lv.r, lv.s, lv.rho, d};
}

int fourier_cutoff(int b, double tau) {
  // number of k in Z^b with |k|_1 = m
  auto shell = [b](int m) {
    double total = 0.0;
    for (int j = 1; j <= std::min(b, m); ++j) {
      double cb = 1.0;
      for (int i = 0; i < j; ++i) cb = cb * (b - i) / (i + 1);
      double cm = 1.0;
      for (int i = 0; i < j - 1; ++i) cm = cm * (m - 1 - i) / (i + 1);
      total += std::pow(2.0, j) * cb * cm;
    }
    return total;
  };
  const int mmax = 200000;
  std::vector<double> tail(mmax + 2, 0.0);
  for (int m = mmax; m >= 1; --m) tail[m] = tail[m + 1] + shell(m) * std::pow(m, -(tau + 1.0));
  for (int k = 1; k < mmax; ++k)
    if (tail[k + 1] < 0.01) return k;
  return mmax;
}

namespace {

struct Solver {
  const NormalForm& nf;
  const HomologicalOptions& opt;
  int nangles;
  HomologicalSolution& sol;

  bool routed(const MultiIndex& key) const {
    if (key.k_l1() > opt.k_plus) return true;
    for (int i = 0; i < key.na; ++i)
      if (std::abs(key.a[i]) > opt.k_plus) return true;
    for (int i = 0; i < key.nb; ++i)
      if (std::abs(key.b[i]) > opt.k_plus) return true;
    return false;
  }

  const Coef& normal_freq(int n) const {
    const auto it = nf.normal.find(n);
    if (it == nf.normal.end()) fail(Error::Code::invalid_argument, "homological: no normal frequency for site " + std::to_string(n));
    return it->second;
  }

  Coef divisor(const MultiIndex& key) const {
    Coef lam;
    for (int j = 0; j < nangles; ++j) lam += nf.omega[static_cast<std::size_t>(j)] * static_cast<double>(key.k[j]);
    for (int i = 0; i < key.na; ++i) lam += normal_freq(key.a[i]);
    for (int i = 0; i < key.nb; ++i) lam -= normal_freq(key.b[i]);
    return lam;
  }

  double threshold(const MultiIndex& key) const {
    const double kk = std::pow(std::max(1, key.k_l1()), opt.tau);
    switch (key.q_degree()) {
      case 0: return opt.gamma / kk;
      case 1: return opt.gamma / (kk * opt.k_plus);
      default: return opt.gamma / (kk * opt.k_plus * opt.k_plus);
    }
  }

  // -i lambda F + P = 0 per term
  void solve(const MultiIndex& key, const Coef& c) {
    const Coef lam = divisor(key);
    const double thr = threshold(key);
    const double ratio = std::abs(lam.v) / thr;
    if (sol.solved_terms == 0 || ratio < sol.min_divisor_ratio) {
      sol.min_divisor_ratio = ratio;
      sol.worst = DivisorRecord{key, std::abs(lam.v), thr};
    }
    if (ratio < 1.0) {
      if (opt.enforce_resonance) {
        fail(Error::Code::resonance, "resonance: divisor " + std::to_string(std::abs(lam.v)) + " below threshold " +
                                         std::to_string(thr) + " at " + key_text(key, nangles));
      }
      sol.resonances.push_back(DivisorRecord{key, std::abs(lam.v), thr});
    }
    ++sol.solved_terms;
    sol.generator.add(key, (c * (-kI)) / lam);
  }

  void process(const MultiIndex& key, const Coef& c) {
    if (key.gauge_charge() != 0) {
      sol.zero_average_max = std::max(sol.zero_average_max, c.norm(sol.generator.nparams()));
      return;
    }
    if (routed(key)) {
      sol.routed.add(key, c);
      return;
    }
    if (key.k_l1() == 0) {
      if (key.q_degree() == 0 && key.l_total() == 0) {
        sol.correction.energy += c;
        return;
      }
      if (key.q_degree() == 0 && key.l_total() == 1) {
        for (int j = 0; j < nangles; ++j)
          if (key.l[j] == 1) sol.correction.omega[static_cast<std::size_t>(j)] += c;
        return;
      }
      if (key.na == 1 && key.nb == 1 && key.a[0] == key.b[0]) {
        sol.correction.normal[key.a[0]] += c;
        return;
      }
    }
    solve(key, c);
  }
};

BracketOptions with_weight(BracketOptions caps, int w) {
  caps.max_weight = w;
  return caps;
}

}  // namespace

HomologicalSolution solve_homological(const NormalForm& n, const TFSeries& p, const HomologicalOptions& opt,
                                      const SeriesDomain& dom) {
  const int b = n.nangles();
  HomologicalSolution sol;
  sol.generator = TFSeries(b, n.nparams);
  sol.routed = TFSeries(b, n.nparams);
  sol.correction.tangential = n.tangential;
  sol.correction.actions = n.actions;
  sol.correction.nparams = n.nparams;
  sol.correction.omega.assign(static_cast<std::size_t>(b), Coef{});
  Solver solver{n, opt, b, sol};

  const TFSeries plow = low_part(p);
  const TFSeries phigh = high_part(p);

  for (int w = 0; w <= 2; ++w) {
    TFSeries source = plow.filtered([w](const MultiIndex& k) { return k.weight() == w; });
    if (w > 0) {
      const TFSeries br = poisson_bracket(phigh, sol.generator, with_weight(opt.caps, w));
      source += br.filtered([w](const MultiIndex& k) { return k.weight() == w; });
    }
    for (const auto& [key, c] : source.sorted()) solver.process(key, c);
  }

  // {N,F} + P_low + {P_high,F}_low - N-hat - P-hat on the low part
  TFSeries res = poisson_bracket(n.as_series(), sol.generator, with_weight(opt.caps, 2));
  res += plow;
  res += poisson_bracket(phigh, sol.generator, with_weight(opt.caps, 2));
  NormalForm corr = sol.correction;
  res -= corr.as_series();
  res -= sol.routed;
  sol.residual = low_part(res);
  sol.residual_norm = series_norm(sol.residual, dom);
  return sol;
}

NonlinearStep kam_nonlinear_step(const NormalForm& n, const TFSeries& p, const Schedule& schedule, int nu,
                                 const StepOptions& opt) {
  if (nu + 1 >= static_cast<int>(schedule.levels.size())) {
    fail(Error::Code::invalid_argument, "kam step: schedule has no level after " + std::to_string(nu));
  }
  NonlinearStep st;
  st.nu = nu;
  const ScheduleLevel& level = schedule.levels[static_cast<std::size_t>(nu)];
  const SeriesDomain dom = schedule.domain(nu);
  const SeriesDomain next = schedule.domain(nu + 1);

  st.x_low = vector_field_norm(low_part(p), dom).total;

  HomologicalOptions ho;
  ho.gamma = level.gamma;
  ho.tau = schedule.tau;
  ho.k_plus = opt.k_plus_override > 0.0 ? opt.k_plus_override : schedule.levels[static_cast<std::size_t>(nu) + 1].k;
  ho.enforce_resonance = opt.enforce_resonance;
  ho.caps = opt.caps;
  st.homological = solve_homological(n, p, ho, dom);
  const TFSeries& f = st.homological.generator;

  // H o X_F^1 = sum_m ad_F^m(H) / m!
  TFSeries h = n.as_series() + p;
  TFSeries hp = h;
  TFSeries term = h;
  double first = 0.0;
  BracketOptions lie_caps = opt.caps;
  lie_caps.prune_high = opt.lie_prune * schedule.levels[static_cast<std::size_t>(nu) + 1].eps;
  for (int m = 1; m <= opt.lie_order_max; ++m) {
    term = poisson_bracket(term, f, lie_caps);
    term *= 1.0 / m;
    st.overflow_mass += term.overflow_mass;
    st.pruned_mass += term.pruned_mass;
    term.overflow_mass = 0.0;
    term.pruned_mass = 0.0;
    hp += term;
    st.lie_order = m;
    const double tn = series_norm(term, dom);
    if (m == 1) first = tn;
    if (tn <= opt.lie_tol * std::max(first, 1e-300) || tn == 0.0) break;
  }

  st.normal = n;
  st.normal += st.homological.correction;
  st.perturbation = hp - st.normal.as_series();
  st.perturbation.overflow_mass = 0.0;
  st.perturbation.pruned_mass = 0.0;
  st.perturbation.prune(0.0);

  st.x_low_next = vector_field_norm(low_part(st.perturbation), next).total;
  st.x_high_next = vector_field_norm(high_part(st.perturbation), next).total;

  const double eps = st.x_low;
  for (const auto& c : st.homological.correction.omega) st.omega_drift = std::max(st.omega_drift, std::abs(c.v));
  for (const auto& [site, c] : st.homological.correction.normal) {
    const double bound = std::pow(eps, 5.0 / 6.0) * std::exp(-dom.rho * std::abs(site));
    st.normal_drift_ratio = std::max(st.normal_drift_ratio, std::abs(c.v) / bound);
  }

  auto check = [&](std::string name, double measured, double threshold, std::string detail = {}) {
    st.checks.push_back(BoundCheck{std::move(name), nu, measured, threshold, measured <= threshold, std::move(detail)});
  };
  check("homological_residual", st.homological.residual_norm, 1e-9);
  check("zero_average", st.homological.zero_average_max, 1e-12);
  check("frequency_drift", st.omega_drift, std::pow(eps, 5.0 / 6.0));
  check("normal_frequency_drift", st.normal_drift_ratio, 1.0, "max |Omega-hat_n| / (eps^{5/6} e^{-rho|n|})");
  check("low_contraction", st.x_low_next, opt.contraction_constant * std::pow(eps, 1.25));
  check("high_bound", st.x_high_next, 2.0);
  return st;
}

KamRun run_nonlinear_kam(const NonlinearHamiltonian& h, const KamRunOptions& opt) {
  if (h.eps > 0.0) {
    const double limit = std::abs(std::log(h.eps)) / 6.0;
    for (int j : opt.action_angle.tangential) {
      if (std::abs(j) > limit) {
        fail(Error::Code::invalid_argument, "kam: tangential site " + std::to_string(j) + " violates |n| <= |ln eps|/6 = " +
                                                std::to_string(limit));
      }
    }
  }
  if (!(h.eps >= 0.0 && h.eps < 1.0)) fail(Error::Code::invalid_argument, "kam: eps must lie in [0, 1)");
  KamRun run;
  run.initial = action_angle_hamiltonian(h, opt.action_angle);
  // without the nonlinearity the linear eigenmodes are already invariant tori
  if (h.eps == 0.0) return run;
  const int b = run.initial.normal.nangles();
  run.schedule = Schedule::make(h.eps, b, opt.steps + 1, opt.s0, opt.r0, opt.rho0);
  for (auto& c : check_decay_classes(run.initial, h.eps)) run.checks.push_back(c);

  NormalForm n = run.initial.normal;
  TFSeries p = run.initial.perturbation;
  for (int nu = 0; nu < opt.steps; ++nu) {
    NonlinearStep st = kam_nonlinear_step(n, p, run.schedule, nu, opt.step);
    for (const auto& c : st.checks) run.checks.push_back(c);
    n = st.normal;
    p = st.perturbation;
    run.steps.push_back(std::move(st));
  }
  return run;
}

}  // namespace kamstark

namespace kamstark {

struct TorusSampler::Flow {
  struct Term {
    MultiIndex key;
    cplx c;
  };
  using Terms = std::vector<Term>;
  std::vector<Terms> d_action;  // per angle
  std::vector<Terms> d_angle;
  std::vector<Terms> d_q;       // per normal site, state order
  std::vector<Terms> d_qbar;
};

namespace {

TorusSampler::Flow::Terms compile(const TFSeries& f) {
  TorusSampler::Flow::Terms out;
  for (const auto& [key, c] : f.sorted()) out.push_back({key, c.v});
  return out;
}

}  // namespace

TorusSampler::TorusSampler(const KamRun& run, const NonlinearHamiltonian& h, const DiagonalizationResult& lin,
                           std::vector<double> theta0, int flow_substeps)
    : tangential_(run.initial.normal.tangential),
      actions_(run.initial.normal.actions),
      theta0_(std::move(theta0)),
      sites_(h.sites),
      window_(lin.model.window),
      substeps_(flow_substeps) {
  const int b = static_cast<int>(tangential_.size());
  if (theta0_.empty()) theta0_.assign(static_cast<std::size_t>(b), 0.0);
  if (static_cast<int>(theta0_.size()) != b) fail(Error::Code::invalid_argument, "torus: one phase per tangential site");
  const NormalForm& last = run.steps.empty() ? run.initial.normal : run.steps.back().normal;
  for (const auto& c : last.omega) omega_.push_back(c.v.real());
  for (int n = sites_.lo(); n <= sites_.hi(); ++n)
    if (std::find(tangential_.begin(), tangential_.end(), n) == tangential_.end()) normal_.push_back(n);
  for (int m = sites_.lo(); m <= sites_.hi(); ++m) {
    std::vector<double> col(static_cast<std::size_t>(window_.size()), 0.0);
    for (int k = window_.lo(); k <= window_.hi(); ++k) col[static_cast<std::size_t>(window_.index(k))] = lin.transform.value(k, m);
    columns_.push_back(std::move(col));
  }
  for (const auto& st : run.steps) {
    auto flow = std::make_shared<Flow>();
    const TFSeries& f = st.homological.generator;
    for (int j = 0; j < b; ++j) {
      flow->d_action.push_back(compile(derivative(f, VarKind::action, j)));
      flow->d_angle.push_back(compile(derivative(f, VarKind::angle, j)));
    }
    for (int n : normal_) {
      flow->d_q.push_back(compile(derivative(f, VarKind::q, n)));
      flow->d_qbar.push_back(compile(derivative(f, VarKind::qbar, n)));
    }
    flows_.push_back(std::move(flow));
  }
}

void TorusSampler::apply_flow(const Flow& flow, std::vector<cplx>& state) const {
  const int b = static_cast<int>(tangential_.size());
  const int nn = static_cast<int>(normal_.size());
  std::vector<int> slot(static_cast<std::size_t>(sites_.size()), -1);
  for (int i = 0; i < nn; ++i) slot[static_cast<std::size_t>(sites_.index(normal_[i]))] = i;
  const cplx I(0.0, 1.0);

  auto eval = [&](const Flow::Terms& terms, const std::vector<cplx>& x) {
    cplx s(0.0);
    for (const auto& t : terms) {
      cplx m = t.c;
      for (int j = 0; j < b; ++j) {
        if (t.key.k[j] != 0) m *= std::exp(I * static_cast<double>(t.key.k[j]) * x[j]);
        for (int p = 0; p < t.key.l[j]; ++p) m *= x[b + j];
      }
      for (int i = 0; i < t.key.na; ++i) m *= x[2 * b + slot[static_cast<std::size_t>(sites_.index(t.key.a[i]))]];
      for (int i = 0; i < t.key.nb; ++i) m *= x[2 * b + nn + slot[static_cast<std::size_t>(sites_.index(t.key.b[i]))]];
      s += m;
    }
    return s;
  };
  // theta' = dF/dI, I' = -dF/dtheta, q' = i dF/dqbar, qbar' = -i dF/dq
  auto field = [&](const std::vector<cplx>& x) {
    std::vector<cplx> dx(x.size());
    for (int j = 0; j < b; ++j) {
      dx[j] = eval(flow.d_action[j], x);
      dx[b + j] = -eval(flow.d_angle[j], x);
    }
    for (int i = 0; i < nn; ++i) {
      dx[2 * b + i] = I * eval(flow.d_qbar[i], x);
      dx[2 * b + nn + i] = -I * eval(flow.d_q[i], x);
    }
    return dx;
  };
  const double h = 1.0 / substeps_;
  std::vector<cplx> tmp(state.size());
  for (int s = 0; s < substeps_; ++s) {
    const auto k1 = field(state);
    for (std::size_t i = 0; i < state.size(); ++i) tmp[i] = state[i] + 0.5 * h * k1[i];
    const auto k2 = field(tmp);
    for (std::size_t i = 0; i < state.size(); ++i) tmp[i] = state[i] + 0.5 * h * k2[i];
    const auto k3 = field(tmp);
    for (std::size_t i = 0; i < state.size(); ++i) tmp[i] = state[i] + h * k3[i];
    const auto k4 = field(tmp);
    for (std::size_t i = 0; i < state.size(); ++i) state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

SeriesPoint TorusSampler::coordinates(double t) const {
  const int b = static_cast<int>(tangential_.size());
  const int nn = static_cast<int>(normal_.size());
  std::vector<cplx> state(static_cast<std::size_t>(2 * b + 2 * nn), 0.0);
  for (int j = 0; j < b; ++j) state[j] = theta0_[j] + omega_[j] * t;
  for (auto it = flows_.rbegin(); it != flows_.rend(); ++it) apply_flow(**it, state);
  SeriesPoint p;
  for (int j = 0; j < b; ++j) {
    p.theta.push_back(state[j]);
    p.action.push_back(state[b + j]);
  }
  for (int i = 0; i < nn; ++i) {
    p.q[normal_[i]] = state[2 * b + i];
    p.qbar[normal_[i]] = state[2 * b + nn + i];
  }
  return p;
}

std::vector<cplx> TorusSampler::q_frame(double t) const {
  const SeriesPoint p = coordinates(t);
  std::vector<cplx> q(static_cast<std::size_t>(sites_.size()), 0.0);
  for (std::size_t j = 0; j < tangential_.size(); ++j) {
    const double theta = p.theta[j].real();
    const double amp = std::sqrt(std::max(0.0, p.action[j].real() + actions_[j]));
    q[static_cast<std::size_t>(sites_.index(tangential_[j]))] = std::polar(amp, theta);
  }
  for (const auto& [n, v] : p.q) q[static_cast<std::size_t>(sites_.index(n))] = v;
  return q;
}

std::vector<cplx> TorusSampler::physical(double t) const {
  const std::vector<cplx> q = q_frame(t);
  std::vector<cplx> u(static_cast<std::size_t>(window_.size()), 0.0);
  for (std::size_t m = 0; m < q.size(); ++m) {
    if (q[m] == 0.0) continue;
    const auto& col = columns_[m];
    for (std::size_t k = 0; k < u.size(); ++k) u[k] += col[k] * q[m];
  }
  return u;
}

}  // namespace kamstark
