#include "kamstark/linear_kam.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace kamstark {

double LatticeModel::site_disorder(std::uint64_t seed, int n, double amplitude) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(static_cast<std::int64_t>(n) & 0xffffffff)};
  std::mt19937_64 gen(seq);
  const double u = static_cast<double>(gen() >> 11) * 0x1p-53;
  return amplitude * (2.0 * u - 1.0);
}

LatticeModel LatticeModel::sample(SiteWindow w, double delta, std::uint64_t seed, double amplitude) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) fail(Error::Code::invalid_argument, "model: delta must be >= 0");
  LatticeModel m{w, delta, seed, amplitude, {}};
  m.disorder.reserve(static_cast<std::size_t>(w.size()));
  for (int n = w.lo(); n <= w.hi(); ++n) m.disorder.push_back(site_disorder(seed, n, amplitude));
  return m;
}

KamConstants KamConstants::for_delta(double delta, double r, double alpha) {
  KamConstants k;
  k.delta = delta;
  k.r = r;
  k.alpha = alpha;
  k.hopping_norm = 2.0 * std::exp(r);
  const double x = delta * std::exp(r);
  k.c_delta = 4.0 * x * std::exp(4.0 * x);
  k.eps0 = 2.0 * k.c_delta * alpha;
  k.u_bound = 2.0 * x * std::exp(2.0 * x);
  return k;
}

double KamConstants::step_bound(int k) const { return std::pow(eps0, std::pow(1.25, k)); }

bool all_pass(const std::vector<BoundCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const BoundCheck& c) { return c.pass; });
}

LatticeOperator hopping_generator(SiteWindow w, int nparams) {
  LatticeOperator op(w, nparams, 1, Symmetry::skew_adjoint);
  for (int m = w.lo(); m < w.hi(); ++m) {
    op.set_value(m, m + 1, -1.0);
    op.set_value(m + 1, m, 1.0);
  }
  return op;
}

LatticeOperator hopping_operator(SiteWindow w, int nparams) {
  LatticeOperator op(w, nparams, 1, Symmetry::self_adjoint);
  for (int m = w.lo(); m < w.hi(); ++m) {
    op.set_value(m, m + 1, 1.0);
    op.set_value(m + 1, m, 1.0);
  }
  return op;
}

namespace {

int active_index(const std::vector<int>& active, int site) {
  const auto it = std::find(active.begin(), active.end(), site);
  return it == active.end() ? -1 : static_cast<int>(it - active.begin());
}

}  // namespace

LatticeOperator disorder_operator(const LatticeModel& model, const std::vector<int>& active) {
  const int np = static_cast<int>(active.size());
  std::vector<DualScalar> diag;
  diag.reserve(static_cast<std::size_t>(model.window.size()));
  for (int n = model.window.lo(); n <= model.window.hi(); ++n) {
    const int p = active_index(active, n);
    diag.push_back(DualScalar::variable(model.v(n), static_cast<std::size_t>(np),
                                        p < 0 ? static_cast<std::size_t>(np) : static_cast<std::size_t>(p)));
  }
  LatticeOperator v(model.window, np, 0, Symmetry::self_adjoint);
  for (int n = model.window.lo(); n <= model.window.hi(); ++n) v.set(n, n, diag[model.window.index(n)]);
  return v;
}

FirstConjugation first_conjugation(const LatticeModel& model, const std::vector<int>& active,
                                   const SeriesOptions& opt) {
  const int np = static_cast<int>(active.size());
  LatticeOperator gen = hopping_generator(model.window, np) * model.delta;
  gen.set_symmetry(Symmetry::skew_adjoint);
  const LatticeOperator v = disorder_operator(model, active);
  FirstConjugation fc;
  auto series = commutator_series(gen, v, opt);
  fc.remainder = std::move(series.op);
  fc.tail_bound = series.tail_bound;
  LatticeOperator neg = gen * -1.0;
  neg.set_symmetry(Symmetry::skew_adjoint);
  auto e = op_exp(neg, opt);
  fc.u = std::move(e.op);
  fc.tail_bound += e.tail_bound;
  return fc;
}

LatticeOperator solve_linear_homological(const std::vector<DualScalar>& offsets, const LatticeOperator& p) {
  const SiteWindow& w = p.window();
  const int np = p.nparams();
  LatticeOperator out(w, np, p.bandwidth(), Symmetry::skew_adjoint);
  for (int l = -p.bandwidth(); l <= p.bandwidth(); ++l) {
    if (l == 0) continue;
    const double* pv = p.diag_values(l);
    const double* pg = p.diag_grads(l);
    double* ov = out.diag_values(l);
    double* og = out.diag_grads(l);
    for (int i = 0; i < w.size(); ++i) {
      if (!p.row_valid(l, i)) continue;
      const int j = i - l;
      const DualScalar& fm = offsets[static_cast<std::size_t>(i)];
      const DualScalar& fn = offsets[static_cast<std::size_t>(j)];
      const double div = static_cast<double>(l) + (fm.value - fn.value);
      if (std::abs(div) < 1e-3) {
        fail(Error::Code::numeric, "linear homological equation: eigenvalue separation collapsed at (" +
                                       std::to_string(w.site(i)) + "," + std::to_string(w.site(j)) + ")");
      }
      const double val = pv[i] / div;
      ov[i] = val;
      const double* gi = pg + static_cast<std::size_t>(i) * np;
      double* oi = og + static_cast<std::size_t>(i) * np;
      for (int q = 0; q < np; ++q) {
        const double ddiv = (q < static_cast<int>(fm.grad.size()) ? fm.grad[q] : 0.0) -
                            (q < static_cast<int>(fn.grad.size()) ? fn.grad[q] : 0.0);
        oi[q] = (gi[q] - val * ddiv) / div;
      }
    }
  }
  return out;
}

KamStepResult kam_step(const std::vector<DualScalar>& offsets, const LatticeOperator& p, const SeriesOptions& opt) {
  KamStepResult res;
  res.generator = solve_linear_homological(offsets, p);
  res.offsets = offsets;
  for (int i = 0; i < p.size(); ++i) {
    const int n = p.window().site(i);
    res.offsets[static_cast<std::size_t>(i)] += p.entry(n, n);
  }
  LatticeOperator y = p.diagonal_part() - p;
  y.set_symmetry(Symmetry::self_adjoint);
  LatticeOperator psym = p;
  psym.set_symmetry(Symmetry::self_adjoint);

  const double wn = weighted_norm(res.generator, opt.r, opt.alpha).with_alpha;
  const double yn = weighted_norm(y, opt.r, opt.alpha).with_alpha;
  const double pn = weighted_norm(p, opt.r, opt.alpha).with_alpha;
  int order = 1;
  while (exp_tail(2.0 * wn, order) * (yn + pn) > opt.tail_tol) {
    if (++order > opt.max_terms) fail(Error::Code::numeric, "kam_step: commutator series does not converge");
  }
  res.tail_bound = exp_tail(2.0 * wn, order) * (yn + pn);

  res.remainder = LatticeOperator(p.window(), p.nparams(), 0, Symmetry::self_adjoint);
  LatticeOperator ay = y;
  LatticeOperator ap = psym;
  double fact = 1.0;  // m!
  for (int m = 1; m <= order; ++m) {
    fact *= m;
    ay = commutator(res.generator, ay, opt.mul);
    ap = commutator(res.generator, ap, opt.mul);
    res.remainder += ay * (1.0 / (fact * (m + 1)));
    res.remainder += ap * (1.0 / fact);
  }
  res.remainder.set_symmetry(Symmetry::self_adjoint);
  res.remainder.prune(opt.mul.prune_tol);
  return res;
}

DualScalar DiagonalizationResult::eigenvalue(int n) const {
  return offsets.at(static_cast<std::size_t>(model.window.index(n))) + static_cast<double>(n);
}

int DiagonalizationResult::param_index(int site) const { return active_index(active, site); }

namespace {

BoundCheck make_check(std::string name, int step, double measured, double threshold, std::string detail = {}) {
  return BoundCheck{std::move(name), step, measured, threshold, measured <= threshold, std::move(detail)};
}

void push_check(std::vector<BoundCheck>& checks, BoundCheck c, bool strict) {
  const bool pass = c.pass;
  const std::string msg = c.name + " violated at step " + std::to_string(c.step) + ": measured " +
                          std::to_string(c.measured) + " > " + std::to_string(c.threshold);
  checks.push_back(std::move(c));
  if (strict && !pass) fail(Error::Code::bound, msg);
}

void step_checks(const DiagonalizationResult& res, int k, const std::vector<DualScalar>& f, double pnorm,
                 std::vector<BoundCheck>& checks, bool strict) {
  const KamConstants& kc = res.constants;
  push_check(checks, make_check("perturbation_norm", k, pnorm, kc.step_bound(k)), strict);

  const SiteWindow& w = res.model.window;
  std::vector<double> d;
  for (int n = res.interior.lo(); n <= res.interior.hi(); ++n) d.push_back(n + f[w.index(n)].value);
  std::sort(d.begin(), d.end());
  double gap = 1e300;
  for (std::size_t i = 1; i < d.size(); ++i) gap = std::min(gap, d[i] - d[i - 1]);
  const double need = 2.0 / 3.0 + std::pow(3.0, -(k + 2));
  BoundCheck sep{"eigenvalue_separation", k, gap, need, gap >= need, "min interior gap must be >= threshold"};
  push_check(checks, sep, strict);

  double worst = 0.0;
  for (int m = res.interior.lo(); m <= res.interior.hi(); ++m) {
    const DualScalar& fm = f[w.index(m)];
    for (std::size_t p = 0; p < res.active.size(); ++p) {
      const double g = p < fm.grad.size() ? fm.grad[p] : 0.0;
      const double dev = std::abs(g - (res.active[p] == m ? 1.0 : 0.0));
      worst = std::max(worst, dev);
    }
  }
  push_check(checks, make_check("eigenvalue_derivative", k, worst, 26.0 / 15.0 * kc.c_delta), strict);
}

}  // namespace

std::vector<BoundCheck> check_transform_bounds(const DiagonalizationResult& res) {
  std::vector<BoundCheck> out;
  const KamConstants& kc = res.constants;
  const LatticeOperator& g = res.transform;
  double worst_ratio = 0.0;
  double worst_measured = 0.0;
  double worst_threshold = 1.0;
  int wm = 0;
  int wn = 0;
  for (int m = res.interior.lo(); m <= res.interior.hi(); ++m) {
    for (int n = std::max(res.interior.lo(), m - g.bandwidth()); n <= std::min(res.interior.hi(), m + g.bandwidth());
         ++n) {
      double gmax = 0.0;
      for (int p = 0; p < g.nparams(); ++p) gmax = std::max(gmax, std::abs(g.grad(m, n, p)));
      const double measured = std::abs(g.value(m, n) - (m == n ? 1.0 : 0.0)) + kc.alpha * gmax;
      const double threshold = 19.0 / 9.0 * kc.c_delta * std::exp(-std::abs(m - n) / 8.0);
      if (measured / threshold > worst_ratio) {
        worst_ratio = measured / threshold;
        worst_measured = measured;
        worst_threshold = threshold;
        wm = m;
        wn = n;
      }
    }
  }
  out.push_back(make_check("transform_decay", res.steps, worst_measured, worst_threshold,
                           "worst entry (" + std::to_string(wm) + "," + std::to_string(wn) + ")"));

  double drift = 0.0;
  for (int n = res.interior.lo(); n <= res.interior.hi(); ++n) {
    drift = std::max(drift, std::abs(res.offsets[res.model.window.index(n)].value - res.model.v(n)));
  }
  out.push_back(make_check("eigenvalue_drift", res.steps, drift, 5.0 / 3.0 * kc.eps0,
                           "max interior |d_n - n - v_n|"));
  return out;
}

DiagonalizationResult diagonalize(const LatticeModel& model, const DiagonalizeOptions& opt) {
  DiagonalizationResult res;
  res.model = model;
  res.constants = KamConstants::for_delta(model.delta);
  const KamConstants& kc = res.constants;
  if (opt.active.empty()) {
    for (int n = model.window.lo(); n <= model.window.hi(); ++n) res.active.push_back(n);
  } else {
    res.active = opt.active;
    for (int s : res.active) {
      if (!model.window.contains(s)) {
        fail(Error::Code::invalid_argument, "diagonalize: active site " + std::to_string(s) + " outside window");
      }
    }
  }
  const int margin = opt.edge_margin >= 0 ? opt.edge_margin : model.window.default_margin();
  res.interior = model.window.interior(margin);
  const int np = static_cast<int>(res.active.size());

  SeriesOptions so;
  so.r = kc.r;
  so.alpha = kc.alpha;
  so.tail_tol = opt.series_tol;
  so.mul.prune_tol = opt.prune_tol;

  FirstConjugation fc = first_conjugation(model, res.active, so);
  res.first_u = fc.u;
  res.tail_mass += fc.tail_bound;

  {
    const LatticeOperator v = disorder_operator(model, res.active);
    const auto vn = weighted_norm(v, kc.r, kc.alpha);
    const auto pn = weighted_norm(fc.remainder, kc.r, kc.alpha);
    LatticeOperator umi = fc.u - LatticeOperator::identity(model.window, np);
    push_check(res.checks, make_check("first_transform", 0, weighted_norm(umi, kc.r, kc.alpha).plain, kc.u_bound),
               opt.strict);
    push_check(res.checks, make_check("first_remainder", 0, pn.plain, kc.c_delta * vn.plain), opt.strict);
    push_check(res.checks, make_check("first_remainder_derivative", 0, pn.derivative, kc.c_delta), opt.strict);
  }

  std::vector<DualScalar> f;
  f.reserve(static_cast<std::size_t>(model.window.size()));
  for (int n = model.window.lo(); n <= model.window.hi(); ++n) {
    const int p = active_index(res.active, n);
    f.push_back(DualScalar::variable(model.v(n), static_cast<std::size_t>(np),
                                     p < 0 ? static_cast<std::size_t>(np) : static_cast<std::size_t>(p)));
  }
  LatticeOperator p = std::move(fc.remainder);
  LatticeOperator acc = LatticeOperator::identity(model.window, np);

  int k = 0;
  double pnorm = weighted_norm(p, kc.r, kc.alpha).with_alpha;
  res.step_norms.push_back(pnorm);
  step_checks(res, 0, f, pnorm, res.checks, opt.strict);
  while (true) {
    if (opt.forced_steps >= 0) {
      if (k >= opt.forced_steps) break;
    } else if (pnorm <= opt.target || k >= opt.max_steps) {
      break;
    }
    KamStepResult step = kam_step(f, p, so);
    res.tail_mass += step.tail_bound;
    if (opt.track_transform) {
      LatticeOperator neg = step.generator * -1.0;
      auto e = op_exp(neg, so);
      res.tail_mass += e.tail_bound;
      acc = op_mul(acc, e.op, so.mul);
      res.truncation_mass += acc.dropped_mass();
    }
    res.truncation_mass += step.remainder.dropped_mass();
    f = std::move(step.offsets);
    p = std::move(step.remainder);
    ++k;
    pnorm = weighted_norm(p, kc.r, kc.alpha).with_alpha;
    res.step_norms.push_back(pnorm);
    step_checks(res, k, f, pnorm, res.checks, opt.strict);
  }
  res.steps = k;
  res.offsets = std::move(f);
  if (opt.forced_steps < 0) {
    push_check(res.checks, make_check("target_reached", k, pnorm, opt.target), opt.strict);
  }

  if (opt.track_transform) {
    LatticeOperator ami = acc - LatticeOperator::identity(model.window, np);
    push_check(res.checks,
               make_check("accumulated_transform", k, weighted_norm(ami, kc.r, kc.alpha).with_alpha,
                          130.0 / 9.0 * kc.eps0),
               opt.strict);
    res.transform = op_mul(res.first_u, acc, so.mul);
    res.truncation_mass += res.transform.dropped_mass();
    for (auto& c : check_transform_bounds(res)) push_check(res.checks, std::move(c), opt.strict);
  }
  return res;
}

}  // namespace kamstark
