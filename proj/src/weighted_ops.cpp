#include "kamstark/weighted_ops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace kamstark {

void fail(Error::Code c, const std::string& what) { throw Error(c, what); }

SiteWindow::SiteWindow(int lo, int hi) : lo_(lo), hi_(hi) {
  if (hi < lo) {
    fail(Error::Code::invalid_argument,
         "window: hi (" + std::to_string(hi) + ") is below lo (" + std::to_string(lo) + ")");
  }
}

namespace {

int parse_int_field(std::string_view text, const char* field) {
  int out = 0;
  const char* b = text.data();
  const char* e = text.data() + text.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  if (b == e || ec != std::errc() || ptr != e) {
    fail(Error::Code::invalid_argument,
         std::string("window: field '") + field + "' is not an integer: '" + std::string(text) + "'");
  }
  return out;
}

}  // namespace

SiteWindow SiteWindow::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    fail(Error::Code::invalid_argument, "window: expected 'lo:hi', got '" + std::string(text) + "'");
  }
  const int lo = parse_int_field(text.substr(0, colon), "lo");
  const int hi = parse_int_field(text.substr(colon + 1), "hi");
  return SiteWindow(lo, hi);
}

SiteWindow SiteWindow::interior(int margin) const {
  if (margin < 0 || 2 * margin >= size()) {
    fail(Error::Code::invalid_argument, "window: margin " + std::to_string(margin) + " leaves no interior");
  }
  return SiteWindow(lo_ + margin, hi_ - margin);
}

std::string SiteWindow::to_string() const { return std::to_string(lo_) + ":" + std::to_string(hi_); }

DualScalar DualScalar::variable(double v, std::size_t nparams, std::size_t which) {
  DualScalar d(v, nparams);
  if (which < nparams) d.grad[which] = 1.0;
  return d;
}

double DualScalar::grad_l1() const {
  double s = 0.0;
  for (double g : grad) s += std::abs(g);
  return s;
}

double DualScalar::grad_max_abs() const {
  double s = 0.0;
  for (double g : grad) s = std::max(s, std::abs(g));
  return s;
}

namespace {

void match_grad(std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
}

}  // namespace

DualScalar& DualScalar::operator+=(const DualScalar& o) {
  value += o.value;
  match_grad(grad, o.grad);
  for (std::size_t i = 0; i < o.grad.size(); ++i) grad[i] += o.grad[i];
  return *this;
}

DualScalar& DualScalar::operator-=(const DualScalar& o) {
  value -= o.value;
  match_grad(grad, o.grad);
  for (std::size_t i = 0; i < o.grad.size(); ++i) grad[i] -= o.grad[i];
  return *this;
}

DualScalar& DualScalar::operator*=(double s) {
  value *= s;
  for (double& g : grad) g *= s;
  return *this;
}

DualScalar operator+(DualScalar a, const DualScalar& b) { return a += b; }
DualScalar operator-(DualScalar a, const DualScalar& b) { return a -= b; }
DualScalar operator-(DualScalar a) { return a *= -1.0; }
DualScalar operator*(DualScalar a, double s) { return a *= s; }
DualScalar operator*(double s, DualScalar a) { return a *= s; }
DualScalar operator+(DualScalar a, double s) {
  a.value += s;
  return a;
}
DualScalar operator-(DualScalar a, double s) {
  a.value -= s;
  return a;
}

DualScalar operator*(const DualScalar& a, const DualScalar& b) {
  DualScalar out(a.value * b.value, std::max(a.grad.size(), b.grad.size()));
  for (std::size_t i = 0; i < a.grad.size(); ++i) out.grad[i] += a.grad[i] * b.value;
  for (std::size_t i = 0; i < b.grad.size(); ++i) out.grad[i] += a.value * b.grad[i];
  return out;
}

DualScalar operator/(const DualScalar& a, const DualScalar& b) {
  if (b.value == 0.0) fail(Error::Code::numeric, "dual division by zero");
  const double inv = 1.0 / b.value;
  DualScalar out(a.value * inv, std::max(a.grad.size(), b.grad.size()));
  for (std::size_t i = 0; i < a.grad.size(); ++i) out.grad[i] += a.grad[i] * inv;
  for (std::size_t i = 0; i < b.grad.size(); ++i) out.grad[i] -= a.value * b.grad[i] * inv * inv;
  return out;
}

LatticeOperator::LatticeOperator(SiteWindow w, int nparams, int bandwidth, Symmetry sym)
    : w_(w), np_(nparams), bw_(std::clamp(bandwidth, 0, w.size() - 1)), sym_(sym) {
  if (nparams < 0) fail(Error::Code::invalid_argument, "operator: negative parameter count");
  const std::size_t n = static_cast<std::size_t>(size());
  val_.assign(static_cast<std::size_t>(2 * bw_ + 1) * n, 0.0);
  grad_.assign(static_cast<std::size_t>(2 * bw_ + 1) * n * np_, 0.0);
}

LatticeOperator LatticeOperator::identity(SiteWindow w, int nparams) {
  LatticeOperator id(w, nparams, 0, Symmetry::self_adjoint);
  std::fill(id.val_.begin(), id.val_.end(), 1.0);
  return id;
}

LatticeOperator LatticeOperator::diagonal(SiteWindow w, const std::vector<DualScalar>& entries) {
  if (static_cast<int>(entries.size()) != w.size()) {
    fail(Error::Code::invalid_argument, "operator: diagonal length does not match window");
  }
  const int np = entries.empty() ? 0 : static_cast<int>(entries.front().grad.size());
  LatticeOperator d(w, np, 0, Symmetry::self_adjoint);
  for (int i = 0; i < w.size(); ++i) d.set(w.site(i), w.site(i), entries[i]);
  return d;
}

double LatticeOperator::value(int m, int n) const {
  const int l = m - n;
  if (std::abs(l) > bw_ || !w_.contains(m) || !w_.contains(n)) return 0.0;
  return diag_values(l)[w_.index(m)];
}

double LatticeOperator::grad(int m, int n, int p) const {
  const int l = m - n;
  if (std::abs(l) > bw_ || !w_.contains(m) || !w_.contains(n) || p < 0 || p >= np_) return 0.0;
  return diag_grads(l)[static_cast<std::size_t>(w_.index(m)) * np_ + p];
}

DualScalar LatticeOperator::entry(int m, int n) const {
  DualScalar d(value(m, n), static_cast<std::size_t>(np_));
  for (int p = 0; p < np_; ++p) d.grad[p] = grad(m, n, p);
  return d;
}

void LatticeOperator::set(int m, int n, const DualScalar& v) {
  if (!w_.contains(m) || !w_.contains(n)) {
    fail(Error::Code::invalid_argument,
         "operator: entry (" + std::to_string(m) + "," + std::to_string(n) + ") outside window");
  }
  ensure_bandwidth(std::abs(m - n));
  const int l = m - n;
  const std::size_t i = static_cast<std::size_t>(w_.index(m));
  diag_values(l)[i] = v.value;
  double* g = diag_grads(l) + i * np_;
  for (int p = 0; p < np_; ++p) g[p] = p < static_cast<int>(v.grad.size()) ? v.grad[p] : 0.0;
}

void LatticeOperator::set_value(int m, int n, double v) {
  if (!w_.contains(m) || !w_.contains(n)) {
    fail(Error::Code::invalid_argument,
         "operator: entry (" + std::to_string(m) + "," + std::to_string(n) + ") outside window");
  }
  ensure_bandwidth(std::abs(m - n));
  diag_values(m - n)[w_.index(m)] = v;
}

void LatticeOperator::add_value(int m, int n, double v) { set_value(m, n, value(m, n) + v); }

void LatticeOperator::ensure_bandwidth(int bw) {
  bw = std::min(bw, size() - 1);
  if (bw <= bw_) return;
  const std::size_t n = static_cast<std::size_t>(size());
  std::vector<double> v(static_cast<std::size_t>(2 * bw + 1) * n, 0.0);
  std::vector<double> g(static_cast<std::size_t>(2 * bw + 1) * n * np_, 0.0);
  const std::size_t shift = static_cast<std::size_t>(bw - bw_);
  std::copy(val_.begin(), val_.end(), v.begin() + static_cast<std::ptrdiff_t>(shift * n));
  std::copy(grad_.begin(), grad_.end(), g.begin() + static_cast<std::ptrdiff_t>(shift * n * np_));
  val_ = std::move(v);
  grad_ = std::move(g);
  bw_ = bw;
}

double LatticeOperator::prune(double tol) {
  if (tol <= 0.0) return 0.0;
  const int n = size();
  auto diag_max = [&](int l) {
    double mx = 0.0;
    const double* v = diag_values(l);
    const double* g = diag_grads(l);
    for (int i = 0; i < n; ++i) {
      if (!row_valid(l, i)) continue;
      mx = std::max(mx, std::abs(v[i]));
      for (int p = 0; p < np_; ++p) mx = std::max(mx, std::abs(g[static_cast<std::size_t>(i) * np_ + p]));
    }
    return mx;
  };
  auto diag_mass = [&](int l) {
    double s = 0.0;
    const double* v = diag_values(l);
    for (int i = 0; i < n; ++i)
      if (row_valid(l, i)) s += std::abs(v[i]);
    return s;
  };
  int keep = bw_;
  double dropped = 0.0;
  while (keep > 0 && diag_max(keep) <= tol && diag_max(-keep) <= tol) {
    dropped += diag_mass(keep) + diag_mass(-keep);
    --keep;
  }
  if (keep == bw_) return 0.0;
  LatticeOperator out(w_, np_, keep, sym_);
  for (int l = -keep; l <= keep; ++l) {
    std::copy_n(diag_values(l), n, out.diag_values(l));
    std::copy_n(diag_grads(l), static_cast<std::size_t>(n) * np_, out.diag_grads(l));
  }
  out.dropped_ = dropped_ + dropped;
  *this = std::move(out);
  return dropped;
}

LatticeOperator LatticeOperator::transpose() const {
  LatticeOperator t(w_, np_, bw_, sym_);
  const int n = size();
  for (int l = -bw_; l <= bw_; ++l) {
    const double* v = diag_values(l);
    const double* g = diag_grads(l);
    double* tv = t.diag_values(-l);
    double* tg = t.diag_grads(-l);
    for (int i = 0; i < n; ++i) {
      if (!row_valid(l, i)) continue;
      const int j = i - l;  // entry (i, j) becomes (j, i)
      tv[j] = v[i];
      std::copy_n(g + static_cast<std::size_t>(i) * np_, np_, tg + static_cast<std::size_t>(j) * np_);
    }
  }
  t.dropped_ = dropped_;
  return t;
}

LatticeOperator LatticeOperator::diagonal_part() const {
  LatticeOperator d(w_, np_, 0, sym_ == Symmetry::skew_adjoint ? Symmetry::none : Symmetry::self_adjoint);
  std::copy_n(diag_values(0), size(), d.diag_values(0));
  std::copy_n(diag_grads(0), static_cast<std::size_t>(size()) * np_, d.diag_grads(0));
  return d;
}

LatticeOperator LatticeOperator::off_diagonal_part() const {
  LatticeOperator o = *this;
  std::fill_n(o.diag_values(0), size(), 0.0);
  std::fill_n(o.diag_grads(0), static_cast<std::size_t>(size()) * np_, 0.0);
  return o;
}

double LatticeOperator::symmetry_defect() const {
  if (sym_ == Symmetry::none) return 0.0;
  const double s = sym_ == Symmetry::self_adjoint ? 1.0 : -1.0;
  double worst = 0.0;
  for (int l = -bw_; l <= bw_; ++l) {
    for (int i = 0; i < size(); ++i) {
      if (!row_valid(l, i)) continue;
      const int m = w_.site(i);
      const int n = m - l;
      worst = std::max(worst, std::abs(value(m, n) - s * value(n, m)));
      for (int p = 0; p < np_; ++p) worst = std::max(worst, std::abs(grad(m, n, p) - s * grad(n, m, p)));
    }
  }
  return worst;
}

void LatticeOperator::require_finite() const {
  for (int l = -bw_; l <= bw_; ++l) {
    const double* v = diag_values(l);
    const double* g = diag_grads(l);
    for (int i = 0; i < size(); ++i) {
      if (!row_valid(l, i)) continue;
      bool ok = std::isfinite(v[i]);
      for (int p = 0; p < np_ && ok; ++p) ok = std::isfinite(g[static_cast<std::size_t>(i) * np_ + p]);
      if (!ok) {
        const int m = w_.site(i);
        fail(Error::Code::numeric,
             "operator: non-finite entry at (" + std::to_string(m) + "," + std::to_string(m - l) + ")");
      }
    }
  }
}

namespace {

void require_compatible(const LatticeOperator& a, const LatticeOperator& b, const char* op) {
  if (!(a.window() == b.window()) || a.nparams() != b.nparams()) {
    fail(Error::Code::invalid_argument, std::string(op) + ": window or parameter count mismatch");
  }
}

Symmetry sum_symmetry(Symmetry a, Symmetry b) { return a == b ? a : Symmetry::none; }

}  // namespace

LatticeOperator& LatticeOperator::operator+=(const LatticeOperator& o) {
  require_compatible(*this, o, "add");
  ensure_bandwidth(o.bw_);
  const std::size_t n = static_cast<std::size_t>(size());
  for (int l = -o.bw_; l <= o.bw_; ++l) {
    double* v = diag_values(l);
    const double* ov = o.diag_values(l);
    for (std::size_t i = 0; i < n; ++i) v[i] += ov[i];
    double* g = diag_grads(l);
    const double* og = o.diag_grads(l);
    for (std::size_t i = 0; i < n * np_; ++i) g[i] += og[i];
  }
  sym_ = sum_symmetry(sym_, o.sym_);
  dropped_ += o.dropped_;
  return *this;
}

LatticeOperator& LatticeOperator::operator-=(const LatticeOperator& o) {
  require_compatible(*this, o, "sub");
  ensure_bandwidth(o.bw_);
  const std::size_t n = static_cast<std::size_t>(size());
  for (int l = -o.bw_; l <= o.bw_; ++l) {
    double* v = diag_values(l);
    const double* ov = o.diag_values(l);
    for (std::size_t i = 0; i < n; ++i) v[i] -= ov[i];
    double* g = diag_grads(l);
    const double* og = o.diag_grads(l);
    for (std::size_t i = 0; i < n * np_; ++i) g[i] -= og[i];
  }
  sym_ = sum_symmetry(sym_, o.sym_);
  dropped_ += o.dropped_;
  return *this;
}

LatticeOperator& LatticeOperator::operator*=(double s) {
  for (double& v : val_) v *= s;
  for (double& g : grad_) g *= s;
  return *this;
}

LatticeOperator operator+(LatticeOperator a, const LatticeOperator& b) { return a += b; }
LatticeOperator operator-(LatticeOperator a, const LatticeOperator& b) { return a -= b; }
LatticeOperator operator*(LatticeOperator a, double s) { return a *= s; }

LatticeOperator op_mul(const LatticeOperator& a, const LatticeOperator& b, const MulOptions& opt) {
  require_compatible(a, b, "mul");
  const int n = a.size();
  const int np = a.nparams();
  int bw = std::min(a.bandwidth() + b.bandwidth(), n - 1);
  if (opt.band_cap >= 0) bw = std::min(bw, opt.band_cap);
  LatticeOperator c(a.window(), np, bw);
  double overflow = 0.0;
  for (int la = -a.bandwidth(); la <= a.bandwidth(); ++la) {
    const double* av = a.diag_values(la);
    const double* ag = a.diag_grads(la);
    for (int lb = -b.bandwidth(); lb <= b.bandwidth(); ++lb) {
      const int lc = la + lb;
      if (std::abs(lc) >= n) continue;
      const double* bv = b.diag_values(lb);
      const double* bg = b.diag_grads(lb);
      // row i of C pulls A(i, i-la) * B(i-la, i-lc)
      const int i0 = std::max({0, la, lc});
      const int i1 = std::min({n - 1, n - 1 + la, n - 1 + lc});
      if (std::abs(lc) > bw) {
        for (int i = i0; i <= i1; ++i) overflow += std::abs(av[i] * bv[i - la]);
        continue;
      }
      double* cv = c.diag_values(lc);
      for (int i = i0; i <= i1; ++i) cv[i] += av[i] * bv[i - la];
      if (np == 0) continue;
      double* cg = c.diag_grads(lc);
      for (int i = i0; i <= i1; ++i) {
        const double x = av[i];
        const double y = bv[i - la];
        const double* ga = ag + static_cast<std::size_t>(i) * np;
        const double* gb = bg + static_cast<std::size_t>(i - la) * np;
        double* gc = cg + static_cast<std::size_t>(i) * np;
        if (x != 0.0)
          for (int p = 0; p < np; ++p) gc[p] += x * gb[p];
        if (y != 0.0)
          for (int p = 0; p < np; ++p) gc[p] += ga[p] * y;
      }
    }
  }
  c.add_dropped_mass(overflow);
  if (&a == &b && a.symmetry() == Symmetry::self_adjoint) c.set_symmetry(Symmetry::self_adjoint);
  c.prune(opt.prune_tol);
  return c;
}

LatticeOperator commutator(const LatticeOperator& a, const LatticeOperator& b, const MulOptions& opt) {
  LatticeOperator c = op_mul(a, b, opt);
  c -= op_mul(b, a, opt);
  const bool skew_sa = (a.symmetry() == Symmetry::skew_adjoint && b.symmetry() == Symmetry::self_adjoint) ||
                       (a.symmetry() == Symmetry::self_adjoint && b.symmetry() == Symmetry::skew_adjoint);
  const bool both_skew = a.symmetry() == Symmetry::skew_adjoint && b.symmetry() == Symmetry::skew_adjoint;
  const bool both_sa = a.symmetry() == Symmetry::self_adjoint && b.symmetry() == Symmetry::self_adjoint;
  if (skew_sa) c.set_symmetry(Symmetry::self_adjoint);
  else if (both_skew || both_sa) c.set_symmetry(Symmetry::skew_adjoint);
  else c.set_symmetry(Symmetry::none);
  c.prune(opt.prune_tol);
  return c;
}

WeightedNormValue weighted_norm(const LatticeOperator& a, double r, double alpha) {
  a.require_finite();
  WeightedNormValue out;
  out.r = r;
  out.alpha = alpha;
  const int n = a.size();
  const int np = a.nparams();
  std::vector<double> dsum(static_cast<std::size_t>(np), 0.0);
  std::vector<double> dmax(static_cast<std::size_t>(np), 0.0);
  for (int l = -a.bandwidth(); l <= a.bandwidth(); ++l) {
    const double w = std::exp(r * std::abs(l));
    const double* v = a.diag_values(l);
    const double* g = a.diag_grads(l);
    double vmax = 0.0;
    std::fill(dmax.begin(), dmax.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      if (!a.row_valid(l, i)) continue;
      vmax = std::max(vmax, std::abs(v[i]));
      const double* gi = g + static_cast<std::size_t>(i) * np;
      for (int p = 0; p < np; ++p) dmax[p] = std::max(dmax[p], std::abs(gi[p]));
    }
    out.plain += w * vmax;
    for (int p = 0; p < np; ++p) dsum[p] += w * dmax[p];
  }
  for (double d : dsum) out.derivative = std::max(out.derivative, d);
  out.with_alpha = out.plain + alpha * out.derivative;
  return out;
}

double exp_tail(double x, int n) {
  x = std::abs(x);
  if (x == 0.0) return 0.0;
  // term_j = x^j / j!, summed for j > n until negligible
  double term = 1.0;
  for (int j = 1; j <= n + 1; ++j) term *= x / j;
  double sum = 0.0;
  for (int j = n + 1; j < n + 400; ++j) {
    sum += term;
    if (term < 1e-300 || term < sum * 1e-17) break;
    term *= x / (j + 1);
  }
  return sum;
}

SeriesResult op_exp(const LatticeOperator& w, const SeriesOptions& opt) {
  const double x = weighted_norm(w, opt.r, opt.alpha).with_alpha;
  int order = 0;
  while (exp_tail(x, order) > opt.tail_tol) {
    if (++order > opt.max_terms) {
      fail(Error::Code::numeric, "op_exp: tail does not fall below tolerance within the term limit");
    }
  }
  SeriesResult res{LatticeOperator::identity(w.window(), w.nparams()), exp_tail(x, order), order};
  LatticeOperator term = res.op;
  for (int j = 1; j <= order; ++j) {
    term = op_mul(term, w, opt.mul);
    term *= 1.0 / j;
    res.op += term;
  }
  res.op.set_symmetry(Symmetry::none);
  return res;
}

SeriesResult commutator_series(const LatticeOperator& w, const LatticeOperator& x, const SeriesOptions& opt) {
  const double wn = weighted_norm(w, opt.r, opt.alpha).with_alpha;
  const double xn = weighted_norm(x, opt.r, opt.alpha).with_alpha;
  int order = 0;
  while (exp_tail(2.0 * wn, order) * xn > opt.tail_tol) {
    if (++order > opt.max_terms) {
      fail(Error::Code::numeric, "commutator_series: tail does not fall below tolerance within the term limit");
    }
  }
  SeriesResult res{LatticeOperator(x.window(), x.nparams(), 0, Symmetry::none), exp_tail(2.0 * wn, order) * xn,
                   order};
  LatticeOperator term = x;
  for (int j = 1; j <= order; ++j) {
    term = commutator(w, term, opt.mul);
    term *= 1.0 / j;
    res.op += term;
  }
  if (order > 0) res.op.set_symmetry(term.symmetry());
  return res;
}

}  // namespace kamstark
