#include "kamstark/tf_series.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "kamstark/weighted_ops.hpp"

namespace kamstark {

namespace {

static_assert(sizeof(MultiIndex) == 2 * kMaxAngles + 2 + 4 * kMaxSide, "MultiIndex must be padding free");

template <std::size_t N>
bool insert_sorted(std::array<std::int16_t, N>& arr, std::uint8_t& n, int site) {
  if (n >= N) return false;
  int pos = n;
  while (pos > 0 && arr[pos - 1] > site) {
    arr[pos] = arr[pos - 1];
    --pos;
  }
  arr[pos] = static_cast<std::int16_t>(site);
  ++n;
  return true;
}

template <std::size_t N>
bool erase_one(std::array<std::int16_t, N>& arr, std::uint8_t& n, int site) {
  for (int i = 0; i < n; ++i) {
    if (arr[i] != site) continue;
    for (int j = i; j + 1 < n; ++j) arr[j] = arr[j + 1];
    arr[n - 1] = 0;
    --n;
    return true;
  }
  return false;
}

template <std::size_t N>
int count_of(const std::array<std::int16_t, N>& arr, std::uint8_t n, int site) {
  int c = 0;
  for (int i = 0; i < n; ++i) c += arr[i] == site;
  return c;
}

}  // namespace

int MultiIndex::k_l1() const {
  int s = 0;
  for (auto x : k) s += std::abs(x);
  return s;
}

int MultiIndex::l_total() const {
  int s = 0;
  for (auto x : l) s += x;
  return s;
}

int MultiIndex::alpha_count(int site) const { return count_of(a, na, site); }
int MultiIndex::beta_count(int site) const { return count_of(b, nb, site); }

int MultiIndex::gauge_charge() const {
  int s = 0;
  for (auto x : k) s += x;
  return s + na - nb;
}

std::map<int, int> MultiIndex::alpha_map() const {
  std::map<int, int> m;
  for (int i = 0; i < na; ++i) ++m[a[i]];
  return m;
}

std::map<int, int> MultiIndex::beta_map() const {
  std::map<int, int> m;
  for (int i = 0; i < nb; ++i) ++m[b[i]];
  return m;
}

bool MultiIndex::add_alpha(int site) { return insert_sorted(a, na, site); }
bool MultiIndex::add_beta(int site) { return insert_sorted(b, nb, site); }
bool MultiIndex::remove_alpha(int site) { return erase_one(a, na, site); }
bool MultiIndex::remove_beta(int site) { return erase_one(b, nb, site); }

bool operator==(const MultiIndex& x, const MultiIndex& y) { return std::memcmp(&x, &y, sizeof(MultiIndex)) == 0; }

bool operator<(const MultiIndex& x, const MultiIndex& y) {
  const int dx = x.weight();
  const int dy = y.weight();
  if (dx != dy) return dx < dy;
  if (x.k != y.k) return x.k < y.k;
  if (x.l != y.l) return x.l < y.l;
  if (x.na != y.na) return x.na < y.na;
  if (x.nb != y.nb) return x.nb < y.nb;
  if (x.a != y.a) return x.a < y.a;
  return x.b < y.b;
}

std::size_t MultiIndexHash::operator()(const MultiIndex& m) const noexcept {
  unsigned char bytes[sizeof(MultiIndex)];
  std::memcpy(bytes, &m, sizeof(MultiIndex));
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h);
}

double Coef::norm(int nparams) const {
  double s = std::abs(v);
  for (int p = 0; p < nparams; ++p) s += std::abs(g[p]);
  return s;
}

Coef& Coef::operator+=(const Coef& o) {
  v += o.v;
  for (int p = 0; p < kMaxParams; ++p) g[p] += o.g[p];
  return *this;
}

Coef& Coef::operator-=(const Coef& o) {
  v -= o.v;
  for (int p = 0; p < kMaxParams; ++p) g[p] -= o.g[p];
  return *this;
}

Coef& Coef::operator*=(cplx s) {
  v *= s;
  for (auto& x : g) x *= s;
  return *this;
}

Coef operator*(const Coef& x, const Coef& y) {
  Coef out;
  out.v = x.v * y.v;
  for (int p = 0; p < kMaxParams; ++p) out.g[p] = x.g[p] * y.v + x.v * y.g[p];
  return out;
}

Coef operator*(Coef x, cplx s) { return x *= s; }
Coef operator+(Coef x, const Coef& y) { return x += y; }
Coef operator-(Coef x, const Coef& y) { return x -= y; }

Coef operator/(const Coef& x, const Coef& y) {
  if (y.v == cplx(0.0)) fail(Error::Code::numeric, "coefficient division by zero");
  Coef out;
  out.v = x.v / y.v;
  for (int p = 0; p < kMaxParams; ++p) out.g[p] = (x.g[p] * y.v - x.v * y.g[p]) / (y.v * y.v);
  return out;
}

double SeriesDomain::site_weight(int n) const {
  return std::pow(std::sqrt(1.0 + static_cast<double>(n) * n), d) * std::exp(rho * std::abs(n));
}

TFSeries::TFSeries(int nangles, int nparams) : nangles_(nangles), nparams_(nparams) {
  if (nangles < 0 || nangles > kMaxAngles) fail(Error::Code::invalid_argument, "series: unsupported angle count");
  if (nparams < 0 || nparams > kMaxParams) fail(Error::Code::invalid_argument, "series: unsupported parameter count");
}

void TFSeries::add(const MultiIndex& key, const Coef& c) { terms_[key] += c; }

Coef TFSeries::coefficient(const MultiIndex& key) const {
  const auto it = terms_.find(key);
  return it == terms_.end() ? Coef{} : it->second;
}

std::vector<std::pair<MultiIndex, Coef>> TFSeries::sorted() const {
  std::vector<std::pair<MultiIndex, Coef>> out(terms_.begin(), terms_.end());
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  return out;
}

TFSeries TFSeries::filtered(const std::function<bool(const MultiIndex&)>& keep) const {
  TFSeries out(nangles_, nparams_);
  for (const auto& [k, c] : terms_)
    if (keep(k)) out.terms_.emplace(k, c);
  return out;
}

double TFSeries::prune(double tol) {
  double dropped = 0.0;
  for (auto it = terms_.begin(); it != terms_.end();) {
    const double n = it->second.norm(nparams_);
    if (n <= tol) {
      dropped += n;
      it = terms_.erase(it);
    } else {
      ++it;
    }
  }
  return dropped;
}

TFSeries& TFSeries::operator+=(const TFSeries& o) {
  for (const auto& [k, c] : o.terms_) terms_[k] += c;
  overflow_mass += o.overflow_mass;
  pruned_mass += o.pruned_mass;
  return *this;
}

TFSeries& TFSeries::operator-=(const TFSeries& o) {
  for (const auto& [k, c] : o.terms_) terms_[k] -= c;
  overflow_mass += o.overflow_mass;
  pruned_mass += o.pruned_mass;
  return *this;
}

TFSeries& TFSeries::operator*=(cplx s) {
  for (auto& [k, c] : terms_) c *= s;
  return *this;
}

TFSeries operator+(TFSeries a, const TFSeries& b) { return a += b; }
TFSeries operator-(TFSeries a, const TFSeries& b) { return a -= b; }
TFSeries operator*(TFSeries a, cplx s) { return a *= s; }

namespace {

struct Term {
  MultiIndex key;
  Coef c;
};

std::vector<Term> flatten(const TFSeries& f) {
  std::vector<Term> out;
  out.reserve(f.size());
  for (const auto& [k, c] : f.terms()) out.push_back({k, c});
  // deterministic accumulation order
  std::sort(out.begin(), out.end(), [](const Term& x, const Term& y) { return x.key < y.key; });
  return out;
}

// Merged exponents of x*y; false when a side exceeds capacity.
bool merge_keys(const MultiIndex& x, const MultiIndex& y, MultiIndex& out) {
  out = MultiIndex{};
  for (int j = 0; j < kMaxAngles; ++j) {
    const int k = x.k[j] + y.k[j];
    if (k < -127 || k > 127) return false;
    out.k[j] = static_cast<std::int8_t>(k);
    out.l[j] = static_cast<std::uint8_t>(x.l[j] + y.l[j]);
  }
  if (x.na + y.na > kMaxSide || x.nb + y.nb > kMaxSide) return false;
  std::merge(x.a.begin(), x.a.begin() + x.na, y.a.begin(), y.a.begin() + y.na, out.a.begin());
  std::merge(x.b.begin(), x.b.begin() + x.nb, y.b.begin(), y.b.begin() + y.nb, out.b.begin());
  out.na = static_cast<std::uint8_t>(x.na + y.na);
  out.nb = static_cast<std::uint8_t>(x.nb + y.nb);
  return true;
}

bool within_caps(const MultiIndex& k, const BracketOptions& opt) {
  return k.q_degree() <= opt.max_q_degree && k.l_total() <= opt.max_action_degree;
}

void check_compatible(const TFSeries& f, const TFSeries& g) {
  if (f.nangles() != g.nangles() || f.nparams() != g.nparams()) {
    fail(Error::Code::invalid_argument, "series: angle or parameter count mismatch");
  }
}

std::vector<int> distinct_sites(const std::array<std::int16_t, kMaxSide>& arr, int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (out.empty() || out.back() != arr[i]) out.push_back(arr[i]);
  return out;
}

}  // namespace

TFSeries poisson_bracket(const TFSeries& f, const TFSeries& g, const BracketOptions& opt) {
  check_compatible(f, g);
  TFSeries out(f.nangles(), f.nparams());
  auto ft = flatten(f);
  auto gt = flatten(g);
  if (opt.max_weight >= 0) {
    // w({x,y}) = w(x) + w(y) - 2
    auto min_weight = [](const std::vector<Term>& t) {
      int m = 1 << 20;
      for (const auto& x : t) m = std::min(m, x.key.weight());
      return m;
    };
    const int fmax = opt.max_weight + 2 - min_weight(gt);
    const int gmax = opt.max_weight + 2 - min_weight(ft);
    std::erase_if(ft, [fmax](const Term& x) { return x.key.weight() > fmax; });
    std::erase_if(gt, [gmax](const Term& x) { return x.key.weight() > gmax; });
  }
  const int np = f.nparams();
  const cplx I(0.0, 1.0);

  auto emit = [&](const MultiIndex& key, const Coef& c) {
    const int w = key.weight();
    if (opt.max_weight >= 0 && w > opt.max_weight) return;
    if (!within_caps(key, opt)) {
      out.overflow_mass += c.norm(np);
      return;
    }
    if (w >= 3 && opt.prune_high > 0.0) {
      const double n = c.norm(np);
      if (n < opt.prune_high) {
        out.pruned_mass += n;
        return;
      }
    }
    out.add(key, c);
  };

  // angle/action part
  std::vector<const Term*> fa;
  std::vector<const Term*> ga;
  auto active = [&](const Term& t) {
    for (int j = 0; j < f.nangles(); ++j)
      if (t.key.k[j] != 0 || t.key.l[j] != 0) return true;
    return false;
  };
  for (const auto& t : ft)
    if (active(t)) fa.push_back(&t);
  for (const auto& t : gt)
    if (active(t)) ga.push_back(&t);
  MultiIndex merged;
  for (const Term* x : fa) {
    for (const Term* y : ga) {
      bool have_merge = false;
      Coef prod;
      for (int j = 0; j < f.nangles(); ++j) {
        const int w = x->key.k[j] * y->key.l[j] - x->key.l[j] * y->key.k[j];
        if (w == 0) continue;
        if (!have_merge) {
          if (!merge_keys(x->key, y->key, merged)) {
            out.overflow_mass += (x->c * y->c).norm(np) * std::abs(w);
            continue;
          }
          prod = x->c * y->c;
          have_merge = true;
        }
        MultiIndex key = merged;
        key.l[j] = static_cast<std::uint8_t>(key.l[j] - 1);
        emit(key, prod * (I * static_cast<double>(w)));
      }
    }
  }

  // normal-mode part, pairing q_n in one factor with qbar_n in the other
  std::unordered_map<int, std::vector<const Term*>> g_alpha;
  std::unordered_map<int, std::vector<const Term*>> g_beta;
  for (const auto& t : gt) {
    for (int s : distinct_sites(t.key.a, t.key.na)) g_alpha[s].push_back(&t);
    for (int s : distinct_sites(t.key.b, t.key.nb)) g_beta[s].push_back(&t);
  }
  for (const auto& x : ft) {
    for (int s : distinct_sites(x.key.a, x.key.na)) {
      const auto it = g_beta.find(s);
      if (it == g_beta.end()) continue;
      const int ax = x.key.alpha_count(s);
      MultiIndex xr = x.key;
      xr.remove_alpha(s);
      for (const Term* y : it->second) {
        MultiIndex yr = y->key;
        yr.remove_beta(s);
        if (!merge_keys(xr, yr, merged)) {
          out.overflow_mass += (x.c * y->c).norm(np);
          continue;
        }
        emit(merged, (x.c * y->c) * (I * static_cast<double>(ax * y->key.beta_count(s))));
      }
    }
    for (int s : distinct_sites(x.key.b, x.key.nb)) {
      const auto it = g_alpha.find(s);
      if (it == g_alpha.end()) continue;
      const int bx = x.key.beta_count(s);
      MultiIndex xr = x.key;
      xr.remove_beta(s);
      for (const Term* y : it->second) {
        MultiIndex yr = y->key;
        yr.remove_alpha(s);
        if (!merge_keys(xr, yr, merged)) {
          out.overflow_mass += (x.c * y->c).norm(np);
          continue;
        }
        emit(merged, (x.c * y->c) * (-I * static_cast<double>(bx * y->key.alpha_count(s))));
      }
    }
  }
  return out;
}

TFSeries product(const TFSeries& f, const TFSeries& g, const BracketOptions& opt) {
  check_compatible(f, g);
  TFSeries out(f.nangles(), f.nparams());
  const auto ft = flatten(f);
  const auto gt = flatten(g);
  MultiIndex merged;
  for (const auto& x : ft) {
    for (const auto& y : gt) {
      const Coef c = x.c * y.c;
      if (!merge_keys(x.key, y.key, merged) || !within_caps(merged, opt)) {
        out.overflow_mass += c.norm(f.nparams());
        continue;
      }
      if (opt.max_weight >= 0 && merged.weight() > opt.max_weight) continue;
      out.add(merged, c);
    }
  }
  return out;
}

TFSeries derivative(const TFSeries& f, VarKind kind, int which) {
  TFSeries out(f.nangles(), f.nparams());
  const cplx I(0.0, 1.0);
  for (const auto& t : flatten(f)) {
    MultiIndex key = t.key;
    switch (kind) {
      case VarKind::action:
        if (key.l[which] == 0) continue;
        key.l[which] = static_cast<std::uint8_t>(key.l[which] - 1);
        out.add(key, t.c * static_cast<double>(t.key.l[which]));
        break;
      case VarKind::angle:
        if (key.k[which] == 0) continue;
        out.add(key, t.c * (I * static_cast<double>(key.k[which])));
        break;
      case VarKind::q: {
        const int c = key.alpha_count(which);
        if (c == 0) continue;
        key.remove_alpha(which);
        out.add(key, t.c * static_cast<double>(c));
        break;
      }
      case VarKind::qbar: {
        const int c = key.beta_count(which);
        if (c == 0) continue;
        key.remove_beta(which);
        out.add(key, t.c * static_cast<double>(c));
        break;
      }
    }
  }
  return out;
}

namespace {

// sup of prod x^alpha z^beta over sum_n w_n (x_n + z_n) <= s, x, z >= 0
double normal_sup(const MultiIndex& key, const SeriesDomain& dom) {
  const int deg = key.q_degree();
  if (deg == 0) return 1.0;
  double out = std::pow(dom.s, deg);
  for (const auto& [site, cnt] : key.alpha_map()) {
    out *= std::pow(static_cast<double>(cnt) / (deg * dom.site_weight(site)), cnt);
  }
  for (const auto& [site, cnt] : key.beta_map()) {
    out *= std::pow(static_cast<double>(cnt) / (deg * dom.site_weight(site)), cnt);
  }
  return out;
}

double angle_action_sup(const MultiIndex& key, const SeriesDomain& dom) {
  return std::exp(key.k_l1() * dom.r) * std::pow(dom.s, 2 * key.l_total());
}

}  // namespace

GaugeSplit gauge_filter(const TFSeries& f) {
  GaugeSplit out{TFSeries(f.nangles(), f.nparams()), 0.0};
  for (const auto& [key, c] : f.terms()) {
    if (key.gauge_charge() == 0) {
      out.invariant.add(key, c);
    } else {
      out.removed_mass += c.norm(f.nparams());
    }
  }
  return out;
}

double term_sup(const MultiIndex& key, const SeriesDomain& dom) {
  return angle_action_sup(key, dom) * normal_sup(key, dom);
}

double series_norm(const TFSeries& f, const SeriesDomain& dom) {
  double s = 0.0;
  for (const auto& t : flatten(f)) s += t.c.norm(f.nparams()) * term_sup(t.key, dom);
  return s;
}

VectorFieldNorm vector_field_norm(const TFSeries& f, const SeriesDomain& dom) {
  VectorFieldNorm out;
  for (int j = 0; j < f.nangles(); ++j) {
    out.action += series_norm(derivative(f, VarKind::action, j), dom);
    out.angle += series_norm(derivative(f, VarKind::angle, j), dom);
  }
  out.angle /= dom.s * dom.s;

  // Posynomial sum_n w_n (|dF/dq_n| + |dF/dqbar_n|) grouped by its remaining normal monomial.
  struct Var {
    int site;
    bool bar;
    bool operator<(const Var& o) const { return site != o.site ? site < o.site : bar < o.bar; }
  };
  double constant = 0.0;
  std::map<Var, double> linear;
  double higher = 0.0;
  const int np = f.nparams();
  for (const auto& t : flatten(f)) {
    const double base = t.c.norm(np) * angle_action_sup(t.key, dom);
    auto account = [&](const MultiIndex& rest, double factor) {
      const double c = base * factor;
      if (rest.q_degree() == 0) {
        constant += c;
      } else if (rest.q_degree() == 1) {
        const bool bar = rest.nb == 1;
        linear[Var{bar ? rest.b[0] : rest.a[0], bar}] += c;
      } else {
        higher += c * normal_sup(rest, dom);
      }
    };
    for (const auto& [site, cnt] : t.key.alpha_map()) {
      MultiIndex rest = t.key;
      rest.remove_alpha(site);
      account(rest, cnt * dom.site_weight(site));
    }
    for (const auto& [site, cnt] : t.key.beta_map()) {
      MultiIndex rest = t.key;
      rest.remove_beta(site);
      account(rest, cnt * dom.site_weight(site));
    }
  }
  double lin = 0.0;
  for (const auto& [v, c] : linear) lin = std::max(lin, c * dom.s / dom.site_weight(v.site));
  out.normal = (constant + lin + higher) / dom.s;
  out.total = out.action + out.angle + out.normal;
  return out;
}

namespace {

cplx monomial_value(const MultiIndex& key, const SeriesPoint& x) {
  cplx m(1.0);
  for (std::size_t j = 0; j < x.theta.size(); ++j) {
    if (key.k[j] != 0) m *= std::exp(cplx(0.0, 1.0) * static_cast<double>(key.k[j]) * x.theta[j]);
    for (int p = 0; p < key.l[j]; ++p) m *= x.action[j];
  }
  for (int i = 0; i < key.na; ++i) m *= x.q.at(key.a[i]);
  for (int i = 0; i < key.nb; ++i) m *= x.qbar.at(key.b[i]);
  return m;
}

}  // namespace

cplx evaluate(const TFSeries& f, const SeriesPoint& x) {
  cplx s(0.0);
  for (const auto& t : flatten(f)) s += t.c.v * monomial_value(t.key, x);
  return s;
}

cplx evaluate_gradient(const TFSeries& f, const SeriesPoint& x, int param) {
  cplx s(0.0);
  for (const auto& t : flatten(f)) s += t.c.g[param] * monomial_value(t.key, x);
  return s;
}

namespace {

std::string join_sites(const std::array<std::int16_t, kMaxSide>& arr, int n) {
  if (n == 0) return ".";
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ',';
    out += std::to_string(arr[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& field) {
  std::vector<int> out;
  std::string t;
  std::stringstream ss(field);
  while (std::getline(ss, t, ',')) {
    t.erase(0, t.find_first_not_of(' '));
    t.erase(t.find_last_not_of(' ') + 1);
    if (t.empty() || t == ".") continue;
    out.push_back(std::stoi(t));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_text(const TFSeries& f) {
  std::ostringstream os;
  for (const auto& [key, c] : f.sorted()) {
    for (int j = 0; j < f.nangles(); ++j) os << (j ? "," : "") << static_cast<int>(key.k[j]);
    os << " | ";
    for (int j = 0; j < f.nangles(); ++j) os << (j ? "," : "") << static_cast<int>(key.l[j]);
    os << " | " << join_sites(key.a, key.na) << " | " << join_sites(key.b, key.nb) << " | " << fmt_double(c.v.real())
       << ' ' << fmt_double(c.v.imag()) << " |";
    for (int p = 0; p < f.nparams(); ++p) os << ' ' << fmt_double(c.g[p].real()) << ' ' << fmt_double(c.g[p].imag());
    os << '\n';
  }
  return os.str();
}

TFSeries from_text(const std::string& text, int nangles, int nparams) {
  TFSeries out(nangles, nparams);
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::string part;
    std::stringstream ls(line);
    while (std::getline(ls, part, '|')) fields.push_back(part);
    if (fields.size() != 6) {
      fail(Error::Code::invalid_argument, "series text: line " + std::to_string(lineno) + " needs 6 fields");
    }
    MultiIndex key;
    const auto k = split_ints(fields[0]);
    const auto l = split_ints(fields[1]);
    if (static_cast<int>(k.size()) != nangles || static_cast<int>(l.size()) != nangles) {
      fail(Error::Code::invalid_argument, "series text: line " + std::to_string(lineno) + " has wrong angle count");
    }
    for (int j = 0; j < nangles; ++j) {
      key.k[j] = static_cast<std::int8_t>(k[j]);
      key.l[j] = static_cast<std::uint8_t>(l[j]);
    }
    for (int s : split_ints(fields[2])) key.add_alpha(s);
    for (int s : split_ints(fields[3])) key.add_beta(s);
    Coef c;
    std::stringstream vs(fields[4]);
    double re = 0.0;
    double im = 0.0;
    vs >> re >> im;
    c.v = {re, im};
    std::stringstream gs(fields[5]);
    for (int p = 0; p < nparams; ++p) {
      gs >> re >> im;
      c.g[p] = {re, im};
    }
    out.add(key, c);
  }
  return out;
}

}  // namespace kamstark
