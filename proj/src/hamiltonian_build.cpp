#include "kamstark/hamiltonian_build.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kamstark {

QuadKey canonical_key(int a, int b, int c, int d) {
  QuadKey k{a, b, c, d};
  std::sort(k.begin(), k.end());
  return k;
}

namespace {

std::uint64_t pack(const QuadKey& k) {
  std::uint64_t out = 0;
  for (int s : k) out = (out << 16) | static_cast<std::uint16_t>(s + 32768);
  return out;
}

}  // namespace

QuarticTensor::QuarticTensor(SiteWindow sites, std::vector<int> grad_sites)
    : sites_(sites), grad_sites_(std::move(grad_sites)) {}

double QuarticTensor::value(int a, int b, int c, int d) const {
  const auto it = index_.find(pack(canonical_key(a, b, c, d)));
  return it == index_.end() ? 0.0 : values_[it->second];
}

DualScalar QuarticTensor::entry(int a, int b, int c, int d) const {
  DualScalar out(0.0, static_cast<std::size_t>(nparams()));
  const auto it = index_.find(pack(canonical_key(a, b, c, d)));
  if (it == index_.end()) return out;
  out.value = values_[it->second];
  std::copy_n(grad(it->second), nparams(), out.grad.begin());
  return out;
}

void QuarticTensor::add(const QuadKey& key, double value, const double* g) {
  const auto [it, inserted] = index_.try_emplace(pack(key), keys_.size());
  if (inserted) {
    keys_.push_back(key);
    values_.push_back(0.0);
    grads_.resize(grads_.size() + static_cast<std::size_t>(nparams()), 0.0);
  }
  values_[it->second] += value;
  double* dst = grads_.data() + it->second * nparams();
  if (g != nullptr)
    for (int p = 0; p < nparams(); ++p) dst[p] += g[p];
}

double QuarticTensor::prune(double tol) {
  std::vector<QuadKey> keys;
  std::vector<double> values;
  std::vector<double> grads;
  double dropped = 0.0;
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    double mx = std::abs(values_[i]);
    for (int p = 0; p < nparams(); ++p) mx = std::max(mx, std::abs(grad(i)[p]));
    if (mx <= tol) {
      dropped += std::abs(values_[i]);
      continue;
    }
    keys.push_back(keys_[i]);
    values.push_back(values_[i]);
    grads.insert(grads.end(), grad(i), grad(i) + nparams());
  }
  keys_ = std::move(keys);
  values_ = std::move(values);
  grads_ = std::move(grads);
  dropped_ += dropped;
  sort_keys();
  return dropped;
}

void QuarticTensor::sort_keys() {
  std::vector<std::size_t> order(keys_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys_[a] < keys_[b]; });
  std::vector<QuadKey> keys;
  std::vector<double> values;
  std::vector<double> grads;
  keys.reserve(order.size());
  values.reserve(order.size());
  grads.reserve(grads_.size());
  index_.clear();
  for (std::size_t i : order) {
    index_.emplace(pack(keys_[i]), keys.size());
    keys.push_back(keys_[i]);
    values.push_back(values_[i]);
    grads.insert(grads.end(), grad(i), grad(i) + nparams());
  }
  keys_ = std::move(keys);
  values_ = std::move(values);
  grads_ = std::move(grads);
}

double QuarticTensor::kept_mass() const {
  double s = 0.0;
  for (double v : values_) s += std::abs(v);
  return s;
}

QuarticTensor build_quartic_tensor(const DiagonalizationResult& res, const TensorOptions& opt) {
  const SiteWindow sites = opt.use_interior ? res.interior : opt.sites;
  for (int n : {sites.lo(), sites.hi()}) {
    if (!res.model.window.contains(n)) fail(Error::Code::invalid_argument, "tensor: site range outside window");
  }
  std::vector<int> pidx;
  for (int s : opt.grad_sites) {
    const int p = res.param_index(s);
    if (p < 0) {
      fail(Error::Code::invalid_argument,
           "tensor: gradient site " + std::to_string(s) + " was not an active parameter of the diagonalization");
    }
    pidx.push_back(p);
  }
  QuarticTensor t(sites, opt.grad_sites);
  const int np = static_cast<int>(pidx.size());
  const LatticeOperator& g = res.transform;
  const SiteWindow& w = res.model.window;

  struct Slot {
    int site;
    double value;
    std::vector<double> grad;
  };
  std::vector<Slot> support;
  std::vector<double> acc(static_cast<std::size_t>(np));
  for (int k = w.lo(); k <= w.hi(); ++k) {
    support.clear();
    for (int m = std::max(sites.lo(), k - g.bandwidth()); m <= std::min(sites.hi(), k + g.bandwidth()); ++m) {
      const double v = g.value(k, m);
      if (v == 0.0) continue;
      Slot s{m, v, std::vector<double>(static_cast<std::size_t>(np))};
      for (int p = 0; p < np; ++p) s.grad[p] = g.grad(k, m, pidx[p]);
      support.push_back(std::move(s));
    }
    const std::size_t ns = support.size();
    for (std::size_t a = 0; a < ns; ++a) {
      for (std::size_t b = a; b < ns; ++b) {
        const double vab = support[a].value * support[b].value;
        for (std::size_t c = b; c < ns; ++c) {
          const double vabc = vab * support[c].value;
          for (std::size_t d = c; d < ns; ++d) {
            const Slot* sl[4] = {&support[a], &support[b], &support[c], &support[d]};
            const double val = 0.5 * vabc * sl[3]->value;
            for (int p = 0; p < np; ++p) {
              double gsum = 0.0;
              for (int f = 0; f < 4; ++f) {
                double prod = sl[f]->grad[p];
                for (int o = 0; o < 4; ++o)
                  if (o != f) prod *= sl[o]->value;
                gsum += prod;
              }
              acc[p] = 0.5 * gsum;
            }
            t.add(QuadKey{sl[0]->site, sl[1]->site, sl[2]->site, sl[3]->site}, val, acc.data());
          }
        }
      }
    }
  }
  t.prune(opt.prune_tol);
  return t;
}

BoundCheck check_tensor_decay(const QuarticTensor& t) {
  BoundCheck c{"tensor_decay", -1, 0.0, 24.0, true, ""};
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const QuadKey& k = t.key(i);
    const double bound = 24.0 * std::exp(-(k[3] - k[0]) / 8.0);
    const double ratio = std::abs(t.value(i)) / bound;
    if (ratio > worst) {
      worst = ratio;
      c.measured = std::abs(t.value(i));
      c.threshold = bound;
      c.detail = "worst key (" + std::to_string(k[0]) + "," + std::to_string(k[1]) + "," + std::to_string(k[2]) +
                 "," + std::to_string(k[3]) + ")";
    }
  }
  c.pass = worst <= 1.0;
  return c;
}

BoundCheck check_tensor_grad_decay(const QuarticTensor& t) {
  BoundCheck c{"tensor_grad_decay", -1, 0.0, 24.0, true, ""};
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const QuadKey& k = t.key(i);
    double g = 0.0;
    for (int p = 0; p < t.nparams(); ++p) g = std::max(g, std::abs(t.grad(i)[p]));
    const double bound = 24.0 * std::exp(-(k[3] - k[0]) / 8.0);
    const double ratio = 0.1 * g / bound;
    if (ratio > worst) {
      worst = ratio;
      c.measured = 0.1 * g;
      c.threshold = bound;
      c.detail = "worst key (" + std::to_string(k[0]) + "," + std::to_string(k[1]) + "," + std::to_string(k[2]) +
                 "," + std::to_string(k[3]) + ")";
    }
  }
  c.pass = worst <= 1.0;
  return c;
}

NonlinearHamiltonian build_hamiltonian(const DiagonalizationResult& res, double eps, const TensorOptions& opt) {
  if (!std::isfinite(eps) || eps < 0.0) fail(Error::Code::invalid_argument, "hamiltonian: eps must be >= 0");
  NonlinearHamiltonian h;
  h.model = res.model;
  h.eps = eps;
  h.tensor = build_quartic_tensor(res, opt);
  h.sites = h.tensor.sites();
  h.grad_sites = opt.grad_sites;
  for (int n = h.sites.lo(); n <= h.sites.hi(); ++n) {
    const DualScalar d = res.eigenvalue(n);
    DualScalar f(d.value, h.grad_sites.size());
    for (std::size_t p = 0; p < h.grad_sites.size(); ++p) f.grad[p] = d.grad[res.param_index(h.grad_sites[p])];
    h.frequencies.push_back(std::move(f));
  }
  h.checks.push_back(check_tensor_decay(h.tensor));
  h.checks.push_back(check_tensor_grad_decay(h.tensor));
  const double kept = h.tensor.kept_mass();
  h.checks.push_back(BoundCheck{"tensor_truncation", -1, h.tensor.dropped_mass(), 1e-10 * kept,
                                h.tensor.dropped_mass() <= 1e-10 * kept, "dropped L1 mass vs 1e-10 kept"});
  return h;
}

namespace {

template <class F>
void for_each_ordering(const QuadKey& key, F&& f) {
  QuadKey perm = key;
  do {
    f(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

}  // namespace

double hamiltonian_energy(const NonlinearHamiltonian& h, const std::vector<cplx>& q) {
  const SiteWindow& s = h.sites;
  double e = 0.0;
  for (int n = s.lo(); n <= s.hi(); ++n) e += h.frequency(n).value * std::norm(q[s.index(n)]);
  cplx quartic = 0.0;
  for (std::size_t i = 0; i < h.tensor.size(); ++i) {
    const double g = h.tensor.value(i);
    for_each_ordering(h.tensor.key(i), [&](const QuadKey& p) {
      quartic += g * q[s.index(p[1])] * std::conj(q[s.index(p[2])]) * q[s.index(p[3])] * std::conj(q[s.index(p[0])]);
    });
  }
  return e + h.eps * quartic.real();
}

std::vector<cplx> hamiltonian_vector_field(const NonlinearHamiltonian& h, const std::vector<cplx>& q) {
  const SiteWindow& s = h.sites;
  std::vector<cplx> grad(q.size(), 0.0);
  for (std::size_t i = 0; i < h.tensor.size(); ++i) {
    const double g = h.tensor.value(i);
    for_each_ordering(h.tensor.key(i), [&](const QuadKey& p) {
      grad[s.index(p[0])] += 2.0 * g * q[s.index(p[1])] * std::conj(q[s.index(p[2])]) * q[s.index(p[3])];
    });
  }
  std::vector<cplx> out(q.size());
  const cplx I(0.0, 1.0);
  for (int n = s.lo(); n <= s.hi(); ++n) {
    const std::size_t i = static_cast<std::size_t>(s.index(n));
    out[i] = I * (h.frequency(n).value * q[i] + h.eps * grad[i]);
  }
  return out;
}

}  // namespace kamstark
