#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "kamstark/weighted_ops.hpp"

namespace kamstark::test {

// Random banded operator; values uniform in [-scale, scale], gradients in [-gscale, gscale].
inline LatticeOperator random_operator(std::mt19937_64& rng, SiteWindow w, int np, int bw, double scale = 1.0,
                                       double gscale = 1.0, Symmetry sym = Symmetry::none) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LatticeOperator a(w, np, bw, sym);
  for (int m = w.lo(); m <= w.hi(); ++m) {
    for (int n = std::max(w.lo(), m - bw); n <= std::min(w.hi(), m + bw); ++n) {
      if (sym != Symmetry::none && n < m) continue;
      DualScalar d(scale * u(rng), static_cast<std::size_t>(np));
      for (auto& g : d.grad) g = gscale * u(rng);
      if (sym == Symmetry::skew_adjoint && m == n) d = DualScalar(0.0, static_cast<std::size_t>(np));
      a.set(m, n, d);
      if (sym == Symmetry::self_adjoint && n != m) a.set(n, m, d);
      if (sym == Symmetry::skew_adjoint && n != m) a.set(n, m, -d);
    }
  }
  return a;
}

// Operator values as a dense row-major matrix; p >= 0 selects the gradient component instead.
inline std::vector<double> dense(const LatticeOperator& a, int p = -1) {
  const SiteWindow& w = a.window();
  const int n = w.size();
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = p < 0 ? a.value(w.site(i), w.site(j)) : a.grad(w.site(i), w.site(j), p);
  return out;
}

inline double max_abs_diff(const std::vector<double>& x, const std::vector<double>& y) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

inline std::vector<double> dense_mul(const std::vector<double>& a, const std::vector<double>& b, int n) {
  std::vector<double> c(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const double x = a[static_cast<std::size_t>(i) * n + k];
      if (x == 0.0) continue;
      for (int j = 0; j < n; ++j) c[static_cast<std::size_t>(i) * n + j] += x * b[static_cast<std::size_t>(k) * n + j];
    }
  return c;
}

}  // namespace kamstark::test
