#include <doctest.h>

#include <cmath>
#include <random>

#include "kamstark/linear_kam.hpp"
#include "support.hpp"

using namespace kamstark;
using kamstark::test::dense;
using kamstark::test::dense_mul;
using kamstark::test::max_abs_diff;
using kamstark::test::random_operator;

namespace {

// Direct evaluation of sum_l e^{r|l|} max_{m-n=l} |A_mn| over the dense matrix.
double brute_norm(const std::vector<double>& a, int n, double r) {
  double s = 0.0;
  for (int l = -(n - 1); l <= n - 1; ++l) {
    double mx = 0.0;
    for (int i = 0; i < n; ++i) {
      const int j = i - l;
      if (j >= 0 && j < n) mx = std::max(mx, std::abs(a[static_cast<std::size_t>(i) * n + j]));
    }
    s += std::exp(r * std::abs(l)) * mx;
  }
  return s;
}

LatticeOperator identity_like(SiteWindow w, int np) { return LatticeOperator::identity(w, np); }

}  // namespace

TEST_CASE("site window parsing names the field") {
  CHECK(SiteWindow::parse("-3:5") == SiteWindow(-3, 5));
  try {
    SiteWindow::parse("3-5");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("window") != std::string::npos);
  }
  CHECK_THROWS_AS(SiteWindow::parse("a:5"), Error);
  CHECK_THROWS_AS(SiteWindow(5, 3), Error);
}

TEST_CASE("norm of the hopping operator is 2 e^{1/8}") {
  const LatticeOperator d = hopping_operator(SiteWindow(-16, 16), 0);
  CHECK(weighted_norm(d, 0.125, 0.1).plain == doctest::Approx(2.0 * std::exp(0.125)).epsilon(1e-14));
  CHECK(weighted_norm(d, 0.125, 0.1).plain == doctest::Approx(2.26630).epsilon(1e-5));
}

TEST_CASE("identity has unit norm with and without derivatives") {
  const auto n = weighted_norm(identity_like(SiteWindow(-5, 5), 3), 0.7, 0.1);
  CHECK(n.plain == 1.0);
  CHECK(n.with_alpha == 1.0);
}

TEST_CASE("banded norm equals a dense double loop") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const LatticeOperator a = random_operator(rng, SiteWindow(-16, 16), 3, 7);
    const int n = a.size();
    const auto v = weighted_norm(a, 0.125, 0.1);
    CHECK(v.plain == doctest::Approx(brute_norm(dense(a), n, 0.125)).epsilon(1e-13));
    double dmax = 0.0;
    for (int p = 0; p < 3; ++p) dmax = std::max(dmax, brute_norm(dense(a, p), n, 0.125));
    CHECK(v.derivative == doctest::Approx(dmax).epsilon(1e-13));
    CHECK(v.with_alpha >= v.plain);
  }
}

TEST_CASE("non-finite entries are rejected with their position") {
  LatticeOperator a(SiteWindow(-2, 2), 0, 1);
  a.set_value(1, 0, std::nan(""));
  try {
    weighted_norm(a, 0.125, 0.1);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("(1,0)") != std::string::npos);
  }
}

TEST_CASE("norm is absolutely homogeneous") {
  std::mt19937_64 rng(3);
  const LatticeOperator a = random_operator(rng, SiteWindow(-10, 10), 2, 4);
  const double base = weighted_norm(a, 0.125, 0.1).with_alpha;
  CHECK(weighted_norm(a * -2.5, 0.125, 0.1).with_alpha == doctest::Approx(2.5 * base).epsilon(1e-12));
}

TEST_CASE("products: identity, dense agreement and submultiplicativity") {
  std::mt19937_64 rng(5);
  const SiteWindow w(-12, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const LatticeOperator a = random_operator(rng, w, 2, 1 + trial % 4);
    const LatticeOperator b = random_operator(rng, w, 2, 1 + (trial / 4) % 4);
    const LatticeOperator ab = op_mul(a, b);
    const auto na = weighted_norm(a, 0.125, 0.1);
    const auto nb = weighted_norm(b, 0.125, 0.1);
    const auto nab = weighted_norm(ab, 0.125, 0.1);
    CHECK(nab.plain <= na.plain * nb.plain * (1.0 + 1e-14));
    CHECK(nab.with_alpha <= na.with_alpha * nb.with_alpha * (1.0 + 1e-14));
    if (trial < 10) {
      CHECK(max_abs_diff(dense(ab), dense_mul(dense(a), dense(b), w.size())) < 1e-13);
      CHECK(max_abs_diff(dense(op_mul(a, identity_like(w, 2))), dense(a)) == 0.0);
    }
  }
}

TEST_CASE("product gradients match central differences") {
  std::mt19937_64 rng(8);
  const SiteWindow w(-8, 8);
  const LatticeOperator a = random_operator(rng, w, 1, 2);
  const LatticeOperator b = random_operator(rng, w, 1, 3);
  const int n = w.size();
  // A(v) = A0 + v dA, B(v) = B0 + v dB
  auto at = [&](const LatticeOperator& x, double v) {
    auto d = dense(x);
    const auto g = dense(x, 0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += v * g[i];
    return d;
  };
  const double h = 1e-6;
  const auto plus = dense_mul(at(a, h), at(b, h), n);
  const auto minus = dense_mul(at(a, -h), at(b, -h), n);
  const auto grad = dense(op_mul(a, b), 0);
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double fd = (plus[i] - minus[i]) / (2.0 * h);
    if (std::abs(grad[i]) > 1e-3) worst = std::max(worst, std::abs(fd - grad[i]) / std::abs(grad[i]));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("exponential of zero is the identity") {
  const LatticeOperator z(SiteWindow(-4, 4), 1, 2);
  const SeriesResult e = op_exp(z);
  CHECK(max_abs_diff(dense(e.op), dense(identity_like(SiteWindow(-4, 4), 1))) == 0.0);
}

TEST_CASE("exponential of skew-adjoint operators is unitary and norm bounded") {
  std::mt19937_64 rng(21);
  const SiteWindow w(-12, 12);
  for (int trial = 0; trial < 5; ++trial) {
    const LatticeOperator wgen = random_operator(rng, w, 1, 2, 0.05, 0.05, Symmetry::skew_adjoint);
    SeriesOptions opt;
    const SeriesResult e = op_exp(wgen, opt);
    const SeriesResult einv = op_exp(wgen * -1.0, opt);
    const auto prod = dense_mul(dense(e.op), dense(einv.op), w.size());
    CHECK(max_abs_diff(prod, dense(identity_like(w, 1))) <= 1e-10);
    const auto ut = dense(e.op.transpose());
    CHECK(max_abs_diff(dense_mul(dense(e.op), ut, w.size()), dense(identity_like(w, 1))) <= 1e-10);
    CHECK(weighted_norm(e.op, 0.125, 0.1).plain <= std::exp(weighted_norm(wgen, 0.125, 0.1).plain) * (1.0 + 1e-12));
  }
}

TEST_CASE("commutator series vanishes for commuting operators") {
  const SiteWindow w(-10, 10);
  std::vector<DualScalar> d1, d2;
  for (int n = w.lo(); n <= w.hi(); ++n) {
    d1.emplace_back(0.3 * n, 1);
    d2.emplace_back(std::sin(n), 1);
  }
  const SeriesResult diag = commutator_series(LatticeOperator::diagonal(w, d1), LatticeOperator::diagonal(w, d2));
  CHECK(weighted_norm(diag.op, 0.125, 0.1).with_alpha == 0.0);

  // constant diagonals commute away from the truncation edges, which the series reaches one site per order
  const SiteWindow wide(-40, 40);
  const LatticeOperator t1 = hopping_operator(wide, 0) * 0.1;
  LatticeOperator t2(wide, 0, 2);
  for (int m = wide.lo(); m <= wide.hi(); ++m) {
    if (wide.contains(m + 2)) t2.set_value(m, m + 2, 0.05);
    if (wide.contains(m - 2)) t2.set_value(m, m - 2, 0.05);
  }
  const SeriesResult toe = commutator_series(t1, t2);
  double interior = 0.0;
  for (int m = -4; m <= 4; ++m)
    for (int n = -4; n <= 4; ++n) interior = std::max(interior, std::abs(toe.op.value(m, n)));
  CHECK(interior <= 1e-15);
}

TEST_CASE("commutator series equals the conjugation e^W X e^-W - X") {
  std::mt19937_64 rng(33);
  const SiteWindow w(-12, 12);
  const LatticeOperator wgen = random_operator(rng, w, 1, 1, 0.05, 0.05, Symmetry::skew_adjoint);
  const LatticeOperator x = random_operator(rng, w, 1, 2, 0.1, 0.1, Symmetry::self_adjoint);
  const SeriesResult s = commutator_series(wgen, x);
  const auto e = dense(op_exp(wgen).op);
  const auto einv = dense(op_exp(wgen * -1.0).op);
  auto conj = dense_mul(dense_mul(e, dense(x), w.size()), einv, w.size());
  const auto xd = dense(x);
  for (std::size_t i = 0; i < conj.size(); ++i) conj[i] -= xd[i];
  CHECK(max_abs_diff(conj, dense(s.op)) <= 1e-14 + s.tail_bound);
}

TEST_CASE("self-adjoint squares stay self-adjoint") {
  std::mt19937_64 rng(2);
  const LatticeOperator a = random_operator(rng, SiteWindow(-9, 9), 1, 3, 1.0, 1.0, Symmetry::self_adjoint);
  const LatticeOperator aa = op_mul(a, a);
  CHECK(max_abs_diff(dense(aa), dense(aa.transpose())) <= 1e-14);
}

TEST_CASE("exp tail matches the series remainder") {
  double direct = 0.0, term = 1.0;
  for (int j = 1; j < 60; ++j) {
    term *= 0.7 / j;
    if (j > 5) direct += term;
  }
  CHECK(exp_tail(0.7, 5) == doctest::Approx(direct).epsilon(1e-13));
}
