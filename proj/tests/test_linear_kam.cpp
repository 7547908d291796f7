#include <doctest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

#include "kamstark/linear_kam.hpp"
#include "support.hpp"

using namespace kamstark;

namespace {

Eigen::MatrixXd to_eigen(const LatticeOperator& a, int p = -1) {
  const int n = a.size();
  Eigen::MatrixXd m(n, n);
  const SiteWindow& w = a.window();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = p < 0 ? a.value(w.site(i), w.site(j)) : a.grad(w.site(i), w.site(j), p);
  return m;
}

// Truncated L = diag(n + v_n) + delta * hopping.
Eigen::MatrixXd lattice_matrix(const LatticeModel& m, bool with_disorder = true) {
  const int n = m.window.size();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    l(i, i) = m.window.site(i) + (with_disorder ? m.disorder[static_cast<std::size_t>(i)] : 0.0);
    if (i + 1 < n) l(i, i + 1) = l(i + 1, i) = m.delta;
  }
  return l;
}

std::vector<DualScalar> ramp_offsets(SiteWindow w, int np) {
  std::vector<DualScalar> f;
  for (int n = w.lo(); n <= w.hi(); ++n) f.emplace_back(0.03 * std::sin(n), static_cast<std::size_t>(np));
  return f;
}

Eigen::MatrixXd diag_of(const std::vector<DualScalar>& f, SiteWindow w) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(w.size(), w.size());
  for (int i = 0; i < w.size(); ++i) d(i, i) = w.site(i) + f[static_cast<std::size_t>(i)].value;
  return d;
}

}  // namespace

TEST_CASE("disorder draws are reproducible per site") {
  const LatticeModel a = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 1);
  const LatticeModel b = LatticeModel::sample(SiteWindow(-8, 40), 1.0 / 60.0, 1);
  CHECK(a.v(0) == b.v(0));
  CHECK(a.v(0) == doctest::Approx(0.051687526765033).epsilon(1e-14));
  for (double v : a.disorder) CHECK(std::abs(v) <= 0.1);
}

TEST_CASE("constants follow the closed forms") {
  const KamConstants k = KamConstants::for_delta(1.0 / 60.0);
  const double er = std::exp(0.125);
  CHECK(k.hopping_norm == doctest::Approx(2.0 * er));
  CHECK(k.c_delta == doctest::Approx(4.0 / 60.0 * er * std::exp(4.0 / 60.0 * er)));
  CHECK(k.eps0 == doctest::Approx(2.0 * k.c_delta * 0.1));
  CHECK(k.step_bound(2) == doctest::Approx(std::pow(k.eps0, 1.5625)));
}

TEST_CASE("first conjugation generator has the hopping band structure") {
  const LatticeOperator w = hopping_generator(SiteWindow(-5, 5), 0);
  for (int m = -5; m < 5; ++m) {
    CHECK(w.value(m, m + 1) == -1.0);
    CHECK(w.value(m + 1, m) == 1.0);
  }
  CHECK(w.bandwidth() == 1);
  CHECK(w.value(0, 0) == 0.0);
}

TEST_CASE("first conjugation removes the hopping from D + delta Delta on the interior") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 1);
  SeriesOptions so;
  so.tail_tol = 1e-20;
  const FirstConjugation fc = first_conjugation(m, {}, so);
  const Eigen::MatrixXd u = to_eigen(fc.u);
  const Eigen::MatrixXd l0 = lattice_matrix(m, false);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(65, 65);
  for (int i = 0; i < 65; ++i) d(i, i) = i - 32;
  const Eigen::MatrixXd conj = u.transpose() * l0 * u - d;
  CHECK(conj.block(8, 8, 49, 49).cwiseAbs().maxCoeff() <= 1e-8);
  const KamConstants k = KamConstants::for_delta(m.delta);
  const LatticeOperator umi = fc.u - LatticeOperator::identity(m.window, 0);
  CHECK(weighted_norm(umi, 0.125, 0.1).plain <= k.u_bound);
}

TEST_CASE("zero hopping leaves D + V untouched") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-16, 16), 0.0, 4);
  SeriesOptions so;
  const FirstConjugation fc = first_conjugation(m, {}, so);
  CHECK((to_eigen(fc.u) - Eigen::MatrixXd::Identity(33, 33)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(weighted_norm(fc.remainder, 0.125, 0.1).with_alpha == 0.0);

  const DiagonalizationResult r = diagonalize(m);
  CHECK(r.steps == 0);
  for (int n = -16; n <= 16; ++n) CHECK(r.eigenvalue(n).value == n + m.v(n));
  CHECK((to_eigen(r.transform) - Eigen::MatrixXd::Identity(33, 33)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("homological solve: diagonal input, lone entry, residual and symmetry") {
  const SiteWindow w(-10, 10);
  const auto f = ramp_offsets(w, 1);

  LatticeOperator diag(w, 1, 0);
  for (int n = -10; n <= 10; ++n) diag.set_value(n, n, 0.01 * n);
  CHECK(weighted_norm(solve_linear_homological(f, diag), 0.125, 0.1).with_alpha == 0.0);

  LatticeOperator lone(w, 1, 1);
  lone.set_value(0, 1, 0.004);
  const LatticeOperator wl = solve_linear_homological(f, lone);
  const double d0 = 0.0 + f[static_cast<std::size_t>(w.index(0))].value;
  const double d1 = 1.0 + f[static_cast<std::size_t>(w.index(1))].value;
  CHECK(wl.value(0, 1) == doctest::Approx(0.004 / (d0 - d1)).epsilon(1e-15));
  double others = 0.0;
  for (int m = -10; m <= 10; ++m)
    for (int n = -10; n <= 10; ++n)
      if (!(m == 0 && n == 1)) others = std::max(others, std::abs(wl.value(m, n)));
  CHECK(others == 0.0);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const LatticeOperator p = test::random_operator(rng, w, 1, 3, 1e-3, 1e-3, Symmetry::self_adjoint);
    const LatticeOperator sol = solve_linear_homological(f, p);
    const Eigen::MatrixXd W = to_eigen(sol), P = to_eigen(p), D = diag_of(f, w);
    const Eigen::MatrixXd res = W * D - D * W + P - Eigen::MatrixXd(P.diagonal().asDiagonal());
    CHECK(res.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((W + W.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(weighted_norm(sol, 0.125, 0.1).with_alpha <= 39.0 / 8.0 * weighted_norm(p, 0.125, 0.1).with_alpha);
  }
}

TEST_CASE("homological solve rejects unseparated spectra") {
  const SiteWindow w(-3, 3);
  std::vector<DualScalar> f = ramp_offsets(w, 0);
  f[static_cast<std::size_t>(w.index(1))] = DualScalar(-1.0, 0);  // d_1 = d_0
  LatticeOperator p(w, 0, 1);
  p.set_value(0, 1, 1e-3);
  try {
    solve_linear_homological(f, p);
    FAIL("expected a separation failure");
  } catch (const Error& e) {
    const std::string what = e.what();
    CHECK(what.find("separation") != std::string::npos);
  }
}

TEST_CASE("one KAM step: trivial input, quadratic contraction and conjugation oracle") {
  const SiteWindow w(-20, 20);
  const auto f = ramp_offsets(w, 1);
  SeriesOptions so;
  so.tail_tol = 1e-20;

  const KamStepResult zero = kam_step(f, LatticeOperator(w, 1, 1), so);
  CHECK(weighted_norm(zero.remainder, 0.125, 0.1).with_alpha == 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(zero.offsets[i].value == f[i].value);

  std::mt19937_64 rng(4);
  LatticeOperator p = test::random_operator(rng, w, 1, 2, 1.0, 1.0, Symmetry::self_adjoint);
  p *= 1e-3 / weighted_norm(p, 0.125, 0.1).with_alpha;
  const double pn = weighted_norm(p, 0.125, 0.1).with_alpha;
  const KamStepResult st = kam_step(f, p, so);
  const double bound = 117.0 / 8.0 * pn * pn * std::exp(78.0 / 8.0 * pn);
  CHECK(weighted_norm(st.remainder, 0.125, 0.1).with_alpha <= bound);

  const Eigen::MatrixXd W = to_eigen(st.generator);
  const Eigen::MatrixXd e = W.exp();
  const Eigen::MatrixXd lhs = e * (diag_of(f, w) + to_eigen(p)) * e.inverse();
  const Eigen::MatrixXd rhs = diag_of(st.offsets, w) + to_eigen(st.remainder);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-13 + st.tail_bound);
}

TEST_CASE("diagonalization agrees with a dense eigensolver") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 1);
  const DiagonalizationResult r = diagonalize(m);
  CHECK(r.all_pass());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lattice_matrix(m));
  const Eigen::VectorXd ev = es.eigenvalues();
  for (int n = r.interior.lo(); n <= r.interior.hi(); ++n) {
    // pairing by continuity: the eigenvalue nearest to the unperturbed level n + v_n
    Eigen::Index k = 0;
    (ev.array() - (n + m.v(n))).abs().minCoeff(&k);
    CHECK(std::abs(ev(k) - r.eigenvalue(n).value) <= std::max(1e-8, 2e-12));
    // localization centre of the dense eigenvector sits at the site label
    Eigen::Index c = 0;
    es.eigenvectors().col(k).cwiseAbs().maxCoeff(&c);
    CHECK(m.window.site(static_cast<int>(c)) == n);
  }
  // frozen dense-oracle values
  CHECK(r.eigenvalue(0).value == doctest::Approx(0.051643374750524).epsilon(1e-12));
  CHECK(r.eigenvalue(5).value == doctest::Approx(5.011465121922110).epsilon(1e-12));
}

TEST_CASE("diagonalization: unitarity, contraction schedule, drift and transform decay") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 2);
  const DiagonalizationResult r = diagonalize(m);
  const KamConstants& k = r.constants;
  const Eigen::MatrixXd g = to_eigen(r.transform);
  const int lo = m.window.index(r.interior.lo());
  const int sz = r.interior.size();
  CHECK((g * g.transpose() - Eigen::MatrixXd::Identity(65, 65)).block(lo, lo, sz, sz).cwiseAbs().maxCoeff() <= 1e-9);
  const Eigen::MatrixXd diag = g.transpose() * lattice_matrix(m) * g;
  for (int n = r.interior.lo(); n <= r.interior.hi(); ++n) {
    const int i = m.window.index(n);
    CHECK(diag(i, i) == doctest::Approx(r.eigenvalue(n).value).epsilon(1e-12));
  }

  for (std::size_t i = 0; i + 1 < r.step_norms.size(); ++i) CHECK(r.step_norms[i + 1] < r.step_norms[i]);
  for (std::size_t i = 0; i < r.step_norms.size(); ++i) CHECK(r.step_norms[i] <= k.step_bound(static_cast<int>(i)));
  CHECK(r.step_norms.back() <= 1e-12);

  for (int n = r.interior.lo(); n <= r.interior.hi(); ++n) {
    CHECK(std::abs(r.eigenvalue(n).value - n - m.v(n)) <= 5.0 / 3.0 * k.eps0);
  }

  const int np = static_cast<int>(r.active.size());
  double worst = 0.0;
  for (int a = r.interior.lo(); a <= r.interior.hi(); ++a) {
    for (int b = r.interior.lo(); b <= r.interior.hi(); ++b) {
      double gmax = 0.0;
      for (int p = 0; p < np; ++p) gmax = std::max(gmax, std::abs(r.transform.grad(a, b, p)));
      const double entry = std::abs(r.transform.value(a, b) - (a == b ? 1.0 : 0.0)) + 0.1 * gmax;
      worst = std::max(worst, entry / (19.0 / 9.0 * k.c_delta * std::exp(-std::abs(a - b) / 8.0)));
    }
  }
  CHECK(worst <= 1.0);
}

TEST_CASE("eigenvalue derivatives match central differences") {
  const SiteWindow w(-24, 24);
  const LatticeModel m = LatticeModel::sample(w, 1.0 / 60.0, 3);
  DiagonalizeOptions opt;
  opt.active = {-2, 0, 1, 3};
  const DiagonalizationResult r = diagonalize(m, opt);
  const double c = r.constants.c_delta;
  const double h = 1e-6;
  double worst_rel = 0.0;
  for (std::size_t p = 0; p < opt.active.size(); ++p) {
    const int site = opt.active[p];
    LatticeModel up = m, dn = m;
    up.disorder[static_cast<std::size_t>(w.index(site))] += h;
    dn.disorder[static_cast<std::size_t>(w.index(site))] -= h;
    DiagonalizeOptions fixed;
    fixed.forced_steps = r.steps;
    const DiagonalizationResult ru = diagonalize(up, fixed);
    const DiagonalizationResult rd = diagonalize(dn, fixed);
    for (int n = -6; n <= 6; ++n) {
      const double fd = (ru.eigenvalue(n).value - rd.eigenvalue(n).value) / (2.0 * h);
      const double g = r.eigenvalue(n).grad[p];
      worst_rel = std::max(worst_rel, std::abs(fd - g) / (std::abs(g) + 1e-4));
      CHECK(std::abs(g - (n == site ? 1.0 : 0.0)) <= 26.0 / 15.0 * c);
    }
  }
  CHECK(worst_rel <= 1e-5);
}

TEST_CASE("strict mode names the violated bound") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-16, 16), 1.0 / 60.0, 1, 0.45);
  DiagonalizeOptions opt;
  opt.strict = true;
  try {
    diagonalize(m, opt);
    FAIL("expected a bound failure");
  } catch (const Error& e) {
    CHECK(e.code() == Error::Code::bound);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}
