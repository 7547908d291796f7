#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "kamstark/dynamics.hpp"

using namespace kamstark;

namespace {

std::vector<cplx> random_packet(std::mt19937_64& rng, SiteWindow w, int radius) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<cplx> u(static_cast<std::size_t>(w.size()), 0.0);
  for (int n = -radius; n <= radius; ++n) u[static_cast<std::size_t>(w.index(n))] = cplx(g(rng), g(rng));
  const double m = lattice_mass(u);
  for (auto& x : u) x /= std::sqrt(m);
  return u;
}

double max_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Dense eigenvector of the truncated lattice operator whose peak sits at `site`.
std::vector<cplx> eigenmode(const LatticeModel& m, int site) {
  const int n = m.window.size();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    l(i, i) = m.window.site(i) + m.disorder[static_cast<std::size_t>(i)];
    if (i + 1 < n) l(i, i + 1) = l(i + 1, i) = m.delta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
  for (int c = 0; c < n; ++c) {
    Eigen::Index peak = 0;
    es.eigenvectors().col(c).cwiseAbs().maxCoeff(&peak);
    if (m.window.site(static_cast<int>(peak)) == site) {
      std::vector<cplx> u(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] = es.eigenvectors()(i, c);
      return u;
    }
  }
  FAIL("no eigenvector peaks at the site");
  return {};
}

EvolutionOptions opts(Scheme s, double T, double dt) {
  EvolutionOptions o;
  o.scheme = s;
  o.T = T;
  o.dt = dt;
  return o;
}

}  // namespace

TEST_CASE("scheme names round trip") {
  for (Scheme s : {Scheme::splitstep, Scheme::rk4, Scheme::exprk4}) CHECK(parse_scheme(scheme_name(s)) == s);
  CHECK_THROWS_AS(parse_scheme("euler"), Error);
}

TEST_CASE("energy, mass and moment match their definitions") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-6, 6), 0.05, 2);
  std::mt19937_64 rng(1);
  const auto u = random_packet(rng, m.window, 6);
  double e = 0.0, mom = 0.0;
  for (int n = -6; n <= 6; ++n) {
    const cplx x = u[static_cast<std::size_t>(m.window.index(n))];
    e += (n + m.v(n)) * std::norm(x) + 0.5 * 0.3 * std::norm(x) * std::norm(x);
    if (n < 6) e += 2.0 * 0.05 * (std::conj(x) * u[static_cast<std::size_t>(m.window.index(n + 1))]).real();
    mom += std::pow(1.0 + n * n, 2.0) * std::norm(x);
  }
  CHECK(lattice_energy(m, 0.3, u) == doctest::Approx(e).epsilon(1e-14));
  CHECK(lattice_mass(u) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(weighted_moment(m.window, u, 2.0) == doctest::Approx(mom).epsilon(1e-14));
}

TEST_CASE("decoupled sites rotate with the exact nonlinear phase") {
  // with no hopping every |u_n| is conserved and u_n(t) = u_n(0) exp(i (n + v_n + eps |u_n|^2) t)
  const LatticeModel m = LatticeModel::sample(SiteWindow(-8, 8), 0.0, 3);
  std::mt19937_64 rng(2);
  const auto u0 = random_packet(rng, m.window, 8);
  const double eps = 0.7, T = 10.0;
  std::vector<cplx> exact(u0.size());
  for (int n = -8; n <= 8; ++n) {
    const std::size_t i = static_cast<std::size_t>(m.window.index(n));
    exact[i] = u0[i] * std::polar(1.0, (n + m.v(n) + eps * std::norm(u0[i])) * T);
  }
  const LatticeState s0{m.window, u0, 0.0};
  CHECK(max_diff(integrate(m, eps, s0, opts(Scheme::splitstep, T, 1e-2)).final.u, exact) <= 1e-11);
  CHECK(max_diff(integrate(m, eps, s0, opts(Scheme::rk4, T, 1e-3)).final.u, exact) <= 1e-8);
  CHECK(max_diff(integrate(m, eps, s0, opts(Scheme::exprk4, T, 1e-2)).final.u, exact) <= 1e-8);
}

TEST_CASE("linear eigenvectors only pick up a phase") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-24, 24), 1.0 / 60.0, 4);
  const auto psi = eigenmode(m, 0);
  const LatticeState s0{m.window, psi, 0.0};
  for (Scheme s : {Scheme::splitstep, Scheme::rk4, Scheme::exprk4}) {
    const Trajectory tr = integrate(m, 0.0, s0, opts(s, 50.0, s == Scheme::rk4 ? 1e-3 : 1e-2));
    cplx overlap = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) overlap += std::conj(psi[i]) * tr.final.u[i];
    CHECK_MESSAGE(std::abs(std::abs(overlap) - 1.0) <= 1e-6, scheme_name(s));
  }
}

TEST_CASE("conservation: splitstep mass and RK4 energy") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-24, 24), 1.0 / 60.0, 5);
  std::mt19937_64 rng(3);
  const LatticeState s0{m.window, random_packet(rng, m.window, 3), 0.0};
  const Trajectory split = integrate(m, 0.5, s0, opts(Scheme::splitstep, 100.0, 1e-2));
  CHECK(split.mass_drift <= 1e-8);
  const Trajectory rk = integrate(m, 0.5, s0, opts(Scheme::rk4, 100.0, 1e-3));
  CHECK(rk.energy_drift <= 1e-6);
  CHECK(rk.mass_drift <= 1e-6);
  CHECK_FALSE(rk.edge_contaminated);
  CHECK(rk.samples.size() == 101);
  CHECK(max_diff(split.final.u, rk.final.u) <= 1e-4);
}

TEST_CASE("integrating-factor RK4 agrees with plain RK4") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-24, 24), 1.0 / 60.0, 6);
  std::mt19937_64 rng(4);
  const LatticeState s0{m.window, random_packet(rng, m.window, 2), 0.0};
  const Trajectory a = integrate(m, 0.2, s0, opts(Scheme::rk4, 20.0, 5e-4));
  const Trajectory b = integrate(m, 0.2, s0, opts(Scheme::exprk4, 20.0, 5e-3));
  CHECK(max_diff(a.final.u, b.final.u) <= 1e-9);
}

TEST_CASE("diagonal-frame flow agrees with the lattice flow") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 1);
  const DiagonalizationResult lin = diagonalize(m);
  TensorOptions topt;
  topt.use_interior = false;
  topt.sites = SiteWindow(-8, 8);
  const NonlinearHamiltonian h = build_hamiltonian(lin, 1e-2, topt);
  std::vector<cplx> q0(static_cast<std::size_t>(h.sites.size()), 0.0);
  q0[static_cast<std::size_t>(h.sites.index(-1))] = 0.8;
  q0[static_cast<std::size_t>(h.sites.index(0))] = cplx(0.0, 0.6);
  q0[static_cast<std::size_t>(h.sites.index(2))] = 0.1;
  auto to_lattice = [&](const std::vector<cplx>& q) {
    std::vector<cplx> u(static_cast<std::size_t>(m.window.size()), 0.0);
    for (int k = m.window.lo(); k <= m.window.hi(); ++k)
      for (int n = h.sites.lo(); n <= h.sites.hi(); ++n)
        u[static_cast<std::size_t>(m.window.index(k))] += lin.transform.value(k, n) * q[static_cast<std::size_t>(h.sites.index(n))];
    return u;
  };
  const double T = 100.0;
  const auto qT = integrate_q_frame(h, q0, T, 1e-2);
  const LatticeState s0{m.window, to_lattice(q0), 0.0};
  const Trajectory tr = integrate(m, 1e-2, s0, opts(Scheme::exprk4, T, 1e-2));
  CHECK(max_diff(to_lattice(qT), tr.final.u) <= 1e-6);
  // negative control: the linear flow is visibly different
  const Trajectory flat = integrate(m, 0.0, s0, opts(Scheme::exprk4, T, 1e-2));
  CHECK(max_diff(flat.final.u, tr.final.u) >= 1e-3);
}

TEST_CASE("localization verdict: Stark lattice stays bounded, free lattice spreads") {
  const LatticeModel m = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 1);
  const LatticeState s0 = LatticeState::localized(m.window, 0);
  CHECK(s0.u[static_cast<std::size_t>(m.window.index(0))] == cplx(1.0, 0.0));
  EvolutionOptions o = opts(Scheme::splitstep, 300.0, 1e-2);
  const LocalizationVerdict stark = verify_localization(integrate(m, 1e-3, s0, o), 2.0);
  CHECK(stark.bounded);
  CHECK(stark.max_ratio <= 2.0);
  o.field = 0.0;
  o.disorder = false;
  const LocalizationVerdict free = verify_localization(integrate(m, 1e-3, s0, o), 2.0);
  CHECK_FALSE(free.bounded);
  CHECK(free.max_ratio >= 10.0);
}

TEST_CASE("torus run at zero nonlinearity follows the linear modes") {
  const std::vector<int> tangential{-1, 0};
  const LatticeModel m = LatticeModel::sample(SiteWindow(-32, 32), 1.0 / 60.0, 1);
  DiagonalizeOptions dopt;
  dopt.active = tangential;
  const DiagonalizationResult lin = diagonalize(m, dopt);
  TensorOptions topt;
  topt.grad_sites = tangential;
  const NonlinearHamiltonian h = build_hamiltonian(lin, 0.0, topt);
  KamRunOptions ko;
  ko.action_angle.tangential = tangential;
  const KamRun run = run_nonlinear_kam(h, ko);
  const TorusSampler sampler(run, h, lin);
  const std::vector<double> freqs{lin.eigenvalue(-1).value, lin.eigenvalue(0).value};
  const TorusRun tr = run_torus(m, 0.0, sampler, freqs, opts(Scheme::exprk4, 200.0, 1e-2), 20);
  CHECK(tr.defect <= 1e-10);
  REQUIRE(tr.defect_values.size() == 21);
  CHECK(tr.defect_times.front() == 0.0);
  CHECK(tr.defect_times.back() == doctest::Approx(200.0));
  CHECK(tr.max_shift <= 1e-9);
}
