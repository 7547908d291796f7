#include "kamstark/dynamics.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kamstark {

Scheme parse_scheme(std::string_view text) {
  if (text == "splitstep") return Scheme::splitstep;
  if (text == "rk4") return Scheme::rk4;
  if (text == "exprk4") return Scheme::exprk4;
  fail(Error::Code::invalid_argument, "scheme: expected splitstep, rk4 or exprk4, got '" + std::string(text) + "'");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::rk4: return "rk4";
    case Scheme::exprk4: return "exprk4";
    case Scheme::splitstep: break;
  }
  return "splitstep";
}

LatticeState LatticeState::localized(SiteWindow w, int site) {
  if (!w.contains(site)) fail(Error::Code::invalid_argument, "state: site outside window");
  LatticeState s{w, std::vector<cplx>(static_cast<std::size_t>(w.size()), 0.0), 0.0};
  s.u[static_cast<std::size_t>(w.index(site))] = 1.0;
  return s;
}

double lattice_mass(const std::vector<cplx>& u) {
  double m = 0.0;
  for (const auto& x : u) m += std::norm(x);
  return m;
}

double weighted_moment(const SiteWindow& w, const std::vector<cplx>& u, double d) {
  double m = 0.0;
  for (int n = w.lo(); n <= w.hi(); ++n) {
    const double bracket = std::sqrt(1.0 + static_cast<double>(n) * n);
    m += std::pow(bracket, 2.0 * d) * std::norm(u[static_cast<std::size_t>(w.index(n))]);
  }
  return m;
}

namespace {

std::vector<double> onsite(const LatticeModel& model, double field, bool disorder) {
  std::vector<double> pot;
  for (int n = model.window.lo(); n <= model.window.hi(); ++n) pot.push_back(field * n + (disorder ? model.v(n) : 0.0));
  return pot;
}

}  // namespace

double lattice_energy(const LatticeModel& model, double eps, const std::vector<cplx>& u, double field, bool disorder) {
  const auto pot = onsite(model, field, disorder);
  double e = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::norm(u[i]);
    e += pot[i] * a + 0.5 * eps * a * a;
    if (i + 1 < u.size()) e += 2.0 * model.delta * (std::conj(u[i]) * u[i + 1]).real();
  }
  return e;
}

namespace {

class Stepper {
public:
  Stepper(const LatticeModel& model, double eps, const EvolutionOptions& opt)
      : delta_(model.delta), eps_(eps), pot_(onsite(model, opt.field, opt.disorder)), scheme_(opt.scheme) {
    if (scheme_ == Scheme::exprk4) {
      const int n = static_cast<int>(pot_.size());
      Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        l(i, i) = pot_[static_cast<std::size_t>(i)];
        if (i + 1 < n) l(i, i + 1) = l(i + 1, i) = delta_;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
      // eigenvectors decay super-exponentially; entries below 1e-18 are dropped
      basis_ = es.eigenvectors().sparseView(1.0, 1e-18);
      basis_t_ = basis_.transpose();
      levels_ = es.eigenvalues();
    }
  }

  void step(std::vector<cplx>& u, double dt) {
    switch (scheme_) {
      case Scheme::rk4: rk4(u, dt); break;
      case Scheme::exprk4: exprk4(u, dt); break;
      case Scheme::splitstep: split(u, dt); break;
    }
  }

private:
  // nonlinear part i eps |u|^2 u, evaluated and returned in the eigenbasis
  Eigen::VectorXcd nonlinear(const Eigen::VectorXcd& w) const {
    Eigen::VectorXcd u = basis_ * w;
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) *= cplx(0.0, eps_ * std::norm(u(i)));
    return basis_t_ * u;
  }

  // Interaction-picture RK4: v = exp(-i L tau) w is kept across steps so the linear rotation
  // never accumulates rounding; u is rebuilt from v after each step.
  Eigen::VectorXcd rotation(double tau) const {
    Eigen::VectorXcd r(levels_.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = std::polar(1.0, levels_(i) * tau);
    return r;
  }

  Eigen::VectorXcd drift(const Eigen::VectorXcd& rot, const Eigen::VectorXcd& v) const {
    return rot.conjugate().cwiseProduct(nonlinear(rot.cwiseProduct(v)));
  }

  void exprk4(std::vector<cplx>& u, double dt) {
    const Eigen::Index n = static_cast<Eigen::Index>(u.size());
    if (!primed_) {
      v_ = basis_t_ * Eigen::Map<const Eigen::VectorXcd>(u.data(), n);
      primed_ = true;
    }
    if (dt != step_dt_) {
      origin_ = elapsed();
      step_dt_ = dt;
      count_ = 0;
    }
    const double t0 = elapsed();
    const Eigen::VectorXcd r0 = rotation(t0);
    const Eigen::VectorXcd rh = rotation(t0 + 0.5 * dt);
    const Eigen::VectorXcd r1 = rotation(t0 + dt);
    const Eigen::VectorXcd k1 = drift(r0, v_);
    const Eigen::VectorXcd k2 = drift(rh, v_ + 0.5 * dt * k1);
    const Eigen::VectorXcd k3 = drift(rh, v_ + 0.5 * dt * k2);
    const Eigen::VectorXcd k4 = drift(r1, v_ + dt * k3);
    v_ += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    ++count_;
    Eigen::Map<Eigen::VectorXcd>(u.data(), n) = basis_ * r1.cwiseProduct(v_);
  }

  double elapsed() const { return origin_ + static_cast<double>(count_) * step_dt_; }

  // u' = i (delta (u_{n+1} + u_{n-1}) + pot u + eps |u|^2 u)
  void field(const std::vector<cplx>& u, std::vector<cplx>& du) const {
    const std::size_t n = u.size();
    const cplx I(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      cplx hop = 0.0;
      if (i > 0) hop += u[i - 1];
      if (i + 1 < n) hop += u[i + 1];
      du[i] = I * (delta_ * hop + (pot_[i] + eps_ * std::norm(u[i])) * u[i]);
    }
  }

  void rk4(std::vector<cplx>& u, double dt) {
    const std::size_t n = u.size();
    k1_.resize(n);
    k2_.resize(n);
    k3_.resize(n);
    k4_.resize(n);
    tmp_.resize(n);
    field(u, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = u[i] + 0.5 * dt * k1_[i];
    field(tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = u[i] + 0.5 * dt * k2_[i];
    field(tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = u[i] + dt * k3_[i];
    field(tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i) u[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
  }

  // exact on-site phase rotation, |u_n| is conserved by this flow
  void phase(std::vector<cplx>& u, double dt) const {
    for (std::size_t i = 0; i < u.size(); ++i) u[i] *= std::polar(1.0, (pot_[i] + eps_ * std::norm(u[i])) * dt);
  }

  // exact flow of delta (conj(u_a) u_b + c.c.) on disjoint bonds starting at `first`
  void bonds(std::vector<cplx>& u, double dt, std::size_t first) const {
    const double c = std::cos(delta_ * dt);
    const cplx is(0.0, std::sin(delta_ * dt));
    for (std::size_t i = first; i + 1 < u.size(); i += 2) {
      const cplx a = u[i];
      const cplx b = u[i + 1];
      u[i] = c * a + is * b;
      u[i + 1] = is * a + c * b;
    }
  }

  void split(std::vector<cplx>& u, double dt) const {
    phase(u, 0.5 * dt);
    bonds(u, 0.5 * dt, 0);
    bonds(u, dt, 1);
    bonds(u, 0.5 * dt, 0);
    phase(u, 0.5 * dt);
  }

  double delta_;
  double eps_;
  std::vector<double> pot_;
  Scheme scheme_;
  std::vector<cplx> k1_, k2_, k3_, k4_, tmp_;
  Eigen::SparseMatrix<double> basis_;
  Eigen::SparseMatrix<double> basis_t_;
  Eigen::VectorXd levels_;
  Eigen::VectorXcd v_;
  bool primed_ = false;
  double origin_ = 0.0;
  double step_dt_ = 0.0;
  long count_ = 0;
};

}  // namespace

Trajectory integrate(const LatticeModel& model, double eps, const LatticeState& u0, const EvolutionOptions& opt,
                     const Observer& observer) {
  if (!(u0.window == model.window)) fail(Error::Code::invalid_argument, "evolve: state window differs from model window");
  if (!(opt.dt > 0.0) || !(opt.T >= 0.0) || !(opt.stride > 0.0)) {
    fail(Error::Code::invalid_argument, "evolve: need dt > 0, T >= 0, stride > 0");
  }
  if (opt.scheme == Scheme::rk4) {
    const int nmax = std::max(std::abs(model.window.lo()), std::abs(model.window.hi()));
    const double limit = 0.1 / (1.0 + std::abs(opt.field) * nmax);
    if (opt.dt > limit) {
      fail(Error::Code::invalid_argument, "evolve: rk4 needs dt <= " + std::to_string(limit) + " on this window");
    }
  }
  Stepper stepper(model, eps, opt);
  Trajectory traj;
  std::vector<cplx> u = u0.u;
  const auto& w = model.window;
  const int edge = std::min(opt.edge_sites, w.size() / 2);
  auto observe = [&](double t) {
    Observation o;
    o.t = t;
    o.mass = lattice_mass(u);
    o.energy = lattice_energy(model, eps, u, opt.field, opt.disorder);
    o.moment = weighted_moment(w, u, opt.d);
    for (int i = 0; i < edge; ++i) {
      o.edge_mass += std::norm(u[static_cast<std::size_t>(i)]) + std::norm(u[u.size() - 1 - static_cast<std::size_t>(i)]);
    }
    traj.samples.push_back(o);
    if (observer) observer(t, u);
    if (!std::isfinite(o.mass)) fail(Error::Code::numeric, "evolve: non-finite amplitudes at t = " + std::to_string(t));
  };

  const long steps_per_obs = std::max(1L, std::lround(opt.stride / opt.dt));
  const double dt = opt.stride / static_cast<double>(steps_per_obs);
  const long nobs = std::lround(opt.T / opt.stride);
  observe(u0.t);
  for (long k = 1; k <= nobs; ++k) {
    for (long s = 0; s < steps_per_obs; ++s) stepper.step(u, dt);
    observe(u0.t + static_cast<double>(k) * opt.stride);
  }

  const Observation& first = traj.samples.front();
  for (const auto& o : traj.samples) {
    traj.mass_drift = std::max(traj.mass_drift, std::abs(o.mass - first.mass) / first.mass);
    traj.energy_drift = std::max(traj.energy_drift, std::abs(o.energy - first.energy) / std::max(std::abs(first.energy), 1e-300));
    if (o.edge_mass > opt.edge_tol) traj.edge_contaminated = true;
  }
  traj.final = LatticeState{w, u, traj.samples.back().t};
  if (traj.mass_drift > opt.mass_tol) {
    fail(Error::Code::numeric, "evolve: relative mass drift " + std::to_string(traj.mass_drift) +
                                   " exceeds tolerance; use a smaller dt or the splitstep scheme");
  }
  return traj;
}

LocalizationVerdict verify_localization(const Trajectory& traj, double factor) {
  LocalizationVerdict v;
  v.factor = factor;
  const double m0 = traj.samples.front().moment;
  for (const auto& o : traj.samples) v.max_ratio = std::max(v.max_ratio, o.moment / m0);
  v.bounded = v.max_ratio <= factor;
  return v;
}

std::vector<cplx> integrate_q_frame(const NonlinearHamiltonian& h, std::vector<cplx> q0, double T, double dt) {
  if (static_cast<int>(q0.size()) != h.sites.size()) fail(Error::Code::invalid_argument, "q-frame: state size mismatch");
  const long steps = std::max(1L, std::lround(T / dt));
  const double step = T / static_cast<double>(steps);
  std::vector<cplx> tmp(q0.size());
  for (long s = 0; s < steps; ++s) {
    const auto k1 = hamiltonian_vector_field(h, q0);
    for (std::size_t i = 0; i < q0.size(); ++i) tmp[i] = q0[i] + 0.5 * step * k1[i];
    const auto k2 = hamiltonian_vector_field(h, tmp);
    for (std::size_t i = 0; i < q0.size(); ++i) tmp[i] = q0[i] + 0.5 * step * k2[i];
    const auto k3 = hamiltonian_vector_field(h, tmp);
    for (std::size_t i = 0; i < q0.size(); ++i) tmp[i] = q0[i] + step * k3[i];
    const auto k4 = hamiltonian_vector_field(h, tmp);
    for (std::size_t i = 0; i < q0.size(); ++i) q0[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return q0;
}

TorusRun run_torus(const LatticeModel& model, double eps, const TorusSampler& sampler,
                   const std::vector<double>& linear_frequencies, const EvolutionOptions& opt, int defect_points) {
  if (!(sampler.window() == model.window)) fail(Error::Code::invalid_argument, "torus: sampler window differs from model");
  const auto& tang = sampler.tangential();
  const std::size_t b = tang.size();
  if (linear_frequencies.size() != b) fail(Error::Code::invalid_argument, "torus: one linear frequency per mode");

  TorusRun out;
  out.linear = linear_frequencies;
  const LatticeState u0{model.window, sampler.physical(0.0), 0.0};

  const long nobs = std::lround(opt.T / opt.stride);
  const long every = std::max(1L, nobs / std::max(1, defect_points));
  long index = 0;
  const auto& w = model.window;
  std::vector<std::vector<double>> phases(b);
  std::vector<double> times;

  auto observer = [&](double t, const std::vector<cplx>& u) {
    times.push_back(t);
    for (std::size_t j = 0; j < b; ++j) {
      const auto& col = sampler.mode(tang[j]);
      cplx proj = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) proj += col[k] * u[k];
      phases[j].push_back(std::arg(proj));
    }
    if (index++ % every != 0) return;
    const auto us = sampler.physical(t);
    double dsum = 0.0;
    for (int n = w.lo(); n <= w.hi(); ++n) {
      const std::size_t i = static_cast<std::size_t>(w.index(n));
      dsum += std::pow(std::sqrt(1.0 + static_cast<double>(n) * n), opt.d) * std::abs(u[i] - us[i]);
    }
    out.defect_times.push_back(t);
    out.defect_values.push_back(dsum);
    if (dsum > out.defect) {
      out.defect = dsum;
      out.defect_time = t;
    }
  };
  out.trajectory = integrate(model, eps, u0, opt, observer);

  // demodulate by the linear frequency, unwrap, and fit phase = a + omega t
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<double>& ph = phases[j];
    for (std::size_t i = 0; i < ph.size(); ++i) ph[i] -= linear_frequencies[j] * times[i];
    for (std::size_t i = 1; i < ph.size(); ++i) {
      double d = ph[i] - ph[i - 1];
      d -= 2.0 * std::numbers::pi * std::round(d / (2.0 * std::numbers::pi));
      ph[i] = ph[i - 1] + d;
    }
    const double n = static_cast<double>(ph.size());
    double st = 0, sp = 0, stt = 0, stp = 0;
    for (std::size_t i = 0; i < ph.size(); ++i) {
      st += times[i];
      sp += ph[i];
      stt += times[i] * times[i];
      stp += times[i] * ph[i];
    }
    const double den = n * stt - st * st;
    out.recovered.push_back(linear_frequencies[j] + (den != 0.0 ? (n * stp - st * sp) / den : 0.0));
    out.max_shift = std::max(out.max_shift, std::abs(out.recovered[j] - linear_frequencies[j]));
  }
  return out;
}

}  // namespace kamstark
