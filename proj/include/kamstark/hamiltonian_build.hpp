#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "kamstark/linear_kam.hpp"

namespace kamstark {

using cplx = std::complex<double>;

// Sorted site quadruple; the quartic coefficient is symmetric in all four slots.
using QuadKey = std::array<int, 4>;

QuadKey canonical_key(int a, int b, int c, int d);

// Coefficients c(m1..m4) = 1/2 sum_k G_{k m1} G_{k m2} G_{k m3} G_{k m4} keyed by sorted quadruple.
class QuarticTensor {
public:
  QuarticTensor() = default;
  QuarticTensor(SiteWindow sites, std::vector<int> grad_sites);

  const SiteWindow& sites() const noexcept { return sites_; }
  const std::vector<int>& grad_sites() const noexcept { return grad_sites_; }
  int nparams() const noexcept { return static_cast<int>(grad_sites_.size()); }
  std::size_t size() const noexcept { return keys_.size(); }

  const QuadKey& key(std::size_t i) const { return keys_[i]; }
  double value(std::size_t i) const { return values_[i]; }
  const double* grad(std::size_t i) const { return grads_.data() + i * nparams(); }

  // Any ordering of the four sites; zero when absent.
  double value(int a, int b, int c, int d) const;
  DualScalar entry(int a, int b, int c, int d) const;

  // Accumulates into the entry for the sorted key.
  void add(const QuadKey& key, double value, const double* grad);
  // Drops entries with |value| and all |grad| <= tol; returns the dropped L1 mass of values.
  double prune(double tol);
  void sort_keys();

  double kept_mass() const;
  double dropped_mass() const noexcept { return dropped_; }

private:
  SiteWindow sites_;
  std::vector<int> grad_sites_;
  std::vector<QuadKey> keys_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  double dropped_ = 0.0;
};

struct TensorOptions {
  SiteWindow sites;              // index range kept; defaults to the interior of the diagonalization
  bool use_interior = true;
  std::vector<int> grad_sites;   // parameters whose derivatives are carried
  double prune_tol = 1e-14;
};

QuarticTensor build_quartic_tensor(const DiagonalizationResult& res, const TensorOptions& opt);

struct NonlinearHamiltonian {
  LatticeModel model;
  double eps = 0.0;
  SiteWindow sites;
  std::vector<int> grad_sites;
  std::vector<DualScalar> frequencies;  // d_n on `sites`, gradients over grad_sites
  QuarticTensor tensor;
  std::vector<BoundCheck> checks;

  const DualScalar& frequency(int n) const { return frequencies.at(static_cast<std::size_t>(sites.index(n))); }
};

NonlinearHamiltonian build_hamiltonian(const DiagonalizationResult& res, double eps, const TensorOptions& opt);

// |c(m1..m4)| <= 24 exp(-(max - min)/8) over every stored entry.
BoundCheck check_tensor_decay(const QuarticTensor& t);
// (1/10) max_j |dc/dv_j| <= 24 exp(-(max - min)/8) over every stored entry.
BoundCheck check_tensor_grad_decay(const QuarticTensor& t);

// H(q) = sum d_m |q_m|^2 + eps sum c(m,m1,m2,m3) q_{m1} conj(q_{m2}) q_{m3} conj(q_m).
double hamiltonian_energy(const NonlinearHamiltonian& h, const std::vector<cplx>& q);
// dq/dt from i dq_n/dt = -dH/dconj(q_n).
std::vector<cplx> hamiltonian_vector_field(const NonlinearHamiltonian& h, const std::vector<cplx>& q);

}  // namespace kamstark
