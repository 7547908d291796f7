#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kamstark {

// Error type shared by the library; code() maps onto the C API status codes.
class Error : public std::runtime_error {
public:
  enum class Code { invalid_argument = 3, numeric = 5, resonance = 6, io = 4, bound = 1 };
  Error(Code c, const std::string& what) : std::runtime_error(what), code_(c) {}
  Code code() const noexcept { return code_; }

private:
  Code code_;
};

[[noreturn]] void fail(Error::Code c, const std::string& what);

// Contiguous integer window [lo, hi] of lattice sites.
class SiteWindow {
public:
  SiteWindow() = default;
  SiteWindow(int lo, int hi);

  // Parses "lo:hi"; error messages name the offending field.
  static SiteWindow parse(std::string_view text);

  int lo() const noexcept { return lo_; }
  int hi() const noexcept { return hi_; }
  int size() const noexcept { return hi_ - lo_ + 1; }
  bool contains(int n) const noexcept { return n >= lo_ && n <= hi_; }
  int index(int n) const noexcept { return n - lo_; }
  int site(int i) const noexcept { return lo_ + i; }

  // Sites farther than `margin` from both edges.
  SiteWindow interior(int margin) const;
  int default_margin() const noexcept { return size() / 4; }
  std::string to_string() const;

  friend bool operator==(const SiteWindow&, const SiteWindow&) = default;

private:
  int lo_ = 0;
  int hi_ = 0;
};

// Value with a dense gradient over the active parameters.
struct DualScalar {
  double value = 0.0;
  std::vector<double> grad;

  DualScalar() = default;
  explicit DualScalar(double v, std::size_t nparams = 0) : value(v), grad(nparams, 0.0) {}
  DualScalar(double v, std::vector<double> g) : value(v), grad(std::move(g)) {}

  static DualScalar variable(double v, std::size_t nparams, std::size_t which);

  double grad_l1() const;
  double grad_max_abs() const;

  DualScalar& operator+=(const DualScalar& o);
  DualScalar& operator-=(const DualScalar& o);
  DualScalar& operator*=(double s);
};

DualScalar operator+(DualScalar a, const DualScalar& b);
DualScalar operator-(DualScalar a, const DualScalar& b);
DualScalar operator-(DualScalar a);
DualScalar operator*(const DualScalar& a, const DualScalar& b);
DualScalar operator*(DualScalar a, double s);
DualScalar operator*(double s, DualScalar a);
DualScalar operator/(const DualScalar& a, const DualScalar& b);
DualScalar operator+(DualScalar a, double s);
DualScalar operator-(DualScalar a, double s);

enum class Symmetry { none, self_adjoint, skew_adjoint };

// Banded real operator on a SiteWindow with per-entry parameter gradients.
// Diagonal l holds the entries (m, m - l); storage is indexed by the row m.
class LatticeOperator {
public:
  LatticeOperator() = default;
  LatticeOperator(SiteWindow w, int nparams, int bandwidth = 0, Symmetry sym = Symmetry::none);

  static LatticeOperator identity(SiteWindow w, int nparams);
  static LatticeOperator diagonal(SiteWindow w, const std::vector<DualScalar>& entries);

  const SiteWindow& window() const noexcept { return w_; }
  int size() const noexcept { return w_.size(); }
  int nparams() const noexcept { return np_; }
  int bandwidth() const noexcept { return bw_; }
  Symmetry symmetry() const noexcept { return sym_; }
  void set_symmetry(Symmetry s) noexcept { sym_ = s; }
  double dropped_mass() const noexcept { return dropped_; }
  void add_dropped_mass(double m) noexcept { dropped_ += m; }

  // Site-indexed access; entries outside the band read as zero.
  double value(int m, int n) const;
  double grad(int m, int n, int p) const;
  DualScalar entry(int m, int n) const;
  void set(int m, int n, const DualScalar& v);
  void set_value(int m, int n, double v);
  void add_value(int m, int n, double v);

  // Raw diagonal access by offset l and row index i (0-based).
  bool row_valid(int l, int i) const noexcept { return i - l >= 0 && i - l < size() && i >= 0 && i < size(); }
  double* diag_values(int l) { return val_.data() + static_cast<std::size_t>(l + bw_) * size(); }
  const double* diag_values(int l) const { return val_.data() + static_cast<std::size_t>(l + bw_) * size(); }
  double* diag_grads(int l) { return grad_.data() + static_cast<std::size_t>(l + bw_) * size() * np_; }
  const double* diag_grads(int l) const {
    return grad_.data() + static_cast<std::size_t>(l + bw_) * size() * np_;
  }

  void ensure_bandwidth(int bw);
  // Removes outer diagonals whose values and gradients are all <= tol; returns dropped L1 mass.
  double prune(double tol);

  LatticeOperator transpose() const;
  LatticeOperator diagonal_part() const;
  LatticeOperator off_diagonal_part() const;

  // Largest asymmetry |A_mn - s A_nm| over stored entries, s = +1 or -1 per the tag.
  double symmetry_defect() const;
  void require_finite() const;

  LatticeOperator& operator+=(const LatticeOperator& o);
  LatticeOperator& operator-=(const LatticeOperator& o);
  LatticeOperator& operator*=(double s);

private:
  SiteWindow w_;
  int np_ = 0;
  int bw_ = 0;
  Symmetry sym_ = Symmetry::none;
  double dropped_ = 0.0;
  std::vector<double> val_;
  std::vector<double> grad_;
};

LatticeOperator operator+(LatticeOperator a, const LatticeOperator& b);
LatticeOperator operator-(LatticeOperator a, const LatticeOperator& b);
LatticeOperator operator*(LatticeOperator a, double s);

struct MulOptions {
  double prune_tol = 0.0;
  int band_cap = -1;
};

LatticeOperator op_mul(const LatticeOperator& a, const LatticeOperator& b, const MulOptions& opt = {});
LatticeOperator commutator(const LatticeOperator& a, const LatticeOperator& b, const MulOptions& opt = {});

struct WeightedNormValue {
  double plain = 0.0;     // sum_l e^{r|l|} sup_{m-n=l} |A_mn|
  double derivative = 0.0;  // sup_j of the same norm applied to dA/dv_j
  double with_alpha = 0.0;  // plain + alpha * derivative
  double r = 0.0;
  double alpha = 0.0;
};

WeightedNormValue weighted_norm(const LatticeOperator& a, double r, double alpha);

struct SeriesOptions {
  double r = 0.125;
  double alpha = 0.1;
  double tail_tol = 1e-18;
  int max_terms = 64;
  MulOptions mul;
};

struct SeriesResult {
  LatticeOperator op;
  double tail_bound = 0.0;
  int terms = 0;
};

// exp(W) truncated at the first order whose certified tail is below tail_tol.
SeriesResult op_exp(const LatticeOperator& w, const SeriesOptions& opt = {});

// sum_{n>=1} ad_W^n(X)/n!, i.e. e^W X e^{-W} - X.
SeriesResult commutator_series(const LatticeOperator& w, const LatticeOperator& x, const SeriesOptions& opt = {});

// Remainder sum_{j>n} x^j / j!.
double exp_tail(double x, int n);

}  // namespace kamstark
