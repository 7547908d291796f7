#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kamstark {

using cplx = std::complex<double>;

constexpr int kMaxAngles = 4;
constexpr int kMaxSide = 9;   // q (or qbar) factors per monomial
constexpr int kMaxParams = 4;

// Exponents of one monomial e^{i<k,theta>} I^l q^alpha qbar^beta.
// alpha/beta are stored as sorted site lists with repetition; unused slots stay zero.
struct MultiIndex {
  std::array<std::int8_t, kMaxAngles> k{};
  std::array<std::uint8_t, kMaxAngles> l{};
  std::uint8_t na = 0;
  std::uint8_t nb = 0;
  std::array<std::int16_t, kMaxSide> a{};
  std::array<std::int16_t, kMaxSide> b{};

  int k_l1() const;
  int l_total() const;
  int q_degree() const { return na + nb; }
  // 2|l| + |alpha| + |beta|; <= 2 is the low part.
  int weight() const { return 2 * l_total() + na + nb; }
  int alpha_count(int site) const;
  int beta_count(int site) const;
  // Sigma k + |alpha| - |beta|; zero for gauge-invariant terms.
  int gauge_charge() const;

  std::map<int, int> alpha_map() const;
  std::map<int, int> beta_map() const;

  bool add_alpha(int site);
  bool add_beta(int site);
  bool remove_alpha(int site);
  bool remove_beta(int site);

  friend bool operator==(const MultiIndex& x, const MultiIndex& y);
  friend bool operator<(const MultiIndex& x, const MultiIndex& y);
};

struct MultiIndexHash {
  std::size_t operator()(const MultiIndex& m) const noexcept;
};

// Complex coefficient with its gradient in the parameters xi.
struct Coef {
  cplx v{};
  std::array<cplx, kMaxParams> g{};

  double norm(int nparams) const;  // |v| + sum |g_p|
  Coef& operator+=(const Coef& o);
  Coef& operator-=(const Coef& o);
  Coef& operator*=(cplx s);
};

Coef operator*(const Coef& x, const Coef& y);
Coef operator*(Coef x, cplx s);
Coef operator+(Coef x, const Coef& y);
Coef operator-(Coef x, const Coef& y);
// Quotient rule.
Coef operator/(const Coef& x, const Coef& y);

struct SeriesDomain {
  double r = 0.5;    // |Im theta| < r
  double s = 0.5;    // |I| < s^2, ||q|| + ||qbar|| < s
  double rho = 0.125;
  double d = 2.0;
  double site_weight(int n) const;  // <n>^d e^{rho |n|}
};

class TFSeries {
public:
  using Map = std::unordered_map<MultiIndex, Coef, MultiIndexHash>;

  TFSeries() = default;
  TFSeries(int nangles, int nparams);

  int nangles() const noexcept { return nangles_; }
  int nparams() const noexcept { return nparams_; }
  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  const Map& terms() const noexcept { return terms_; }

  void add(const MultiIndex& key, const Coef& c);
  Coef coefficient(const MultiIndex& key) const;
  std::vector<std::pair<MultiIndex, Coef>> sorted() const;

  TFSeries filtered(const std::function<bool(const MultiIndex&)>& keep) const;
  // Drops terms whose coefficient norm is <= tol; returns the dropped coefficient mass.
  double prune(double tol);

  TFSeries& operator+=(const TFSeries& o);
  TFSeries& operator-=(const TFSeries& o);
  TFSeries& operator*=(cplx s);

  double overflow_mass = 0.0;  // coefficient mass dropped by degree caps
  double pruned_mass = 0.0;    // coefficient mass dropped by the high-part magnitude cut

private:
  int nangles_ = 0;
  int nparams_ = 0;
  Map terms_;
};

TFSeries operator+(TFSeries a, const TFSeries& b);
TFSeries operator-(TFSeries a, const TFSeries& b);
TFSeries operator*(TFSeries a, cplx s);

struct BracketOptions {
  int max_q_degree = 4;
  int max_action_degree = 2;
  int max_weight = -1;      // skip results of larger weight (not counted as overflow)
  double prune_high = 0.0;  // drop weight >= 3 results with coefficient norm below this
};

// {F,G} = sum_j (dF/dtheta_j dG/dI_j - dF/dI_j dG/dtheta_j) + i sum_n (dF/dq_n dG/dqbar_n - dF/dqbar_n dG/dq_n).
// This is the bracket with dX/dt = {X, H} for i dq/dt = -dH/dqbar and q_j = sqrt(I_j) e^{i theta_j}.
TFSeries poisson_bracket(const TFSeries& f, const TFSeries& g, const BracketOptions& opt = {});

TFSeries product(const TFSeries& f, const TFSeries& g, const BracketOptions& opt = {});

struct GaugeSplit {
  TFSeries invariant;         // terms of zero gauge charge
  double removed_mass = 0.0;  // coefficient mass of the other terms
};
GaugeSplit gauge_filter(const TFSeries& f);

enum class VarKind { action, angle, q, qbar };
TFSeries derivative(const TFSeries& f, VarKind kind, int which);

// Sup-type norm sum_terms |c|_O * sup_D |monomial|; per-term sups are closed form.
double term_sup(const MultiIndex& key, const SeriesDomain& dom);
double series_norm(const TFSeries& f, const SeriesDomain& dom);

struct VectorFieldNorm {
  double action = 0.0;  // ||dF/dI||
  double angle = 0.0;   // s^-2 ||dF/dtheta||
  double normal = 0.0;  // (1/s) sup sum_n (|dF/dq_n| + |dF/dqbar_n|) w_n
  double total = 0.0;
};
VectorFieldNorm vector_field_norm(const TFSeries& f, const SeriesDomain& dom);

// Evaluation at a (possibly complex) point; qbar is an independent variable.
struct SeriesPoint {
  std::vector<cplx> theta;
  std::vector<cplx> action;
  std::map<int, cplx> q;
  std::map<int, cplx> qbar;
};
cplx evaluate(const TFSeries& f, const SeriesPoint& x);
cplx evaluate_gradient(const TFSeries& f, const SeriesPoint& x, int param);

// Line format: "k | l | alpha | beta | re im | grad_re grad_im ..."
std::string to_text(const TFSeries& f);
TFSeries from_text(const std::string& text, int nangles, int nparams);

}  // namespace kamstark
