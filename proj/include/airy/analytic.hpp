#pragma once
// Truncated Fourier series u(phi, x) = sum_{l, j} c(l, j) e^{i(l.phi + j x)}.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "airy/basis.hpp"
#include "airy/errors.hpp"
#include "airy/grid.hpp"
#include "airy/lattice.hpp"

namespace airy {

using FrequencyVector = std::vector<double>;

inline void validate_frequency(const FrequencyVector& w, int M) {
  if (static_cast<int>(w.size()) != M) throw PreconditionError("frequency vector length must equal M");
  for (double v : w)
    if (!std::isfinite(v) || v < 1.0 || v > 2.0) throw PreconditionError("frequency components must lie in [1,2]");
}

class AnalyticFunction {
 public:
  AnalyticFunction() = default;
  explicit AnalyticFunction(BasisPtr b, bool real = true)
      : b_(std::move(b)), c_(static_cast<std::size_t>(b_->size()), cd{}), real_(real) {}

  static AnalyticFunction constant(BasisPtr b, double v) {
    AnalyticFunction u(std::move(b), true);
    u.at(0, 0) = v;
    return u;
  }
  // value * e^{i(l.phi + j x)}; the function is flagged complex.
  static AnalyticFunction mode(BasisPtr b, const MultiIndex& l, int j, cd value) {
    AnalyticFunction u(std::move(b), false);
    u.set_coeff(l, j, value);
    return u;
  }
  // a*cos(l.phi + j x) + s*sin(l.phi + j x), real.
  static AnalyticFunction trig(BasisPtr b, const MultiIndex& l, int j, double a, double s) {
    AnalyticFunction u(std::move(b), true);
    if (l.is_zero() && j == 0) {
      u.at(0, 0) += a;
      return u;
    }
    u.add_coeff(l, j, cd(a / 2, -s / 2));
    u.add_coeff(-l, -j, cd(a / 2, s / 2));
    return u;
  }

  const BasisPtr& basis() const { return b_; }
  bool valid() const { return static_cast<bool>(b_); }
  bool is_real() const { return real_; }
  void set_real(bool r) {
    real_ = r;
    if (r) realify();
  }
  int jmax() const { return b_->jmax(); }
  int nj() const { return b_->nj(); }

  cd& at(int li, int j) { return c_[static_cast<std::size_t>(li) * static_cast<std::size_t>(nj()) + static_cast<std::size_t>(j + jmax())]; }
  cd at(int li, int j) const { return c_[static_cast<std::size_t>(li) * static_cast<std::size_t>(nj()) + static_cast<std::size_t>(j + jmax())]; }

  cd coeff(const MultiIndex& l, int j) const {
    const int li = b_->index_of(l);
    if (li < 0 || std::abs(j) > jmax()) return {};
    return at(li, j);
  }
  void set_coeff(const MultiIndex& l, int j, cd v) {
    const int li = b_->index_of(l);
    if (li < 0 || std::abs(j) > jmax()) throw PreconditionError("set_coeff: mode outside truncation");
    at(li, j) = v;
  }
  void add_coeff(const MultiIndex& l, int j, cd v) {
    const int li = b_->index_of(l);
    if (li < 0 || std::abs(j) > jmax()) throw PreconditionError("add_coeff: mode outside truncation");
    at(li, j) += v;
  }

  std::vector<cd>& data() { return c_; }
  const std::vector<cd>& data() const { return c_; }

  // Enforce c(l,j) = conj(c(-l,-j)) by symmetric averaging (bit-exact).
  void realify() {
    const int n = b_->n_ell();
    for (int li = 0; li < n; ++li) {
      const int ni = b_->neg(li);
      for (int j = -jmax(); j <= jmax(); ++j) {
        if (ni < li || (ni == li && j < 0)) continue;
        const cd a = at(li, j), b = at(ni, -j);
        const cd v = 0.5 * (a + std::conj(b));
        at(li, j) = v;
        at(ni, -j) = std::conj(v);
      }
    }
  }
  double reality_defect() const {
    double d = 0.0;
    for (int li = 0; li < b_->n_ell(); ++li)
      for (int j = -jmax(); j <= jmax(); ++j) d = std::max(d, std::abs(at(li, j) - std::conj(at(b_->neg(li), -j))));
    return d;
  }
  double max_abs() const {
    double m = 0.0;
    for (const auto& v : c_) m = std::max(m, std::abs(v));
    return m;
  }
  bool has_zero_x_average(double tol = 0.0) const {
    for (int li = 0; li < b_->n_ell(); ++li)
      if (std::abs(at(li, 0)) > tol) return false;
    return true;
  }
  bool is_phi_only(double tol = 0.0) const {
    for (int li = 0; li < b_->n_ell(); ++li)
      for (int j = -jmax(); j <= jmax(); ++j)
        if (j != 0 && std::abs(at(li, j)) > tol) return false;
    return true;
  }

  AnalyticFunction& operator+=(const AnalyticFunction& o) {
    require_same(b_, o.b_, "add");
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    real_ = real_ && o.real_;
    return *this;
  }
  AnalyticFunction& operator-=(const AnalyticFunction& o) {
    require_same(b_, o.b_, "subtract");
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    real_ = real_ && o.real_;
    return *this;
  }
  AnalyticFunction& operator*=(double s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  AnalyticFunction& operator*=(cd s) {
    for (auto& v : c_) v *= s;
    if (s.imag() != 0.0) real_ = false;
    return *this;
  }
  AnalyticFunction& add_constant(double v) {
    at(0, 0) += v;
    return *this;
  }
  friend AnalyticFunction operator+(AnalyticFunction a, const AnalyticFunction& b) { return a += b; }
  friend AnalyticFunction operator-(AnalyticFunction a, const AnalyticFunction& b) { return a -= b; }
  friend AnalyticFunction operator*(double s, AnalyticFunction a) { return a *= s; }
  friend AnalyticFunction operator*(cd s, AnalyticFunction a) { return a *= s; }
  AnalyticFunction operator-() const {
    AnalyticFunction r = *this;
    for (auto& v : r.c_) v = -v;
    return r;
  }

 private:
  BasisPtr b_;
  std::vector<cd> c_;
  bool real_ = true;
};

// ---------------------------------------------------------------- norms

inline double norm(const AnalyticFunction& u, double sigma) {
  if (sigma < 0.0) throw PreconditionError("norm: sigma must be >= 0");
  const auto& b = *u.basis();
  double s = 0.0;
  for (int li = 0; li < b.n_ell(); ++li) {
    const double wl = sigma * b.ell_norm(li);
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      const cd c = u.at(li, j);
      if (c != cd{}) s += std::exp(wl + sigma * std::abs(j)) * std::abs(c);
    }
  }
  return s;
}

inline double max_abs_diff(const AnalyticFunction& a, const AnalyticFunction& b) {
  require_same(a.basis(), b.basis(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Copy the modes shared with another truncation.
inline AnalyticFunction resample(const AnalyticFunction& u, const BasisPtr& target) {
  AnalyticFunction r(target, u.is_real());
  const auto& src = *u.basis();
  const int jm = std::min(src.jmax(), target->jmax());
  for (int li = 0; li < src.n_ell(); ++li) {
    const int ti = target->index_of(src.ell(li));
    if (ti < 0) continue;
    for (int j = -jm; j <= jm; ++j) r.at(ti, j) = u.at(li, j);
  }
  return r;
}

// ---------------------------------------------------------------- algebra

inline AnalyticFunction multiply(const AnalyticFunction& u, const AnalyticFunction& v) {
  require_same(u.basis(), v.basis(), "multiply");
  const auto& b = *u.basis();
  const int jm = b.jmax();
  AnalyticFunction r(u.basis(), u.is_real() && v.is_real());
  std::vector<int> u_rows, v_rows;
  auto nonzero_rows = [&](const AnalyticFunction& f, std::vector<int>& rows) {
    for (int li = 0; li < b.n_ell(); ++li)
      for (int j = -jm; j <= jm; ++j)
        if (f.at(li, j) != cd{}) {
          rows.push_back(li);
          break;
        }
  };
  nonzero_rows(u, u_rows);
  nonzero_rows(v, v_rows);
  for (int a : u_rows) {
    for (int c : v_rows) {
      const int t = b.combine(a, c);
      if (t < 0) continue;
      for (int j1 = -jm; j1 <= jm; ++j1) {
        const cd x = u.at(a, j1);
        if (x == cd{}) continue;
        const int lo = std::max(-jm, -jm - j1), hi = std::min(jm, jm - j1);
        for (int j2 = lo; j2 <= hi; ++j2) r.at(t, j1 + j2) += x * v.at(c, j2);
      }
    }
  }
  if (r.is_real()) r.realify();
  return r;
}

// ---------------------------------------------------------------- calculus

// (i j)^k computed exactly.
inline cd ij_power(int j, int k) {
  double m = 1.0;
  for (int n = 0; n < k; ++n) m *= j;
  switch (k % 4) {
    case 0: return {m, 0.0};
    case 1: return {0.0, m};
    case 2: return {-m, 0.0};
    default: return {0.0, -m};
  }
}

inline AnalyticFunction dx(const AnalyticFunction& u, int order = 1) {
  if (order < 0) throw PreconditionError("dx: negative order");
  AnalyticFunction r = u;
  const auto& b = *u.basis();
  for (int j = -b.jmax(); j <= b.jmax(); ++j) {
    const cd f = ij_power(j, order);
    for (int li = 0; li < b.n_ell(); ++li) r.at(li, j) = order == 0 ? u.at(li, j) : f * u.at(li, j);
  }
  if (r.is_real()) r.realify();
  return r;
}

inline double default_average_tol(const AnalyticFunction& u) { return 1e-12 * (1.0 + norm(u, 0.0)); }

inline AnalyticFunction dx_inv(const AnalyticFunction& u, double tol = -1.0) {
  if (tol < 0.0) tol = default_average_tol(u);
  if (!u.has_zero_x_average(tol)) throw PreconditionError("dx_inv: function has nonzero x-average");
  AnalyticFunction r(u.basis(), u.is_real());
  const auto& b = *u.basis();
  for (int li = 0; li < b.n_ell(); ++li)
    for (int j = -b.jmax(); j <= b.jmax(); ++j)
      if (j != 0) r.at(li, j) = u.at(li, j) / cd(0.0, static_cast<double>(j));
  if (r.is_real()) r.realify();
  return r;
}

inline AnalyticFunction om_dphi(const AnalyticFunction& u, const FrequencyVector& omega) {
  validate_frequency(omega, u.basis()->M());
  AnalyticFunction r = u;
  const auto& b = *u.basis();
  for (int li = 0; li < b.n_ell(); ++li) {
    const cd f(0.0, b.dot(omega, li));
    for (int j = -b.jmax(); j <= b.jmax(); ++j) r.at(li, j) = f * u.at(li, j);
  }
  if (r.is_real()) r.realify();
  return r;
}

// Inverse of omega.d_phi on zero phi-average functions. Every divisor used
// must satisfy |omega.l| > gamma * prod 1/(1 + l_i^2 i^2).
inline AnalyticFunction om_dphi_inv(const AnalyticFunction& u, const FrequencyVector& omega, double gamma = 0.0,
                                    double avg_tol = -1.0) {
  validate_frequency(omega, u.basis()->M());
  if (avg_tol < 0.0) avg_tol = default_average_tol(u);
  const auto& b = *u.basis();
  for (int j = -b.jmax(); j <= b.jmax(); ++j)
    if (std::abs(u.at(0, j)) > avg_tol) throw PreconditionError("om_dphi_inv: function has nonzero phi-average");
  AnalyticFunction r(u.basis(), u.is_real());
  for (int li = 1; li < b.n_ell(); ++li) {
    bool used = false;
    for (int j = -b.jmax(); j <= b.jmax(); ++j) used = used || u.at(li, j) != cd{};
    if (!used) continue;
    const double d = b.dot(omega, li);
    const double floor = gamma * diophantine_weight(b.ell(li));
    if (!(std::abs(d) > floor) || d == 0.0) {
      throw SmallDivisorError("om_dphi_inv: small divisor at l = " + b.ell(li).str(), b.ell(li).entries(), 0, 0, d, floor);
    }
    for (int j = -b.jmax(); j <= b.jmax(); ++j) r.at(li, j) = u.at(li, j) / cd(0.0, d);
  }
  if (r.is_real()) r.realify();
  return r;
}

// ---------------------------------------------------------------- projections

inline AnalyticFunction pi0(const AnalyticFunction& u) {
  AnalyticFunction r(u.basis(), u.is_real());
  for (int li = 0; li < u.basis()->n_ell(); ++li) r.at(li, 0) = u.at(li, 0);
  return r;
}
inline AnalyticFunction pi0_perp(const AnalyticFunction& u) {
  AnalyticFunction r = u;
  for (int li = 0; li < u.basis()->n_ell(); ++li) r.at(li, 0) = cd{};
  return r;
}
inline AnalyticFunction project_N(const AnalyticFunction& u, double N) {
  AnalyticFunction r = u;
  const auto& b = *u.basis();
  for (int li = 0; li < b.n_ell(); ++li)
    if (b.ell_norm(li) > N + 1e-12)
      for (int j = -b.jmax(); j <= b.jmax(); ++j) r.at(li, j) = cd{};
  return r;
}
inline AnalyticFunction project_N_perp(const AnalyticFunction& u, double N) { return u - project_N(u, N); }

// Average over phi: keeps the l = 0 row.
inline AnalyticFunction phi_average(const AnalyticFunction& u) {
  AnalyticFunction r(u.basis(), u.is_real());
  for (int j = -u.jmax(); j <= u.jmax(); ++j) r.at(0, j) = u.at(0, j);
  return r;
}
inline double full_average(const AnalyticFunction& u) { return u.at(0, 0).real(); }

// ---------------------------------------------------------------- grids

struct GridOptions {
  double alias_tol = 1e-6;  // relative to the retained l1 mass
};

inline std::vector<cd> to_grid(const AnalyticFunction& u) { return grid::synth(*u.basis(), u.data()); }

inline std::vector<double> to_real_grid(const AnalyticFunction& u) {
  const auto g = to_grid(u);
  std::vector<double> r(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) r[i] = g[i].real();
  return r;
}

inline AnalyticFunction from_grid(const BasisPtr& b, const std::vector<cd>& values, bool real, const GridOptions& opt = {},
                                  grid::AnalysisReport* rep_out = nullptr) {
  grid::AnalysisReport rep;
  AnalyticFunction u(b, real);
  u.data() = grid::analyze(*b, values, &rep);
  if (rep.alias_l1 > opt.alias_tol * (rep.retained_l1 + std::numeric_limits<double>::min())) {
    throw AliasingError("grid aliasing above tolerance", rep.alias_l1);
  }
  if (rep_out) *rep_out = rep;
  if (real) u.realify();
  return u;
}
inline AnalyticFunction from_real_grid(const BasisPtr& b, const std::vector<double>& values, const GridOptions& opt = {},
                                       grid::AnalysisReport* rep = nullptr) {
  std::vector<cd> v(values.begin(), values.end());
  return from_grid(b, v, true, opt, rep);
}

inline cd evaluate(const AnalyticFunction& u, const std::vector<double>& phi, double x) {
  const auto& b = *u.basis();
  cd s{};
  for (int li = 0; li < b.n_ell(); ++li) {
    const int* d = b.ell_dense(li);
    double th = 0.0;
    for (int k = 0; k < b.M(); ++k) th += d[k] * phi[static_cast<std::size_t>(k)];
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      const cd c = u.at(li, j);
      if (c != cd{}) s += c * std::polar(1.0, th + j * x);
    }
  }
  return s;
}

namespace detail {

// sum_j U[j] e^{i j theta} for modes -jmax..jmax.
inline cd sum_x_modes(const cd* U, int jmax, double theta) {
  const cd z = std::polar(1.0, theta);
  cd s = U[jmax];
  cd zp = 1.0;
  for (int j = 1; j <= jmax; ++j) {
    zp *= z;
    s += U[jmax + j] * zp + U[jmax - j] * std::conj(zp);
  }
  return s;
}

// u evaluated at (phi_p, shift(p, s)) on every grid point.
inline std::vector<cd> eval_x_shifted(const AnalyticFunction& u, const std::vector<double>& shift) {
  const auto& b = *u.basis();
  const auto U = grid::synth_phi(b, u.data());
  std::vector<cd> out(static_cast<std::size_t>(b.n_grid()));
  const int nx = b.x_points(), nj = b.nj();
  for (int p = 0; p < b.n_phi_points(); ++p)
    for (int s = 0; s < nx; ++s) {
      const std::size_t g = static_cast<std::size_t>(p) * nx + s;
      out[g] = sum_x_modes(&U[static_cast<std::size_t>(p) * nj], b.jmax(), shift[g]);
    }
  return out;
}

// Evaluate u at (phi_p + omega*shift(p), x_s), shift given on the phi grid.
inline std::vector<cd> eval_phi_shifted(const AnalyticFunction& u, const FrequencyVector& omega,
                                        const std::vector<double>& shift) {
  const auto& b = *u.basis();
  const auto U = grid::synth_x(b, u.data());
  const int nx = b.x_points(), M = b.M();
  std::vector<cd> out(static_cast<std::size_t>(b.n_grid()), cd{});
  std::vector<int> t;
  std::vector<std::vector<cd>> pw(static_cast<std::size_t>(M));
  for (int p = 0; p < b.n_phi_points(); ++p) {
    b.phi_point(p, t);
    for (int k = 0; k < M; ++k) {
      const int m = b.max_mode(k);
      const double th = b.phi_coord(k, t[static_cast<std::size_t>(k)]) + omega[static_cast<std::size_t>(k)] * shift[static_cast<std::size_t>(p)];
      auto& w = pw[static_cast<std::size_t>(k)];
      w.assign(static_cast<std::size_t>(2 * m + 1), cd(1.0));
      const cd z = std::polar(1.0, th);
      for (int v = 1; v <= m; ++v) {
        w[static_cast<std::size_t>(m + v)] = w[static_cast<std::size_t>(m + v - 1)] * z;
        w[static_cast<std::size_t>(m - v)] = std::conj(w[static_cast<std::size_t>(m + v)]);
      }
    }
    cd* dst = &out[static_cast<std::size_t>(p) * nx];
    for (int li = 0; li < b.n_ell(); ++li) {
      const int* d = b.ell_dense(li);
      cd ph = 1.0;
      for (int k = 0; k < M; ++k) ph *= pw[static_cast<std::size_t>(k)][static_cast<std::size_t>(d[k] + b.max_mode(k))];
      const cd* src = &U[static_cast<std::size_t>(li) * nx];
      for (int s = 0; s < nx; ++s) dst[s] += ph * src[s];
    }
  }
  return out;
}

inline std::vector<double> phi_grid_values(const AnalyticFunction& beta) {
  const auto& b = *beta.basis();
  const auto g = to_grid(beta);
  std::vector<double> r(static_cast<std::size_t>(b.n_phi_points()));
  for (int p = 0; p < b.n_phi_points(); ++p) r[static_cast<std::size_t>(p)] = g[static_cast<std::size_t>(p) * b.x_points()].real();
  return r;
}

inline void require_phi_only(const AnalyticFunction& f, const char* what) {
  if (!f.is_phi_only(1e-12 * (1.0 + norm(f, 0.0)))) throw PreconditionError(std::string(what) + ": expected a function of phi only");
}

}  // namespace detail

// ---------------------------------------------------------------- compositions

// u(phi, x + alpha(phi, x)).
inline AnalyticFunction compose_x_diffeo(const AnalyticFunction& u, const AnalyticFunction& alpha, const GridOptions& opt = {}) {
  require_same(u.basis(), alpha.basis(), "compose_x_diffeo");
  const auto& b = *u.basis();
  auto shift = to_real_grid(alpha);
  for (int s = 0; s < b.x_points(); ++s)
    for (int p = 0; p < b.n_phi_points(); ++p) shift[static_cast<std::size_t>(p) * b.x_points() + s] += b.x_coord(s);
  return from_grid(u.basis(), detail::eval_x_shifted(u, shift), u.is_real(), opt);
}

// u(phi, x + p(phi)).
inline AnalyticFunction compose_x_translation(const AnalyticFunction& u, const AnalyticFunction& p, const GridOptions& opt = {}) {
  detail::require_phi_only(p, "compose_x_translation");
  return compose_x_diffeo(u, p, opt);
}

// u(phi + omega*beta(phi), x).
inline AnalyticFunction compose_phi_shift(const AnalyticFunction& u, const AnalyticFunction& beta, const FrequencyVector& omega,
                                          const GridOptions& opt = {}) {
  require_same(u.basis(), beta.basis(), "compose_phi_shift");
  validate_frequency(omega, u.basis()->M());
  detail::require_phi_only(beta, "compose_phi_shift");
  return from_grid(u.basis(), detail::eval_phi_shifted(u, omega, detail::phi_grid_values(beta)), u.is_real(), opt);
}

struct InversionResult {
  AnalyticFunction inverse;
  int iterations = 0;
  double residual = 0.0;          // max over grid of the defining identity, truncated inverse
  double residual_reverse = 0.0;  // other composition order
};

constexpr double kFixedPointTol = 1e-13;
constexpr int kFixedPointMaxIter = 100;

// alpha_tilde with x + alpha(x) = y at x = y + alpha_tilde(y).
inline InversionResult invert_x_diffeo(const AnalyticFunction& alpha, const GridOptions& opt = {}) {
  const auto& b = *alpha.basis();
  const auto ax = to_real_grid(dx(alpha));
  double lip = 0.0;
  for (double v : ax) lip = std::max(lip, std::abs(v));
  if (!(lip < 1.0)) throw ConvergenceError("invert_x_diffeo: map is not a contraction (sup |alpha_x| >= 1)", 0, lip);
  const int nx = b.x_points();
  const auto A = grid::synth_phi(b, alpha.data());
  std::vector<double> at(static_cast<std::size_t>(b.n_grid()), 0.0), next(at.size());
  int it = 0;
  double delta = std::numeric_limits<double>::infinity();
  while (delta > kFixedPointTol) {
    if (++it > kFixedPointMaxIter) throw ConvergenceError("invert_x_diffeo: fixed point did not converge", it, delta);
    delta = 0.0;
    for (int p = 0; p < b.n_phi_points(); ++p)
      for (int s = 0; s < nx; ++s) {
        const std::size_t g = static_cast<std::size_t>(p) * nx + s;
        next[g] = -detail::sum_x_modes(&A[static_cast<std::size_t>(p) * b.nj()], b.jmax(), b.x_coord(s) + at[g]).real();
        delta = std::max(delta, std::abs(next[g] - at[g]));
      }
    std::swap(at, next);
  }
  InversionResult res;
  res.iterations = it;
  res.inverse = from_real_grid(alpha.basis(), at, opt);
  const auto atg = to_real_grid(res.inverse);
  for (int p = 0; p < b.n_phi_points(); ++p)
    for (int s = 0; s < nx; ++s) {
      const std::size_t g = static_cast<std::size_t>(p) * nx + s;
      const double y = b.x_coord(s);
      const double x = y + atg[g];
      const double fwd = detail::sum_x_modes(&A[static_cast<std::size_t>(p) * b.nj()], b.jmax(), x).real();
      res.residual = std::max(res.residual, std::abs(atg[g] + fwd));
    }
  const auto Ainv = grid::synth_phi(b, res.inverse.data());
  const auto ag = to_real_grid(alpha);
  for (int p = 0; p < b.n_phi_points(); ++p)
    for (int s = 0; s < nx; ++s) {
      const std::size_t g = static_cast<std::size_t>(p) * nx + s;
      const double y = b.x_coord(s) + ag[g];
      const double back = detail::sum_x_modes(&Ainv[static_cast<std::size_t>(p) * b.nj()], b.jmax(), y).real();
      res.residual_reverse = std::max(res.residual_reverse, std::abs(ag[g] + back));
    }
  return res;
}

namespace detail {
// beta evaluated at phi-grid point p shifted by omega*shift.
inline double eval_phi_only_at(const AnalyticFunction& beta, const FrequencyVector& omega, int p, double shift) {
  const auto& b = *beta.basis();
  std::vector<int> t;
  b.phi_point(p, t);
  double s = 0.0;
  for (int li = 0; li < b.n_ell(); ++li) {
    const cd c = beta.at(li, 0);
    if (c == cd{}) continue;
    const int* d = b.ell_dense(li);
    double th = 0.0;
    for (int k = 0; k < b.M(); ++k)
      th += d[k] * (b.phi_coord(k, t[static_cast<std::size_t>(k)]) + omega[static_cast<std::size_t>(k)] * shift);
    s += (c * std::polar(1.0, th)).real();
  }
  return s;
}
}  // namespace detail

// beta_tilde with theta = phi + omega*beta(phi) at phi = theta + omega*beta_tilde(theta).
inline InversionResult invert_phi_shift(const AnalyticFunction& beta, const FrequencyVector& omega, const GridOptions& opt = {}) {
  validate_frequency(omega, beta.basis()->M());
  detail::require_phi_only(beta, "invert_phi_shift");
  const auto& b = *beta.basis();
  const auto db = detail::phi_grid_values(om_dphi(beta, omega));
  double lip = 0.0;
  for (double v : db) lip = std::max(lip, std::abs(v));
  if (!(lip < 1.0)) throw ConvergenceError("invert_phi_shift: map is not a contraction (sup |omega.d beta| >= 1)", 0, lip);
  const int np = b.n_phi_points();
  std::vector<double> bt(static_cast<std::size_t>(np), 0.0), next(bt.size());
  int it = 0;
  double delta = std::numeric_limits<double>::infinity();
  while (delta > kFixedPointTol) {
    if (++it > kFixedPointMaxIter) throw ConvergenceError("invert_phi_shift: fixed point did not converge", it, delta);
    delta = 0.0;
    for (int p = 0; p < np; ++p) {
      next[static_cast<std::size_t>(p)] = -detail::eval_phi_only_at(beta, omega, p, bt[static_cast<std::size_t>(p)]);
      delta = std::max(delta, std::abs(next[static_cast<std::size_t>(p)] - bt[static_cast<std::size_t>(p)]));
    }
    std::swap(bt, next);
  }
  std::vector<double> full(static_cast<std::size_t>(b.n_grid()));
  for (int p = 0; p < np; ++p)
    for (int s = 0; s < b.x_points(); ++s) full[static_cast<std::size_t>(p) * b.x_points() + s] = bt[static_cast<std::size_t>(p)];
  InversionResult res;
  res.iterations = it;
  res.inverse = from_real_grid(beta.basis(), full, opt);
  const auto btg = detail::phi_grid_values(res.inverse);
  const auto bg = detail::phi_grid_values(beta);
  for (int p = 0; p < np; ++p) {
    const double fwd = detail::eval_phi_only_at(beta, omega, p, btg[static_cast<std::size_t>(p)]);
    res.residual = std::max(res.residual, std::abs(btg[static_cast<std::size_t>(p)] + fwd));
    const double back = detail::eval_phi_only_at(res.inverse, omega, p, bg[static_cast<std::size_t>(p)]);
    res.residual_reverse = std::max(res.residual_reverse, std::abs(bg[static_cast<std::size_t>(p)] + back));
  }
  return res;
}

// ---------------------------------------------------------------- Moser composition

// Scalar function analytic on the disc |z| < radius.
struct PowerSeries {
  std::function<cd(cd)> f;
  double radius = std::numeric_limits<double>::infinity();
  std::string name;

  static PowerSeries identity() { return {[](cd z) { return z; }, std::numeric_limits<double>::infinity(), "identity"}; }
  // (1 + z)^p, principal branch.
  static PowerSeries binomial(double p) {
    return {[p](cd z) {
              const cd w = 1.0 + z;
              if (w.imag() == 0.0 && w.real() > 0.0) return cd(std::pow(w.real(), p));
              return std::pow(w, p);
            },
            1.0, "binomial"};
  }
  static PowerSeries reciprocal() { return binomial(-1.0); }
};

inline AnalyticFunction moser_compose(const PowerSeries& series, const AnalyticFunction& u, const GridOptions& opt = {}) {
  const double n = norm(u, 0.0);
  if (!(n < series.radius)) throw PreconditionError("moser_compose: argument outside the convergence radius of " + series.name);
  auto g = to_grid(u);
  for (auto& v : g) v = series.f(u.is_real() ? cd(v.real()) : v);
  return from_grid(u.basis(), g, u.is_real(), opt);
}

// Pointwise map of several functions through the grid.
inline AnalyticFunction pointwise(const std::vector<const AnalyticFunction*>& args,
                                  const std::function<double(const double*)>& f, const GridOptions& opt = {}) {
  if (args.empty()) throw PreconditionError("pointwise: no arguments");
  std::vector<std::vector<double>> g;
  for (const auto* a : args) {
    require_same(args[0]->basis(), a->basis(), "pointwise");
    g.push_back(to_real_grid(*a));
  }
  std::vector<double> out(g[0].size());
  std::vector<double> x(args.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < args.size(); ++k) x[k] = g[k][i];
    out[i] = f(x.data());
  }
  return from_real_grid(args[0]->basis(), out, opt);
}

// ---------------------------------------------------------------- Lipschitz surrogate

struct FrequencySample {
  FrequencyVector omega;
  AnalyticFunction f;
};

inline double lipschitz_norm(const std::vector<FrequencySample>& samples, double gamma, double sigma) {
  if (samples.size() < 2) throw PreconditionError("lipschitz_norm: need at least two samples");
  double sup = 0.0, lip = 0.0;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    sup = std::max(sup, norm(samples[a].f, sigma));
    for (std::size_t c = a + 1; c < samples.size(); ++c) {
      double h = 0.0;
      const auto& w1 = samples[a].omega;
      const auto& w2 = samples[c].omega;
      if (w1.size() != w2.size()) throw PreconditionError("lipschitz_norm: frequency length mismatch");
      for (std::size_t k = 0; k < w1.size(); ++k) h = std::max(h, std::abs(w1[k] - w2[k]));
      if (h == 0.0) throw PreconditionError("lipschitz_norm: duplicate frequency sample");
      lip = std::max(lip, norm(samples[a].f - samples[c].f, sigma) / h);
    }
  }
  return sup + gamma * lip;
}

}  // namespace airy
