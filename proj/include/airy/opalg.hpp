#pragma once
// Block-Toeplitz operators on the zero-x-average Fourier basis:
// (R u)_j(l) = sum_{l', j'} R_j^{j'}(l - l') u_{j'}(l'), j, j' != 0,
// optionally plus a multiple of omega.d_phi.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <vector>

#include "airy/analytic.hpp"
#include "airy/basis.hpp"
#include "airy/errors.hpp"

namespace airy {

using Block = Eigen::MatrixXcd;

class OperatorMatrix {
 public:
  OperatorMatrix() = default;
  explicit OperatorMatrix(BasisPtr b, bool real = true) : b_(std::move(b)), real_(real) {}

  static OperatorMatrix zero(BasisPtr b) { return OperatorMatrix(std::move(b)); }
  static OperatorMatrix identity(BasisPtr b) {
    OperatorMatrix r(b);
    r.block(0) = Block::Identity(r.dim(), r.dim());
    return r;
  }
  // Multiplication by a(phi, x), restricted to the j != 0 space.
  static OperatorMatrix multiplication(const AnalyticFunction& a) {
    OperatorMatrix r(a.basis(), a.is_real());
    const auto& b = *a.basis();
    const int jm = b.jmax();
    for (int li = 0; li < b.n_ell(); ++li) {
      bool any = false;
      for (int d = -jm; d <= jm && !any; ++d) any = a.at(li, d) != cd{};
      if (!any) continue;
      Block& B = r.block(li);
      for (int j = -jm; j <= jm; ++j) {
        if (j == 0) continue;
        for (int jp = -jm; jp <= jm; ++jp) {
          if (jp == 0 || std::abs(j - jp) > jm) continue;
          B(pos(j, jm), pos(jp, jm)) = a.at(li, j - jp);
        }
      }
    }
    return r;
  }
  // d_x^k for any integer k (negative powers act on j != 0).
  static OperatorMatrix dx_power(BasisPtr b, int k) {
    OperatorMatrix r(b);
    const int jm = r.jmax();
    Block& B = r.block(0);
    for (int j = -jm; j <= jm; ++j) {
      if (j == 0) continue;
      B(pos(j, jm), pos(j, jm)) = k >= 0 ? ij_power(j, k) : 1.0 / ij_power(j, -k);
    }
    return r;
  }
  static OperatorMatrix time_derivative(BasisPtr b, const FrequencyVector& omega) {
    validate_frequency(omega, b->M());
    OperatorMatrix r(std::move(b));
    r.time_coeff_ = 1.0;
    r.omega_ = omega;
    return r;
  }
  // Diagonal operator with entries d(j) on every l.
  static OperatorMatrix diagonal(BasisPtr b, const std::vector<cd>& d_by_pos, bool real = true) {
    OperatorMatrix r(std::move(b), real);
    Block& B = r.block(0);
    for (int p = 0; p < r.dim(); ++p) B(p, p) = d_by_pos[static_cast<std::size_t>(p)];
    return r;
  }

  // Row/column position of spatial mode j != 0.
  static int pos(int j, int jmax) { return j < 0 ? j + jmax : j + jmax - 1; }
  static int jval(int p, int jmax) { return p < jmax ? p - jmax : p - jmax + 1; }

  const BasisPtr& basis() const { return b_; }
  int jmax() const { return b_->jmax(); }
  int dim() const { return 2 * b_->jmax(); }
  bool is_real() const { return real_; }
  void set_real(bool r) { real_ = r; }

  double time_coeff() const { return time_coeff_; }
  const FrequencyVector& omega() const { return omega_; }
  void set_time(double c, const FrequencyVector& omega) {
    time_coeff_ = c;
    omega_ = omega;
  }
  bool has_time() const { return time_coeff_ != 0.0; }

  Block& block(int li) {
    auto it = blocks_.find(li);
    if (it == blocks_.end()) it = blocks_.emplace(li, Block::Zero(dim(), dim())).first;
    return it->second;
  }
  const Block* find(int li) const {
    auto it = blocks_.find(li);
    return it == blocks_.end() ? nullptr : &it->second;
  }
  const std::map<int, Block>& blocks() const { return blocks_; }
  std::map<int, Block>& blocks() { return blocks_; }

  cd entry(const MultiIndex& row_l, const MultiIndex& col_l, int j, int jp) const {
    cd v{};
    const int d = b_->index_of(row_l - col_l);
    if (d >= 0)
      if (const Block* B = find(d)) v = (*B)(pos(j, jmax()), pos(jp, jmax()));
    if (row_l == col_l && j == jp && has_time()) {
      double s = 0.0;
      for (int k = 1; k <= row_l.max_site(); ++k) s += omega_[static_cast<std::size_t>(k - 1)] * row_l[k];
      v += cd(0.0, time_coeff_ * s);
    }
    return v;
  }

  // Drop blocks whose largest entry is <= tol.
  void prune(double tol) {
    for (auto it = blocks_.begin(); it != blocks_.end();) {
      if (it->second.cwiseAbs().maxCoeff() <= tol)
        it = blocks_.erase(it);
      else
        ++it;
    }
  }
  double max_abs() const {
    double m = 0.0;
    for (const auto& [k, B] : blocks_) m = std::max(m, B.cwiseAbs().maxCoeff());
    return m;
  }

  // Enforce R(-l)_{-j,-j'} = conj(R(l)_{j,j'}).
  void realify() {
    const int n = dim();
    std::map<int, Block> out;
    for (const auto& [li, B] : blocks_) {
      const int ni = b_->neg(li);
      if (ni < 0) continue;
      const Block* C = find(ni);
      Block R(n, n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          const cd other = C ? std::conj((*C)(n - 1 - r, n - 1 - c)) : cd{};
          R(r, c) = 0.5 * (B(r, c) + other);
        }
      out[li] = R;
      if (!C) {
        Block S(n, n);
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c) S(r, c) = std::conj(R(n - 1 - r, n - 1 - c));
        out[ni] = S;
      }
    }
    blocks_ = std::move(out);
  }

  OperatorMatrix& operator+=(const OperatorMatrix& o) {
    require_same(b_, o.b_, "operator add");
    for (const auto& [k, B] : o.blocks_) block(k) += B;
    merge_time(o.time_coeff_, o.omega_);
    real_ = real_ && o.real_;
    return *this;
  }
  OperatorMatrix& operator-=(const OperatorMatrix& o) {
    require_same(b_, o.b_, "operator subtract");
    for (const auto& [k, B] : o.blocks_) block(k) -= B;
    merge_time(-o.time_coeff_, o.omega_);
    real_ = real_ && o.real_;
    return *this;
  }
  OperatorMatrix& operator*=(cd s) {
    for (auto& [k, B] : blocks_) B *= s;
    time_coeff_ *= s.real();
    if (s.imag() != 0.0) {
      if (has_time()) throw PreconditionError("operator scale: complex multiple of a time derivative");
      real_ = false;
    }
    return *this;
  }
  OperatorMatrix& operator*=(double s) { return *this *= cd(s); }
  friend OperatorMatrix operator+(OperatorMatrix a, const OperatorMatrix& b) { return a += b; }
  friend OperatorMatrix operator-(OperatorMatrix a, const OperatorMatrix& b) { return a -= b; }
  friend OperatorMatrix operator*(cd s, OperatorMatrix a) { return a *= s; }
  friend OperatorMatrix operator*(double s, OperatorMatrix a) { return a *= s; }

 private:
  void merge_time(double c, const FrequencyVector& omega) {
    if (c == 0.0) return;
    if (has_time() && omega_ != omega) throw PreconditionError("operator add: mismatched frequency vectors");
    omega_ = omega;
    time_coeff_ += c;
  }

  BasisPtr b_;
  std::map<int, Block> blocks_;
  bool real_ = true;
  double time_coeff_ = 0.0;
  FrequencyVector omega_;
};

// ---------------------------------------------------------------- structured operator

// omega.d_phi + lambda3 d_x^3 + B d_x + C.
struct DifferentialOperator {
  double lambda3 = 1.0;
  AnalyticFunction B;
  AnalyticFunction C;
  FrequencyVector omega;

  static DifferentialOperator constant(BasisPtr b, double lambda3, double lambda1, const FrequencyVector& omega) {
    DifferentialOperator L;
    L.lambda3 = lambda3;
    L.B = AnalyticFunction::constant(b, lambda1);
    L.C = AnalyticFunction(b);
    L.omega = omega;
    return L;
  }
  const BasisPtr& basis() const { return B.basis(); }
  // Constant part of the x-average of B.
  double lambda1() const { return B.at(0, 0).real(); }
  // Largest phi-dependent part of the x-average of B.
  double normalization_defect() const {
    double d = 0.0;
    for (int li = 1; li < B.basis()->n_ell(); ++li) d = std::max(d, std::abs(B.at(li, 0)));
    return d;
  }
  bool normalized(double tol = 1e-12) const { return normalization_defect() <= tol; }
};

// Structured application on the full space (no projection).
inline AnalyticFunction apply_structured(const DifferentialOperator& L, const AnalyticFunction& u) {
  AnalyticFunction r = om_dphi(u, L.omega);
  r += L.lambda3 * dx(u, 3);
  r += multiply(L.B, dx(u, 1));
  r += multiply(L.C, u);
  return r;
}

// ---------------------------------------------------------------- algebra

// (R u) restricted to j != 0; the j = 0 column of u is ignored.
inline AnalyticFunction apply(const OperatorMatrix& R, const AnalyticFunction& u) {
  require_same(R.basis(), u.basis(), "apply");
  const auto& b = *u.basis();
  const int jm = b.jmax(), n = R.dim();
  AnalyticFunction out(u.basis(), R.is_real() && u.is_real());
  Eigen::VectorXcd v(n);
  std::vector<Eigen::VectorXcd> cols(static_cast<std::size_t>(b.n_ell()));
  std::vector<char> nz(static_cast<std::size_t>(b.n_ell()), 0);
  for (int li = 0; li < b.n_ell(); ++li) {
    auto& c = cols[static_cast<std::size_t>(li)];
    c.resize(n);
    for (int p = 0; p < n; ++p) {
      c(p) = u.at(li, OperatorMatrix::jval(p, jm));
      if (c(p) != cd{}) nz[static_cast<std::size_t>(li)] = 1;
    }
  }
  for (int li = 0; li < b.n_ell(); ++li) {
    v.setZero();
    for (const auto& [d, B] : R.blocks()) {
      const int src = b.combine(li, d, -1);
      if (src < 0 || !nz[static_cast<std::size_t>(src)]) continue;
      v.noalias() += B * cols[static_cast<std::size_t>(src)];
    }
    if (R.has_time()) v += cd(0.0, R.time_coeff() * b.dot(R.omega(), li)) * cols[static_cast<std::size_t>(li)];
    for (int p = 0; p < n; ++p) out.at(li, OperatorMatrix::jval(p, jm)) = v(p);
  }
  if (out.is_real()) out.realify();
  return out;
}

// Block convolution product; time derivatives are not closed under products.
inline OperatorMatrix compose(const OperatorMatrix& R, const OperatorMatrix& Q) {
  require_same(R.basis(), Q.basis(), "compose");
  if (R.has_time() || Q.has_time()) throw PreconditionError("compose: products with omega.d_phi are not block-Toeplitz");
  const auto& b = *R.basis();
  OperatorMatrix out(R.basis(), R.is_real() && Q.is_real());
  for (const auto& [a, A] : R.blocks())
    for (const auto& [c, C] : Q.blocks()) {
      const int t = b.combine(a, c);
      if (t < 0) continue;
      out.block(t).noalias() += A * C;
    }
  return out;
}

// Block-wise [omega.d_phi, T]: block l scaled by i omega.l.
inline OperatorMatrix phi_derivative(const OperatorMatrix& T, const FrequencyVector& omega) {
  OperatorMatrix out(T.basis(), T.is_real());
  for (const auto& [li, B] : T.blocks()) {
    const double w = T.basis()->dot(omega, li);
    if (w != 0.0) out.block(li) = cd(0.0, w) * B;
  }
  return out;
}

// [A, B] = AB - BA.
inline OperatorMatrix commutator(const OperatorMatrix& A, const OperatorMatrix& B) {
  require_same(A.basis(), B.basis(), "commutator");
  OperatorMatrix At = A, Bt = B;
  At.set_time(0.0, {});
  Bt.set_time(0.0, {});
  OperatorMatrix out = compose(At, Bt);
  out -= compose(Bt, At);
  if (A.has_time()) out += A.time_coeff() * phi_derivative(Bt, A.omega());
  if (B.has_time()) out -= B.time_coeff() * phi_derivative(At, B.omega());
  return out;
}

// Ad_A(B) = [B, A].
inline OperatorMatrix ad(const OperatorMatrix& A, const OperatorMatrix& B) { return commutator(B, A); }

inline OperatorMatrix ad_power(const OperatorMatrix& A, const OperatorMatrix& B, int k) {
  if (k < 0) throw PreconditionError("ad_power: negative power");
  OperatorMatrix r = B;
  for (int i = 0; i < k; ++i) r = ad(A, r);
  return r;
}

// sum_l e^{sigma |l|} sup_{j'} sum_j e^{sigma |j - j'|} |R_j^{j'}(l)| <j'>^{-m}; the time part is not counted.
inline double op_norm(const OperatorMatrix& R, double sigma, double m) {
  const auto& b = *R.basis();
  const int jm = R.jmax(), n = R.dim();
  double s = 0.0;
  for (const auto& [li, B] : R.blocks()) {
    double best = 0.0;
    for (int c = 0; c < n; ++c) {
      const int jp = OperatorMatrix::jval(c, jm);
      double col = 0.0;
      for (int r = 0; r < n; ++r) {
        const double a = std::abs(B(r, c));
        if (a != 0.0) col += std::exp(sigma * std::abs(OperatorMatrix::jval(r, jm) - jp)) * a;
      }
      best = std::max(best, col * std::pow(static_cast<double>(std::abs(jp)), -m));
    }
    s += std::exp(sigma * b.ell_norm(li)) * best;
  }
  return s;
}

inline OperatorMatrix project_N(const OperatorMatrix& R, double N) {
  OperatorMatrix out = R;
  out.set_time(0.0, {});
  for (auto it = out.blocks().begin(); it != out.blocks().end();) {
    if (R.basis()->ell_norm(it->first) > N + 1e-12)
      it = out.blocks().erase(it);
    else
      ++it;
  }
  return out;
}
inline OperatorMatrix project_N_perp(const OperatorMatrix& R, double N) {
  OperatorMatrix t = R;
  t.set_time(0.0, {});
  return t - project_N(R, N);
}

// ---------------------------------------------------------------- series

constexpr int kSeriesCap = 60;

struct SeriesResult {
  OperatorMatrix value;
  int terms = 0;
  double tail = 0.0;
};

// sum_{k >= k0} Ad_G^k(Y) / (k + s)!, summed until the ratio-test tail is below tol.
inline SeriesResult lie_series(const OperatorMatrix& G, const OperatorMatrix& Y, int k0, int s, double tol) {
  OperatorMatrix V = Y;  // Ad^k(Y) / (k + s)!
  double fact = 1.0;
  for (int i = 2; i <= s; ++i) fact *= i;
  V *= 1.0 / fact;
  SeriesResult res{OperatorMatrix(Y.basis(), Y.is_real() && G.is_real()), 0, 0.0};
  double prev = -1.0;
  for (int k = 0;; ++k) {
    if (k > 0) V = (1.0 / (k + s)) * ad(G, V);
    if (k >= k0) {
      res.value += V;
      res.terms = k - k0 + 1;
    }
    const double size = op_norm(V, 0.0, 0.0);
    if (k >= 1 && size == 0.0) break;
    if (k >= std::max(1, k0) && prev > 0.0) {
      const double q = size / prev;
      if (q < 1.0) {
        const double tail = size * q / (1.0 - q);
        res.tail = tail;
        if (tail <= tol) break;
      }
    }
    if (k >= kSeriesCap) throw ConvergenceError("Lie series did not converge within the term cap", k, size);
    prev = size;
  }
  if (res.value.is_real()) res.value.realify();
  return res;
}

// e^{-G} B e^{G} = sum_k Ad_G^k(B) / k!.
inline SeriesResult exp_conjugate(const OperatorMatrix& G, const OperatorMatrix& B, double tol) {
  SeriesResult r = lie_series(G, B, 1, 0, tol);
  r.value += B;
  r.terms += 1;
  if (r.value.is_real()) r.value.realify();
  return r;
}

struct VectorSeriesResult {
  AnalyticFunction value;
  int terms = 0;
  double tail = 0.0;
};

// e^{G} u = sum_k G^k u / k!.
inline VectorSeriesResult exp_apply(const OperatorMatrix& G, const AnalyticFunction& u, double tol) {
  if (G.has_time()) throw PreconditionError("exp_apply: generator contains omega.d_phi");
  AnalyticFunction v = pi0_perp(u);
  VectorSeriesResult res{v, 1, 0.0};
  double prev = norm(v, 0.0);
  if (prev == 0.0) return res;
  for (int k = 1;; ++k) {
    v = apply(G, v);
    v *= 1.0 / k;
    res.value += v;
    res.terms = k + 1;
    const double size = norm(v, 0.0);
    if (size == 0.0) break;
    const double q = size / prev;
    if (q < 1.0) {
      res.tail = size * q / (1.0 - q);
      if (res.tail <= tol) break;
    }
    if (k >= kSeriesCap) throw ConvergenceError("exp_apply did not converge within the term cap", k, size);
    prev = size;
  }
  if (res.value.is_real()) res.value.realify();
  return res;
}

// ---------------------------------------------------------------- materialization

inline OperatorMatrix materialize(const DifferentialOperator& L) {
  const auto& b = L.basis();
  OperatorMatrix out = OperatorMatrix::time_derivative(b, L.omega);
  out += L.lambda3 * OperatorMatrix::dx_power(b, 3);
  out += compose(OperatorMatrix::multiplication(L.B), OperatorMatrix::dx_power(b, 1));
  out += OperatorMatrix::multiplication(L.C);
  out.set_real(L.B.is_real() && L.C.is_real());
  return out;
}

// pi0_perp g d_x^{-1}.
inline OperatorMatrix order_one_generator(const AnalyticFunction& g) {
  return compose(OperatorMatrix::multiplication(g), OperatorMatrix::dx_power(g.basis(), -1));
}

struct CommutatorSplit {
  AnalyticFunction leading;  // 3 g_x
  OperatorMatrix remainder;  // pi0_perp(3 g_xx + g_xxx d_x^{-1}); the pi0 piece is zero on j != 0
};

// [d_x^3, pi0_perp g d_x^{-1}] = 3 g_x d_x + remainder.
inline CommutatorSplit commutator_dx3_G(const AnalyticFunction& g) {
  if (!g.has_zero_x_average(default_average_tol(g))) throw PreconditionError("commutator_dx3_G: g must have zero x-average");
  CommutatorSplit s{3.0 * dx(g, 1), OperatorMatrix(g.basis(), g.is_real())};
  s.remainder = OperatorMatrix::multiplication(3.0 * dx(g, 2));
  s.remainder += compose(OperatorMatrix::multiplication(dx(g, 3)), OperatorMatrix::dx_power(g.basis(), -1));
  return s;
}

// Window |l|_eta <= K, 0 < |j| <= jmax of a basis.
struct ModeWindow {
  double K = 0.0;
  int jmax = 1;
  static ModeWindow half_of(const Basis& b) { return {b.lattice().K / 2.0, std::max(1, b.jmax() / 2)}; }
  bool contains(const Basis& b, int li, int j) const { return j != 0 && std::abs(j) <= jmax && b.ell_norm(li) <= K + 1e-12; }
};

// ---------------------------------------------------------------- dense view

// Dense matrix on (l, j != 0), row index li * dim + pos(j).
inline Eigen::MatrixXcd to_dense(const OperatorMatrix& R) {
  const auto& b = *R.basis();
  const int n = R.dim(), nl = b.n_ell();
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nl) * n, static_cast<Eigen::Index>(nl) * n);
  for (int r = 0; r < nl; ++r)
    for (int c = 0; c < nl; ++c) {
      const int d = b.combine(r, c, -1);
      if (d < 0) continue;
      if (const Block* B = R.find(d)) D.block(static_cast<Eigen::Index>(r) * n, static_cast<Eigen::Index>(c) * n, n, n) = *B;
    }
  if (R.has_time())
    for (int r = 0; r < nl; ++r)
      for (int p = 0; p < n; ++p)
        D(static_cast<Eigen::Index>(r) * n + p, static_cast<Eigen::Index>(r) * n + p) += cd(0.0, R.time_coeff() * b.dot(R.omega(), r));
  return D;
}

inline Eigen::VectorXcd to_dense(const AnalyticFunction& u) {
  const auto& b = *u.basis();
  const int jm = b.jmax(), n = 2 * jm;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(b.n_ell()) * n);
  for (int li = 0; li < b.n_ell(); ++li)
    for (int p = 0; p < n; ++p) v(static_cast<Eigen::Index>(li) * n + p) = u.at(li, OperatorMatrix::jval(p, jm));
  return v;
}

inline AnalyticFunction from_dense(const BasisPtr& b, const Eigen::VectorXcd& v, bool real) {
  AnalyticFunction u(b, real);
  const int jm = b->jmax(), n = 2 * jm;
  for (int li = 0; li < b->n_ell(); ++li)
    for (int p = 0; p < n; ++p) u.at(li, OperatorMatrix::jval(p, jm)) = v(static_cast<Eigen::Index>(li) * n + p);
  if (real) u.realify();
  return u;
}

}  // namespace airy
