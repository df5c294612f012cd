#pragma once
// One change of variables T = T1 o T2 o T3 with multiplier r conjugating
// omega.d_phi + (lambda3 + d3) d^3 + d2 d^2 + (a1 + d1) d + (a0 + d0)
// to omega.d_phi + lambda3+ d^3 + a1+ d + a0+:
//   T1 v = (1 + alpha_x) v(phi, x + alpha)
//   T2 v = v(phi + omega beta(phi), x)
//   T3 v = v(phi, x + p(phi)).

#include <array>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "airy/analytic.hpp"
#include "airy/homological.hpp"
#include "airy/opalg.hpp"

namespace airy {

// ---------------------------------------------------------------- quadratic forms

// Q(u) = sum q_{i,j} (d^i u)(d^j u) with i <= 2, j <= 3, i + j <= 4.
struct QuadraticForm {
  std::map<std::pair<int, int>, AnalyticFunction> q;

  static bool admissible(int i, int j) { return i >= 0 && j >= 0 && i <= 2 && j <= 3 && i + j <= 4; }

  void set(int i, int j, AnalyticFunction f) {
    if (!admissible(i, j)) throw PreconditionError("QuadraticForm: index pair outside the admissible table");
    q[{i, j}] = std::move(f);
  }
  const AnalyticFunction* get(int i, int j) const {
    auto it = q.find({i, j});
    return it == q.end() ? nullptr : &it->second;
  }
  double total_norm(double sigma) const {
    double s = 0.0;
    for (const auto& [k, f] : q) s += norm(f, sigma);
    return s;
  }
};

// Coefficients of d_xx(3 c3 u_x^2 + 2 c2 u u_x + c1 u^2) - d_x(c2 u_x^2 + 2 c1 u u_x + 3 c0 u^2).
// The c1 terms cancel.
inline QuadraticForm initial_quadratic(const BasisPtr& b, double c0, [[maybe_unused]] double c1, double c2, double c3) {
  QuadraticForm Q;
  auto c = [&](double v) { return AnalyticFunction::constant(b, v); };
  Q.set(2, 2, c(6.0 * c3));
  Q.set(1, 3, c(6.0 * c3));
  Q.set(1, 2, c(4.0 * c2));
  Q.set(0, 3, c(2.0 * c2));
  Q.set(1, 1, c(0.0));
  Q.set(0, 2, c(0.0));
  Q.set(0, 1, c(-6.0 * c0));
  return Q;
}

// Spectral evaluation (products by convolution).
inline AnalyticFunction evaluate(const QuadraticForm& Q, const AnalyticFunction& u) {
  AnalyticFunction r(u.basis(), u.is_real());
  std::array<AnalyticFunction, 4> d;
  for (int k = 0; k <= 3; ++k) d[static_cast<std::size_t>(k)] = dx(u, k);
  for (const auto& [ij, q] : Q.q) r += multiply(q, multiply(d[static_cast<std::size_t>(ij.first)], d[static_cast<std::size_t>(ij.second)]));
  return r;
}

// Pointwise evaluation on the collocation grid.
inline AnalyticFunction evaluate_on_grid(const QuadraticForm& Q, const AnalyticFunction& u, const GridOptions& opt = {}) {
  std::array<std::vector<double>, 4> d;
  for (int k = 0; k <= 3; ++k) d[static_cast<std::size_t>(k)] = to_real_grid(dx(u, k));
  std::vector<double> out(d[0].size(), 0.0);
  for (const auto& [ij, q] : Q.q) {
    const auto qg = to_real_grid(q);
    for (std::size_t g = 0; g < out.size(); ++g) out[g] += qg[g] * d[static_cast<std::size_t>(ij.first)][g] * d[static_cast<std::size_t>(ij.second)][g];
  }
  return from_real_grid(u.basis(), out, opt);
}

// Coefficients d_0..d_3 of a linear operator sum_m d_m d_x^m.
struct LinearCoefficients {
  std::array<AnalyticFunction, 4> d;

  static LinearCoefficients zero(const BasisPtr& b) {
    LinearCoefficients c;
    for (auto& f : c.d) f = AnalyticFunction(b);
    return c;
  }
  double total_norm(double sigma) const {
    double s = 0.0;
    for (const auto& f : d) s += norm(f, sigma);
    return s;
  }
};

// Q'(h)[v] = sum q_{i,j}((d^i h)(d^j v) + (d^i v)(d^j h)).
inline LinearCoefficients linearize_Q(const QuadraticForm& Q, const AnalyticFunction& h) {
  LinearCoefficients c = LinearCoefficients::zero(h.basis());
  std::array<AnalyticFunction, 4> dh;
  for (int k = 0; k <= 3; ++k) dh[static_cast<std::size_t>(k)] = dx(h, k);
  for (const auto& [ij, q] : Q.q) {
    const auto [i, j] = ij;
    c.d[static_cast<std::size_t>(j)] += multiply(q, dh[static_cast<std::size_t>(i)]);
    c.d[static_cast<std::size_t>(i)] += multiply(q, dh[static_cast<std::size_t>(j)]);
  }
  return c;
}

// Applies omega.d_phi + lambda3 d^3 + B d + C + sum_m d_m d^m to u.
inline AnalyticFunction apply_perturbed(const DifferentialOperator& L, const LinearCoefficients& Qp, const AnalyticFunction& u) {
  AnalyticFunction r = apply_structured(L, u);
  for (int m = 0; m <= 3; ++m) r += multiply(Qp.d[static_cast<std::size_t>(m)], dx(u, m));
  return r;
}

// ---------------------------------------------------------------- transformation data

struct TransformationData {
  AnalyticFunction alpha, alpha_tilde;
  AnalyticFunction beta, beta_tilde;
  AnalyticFunction p;
  AnalyticFunction r;
  AnalyticFunction m3;
  double lambda3_plus = 1.0;
  double lambda1_plus = 0.0;
  FrequencyVector omega;

  static TransformationData identity(const BasisPtr& b, double lambda3, double lambda1, const FrequencyVector& omega) {
    TransformationData T;
    T.alpha = T.alpha_tilde = T.beta = T.beta_tilde = T.p = AnalyticFunction(b);
    T.r = AnalyticFunction::constant(b, 1.0);
    T.m3 = AnalyticFunction::constant(b, lambda3);
    T.lambda3_plus = lambda3;
    T.lambda1_plus = lambda1;
    T.omega = omega;
    return T;
  }
};

struct XDiffeo {
  AnalyticFunction alpha;
  AnalyticFunction m3;
  double identity_residual = 0.0;  // max_grid |(lambda3 + d3)(1 + alpha_x)^3 - m3|
  double dropped_average = 0.0;
};

inline XDiffeo build_x_diffeo(double lambda3, const AnalyticFunction& d3, const GridOptions& opt = {}) {
  if (!(lambda3 > 0.0)) throw PreconditionError("build_x_diffeo: lambda3 must be positive");
  if (!d3.is_real()) throw PreconditionError("build_x_diffeo: d3 must be real");
  const auto& b = d3.basis();
  // q = (1 + d3/lambda3)^{-1/3}; m3 = lambda3 <q>_x^{-3}; 1 + alpha_x = q / <q>_x.
  const AnalyticFunction q = moser_compose(PowerSeries::binomial(-1.0 / 3.0), (1.0 / lambda3) * d3, opt);
  AnalyticFunction qa = pi0(q);
  qa.add_constant(-1.0);
  XDiffeo X;
  X.m3 = lambda3 * moser_compose(PowerSeries::binomial(-3.0), qa, opt);
  const AnalyticFunction inv_avg = moser_compose(PowerSeries::reciprocal(), qa, opt);
  AnalyticFunction ax = multiply(inv_avg, q);
  ax.add_constant(-1.0);
  for (int li = 0; li < b->n_ell(); ++li) X.dropped_average = std::max(X.dropped_average, std::abs(ax.at(li, 0)));
  X.alpha = dx_inv(pi0_perp(ax));
  const auto dg = to_real_grid(d3), ag = to_real_grid(dx(X.alpha)), mg = to_real_grid(X.m3);
  for (std::size_t g = 0; g < dg.size(); ++g) {
    const double w = 1.0 + ag[g];
    X.identity_residual = std::max(X.identity_residual, std::abs((lambda3 + dg[g]) * w * w * w - mg[g]));
  }
  return X;
}

struct TimeReparam {
  double lambda3_plus = 1.0;
  AnalyticFunction beta;
  double identity_residual = 0.0;  // max coefficient of lambda3+(1 + omega.d beta) - m3
};

inline TimeReparam build_time_reparam(const AnalyticFunction& m3, const FrequencyVector& omega, double gamma = 0.0) {
  detail::require_phi_only(m3, "build_time_reparam");
  TimeReparam R;
  R.lambda3_plus = m3.at(0, 0).real();
  if (!(R.lambda3_plus > 0.0)) throw PreconditionError("build_time_reparam: average of m3 must be positive");
  AnalyticFunction rhs = (1.0 / R.lambda3_plus) * m3;
  rhs.add_constant(-1.0);
  rhs.at(0, 0) = 0.0;
  R.beta = solve_scalar_phi(rhs, omega, gamma);
  AnalyticFunction chk = om_dphi(R.beta, omega);
  chk.add_constant(1.0);
  chk *= R.lambda3_plus;
  R.identity_residual = max_abs_diff(chk, m3);
  return R;
}

struct Translation {
  AnalyticFunction p;
  double lambda1_plus = 0.0;
};

inline Translation build_translation(const AnalyticFunction& c1, const AnalyticFunction& a1, double lambda1, const FrequencyVector& omega,
                                     double gamma = 0.0) {
  const AnalyticFunction diff = c1 - a1;
  const double mean = diff.at(0, 0).real();
  AnalyticFunction rhs = -1.0 * pi0(diff);
  rhs.add_constant(mean);
  rhs.at(0, 0) = 0.0;
  Translation t;
  t.p = solve_scalar_phi(rhs, omega, gamma);
  t.lambda1_plus = lambda1 + mean;
  return t;
}

// ---------------------------------------------------------------- applying T

inline AnalyticFunction jacobian(const TransformationData& T) {
  AnalyticFunction w = dx(T.alpha);
  w.add_constant(1.0);
  return w;
}

inline AnalyticFunction apply_T3(const TransformationData& T, const AnalyticFunction& v, const GridOptions& opt = {}) {
  return compose_x_translation(v, T.p, opt);
}
inline AnalyticFunction apply_T2(const TransformationData& T, const AnalyticFunction& v, const GridOptions& opt = {}) {
  return compose_phi_shift(v, T.beta, T.omega, opt);
}
inline AnalyticFunction apply_T1(const TransformationData& T, const AnalyticFunction& v, const GridOptions& opt = {}) {
  return multiply(jacobian(T), compose_x_diffeo(v, T.alpha, opt));
}
inline AnalyticFunction apply_T1_inverse(const TransformationData& T, const AnalyticFunction& g, const GridOptions& opt = {}) {
  AnalyticFunction wt = dx(T.alpha_tilde);
  wt.add_constant(1.0);
  return multiply(wt, compose_x_diffeo(g, T.alpha_tilde, opt));
}
inline AnalyticFunction apply_T2_inverse(const TransformationData& T, const AnalyticFunction& g, const GridOptions& opt = {}) {
  return compose_phi_shift(g, T.beta_tilde, T.omega, opt);
}
inline AnalyticFunction apply_T3_inverse(const TransformationData& T, const AnalyticFunction& g, const GridOptions& opt = {}) {
  return compose_x_translation(g, -T.p, opt);
}

// T v = (1 + alpha_x) v(phi + omega beta(phi), x + alpha(phi, x) + p(phi + omega beta(phi))).
inline AnalyticFunction apply_T(const TransformationData& T, const AnalyticFunction& v, const GridOptions& opt = {}) {
  return apply_T1(T, apply_T2(T, apply_T3(T, v, opt), opt), opt);
}
inline AnalyticFunction apply_T_inverse(const TransformationData& T, const AnalyticFunction& g, const GridOptions& opt = {}) {
  return apply_T3_inverse(T, apply_T2_inverse(T, apply_T1_inverse(T, g, opt), opt), opt);
}

// P(phi) = <d_x^{-1} u, v>_x as a function of phi.
inline AnalyticFunction symplectic_pairing(const AnalyticFunction& u, const AnalyticFunction& v) {
  return pi0(multiply(dx_inv(u), v));
}

// ---------------------------------------------------------------- conjugation step

struct ConjugationOptions {
  double gamma = 0.0;  // floor for the phi-divisors
  GridOptions grid;
  bool verify = false;  // interior-window residual, see conjugation_residual
  double max_residual = 1e-6;
};

struct ConjugationDiagnostics {
  double x_identity = 0.0;     // (lambda3 + d3)(1 + alpha_x)^3 = m3
  double time_identity = 0.0;  // lambda3+(1 + omega.d beta) = m3
  double r_identity = 0.0;     // r T2^{-1}(m3) = lambda3+
  double b2_norm = 0.0;        // second-order coefficient after T1
  double hamiltonian_defect = 0.0;  // norm of d2 - 2 d3_x
  double alpha_inverse_residual = 0.0;
  double beta_inverse_residual = 0.0;
  double normalization_defect = 0.0;  // phi-dependence of <a1+>_x
  double window_residual = -1.0;      // set when verification ran
};

struct ConjugationResult {
  TransformationData T;
  DifferentialOperator L_plus;
  ConjugationDiagnostics diag;
};

inline double conjugation_residual(const DifferentialOperator& L, const LinearCoefficients& Qp, const ConjugationResult& C,
                                   const ModeWindow& win, const GridOptions& opt);
inline double conjugation_residual_half_window(const DifferentialOperator& L, const LinearCoefficients& Qp, const ConjugationResult& C,
                                               const GridOptions& opt);

inline ConjugationResult conjugate_step(const DifferentialOperator& L, const LinearCoefficients& Qp, const ConjugationOptions& opt = {}) {
  const GridOptions& go = opt.grid;
  const FrequencyVector& omega = L.omega;
  const double lambda3 = L.lambda3;
  const double lambda1 = L.lambda1();
  const auto& d0 = Qp.d[0];
  const auto& d1 = Qp.d[1];
  const auto& d2 = Qp.d[2];
  const auto& d3 = Qp.d[3];

  ConjugationResult res;
  auto& T = res.T;
  T.omega = omega;
  res.diag.hamiltonian_defect = norm(d2 - 2.0 * dx(d3), 0.0);

  // T1: straighten the third-order coefficient.
  XDiffeo X = build_x_diffeo(lambda3, d3, go);
  T.alpha = X.alpha;
  T.m3 = X.m3;
  res.diag.x_identity = X.identity_residual;
  InversionResult ai = invert_x_diffeo(T.alpha, go);
  T.alpha_tilde = ai.inverse;
  res.diag.alpha_inverse_residual = std::max(ai.residual, ai.residual_reverse);

  const AnalyticFunction w1 = dx(T.alpha);
  AnalyticFunction w = w1;
  w.add_constant(1.0);
  const AnalyticFunction w2 = dx(T.alpha, 2), w3 = dx(T.alpha, 3), w4 = dx(T.alpha, 4);
  const AnalyticFunction inv_w = moser_compose(PowerSeries::reciprocal(), w1, go);
  AnalyticFunction top = d3;
  top.add_constant(lambda3);
  AnalyticFunction a1d = L.B + d1;
  AnalyticFunction a0d = L.C + d0;
  const AnalyticFunction wphi = om_dphi(T.alpha, omega);

  // Coefficients of A u_yy, A u_y, A u after division by w, in original coordinates.
  AnalyticFunction e2 = 6.0 * multiply(top, multiply(w, w2)) + multiply(d2, multiply(w, w));
  AnalyticFunction e1 = multiply(top, 4.0 * w3 + 3.0 * multiply(multiply(w2, w2), inv_w));
  e1 += 3.0 * multiply(d2, w2);
  e1 += multiply(a1d, w);
  e1 += wphi;
  AnalyticFunction n0 = multiply(top, w4);
  n0 += multiply(d2, w3);
  n0 += multiply(a1d, w2);
  n0 += multiply(a0d, w);
  n0 += om_dphi(w1, omega);
  AnalyticFunction e0 = multiply(n0, inv_w);

  const AnalyticFunction b2 = compose_x_diffeo(e2, T.alpha_tilde, go);
  const AnalyticFunction b1 = compose_x_diffeo(e1, T.alpha_tilde, go);
  const AnalyticFunction b0 = compose_x_diffeo(e0, T.alpha_tilde, go);
  res.diag.b2_norm = norm(b2, 0.0);

  // T2: constant third-order coefficient.
  TimeReparam R = build_time_reparam(T.m3, omega, opt.gamma);
  T.beta = R.beta;
  T.lambda3_plus = R.lambda3_plus;
  res.diag.time_identity = R.identity_residual;
  InversionResult bi = invert_phi_shift(T.beta, omega, go);
  T.beta_tilde = bi.inverse;
  res.diag.beta_inverse_residual = std::max(bi.residual, bi.residual_reverse);

  const AnalyticFunction m3t = compose_phi_shift(T.m3, T.beta_tilde, omega, go);
  AnalyticFunction rel = (1.0 / T.lambda3_plus) * m3t;
  rel.add_constant(-1.0);
  T.r = moser_compose(PowerSeries::reciprocal(), rel, go);
  {
    const auto rg = to_real_grid(T.r), mg = to_real_grid(m3t);
    for (std::size_t g = 0; g < rg.size(); ++g) res.diag.r_identity = std::max(res.diag.r_identity, std::abs(rg[g] * mg[g] - T.lambda3_plus) / T.lambda3_plus);
  }
  const AnalyticFunction c1 = multiply(T.r, compose_phi_shift(b1, T.beta_tilde, omega, go));
  const AnalyticFunction c0 = multiply(T.r, compose_phi_shift(b0, T.beta_tilde, omega, go));

  // T3: phi-independent x-average of the first-order coefficient.
  Translation Tr = build_translation(c1, L.B, lambda1, omega, opt.gamma);
  T.p = Tr.p;
  T.lambda1_plus = Tr.lambda1_plus;

  DifferentialOperator Lp;
  Lp.lambda3 = T.lambda3_plus;
  Lp.omega = omega;
  Lp.B = om_dphi(T.p, omega) + compose_x_translation(c1, -T.p, go);
  Lp.C = compose_x_translation(c0, -T.p, go);
  res.diag.normalization_defect = Lp.normalization_defect();
  res.L_plus = std::move(Lp);
  if (opt.verify) {
    res.diag.window_residual = conjugation_residual_half_window(L, Qp, res, go);
    if (res.diag.window_residual > opt.max_residual)
      throw ConjugationError("conjugate_step: interior-window residual " + std::to_string(res.diag.window_residual) + " above threshold",
                             res.diag.window_residual);
  }
  return res;
}

// r T^{-1} Q(T v) written as a quadratic form in v.
inline QuadraticForm push_quadratic(const QuadraticForm& Q, const TransformationData& T, const GridOptions& opt = {}) {
  const AnalyticFunction w = jacobian(T);
  // dw[k] = d_x^k w.
  std::array<AnalyticFunction, 4> dw;
  dw[0] = w;
  for (int k = 1; k <= 3; ++k) dw[static_cast<std::size_t>(k)] = dx(T.alpha, k + 1);
  const auto& W = dw[0];
  const auto& W1 = dw[1];
  const auto& W2 = dw[2];
  const auto& W3 = dw[3];
  // d_x^i (T v) = sum_l G[l][i] (d^l v) o Phi.
  std::array<std::array<AnalyticFunction, 4>, 4> G;
  const auto& b = w.basis();
  for (auto& row : G)
    for (auto& f : row) f = AnalyticFunction(b);
  G[0][0] = W;
  G[0][1] = W1;
  G[1][1] = multiply(W, W);
  G[0][2] = W2;
  G[1][2] = 3.0 * multiply(W, W1);
  G[2][2] = multiply(W, G[1][1]);
  G[0][3] = W3;
  G[1][3] = 4.0 * multiply(W, W2) + 3.0 * multiply(W1, W1);
  G[2][3] = 6.0 * multiply(G[1][1], W1);
  G[3][3] = multiply(G[1][1], G[1][1]);

  QuadraticForm out;
  for (int l = 0; l <= 2; ++l)
    for (int m = 0; m <= 3; ++m) {
      if (!QuadraticForm::admissible(l, m)) continue;
      AnalyticFunction H(b);
      bool any = false;
      for (const auto& [ij, q] : Q.q) {
        const auto [i, j] = ij;
        if (i < l || j < m) continue;
        H += multiply(q, multiply(G[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)], G[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)]));
        any = true;
      }
      if (!any) continue;
      out.set(l, m, multiply(T.r, apply_T_inverse(T, H, opt)));
    }
  return out;
}

// ---------------------------------------------------------------- verification

// max over window columns e_{l', j'} of the l1 norm over window rows of
// r T^{-1}(L + Q')(T e) - L+ e.
inline double conjugation_residual(const DifferentialOperator& L, const LinearCoefficients& Qp, const ConjugationResult& C,
                                   const ModeWindow& win, const GridOptions& opt) {
  const auto& bp = L.basis();
  const auto& b = *bp;
  double worst = 0.0;
  for (int li = 0; li < b.n_ell(); ++li)
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      if (!win.contains(b, li, j)) continue;
      const AnalyticFunction e = AnalyticFunction::mode(bp, b.ell(li), j, 1.0);
      const AnalyticFunction lhs = multiply(C.T.r, apply_T_inverse(C.T, apply_perturbed(L, Qp, apply_T(C.T, e, opt)), opt));
      const AnalyticFunction rhs = apply_structured(C.L_plus, e);
      double col = 0.0;
      for (int ri = 0; ri < b.n_ell(); ++ri)
        for (int jr = -b.jmax(); jr <= b.jmax(); ++jr)
          if (win.contains(b, ri, jr)) col += std::abs(lhs.at(ri, jr) - rhs.at(ri, jr));
      worst = std::max(worst, col);
    }
  return worst;
}

inline double conjugation_residual_half_window(const DifferentialOperator& L, const LinearCoefficients& Qp, const ConjugationResult& C,
                                               const GridOptions& opt) {
  return conjugation_residual(L, Qp, C, ModeWindow::half_of(*L.basis()), opt);
}

}  // namespace airy
