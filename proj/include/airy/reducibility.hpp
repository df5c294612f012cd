#pragma once
// Reduction of omega.d_phi + lambda3 d^3 + a1 d + a0 (with phi-independent
// x-average of a1) to diag(i(omega.l + Omega(j)) + defect(j)):
// one order-one conjugation e^{G}, then KAM steps e^{Psi_k}.

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "airy/analytic.hpp"
#include "airy/homological.hpp"
#include "airy/opalg.hpp"
#include "airy/smalldiv.hpp"

namespace airy {

struct ReductionParams {
  double N0 = 2.0;  // N_k = N0 2^k
  double stop_tol = 1e-10;
  int max_steps = 12;
  double series_tol = 1e-16;
  double prune_tol = 1e-16;
  std::optional<double> gbar;  // floor for the j = j' divisors; defaults to gamma
  bool keep_history = false;
  double normalization_tol = 1e-10;
};

// ---------------------------------------------------------------- order one

struct OrderOneResult {
  AnalyticFunction g;
  OperatorMatrix G;
  OperatorMatrix R0;
  int series_terms = 0;
};

// g = (lambda1 - a1) integrated in x over 3 lambda3, so that 3 lambda3 g_x + a1 = lambda1.
inline AnalyticFunction order_one_symbol(double lambda3, double lambda1, const AnalyticFunction& a1) {
  AnalyticFunction rhs = -1.0 * a1;
  rhs.add_constant(lambda1);
  return (1.0 / (3.0 * lambda3)) * dx_inv(pi0_perp(rhs));
}

inline OrderOneResult order_one_reduction(double lambda3, double lambda1, const AnalyticFunction& a1, const AnalyticFunction& a0,
                                          const FrequencyVector& omega, const ReductionParams& prm = {}) {
  if (!(lambda3 > 0.0)) throw PreconditionError("order_one_reduction: lambda3 must be positive");
  const auto& bp = a1.basis();
  const auto& b = *bp;
  validate_frequency(omega, b.M());
  for (int li = 0; li < b.n_ell(); ++li) {
    const cd target = li == 0 ? cd(lambda1) : cd{};
    if (std::abs(a1.at(li, 0) - target) > prm.normalization_tol * (1.0 + std::abs(lambda1)))
      throw PreconditionError("order_one_reduction: x-average of a1 is not the constant lambda1");
  }
  OrderOneResult res;
  res.g = order_one_symbol(lambda3, lambda1, a1);
  res.G = order_one_generator(res.g);
  res.G.prune(prm.prune_tol);

  const OperatorMatrix D1 = OperatorMatrix::dx_power(bp, 1);
  OperatorMatrix P = compose(OperatorMatrix::multiplication(a1), D1);
  P += OperatorMatrix::multiplication(a0);

  // Leftover of a1 + 3 lambda3 g_x - lambda1 (roundoff and dropped x-average).
  AnalyticFunction c = a1 + 3.0 * lambda3 * dx(res.g);
  c.add_constant(-lambda1);
  res.R0 = compose(OperatorMatrix::multiplication(c), D1);
  res.R0 += OperatorMatrix::multiplication(a0);
  if (!res.G.blocks().empty()) {
    const CommutatorSplit split = commutator_dx3_G(res.g);
    OperatorMatrix near = phi_derivative(res.G, omega);
    near += lambda3 * split.remainder;
    near += commutator(P, res.G);
    OperatorMatrix X = near;
    X += lambda3 * compose(OperatorMatrix::multiplication(split.leading), D1);
    res.R0 += near;
    SeriesResult s = lie_series(res.G, X, 1, 1, prm.series_tol);
    res.R0 += s.value;
    res.series_terms = s.terms;
  }
  res.R0.prune(prm.prune_tol);
  if (a1.is_real() && a0.is_real()) res.R0.realify();
  return res;
}

// ---------------------------------------------------------------- KAM state

struct KamState {
  int k = 0;
  double lambda3 = 1.0;
  double lambda1 = 0.0;
  std::map<int, double> r;       // r_k(j), odd in j
  std::map<int, double> defect;  // real part of the absorbed diagonal
  OperatorMatrix P;
  std::vector<OperatorMatrix> generators;  // Psi_0, Psi_1, ...
  double N0 = 2.0;
  FrequencyVector omega;

  double N(int step) const { return N0 * std::ldexp(1.0, step); }
  double Omega(int j) const {
    auto it = r.find(j);
    return -lambda3 * j * j * j + lambda1 * j + (it == r.end() ? 0.0 : it->second);
  }
  double defect_at(int j) const {
    auto it = defect.find(j);
    return it == defect.end() ? 0.0 : it->second;
  }
  SpectrumTable spectrum() const {
    SpectrumTable t;
    const int jm = P.basis()->jmax();
    for (int j = -jm; j <= jm; ++j)
      if (j != 0) t[j] = Omega(j);
    return t;
  }
  // omega.d_phi + diag(i Omega(j) + defect(j)).
  OperatorMatrix diagonal_operator() const {
    const auto& bp = P.basis();
    const int jm = bp->jmax();
    std::vector<cd> d(static_cast<std::size_t>(2 * jm));
    for (int p = 0; p < 2 * jm; ++p) {
      const int j = OperatorMatrix::jval(p, jm);
      d[static_cast<std::size_t>(p)] = cd(defect_at(j), Omega(j));
    }
    OperatorMatrix D = OperatorMatrix::diagonal(bp, d);
    D += OperatorMatrix::time_derivative(bp, omega);
    return D;
  }

  static KamState initial(double lambda3, double lambda1, OperatorMatrix P0, const FrequencyVector& omega, double N0) {
    KamState s;
    s.lambda3 = lambda3;
    s.lambda1 = lambda1;
    s.P = std::move(P0);
    s.N0 = N0;
    s.omega = omega;
    return s;
  }
};

struct KamStepInfo {
  int step = 0;
  double N = 0.0;
  double P_norm = 0.0;       // op_norm(P_k)
  double P_next_norm = 0.0;  // op_norm(P_{k+1})
  double min_margin = std::numeric_limits<double>::infinity();
  double homological_residual = 0.0;
  double diagonal_shift = 0.0;  // max |z_k(j)|
  int series_terms = 0;
  double seconds = 0.0;
};

inline KamState kam_step(const KamState& state, double gamma, const ReductionParams& prm = {}, KamStepInfo* info = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& bp = state.P.basis();
  const auto& b = *bp;
  const int jm = b.jmax(), n = 2 * jm;
  const double N = state.N(state.k);
  const double gb = prm.gbar.value_or(gamma);
  KamStepInfo inf;
  inf.step = state.k;
  inf.N = N;
  inf.P_norm = op_norm(state.P, 0.0, 0.0);

  KamState next = state;
  next.k = state.k + 1;
  if (state.P.blocks().empty()) {
    inf.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (info) *info = inf;
    return next;
  }

  const OperatorMatrix PiP = project_N(state.P, N);
  OperatorMatrix Psi(bp, state.P.is_real());
  std::vector<cd> z(static_cast<std::size_t>(n), cd{});
  std::vector<double> Om(static_cast<std::size_t>(n)), df(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    Om[static_cast<std::size_t>(p)] = state.Omega(OperatorMatrix::jval(p, jm));
    df[static_cast<std::size_t>(p)] = state.defect_at(OperatorMatrix::jval(p, jm));
  }
  for (const auto& [li, B] : PiP.blocks()) {
    const double wl = b.dot(state.omega, li);
    const MultiIndex& l = b.ell(li);
    const double dl = divisor_weight(l);
    Block* out = nullptr;
    for (int c = 0; c < n; ++c)
      for (int r = 0; r < n; ++r) {
        const cd v = B(r, c);
        if (v == cd{}) continue;
        if (li == 0 && r == c) {
          z[static_cast<std::size_t>(r)] = v;
          continue;
        }
        const int j = OperatorMatrix::jval(r, jm), jp = OperatorMatrix::jval(c, jm);
        const double dv = wl + Om[static_cast<std::size_t>(r)] - Om[static_cast<std::size_t>(c)];
        const double floor = j == jp ? gb * diophantine_weight(l)
                                     : 2.0 * gamma * std::abs(static_cast<double>(j) * j * j - static_cast<double>(jp) * jp * jp) / dl;
        if (std::abs(dv) < floor || dv == 0.0)
          throw SmallDivisorError("kam_step: second Melnikov breach at l = " + l.str() + ", j = " + std::to_string(j) +
                                      ", j' = " + std::to_string(jp),
                                  l.entries(), j, jp, dv, floor);
        if (floor > 0.0) inf.min_margin = std::min(inf.min_margin, std::abs(dv) / floor);
        if (!out) out = &Psi.block(li);
        (*out)(r, c) = -v / cd(df[static_cast<std::size_t>(r)] - df[static_cast<std::size_t>(c)], dv);
      }
  }
  if (Psi.is_real()) Psi.realify();
  OperatorMatrix Z = OperatorMatrix::diagonal(bp, z, state.P.is_real());
  for (const cd& v : z) inf.diagonal_shift = std::max(inf.diagonal_shift, std::abs(v));

  // omega.d_phi Psi + [D_k, Psi] + Pi_N P - Z = 0.
  {
    OperatorMatrix H = commutator(state.diagonal_operator(), Psi);
    H += PiP;
    H -= Z;
    inf.homological_residual = op_norm(H, 0.0, 0.0);
  }

  OperatorMatrix Pn = project_N_perp(state.P, N);
  if (!Psi.blocks().empty()) {
    SeriesResult s1 = lie_series(Psi, Z - PiP, 1, 1, prm.series_tol);
    SeriesResult s2 = lie_series(Psi, state.P, 1, 0, prm.series_tol);
    Pn += s1.value;
    Pn += s2.value;
    inf.series_terms = s1.terms + s2.terms;
  }
  Pn.prune(prm.prune_tol);
  if (Pn.is_real()) Pn.realify();
  next.P = std::move(Pn);
  for (int p = 0; p < n; ++p) {
    const int j = OperatorMatrix::jval(p, jm);
    const cd v = z[static_cast<std::size_t>(p)];
    if (v == cd{}) continue;
    next.r[j] += v.imag();
    next.defect[j] += v.real();
  }
  if (!Psi.blocks().empty()) next.generators.push_back(std::move(Psi));
  inf.P_next_norm = op_norm(next.P, 0.0, 0.0);
  inf.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (info) *info = inf;
  return next;
}

struct KamResult {
  KamState state;
  std::vector<KamStepInfo> trace;
  bool converged = false;
  bool stagnated = false;
  double tail = 0.0;  // op_norm of the final remainder, bounds |r_inf - r_k|
  std::vector<OperatorMatrix> P_history;
  std::vector<std::map<int, double>> r_history;
};

inline KamResult kam_iterate(const KamState& state0, double gamma, const ReductionParams& prm = {}) {
  KamResult res;
  res.state = state0;
  double prev = op_norm(state0.P, 0.0, 0.0);
  if (prm.keep_history) {
    res.P_history.push_back(state0.P);
    res.r_history.push_back(state0.r);
  }
  while (true) {
    if (prev <= prm.stop_tol) {
      res.converged = true;
      break;
    }
    if (res.state.k - state0.k >= prm.max_steps) break;
    KamStepInfo info;
    res.state = kam_step(res.state, gamma, prm, &info);
    res.trace.push_back(info);
    if (prm.keep_history) {
      res.P_history.push_back(res.state.P);
      res.r_history.push_back(res.state.r);
    }
    const double cur = info.P_next_norm;
    if (cur > 0.5 * prev && cur > prm.stop_tol) {
      res.stagnated = true;
      prev = cur;
      break;
    }
    prev = cur;
  }
  res.tail = prev;
  return res;
}

// ---------------------------------------------------------------- full reduction

struct ReductionResult {
  DifferentialOperator L;
  OrderOneResult order_one;
  KamResult kam;
  SpectrumTable Omega_inf;
  std::map<int, double> defect;

  bool converged() const { return kam.converged; }
  const FrequencyVector& omega() const { return L.omega; }
};

inline ReductionResult reduce_operator(const DifferentialOperator& L, double gamma, const ReductionParams& prm = {}) {
  ReductionResult res;
  res.L = L;
  const double l1 = L.lambda1();
  res.order_one = order_one_reduction(L.lambda3, l1, L.B, L.C, L.omega, prm);
  KamState s0 = KamState::initial(L.lambda3, l1, res.order_one.R0, L.omega, prm.N0);
  res.kam = kam_iterate(s0, gamma, prm);
  res.Omega_inf = res.kam.state.spectrum();
  res.defect = res.kam.state.defect;
  return res;
}

// M u = e^{G} e^{Psi_0} ... e^{Psi_n} u.
inline AnalyticFunction apply_M(const ReductionResult& red, const AnalyticFunction& u, double tol = 1e-16) {
  AnalyticFunction v = pi0_perp(u);
  const auto& gens = red.kam.state.generators;
  for (auto it = gens.rbegin(); it != gens.rend(); ++it) v = exp_apply(*it, v, tol).value;
  if (!red.order_one.G.blocks().empty()) v = exp_apply(red.order_one.G, v, tol).value;
  return v;
}

inline AnalyticFunction apply_M_inverse(const ReductionResult& red, const AnalyticFunction& u, double tol = 1e-16) {
  AnalyticFunction v = pi0_perp(u);
  if (!red.order_one.G.blocks().empty()) v = exp_apply(-1.0 * red.order_one.G, v, tol).value;
  for (const auto& Psi : red.kam.state.generators) v = exp_apply(-1.0 * Psi, v, tol).value;
  return v;
}

inline DiagonalModel diagonal_model(const ReductionResult& red) { return DiagonalModel{red.Omega_inf, red.defect, red.L.omega}; }

struct InversionReport {
  AnalyticFunction h;
  double residual = 0.0;  // norm(L h + f) / norm(f) on j != 0
  double amplification = 0.0;
};

// h = -L^{-1} f = M D^{-1} M^{-1}(-f).
inline InversionReport invert_via_diagonalization(const ReductionResult& red, const AnalyticFunction& f, double gamma) {
  InversionReport rep;
  const AnalyticFunction g = apply_M_inverse(red, f);
  HomologicalSolution s = solve_diagonal(diagonal_model(red), g, gamma);
  rep.amplification = s.amplification;
  rep.h = apply_M(red, s.h);
  const double nf = norm(pi0_perp(f), 0.0);
  const double nr = norm(pi0_perp(apply_structured(red.L, rep.h) + f), 0.0);
  rep.residual = nf > 0.0 ? nr / nf : nr;
  return rep;
}

struct DiagonalizationResidual {
  double off_diagonal = 0.0;  // max column l1 norm off the diagonal
  double diagonal = 0.0;      // max |entry - (i(omega.l + Omega(j)) + defect(j))|
};

// Interior entries of M^{-1} L M against the diagonal model.
inline DiagonalizationResidual diagonalization_residual(const ReductionResult& red, const ModeWindow& win) {
  const auto& bp = red.L.basis();
  const auto& b = *bp;
  const OperatorMatrix Lm = materialize(red.L);
  DiagonalizationResidual out;
  for (int li = 0; li < b.n_ell(); ++li)
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      if (!win.contains(b, li, j)) continue;
      const AnalyticFunction e = AnalyticFunction::mode(bp, b.ell(li), j, 1.0);
      const AnalyticFunction y = apply_M_inverse(red, apply(Lm, apply_M(red, e)));
      double off = 0.0;
      for (int ri = 0; ri < b.n_ell(); ++ri)
        for (int jr = -b.jmax(); jr <= b.jmax(); ++jr) {
          if (!win.contains(b, ri, jr)) continue;
          if (ri == li && jr == j) {
            auto it = red.Omega_inf.find(j);
            auto dt = red.defect.find(j);
            const cd expect(dt == red.defect.end() ? 0.0 : dt->second, b.dot(red.L.omega, li) + it->second);
            out.diagonal = std::max(out.diagonal, std::abs(y.at(ri, jr) - expect));
          } else {
            off += std::abs(y.at(ri, jr));
          }
        }
      out.off_diagonal = std::max(out.off_diagonal, off);
    }
  return out;
}

// Interior check of e^{-G} L e^{G} = omega.d_phi + lambda3 d^3 + lambda1 d + R0.
inline double order_one_residual(const DifferentialOperator& L, const OrderOneResult& o1, const ModeWindow& win) {
  const auto& bp = L.basis();
  const auto& b = *bp;
  const OperatorMatrix Lm = materialize(L);
  OperatorMatrix target = OperatorMatrix::time_derivative(bp, L.omega);
  target += L.lambda3 * OperatorMatrix::dx_power(bp, 3);
  target += L.lambda1() * OperatorMatrix::dx_power(bp, 1);
  target += o1.R0;
  double worst = 0.0;
  for (int li = 0; li < b.n_ell(); ++li)
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      if (!win.contains(b, li, j)) continue;
      const AnalyticFunction e = AnalyticFunction::mode(bp, b.ell(li), j, 1.0);
      AnalyticFunction v = e;
      if (!o1.G.blocks().empty()) v = exp_apply(o1.G, v, 1e-16).value;
      v = apply(Lm, v);
      if (!o1.G.blocks().empty()) v = exp_apply(-1.0 * o1.G, v, 1e-16).value;
      const AnalyticFunction d = v - apply(target, e);
      double col = 0.0;
      for (int ri = 0; ri < b.n_ell(); ++ri)
        for (int jr = -b.jmax(); jr <= b.jmax(); ++jr)
          if (win.contains(b, ri, jr)) col += std::abs(d.at(ri, jr));
      worst = std::max(worst, col);
    }
  return worst;
}

// e^{T} as a block-Toeplitz operator.
inline OperatorMatrix exp_operator(const OperatorMatrix& T, double tol = 1e-16) {
  OperatorMatrix out = OperatorMatrix::identity(T.basis());
  OperatorMatrix term = OperatorMatrix::identity(T.basis());
  double prev = 1.0;
  for (int k = 1;; ++k) {
    term = (1.0 / k) * compose(term, T);
    out += term;
    const double size = op_norm(term, 0.0, 0.0);
    if (size == 0.0) break;
    const double q = size / prev;
    if (q < 1.0 && size * q / (1.0 - q) <= tol) break;
    if (k >= kSeriesCap) throw ConvergenceError("exp_operator did not converge within the term cap", k, size);
    prev = size;
  }
  if (T.is_real()) out.realify();
  return out;
}

// Phi_inf = e^{Psi_0} ... e^{Psi_n}.
inline OperatorMatrix accumulated_transform(const KamState& s, double tol = 1e-16) {
  OperatorMatrix acc = OperatorMatrix::identity(s.P.basis());
  for (const auto& Psi : s.generators) acc = compose(acc, exp_operator(Psi, tol));
  return acc;
}

// ---------------------------------------------------------------- variations

struct StepDeviation {
  int step = 0;
  double P_diff = 0.0;
  double r_diff = 0.0;
  double Psi_diff = 0.0;
};

struct DeviationReport {
  std::vector<StepDeviation> steps;
  double Omega_diff = 0.0;  // sup_j |Omega_inf^A(j) - Omega_inf^B(j)|
};

inline double max_r_diff(const std::map<int, double>& a, const std::map<int, double>& b) {
  double d = 0.0;
  for (const auto& [j, v] : a) {
    auto it = b.find(j);
    d = std::max(d, std::abs(v - (it == b.end() ? 0.0 : it->second)));
  }
  for (const auto& [j, v] : b)
    if (!a.count(j)) d = std::max(d, std::abs(v));
  return d;
}

inline DeviationReport compare_reductions(const ReductionResult& A, const ReductionResult& B) {
  require_same(A.L.basis(), B.L.basis(), "compare_reductions");
  DeviationReport rep;
  const auto& ha = A.kam.P_history;
  const auto& hb = B.kam.P_history;
  const std::size_t n = std::min(ha.size(), hb.size());
  for (std::size_t k = 0; k < n; ++k) {
    StepDeviation d;
    d.step = static_cast<int>(k);
    d.P_diff = op_norm(ha[k] - hb[k], 0.0, 0.0);
    d.r_diff = max_r_diff(A.kam.r_history[k], B.kam.r_history[k]);
    const auto& ga = A.kam.state.generators;
    const auto& gb = B.kam.state.generators;
    if (k < ga.size() && k < gb.size())
      d.Psi_diff = op_norm(ga[k] - gb[k], 0.0, 0.0);
    else if (k < ga.size())
      d.Psi_diff = op_norm(ga[k], 0.0, 0.0);
    else if (k < gb.size())
      d.Psi_diff = op_norm(gb[k], 0.0, 0.0);
    rep.steps.push_back(d);
  }
  for (const auto& [j, v] : A.Omega_inf) {
    auto it = B.Omega_inf.find(j);
    if (it != B.Omega_inf.end()) rep.Omega_diff = std::max(rep.Omega_diff, std::abs(v - it->second));
  }
  return rep;
}

}  // namespace airy
