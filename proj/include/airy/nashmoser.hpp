#pragma once
// Outer Newton-type iteration for
//   (omega.d_phi + d_x^3) u + Q(u) + f = 0,
// Q(u) = d_xx(3 c3 u_x^2 + 2 c2 u u_x + c1 u^2) - d_x(c2 u_x^2 + 2 c1 u u_x + 3 c0 u^2).
// Each step inverts the current linear part by reducibility, builds a change
// of variables T and transports (f, L, Q).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "airy/analytic.hpp"
#include "airy/conjugation.hpp"
#include "airy/reducibility.hpp"
#include "airy/smalldiv.hpp"

namespace airy {

struct ProblemSpec {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0, c3 = 1.0;
  AnalyticFunction forcing;
  double S = 1.0;
  double s_bar = 0.1;
  DiophantineParams dioph;
  FrequencyVector omega;
  double target_residual = 1e-14;
  int oversample = 2;
  ReductionParams reduction;
  GridOptions grid;

  const BasisPtr& basis() const { return forcing.basis(); }

  void validate() const {
    if (!forcing.basis()) throw ConfigError("problem: forcing is not set");
    basis()->lattice().validate();
    if (!(S > s_bar && s_bar > 0.0)) throw ConfigError("problem: need S > s_bar > 0");
    dioph.validate();
    validate_frequency(omega, basis()->M());
    if (!forcing.is_real()) throw ConfigError("problem: forcing must be real-on-real");
    if (!forcing.has_zero_x_average(default_average_tol(forcing))) throw ConfigError("problem: forcing must have zero x-average");
    if (oversample < 1) throw ConfigError("problem: oversample must be >= 1");
    if (!(target_residual > 0.0)) throw ConfigError("problem: target residual must be positive");
  }
  double sigma_m1() const { return std::min(S - s_bar, 1.0) / 8.0; }
};

// sigma_{n-1} = 6 sigma_{-1} / (pi^2 n^2), s_0 = S - sigma_{-1}, s_n = s_{n-1} - 6 sigma_{n-1}.
struct StripSchedule {
  double S = 1.0, sigma_m1 = 0.0;

  double sigma(int n) const {  // sigma_n, n >= -1
    if (n < 0) return sigma_m1;
    const double k = n + 1;
    return 6.0 * sigma_m1 / (std::numbers::pi * std::numbers::pi * k * k);
  }
  double s(int n) const {
    double v = S - sigma_m1;
    for (int k = 1; k <= n; ++k) v -= 6.0 * sigma(k - 1);
    return v;
  }
  double s_inf() const { return S - 7.0 * sigma_m1; }
};

// Smallest Omega_0 = -j^3 divisors etc. are checked by sample_admissible_omega.
inline bool admissible_omega(const FrequencyVector& w, double gamma0, const LatticeParams& lat, int jmax) {
  if (!in_O0(w, gamma0, lat, jmax).ok) return false;
  if (!in_Dgamma(w, gamma0, lat).ok) return false;
  const SpectrumTable O = airy_spectrum(1.0, 0.0, jmax);
  if (!first_melnikov(w, O, gamma0, lat).ok) return false;
  return second_melnikov(w, O, gamma0, lat).ok;
}

struct OmegaDraw {
  FrequencyVector omega;
  int draws = 0;
};

inline OmegaDraw sample_admissible_omega(std::uint64_t seed, double gamma0, const LatticeParams& lat, int jmax, int max_draws = 1000) {
  std::mt19937_64 eng(seed);
  for (int i = 1; i <= max_draws; ++i) {
    FrequencyVector w = sample_frequency(eng, lat.M);
    if (admissible_omega(w, gamma0, lat, jmax)) return {w, i};
  }
  throw SmallDivisorError("sample_admissible_omega: no admissible frequency within the draw budget", {}, 0, 0, 0.0, gamma0);
}

struct IterationState {
  int n = 0;
  AnalyticFunction f;
  DifferentialOperator L;
  QuadraticForm Q;
  std::vector<TransformationData> transforms;
  std::vector<AnalyticFunction> h_list;
  StripSchedule strips;
  std::vector<double> f_norms;  // norm(f_n) at s_{n-1} - 2 sigma_{n-1}
  std::vector<double> h_norms;  // norm(h_n) at s_n
  std::vector<double> margins;  // min divisor margin per step
};

inline IterationState init(const ProblemSpec& spec) {
  spec.validate();
  const auto& b = spec.basis();
  const Membership m = in_O0(spec.omega, spec.dioph.gamma0, b->lattice(), b->jmax());
  if (!m.ok)
    throw SmallDivisorError("init: omega fails the zeroth Diophantine condition at l = " + m.witness->ell.str() + ", j = " +
                                std::to_string(m.witness->j),
                            m.witness->ell.entries(), m.witness->j, 0, m.witness->lhs, m.witness->rhs);
  IterationState st;
  st.f = spec.forcing;
  st.L = DifferentialOperator::constant(b, 1.0, 0.0, spec.omega);
  st.Q = initial_quadratic(b, spec.c0, spec.c1, spec.c2, spec.c3);
  st.strips = {spec.S, spec.sigma_m1()};
  st.f_norms.push_back(norm(st.f, spec.S));
  return st;
}

struct StepRecord {
  double norm_h = 0.0;
  double norm_f_next = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  double inversion_residual = 0.0;
  int kam_steps = 0;
  double seconds = 0.0;
  ConjugationDiagnostics conj;
  std::string stage;  // last stage entered
};

inline IterationState step(const IterationState& state, const ProblemSpec& spec, StepRecord* rec = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  IterationState next = state;
  StepRecord local;
  StepRecord& r = rec ? *rec : local;
  r = StepRecord{};
  const int n = state.n;
  const double gamma = spec.dioph.gamma(n + 1);
  const auto& b = spec.basis();

  if (norm(state.f, 0.0) == 0.0) {
    next.n = n + 1;
    next.h_list.push_back(AnalyticFunction(b));
    next.transforms.push_back(TransformationData::identity(b, state.L.lambda3, state.L.lambda1(), spec.omega));
    next.h_norms.push_back(0.0);
    next.f_norms.push_back(0.0);
    next.margins.push_back(r.min_margin);
    return next;
  }

  r.stage = "reduce";
  const ReductionResult red = reduce_operator(state.L, gamma, spec.reduction);
  if (!red.converged())
    throw ConvergenceError("step: reduction of the linear part did not reach its stopping tolerance", red.kam.state.k, red.kam.tail);
  for (const auto& t : red.kam.trace) r.min_margin = std::min(r.min_margin, t.min_margin);
  r.kam_steps = red.kam.state.k;

  r.stage = "invert";
  const InversionReport inv = invert_via_diagonalization(red, pi0_perp(state.f), gamma);
  const AnalyticFunction& h = inv.h;
  r.inversion_residual = inv.residual;

  r.stage = "linearize";
  const LinearCoefficients d = linearize_Q(state.Q, h);

  r.stage = "conjugate";
  ConjugationOptions co;
  co.gamma = gamma;
  co.grid = spec.grid;
  ConjugationResult C = conjugate_step(state.L, d, co);

  r.stage = "transport";
  AnalyticFunction fn = multiply(C.T.r, apply_T_inverse(C.T, evaluate(state.Q, h), spec.grid));
  next.Q = push_quadratic(state.Q, C.T, spec.grid);
  next.f = pi0_perp(fn);
  next.L = C.L_plus;
  next.transforms.push_back(C.T);
  next.h_list.push_back(h);
  next.n = n + 1;
  r.stage = "done";

  r.norm_h = norm(h, state.strips.s(n));
  r.norm_f_next = norm(next.f, std::max(0.0, state.strips.s(n) - 2.0 * state.strips.sigma(n)));
  r.conj = C.diag;
  next.h_norms.push_back(r.norm_h);
  next.f_norms.push_back(r.norm_f_next);
  next.margins.push_back(r.min_margin);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return next;
}

// u_n = h_0 + T_1 h_1 + T_1 T_2 h_2 + ...
inline AnalyticFunction assemble_solution(const IterationState& state, const GridOptions& opt = {}) {
  if (state.h_list.empty()) throw PreconditionError("assemble_solution: no completed step");
  AnalyticFunction u = state.h_list[0];
  for (std::size_t k = 1; k < state.h_list.size(); ++k) {
    AnalyticFunction v = state.h_list[k];
    if (norm(v, 0.0) == 0.0) continue;
    for (std::size_t i = k; i-- > 0;) v = apply_T(state.transforms[i], v, opt);
    u += v;
  }
  return u;
}

struct ResidualReport {
  double l1 = 0.0;   // coefficient norm at strip 0
  double max = 0.0;  // max over the collocation grid
};

// F(u) = (omega.d_phi + d_x^3) u + Q(u) + f on a basis with oversample times the truncation.
// Q is evaluated from the density form, independently of the (i, j) tables.
inline ResidualReport residual(const ProblemSpec& spec, const AnalyticFunction& u, int oversample = 2) {
  const auto& b = *spec.basis();
  LatticeParams lat = b.lattice();
  lat.K *= oversample;
  const BasisPtr fine = Basis::make(lat, b.jmax() * oversample, 2);
  const AnalyticFunction U = resample(u, fine);
  const AnalyticFunction F = resample(spec.forcing, fine);
  const auto g0 = to_real_grid(U);
  const auto g1 = to_real_grid(dx(U, 1));
  std::vector<double> inner(g0.size()), outer(g0.size());
  for (std::size_t i = 0; i < g0.size(); ++i) {
    const double v = g0[i], vx = g1[i];
    inner[i] = 3.0 * spec.c3 * vx * vx + 2.0 * spec.c2 * v * vx + spec.c1 * v * v;
    outer[i] = spec.c2 * vx * vx + 2.0 * spec.c1 * v * vx + 3.0 * spec.c0 * v * v;
  }
  GridOptions loose;
  loose.alias_tol = std::numeric_limits<double>::infinity();
  AnalyticFunction R = om_dphi(U, spec.omega);
  R += dx(U, 3);
  R += dx(from_real_grid(fine, inner, loose), 2);
  R -= dx(from_real_grid(fine, outer, loose), 1);
  R += F;
  ResidualReport rep;
  rep.l1 = norm(R, 0.0);
  for (double v : to_real_grid(R)) rep.max = std::max(rep.max, std::abs(v));
  return rep;
}

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  std::vector<double> residuals;      // independent residual of u_0 = 0, u_1, ...
  std::vector<double> residuals_max;  // max-grid version
  std::vector<double> s_series, sigma_series;
  std::vector<double> f_norms, h_norms;
  std::vector<double> margins;
  std::vector<double> seconds;
  std::vector<StepRecord> records;
  std::string failure_stage;
  std::string failure;
  AnalyticFunction u;
  IterationState state;
};

inline SolveReport solve(const ProblemSpec& spec, int max_iters) {
  SolveReport rep;
  IterationState st = init(spec);
  rep.u = AnalyticFunction(spec.basis());
  const ResidualReport r0 = residual(spec, rep.u, spec.oversample);
  rep.residuals.push_back(r0.l1);
  rep.residuals_max.push_back(r0.max);
  while (true) {
    if (rep.residuals.back() <= spec.target_residual) {
      rep.converged = true;
      break;
    }
    if (st.n >= max_iters) {
      rep.failure_stage = "budget";
      rep.failure = "iteration budget exhausted";
      break;
    }
    if (st.strips.s(st.n + 1) <= spec.s_bar) {
      rep.failure_stage = "schedule";
      rep.failure = "strip schedule exhausted";
      break;
    }
    StepRecord rec;
    try {
      st = step(st, spec, &rec);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      rep.failure_stage = rec.stage.empty() ? "step" : rec.stage;
      rep.failure = e.what();
      break;
    }
    rep.records.push_back(rec);
    rep.seconds.push_back(rec.seconds);
    rep.s_series.push_back(st.strips.s(st.n - 1));
    rep.sigma_series.push_back(st.strips.sigma(st.n - 1));
    AnalyticFunction u;
    try {
      u = assemble_solution(st, spec.grid);
    } catch (const Error& e) {
      rep.failure_stage = "assemble";
      rep.failure = e.what();
      break;
    }
    const ResidualReport rr = residual(spec, u, spec.oversample);
    const double prev = rep.residuals.back();
    rep.residuals.push_back(rr.l1);
    rep.residuals_max.push_back(rr.max);
    rep.u = u;
    if (!(rr.l1 < prev)) {
      rep.failure_stage = "diverging";
      rep.failure = "independent residual did not decrease";
      break;
    }
  }
  rep.iterations = st.n;
  rep.f_norms = st.f_norms;
  rep.h_norms = st.h_norms;
  rep.margins = st.margins;
  rep.state = std::move(st);
  return rep;
}

}  // namespace airy
