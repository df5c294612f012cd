#include <cmath>

#include "airy/conjugation.hpp"
#include "airy/random.hpp"
#include "support.hpp"

using namespace airy;
using namespace airy::test;

namespace {

AnalyticFunction cosx(const BasisPtr& b, double a = 1.0) { return AnalyticFunction::trig(b, MultiIndex{}, 1, a, 0.0); }

// Mean over x of (lambda3 + d(x))^{-1/3} by the trapezoid rule.
double mean_inv_cbrt(const std::function<double(double)>& top, int n = 512) {
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += std::pow(top(2 * kPi * k / n), -1.0 / 3.0);
  return s / n;
}

// Small Hamiltonian-type perturbation: d2 = 2 d3_x.
LinearCoefficients small_perturbation(const BasisPtr& b, std::mt19937_64& eng, double eps, double decay = 1.5) {
  LinearCoefficients Q = LinearCoefficients::zero(b);
  Q.d[3] = random_series(b, eng, {eps, decay, false});
  Q.d[2] = 2.0 * dx(Q.d[3]);
  Q.d[1] = random_series(b, eng, {eps, decay, false});
  Q.d[0] = random_series(b, eng, {eps, decay, false});
  return Q;
}

DifferentialOperator base_operator(const BasisPtr& b, const FrequencyVector& w) {
  DifferentialOperator L = DifferentialOperator::constant(b, 1.0, 0.5, w);
  return L;
}

// Transformation with small random pieces and numerically inverted companions.
TransformationData random_transformation(const BasisPtr& b, std::mt19937_64& eng, double eps, const FrequencyVector& w) {
  TransformationData T = TransformationData::identity(b, 1.0, 0.0, w);
  T.alpha = random_series(b, eng, {eps, 2.5, true});
  T.alpha_tilde = invert_x_diffeo(T.alpha).inverse;
  T.beta = random_series(b, eng, {eps, 2.5, false, true, true});
  T.beta_tilde = invert_phi_shift(T.beta, w).inverse;
  T.p = random_series(b, eng, {eps, 2.5, false, true, true});
  return T;
}

}  // namespace

TEST(XDiffeo, ZeroCoefficient) {
  const auto b = basis(1, 3, 8);
  const auto X = build_x_diffeo(1.7, AnalyticFunction(b));
  EXPECT_LT(norm(X.alpha, 0.0), 1e-15);
  EXPECT_LT(max_abs_diff(X.m3, AnalyticFunction::constant(b, 1.7)), 1e-15);
}

TEST(XDiffeo, CosineAgainstQuadrature) {
  const auto b = basis(1, 2, 32);
  const double eps = 0.1;
  const auto X = build_x_diffeo(1.0, cosx(b, eps));
  const double mean = mean_inv_cbrt([&](double x) { return 1.0 + eps * std::cos(x); }, 2048);
  const double m3 = std::pow(mean, -3.0);
  EXPECT_NEAR(X.m3.at(0, 0).real(), m3, 1e-13);
  EXPECT_LT(norm(X.m3 - AnalyticFunction::constant(b, m3), 0.0), 1e-13);
  EXPECT_LE(X.identity_residual, 1e-10);
  // alpha_x = m3^{1/3} (1 + eps cos x)^{-1/3} - 1 at sample points.
  const auto ax = dx(X.alpha);
  for (double x : {0.0, 0.7, 2.1, 3.3, 5.9}) {
    const double expect = std::cbrt(m3) * std::pow(1.0 + eps * std::cos(x), -1.0 / 3.0) - 1.0;
    EXPECT_NEAR(evaluate(ax, {0.3}, x).real(), expect, 1e-12);
  }
  EXPECT_TRUE(X.alpha.has_zero_x_average(1e-15));
}

TEST(XDiffeo, PhiDependentModeAgainstQuadrature) {
  const auto b = basis(1, 10, 24);
  const double eps = 0.1;
  // d3 = eps cos(phi1) cos x.
  AnalyticFunction d3(b);
  d3 += multiply(AnalyticFunction::trig(b, MultiIndex::unit(1), 0, 1.0, 0.0), cosx(b, eps));
  const auto X = build_x_diffeo(1.0, d3);
  for (double phi : {0.0, 1.1, 2.5}) {
    const double m3 = std::pow(mean_inv_cbrt([&](double x) { return 1.0 + eps * std::cos(phi) * std::cos(x); }), -3.0);
    EXPECT_NEAR(evaluate(X.m3, {phi}, 0.4).real(), m3, 1e-10) << "phi=" << phi;
  }
  EXPECT_TRUE(X.m3.is_phi_only(1e-14));
  EXPECT_GT(norm(X.m3 - AnalyticFunction::constant(b, X.m3.at(0, 0).real()), 0.0), 1e-6);  // varies in phi
  EXPECT_TRUE(X.alpha.has_zero_x_average(1e-15));
  EXPECT_LE(X.identity_residual, 1e-10);
}

TEST(XDiffeo, RejectsNonPositiveLambda) {
  const auto b = basis(1, 2, 4);
  EXPECT_THROW(build_x_diffeo(0.0, AnalyticFunction(b)), PreconditionError);
  EXPECT_THROW(build_x_diffeo(1.0, cosx(b, 2.0)), PreconditionError);
}

TEST(TimeReparam, Examples) {
  const auto b = basis(2, 4, 2);
  const FrequencyVector w{1.3, 1.7};
  const auto c = build_time_reparam(AnalyticFunction::constant(b, 1.4), w);
  EXPECT_EQ(norm(c.beta, 0.0), 0.0);
  EXPECT_EQ(c.lambda3_plus, 1.4);
  const double eps = 0.05;
  AnalyticFunction m3 = AnalyticFunction::trig(b, MultiIndex::unit(1), 0, eps, 0.0);
  m3.add_constant(1.0);
  const auto r = build_time_reparam(m3, w);
  EXPECT_DOUBLE_EQ(r.lambda3_plus, 1.0);
  EXPECT_LT(max_abs_diff(r.beta, AnalyticFunction::trig(b, MultiIndex::unit(1), 0, 0.0, eps / 1.3)), 1e-17);
}

TEST(TimeReparam, RandomIdentity) {
  const auto b = basis(2, 5, 2);
  std::mt19937_64 eng(1);
  for (int k = 0; k < 20; ++k) {
    auto w = sample_frequency(eng, 2);
    while (!in_Dgamma(w, 0.05, b->lattice()).ok) w = sample_frequency(eng, 2);
    AnalyticFunction m3 = random_series(b, eng, {0.1, 1.0, false, true});
    m3.add_constant(1.0 + unit_uniform(eng));
    const auto r = build_time_reparam(m3, w, 0.05);
    EXPECT_LE(r.identity_residual, 1e-12);
    AnalyticFunction lhs = om_dphi(r.beta, w);
    lhs.add_constant(1.0);
    EXPECT_LE(max_abs_diff(r.lambda3_plus * lhs, m3), 1e-12);
  }
}

TEST(Translation, Examples) {
  const auto b = basis(2, 4, 4);
  const FrequencyVector w{1.3, 1.7};
  std::mt19937_64 eng(2);
  const auto a1 = random_series(b, eng, {0.1, 1.0, false});
  const auto same = build_translation(a1, a1, 0.7, w);
  EXPECT_EQ(norm(same.p, 0.0), 0.0);
  EXPECT_EQ(same.lambda1_plus, 0.7);
  const auto t = build_translation(a1 + AnalyticFunction::trig(b, MultiIndex::unit(1), 0, 1.0, 0.0), a1, 0.7, w);
  EXPECT_LT(max_abs_diff(t.p, AnalyticFunction::trig(b, MultiIndex::unit(1), 0, 0.0, -1.0 / 1.3)), 1e-15);
  EXPECT_DOUBLE_EQ(t.lambda1_plus, 0.7);
  AnalyticFunction shifted = a1;
  shifted.add_constant(0.25);
  EXPECT_DOUBLE_EQ(build_translation(shifted, a1, 0.7, w).lambda1_plus, 0.95);
}

TEST(ConjugateStep, ZeroPerturbationIsIdentity) {
  const auto b = basis(2, 3, 6);
  std::mt19937_64 eng(3);
  DifferentialOperator L = base_operator(b, {1.3, 1.7});
  L.B += random_series(b, eng, {0.01, 1.0, true});
  L.C = random_series(b, eng, {0.01, 1.0, true});
  const auto R = conjugate_step(L, LinearCoefficients::zero(b));
  // Roundoff only: the cube-root and reciprocal series run on the grid.
  EXPECT_LT(norm(R.T.alpha, 0.0), 1e-14);
  EXPECT_LT(norm(R.T.beta, 0.0), 1e-14);
  EXPECT_LT(norm(R.T.p, 0.0), 1e-14);
  EXPECT_LT(max_abs_diff(R.T.r, AnalyticFunction::constant(b, 1.0)), 1e-14);
  EXPECT_NEAR(R.L_plus.lambda3, 1.0, 1e-14);
  EXPECT_LT(max_abs_diff(R.L_plus.B, L.B), 1e-13);
  EXPECT_LT(max_abs_diff(R.L_plus.C, L.C), 1e-13);
}

TEST(ConjugateStep, XOnlyThirdOrderGivesConstantM3) {
  const auto b = basis(1, 4, 16);
  LinearCoefficients Q = LinearCoefficients::zero(b);
  Q.d[3] = cosx(b, 0.01);
  Q.d[2] = 2.0 * dx(Q.d[3]);
  const auto R = conjugate_step(base_operator(b, {1.4142135623730951}), Q);
  EXPECT_TRUE(R.T.m3.is_phi_only(1e-15));
  EXPECT_LT(norm(R.T.m3, 0.0) - std::abs(R.T.m3.at(0, 0)), 1e-14);
  EXPECT_LT(norm(R.T.beta, 0.0), 1e-15);
  EXPECT_NEAR(R.L_plus.lambda3, std::pow(mean_inv_cbrt([](double x) { return 1.0 + 0.01 * std::cos(x); }), -3.0), 1e-14);
  EXPECT_LE(R.diag.b2_norm, 1e-10);
}

TEST(ConjugateStep, IdentitiesHoldForGenericPerturbation) {
  const auto b = basis(1, 8, 16);
  std::mt19937_64 eng(4);
  for (int k = 0; k < 3; ++k) {
    const auto Q = small_perturbation(b, eng, 1e-3);
    const auto R = conjugate_step(base_operator(b, {1.4142135623730951}), Q);
    EXPECT_LE(R.diag.x_identity, 1e-10);
    EXPECT_LE(R.diag.time_identity, 1e-10);
    EXPECT_LE(R.diag.r_identity, 1e-10);
    EXPECT_LE(R.diag.b2_norm, 1e-10);
    EXPECT_LE(R.diag.hamiltonian_defect, 1e-15);
    EXPECT_LE(R.diag.normalization_defect, 1e-12);
    EXPECT_TRUE(R.L_plus.normalized(1e-12));
  }
}

TEST(ConjugateStep, ResidualShrinksUnderRefinement) {
  std::mt19937_64 eng(5);
  const auto coarse = basis(1, 4, 8), fine = basis(1, 6, 12);
  // Same perturbation on both truncations: build on the fine basis and restrict.
  LinearCoefficients Qf = small_perturbation(fine, eng, 1e-3);
  LinearCoefficients Qc = LinearCoefficients::zero(coarse);
  for (int m = 0; m < 4; ++m) Qc.d[static_cast<std::size_t>(m)] = resample(Qf.d[static_cast<std::size_t>(m)], coarse);
  Qc.d[2] = 2.0 * dx(Qc.d[3]);
  const FrequencyVector w{1.4142135623730951};
  const auto Rc = conjugate_step(base_operator(coarse, w), Qc);
  const auto Rf = conjugate_step(base_operator(fine, w), Qf);
  const ModeWindow win{2.0, 4};
  const double rc = conjugation_residual(base_operator(coarse, w), Qc, Rc, win, {});
  const double rf = conjugation_residual(base_operator(fine, w), Qf, Rf, win, {});
  EXPECT_LT(rf, rc);
  EXPECT_LT(rf, 1e-6);
}

TEST(ConjugateStep, DriftLinearInPerturbationSize) {
  const auto b = basis(1, 6, 12);
  std::mt19937_64 eng(6);
  const auto Q = small_perturbation(b, eng, 1.0, 2.5);
  const auto L = base_operator(b, {1.4142135623730951});
  auto scaled = [&](double s) {
    LinearCoefficients q = Q;
    for (auto& f : q.d) f *= s;
    return conjugate_step(L, q);
  };
  double prev_slope = 0.0;
  for (double s : {4e-3, 2e-3, 1e-3}) {
    const auto R = scaled(s);
    const double drift = norm(R.L_plus.B - L.B, 0.0) + norm(R.L_plus.C - L.C, 0.0) + std::abs(R.L_plus.lambda3 - L.lambda3);
    const double slope = drift / s;
    if (prev_slope > 0.0) EXPECT_NEAR(slope / prev_slope, 1.0, 0.05);
    prev_slope = slope;
    EXPECT_LE(norm(R.T.r - AnalyticFunction::constant(b, 1.0), 0.0), 10.0 * norm(Q.d[3], 0.0) * s);
  }
}

TEST(Quadratic, InitialFormMatchesDivergenceExpression) {
  const auto b = basis(2, 3, 10);
  std::mt19937_64 eng(7);
  const double c0 = 0.3, c1 = -0.4, c2 = 0.5, c3 = 0.7;
  const auto Q = initial_quadratic(b, c0, c1, c2, c3);
  for (int k = 0; k < 5; ++k) {
    const auto u = random_series(b, eng, {1.0, 0.8});
    const auto ux = dx(u);
    auto sq = [](const AnalyticFunction& f, const AnalyticFunction& g) { return multiply(f, g); };
    const auto inner2 = 3 * c3 * sq(ux, ux) + 2 * c2 * sq(u, ux) + c1 * sq(u, u);
    const auto inner1 = c2 * sq(ux, ux) + 2 * c1 * sq(u, ux) + 3 * c0 * sq(u, u);
    const auto oracle = dx(inner2, 2) - dx(inner1);
    EXPECT_LT(max_abs_diff(evaluate(Q, u), oracle), 1e-12 * (1.0 + norm(oracle, 0.0)));
  }
  EXPECT_THROW(QuadraticForm().set(3, 0, AnalyticFunction(b)), PreconditionError);
  EXPECT_THROW(QuadraticForm().set(2, 3, AnalyticFunction(b)), PreconditionError);
}

TEST(Quadratic, GridEvaluationMatchesSpectral) {
  const auto b = basis(1, 6, 16, 1.0, 4);
  std::mt19937_64 eng(8);
  const auto Q = initial_quadratic(b, 0.3, 0.0, 0.5, 0.7);
  auto u = random_series(b, eng, {1.0, 1.0});
  u = project_N(u, 4.0);
  EXPECT_LT(max_abs_diff(evaluate_on_grid(Q, u), evaluate(Q, u)), 1e-12);
}

TEST(Quadratic, LinearizationIsPolarization) {
  const auto b = basis(1, 4, 10);
  std::mt19937_64 eng(9);
  const auto Q = initial_quadratic(b, 0.3, 0.1, 0.5, 0.7);
  const auto h = random_series(b, eng, {0.5, 1.2}), v = random_series(b, eng, {0.5, 1.2});
  const auto Qp = linearize_Q(Q, h);
  AnalyticFunction lin(b);
  for (int m = 0; m <= 3; ++m) lin += multiply(Qp.d[static_cast<std::size_t>(m)], dx(v, m));
  // Q(h + v) - Q(h - v) = 2 Q'(h)[v] for a symmetric bilinear form.
  const auto pol = 0.5 * (evaluate(Q, h + v) - evaluate(Q, h - v));
  EXPECT_LT(max_abs_diff(lin, pol), 1e-12);
}

TEST(PushQuadratic, IdentityLeavesFormUnchanged) {
  const auto b = basis(1, 3, 8);
  const auto Q = initial_quadratic(b, 0.3, 0.0, 0.5, 0.7);
  const auto P = push_quadratic(Q, TransformationData::identity(b, 1.0, 0.0, {1.5}));
  for (const auto& [ij, q] : Q.q) {
    const auto* p = P.get(ij.first, ij.second);
    ASSERT_NE(p, nullptr);
    EXPECT_LT(max_abs_diff(*p, q), 1e-14);
  }
}

TEST(PushQuadratic, PureTranslationShiftsPhases) {
  const auto b = basis(1, 6, 8);
  const FrequencyVector w{1.5};
  TransformationData T = TransformationData::identity(b, 1.0, 0.0, w);
  const double c = 0.2;
  T.p = AnalyticFunction::trig(b, MultiIndex::unit(1), 0, c, 0.0);  // p(phi) = c cos phi
  QuadraticForm Q;
  Q.set(1, 1, AnalyticFunction::trig(b, MultiIndex{}, 1, 1.0, 0.0));  // cos x u_x^2
  const auto P = push_quadratic(Q, T);
  // T^{-1} shifts x by -p(phi): the coefficient becomes cos(x - p(phi)).
  for (double phi : {0.0, 1.0, 2.0})
    for (double x : {0.3, 1.7})
      EXPECT_NEAR(evaluate(*P.get(1, 1), {phi}, x).real(), std::cos(x - c * std::cos(phi)), 1e-5);
}

TEST(PushQuadratic, TwoSidedGridEvaluation) {
  const auto b = basis(1, 8, 24);
  const FrequencyVector w{1.4142135623730951};
  std::mt19937_64 eng(10);
  const auto T = random_transformation(b, eng, 0.01, w);
  const auto Q = initial_quadratic(b, 0.3, 0.0, 0.5, 0.7);
  const auto P = push_quadratic(Q, T);
  for (int k = 0; k < 10; ++k) {
    const auto v = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
    const auto lhs = multiply(T.r, apply_T_inverse(T, evaluate(Q, apply_T(T, v))));
    const auto rhs = evaluate(P, v);
    EXPECT_LE(norm(lhs - rhs, 0.0), 1e-8 * norm(rhs, 0.0));
  }
}

TEST(ApplyT, IdentityAndRoundTrip) {
  const auto b = basis(1, 8, 24);
  const FrequencyVector w{1.4142135623730951};
  std::mt19937_64 eng(11);
  const auto I = TransformationData::identity(b, 1.0, 0.0, w);
  const auto u = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
  EXPECT_LT(max_abs_diff(apply_T(I, u), u), 1e-15);
  for (int k = 0; k < 5; ++k) {
    const auto T = random_transformation(b, eng, 0.01, w);
    const auto v = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
    EXPECT_LE(max_abs_diff(apply_T(T, apply_T_inverse(T, v)), v), 1e-10);
    EXPECT_LE(max_abs_diff(apply_T_inverse(T, apply_T(T, v)), v), 1e-10);
  }
}

TEST(ApplyT, PreservesSymplecticPairingFiberwise) {
  const auto b = basis(1, 8, 24);
  const FrequencyVector w{1.4142135623730951};
  std::mt19937_64 eng(12);
  for (int k = 0; k < 5; ++k) {
    const auto T = random_transformation(b, eng, 0.01, w);
    const auto u = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
    const auto v = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
    const auto before = compose_phi_shift(symplectic_pairing(u, v), T.beta, w);
    const auto after = symplectic_pairing(apply_T(T, u), apply_T(T, v));
    EXPECT_LE(max_abs_diff(after, before), 1e-10);
  }
  // Without the time shift the phi-averaged pairing is invariant.
  auto T = random_transformation(b, eng, 0.01, w);
  T.beta = T.beta_tilde = AnalyticFunction(b);
  const auto u = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
  const auto v = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
  EXPECT_NEAR(std::abs(symplectic_pairing(apply_T(T, u), apply_T(T, v)).at(0, 0) - symplectic_pairing(u, v).at(0, 0)), 0.0, 1e-10);
}
