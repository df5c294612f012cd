// Acceptance run: one PASS/FAIL line per criterion, thresholds fixed below.
// Exit status is 1 when any criterion fails.

#include <unsupported/Eigen/MatrixFunctions>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "airy/cli.hpp"
#include "airy/homological.hpp"
#include "airy/nashmoser.hpp"
#include "airy/opalg.hpp"
#include "airy/random.hpp"
#include "airy/reducibility.hpp"
#include "airy/smalldiv.hpp"

using namespace airy;
namespace fs = std::filesystem;

namespace {

// Thresholds.
constexpr double kHomologicalTol = 1e-12;
constexpr double kHomologicalSeconds = 1.0;
constexpr int kSolveMaxSteps = 4;
constexpr double kSolveResidual = 1e-10;
constexpr double kSuperGeometricExponent = 1.3;
constexpr double kSuperGeometricOnset = 1e-4;
constexpr double kSolveSeconds = 60.0;
constexpr double kRefinementGain = 4.0;
constexpr double kIdentityTol = 1e-10;
constexpr double kPairingTol = 1e-10;
constexpr double kReductionStop = 1e-10;
constexpr double kReductionFinal = 1e-10;
constexpr double kOffDiagonal = 1e-9;
constexpr double kOddness = 1e-10;
constexpr double kReductionSeconds = 30.0;
constexpr double kOracleTol = 1e-8;
constexpr double kRatioLow = 1.5, kRatioHigh = 3.0;
constexpr double kMeasureSeconds = 30.0;
constexpr double kCommutatorTol = 1e-12;
constexpr double kExpTol = 1e-10;
constexpr double kSlopeStability = 0.05;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) { return format_double(v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BasisPtr make_basis(int M, double K, int jmax) { return Basis::make(LatticeParams{1.0, M, K}, jmax); }

// B = lambda1 + eps cos x cos phi_1, C = eps sin x.
DifferentialOperator cosine_operator(const BasisPtr& b, double lambda1, double eps, const FrequencyVector& w) {
  DifferentialOperator L = DifferentialOperator::constant(b, 1.0, lambda1, w);
  L.B += eps * multiply(AnalyticFunction::trig(b, MultiIndex{}, 1, 1.0, 0.0), AnalyticFunction::trig(b, MultiIndex::unit(1), 0, 1.0, 0.0));
  L.C = AnalyticFunction::trig(b, MultiIndex{}, 1, 0.0, eps);
  return L;
}

LinearCoefficients random_perturbation(const BasisPtr& b, std::mt19937_64& eng, double size, double decay) {
  LinearCoefficients Q = LinearCoefficients::zero(b);
  Q.d[3] = random_series(b, eng, {size, decay, false});
  Q.d[2] = 2.0 * dx(Q.d[3]);
  Q.d[1] = random_series(b, eng, {size, decay, false});
  Q.d[0] = random_series(b, eng, {size, decay, false});
  return Q;
}

// ---------------------------------------------------------------- 1

Outcome homological_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = make_basis(2, 6, 16);
  const FrequencyVector w = sample_admissible_omega(1, 0.05, b->lattice(), b->jmax()).omega;
  std::mt19937_64 eng(101);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto f = random_series(b, eng);
    const auto h = solve_L0(f, w, 0.0).h;
    AnalyticFunction r = om_dphi(h, w);
    r += dx(h, 3);
    r += f;
    worst = std::max(worst, norm(r, 0.0) / norm(f, 0.0));
  }
  const double t = seconds_since(t0);
  return {worst <= kHomologicalTol && t < kHomologicalSeconds, "max relative residual " + fmt(worst) + ", " + fmt(t) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome end_to_end_solve(const fs::path& configs) {
  const auto t0 = std::chrono::steady_clock::now();
  const Config c = Config::load((configs / "solve_small.cfg").string());
  const cli::SolveSetup s = cli::solve_setup(c, {});
  const SolveReport rep = solve(s.spec, s.max_iters);
  const double t = seconds_since(t0);
  bool fast = true;
  std::string series;
  for (std::size_t k = 0; k < rep.residuals.size(); ++k) {
    series += (k ? " " : "") + fmt(rep.residuals[k]);
    if (k && rep.residuals[k - 1] < kSuperGeometricOnset && rep.residuals[k] > std::pow(rep.residuals[k - 1], kSuperGeometricExponent)) fast = false;
  }
  const bool ok = rep.converged && rep.iterations <= kSolveMaxSteps && rep.residuals.back() <= kSolveResidual && fast && t < kSolveSeconds;
  return {ok, std::to_string(rep.iterations) + " steps, residuals [" + series + "], " + fmt(t) + " s"};
}

// ---------------------------------------------------------------- 3

Outcome conjugation_correctness() {
  std::mt19937_64 eng(303);
  const FrequencyVector w{1.4142135623730951};
  const auto coarse = make_basis(1, 4, 12), fine = make_basis(1, 8, 24);
  const ModeWindow win{1.0, 3};
  double worst_gain = std::numeric_limits<double>::infinity(), worst_identity = 0.0, coarse_identity = 0.0;
  for (int k = 0; k < 3; ++k) {
    // Same perturbation on both truncations, restricted from the fine one.
    const LinearCoefficients Qf = random_perturbation(fine, eng, 1e-3, 1.8);
    LinearCoefficients Qc = LinearCoefficients::zero(coarse);
    for (int m = 0; m < 4; ++m) Qc.d[static_cast<std::size_t>(m)] = resample(Qf.d[static_cast<std::size_t>(m)], coarse);
    Qc.d[2] = 2.0 * dx(Qc.d[3]);
    const auto Lc = DifferentialOperator::constant(coarse, 1.0, 0.5, w), Lf = DifferentialOperator::constant(fine, 1.0, 0.5, w);
    const auto Rc = conjugate_step(Lc, Qc), Rf = conjugate_step(Lf, Qf);
    const double rc = conjugation_residual(Lc, Qc, Rc, win, {}), rf = conjugation_residual(Lf, Qf, Rf, win, {});
    worst_gain = std::min(worst_gain, rc / rf);
    // Identities are judged on the refined truncation; the coarse one is under-resolved by design.
    worst_identity = std::max({worst_identity, Rf.diag.x_identity, Rf.diag.time_identity, Rf.diag.r_identity});
    coarse_identity = std::max({coarse_identity, Rc.diag.x_identity, Rc.diag.time_identity, Rc.diag.r_identity});
  }
  return {worst_gain >= kRefinementGain && worst_identity <= kIdentityTol,
          "min refinement gain " + fmt(worst_gain) + ", max identity defect " + fmt(worst_identity) + " (coarse " + fmt(coarse_identity) + ")"};
}

// ---------------------------------------------------------------- 4

// The x-pairing is carried fiberwise: the time reparametrization moves the fiber.
Outcome symplecticity() {
  std::mt19937_64 eng(404);
  const auto b = make_basis(1, 8, 24);
  const FrequencyVector w{1.4142135623730951};
  const auto L = DifferentialOperator::constant(b, 1.0, 0.5, w);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    LinearCoefficients Q = LinearCoefficients::zero(b);
    Q.d[3] = project_N(random_series(b, eng, {1e-3, 2.5, false}), 4.0);
    Q.d[2] = 2.0 * dx(Q.d[3]);
    Q.d[1] = project_N(random_series(b, eng, {1e-3, 2.5, false}), 4.0);
    const auto C = conjugate_step(L, Q);
    for (int k = 0; k < 10; ++k) {
      const auto u = project_N(random_series(b, eng, {1.0, 2.5}), 6.0), v = project_N(random_series(b, eng, {1.0, 2.5}), 6.0);
      const auto before = compose_phi_shift(symplectic_pairing(u, v), C.T.beta, w);
      const auto after = symplectic_pairing(apply_T(C.T, u), apply_T(C.T, v));
      worst = std::max(worst, norm(after - before, 0.0) / norm(before, 0.0));
    }
  }
  return {worst <= kPairingTol, "max relative pairing defect over 50 pairs " + fmt(worst)};
}

// ---------------------------------------------------------------- 5

Outcome reducibility() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = make_basis(1, 8, 16);
  ReductionParams prm;
  prm.stop_tol = kReductionStop;
  const auto red = reduce_operator(cosine_operator(b, 0.5, 1e-3, {1.4142135623730951}), 0.01, prm);
  const double t = seconds_since(t0);
  std::vector<double> logs;
  if (!red.kam.trace.empty()) logs.push_back(std::log(red.kam.trace.front().P_norm));
  for (const auto& s : red.kam.trace) logs.push_back(std::log(s.P_next_norm));
  bool concave = logs.size() >= 2;
  for (std::size_t k = 2; k < logs.size(); ++k) concave = concave && logs[k] - logs[k - 1] <= logs[k - 1] - logs[k - 2] + 1e-9;
  const double final_norm = red.kam.trace.empty() ? 0.0 : red.kam.trace.back().P_next_norm;
  const double off = diagonalization_residual(red, ModeWindow::half_of(*b)).off_diagonal;
  double odd = 0.0;
  for (const auto& [j, v] : red.Omega_inf)
    if (j > 0) odd = std::max(odd, std::abs(v + red.Omega_inf.at(-j)));
  const bool ok = red.converged() && concave && final_norm <= kReductionFinal && off <= kOffDiagonal && odd <= kOddness && t < kReductionSeconds;
  return {ok, std::to_string(red.kam.state.k) + " KAM steps, final op_norm " + fmt(final_norm) + (concave ? ", concave" : ", NOT concave") +
                  ", off-diagonal " + fmt(off) + ", oddness " + fmt(odd) + ", " + fmt(t) + " s"};
}

// ---------------------------------------------------------------- 6

// Window of 30 spatial modes: jmax = 15.
Outcome oracle_equivalence() {
  const auto b = make_basis(1, 4, 15);
  const auto red = reduce_operator(cosine_operator(b, 0.5, 1e-3, {1.4142135623730951}), 0.01);
  if (!red.converged()) return {false, "reduction did not converge"};
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(to_dense(materialize(red.L)));
  std::mt19937_64 eng(606);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto f = random_series(b, eng, {1.0, 0.5});
    const Eigen::VectorXcd dense = lu.solve(-to_dense(f));
    const Eigen::VectorXcd diag = to_dense(invert_via_diagonalization(red, f, 0.01).h);
    worst = std::max(worst, (diag - dense).norm() / dense.norm());
  }
  return {worst <= kOracleTol, "max relative difference " + fmt(worst) + " on " + std::to_string(2 * b->jmax()) + " spatial modes"};
}

// ---------------------------------------------------------------- 7

Outcome measure_scaling() {
  const auto t0 = std::chrono::steady_clock::now();
  const LatticeParams lat{1.0, 3, 6};
  std::vector<double> deficits;
  for (double g : {0.5, 0.25, 0.125})
    deficits.push_back(1.0 - measure_estimate([&](const FrequencyVector& w) { return in_Dgamma(w, g, lat).ok; }, 1000, 7, 3).fraction);
  const double t = seconds_since(t0);
  bool ok = t < kMeasureSeconds;
  std::string d = "deficits";
  for (double v : deficits) d += " " + fmt(v);
  for (std::size_t k = 1; k < deficits.size(); ++k) {
    const double ratio = deficits[k - 1] / deficits[k];
    ok = ok && deficits[k] < deficits[k - 1] && ratio >= kRatioLow && ratio <= kRatioHigh;
    d += (k == 1 ? ", ratios " : " ") + fmt(ratio);
  }
  return {ok, d + ", " + fmt(t) + " s"};
}

// ---------------------------------------------------------------- 8

// Max entry difference over block pairs whose lattice difference stays in the window.
double windowed_diff(const BasisPtr& b, const Eigen::MatrixXcd& x, const Eigen::MatrixXcd& y) {
  const int n = 2 * b->jmax();
  double worst = 0.0;
  for (int r = 0; r < b->n_ell(); ++r)
    for (int c = 0; c < b->n_ell(); ++c)
      if (b->combine(r, c, -1) >= 0) worst = std::max(worst, (x.block(r * n, c * n, n, n) - y.block(r * n, c * n, n, n)).cwiseAbs().maxCoeff());
  return worst;
}

OperatorMatrix random_block_operator(const BasisPtr& b, std::mt19937_64& eng, const std::vector<MultiIndex>& support, double scale) {
  OperatorMatrix R(b, false);
  std::normal_distribution<double> nd;
  for (const auto& l : support) {
    Block& B = R.block(b->index_of(l));
    for (int r = 0; r < R.dim(); ++r)
      for (int c = 0; c < R.dim(); ++c) B(r, c) = scale * cd(nd(eng), nd(eng)) / static_cast<double>(R.dim());
  }
  return R;
}

Outcome appendix_calculus() {
  std::mt19937_64 eng(808);
  // Closed-form commutator against the dense matrix commutator.
  double comm = 0.0;
  {
    const auto b = make_basis(2, 2, 8);
    const Eigen::MatrixXcd D3 = to_dense(OperatorMatrix::dx_power(b, 3));
    for (int k = 0; k < 20; ++k) {
      const auto g = random_series(b, eng, {0.5, 0.8});
      const Eigen::MatrixXcd G = to_dense(order_one_generator(g));
      const auto s = commutator_dx3_G(g);
      OperatorMatrix closed = compose(OperatorMatrix::multiplication(s.leading), OperatorMatrix::dx_power(b, 1));
      closed += s.remainder;
      const Eigen::MatrixXcd brute = D3 * G - G * D3;
      comm = std::max(comm, windowed_diff(b, to_dense(closed), brute) / (1.0 + brute.cwiseAbs().maxCoeff()));
    }
  }
  // Lie series against the dense matrix exponential on a 40 x 40 truncation.
  double expo = 0.0;
  {
    const auto b = make_basis(1, 2, 4);
    const std::vector<MultiIndex> up{MultiIndex{}, MultiIndex::unit(1)};
    const std::vector<MultiIndex> up2{MultiIndex{}, MultiIndex::unit(1), MultiIndex::unit(1, 2)};
    for (int k = 0; k < 10; ++k) {
      const auto G = random_block_operator(b, eng, up, 0.5), B = random_block_operator(b, eng, up2, 1.0);
      const Eigen::MatrixXcd g = to_dense(G);
      const Eigen::MatrixXcd oracle = (-g).exp() * to_dense(B) * g.exp();
      const auto r = exp_conjugate(G, B, 1e-15);
      expo = std::max(expo, windowed_diff(b, to_dense(r.value), oracle) / (1.0 + oracle.cwiseAbs().maxCoeff()));
    }
  }
  // Norm algebra and Cauchy estimates on 100 random inputs each.
  int algebra_fail = 0, cauchy_fail = 0;
  {
    const auto b = make_basis(2, 4, 10);
    for (int k = 0; k < 100; ++k) {
      const double s = 0.05 + 0.5 * unit_uniform(eng);
      const auto u = random_series(b, eng, {1.0, 0.6, false}), v = random_series(b, eng, {1.0, 0.6, false});
      if (norm(multiply(u, v), s) > norm(u, s) * norm(v, s) * (1.0 + 1e-12)) ++algebra_fail;
    }
    for (int k = 0; k < 100; ++k) {
      const double s = 0.2 + 0.5 * unit_uniform(eng), sig = 0.05 + 0.1 * unit_uniform(eng);
      const int order = 1 + static_cast<int>(3.0 * unit_uniform(eng));
      const auto u = random_series(b, eng, {1.0, 0.6, false});
      const double bound = std::pow(order / (std::exp(1.0) * sig), order) * norm(u, s);
      if (norm(dx(u, order), s - sig) > bound * (1.0 + 1e-12)) ++cauchy_fail;
    }
  }
  const bool ok = comm <= kCommutatorTol && expo <= kExpTol && algebra_fail == 0 && cauchy_fail == 0;
  return {ok, "commutator " + fmt(comm) + ", exp_conjugate " + fmt(expo) + ", algebra failures " + std::to_string(algebra_fail) +
                  "/100, Cauchy failures " + std::to_string(cauchy_fail) + "/100"};
}

// ---------------------------------------------------------------- 9

Outcome frequency_stability() {
  const auto b = make_basis(1, 8, 16);
  const FrequencyVector w{1.4142135623730951};
  ReductionParams prm;
  prm.stop_tol = 1e-13;
  const auto L = cosine_operator(b, 0.5, 1e-3, w);
  const auto base = reduce_operator(L, 0.01, prm);
  // a1 gains delta (1 + cos 2x cos phi_1).
  AnalyticFunction shape = multiply(AnalyticFunction::trig(b, MultiIndex{}, 2, 1.0, 0.0), AnalyticFunction::trig(b, MultiIndex::unit(1), 0, 1.0, 0.0));
  shape.add_constant(1.0);
  auto slope = [&](double delta) {
    DifferentialOperator Lp = L;
    Lp.B += delta * shape;
    return compare_reductions(base, reduce_operator(Lp, 0.01, prm)).Omega_diff / delta;
  };
  bool ok = true;
  std::string d;
  for (double delta : {1e-5, 1e-6}) {
    const double c1 = slope(delta), c2 = slope(delta / 2.0);
    const double drift = std::abs(c2 / c1 - 1.0);
    ok = ok && std::isfinite(c1) && drift <= kSlopeStability;
    d += (d.empty() ? "" : "; ") + std::string("delta ") + fmt(delta) + ": C " + fmt(c1) + " -> " + fmt(c2) + " (drift " + fmt(drift) + ")";
  }
  return {ok, d};
}

// ---------------------------------------------------------------- 10

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome reproducibility(const fs::path& configs) {
  const fs::path root = fs::temp_directory_path() / "airy_acceptance_repro";
  fs::remove_all(root);
  struct Case {
    std::string cfg;
    std::function<int(const Config&, const cli::Options&)> run;
    std::vector<std::string> files;
  };
  const std::vector<Case> cases{{"solve_small.cfg", cli::cmd_solve, {"report.json", "trace.csv", "solution.json"}},
                                {"reduce_cosx.cfg", cli::cmd_reduce, {"report.json", "trace.csv", "omega_table.csv"}},
                                {"measure.cfg", cli::cmd_measure, {"report.json", "measure.csv"}}};
  std::ostringstream sink;
  int compared = 0;
  for (const auto& c : cases) {
    for (const char* tag : {"a", "b"}) {
      cli::Options o;
      o.out = root / (c.cfg + tag);
      o.seed = 1;
      o.log = &sink;
      o.err = &sink;
      fs::create_directories(o.out);
      if (c.run(Config::load((configs / c.cfg).string()), o) != cli::kExitOk) return {false, c.cfg + " run failed"};
    }
    for (const auto& f : c.files) {
      if (slurp(root / (c.cfg + "a") / f) != slurp(root / (c.cfg + "b") / f)) return {false, c.cfg + ": " + f + " differs"};
      ++compared;
    }
  }
  fs::remove_all(root);
  return {true, std::to_string(compared) + " output files byte-identical across repeated runs"};
}

}  // namespace

int main() {
  const fs::path configs = AIRY_CONFIG_DIR;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"homological exactness", homological_exactness},
      {"end-to-end solve", [&] { return end_to_end_solve(configs); }},
      {"conjugation correctness", conjugation_correctness},
      {"symplecticity", symplecticity},
      {"reducibility", reducibility},
      {"oracle equivalence", oracle_equivalence},
      {"measure scaling", measure_scaling},
      {"operator calculus", appendix_calculus},
      {"frequency stability", frequency_stability},
      {"reproducibility", [&] { return reproducibility(configs); }},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome r;
    try {
      r = criteria[k].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    if (!r.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", r.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
