#pragma once
// Command implementations behind the airykam executable.
// Exit codes: 0 success, 1 input error, 2 clean numerical non-success.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "airy/config.hpp"
#include "airy/conjugation.hpp"
#include "airy/io.hpp"
#include "airy/nashmoser.hpp"
#include "airy/random.hpp"
#include "airy/reducibility.hpp"
#include "airy/smalldiv.hpp"

namespace airy::cli {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct Options {
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::ostream* log = &std::cout;
  std::ostream* err = &std::cerr;
};

// ---------------------------------------------------------------- config helpers

inline BasisPtr basis_from_config(const Config& c) {
  LatticeParams lat{c.get_double("lattice.eta", 1.0), static_cast<int>(c.get_int("lattice.M")), c.get_double("lattice.K")};
  try {
    lat.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("lattice: ") + e.what());
  }
  const long long jmax = c.get_int("truncation.jmax");
  const long long gf = c.get_int("truncation.grid_factor", 2);
  if (jmax < 1 || jmax > 512) throw ConfigError("key 'truncation.jmax' must lie in [1, 512]");
  if (gf < 2 || gf > 8) throw ConfigError("key 'truncation.grid_factor' must lie in [2, 8]");
  return Basis::make(lat, static_cast<int>(jmax), static_cast<int>(gf));
}

// "site:value, site:value" (empty or "0" for the zero index).
inline MultiIndex parse_multi_index(const std::string& s, const std::string& key) {
  MultiIndex l;
  const std::string t = Config::trim(s);
  if (t.empty() || t == "0") return l;
  for (const auto& item : Config::split(t, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("key '" + key + "': expected site:value pairs, got '" + item + "'");
    const long long site = Config::to_int(Config::trim(item.substr(0, colon)), key);
    const long long val = Config::to_int(Config::trim(item.substr(colon + 1)), key);
    if (site < 1 || site > 64) throw ConfigError("key '" + key + "': site out of range");
    if (l[static_cast<int>(site)] != 0) throw ConfigError("key '" + key + "': repeated site");
    l.set(static_cast<int>(site), static_cast<int>(val));
  }
  return l;
}

// Each entry "l | j | re | im"; conjugate partners of listed modes are filled in.
inline AnalyticFunction modes_from_config(const Config& c, const BasisPtr& b, const std::string& key, double scale) {
  AnalyticFunction u(b, false);
  std::set<std::pair<int, int>> listed;
  for (const auto& entry : c.all(key)) {
    const auto parts = Config::split(entry, '|');
    if (parts.size() != 4) throw ConfigError("key '" + key + "': expected 'l | j | re | im', got '" + entry + "'");
    const MultiIndex l = parse_multi_index(parts[0], key);
    const long long j = Config::to_int(parts[1], key);
    const cd v(Config::to_double(parts[2], key), Config::to_double(parts[3], key));
    const int li = b->index_of(l);
    if (li < 0 || j < -b->jmax() || j > b->jmax()) throw ConfigError("key '" + key + "': mode " + l.str() + ", " + std::to_string(j) + " outside the truncation");
    u.at(li, static_cast<int>(j)) += scale * v;
    listed.insert({li, static_cast<int>(j)});
  }
  for (const auto& [li, j] : listed) {
    const std::pair<int, int> partner{b->neg(li), -j};
    if (!listed.count(partner)) {
      u.at(partner.first, partner.second) = std::conj(u.at(li, j));
    } else if (std::abs(u.at(li, j) - std::conj(u.at(partner.first, partner.second))) > 1e-15 * (1.0 + std::abs(u.at(li, j)))) {
      throw ConfigError("key '" + key + "': listed modes are not conjugate-symmetric");
    }
  }
  u.set_real(true);
  return u;
}

inline std::uint64_t seed_of(const Config& c, const Options& o) {
  const long long s = c.get_int("seed", 1);
  if (o.seed) return *o.seed;
  if (s < 0) throw ConfigError("key 'seed' must be non-negative");
  return static_cast<std::uint64_t>(s);
}

inline FrequencyVector omega_list(const Config& c, int M) {
  FrequencyVector w = c.get_list("omega");
  try {
    validate_frequency(w, M);
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("key 'omega': ") + e.what());
  }
  return w;
}

inline ReductionParams reduction_from_config(const Config& c, double stop_default) {
  ReductionParams p;
  p.N0 = c.get_double("reduction.N0", 2.0);
  p.stop_tol = c.get_double("reduction.stop_tol", stop_default);
  p.max_steps = static_cast<int>(c.get_int("reduction.max_steps", 12));
  if (!(p.N0 > 0.0)) throw ConfigError("key 'reduction.N0' must be positive");
  if (!(p.stop_tol > 0.0)) throw ConfigError("key 'reduction.stop_tol' must be positive");
  if (p.max_steps < 1) throw ConfigError("key 'reduction.max_steps' must be >= 1");
  return p;
}

struct SolveSetup {
  ProblemSpec spec;
  int max_iters = 6;
  int omega_draws = 0;  // 0 when omega was given
  std::uint64_t seed = 1;
  bool timing = false;
};

inline SolveSetup solve_setup(const Config& c, const Options& o) {
  SolveSetup s;
  const BasisPtr b = basis_from_config(c);
  ProblemSpec& p = s.spec;
  p.c0 = c.get_double("problem.c0", 0.0);
  p.c1 = c.get_double("problem.c1", 0.0);
  p.c2 = c.get_double("problem.c2", 0.0);
  p.c3 = c.get_double("problem.c3", 1.0);
  p.S = c.get_double("problem.S", 1.0);
  p.s_bar = c.get_double("problem.s_bar", 0.1);
  p.dioph.gamma0 = c.get_double("diophantine.gamma0", 0.05);
  p.dioph.gbar = c.get_double("diophantine.gbar", 0.5);
  p.oversample = static_cast<int>(c.get_int("truncation.oversample", 2));
  p.target_residual = c.get_double("solver.target_residual", 1e-14);
  p.grid.alias_tol = c.get_double("solver.alias_tol", 1e-6);
  p.reduction = reduction_from_config(c, 1e-10);
  s.max_iters = static_cast<int>(c.get_int("solver.max_iters", 6));
  if (s.max_iters < 0) throw ConfigError("key 'solver.max_iters' must be >= 0");
  p.forcing = modes_from_config(c, b, "forcing.mode", c.get_double("forcing.scale", 1.0));
  s.seed = seed_of(c, o);
  s.timing = c.get_bool("output.timing", false);
  try {
    p.dioph.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("diophantine: ") + e.what());
  }
  if (c.has("omega")) {
    p.omega = omega_list(c, b->M());
  } else {
    const OmegaDraw d = sample_admissible_omega(s.seed, p.dioph.gamma0, b->lattice(), b->jmax(),
                                                static_cast<int>(c.get_int("omega_sampling.max_draws", 1000)));
    p.omega = d.omega;
    s.omega_draws = d.draws;
  }
  p.validate();
  return s;
}

inline Json witness_json(const SmallDivisorError& e) {
  return Json{{"l", e.ell}, {"j", e.j}, {"h", e.h}, {"divisor", e.divisor}, {"bound", e.bound}};
}

inline Json membership_json(const Membership& m) {
  Json j{{"ok", m.ok}, {"worst_margin", finite_or_null(m.worst_margin)}};
  if (m.witness) j["witness"] = Json{{"l", m.witness->ell.entries()}, {"j", m.witness->j}, {"h", m.witness->h}, {"lhs", m.witness->lhs}, {"rhs", m.witness->rhs}};
  return j;
}

template <class F>
int guarded(const Options& o, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    *o.err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const SmallDivisorError& e) {
    *o.err << "small divisor: " << e.what() << " (divisor " << e.divisor << ", bound " << e.bound << ")\n";
    return kExitNumerical;
  } catch (const Error& e) {
    *o.err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

// ---------------------------------------------------------------- commands

inline int cmd_solve(const Config& c, const Options& o) {
  return guarded(o, [&]() -> int {
    SolveSetup s;
    try {
      s = solve_setup(c, o);
    } catch (const PreconditionError& e) {
      throw ConfigError(e.what());
    }
    c.reject_unused();
    if (o.verbose) *o.log << "solve: omega sampled after " << s.omega_draws << " draws\n";
    const SolveReport rep = solve(s.spec, s.max_iters);

    Json j;
    j["command"] = "solve";
    j["converged"] = rep.converged;
    j["iterations"] = rep.iterations;
    j["omega"] = s.spec.omega;
    j["omega_draws"] = s.omega_draws;
    j["seed"] = s.seed;
    j["residuals"] = rep.residuals;
    j["residuals_max"] = rep.residuals_max;
    j["f_norms"] = rep.f_norms;
    j["h_norms"] = rep.h_norms;
    Json margins = Json::array();
    for (double m : rep.margins) margins.push_back(finite_or_null(m));
    j["margins"] = margins;
    j["s_series"] = rep.s_series;
    j["sigma_series"] = rep.sigma_series;
    Json steps = Json::array();
    for (const auto& r : rep.records)
      steps.push_back(Json{{"kam_steps", r.kam_steps},
                           {"inversion_residual", r.inversion_residual},
                           {"b2_norm", r.conj.b2_norm},
                           {"x_identity", r.conj.x_identity},
                           {"time_identity", r.conj.time_identity},
                           {"r_identity", r.conj.r_identity},
                           {"normalization_defect", r.conj.normalization_defect}});
    j["steps"] = steps;
    j["failure_stage"] = rep.failure_stage;
    j["failure"] = rep.failure;
    write_json(o.out / "report.json", j);

    CsvTable t({"step", "s_n", "sigma_n", "norm_f_n", "norm_h_n", "residual", "min_margin", "seconds"});
    for (int n = 0; n < static_cast<int>(rep.records.size()); ++n) {
      const auto& st = rep.state.strips;
      const double m = rep.margins[static_cast<std::size_t>(n)];
      t.row({static_cast<double>(n), st.s(n), st.sigma(n), rep.f_norms[static_cast<std::size_t>(n)], rep.h_norms[static_cast<std::size_t>(n)],
             rep.residuals[static_cast<std::size_t>(n) + 1], m,
             s.timing ? rep.seconds[static_cast<std::size_t>(n)] : 0.0});
    }
    t.write(o.out / "trace.csv");
    write_json(o.out / "solution.json", to_json(rep.u));

    *o.log << (rep.converged ? "converged" : "not converged") << " after " << rep.iterations << " steps, residual "
           << format_double(rep.residuals.back()) << "\n";
    if (!rep.converged) *o.log << "stage: " << rep.failure_stage << ": " << rep.failure << "\n";
    return rep.converged ? kExitOk : kExitNumerical;
  });
}

inline int cmd_reduce(const Config& c, const Options& o) {
  return guarded(o, [&]() -> int {
    const BasisPtr b = basis_from_config(c);
    DifferentialOperator L;
    L.omega = omega_list(c, b->M());
    L.lambda3 = c.get_double("operator.lambda3", 1.0);
    const double lambda1 = c.get_double("operator.lambda1", 0.0);
    const double scale = c.get_double("operator.scale", 1.0);
    L.B = modes_from_config(c, b, "operator.B.mode", scale);
    L.B.add_constant(lambda1);
    L.C = modes_from_config(c, b, "operator.C.mode", scale);
    const double gamma = c.get_double("reduction.gamma", 0.01);
    ReductionParams prm = reduction_from_config(c, 1e-10);
    const double max_res = c.get_double("reduction.max_residual", 1e-8);
    const bool timing = c.get_bool("output.timing", false);
    if (!(L.lambda3 > 0.0)) throw ConfigError("key 'operator.lambda3' must be positive");
    if (!(gamma > 0.0)) throw ConfigError("key 'reduction.gamma' must be positive");
    for (int li = 1; li < b->n_ell(); ++li)
      if (L.B.at(li, 0) != cd{}) throw ConfigError("key 'operator.B.mode': x-average of B must be phi-independent");
    c.reject_unused();

    Json j;
    j["command"] = "reduce";
    j["omega"] = L.omega;
    ReductionResult red;
    try {
      red = reduce_operator(L, gamma, prm);
    } catch (const SmallDivisorError& e) {
      j["status"] = "small_divisor";
      j["witness"] = witness_json(e);
      write_json(o.out / "report.json", j);
      *o.log << "Melnikov breach: " << e.what() << " (divisor " << format_double(e.divisor) << ", bound " << format_double(e.bound) << ")\n";
      return kExitNumerical;
    }
    const DiagonalizationResidual dr = diagonalization_residual(red, ModeWindow::half_of(*b));
    const bool ok = red.converged() && dr.off_diagonal <= max_res;
    j["status"] = ok ? "reduced" : "not_reduced";
    j["converged"] = red.converged();
    j["stagnated"] = red.kam.stagnated;
    j["kam_steps"] = red.kam.state.k;
    j["tail"] = red.kam.tail;
    j["off_diagonal_residual"] = dr.off_diagonal;
    j["diagonal_residual"] = dr.diagonal;
    Json trace = Json::array();
    for (const auto& t : red.kam.trace)
      trace.push_back(Json{{"step", t.step}, {"N", t.N}, {"op_norm_P", t.P_norm}, {"op_norm_P_next", t.P_next_norm},
                           {"min_margin", finite_or_null(t.min_margin)}, {"homological_residual", t.homological_residual}});
    j["trace"] = trace;
    write_json(o.out / "report.json", j);

    CsvTable ot({"j", "Omega", "Omega0", "r", "defect"});
    for (const auto& [jj, v] : red.Omega_inf) {
      const double o0 = -L.lambda3 * jj * jj * jj + lambda1 * jj;
      auto dt = red.defect.find(jj);
      ot.row({static_cast<double>(jj), v, o0, v - o0, dt == red.defect.end() ? 0.0 : dt->second});
    }
    ot.write(o.out / "omega_table.csv");
    CsvTable tt({"step", "op_norm_P", "min_margin", "seconds"});
    for (const auto& t : red.kam.trace)
      tt.row({static_cast<double>(t.step), t.P_norm, t.min_margin, timing ? t.seconds : 0.0});
    tt.write(o.out / "trace.csv");
    *o.log << (ok ? "reduced" : "not reduced") << " in " << red.kam.state.k << " KAM steps, off-diagonal residual "
           << format_double(dr.off_diagonal) << "\n";
    return ok ? kExitOk : kExitNumerical;
  });
}

inline int cmd_measure(const Config& c, const Options& o) {
  return guarded(o, [&]() -> int {
    const int M = static_cast<int>(c.get_int("lattice.M"));
    LatticeParams lat{c.get_double("lattice.eta", 1.0), M, c.get_double("lattice.K")};
    try {
      lat.validate();
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("lattice: ") + e.what());
    }
    const int samples = static_cast<int>(c.get_int("measure.samples", 1000));
    const std::vector<double> gammas = c.has("measure.gammas") ? c.get_list("measure.gammas") : std::vector<double>{0.5, 0.25, 0.125};
    const std::string pred = c.get_string("measure.predicate", "dgamma");
    const int jmax = pred == "o0" ? static_cast<int>(c.get_int("truncation.jmax")) : 0;
    const std::uint64_t seed = seed_of(c, o);
    if (samples < 100) throw ConfigError("key 'measure.samples' must be >= 100");
    if (pred != "dgamma" && pred != "o0") throw ConfigError("key 'measure.predicate' must be 'dgamma' or 'o0'");
    for (double g : gammas)
      if (!(g > 0.0)) throw ConfigError("key 'measure.gammas' entries must be positive");
    c.reject_unused();

    CsvTable t({"gamma", "samples", "accepted", "fraction", "deficit", "ci_low", "ci_high"});
    Json rows = Json::array();
    for (double g : gammas) {
      auto predicate = [&](const FrequencyVector& w) {
        return pred == "dgamma" ? in_Dgamma(w, g, lat).ok : in_O0(w, g, lat, jmax).ok;
      };
      const MeasureEstimate e = measure_estimate(predicate, samples, seed, M);
      t.row({g, static_cast<double>(e.samples), static_cast<double>(e.accepted), e.fraction, 1.0 - e.fraction, e.ci_low, e.ci_high});
      rows.push_back(Json{{"gamma", g}, {"accepted", e.accepted}, {"fraction", e.fraction}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}});
      *o.log << "gamma " << format_double(g) << ": fraction " << format_double(e.fraction) << " [" << format_double(e.ci_low) << ", "
             << format_double(e.ci_high) << "]\n";
    }
    t.write(o.out / "measure.csv");
    write_json(o.out / "report.json", Json{{"command", "measure"}, {"predicate", pred}, {"samples", samples}, {"seed", seed}, {"rows", rows}});
    return kExitOk;
  });
}

inline int cmd_check_omega(const Config& c, const Options& o) {
  return guarded(o, [&]() -> int {
    const BasisPtr b = basis_from_config(c);
    const FrequencyVector w = omega_list(c, b->M());
    const double gamma0 = c.get_double("diophantine.gamma0", 0.05);
    const double gbar = c.get_double("diophantine.gbar", 0.5);
    const double lambda3 = c.get_double("operator.lambda3", 1.0);
    const double lambda1 = c.get_double("operator.lambda1", 0.0);
    c.reject_unused();
    const auto& lat = b->lattice();
    const SpectrumTable O = airy_spectrum(lambda3, lambda1, b->jmax());
    const std::vector<std::pair<std::string, Membership>> checks = {
        {"D_gamma", in_Dgamma(w, gbar, lat)},
        {"O0", in_O0(w, gamma0, lat, b->jmax())},
        {"first_melnikov", first_melnikov(w, O, gamma0, lat)},
        {"second_melnikov", second_melnikov(w, O, gamma0, lat, gbar)},
    };
    Json j{{"command", "check-omega"}, {"omega", w}};
    bool all = true;
    for (const auto& [name, m] : checks) {
      j[name] = membership_json(m);
      all = all && m.ok;
      *o.log << name << ": " << (m.ok ? "pass" : "FAIL") << ", worst margin " << format_double(m.worst_margin);
      if (m.witness) *o.log << ", witness l = " << m.witness->ell.str() << " j = " << m.witness->j << " h = " << m.witness->h
                            << " |divisor| = " << format_double(m.witness->lhs) << " < " << format_double(m.witness->rhs);
      *o.log << "\n";
    }
    const DivisorReport dr = smallest_divisor_report(w, O, lat);
    j["smallest_divisor"] = Json{{"value", dr.value}, {"l", dr.ell.entries()}, {"j", dr.j}, {"h", dr.h}};
    j["admissible"] = all;
    write_json(o.out / "report.json", j);
    return all ? kExitOk : kExitNumerical;
  });
}

// ---------------------------------------------------------------- selftest

struct SelftestCase {
  std::string name;
  std::function<bool(std::string&)> run;
};

inline std::vector<SelftestCase> selftest_cases() {
  std::vector<SelftestCase> v;
  v.push_back({"homological exactness", [](std::string& d) {
                 const auto b = Basis::make({1.0, 2, 4.0}, 8);
                 std::mt19937_64 eng(11);
                 const FrequencyVector w = sample_admissible_omega(3, 0.05, b->lattice(), b->jmax()).omega;
                 double worst = 0.0;
                 for (int k = 0; k < 10; ++k) {
                   const auto f = random_series(b, eng);
                   const auto h = solve_L0(f, w, 0.0).h;
                   AnalyticFunction r = om_dphi(h, w) + dx(h, 3) + f;
                   worst = std::max(worst, norm(r, 0.0) / norm(f, 0.0));
                 }
                 d = format_double(worst);
                 return worst <= 1e-12;
               }});
  v.push_back({"reality of products", [](std::string& d) {
                 const auto b = Basis::make({1.0, 2, 4.0}, 6);
                 std::mt19937_64 eng(12);
                 const auto p = multiply(random_series(b, eng), random_series(b, eng));
                 d = format_double(p.reality_defect());
                 return p.reality_defect() == 0.0;
               }});
  v.push_back({"third-derivative commutator", [](std::string& d) {
                 const auto b = Basis::make({1.0, 1, 3.0}, 8);
                 std::mt19937_64 eng(13);
                 const auto g = random_series(b, eng, {0.1, 0.8, true, false, false});
                 const auto G = order_one_generator(g);
                 const auto D3 = OperatorMatrix::dx_power(b, 3);
                 OperatorMatrix brute = commutator(D3, G);
                 const auto split = commutator_dx3_G(g);
                 OperatorMatrix closed = compose(OperatorMatrix::multiplication(split.leading), OperatorMatrix::dx_power(b, 1));
                 closed += split.remainder;
                 const double err = (to_dense(brute) - to_dense(closed)).cwiseAbs().maxCoeff();
                 d = format_double(err);
                 return err <= 1e-12 * (1.0 + to_dense(brute).cwiseAbs().maxCoeff());
               }});
  v.push_back({"change of variables round trip", [](std::string& d) {
                 const auto b = Basis::make({1.0, 1, 8.0}, 24);
                 std::mt19937_64 eng(14);
                 const FrequencyVector w{1.3819660112501051};
                 LinearCoefficients Qp = LinearCoefficients::zero(b);
                 Qp.d[3] = project_N(random_series(b, eng, {1e-3, 2.5, true, false, false}), 4.0);
                 Qp.d[2] = 2.0 * dx(Qp.d[3]);
                 Qp.d[1] = project_N(random_series(b, eng, {1e-3, 2.5, false, false, false}), 4.0);
                 const auto L = DifferentialOperator::constant(b, 1.0, 0.0, w);
                 const auto C = conjugate_step(L, Qp);
                 const auto u = project_N(random_series(b, eng, {1.0, 2.5, true, false, false}), 4.0);
                 const double err = norm(apply_T_inverse(C.T, apply_T(C.T, u)) - u, 0.0) / norm(u, 0.0);
                 d = format_double(err);
                 return err <= 1e-10;
               }});
  v.push_back({"reduction of a constant operator", [](std::string& d) {
                 const auto b = Basis::make({1.0, 1, 4.0}, 6);
                 const auto L = DifferentialOperator::constant(b, 1.0, 0.5, {1.5});
                 const auto red = reduce_operator(L, 0.01);
                 double err = 0.0;
                 for (const auto& [j, v] : red.Omega_inf) err = std::max(err, std::abs(v - (-1.0 * j * j * j + 0.5 * j)));
                 d = format_double(err);
                 return red.converged() && err == 0.0;
               }});
  return v;
}

inline int cmd_selftest(const Options& o) {
  int failed = 0;
  for (const auto& t : selftest_cases()) {
    std::string detail;
    bool ok = false;
    try {
      ok = t.run(detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    if (!ok) ++failed;
    *o.log << (ok ? "PASS " : "FAIL ") << t.name << " (" << detail << ")\n";
  }
  *o.log << (failed ? "selftest failed" : "selftest passed") << "\n";
  return failed ? kExitNumerical : kExitOk;
}

}  // namespace airy::cli
