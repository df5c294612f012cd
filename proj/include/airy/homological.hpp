#pragma once
// Fourier-division solvers for the constant-coefficient and diagonal
// homological equations.

#include <cmath>
#include <limits>
#include <map>

#include "airy/analytic.hpp"
#include "airy/smalldiv.hpp"

namespace airy {

// Diagonal operator omega.d_phi + diag(i Omega(j) + defect(j)).
struct DiagonalModel {
  SpectrumTable Omega;
  std::map<int, double> defect;  // real part of the diagonal entries; zero for Hamiltonian models
  FrequencyVector omega;

  double defect_at(int j) const {
    auto it = defect.find(j);
    return it == defect.end() ? 0.0 : it->second;
  }
  double oddness_defect() const {
    double d = 0.0;
    for (const auto& [j, v] : Omega) {
      auto it = Omega.find(-j);
      if (it != Omega.end()) d = std::max(d, std::abs(v + it->second));
    }
    return d;
  }
};

struct HomologicalSolution {
  AnalyticFunction h;
  double amplification = 0.0;  // max over used modes of 1/|divisor|
  double min_margin = std::numeric_limits<double>::infinity();  // min |divisor| / floor
};

namespace detail {
inline void check_zero_x_average(const AnalyticFunction& f, const char* what) {
  if (!f.has_zero_x_average(default_average_tol(f))) throw PreconditionError(std::string(what) + ": forcing has nonzero x-average");
}
}  // namespace detail

// h with (omega.d_phi + d_x^3) h + f = 0; divisors |omega.l - j^3| must be >= gamma0 / d(l).
inline HomologicalSolution solve_L0(const AnalyticFunction& f, const FrequencyVector& omega, double gamma0) {
  validate_frequency(omega, f.basis()->M());
  detail::check_zero_x_average(f, "solve_L0");
  const auto& b = *f.basis();
  HomologicalSolution s{AnalyticFunction(f.basis(), f.is_real())};
  for (int li = 0; li < b.n_ell(); ++li) {
    const double wl = b.dot(omega, li);
    const double floor = gamma0 / divisor_weight(b.ell(li));
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      const cd fv = f.at(li, j);
      if (j == 0 || fv == cd{}) continue;
      const double d = wl - static_cast<double>(j) * j * j;
      if (std::abs(d) < floor || d == 0.0)
        throw SmallDivisorError("solve_L0: small divisor at l = " + b.ell(li).str() + ", j = " + std::to_string(j),
                                b.ell(li).entries(), j, 0, d, floor);
      s.h.at(li, j) = -fv / cd(0.0, d);
      s.amplification = std::max(s.amplification, 1.0 / std::abs(d));
      if (floor > 0.0) s.min_margin = std::min(s.min_margin, std::abs(d) / floor);
    }
  }
  if (s.h.is_real()) s.h.realify();
  return s;
}

// h with (omega.d_phi + D) h + f = 0; divisors |omega.l + Omega(j)| must be >= gamma |j|^3 / d(l).
inline HomologicalSolution solve_diagonal(const DiagonalModel& model, const AnalyticFunction& f, double gamma) {
  validate_frequency(model.omega, f.basis()->M());
  detail::check_zero_x_average(f, "solve_diagonal");
  const auto& b = *f.basis();
  HomologicalSolution s{AnalyticFunction(f.basis(), f.is_real())};
  for (int li = 0; li < b.n_ell(); ++li) {
    const double wl = b.dot(model.omega, li);
    const double dl = divisor_weight(b.ell(li));
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      const cd fv = f.at(li, j);
      if (j == 0 || fv == cd{}) continue;
      auto it = model.Omega.find(j);
      if (it == model.Omega.end()) throw PreconditionError("solve_diagonal: spectrum table does not cover j = " + std::to_string(j));
      const double d = wl + it->second;
      const double aj = std::abs(static_cast<double>(j));
      const double floor = gamma * aj * aj * aj / dl;
      if (std::abs(d) < floor || d == 0.0)
        throw SmallDivisorError("solve_diagonal: small divisor at l = " + b.ell(li).str() + ", j = " + std::to_string(j),
                                b.ell(li).entries(), j, 0, d, floor);
      const cd den(model.defect_at(j), d);
      s.h.at(li, j) = -fv / den;
      s.amplification = std::max(s.amplification, 1.0 / std::abs(den));
      if (floor > 0.0) s.min_margin = std::min(s.min_margin, std::abs(d) / floor);
    }
  }
  if (s.h.is_real()) s.h.realify();
  return s;
}

// (omega.d_phi)^{-1} rhs for a zero-average function of phi; divisors checked against D_gamma.
inline AnalyticFunction solve_scalar_phi(const AnalyticFunction& rhs, const FrequencyVector& omega, double gamma = 0.0) {
  detail::require_phi_only(rhs, "solve_scalar_phi");
  return om_dphi_inv(rhs, omega, gamma);
}

}  // namespace airy
