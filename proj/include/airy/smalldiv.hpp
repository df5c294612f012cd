#pragma once
// Diophantine and Melnikov membership predicates and Monte Carlo measures.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "airy/analytic.hpp"
#include "airy/lattice.hpp"

namespace airy {

// Frequencies Omega(j) indexed by spatial mode.
using SpectrumTable = std::map<int, double>;

inline SpectrumTable airy_spectrum(double lambda3, double lambda1, int jmax) {
  SpectrumTable t;
  for (int j = -jmax; j <= jmax; ++j)
    if (j != 0) t[j] = -lambda3 * j * j * j + lambda1 * j;
  return t;
}

struct Witness {
  MultiIndex ell;
  int j = 0;
  int h = 0;
  double lhs = 0.0;  // |divisor|
  double rhs = 0.0;  // required lower bound
};

struct Membership {
  bool ok = true;
  std::optional<Witness> witness;  // first violation in enumeration order
  double worst_margin = std::numeric_limits<double>::infinity();  // min lhs / rhs
  std::optional<Witness> worst;
};

namespace detail {
inline double dot(const FrequencyVector& w, const MultiIndex& l) {
  double s = 0.0;
  for (int i = 1; i <= l.max_site(); ++i) s += w[static_cast<std::size_t>(i - 1)] * l[i];
  return s;
}
// strict: violation when lhs <= rhs; otherwise when lhs < rhs.
inline void record(Membership& m, const MultiIndex& l, int j, int h, double lhs, double rhs, bool strict) {
  const bool bad = strict ? !(lhs > rhs) : lhs < rhs;
  const double margin = rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
  if (!m.worst || margin < m.worst_margin) {
    m.worst_margin = margin;
    m.worst = Witness{l, j, h, lhs, rhs};
  }
  if (bad && m.ok) {
    m.ok = false;
    m.witness = Witness{l, j, h, lhs, rhs};
  }
}
}  // namespace detail

// |omega.l| > gamma * prod 1/(1 + l_i^2 i^2) for every enumerated l != 0.
inline Membership in_Dgamma(const FrequencyVector& omega, double gamma, const LatticeParams& lattice) {
  validate_frequency(omega, lattice.M);
  Membership m;
  for (const auto& l : enumerate(lattice)) {
    if (l.is_zero()) continue;
    detail::record(m, l, 0, 0, std::abs(detail::dot(omega, l)), gamma * diophantine_weight(l), true);
  }
  return m;
}

// |omega.l - j^3| >= gamma0 / d(l) for enumerated l and |j| <= jmax, (l, j) != (0, 0).
inline Membership in_O0(const FrequencyVector& omega, double gamma0, const LatticeParams& lattice, int jmax) {
  validate_frequency(omega, lattice.M);
  Membership m;
  for (const auto& l : enumerate(lattice)) {
    const double wl = detail::dot(omega, l);
    const double rhs = gamma0 / divisor_weight(l);
    for (int j = -jmax; j <= jmax; ++j) {
      if (l.is_zero() && j == 0) continue;
      detail::record(m, l, j, 0, std::abs(wl - static_cast<double>(j) * j * j), rhs, false);
    }
  }
  return m;
}

// |omega.l + Omega(j)| >= gamma |j|^3 / d(l) for j in the table.
inline Membership first_melnikov(const FrequencyVector& omega, const SpectrumTable& Omega, double gamma,
                                 const LatticeParams& lattice) {
  validate_frequency(omega, lattice.M);
  Membership m;
  for (const auto& l : enumerate(lattice)) {
    const double wl = detail::dot(omega, l);
    const double dl = divisor_weight(l);
    for (const auto& [j, Oj] : Omega) {
      if (j == 0) continue;
      const double aj = std::abs(static_cast<double>(j));
      detail::record(m, l, j, 0, std::abs(wl + Oj), gamma * aj * aj * aj / dl, false);
    }
  }
  return m;
}

// |omega.l + Omega(j) - Omega(h)| >= 2 gamma |j^3 - h^3| / d(l) over (l, j, h) != (0, h, h);
// the j = h, l != 0 triples are checked against D_gbar.
inline Membership second_melnikov(const FrequencyVector& omega, const SpectrumTable& Omega, double gamma,
                                  const LatticeParams& lattice, std::optional<double> gbar = std::nullopt) {
  validate_frequency(omega, lattice.M);
  const double gb = gbar.value_or(gamma);
  Membership m;
  for (const auto& l : enumerate(lattice)) {
    const double wl = detail::dot(omega, l);
    const double dl = divisor_weight(l);
    for (const auto& [j, Oj] : Omega) {
      for (const auto& [h, Oh] : Omega) {
        if (j == h) {
          if (l.is_zero()) continue;
          detail::record(m, l, j, h, std::abs(wl), gb * diophantine_weight(l), true);
          continue;
        }
        const double cub = std::abs(static_cast<double>(j) * j * j - static_cast<double>(h) * h * h);
        detail::record(m, l, j, h, std::abs(wl + Oj - Oh), 2.0 * gamma * cub / dl, false);
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------- schedules

struct DiophantineParams {
  double gamma0 = 0.05;
  double gbar = 0.5;

  void validate() const {
    if (!(gamma0 > 0.0 && gamma0 < 1.0)) throw PreconditionError("gamma0 must lie in (0,1)");
    if (!(gamma0 < 0.5 * gbar)) throw PreconditionError("gamma0 must be below gbar/2");
  }
  // gamma_n = (1 - 2^{-n}) gamma_{n-1}, gamma_0 = gamma0.
  double gamma(int n) const {
    double g = gamma0;
    for (int k = 1; k <= n; ++k) g *= 1.0 - std::ldexp(1.0, -k);
    return g;
  }
};

// ---------------------------------------------------------------- Monte Carlo

// Uniform double in [0,1) from a 64-bit engine output (platform independent).
inline double unit_uniform(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

inline FrequencyVector sample_frequency(std::mt19937_64& eng, int M) {
  FrequencyVector w(static_cast<std::size_t>(M));
  for (auto& v : w) v = 1.0 + unit_uniform(eng);
  return w;
}

struct MeasureEstimate {
  int samples = 0;
  int accepted = 0;
  double fraction = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

inline MeasureEstimate measure_estimate(const std::function<bool(const FrequencyVector&)>& predicate, int n_samples,
                                        std::uint64_t seed, int M) {
  if (n_samples < 100) throw PreconditionError("measure_estimate: need at least 100 samples");
  std::mt19937_64 eng(seed);
  MeasureEstimate e;
  e.samples = n_samples;
  for (int i = 0; i < n_samples; ++i)
    if (predicate(sample_frequency(eng, M))) ++e.accepted;
  const double n = n_samples, p = e.accepted / n, z = 1.959963984540054;
  e.fraction = p;
  // Wilson score interval.
  const double den = 1.0 + z * z / n;
  const double mid = (p + z * z / (2 * n)) / den;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den;
  e.ci_low = std::max(0.0, mid - half);
  e.ci_high = std::min(1.0, mid + half);
  return e;
}

// ---------------------------------------------------------------- diagnostics

enum class DivisorScan { Pairs, Diagonal };

struct DivisorReport {
  bool has_triples = false;
  double value = std::numeric_limits<double>::infinity();
  MultiIndex ell;
  int j = 0;
  int h = 0;
};

// Pairs: min |omega.l + Omega(j) - Omega(h)| d(l) / max(1, |j^3 - h^3|) over (l, j, h) != (0, h, h).
// Diagonal: min |omega.l + Omega(j)| d(l) over (l, j) != (0, 0).
inline DivisorReport smallest_divisor_report(const FrequencyVector& omega, const SpectrumTable& Omega,
                                             const LatticeParams& lattice, DivisorScan mode = DivisorScan::Pairs) {
  validate_frequency(omega, lattice.M);
  DivisorReport r;
  for (const auto& l : enumerate(lattice)) {
    const double wl = detail::dot(omega, l);
    const double dl = divisor_weight(l);
    for (const auto& [j, Oj] : Omega) {
      if (mode == DivisorScan::Diagonal) {
        if (l.is_zero() && j == 0) continue;
        const double v = std::abs(wl + Oj) * dl;
        if (!r.has_triples || v < r.value) r = DivisorReport{true, v, l, j, 0};
        continue;
      }
      for (const auto& [h, Oh] : Omega) {
        if (l.is_zero() && j == h) continue;
        const double cub = std::abs(static_cast<double>(j) * j * j - static_cast<double>(h) * h * h);
        const double v = std::abs(wl + Oj - Oh) * dl / std::max(1.0, cub);
        if (!r.has_triples || v < r.value) r = DivisorReport{true, v, l, j, h};
      }
    }
  }
  return r;
}

}  // namespace airy
