#pragma once
// Test-only oracles. Nothing here calls into the library's grid or
// convolution code, so the checks stay independent of it.

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "airy/analytic.hpp"
#include "airy/basis.hpp"
#include "airy/lattice.hpp"

namespace airy::test {

constexpr double kPi = std::numbers::pi;

inline BasisPtr basis(int M, double K, int jmax, double eta = 1.0, int grid_factor = 2) {
  return Basis::make(LatticeParams{eta, M, K}, jmax, grid_factor);
}

// Direct evaluation of the series at one point.
inline cd eval_naive(const AnalyticFunction& u, const std::vector<double>& phi, double x) {
  const auto& b = *u.basis();
  cd s{};
  for (int li = 0; li < b.n_ell(); ++li) {
    double arg = 0.0;
    const MultiIndex& l = b.ell(li);
    for (int k = 1; k <= l.max_site(); ++k) arg += l[k] * phi[static_cast<std::size_t>(k - 1)];
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      const cd c = u.at(li, j);
      if (c != cd{}) s += c * std::polar(1.0, arg + j * x);
    }
  }
  return s;
}

// Fourier coefficient of F(phi, x) at (l, j) by the trapezoid rule with n points per axis.
inline cd quadrature_coeff(const std::function<cd(const std::vector<double>&, double)>& F, int M, const MultiIndex& l, int j, int n) {
  std::vector<int> idx(static_cast<std::size_t>(M), 0);
  std::vector<double> phi(static_cast<std::size_t>(M));
  cd acc{};
  long total = 1;
  for (int k = 0; k < M; ++k) total *= n;
  for (long t = 0; t < total; ++t) {
    long r = t;
    double arg = 0.0;
    for (int k = 0; k < M; ++k) {
      idx[static_cast<std::size_t>(k)] = static_cast<int>(r % n);
      r /= n;
      phi[static_cast<std::size_t>(k)] = 2 * kPi * idx[static_cast<std::size_t>(k)] / n;
      arg += l[k + 1] * phi[static_cast<std::size_t>(k)];
    }
    for (int s = 0; s < n; ++s) {
      const double x = 2 * kPi * s / n;
      acc += F(phi, x) * std::polar(1.0, -(arg + j * x));
    }
  }
  return acc / static_cast<double>(total * n);
}

// Largest |coefficient difference| between u and the quadrature of F over u's basis.
inline double max_quadrature_error(const AnalyticFunction& u, const std::function<cd(const std::vector<double>&, double)>& F, int n) {
  const auto& b = *u.basis();
  double worst = 0.0;
  for (int li = 0; li < b.n_ell(); ++li)
    for (int j = -b.jmax(); j <= b.jmax(); ++j)
      worst = std::max(worst, std::abs(u.at(li, j) - quadrature_coeff(F, b.M(), b.ell(li), j, n)));
  return worst;
}

// Brute-force enumeration of l in [-K, K]^M with |l|_eta <= K.
inline std::vector<MultiIndex> brute_lattice(int M, double K, double eta) {
  std::vector<MultiIndex> out;
  const int R = static_cast<int>(std::floor(K));
  std::vector<int> v(static_cast<std::size_t>(M), -R);
  while (true) {
    double n = 0.0;
    for (int i = 0; i < M; ++i) n += std::pow(i + 1.0, eta) * std::abs(v[static_cast<std::size_t>(i)]);
    if (n <= K + 1e-12) out.emplace_back(v);
    int k = 0;
    while (k < M && v[static_cast<std::size_t>(k)] == R) v[static_cast<std::size_t>(k++)] = -R;
    if (k == M) break;
    ++v[static_cast<std::size_t>(k)];
  }
  return out;
}

inline double dot(const FrequencyVector& w, const MultiIndex& l) {
  double s = 0.0;
  for (int i = 1; i <= l.max_site(); ++i) s += w[static_cast<std::size_t>(i - 1)] * l[i];
  return s;
}

}  // namespace airy::test
