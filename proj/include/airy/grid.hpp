#pragma once
// Separable direct Fourier transforms between truncated coefficients and the
// tensor collocation grid of a Basis.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "airy/basis.hpp"

namespace airy {

namespace grid {

// rows x cols row-major.
struct AxisMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<cd> a;
};

inline cd unit_phase(long long num, int n, double sign) {
  const long long r = ((num % n) + n) % n;
  const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(r) / n;
  return {std::cos(ang), std::sin(ang)};
}

// Maps modes -m..m to n equispaced points.
inline AxisMatrix synthesis_matrix(int m, int n) {
  AxisMatrix A{n, 2 * m + 1, {}};
  A.a.resize(static_cast<std::size_t>(A.rows) * static_cast<std::size_t>(A.cols));
  for (int t = 0; t < n; ++t)
    for (int c = 0; c < A.cols; ++c)
      A.a[static_cast<std::size_t>(t) * A.cols + c] = unit_phase(static_cast<long long>(c - m) * t, n, 1.0);
  return A;
}

// Maps n points (n odd) to the full band of modes -(n-1)/2..(n-1)/2.
inline AxisMatrix analysis_matrix(int n) {
  const int h = (n - 1) / 2;
  AxisMatrix A{n, n, {}};
  A.a.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c)
    for (int t = 0; t < n; ++t)
      A.a[static_cast<std::size_t>(c) * n + t] = unit_phase(static_cast<long long>(c - h) * t, n, -1.0) / static_cast<double>(n);
  return A;
}

// Applies A along one axis of a row-major tensor, replacing dims[axis].
inline std::vector<cd> apply_axis(const std::vector<cd>& in, std::vector<int>& dims, int axis, const AxisMatrix& A) {
  std::size_t outer = 1, inner = 1;
  for (int k = 0; k < axis; ++k) outer *= static_cast<std::size_t>(dims[static_cast<std::size_t>(k)]);
  for (std::size_t k = static_cast<std::size_t>(axis) + 1; k < dims.size(); ++k) inner *= static_cast<std::size_t>(dims[k]);
  const std::size_t nin = static_cast<std::size_t>(dims[static_cast<std::size_t>(axis)]);
  const std::size_t nout = static_cast<std::size_t>(A.rows);
  std::vector<cd> out(outer * nout * inner, cd{});
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t r = 0; r < nout; ++r) {
      cd* dst = &out[(o * nout + r) * inner];
      for (std::size_t c = 0; c < nin; ++c) {
        const cd w = A.a[r * nin + c];
        const cd* src = &in[(o * nin + c) * inner];
        for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
      }
    }
  }
  dims[static_cast<std::size_t>(axis)] = static_cast<int>(nout);
  return out;
}

// Box tensor [2m_1+1, ..., 2m_M+1, nj] holding the coefficients.
inline std::vector<cd> scatter_box(const Basis& b, const std::vector<cd>& coeffs, std::vector<int>& dims) {
  const int M = b.M();
  dims.assign(static_cast<std::size_t>(M) + 1, 0);
  std::size_t total = 1;
  for (int k = 0; k < M; ++k) {
    dims[static_cast<std::size_t>(k)] = 2 * b.max_mode(k) + 1;
    total *= static_cast<std::size_t>(dims[static_cast<std::size_t>(k)]);
  }
  dims[static_cast<std::size_t>(M)] = b.nj();
  std::vector<cd> box(total * static_cast<std::size_t>(b.nj()), cd{});
  for (int i = 0; i < b.n_ell(); ++i) {
    const int* d = b.ell_dense(i);
    std::size_t key = 0;
    for (int k = 0; k < M; ++k) key = key * static_cast<std::size_t>(dims[static_cast<std::size_t>(k)]) + static_cast<std::size_t>(d[k] + b.max_mode(k));
    for (int jj = 0; jj < b.nj(); ++jj)
      box[key * static_cast<std::size_t>(b.nj()) + static_cast<std::size_t>(jj)] =
          coeffs[static_cast<std::size_t>(i) * static_cast<std::size_t>(b.nj()) + static_cast<std::size_t>(jj)];
  }
  return box;
}

// Values on the phi grid for each spatial mode: layout [phi point][j + jmax].
inline std::vector<cd> synth_phi(const Basis& b, const std::vector<cd>& coeffs) {
  std::vector<int> dims;
  auto t = scatter_box(b, coeffs, dims);
  for (int k = 0; k < b.M(); ++k) t = apply_axis(t, dims, k, synthesis_matrix(b.max_mode(k), b.phi_points(k)));
  return t;
}

// Values on the x grid for each l: layout [l index][x point].
inline std::vector<cd> synth_x(const Basis& b, const std::vector<cd>& coeffs) {
  std::vector<int> dims{b.n_ell(), b.nj()};
  return apply_axis(coeffs, dims, 1, synthesis_matrix(b.jmax(), b.x_points()));
}

// Full grid values: layout [phi point][x point].
inline std::vector<cd> synth(const Basis& b, const std::vector<cd>& coeffs) {
  std::vector<int> dims;
  auto t = synth_phi(b, coeffs);
  dims.assign(static_cast<std::size_t>(b.M()) + 1, 0);
  for (int k = 0; k < b.M(); ++k) dims[static_cast<std::size_t>(k)] = b.phi_points(k);
  dims[static_cast<std::size_t>(b.M())] = b.nj();
  return apply_axis(t, dims, b.M(), synthesis_matrix(b.jmax(), b.x_points()));
}

struct AnalysisReport {
  double retained_l1 = 0.0;   // mass of the kept coefficients
  double truncated_l1 = 0.0;  // resolved mass outside the truncation
  double alias_l1 = 0.0;      // mass in the outer half of the unresolved band
};

// Grid values -> truncated coefficients; mass outside the truncation is reported.
inline std::vector<cd> analyze(const Basis& b, const std::vector<cd>& values, AnalysisReport* rep = nullptr) {
  const int M = b.M();
  std::vector<int> dims(static_cast<std::size_t>(M) + 1);
  for (int k = 0; k < M; ++k) dims[static_cast<std::size_t>(k)] = b.phi_points(k);
  dims[static_cast<std::size_t>(M)] = b.x_points();
  std::vector<cd> t = values;
  for (int k = 0; k <= M; ++k) t = apply_axis(t, dims, k, analysis_matrix(dims[static_cast<std::size_t>(k)]));
  std::vector<int> half(static_cast<std::size_t>(M) + 1), keep(static_cast<std::size_t>(M) + 1);
  for (int k = 0; k <= M; ++k) {
    half[static_cast<std::size_t>(k)] = (dims[static_cast<std::size_t>(k)] - 1) / 2;
    keep[static_cast<std::size_t>(k)] = k < M ? b.max_mode(k) : b.jmax();
  }
  std::vector<cd> out(static_cast<std::size_t>(b.size()), cd{});
  for (int i = 0; i < b.n_ell(); ++i) {
    const int* d = b.ell_dense(i);
    std::size_t key = 0;
    for (int k = 0; k < M; ++k) key = key * static_cast<std::size_t>(dims[static_cast<std::size_t>(k)]) + static_cast<std::size_t>(d[k] + half[static_cast<std::size_t>(k)]);
    for (int j = -b.jmax(); j <= b.jmax(); ++j) {
      out[static_cast<std::size_t>(i) * static_cast<std::size_t>(b.nj()) + static_cast<std::size_t>(j + b.jmax())] =
          t[key * static_cast<std::size_t>(dims[static_cast<std::size_t>(M)]) + static_cast<std::size_t>(j + half[static_cast<std::size_t>(M)])];
    }
  }
  if (rep) {
    double total = 0.0, kept = 0.0, outer = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(M) + 1, 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
      std::size_t r = flat;
      bool in_outer = false;
      for (int k = M; k >= 0; --k) {
        const int n = dims[static_cast<std::size_t>(k)];
        const int mode = static_cast<int>(r % static_cast<std::size_t>(n)) - half[static_cast<std::size_t>(k)];
        r /= static_cast<std::size_t>(n);
        const int h = half[static_cast<std::size_t>(k)], m = keep[static_cast<std::size_t>(k)];
        if (h > m && 2 * std::abs(mode) > h + m) in_outer = true;
      }
      const double a = std::abs(t[flat]);
      total += a;
      if (in_outer) outer += a;
    }
    for (const auto& c : out) kept += std::abs(c);
    rep->retained_l1 = kept;
    rep->truncated_l1 = std::max(0.0, total - kept);
    rep->alias_l1 = outer;
  }
  return out;
}

}  // namespace grid
}  // namespace airy
