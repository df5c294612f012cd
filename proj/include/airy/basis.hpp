#pragma once
// Truncated index set (l, j) shared by functions and operators, together
// with the layout of the tensor collocation grid used for compositions.

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <vector>

#include "airy/errors.hpp"
#include "airy/lattice.hpp"

namespace airy {

using cd = std::complex<double>;

class Basis;
using BasisPtr = std::shared_ptr<const Basis>;

class Basis {
 public:
  // Grid points per axis are factor*(2m+1)+1 for an axis carrying modes |k| <= m.
  static BasisPtr make(const LatticeParams& lattice, int jmax, int grid_factor = 2) {
    return BasisPtr(new Basis(lattice, jmax, grid_factor));
  }

  const LatticeParams& lattice() const { return lattice_; }
  int M() const { return lattice_.M; }
  int jmax() const { return jmax_; }
  int nj() const { return 2 * jmax_ + 1; }
  int n_ell() const { return static_cast<int>(ells_.size()); }
  int size() const { return n_ell() * nj(); }
  int grid_factor() const { return grid_factor_; }

  const MultiIndex& ell(int i) const { return ells_[static_cast<std::size_t>(i)]; }
  // Dense entries l_1..l_M of the i-th index.
  const int* ell_dense(int i) const { return &dense_[static_cast<std::size_t>(i) * static_cast<std::size_t>(M())]; }
  double ell_norm(int i) const { return norms_[static_cast<std::size_t>(i)]; }
  int zero_index() const { return 0; }
  int neg(int i) const { return neg_[static_cast<std::size_t>(i)]; }

  // Index of a dense vector (length M), or -1 when outside the truncation.
  int index_of_dense(const int* v) const {
    std::size_t key = 0;
    for (int k = 0; k < M(); ++k) {
      const int m = max_mode_[static_cast<std::size_t>(k)];
      if (v[k] < -m || v[k] > m) return -1;
      key += static_cast<std::size_t>(v[k] + m) * stride_[static_cast<std::size_t>(k)];
    }
    return box_index_[key];
  }
  int index_of(const MultiIndex& l) const {
    if (l.max_site() > M()) return -1;
    const auto d = l.dense(M());
    return index_of_dense(d.data());
  }
  // Index of l_a + s*l_b, or -1.
  int combine(int a, int b, int s = 1) const {
    int tmp[64];
    std::vector<int> big;
    int* v = tmp;
    if (M() > 64) {
      big.resize(static_cast<std::size_t>(M()));
      v = big.data();
    }
    const int* x = ell_dense(a);
    const int* y = ell_dense(b);
    for (int k = 0; k < M(); ++k) v[k] = x[k] + s * y[k];
    return index_of_dense(v);
  }

  double dot(const std::vector<double>& omega, int i) const {
    const int* d = ell_dense(i);
    double s = 0.0;
    for (int k = 0; k < M(); ++k) s += omega[static_cast<std::size_t>(k)] * d[k];
    return s;
  }

  // Largest |l_k| on axis k (0-based) over the truncation.
  int max_mode(int k) const { return max_mode_[static_cast<std::size_t>(k)]; }
  int phi_points(int k) const { return phi_pts_[static_cast<std::size_t>(k)]; }
  int x_points() const { return x_pts_; }
  int n_phi_points() const { return n_phi_pts_; }
  int n_grid() const { return n_phi_pts_ * x_pts_; }
  double phi_coord(int k, int t) const { return 2.0 * std::numbers::pi * t / phi_points(k); }
  double x_coord(int s) const { return 2.0 * std::numbers::pi * s / x_pts_; }
  // Unflatten a phi-grid point into per-axis indices.
  void phi_point(int p, std::vector<int>& t) const {
    t.resize(static_cast<std::size_t>(M()));
    for (int k = M() - 1; k >= 0; --k) {
      t[static_cast<std::size_t>(k)] = p % phi_points(k);
      p /= phi_points(k);
    }
  }

  bool same_truncation(const Basis& o) const {
    return lattice_ == o.lattice_ && jmax_ == o.jmax_ && grid_factor_ == o.grid_factor_;
  }

 private:
  Basis(const LatticeParams& lattice, int jmax, int grid_factor)
      : lattice_(lattice), jmax_(jmax), grid_factor_(grid_factor) {
    lattice_.validate();
    if (jmax < 1) throw PreconditionError("basis: jmax must be >= 1");
    if (grid_factor < 2) throw PreconditionError("basis: grid factor must be >= 2");
    ells_ = enumerate(lattice_);
    const int m = lattice_.M;
    max_mode_.assign(static_cast<std::size_t>(m), 0);
    dense_.resize(ells_.size() * static_cast<std::size_t>(m));
    norms_.resize(ells_.size());
    for (std::size_t i = 0; i < ells_.size(); ++i) {
      for (int k = 0; k < m; ++k) {
        const int v = ells_[i][k + 1];
        dense_[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(k)] = v;
        max_mode_[static_cast<std::size_t>(k)] = std::max(max_mode_[static_cast<std::size_t>(k)], std::abs(v));
      }
      norms_[i] = eta_norm(ells_[i], lattice_.eta);
    }
    stride_.assign(static_cast<std::size_t>(m), 1);
    std::size_t box = 1;
    for (int k = m - 1; k >= 0; --k) {
      stride_[static_cast<std::size_t>(k)] = box;
      box *= static_cast<std::size_t>(2 * max_mode_[static_cast<std::size_t>(k)] + 1);
      if (box > (std::size_t{1} << 27)) throw PreconditionError("basis: lattice box too large");
    }
    box_index_.assign(box, -1);
    for (std::size_t i = 0; i < ells_.size(); ++i) {
      std::size_t key = 0;
      for (int k = 0; k < m; ++k) {
        key += static_cast<std::size_t>(dense_[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(k)] +
                                        max_mode_[static_cast<std::size_t>(k)]) *
               stride_[static_cast<std::size_t>(k)];
      }
      box_index_[key] = static_cast<int>(i);
    }
    neg_.resize(ells_.size());
    std::vector<int> v(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < ells_.size(); ++i) {
      for (int k = 0; k < m; ++k) v[static_cast<std::size_t>(k)] = -dense_[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(k)];
      neg_[i] = index_of_dense(v.data());
    }
    n_phi_pts_ = 1;
    phi_pts_.resize(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      const int mm = max_mode_[static_cast<std::size_t>(k)];
      phi_pts_[static_cast<std::size_t>(k)] = mm == 0 ? 1 : grid_factor_ * (2 * mm + 1) + 1;
      n_phi_pts_ *= phi_pts_[static_cast<std::size_t>(k)];
    }
    x_pts_ = grid_factor_ * (2 * jmax_ + 1) + 1;
  }

  LatticeParams lattice_;
  int jmax_;
  int grid_factor_;
  std::vector<MultiIndex> ells_;
  std::vector<int> dense_;
  std::vector<double> norms_;
  std::vector<int> neg_;
  std::vector<int> max_mode_;
  std::vector<std::size_t> stride_;
  std::vector<int> box_index_;
  std::vector<int> phi_pts_;
  int n_phi_pts_ = 1;
  int x_pts_ = 1;
};

inline void require_same(const BasisPtr& a, const BasisPtr& b, const char* what) {
  if (!a || !b) throw PreconditionError(std::string(what) + ": missing basis");
  if (a != b && !a->same_truncation(*b)) throw PreconditionError(std::string(what) + ": incompatible truncations");
}

}  // namespace airy
