#pragma once
// Finitely supported multi-indices, weighted norms, divisor weights and
// truncated enumeration.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "airy/errors.hpp"

namespace airy {

// Integer vector indexed by sites 1..M. Trailing zeros are trimmed so that
// equal indices have equal storage.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> entries) : e_(std::move(entries)) { trim(); }

  static MultiIndex unit(int site, int value = 1) {
    if (site < 1) throw PreconditionError("MultiIndex: sites start at 1");
    std::vector<int> e(static_cast<std::size_t>(site), 0);
    e[static_cast<std::size_t>(site - 1)] = value;
    return MultiIndex(std::move(e));
  }

  // Value at site i (1-based); zero outside the stored range.
  int operator[](int site) const {
    if (site < 1 || site > static_cast<int>(e_.size())) return 0;
    return e_[static_cast<std::size_t>(site - 1)];
  }
  void set(int site, int value) {
    if (site < 1) throw PreconditionError("MultiIndex: sites start at 1");
    if (site > static_cast<int>(e_.size())) e_.resize(static_cast<std::size_t>(site), 0);
    e_[static_cast<std::size_t>(site - 1)] = value;
    trim();
  }

  int max_site() const { return static_cast<int>(e_.size()); }
  bool is_zero() const { return e_.empty(); }
  const std::vector<int>& entries() const { return e_; }

  // Dense vector of length m (m must cover the support).
  std::vector<int> dense(int m) const {
    std::vector<int> d(static_cast<std::size_t>(m), 0);
    for (int i = 0; i < std::min(m, max_site()); ++i) d[static_cast<std::size_t>(i)] = e_[static_cast<std::size_t>(i)];
    return d;
  }

  MultiIndex operator-() const {
    MultiIndex r = *this;
    for (int& v : r.e_) v = -v;
    return r;
  }
  friend MultiIndex operator+(const MultiIndex& a, const MultiIndex& b) {
    std::vector<int> r(std::max(a.e_.size(), b.e_.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] = (i < a.e_.size() ? a.e_[i] : 0) + (i < b.e_.size() ? b.e_[i] : 0);
    }
    return MultiIndex(std::move(r));
  }
  friend MultiIndex operator-(const MultiIndex& a, const MultiIndex& b) { return a + (-b); }
  friend bool operator==(const MultiIndex& a, const MultiIndex& b) { return a.e_ == b.e_; }
  friend auto operator<=>(const MultiIndex& a, const MultiIndex& b) {
    const std::size_t n = std::max(a.e_.size(), b.e_.size());
    for (std::size_t i = 0; i < n; ++i) {
      const int x = i < a.e_.size() ? a.e_[i] : 0;
      const int y = i < b.e_.size() ? b.e_[i] : 0;
      if (x != y) return x <=> y;
    }
    return std::strong_ordering::equal;
  }

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < e_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(e_[i]);
    }
    return s + ")";
  }

 private:
  void trim() {
    while (!e_.empty() && e_.back() == 0) e_.pop_back();
  }
  std::vector<int> e_;
};

struct LatticeParams {
  double eta = 1.0;
  int M = 1;
  double K = 1.0;

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw PreconditionError("lattice: eta must be > 0");
    if (M < 1) throw PreconditionError("lattice: M must be >= 1");
    if (!(K >= 0.0) || !std::isfinite(K)) throw PreconditionError("lattice: K must be finite and >= 0");
  }
  friend bool operator==(const LatticeParams&, const LatticeParams&) = default;
};

inline double site_weight(int site, double eta) { return std::pow(static_cast<double>(site), eta); }

inline double eta_norm(const MultiIndex& l, double eta) {
  if (!(eta > 0.0)) throw PreconditionError("eta_norm: eta must be > 0");
  double s = 0.0;
  for (int i = 1; i <= l.max_site(); ++i) s += site_weight(i, eta) * std::abs(l[i]);
  return s;
}

// Weighted l1 norm with unit exponent.
inline double l1_site_norm(const MultiIndex& l) { return eta_norm(l, 1.0); }

// Product of (1 + |l_i|^5 i^5) over the support, accumulated in 128-bit integers.
inline double divisor_weight(const MultiIndex& l) {
  using u128 = unsigned __int128;
  const u128 limit = ~static_cast<u128>(0);
  u128 acc = 1;
  for (int i = 1; i <= l.max_site(); ++i) {
    const int v = l[i];
    if (v == 0) continue;
    const u128 base = static_cast<u128>(std::abs(static_cast<long long>(v))) * static_cast<u128>(i);
    u128 p = 1;
    for (int k = 0; k < 5; ++k) {
      if (p > limit / base) throw OverflowError("divisor_weight: product overflow at " + l.str());
      p *= base;
    }
    if (p == limit) throw OverflowError("divisor_weight: product overflow at " + l.str());
    const u128 factor = p + 1;
    if (acc > limit / factor) throw OverflowError("divisor_weight: product overflow at " + l.str());
    acc *= factor;
  }
  return static_cast<double>(acc);
}

inline double diophantine_weight(const MultiIndex& l) {
  if (l.is_zero()) throw PreconditionError("diophantine_weight: zero multi-index");
  double w = 1.0;
  for (int i = 1; i <= l.max_site(); ++i) {
    const double v = static_cast<double>(l[i]) * i;
    if (l[i] != 0) w /= (1.0 + v * v);
  }
  return w;
}

namespace detail {
constexpr double kNormSlack = 1e-12;

inline void enumerate_rec(const LatticeParams& p, int site, double used, std::vector<int>& cur,
                          std::vector<MultiIndex>& out) {
  if (site > p.M) {
    out.emplace_back(cur);
    return;
  }
  const double w = site_weight(site, p.eta);
  const int m = static_cast<int>(std::floor((p.K - used) / w + kNormSlack));
  for (int v = -m; v <= m; ++v) {
    cur[static_cast<std::size_t>(site - 1)] = v;
    enumerate_rec(p, site + 1, used + w * std::abs(v), cur, out);
  }
  cur[static_cast<std::size_t>(site - 1)] = 0;
}
}  // namespace detail

// All l with support in {1..M} and |l|_eta <= K, ordered by |l|_eta then
// lexicographically.
inline std::vector<MultiIndex> enumerate(const LatticeParams& p) {
  p.validate();
  std::vector<MultiIndex> out;
  std::vector<int> cur(static_cast<std::size_t>(p.M), 0);
  detail::enumerate_rec(p, 1, 0.0, cur, out);
  std::vector<std::pair<double, MultiIndex>> keyed;
  keyed.reserve(out.size());
  for (auto& l : out) keyed.emplace_back(eta_norm(l, p.eta), std::move(l));
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (std::abs(a.first - b.first) > detail::kNormSlack) return a.first < b.first;
    return a.second < b.second;
  });
  out.clear();
  for (auto& kv : keyed) out.push_back(std::move(kv.second));
  return out;
}

inline double weight_bound_report(double rho, double eta, const LatticeParams& params) {
  if (!(rho > 0.0)) throw PreconditionError("weight_bound_report: rho must be > 0");
  LatticeParams p = params;
  p.eta = eta;
  double best = 0.0;
  for (const auto& l : enumerate(p)) best = std::max(best, divisor_weight(l) * std::exp(-rho * eta_norm(l, eta)));
  return best;
}

inline double palline_partial_sum(const LatticeParams& params) {
  double s = 0.0;
  for (const auto& l : enumerate(params)) {
    const double n1 = l1_site_norm(l);
    s += n1 * n1 * n1 / divisor_weight(l);
  }
  return s;
}

}  // namespace airy
