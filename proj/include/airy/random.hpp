#pragma once
// Seeded random truncated series for property checks and self-tests.

#include <cmath>
#include <random>

#include "airy/analytic.hpp"
#include "airy/smalldiv.hpp"

namespace airy {

struct RandomSeriesOptions {
  double amplitude = 1.0;
  double decay = 0.5;  // coefficient scale e^{-decay (|l|_eta + |j|)}
  bool zero_x_average = true;  // ignored when phi_only
  bool phi_only = false;
  bool zero_mean = false;  // drop the (0, 0) coefficient
};

// Real-on-real series with coefficients uniform in the complex box of the decaying scale.
inline AnalyticFunction random_series(const BasisPtr& b, std::mt19937_64& eng, const RandomSeriesOptions& o = {}) {
  AnalyticFunction u(b, true);
  for (int li = 0; li < b->n_ell(); ++li)
    for (int j = -b->jmax(); j <= b->jmax(); ++j) {
      if (o.phi_only && j != 0) continue;
      if (o.zero_x_average && !o.phi_only && j == 0) continue;
      if (o.zero_mean && li == 0 && j == 0) continue;
      const double s = o.amplitude * std::exp(-o.decay * (b->ell_norm(li) + std::abs(j)));
      const double re = 2.0 * unit_uniform(eng) - 1.0, im = 2.0 * unit_uniform(eng) - 1.0;
      u.at(li, j) = s * cd(re, im);
    }
  u.realify();
  return u;
}

}  // namespace airy
