#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "canalrl/nn.hpp"

namespace canalrl::oracle {

// Agreement within 1e-4 relative error, with a 1e-6 absolute floor.
inline bool gradient_close(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return true;
  return diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

// Central differences of f over every parameter of p.
inline std::vector<double> numeric_gradient(const MlpParams& p, const std::function<double(const MlpParams&)>& f,
                                            double h = 1e-5) {
  std::vector<double> flat = flatten(p);
  std::vector<double> out(flat.size());
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double saved = flat[k];
    flat[k] = saved + h;
    const double up = f(unflatten(p.layer_sizes, flat));
    flat[k] = saved - h;
    const double down = f(unflatten(p.layer_sizes, flat));
    flat[k] = saved;
    out[k] = (up - down) / (2.0 * h);
  }
  return out;
}

// Count of components that disagree.
inline std::size_t gradient_mismatches(const MlpParams& analytic, const std::vector<double>& numeric) {
  const std::vector<double> a = flatten(analytic);
  std::size_t bad = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (!gradient_close(a[k], numeric[k])) ++bad;
  return bad;
}

}  // namespace canalrl::oracle
