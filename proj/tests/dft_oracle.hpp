#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace canalrl::oracle {

// Band sum of 2|X_k|/N over 1 <= k <= N/2 with f_lo <= k fs / N <= f_hi,
// by direct O(N^2) summation of the mean-removed signal.
inline double direct_dft_band(const std::vector<double>& x, double fs, double f_lo, double f_hi) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double band = 0.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (f < f_lo || f > f_hi) continue;
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      re += (x[t] - mean) * std::cos(angle);
      im += (x[t] - mean) * std::sin(angle);
    }
    band += 2.0 * std::hypot(re, im) / static_cast<double>(n);
  }
  return band;
}

}  // namespace canalrl::oracle
