// SPDX-License-Identifier: Apache-2.0
// 50-digit reference values for the reward math.
#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <span>
#include <vector>

namespace rco::testing {

using big = boost::multiprecision::cpp_bin_float_50;

inline big big_log_partition(std::span<const double> cus, double beta) {
  big sum = 0;
  for (double c : cus) sum += boost::multiprecision::exp(big(c) / big(beta));
  return boost::multiprecision::log(sum / big(cus.size()));
}

// Walks every point of {0, step, ..., 1}^n; fn gets the current point.
template <class Fn>
void for_each_grid_point(int n, int steps, Fn&& fn) {
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  std::vector<double> point(static_cast<std::size_t>(n), 0.0);
  for (;;) {
    for (int i = 0; i < n; ++i) point[i] = static_cast<double>(idx[i]) / steps;
    fn(std::span<const double>(point));
    int i = 0;
    while (i < n && ++idx[i] > steps) idx[i++] = 0;
    if (i == n) return;
  }
}

}  // namespace rco::testing
