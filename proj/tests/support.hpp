#pragma once

#include <cmath>
#include <random>

#include "doctest.h"

namespace testing {

inline bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

inline std::mt19937_64& rng() {
  static std::mt19937_64 engine(20240607);
  return engine;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

inline double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

}  // namespace testing
