#ifndef ZZGIBBS_ENVELOPE_HPP
#define ZZGIBBS_ENVELOPE_HPP

#include <cmath>
#include <limits>
#include <stdexcept>

#include "zzgibbs/core_types.hpp"
#include "zzgibbs/rng.hpp"

namespace zzgibbs {

// First arrival of a Poisson process with rate a + s t, given the unit
// exponential variate e: solves a tau + s tau^2 / 2 = e.
inline double affine_arrival_time(double a, double s, double e) {
  if (!(a >= 0.0) || !(s >= 0.0)) throw std::invalid_argument("invalid envelope");
  if (a == 0.0 && s == 0.0) return std::numeric_limits<double>::infinity();
  if (s == 0.0) return e / a;
  // rationalised root, stable when s is small relative to a
  return 2.0 * e / (a + std::sqrt(a * a + 2.0 * s * e));
}

inline double first_arrival_affine(double a, double s, Rng& rng) {
  return affine_arrival_time(a, s, -std::log(rng.uniform()));
}

}  // namespace zzgibbs

#endif
