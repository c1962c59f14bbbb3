#ifndef ZZGIBBS_AUX_STATE_HPP
#define ZZGIBBS_AUX_STATE_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "zzgibbs/rng.hpp"

namespace zzgibbs {

enum class NoiseKind { uniform, normal };

// per_observation: J = n blocks, one block holds the m draws of one
// observation. per_draw: one pseudo-draw (all its blocks) is refreshed.
enum class BlockStrategy { per_observation, per_draw };

struct AuxLayout {
  std::size_t blocks = 1;     // J
  std::size_t draws = 1;      // m
  std::size_t noise_dim = 1;  // base noise values per pseudo-observation
  NoiseKind kind = NoiseKind::uniform;
};

// Base noise for the pseudo-observations, stored block-major:
// value(block, draw, q). Pushed through the generator at each evaluation.
struct AuxState {
  AuxLayout layout;
  std::vector<double> values;

  std::size_t index(std::size_t block, std::size_t draw, std::size_t q = 0) const {
    return (block * layout.draws + draw) * layout.noise_dim + q;
  }
  double value(std::size_t block, std::size_t draw, std::size_t q = 0) const { return values[index(block, draw, q)]; }
  std::span<const double> block(std::size_t j) const {
    const std::size_t len = layout.draws * layout.noise_dim;
    return {values.data() + j * len, len};
  }
};

inline double draw_noise(NoiseKind kind, Rng& rng) {
  return kind == NoiseKind::uniform ? rng.uniform() : rng.normal();
}

inline AuxState make_aux_state(const AuxLayout& layout, Rng& rng) {
  if (layout.blocks == 0 || layout.draws == 0 || layout.noise_dim == 0)
    throw std::invalid_argument("auxiliary layout must be non-empty");
  AuxState s{layout, std::vector<double>(layout.blocks * layout.draws * layout.noise_dim)};
  for (double& v : s.values) v = draw_noise(layout.kind, rng);
  return s;
}

}  // namespace zzgibbs

#endif
