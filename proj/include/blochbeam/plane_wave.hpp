#pragma once

#include "blochbeam/common.hpp"
#include "blochbeam/periodic_potential.hpp"

namespace blochbeam {

// Galerkin basis e^{i m y} / sqrt(2 pi) on the unit cell [0, 2 pi),
// m = -M..M, ordered by ascending m. dim() = 2M + 1.
struct PlaneWaveBasis {
  int M;

  explicit PlaneWaveBasis(int cutoff) : M(cutoff) {
    if (M < 1) throw ConfigError("plane-wave cutoff must be >= 1, got " + std::to_string(M));
  }

  int dim() const { return 2 * M + 1; }
  int mode(int i) const { return i - M; }   // vector index -> Fourier mode
  int index(int m) const { return m + M; }  // Fourier mode -> vector index

  // The cutoff must clear the potential's highest harmonic with margin,
  // otherwise the Galerkin eigenvalues are unreliable.
  void require_resolves(const PeriodicPotential& V) const {
    if (M < V.max_mode() + 2)
      throw ConfigError("plane-wave cutoff " + std::to_string(M) +
                        " too small for potential with max mode " +
                        std::to_string(V.max_mode()) + " (need >= max mode + 2)");
  }
};

}  // namespace blochbeam
