#pragma once

#include <numbers>

#include "lgc/bvp.hpp"

namespace lgc::testing {

inline HamiltonianSystem zero_hamiltonian(int n = 1) { return HamiltonianSystem(n, 0, {}); }

inline HamiltonianSystem free_particle() { return HamiltonianSystem(1, 0, {{{0}, {2}, {}, 0.5}}); }

inline HamiltonianSystem harmonic() { return HamiltonianSystem(1, 0, {{{0}, {2}, {}, 0.5}, {{2}, {0}, {}, 0.5}}); }

// p^2/2 + q^4/4 - mu q
inline HamiltonianSystem cubic_oscillator() {
  return HamiltonianSystem(1, 1, {{{0}, {2}, {0}, 0.5}, {{4}, {0}, {0}, 0.25}, {{1}, {0}, {1}, -1.0}});
}

// p^2/2 + q^4/4 - mu2 q^2/2 - mu1 q
inline HamiltonianSystem cusp_family() {
  return HamiltonianSystem(
      1, 2,
      {{{0}, {2}, {0, 0}, 0.5}, {{4}, {0}, {0, 0}, 0.25}, {{2}, {0}, {0, 1}, -0.5}, {{1}, {0}, {1, 0}, -1.0}});
}

// two coupled anharmonic oscillators with a parameter in the coupling
inline HamiltonianSystem coupled_pair() {
  return HamiltonianSystem(2, 1,
                           {{{0, 0}, {2, 0}, {0}, 0.5},
                            {{0, 0}, {0, 2}, {0}, 0.5},
                            {{2, 0}, {0, 0}, {0}, 0.5},
                            {{0, 2}, {0, 0}, {0}, 1.0},
                            {{1, 1}, {0, 0}, {1}, 0.3},
                            {{3, 0}, {0, 0}, {0}, 0.2},
                            {{1, 0}, {1, 1}, {0}, 0.1}});
}

inline BoundaryCondition dirichlet(double q0, double q1) {
  return Dirichlet{Vector::Constant(1, q0), Vector::Constant(1, q1)};
}

// Scalar shooting residual straight from the time map.
inline double shoot(const SymplecticMapSpec& spec, const Vector& mu, double q0, double q1, double p) {
  Vector z(2);
  z << q0, p;
  return time_map(spec, mu, z, false).z[0] - q1;
}

}  // namespace lgc::testing
