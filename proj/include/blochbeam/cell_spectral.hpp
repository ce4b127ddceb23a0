#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "blochbeam/common.hpp"
#include "blochbeam/periodic_potential.hpp"
#include "blochbeam/plane_wave.hpp"

namespace blochbeam {

inline constexpr double kGapMinDefault = 1e-6;

// Cell Hamiltonian H(k) = 0.5 (-i d/dy + k)^2 + V(y) in the plane-wave basis:
//   H_ij = 0.5 (m_i + k)^2 delta_ij + v_{m_i - m_j}.
// k may be complex (the entries extend analytically); for real k the matrix
// is Hermitian.
inline Mat assemble_hamiltonian(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                                Complex k) {
  basis.require_resolves(V);
  const int D = basis.dim();
  Mat H(D, D);
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) {
      int dm = basis.mode(i) - basis.mode(j);
      Complex e = std::abs(dm) <= V.max_mode() ? V.coeff(dm) : Complex(0.0);
      if (i == j) {
        Complex mk = Complex(basis.mode(i), 0.0) + k;
        e += 0.5 * mk * mk;
      }
      H(i, j) = e;
    }
  }
  return H;
}

// One band of the cell eigenproblem at quasimomentum k.
// n is 1-based and counts bands in ascending energy order.
struct BlochEigenpair {
  int n;
  double k;
  double E;
  Vec z;             // coefficients in the plane-wave basis, unit norm
  bool gauge_fixed;  // false straight out of the eigensolver
};

// Full spectrum at one k: ascending eigenvalues, orthonormal columns,
// arbitrary (solver-chosen) phases.
struct CellSolution {
  double k;
  RVec E;
  Mat Z;
};

inline CellSolution solve_cell(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                               double k) {
  Mat H = assemble_hamiltonian(V, basis, Complex(k, 0.0));
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  if (es.info() != Eigen::Success)
    throw NumericsError("cell eigensolve failed at k = " + std::to_string(k));
  return {k, es.eigenvalues(), es.eigenvectors()};
}

inline std::vector<BlochEigenpair> solve_bands(const PeriodicPotential& V,
                                               const PlaneWaveBasis& basis, double k,
                                               int n_bands) {
  if (n_bands < 1 || n_bands > basis.dim())
    throw ConfigError("solve_bands: n_bands must be in 1.." + std::to_string(basis.dim()) +
                      ", got " + std::to_string(n_bands));
  CellSolution cs = solve_cell(V, basis, k);
  std::vector<BlochEigenpair> out;
  out.reserve(n_bands);
  for (int n = 1; n <= n_bands; ++n)
    out.push_back({n, k, cs.E[n - 1], cs.Z.col(n - 1), false});
  return out;
}

namespace detail {
// Index of the largest |c_i|; the first maximum wins ties, which keeps the
// choice stable under reordering-free perturbations.
inline int pivot_index(const Vec& z) {
  int p = 0;
  double best = std::abs(z[0]);
  for (int i = 1; i < z.size(); ++i) {
    double a = std::abs(z[i]);
    if (a > best) {
      best = a;
      p = i;
    }
  }
  return p;
}
}  // namespace detail

// Rotate the eigenvector phase so its largest coefficient is real and
// positive. Idempotent; ties resolved toward the smallest index.
inline BlochEigenpair fix_gauge(BlochEigenpair pair) {
  double nrm = pair.z.norm();
  if (std::abs(nrm - 1.0) > 1e-12)
    throw NumericsError("fix_gauge: eigenvector norm " + std::to_string(nrm) +
                        " deviates from 1 beyond 1e-12");
  int p = detail::pivot_index(pair.z);
  double mag = std::abs(pair.z[p]);
  if (mag == 0.0) throw NumericsError("fix_gauge: zero eigenvector");
  pair.z *= std::conj(pair.z[p]) / mag;
  pair.gauge_fixed = true;
  return pair;
}

// Everything the beam equations need about one band at one quasimomentum:
// E and its first two k-derivatives, the gauge-fixed eigenvector, its
// k-derivative, the phase-connection term <d_k z, z>, and the spectral gap.
struct BandLocal {
  double k;
  int n;  // 1-based
  double E;
  double E1;
  double E2;
  double gap;     // min_m |E_m - E_n| over the computed spectrum
  Vec z;          // gauge-fixed
  Vec dkz;        // derivative of the gauge-fixed family
  Complex berry;  // <d_k z, z>; purely imaginary up to roundoff
};

inline BandLocal band_local(const CellSolution& cs, const PlaneWaveBasis& basis, int n,
                            double gap_min = kGapMinDefault) {
  const int D = basis.dim();
  if (n < 1 || n > D)
    throw ConfigError("band index must be in 1.." + std::to_string(D) + ", got " +
                      std::to_string(n));
  const double k = cs.k;
  const int i0 = n - 1;

  double gap = std::numeric_limits<double>::infinity();
  for (int m = 0; m < D; ++m)
    if (m != i0) gap = std::min(gap, std::abs(cs.E[m] - cs.E[i0]));
  if (gap < gap_min)
    throw NumericsError("band gap collapse: gap " + std::to_string(gap) + " < " +
                        std::to_string(gap_min) + " at k = " + std::to_string(k) +
                        ", band " + std::to_string(n));

  Vec z = fix_gauge({n, k, cs.E[i0], cs.Z.col(i0), false}).z;

  // dH/dk = diag(m + k)
  Vec hz(D);
  for (int i = 0; i < D; ++i) hz[i] = (basis.mode(i) + k) * z[i];

  Complex e1c = z.dot(hz);
  if (std::abs(e1c.imag()) > 1e-8)
    throw NumericsError("band_local: non-real dE/dk, imag = " + std::to_string(e1c.imag()));
  double E1 = e1c.real();

  // First-order perturbation sum for the eigenvector derivative. The raw
  // solver gauge of z_m is immaterial: each term pairs z_m with its own
  // conjugate through the amplitude.
  Vec u = Vec::Zero(D);
  for (int m = 0; m < D; ++m) {
    if (m == i0) continue;
    Complex amp = cs.Z.col(m).dot(hz);
    u += (amp / (cs.E[i0] - cs.E[m])) * cs.Z.col(m);
  }
  // The gauge-fixed family additionally rotates so the pivot coefficient
  // stays real: d_k z = u + i*gamma*z with gamma killing Im(u) at the pivot.
  int p = detail::pivot_index(z);
  double gamma = -u[p].imag() / z[p].real();
  Vec dkz = u + kI * gamma * z;

  Complex berry = z.dot(dkz);
  if (std::abs(berry.real()) > 1e-8)
    throw NumericsError("band_local: <d_k z, z> has real part " +
                        std::to_string(berry.real()) + ", expected ~0");

  Vec hdkz(D);
  for (int i = 0; i < D; ++i) hdkz[i] = (basis.mode(i) + k) * dkz[i];
  Complex e2c = Complex(1.0) + 2.0 * z.dot(hdkz) - 2.0 * E1 * berry;
  if (std::abs(e2c.imag()) > 1e-6)
    throw NumericsError("band_local: non-real d2E/dk2, imag = " +
                        std::to_string(e2c.imag()));

  BandLocal out;
  out.k = k;
  out.n = n;
  out.E = cs.E[i0];
  out.E1 = E1;
  out.E2 = e2c.real();
  out.gap = gap;
  out.z = std::move(z);
  out.dkz = std::move(dkz);
  out.berry = berry;
  return out;
}

inline BandLocal band_local(const PeriodicPotential& V, const PlaneWaveBasis& basis, double k,
                            int n, double gap_min = kGapMinDefault) {
  return band_local(solve_cell(V, basis, k), basis, n, gap_min);
}

inline double band_E1(const PeriodicPotential& V, const PlaneWaveBasis& basis, double k,
                      int n) {
  return band_local(V, basis, k, n).E1;
}

inline double band_E2(const PeriodicPotential& V, const PlaneWaveBasis& basis, double k,
                      int n) {
  return band_local(V, basis, k, n).E2;
}

inline Vec band_dkz(const PeriodicPotential& V, const PlaneWaveBasis& basis, double k,
                    int n) {
  return band_local(V, basis, k, n).dkz;
}

// Second k-derivative of the gauge-fixed eigenvector by a centered difference
// of gauge-fixed eigensolves. The overlap guard catches branch or gauge
// discontinuities inside the stencil (level crossing, pivot swap).
inline Vec band_dk2z(const PeriodicPotential& V, const PlaneWaveBasis& basis, double k, int n,
                     double h = 1e-3) {
  if (!(h > 0.0)) throw ConfigError("band_dk2z: step h must be positive");
  const int D = basis.dim();
  if (n < 1 || n > D)
    throw ConfigError("band index must be in 1.." + std::to_string(D) + ", got " +
                      std::to_string(n));
  auto fixed_z = [&](double kk) {
    CellSolution cs = solve_cell(V, basis, kk);
    return fix_gauge({n, kk, cs.E[n - 1], cs.Z.col(n - 1), false}).z;
  };
  Vec z0 = fixed_z(k);
  Vec zp = fixed_z(k + h);
  Vec zm = fixed_z(k - h);
  // A smooth gauge-fixed family has overlap ~ +1 between stencil neighbors.
  // Checking the real part catches both branch swaps (small modulus) and
  // gauge sign flips (overlap ~ -1), which the modulus alone cannot see.
  for (const Vec* zs : {&zp, &zm}) {
    double ov = zs->dot(z0).real();
    if (ov < 0.99)
      throw NumericsError("band_dk2z: eigenvector family discontinuous across the stencil "
                          "(overlap = " + std::to_string(ov) + " at k = " +
                          std::to_string(k) + "); reduce h or move off the discontinuity");
  }
  return (zp - 2.0 * z0 + zm) / (h * h);
}

// Quadratic Taylor extension of the eigenvector family to complex
// quasimomentum kappa around the expansion point of `bl`.
struct TaylorZ {
  Vec coeffs;
  bool radius_exceeded;  // |kappa - k| > 0.5: extrapolation unreliable, not fatal
};

inline TaylorZ eval_z_taylor(const BandLocal& bl, const Vec& dk2z, Complex kappa) {
  Complex d = kappa - bl.k;
  TaylorZ out;
  out.coeffs = bl.z + d * bl.dkz + (0.5 * d * d) * dk2z;
  out.radius_exceeded = std::abs(d) > 0.5;
  return out;
}

// Value of sum_m c_m e^{i m y} / sqrt(2 pi) at cell coordinate y.
inline Complex cell_wave(const Vec& coeffs, const PlaneWaveBasis& basis, double y) {
  Complex s = 0.0;
  for (int i = 0; i < basis.dim(); ++i)
    s += coeffs[i] * std::exp(kI * (basis.mode(i) * y));
  return s / std::sqrt(2.0 * kPi);
}

// Solve (H(k) - E_n) u = rhs in the orthogonal complement of z_n.
// Any component of rhs along z_n is discarded; the returned u satisfies
// <z_n, u> = 0. Spectral expansion over the remaining eigenvectors.
inline Vec reduced_resolvent_solve(const CellSolution& cs, int n, const Vec& rhs,
                                   double gap_min = kGapMinDefault) {
  const int D = static_cast<int>(cs.E.size());
  if (n < 1 || n > D)
    throw ConfigError("band index must be in 1.." + std::to_string(D) + ", got " +
                      std::to_string(n));
  const int i0 = n - 1;
  Vec u = Vec::Zero(D);
  for (int m = 0; m < D; ++m) {
    if (m == i0) continue;
    double d = cs.E[m] - cs.E[i0];
    if (std::abs(d) < gap_min)
      throw NumericsError("reduced resolvent: gap " + std::to_string(std::abs(d)) +
                          " < " + std::to_string(gap_min) + " at k = " +
                          std::to_string(cs.k));
    u += (cs.Z.col(m).dot(rhs) / d) * cs.Z.col(m);
  }
  return u;
}

inline Vec reduced_resolvent_solve(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                                   double k, int n, const Vec& rhs,
                                   double gap_min = kGapMinDefault) {
  return reduced_resolvent_solve(solve_cell(V, basis, k), n, rhs, gap_min);
}

}  // namespace blochbeam
