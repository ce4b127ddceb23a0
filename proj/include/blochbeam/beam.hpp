#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "blochbeam/cell_spectral.hpp"
#include "blochbeam/external_potential.hpp"
#include "blochbeam/initial_data.hpp"

namespace blochbeam {

// One Gaussian beam on one band: ray position and momentum, accumulated
// phase, complex Hessian of the phase, and the leading amplitude.
struct BeamState {
  double t = 0.0;
  double x0 = 0.0;  // launch point (identifies the beam)
  int band = 1;     // 1-based
  double xt = 0.0;
  double p = 0.0;
  double S = 0.0;
  Complex M{0.0, 1.0};
  Complex a{0.0, 0.0};
};

// Launch a beam for band n at x0. The phase Hessian starts at S0''(x0) + i,
// which keeps Im(M) > 0 and makes the beam a proper Gaussian from t = 0.
//
// As a consistency check, the construction re-derives the band amplitude by
// projecting the multi-band cell profile sum_m a_m(x0) z_m(k0, .) back onto
// z_n with a 256-point periodic quadrature; for orthonormal eigenvectors the
// projection must reproduce the envelope value.
inline BeamState init_beam(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                           const InitialData& data, int n, double x0) {
  data.validate();
  auto it = std::find(data.bands.begin(), data.bands.end(), n);
  if (it == data.bands.end())
    throw ConfigError("init_beam: band " + std::to_string(n) +
                      " is not part of the initial data");
  size_t which = static_cast<size_t>(it - data.bands.begin());

  double k0 = data.S0.d1(x0);
  BeamState st;
  st.t = 0.0;
  st.x0 = x0;
  st.band = n;
  st.xt = x0;
  st.p = k0;
  st.S = data.S0.value(x0);
  st.M = Complex(data.S0.d2(x0), 1.0);
  st.a = Complex(data.envelopes[which](x0), 0.0);

  CellSolution cs = solve_cell(V, basis, k0);
  std::vector<Vec> zs;
  zs.reserve(data.bands.size());
  for (int m : data.bands) {
    if (m > basis.dim())
      throw ConfigError("init_beam: band " + std::to_string(m) + " exceeds basis dimension");
    zs.push_back(fix_gauge({m, k0, cs.E[m - 1], cs.Z.col(m - 1), false}).z);
  }

  const int Q = 256;
  Complex proj = 0.0;
  for (int j = 0; j < Q; ++j) {
    double y = 2.0 * kPi * j / Q;
    Complex g = 0.0;
    for (size_t m = 0; m < zs.size(); ++m)
      g += data.envelopes[m](x0) * cell_wave(zs[m], basis, y);
    proj += g * std::conj(cell_wave(zs[which], basis, y));
  }
  proj *= 2.0 * kPi / Q;
  if (std::abs(proj - st.a) > 1e-6 * (1.0 + std::abs(st.a)))
    throw NumericsError("init_beam: band projection " + std::to_string(std::abs(proj)) +
                        " disagrees with envelope value " + std::to_string(std::abs(st.a)) +
                        " at x0 = " + std::to_string(x0));
  return st;
}

struct BeamRhs {
  double xt, p, S;
  Complex M, a;
};

// Ray and transport equations for one beam. The band quantities are
// evaluated at the instantaneous momentum; the optional out-parameter
// exposes them so callers can track gap margins without a second solve.
inline BeamRhs ode_rhs(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                       const ExternalPotential& Ve, const BeamState& st,
                       double gap_min = kGapMinDefault, BandLocal* bl_out = nullptr) {
  BandLocal bl = band_local(V, basis, st.p, st.band, gap_min);
  double ve1 = Ve.d1(st.xt);
  BeamRhs r;
  r.xt = bl.E1;
  r.p = -ve1;
  r.S = st.p * bl.E1 - bl.E - Ve.value(st.xt);
  r.M = -bl.E2 * st.M * st.M - Ve.d2(st.xt);
  r.a = st.a * (ve1 * bl.berry - 0.5 * bl.E2 * st.M);
  if (bl_out) *bl_out = std::move(bl);
  return r;
}

// Ray-frame classical energy E_n(p) + V_e(x); conserved along exact rays.
inline double hamiltonian_energy(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                                 const ExternalPotential& Ve, const BeamState& st) {
  CellSolution cs = solve_cell(V, basis, st.p);
  if (st.band < 1 || st.band > basis.dim())
    throw ConfigError("hamiltonian_energy: band index out of range");
  return cs.E[st.band - 1] + Ve.value(st.xt);
}

struct PropagationResult {
  BeamState state;
  double min_ImM;  // over all accepted states including t = 0
  double min_gap;  // over all band evaluations
  int steps = 0;
};

namespace detail {
inline BeamState advance(const BeamState& s, const BeamRhs& r, double dt) {
  BeamState o = s;
  o.xt += dt * r.xt;
  o.p += dt * r.p;
  o.S += dt * r.S;
  o.M += dt * r.M;
  o.a += dt * r.a;
  return o;
}

inline void check_state(const BeamState& s) {
  if (!std::isfinite(s.xt) || !std::isfinite(s.p) || !std::isfinite(s.S) ||
      !std::isfinite(s.M.real()) || !std::isfinite(s.M.imag()) ||
      !std::isfinite(s.a.real()) || !std::isfinite(s.a.imag()))
    throw NumericsError("beam propagation produced a non-finite state at t = " +
                        std::to_string(s.t) + " (x0 = " + std::to_string(s.x0) + ")");
  if (!(s.M.imag() > 0.0))
    throw NumericsError("beam lost Gaussian decay: Im(M) = " + std::to_string(s.M.imag()) +
                        " at t = " + std::to_string(s.t) + " (x0 = " + std::to_string(s.x0) +
                        ")");
}
}  // namespace detail

// Classic fixed-step RK4 for the beam system. The step is shrunk so it
// divides T exactly; every accepted state must keep Im(M) > 0 and remain
// finite. An optional observer sees the initial state and every accepted
// step (used for trajectory dumps and closed-form comparisons).
inline PropagationResult rk4_propagate(
    const PeriodicPotential& V, const PlaneWaveBasis& basis, const ExternalPotential& Ve,
    BeamState st, double T, double dt, double gap_min = kGapMinDefault,
    const std::function<void(const BeamState&)>& observer = {}) {
  if (!(T >= 0.0)) throw ConfigError("rk4_propagate: T must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("rk4_propagate: dt must be > 0");

  detail::check_state(st);
  PropagationResult res;
  res.min_ImM = st.M.imag();
  res.min_gap = std::numeric_limits<double>::infinity();
  if (observer) observer(st);

  if (T == 0.0) {
    res.state = st;
    return res;
  }

  int nst = static_cast<int>(std::ceil(T / dt - 1e-12));
  if (nst < 1) nst = 1;
  double h = T / nst;

  for (int i = 0; i < nst; ++i) {
    BandLocal bl;
    BeamRhs k1 = ode_rhs(V, basis, Ve, st, gap_min, &bl);
    res.min_gap = std::min(res.min_gap, bl.gap);
    BeamRhs k2 = ode_rhs(V, basis, Ve, detail::advance(st, k1, 0.5 * h), gap_min, &bl);
    res.min_gap = std::min(res.min_gap, bl.gap);
    BeamRhs k3 = ode_rhs(V, basis, Ve, detail::advance(st, k2, 0.5 * h), gap_min, &bl);
    res.min_gap = std::min(res.min_gap, bl.gap);
    BeamRhs k4 = ode_rhs(V, basis, Ve, detail::advance(st, k3, h), gap_min, &bl);
    res.min_gap = std::min(res.min_gap, bl.gap);

    BeamState nx = st;
    nx.xt += h / 6.0 * (k1.xt + 2.0 * k2.xt + 2.0 * k3.xt + k4.xt);
    nx.p += h / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
    nx.S += h / 6.0 * (k1.S + 2.0 * k2.S + 2.0 * k3.S + k4.S);
    nx.M += h / 6.0 * (k1.M + 2.0 * k2.M + 2.0 * k3.M + k4.M);
    nx.a += h / 6.0 * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a);
    nx.t = (i + 1 == nst) ? T : (i + 1) * h;

    detail::check_state(nx);
    res.min_ImM = std::min(res.min_ImM, nx.M.imag());
    if (observer) observer(nx);
    st = nx;
  }
  res.state = st;
  res.steps = nst;
  return res;
}

// First-order corrector profile for one beam at its current state, as a
// coefficient vector in the plane-wave basis, orthogonal to the band vector.
//
// The transported leading profile A0 = a(t) z(p) leaves an order-one defect
// L A0 when pushed through the cell problem; the corrector removes its
// component off the band:  (H - E) A1 = i (L A0 - <L A0, z> z).
// Solvability requires the on-band component <L A0, z> to vanish; its size
// relative to |a| is checked here and a violation is a hard error.
namespace detail {

struct TransportDefect {
  CellSolution cs;
  BandLocal bl;
  Vec LA0;  // transport operator applied to the leading profile, on the ray
};

inline TransportDefect transport_defect(const PeriodicPotential& V,
                                        const PlaneWaveBasis& basis,
                                        const ExternalPotential& Ve, const BeamState& st,
                                        double gap_min) {
  TransportDefect td{solve_cell(V, basis, st.p), {}, {}};
  td.bl = band_local(td.cs, basis, st.band, gap_min);

  double ve1 = Ve.d1(st.xt);
  Complex kt = -ve1 - td.bl.E1 * st.M;  // d/dt of the beam's local wavenumber on the ray
  Complex adot = st.a * (ve1 * td.bl.berry - 0.5 * td.bl.E2 * st.M);

  const int D = basis.dim();
  Vec hk_dkz(D);
  for (int i = 0; i < D; ++i) hk_dkz[i] = (basis.mode(i) + st.p) * td.bl.dkz[i];

  td.LA0 = adot * td.bl.z + st.a * (kt * td.bl.dkz + st.M * hk_dkz + 0.5 * st.M * td.bl.z);
  return td;
}

}  // namespace detail

// On-band component of the transport defect relative to the beam amplitude.
// Zero in exact arithmetic; the corrector construction refuses to proceed
// when it is not negligible.
inline double a1_solvability(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                             const ExternalPotential& Ve, const BeamState& st,
                             double gap_min = kGapMinDefault) {
  detail::TransportDefect td = detail::transport_defect(V, basis, Ve, st, gap_min);
  return std::abs(td.bl.z.dot(td.LA0)) / std::max(std::abs(st.a), 1e-300);
}

inline Vec compute_A1_on_ray(const PeriodicPotential& V, const PlaneWaveBasis& basis,
                             const ExternalPotential& Ve, const BeamState& st,
                             double gap_min = kGapMinDefault) {
  detail::TransportDefect td = detail::transport_defect(V, basis, Ve, st, gap_min);
  const BandLocal& bl = td.bl;
  const Vec& LA0 = td.LA0;

  Complex on_band = bl.z.dot(LA0);
  if (std::abs(on_band) > 1e-8 * std::max(std::abs(st.a), 1e-300))
    throw NumericsError("corrector solvability violated: on-band defect " +
                        std::to_string(std::abs(on_band)) + " for |a| = " +
                        std::to_string(std::abs(st.a)));

  Vec u = reduced_resolvent_solve(td.cs, st.band, LA0 - on_band * bl.z, gap_min);
  Vec A1 = kI * u;
  A1 -= bl.z * bl.z.dot(A1);  // pin the on-band component to exactly zero
  return A1;
}

}  // namespace blochbeam
