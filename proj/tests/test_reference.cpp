#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "blochbeam/reference.hpp"

using namespace blochbeam;

namespace {

// Periodic box of ncell lattice cells with roughly ppc points per cell.
WaveField lattice_box(double eps, int ncell, int ppc) {
  double L = ncell * 2.0 * kPi * eps;
  int n = 1;
  while (n < ncell * ppc) n *= 2;
  return WaveField(-L / 2.0, L / n, n);
}

WaveField gaussian_packet(const WaveField& grid, double eps, double k0) {
  WaveField f = grid;
  for (int j = 0; j < f.size(); ++j) {
    double x = f.x(j);
    f.u[j] = std::exp(-x * x / (2.0 * eps)) * std::exp(kI * k0 * x / eps);
  }
  return f;
}

}  // namespace

TEST_CASE("free gaussian follows the closed-form spreading solution") {
  auto V = PeriodicPotential::free_space();
  auto Ve = ExternalPotential::zero();
  double eps = 1.0 / 16;
  WaveField grid = lattice_box(eps, 32, 32);
  WaveField u0 = gaussian_packet(grid, eps, 0.0);

  double T = 0.5;
  auto res = strang_solve(V, Ve, u0, eps, T, 0.01);

  // with no potential the splitting is the exact kinetic flow, so the only
  // error left is the periodization of the gaussian tail
  WaveField exact = grid;
  Complex M = kI / (1.0 + kI * T);
  Complex amp = 1.0 / std::sqrt(1.0 + kI * T);
  for (int j = 0; j < exact.size(); ++j) {
    double x = exact.x(j);
    exact.u[j] = amp * std::exp(kI * M * x * x / (2.0 * eps));
  }
  CHECK(l2_error(res.u, exact) < 1e-12);
  CHECK(res.mass_drift < 1e-13);
}

TEST_CASE("splitting is unitary on a lattice with an external trap") {
  auto V = PeriodicPotential::cosine();
  auto Ve = ExternalPotential::harmonic(0.25);
  double eps = 1.0 / 16;
  WaveField grid = lattice_box(eps, 32, 32);
  WaveField u0 = gaussian_packet(grid, eps, 0.3);

  auto res = strang_solve(V, Ve, u0, eps, 0.5, 0.5 * std::pow(eps, 1.5));
  CHECK(res.mass_drift < 1e-13);
  CHECK(res.steps == static_cast<int>(std::ceil(0.5 / (0.5 * std::pow(eps, 1.5)))));
}

TEST_CASE("zero evolution time returns the data bitwise") {
  auto V = PeriodicPotential::cosine();
  auto Ve = ExternalPotential::zero();
  double eps = 1.0 / 8;
  WaveField grid = lattice_box(eps, 8, 32);
  WaveField u0 = gaussian_packet(grid, eps, 0.2);
  auto res = strang_solve(V, Ve, u0, eps, 0.0, 0.1);
  bool same = true;
  for (int j = 0; j < u0.size(); ++j) same = same && res.u.u[j] == u0.u[j];
  CHECK(same);
  CHECK(res.steps == 0);
  CHECK(res.mass_drift == 0.0);
}

TEST_CASE("step count honours the divisibility adjustment") {
  auto V = PeriodicPotential::free_space();
  auto Ve = ExternalPotential::zero();
  double eps = 1.0 / 8;
  WaveField grid = lattice_box(eps, 8, 32);
  WaveField u0 = gaussian_packet(grid, eps, 0.0);
  auto res = strang_solve(V, Ve, u0, eps, 0.5, 0.3);
  CHECK(res.steps == 2);
  CHECK(res.dt == Catch::Approx(0.25));
}

TEST_CASE("incommensurate box is rejected") {
  auto V = PeriodicPotential::cosine();
  auto Ve = ExternalPotential::zero();
  double eps = 1.0 / 8;
  WaveField grid(-1.0, 2.0 / 256, 256);  // L = 2, not a multiple of pi/4
  WaveField u0 = gaussian_packet(grid, eps, 0.0);
  CHECK_THROWS_AS(strang_solve(V, Ve, u0, eps, 0.1, 0.01), ConfigError);
}

TEST_CASE("splitting error halves twice per step halving") {
  auto V = PeriodicPotential::cosine();
  auto Ve = ExternalPotential::harmonic(0.25);
  double eps = 1.0 / 8;
  WaveField grid = lattice_box(eps, 16, 32);
  WaveField u0 = gaussian_packet(grid, eps, 0.25);
  double T = 0.5;

  double dt0 = 0.0125;
  auto truth = strang_solve(V, Ve, u0, eps, T, dt0 / 16);
  double e1 = l2_error(strang_solve(V, Ve, u0, eps, T, dt0).u, truth.u);
  double e2 = l2_error(strang_solve(V, Ve, u0, eps, T, dt0 / 2).u, truth.u);
  double e4 = l2_error(strang_solve(V, Ve, u0, eps, T, dt0 / 4).u, truth.u);
  double r1 = e1 / e2, r2 = e2 / e4;
  INFO("errors " << e1 << " " << e2 << " " << e4 << ", ratios " << r1 << ", " << r2);
  CHECK(r1 > 3.8);
  CHECK(r1 < 4.2);
  CHECK(r2 > 3.8);
  CHECK(r2 < 4.3);
}

TEST_CASE("resolution gate settles on a resolved grid") {
  auto V = PeriodicPotential::cosine();
  PlaneWaveBasis B{16};
  auto Ve = ExternalPotential::zero();
  double eps = 1.0 / 16;
  InitialData data{{1},
                   {Envelope::gaussian(1.0, 0.15, 0.0)},
                   PhaseS0::linear(0.3),
                   -1.2,
                   1.2};

  int ncell = static_cast<int>(std::ceil(4.0 / (2.0 * kPi * eps)));
  double L = ncell * 2.0 * kPi * eps;
  WaveField grid(-L / 2.0, L / 1024, 1024);

  auto ref = resolved_reference(V, B, Ve, data, eps, 0.25, grid, 0.5 * std::pow(eps, 1.5));
  CHECK(ref.gate_diff < 1e-8);
  CHECK(ref.grid_size >= 2048);
  CHECK(ref.u.size() == grid.size());
  CHECK(ref.mass_drift < 1e-12);
  CHECK(l2_norm(ref.u) > 0.1);
}
