#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "blochbeam/cell_spectral.hpp"

using namespace blochbeam;

namespace {

Vec fixed_band_vector(const PeriodicPotential& V, const PlaneWaveBasis& B, double k, int n) {
  CellSolution cs = solve_cell(V, B, k);
  return fix_gauge({n, k, cs.E[n - 1], cs.Z.col(n - 1), false}).z;
}

}  // namespace

TEST_CASE("assembled cell Hamiltonian is Hermitian at real quasimomentum") {
  PeriodicPotential V({Complex(0.1), Complex(0.3, -0.2), Complex(-0.1, 0.05)});
  PlaneWaveBasis B(8);
  Mat H = assemble_hamiltonian(V, B, Complex(0.31, 0.0));
  REQUIRE((H - H.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("cutoff too small for the potential is rejected") {
  PeriodicPotential V = PeriodicPotential::cosine();
  REQUIRE_THROWS_AS(assemble_hamiltonian(V, PlaneWaveBasis(2), Complex(0.0)), ConfigError);
  REQUIRE_NOTHROW(assemble_hamiltonian(V, PlaneWaveBasis(3), Complex(0.0)));
}

TEST_CASE("potential with complex mean is rejected") {
  REQUIRE_THROWS_AS(PeriodicPotential({Complex(0.0, 0.5)}), ConfigError);
}

TEST_CASE("free-particle bands are folded parabolas") {
  PeriodicPotential V = PeriodicPotential::free_space();
  PlaneWaveBasis B(4);
  auto bands = solve_bands(V, B, 0.3, 3);
  // (m + k)^2 / 2 for m = 0, -1, 1 in ascending order at k = 0.3
  REQUIRE(bands[0].E == Catch::Approx(0.045).margin(1e-12));
  REQUIRE(bands[1].E == Catch::Approx(0.245).margin(1e-12));
  REQUIRE(bands[2].E == Catch::Approx(0.845).margin(1e-12));
  for (const auto& b : bands) {
    REQUIRE_FALSE(b.gauge_fixed);
    REQUIRE(std::abs(b.z.norm() - 1.0) < 1e-12);
  }
  REQUIRE_THROWS_AS(solve_bands(V, B, 0.3, 10), ConfigError);
}

TEST_CASE("eigenpairs satisfy the eigenvalue equation and are orthonormal") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  double k = 0.17;
  Mat H = assemble_hamiltonian(V, B, Complex(k, 0.0));
  CellSolution cs = solve_cell(V, B, k);
  for (int n = 0; n < 5; ++n) {
    double res = (H * cs.Z.col(n) - cs.E[n] * cs.Z.col(n)).norm();
    REQUIRE(res <= 1e-10 * (1.0 + std::abs(cs.E[n])));
  }
  Mat G = cs.Z.adjoint() * cs.Z;
  REQUIRE((G - Mat::Identity(B.dim(), B.dim())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("band energies are converged in the basis cutoff") {
  PeriodicPotential V = PeriodicPotential::cosine();
  auto lo = solve_bands(V, PlaneWaveBasis(16), 0.23, 4);
  auto hi = solve_bands(V, PlaneWaveBasis(64), 0.23, 4);
  for (int n = 0; n < 4; ++n)
    REQUIRE(std::abs(lo[n].E - hi[n].E) <= 1e-12 * (1.0 + std::abs(hi[n].E)));
}

TEST_CASE("cosine potential ground band is nearly flat") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  double Ec = solve_bands(V, B, 0.0, 1)[0].E;
  double Ee = solve_bands(V, B, 0.5, 1)[0].E;
  REQUIRE(Ee - Ec == Catch::Approx(0.002667).margin(2e-5));
}

TEST_CASE("gauge fix rotates the dominant coefficient to the positive real axis") {
  Vec z(3);
  z << Complex(0.0), Complex(0.0, 1.0), Complex(0.0);
  BlochEigenpair p{1, 0.0, 1.0, z, false};
  BlochEigenpair g = fix_gauge(p);
  REQUIRE(g.gauge_fixed);
  REQUIRE(g.z[1] == Complex(1.0, 0.0));
  REQUIRE(std::abs(g.z[0]) == 0.0);
  REQUIRE(std::abs(g.z[2]) == 0.0);

  // bitwise idempotent
  BlochEigenpair gg = fix_gauge(g);
  for (int i = 0; i < 3; ++i) REQUIRE(gg.z[i] == g.z[i]);
}

TEST_CASE("gauge fix breaks magnitude ties toward the smallest index") {
  double r = 1.0 / std::sqrt(2.0);
  Vec z(3);
  z << Complex(0.0, -r), Complex(0.0), Complex(r, 0.0);
  BlochEigenpair g = fix_gauge({1, 0.0, 1.0, z, false});
  // index 0 is the pivot: rotated by conj(-i r)/r = i
  REQUIRE(g.z[0].real() == Catch::Approx(r).margin(1e-15));
  REQUIRE(std::abs(g.z[0].imag()) < 1e-15);
  REQUIRE(g.z[2].imag() == Catch::Approx(r).margin(1e-15));
}

TEST_CASE("gauge fix rejects unnormalized input") {
  Vec z(3);
  z << Complex(0.0), Complex(0.5), Complex(0.0);
  REQUIRE_THROWS_AS(fix_gauge({1, 0.0, 1.0, z, false}), NumericsError);
}

TEST_CASE("free-particle band slope is m + k") {
  PeriodicPotential V = PeriodicPotential::free_space();
  PlaneWaveBasis B(4);
  REQUIRE(band_E1(V, B, 0.3, 1) == Catch::Approx(0.3).margin(1e-12));
  REQUIRE(band_E2(V, B, 0.3, 1) == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("band derivatives match finite-difference oracles on random potentials") {
  // Fixed-seed random ensemble: two-harmonic complex coefficients, interior
  // quasimomenta, lowest three bands.
  std::mt19937 gen(12345);
  std::uniform_real_distribution<double> u1(-1.0, 1.0);
  std::uniform_real_distribution<double> u2(-0.5, 0.5);
  std::uniform_real_distribution<double> uk(-0.45, 0.45);
  std::uniform_int_distribution<int> un(1, 3);
  PlaneWaveBasis B(16);
  const double h = 1e-4;

  for (int trial = 0; trial < 20; ++trial) {
    PeriodicPotential V({Complex(0.0), Complex(u1(gen), u1(gen)), Complex(u2(gen), u2(gen))});
    double k = uk(gen);
    int n = un(gen);

    BandLocal bl = band_local(V, B, k, n);
    auto Eat = [&](double kk) { return solve_cell(V, B, kk).E[n - 1]; };
    double E1_fd = (Eat(k + h) - Eat(k - h)) / (2.0 * h);
    double E2_fd = (Eat(k + h) - 2.0 * Eat(k) + Eat(k - h)) / (h * h);
    REQUIRE(std::abs(bl.E1 - E1_fd) < 1e-5);
    REQUIRE(std::abs(bl.E2 - E2_fd) < 1e-5);

    Vec zp = fixed_band_vector(V, B, k + h, n);
    Vec zm = fixed_band_vector(V, B, k - h, n);
    Vec dkz_fd = (zp - zm) / (2.0 * h);
    REQUIRE((bl.dkz - dkz_fd).norm() < 1e-5);

    Complex berry_fd = bl.z.dot(dkz_fd);
    REQUIRE(std::abs(bl.berry - berry_fd) < 1e-5);
    REQUIRE(std::abs(bl.berry.real()) < 1e-8);
  }
}

TEST_CASE("band gap collapse raises a loud error") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  REQUIRE_THROWS_AS(band_local(V, B, 0.2, 1, /*gap_min=*/10.0), NumericsError);
  REQUIRE_NOTHROW(band_local(V, B, 0.2, 1));
}

TEST_CASE("second vector derivative agrees with differentiating the first") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  double k = 0.2;
  Vec d2 = band_dk2z(V, B, k, 1);
  double d = 1e-3;
  Vec via_dkz = (band_dkz(V, B, k + d, 1) - band_dkz(V, B, k - d, 1)) / (2.0 * d);
  REQUIRE((d2 - via_dkz).norm() < 1e-4);
}

TEST_CASE("vector derivative stencil detects a gauge flip at the zone edge") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  // the gauge-fixed ground family changes sign across |k| = 1/2
  REQUIRE_THROWS_AS(band_dk2z(V, B, 0.5, 1), NumericsError);
  REQUIRE_THROWS_AS(band_dk2z(V, B, 0.2, 1, -1.0), ConfigError);
}

TEST_CASE("gauge-fixed family is smooth along interior quasimomentum paths") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  const double h = 0.01;
  Vec prev = fixed_band_vector(V, B, -0.45, 1);
  for (double k = -0.45 + h; k <= 0.45 + 1e-12; k += h) {
    Vec cur = fixed_band_vector(V, B, k, 1);
    REQUIRE(prev.dot(cur).real() > 0.9);
    prev = cur;
  }

  // ... and the same overlap test flags the sign flip across the zone edge
  double worst = 1.0;
  prev = fixed_band_vector(V, B, 0.45, 1);
  for (double k = 0.45 + h; k <= 0.55 + 1e-12; k += h) {
    Vec cur = fixed_band_vector(V, B, k, 1);
    worst = std::min(worst, prev.dot(cur).real());
    prev = cur;
  }
  REQUIRE(worst < 0.9);
}

TEST_CASE("quadratic Taylor extension tracks the eigenvector family") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  BandLocal bl = band_local(V, B, 0.2, 1);
  Vec d2 = band_dk2z(V, B, 0.2, 1);

  TaylorZ t = eval_z_taylor(bl, d2, Complex(0.25, 0.0));
  REQUIRE_FALSE(t.radius_exceeded);
  Vec exact = fixed_band_vector(V, B, 0.25, 1);
  REQUIRE((t.coeffs - exact).norm() < 1.25e-4);

  REQUIRE(eval_z_taylor(bl, d2, Complex(0.8, 0.0)).radius_exceeded);
  REQUIRE_FALSE(eval_z_taylor(bl, d2, Complex(0.2, 0.45)).radius_exceeded);
}

TEST_CASE("cell wave evaluation sums the Fourier series") {
  PlaneWaveBasis B(1);
  Vec c(3);
  c << Complex(0.0), Complex(1.0), Complex(0.0);
  REQUIRE(std::abs(cell_wave(c, B, 1.234) - 1.0 / std::sqrt(2.0 * kPi)) < 1e-15);
  Vec e(3);
  e << Complex(0.0), Complex(0.0), Complex(1.0);
  Complex v = cell_wave(e, B, 0.7);
  REQUIRE(std::abs(v - std::exp(kI * 0.7) / std::sqrt(2.0 * kPi)) < 1e-15);
}

TEST_CASE("reduced resolvent solves the deflated linear system") {
  PeriodicPotential V = PeriodicPotential::cosine();
  PlaneWaveBasis B(16);
  double k = 0.2;
  int n = 1;
  CellSolution cs = solve_cell(V, B, k);
  Vec z = cs.Z.col(0);
  Mat H = assemble_hamiltonian(V, B, Complex(k, 0.0));

  std::mt19937 gen(7);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  Vec rhs(B.dim());
  for (int i = 0; i < B.dim(); ++i) rhs[i] = Complex(ur(gen), ur(gen));
  Vec rhs_perp = rhs - z * z.dot(rhs);

  Vec u = reduced_resolvent_solve(cs, n, rhs);
  REQUIRE(std::abs(z.dot(u)) < 1e-12 * rhs.norm());
  REQUIRE(((H - cs.E[0] * Mat::Identity(B.dim(), B.dim())) * u - rhs_perp).norm() <
          1e-12 * rhs.norm());

  // any component along the band vector is discarded
  Vec u2 = reduced_resolvent_solve(cs, n, rhs_perp);
  REQUIRE((u - u2).norm() < 1e-12 * rhs.norm());

  // standalone overload matches
  Vec u3 = reduced_resolvent_solve(V, B, k, n, rhs);
  REQUIRE((u - u3).norm() < 1e-12 * rhs.norm());
}
