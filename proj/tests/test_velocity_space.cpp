#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vpblab/moments.hpp"

using namespace vpblab;

TEST_CASE("gaussian moment oracle agrees with brute-force quadrature") {
  // the oracle itself is cross-checked once against an independent rule
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto mom = [&](int p) {
    return oracle::quad_1d([&](double x) { return std::pow(x, p) * c * std::exp(-0.5 * x * x); });
  };
  CHECK(mom(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mom(2) == doctest::Approx(oracle::gaussian_moment({2})).epsilon(1e-12));
  CHECK(mom(4) == doctest::Approx(oracle::gaussian_moment({4})).epsilon(1e-12));
  CHECK(mom(6) == doctest::Approx(oracle::gaussian_moment({6})).epsilon(1e-12));
  CHECK(std::abs(mom(3)) < 1e-13);
}

TEST_CASE("grid moment table") {
  VelocityGrid g3 = VelocityGrid::build(3, 16, GridStrategy::GaussHermiteTensor);
  auto mom = [&](auto f) {
    double acc = 0;
    for (int i = 0; i < g3.size(); ++i)
      acc += g3.weights()[i] * g3.maxwellian()[i] * f(g3.nodes().row(i));
    return acc;
  };
  // oracle values: <|xi|^4> = sum_{jm} E[xi_j^2 xi_m^2], <|xi|^6> similarly
  const double xi4 = 3 * oracle::gaussian_moment({4}) + 6 * oracle::gaussian_moment({2, 2});
  CHECK(xi4 == 15.0);
  CHECK(mom([](auto v) { return std::pow(v.squaredNorm(), 2); }) ==
        doctest::Approx(15.0).epsilon(1e-10));
  CHECK(g3.moment_defect() < 1e-10);

  VelocityGrid g1 = VelocityGrid::build(1, 8, GridStrategy::GaussHermiteTensor);
  double one = 0;
  for (int i = 0; i < g1.size(); ++i) one += g1.weights()[i] * g1.maxwellian()[i];
  CHECK(one == doctest::Approx(1.0).epsilon(1e-12));

  VelocityGrid g12 = VelocityGrid::build(3, 12, GridStrategy::GaussHermiteTensor);
  double xi6 = 0;
  for (int i = 0; i < g12.size(); ++i)
    xi6 += g12.weights()[i] * g12.maxwellian()[i] * std::pow(g12.nodes().row(i).squaredNorm(), 3);
  CHECK(xi6 == doctest::Approx(105.0).epsilon(1e-8));
}

TEST_CASE("grid construction guards") {
  CHECK_THROWS_AS(VelocityGrid::build(4, 8, GridStrategy::GaussHermiteTensor), GridError);
  CHECK_THROWS_AS(VelocityGrid::build(0, 8, GridStrategy::GaussHermiteTensor), GridError);
  CHECK_THROWS_AS(VelocityGrid::build(3, 3, GridStrategy::GaussHermiteTensor), GridError);
}

TEST_CASE("uniform grid resolves moments at high order") {
  VelocityGrid g = VelocityGrid::build(1, 64, GridStrategy::UniformTruncated);
  CHECK(g.moment_defect() < 1e-10);
  BasisSet basis(g);  // orthonormalized under the discrete product on any grid
  CHECK(basis.gram_defect() < 1e-12);
}

TEST_CASE("macro projection closed values") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);

  // u = sqrt(M): a = (1/2)<(5-|xi|^2) M> = (5 - 3)/2 = 1 by the oracle
  const double a_expect = 0.5 * (5.0 - 3 * oracle::gaussian_moment({2}));
  CHECK(a_expect == 1.0);
  MacroState<Real> m = macro_project(g, RealVec(g.sqrt_maxwellian()));
  CHECK(m.a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.b.norm() < 1e-12);
  CHECK(std::abs(m.c) < 1e-12);

  // u = xi_1 sqrt(M): b_1 = <xi_1^2 M> = 1, odd moments vanish
  RealVec u1 = g.nodes().col(0).cwiseProduct(g.sqrt_maxwellian());
  MacroState<Real> m1 = macro_project(g, u1);
  CHECK(std::abs(m1.a) < 1e-12);
  CHECK(m1.b[0] == doctest::Approx(oracle::gaussian_moment({2})).epsilon(1e-12));
  CHECK(std::abs(m1.b[1]) < 1e-12);
  CHECK(std::abs(m1.c) < 1e-12);

  MacroState<Real> mz = macro_project(g, RealVec(RealVec::Zero(g.size())));
  CHECK(mz.a == 0.0);
  CHECK(mz.b.norm() == 0.0);
  CHECK(mz.c == 0.0);
}

TEST_CASE("projection operators") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);

  // P is the identity on N: u = (2 + xi_2) sqrt(M)
  RealVec u(g.size());
  for (int i = 0; i < g.size(); ++i) u[i] = (2.0 + g.nodes()(i, 1)) * g.sqrt_maxwellian()[i];
  CHECK(g.norm(RealVec(project(g, u, Projector::P) - u)) < 1e-12);

  // P0(xi_1 sqrt M) = 0
  RealVec u1 = g.nodes().col(0).cwiseProduct(g.sqrt_maxwellian());
  CHECK(g.norm(RealVec(project(g, u1, Projector::P0))) < 1e-12);

  // {I-P} sqrt(M) = 0
  CHECK(g.norm(RealVec(project(g, RealVec(g.sqrt_maxwellian()), Projector::IMinusP))) < 1e-12);
}

TEST_CASE("projection algebra on random slices") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);
  BasisSet basis(g);
  std::mt19937_64 rng(7);
  for (int s = 0; s < 100; ++s) {
    RealVec u = oracle::random_slice(g, rng);
    RealVec pu = project(g, u, Projector::P);
    CHECK(g.norm(RealVec(project(g, pu, Projector::P) - pu)) < 1e-10);

    RealVec micro = project(g, u, Projector::IMinusP);
    for (int c = 0; c < basis.count(); ++c)
      CHECK(std::abs(g.inner(micro, RealVec(basis.orthonormal().col(c)))) < 1e-10);

    RealVec p0 = project(g, u, Projector::P0);
    RealVec p1 = project(g, u, Projector::P1);
    CHECK(g.norm(RealVec(pu - p0 - p1)) < 1e-10);
    CHECK(g.norm(RealVec(project(g, p1, Projector::P0))) < 1e-10);
    CHECK(g.norm(RealVec(project(g, p0, Projector::P1))) < 1e-10);

    // independent least-squares oracle for the same projection
    CHECK(g.norm(RealVec(pu - oracle::project_least_squares(g, u))) < 1e-9);
  }
}

TEST_CASE("macro coefficient round-trip") {
  VelocityGrid g = VelocityGrid::build(2, 8, GridStrategy::GaussHermiteTensor);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int s = 0; s < 20; ++s) {
    double a = nd(rng), c = nd(rng);
    RealVec b(2);
    b << nd(rng), nd(rng);
    RealVec u(g.size());
    for (int i = 0; i < g.size(); ++i) {
      double poly = a + b[0] * g.nodes()(i, 0) + b[1] * g.nodes()(i, 1) +
                    c * g.nodes().row(i).squaredNorm();
      u[i] = poly * g.sqrt_maxwellian()[i];
    }
    MacroState<Real> m = macro_project(g, u);
    CHECK(m.a == doctest::Approx(a).epsilon(1e-10));
    CHECK(m.b[0] == doctest::Approx(b[0]).epsilon(1e-10));
    CHECK(m.b[1] == doctest::Approx(b[1]).epsilon(1e-10));
    CHECK(m.c == doctest::Approx(c).epsilon(1e-10));
  }
}

TEST_CASE("high moments") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);

  // oracle: <(|xi|^2-5) xi_1^2 M> = (3 + 2) - 5 = 0
  const double b_expect = oracle::gaussian_moment({4}) + 2 * oracle::gaussian_moment({2, 2}) -
                          5 * oracle::gaussian_moment({2});
  CHECK(b_expect == 0.0);
  RealVec u1 = g.nodes().col(0).cwiseProduct(g.sqrt_maxwellian());
  HighMoments<Real> h1 = high_moments(g, u1);
  CHECK(std::abs(h1.B[0]) < 1e-10);

  // A_12(xi_1 xi_2 sqrt M) = <xi_1^2 xi_2^2 M> = 1
  RealVec u12(g.size());
  for (int i = 0; i < g.size(); ++i)
    u12[i] = g.nodes()(i, 0) * g.nodes()(i, 1) * g.sqrt_maxwellian()[i];
  HighMoments<Real> h12 = high_moments(g, u12);
  CHECK(h12.A(0, 1) == doctest::Approx(oracle::gaussian_moment({2, 2})).epsilon(1e-12));
  CHECK(h12.A(0, 1) == doctest::Approx(h12.A(1, 0)).epsilon(1e-14));

  HighMoments<Real> hz = high_moments(g, RealVec(RealVec::Zero(g.size())));
  CHECK(hz.A.norm() == 0.0);
  CHECK(hz.B.norm() == 0.0);
}

TEST_CASE("weighted norms") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);
  RealVec sm = g.sqrt_maxwellian();
  CHECK(weighted_norm(g, sm, 0) == doctest::Approx(1.0).epsilon(1e-12));
  // power 2: (<(1+|xi|^2) M>)^(1/2) = 2 in three dimensions
  CHECK(weighted_norm(g, sm, 2) == doctest::Approx(2.0).epsilon(1e-12));
  std::mt19937_64 rng(5);
  RealVec u = oracle::random_slice(g, rng);
  CHECK(weighted_norm(g, RealVec(2.0 * u), 1) ==
        doctest::Approx(2.0 * weighted_norm(g, u, 1)).epsilon(1e-13));
  CHECK_THROWS_AS(weighted_norm(g, u, 3), GridError);
}

TEST_CASE("xi derivative") {
  // spectral on the Hermite grid: d/dxi sqrt(M) = -(xi/2) sqrt(M)
  VelocityGrid g = VelocityGrid::build(1, 16, GridStrategy::GaussHermiteTensor);
  RealVec d = g.xi_derivative(RealVec(g.sqrt_maxwellian()), 0);
  RealVec expect = (-0.5 * g.nodes().col(0)).cwiseProduct(g.sqrt_maxwellian());
  CHECK(g.norm(RealVec(d - expect)) < 1e-10);

  // uniform grid: second-order centered differences
  VelocityGrid gu = VelocityGrid::build(1, 256, GridStrategy::UniformTruncated);
  RealVec du = gu.xi_derivative(RealVec(gu.sqrt_maxwellian()), 0);
  RealVec expu = (-0.5 * gu.nodes().col(0)).cwiseProduct(gu.sqrt_maxwellian());
  CHECK(gu.norm(RealVec(du - expu)) < 1e-3);
}

TEST_CASE("grid description round-trips the strategy") {
  VelocityGrid g = VelocityGrid::build(2, 6, GridStrategy::UniformTruncated);
  CHECK(g.describe() == "dim=2 order=6 strategy=uniform_truncated");
  CHECK(grid_strategy_from_string("uniform_truncated") == GridStrategy::UniformTruncated);
  CHECK(grid_strategy_from_string(to_string(GridStrategy::GaussHermiteTensor)) ==
        GridStrategy::GaussHermiteTensor);
  CHECK_THROWS_AS(grid_strategy_from_string("hexagonal"), GridError);
}
