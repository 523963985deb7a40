#include <doctest.h>

#include "vpblab/stationary.hpp"

using namespace vpblab;

TEST_CASE("uniform background gives the trivial profile") {
  BackgroundSpec bg;
  bg.eps = 0.0;
  StationaryConfig cfg;
  cfg.points = 200;
  StationaryProfile p = solve_stationary(bg, cfg);
  CHECK(p.phi.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.residual < cfg.tol);
}

TEST_CASE("linear-regime scaling of the stationary profile") {
  StationaryConfig cfg;
  cfg.points = 600;
  for (auto geometry : {StationaryGeometry::Radial3D, StationaryGeometry::Torus1D}) {
    cfg.geometry = geometry;
    BackgroundSpec bg;
    bg.eps = 1e-3;
    bg.center = geometry == StationaryGeometry::Radial3D ? 2.0 : 3.0;
    StationaryProfile full = solve_stationary(bg, cfg);
    BackgroundSpec half = bg;
    half.eps = 5e-4;
    StationaryProfile halfp = solve_stationary(half, cfg);
    const double ratio = full.phi.cwiseAbs().maxCoeff() / halfp.phi.cwiseAbs().maxCoeff();
    CHECK(std::abs(ratio - 2.0) < 0.2);  // ||phi|| ~ ||rho - 1|| in the small ball
    CHECK(full.residual <= cfg.tol);
  }
}

TEST_CASE("newton converges quadratically") {
  BackgroundSpec bg;
  bg.eps = 0.05;  // large enough that several Newton steps are visible
  StationaryConfig cfg;
  cfg.points = 400;
  StationaryProfile p = solve_stationary(bg, cfg);
  REQUIRE(p.newton_history.size() >= 3);
  // once below 1e-2, each step roughly squares the residual
  for (size_t i = 0; i + 1 < p.newton_history.size(); ++i) {
    const double r0 = p.newton_history[i], r1 = p.newton_history[i + 1];
    if (r0 < 1e-2 && r1 > 1e-14)
      CHECK(r1 <= 50.0 * r0 * r0);
  }
}

TEST_CASE("uniqueness in the small ball: two starts agree") {
  BackgroundSpec bg;
  bg.eps = 2e-3;
  StationaryConfig cfg;
  cfg.points = 400;
  StationaryProfile a = solve_stationary(bg, cfg);

  // second start: the linearized solution, i.e. one Newton step from a
  // deliberately perturbed state
  RealVec guess = 1.25 * a.phi;
  for (int i = 0; i < cfg.points; ++i) guess[i] += 1e-4 * std::sin(0.37 * i);
  StationaryProfile b = solve_stationary(bg, cfg, &guess);
  CHECK((a.phi - b.phi).cwiseAbs().maxCoeff() < 1e-9);

  // grid refinement changes the profile only at the discretization order
  StationaryConfig fine = cfg;
  fine.points = 800;
  StationaryProfile c = solve_stationary(bg, fine);
  double worst = 0;
  for (int i = 0; i < cfg.points; ++i)
    worst = std::max(worst, std::abs(a.phi[i] - c.phi[2 * i]));
  CHECK(worst < 2e-2 * c.phi.cwiseAbs().maxCoeff());
}

TEST_CASE("stationary guards") {
  BackgroundSpec big;
  big.eps = 0.5;
  StationaryConfig cfg;
  CHECK_THROWS_AS(solve_stationary(big, cfg), StationaryError);
}

TEST_CASE("weighted sup norm") {
  const int M = 400;
  RealVec nodes(M), g(M);
  for (int i = 0; i < M; ++i) nodes[i] = i * 0.02;

  g.setZero();
  CHECK(weighted_sup_norm(nodes, g, 2, 1.5) == 0.0);

  // g = (1 + x)^(-theta): the weight cancels the decay of the value term and
  // the closed-form derivatives bound the rest
  const double theta = 1.25;
  for (int i = 0; i < M; ++i) g[i] = std::pow(1.0 + nodes[i], -theta);
  const double n0 = weighted_sup_norm(nodes, g, 0, theta);
  CHECK(n0 == doctest::Approx(1.0).epsilon(1e-6));
  const double n1 = weighted_sup_norm(nodes, g, 1, theta);
  // |g'| = theta (1+x)^(-theta-1): weighted sup of value+derivative at x = 0
  CHECK(n1 == doctest::Approx(1.0 + theta).epsilon(1e-3));

  // monotone in theta for a bump away from the origin
  RealVec bump(M);
  for (int i = 0; i < M; ++i)
    bump[i] = std::exp(-std::pow(nodes[i] - 5.0, 2));
  CHECK(weighted_sup_norm(nodes, bump, 0, 2.0) > weighted_sup_norm(nodes, bump, 0, 1.0));

  CHECK_THROWS_AS(weighted_sup_norm(nodes, g, 3, 1.0), StationaryError);
}
