#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vpblab/collision.hpp"

using namespace vpblab;

namespace {

double rayleigh(const CollisionBackend& b, const RealVec& u) {
  const VelocityGrid& g = b.grid();
  RealVec micro = project(g, u, Projector::IMinusP);
  double num = -g.inner(u, RealVec(b.apply_L(u)));
  double den = 0;
  for (int i = 0; i < g.size(); ++i)
    den += g.weights()[i] * b.nu()[i] * micro[i] * micro[i];
  return num / den;
}

}  // namespace

TEST_CASE("collision frequency against the radial oracle") {
  // nu(0) by the product quadrature on a fine grid vs the 1D radial reduction
  VelocityGrid g = VelocityGrid::build(3, 64, GridStrategy::GaussHermiteTensor);
  double nu0 = 0;
  for (int j = 0; j < g.size(); ++j)
    nu0 += g.weights()[j] * g.maxwellian()[j] * g.nodes().row(j).norm();
  nu0 *= 2.0 * std::numbers::pi;
  const double ref = oracle::nu_at_zero();
  CHECK(std::abs(nu0 / ref - 1.0) < 1e-4);
  CHECK(ref == doctest::Approx(oracle::nu_closed(0.0)).epsilon(1e-10));
}

TEST_CASE("collision frequency on the grid") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);
  RealVec nu = collision_frequency(g, 6);

  // nu / w bounded above and below; the closed form gives [2 pi, ~10.03]
  RealVec ratio = nu.cwiseQuotient(g.velocity_weight());
  CHECK(ratio.minCoeff() > 6.0);
  CHECK(ratio.maxCoeff() < 10.5);

  // doubling the angular order leaves nu unchanged (the polar rule is exact
  // for |v.omega| once the axis is aligned)
  RealVec nu2 = collision_frequency(g, 12);
  CHECK((nu2 - nu).cwiseAbs().maxCoeff() < 1e-6 * nu.maxCoeff());

  // monotone along the positive xi_1 ray (central indices elsewhere)
  const int c = g.order() / 2;
  double prev = -1;
  for (int i1 = c; i1 < g.order(); ++i1) {
    std::vector<int> idx = {i1, c, c};
    double v = nu[g.flat_index(idx)];
    CHECK(v > prev);
    prev = v;
  }

  VelocityGrid g1 = VelocityGrid::build(1, 8, GridStrategy::GaussHermiteTensor);
  CHECK_THROWS_AS(collision_frequency(g1, 6), CollisionError);
  CHECK_THROWS_AS(collision_frequency(g, 4), CollisionError);
}

TEST_CASE("bgk surrogate structure") {
  VelocityGrid g = VelocityGrid::build(2, 8, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::bgk(g);

  // kernel contains N exactly
  RealVec u1 = g.nodes().col(0).cwiseProduct(g.sqrt_maxwellian());
  CHECK(g.norm(RealVec(b.apply_L(u1))) < 1e-13);
  CHECK(b.diagnostics().kernel_residual < 1e-12);

  std::mt19937_64 rng(11);
  for (int s = 0; s < 20; ++s) {
    RealVec u = oracle::random_slice(g, rng);
    RealVec v = oracle::random_slice(g, rng);
    // -<u, L_s u> = ||nu^(1/2) {I-P} u||^2 exactly
    RealVec micro = u - b.basis().project(u);
    double expect = 0;
    for (int i = 0; i < g.size(); ++i)
      expect += g.weights()[i] * b.nu()[i] * micro[i] * micro[i];
    CHECK(-g.inner(u, RealVec(b.apply_L(u))) ==
          doctest::Approx(expect).epsilon(1e-12));
    // self-adjointness to rounding
    double asym = g.inner(RealVec(b.apply_L(u)), v) - g.inner(u, RealVec(b.apply_L(v)));
    CHECK(std::abs(asym) <= 1e-12 * g.norm(u) * g.norm(v) * b.nu().maxCoeff());
  }

  CHECK(b.estimate_coercivity(16) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hard-sphere backend structure") {
  VelocityGrid g = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::hard_sphere(g);

  // collision invariants annihilated far below the 1e-3 gate
  BasisSet basis(g);
  for (int c = 0; c < basis.count(); ++c) {
    RealVec e = basis.orthonormal().col(c);
    CHECK(g.norm(RealVec(b.apply_L(e))) < 1e-3);
  }
  CHECK(b.diagnostics().kernel_residual < 1e-10);

  // zero in, zero out
  CHECK(g.norm(RealVec(b.apply_L(RealVec(RealVec::Zero(g.size()))))) == 0.0);

  // self-adjoint and non-positive on random slices
  std::mt19937_64 rng(3);
  for (int s = 0; s < 100; ++s) {
    RealVec u = oracle::random_slice(g, rng);
    RealVec v = oracle::random_slice(g, rng);
    double asym = g.inner(RealVec(b.apply_L(u)), v) - g.inner(u, RealVec(b.apply_L(v)));
    CHECK(std::abs(asym) <= 1e-8 * g.norm(u) * g.norm(v));
    CHECK(g.inner(RealVec(b.apply_L(u)), u) <= 1e-10);
  }

  // local coercivity with a positive measured constant
  double lam = b.estimate_coercivity(32);
  CHECK(lam > 0);
  for (int s = 0; s < 20; ++s) {
    RealVec u = oracle::random_slice(g, rng);
    CHECK(rayleigh(b, u) >= lam - 1e-10);
    // Rayleigh quotient is scale invariant
    CHECK(rayleigh(b, RealVec(2.0 * u)) == doctest::Approx(rayleigh(b, u)).epsilon(1e-10));
  }

  // nu over w bracket and diagnostics populated
  CHECK(b.diagnostics().nu_over_w_min > 6.0);
  CHECK(b.diagnostics().nu_over_w_max < 10.5);
  CHECK(b.summary().find("coercivity") != std::string::npos);

  CHECK_THROWS_AS(b.estimate_coercivity(5), CollisionError);
}

TEST_CASE("hard-sphere coercivity is stable under refinement") {
  VelocityGrid g6 = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  VelocityGrid g8 = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);
  CollisionBackend b6 = CollisionBackend::hard_sphere(g6);
  CollisionBackend b8 = CollisionBackend::hard_sphere(g8);
  const double l6 = b6.estimate_coercivity(16);
  const double l8 = b8.estimate_coercivity(16);
  CHECK(l6 > 0);
  CHECK(l8 > 0);
  CHECK(std::abs(l6 - l8) < 0.25 * l6);
}

TEST_CASE("hard-sphere guards") {
  VelocityGrid g1 = VelocityGrid::build(1, 8, GridStrategy::GaussHermiteTensor);
  CHECK_THROWS_AS(CollisionBackend::hard_sphere(g1), CollisionError);

  VelocityGrid gu = VelocityGrid::build(3, 6, GridStrategy::UniformTruncated);
  CHECK_THROWS_AS(CollisionBackend::hard_sphere(gu), CollisionError);

  VelocityGrid g = VelocityGrid::build(3, 30, GridStrategy::GaussHermiteTensor);
  HardSphereOptions opts;
  CHECK_THROWS_AS(CollisionBackend::hard_sphere(g, opts), CollisionError);
}

TEST_CASE("pointwise assembly reports its symmetrization defect") {
  VelocityGrid g = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);

  // at desk orders the literal three-term quadrature violates the 1e-3 gate,
  // which the assembly reports as a failure
  HardSphereOptions strict;
  strict.form = HardSphereForm::PointwiseSpectral;
  CHECK_THROWS_WITH_AS(CollisionBackend::hard_sphere(g, strict),
                       doctest::Contains("symmetrization defect"), CollisionError);

  HardSphereOptions loose = strict;
  loose.symmetry_tolerance = 1.0;
  CollisionBackend bp = CollisionBackend::hard_sphere(g, loose);
  CHECK(bp.diagnostics().symmetrization_defect > 1e-3);
  CHECK(bp.diagnostics().symmetrization_defect < 0.5);

  HardSphereOptions multi = loose;
  multi.form = HardSphereForm::PointwiseMultilinear;
  CollisionBackend bm = CollisionBackend::hard_sphere(g, multi);
  CHECK(bm.diagnostics().dropped_weight > 0);  // conservation defect surfaced

  // the symmetric parts of the pointwise and variational operators agree on
  // smooth microscopic data to quadrature accuracy
  CollisionBackend bv = CollisionBackend::hard_sphere(g);
  RealVec smooth(g.size());
  for (int i = 0; i < g.size(); ++i)
    smooth[i] = (g.nodes()(i, 0) * g.nodes()(i, 1)) * g.sqrt_maxwellian()[i];
  const double qp = -g.inner(smooth, RealVec(bp.apply_L(smooth)));
  const double qv = -g.inner(smooth, RealVec(bv.apply_L(smooth)));
  CHECK(qp > 0);
  CHECK(qv > 0);
  CHECK(std::abs(qp - qv) < 0.35 * qv);
}

TEST_CASE("gamma bilinear form") {
  VelocityGrid g = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  std::mt19937_64 rng(17);

  for (auto kind : {CollisionKind::BgkSurrogate, CollisionKind::HardSphere}) {
    CollisionBackend b = kind == CollisionKind::HardSphere
                             ? CollisionBackend::hard_sphere(g)
                             : CollisionBackend::bgk(g);
    CAPTURE(static_cast<int>(kind));

    RealVec u = oracle::random_slice(g, rng);
    RealVec v = oracle::random_slice(g, rng);
    RealVec up = oracle::random_slice(g, rng);

    // Gamma(u, 0) = 0
    CHECK(g.norm(RealVec(b.apply_gamma(u, RealVec(RealVec::Zero(g.size()))))) < 1e-14);

    // bilinearity to rounding
    RealVec lhs = b.apply_gamma(RealVec(2.0 * u + 3.0 * up), v);
    RealVec rhs = 2.0 * b.apply_gamma(u, v) + 3.0 * b.apply_gamma(up, v);
    CHECK(g.norm(RealVec(lhs - rhs)) <= 1e-10 * (g.norm(lhs) + 1.0));

    // microscopic range: P Gamma = 0
    RealVec gam = b.apply_gamma(u, v);
    CHECK(g.norm(RealVec(project(g, gam, Projector::P))) <= 1e-6 * std::max(1.0, g.norm(gam)));

    // mass conservation, <Gamma(u,v), sqrt(M)> = 0
    CHECK(std::abs(g.inner(gam, RealVec(g.sqrt_maxwellian()))) <=
          1e-6 * std::max(1.0, g.norm(gam)));
  }
}

TEST_CASE("hard-sphere gamma conserves all invariants to rounding") {
  VelocityGrid g = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::hard_sphere(g);
  BasisSet basis(g);
  std::mt19937_64 rng(23);
  for (int s = 0; s < 5; ++s) {
    RealVec u = oracle::random_slice(g, rng);
    RealVec v = oracle::random_slice(g, rng);
    u /= g.norm(u);
    v /= g.norm(v);
    RealVec gam = b.apply_gamma(u, v);
    for (int c = 0; c < basis.count(); ++c)
      CHECK(std::abs(g.inner(gam, RealVec(basis.orthonormal().col(c)))) < 1e-8);
  }
}

TEST_CASE("gamma weighted bound with a measured constant") {
  std::mt19937_64 rng(29);
  double c_order6 = 0, c_order8 = 0;
  for (int order : {6, 8}) {
    VelocityGrid g = VelocityGrid::build(3, order, GridStrategy::GaussHermiteTensor);
    CollisionBackend b = CollisionBackend::hard_sphere(g);
    const int pairs = order == 6 ? 50 : 8;
    double cmax = 0;
    for (int s = 0; s < pairs; ++s) {
      RealVec u = oracle::random_slice(g, rng);
      RealVec v = oracle::random_slice(g, rng);
      RealVec gam = b.apply_gamma(u, v);
      const double lhs = weighted_norm(g, gam, -1, b.nu());
      const double rhs = weighted_norm(g, u, 1, b.nu()) * g.norm(v) +
                         g.norm(u) * weighted_norm(g, v, 1, b.nu());
      CHECK(std::isfinite(lhs / rhs));
      cmax = std::max(cmax, lhs / rhs);
    }
    (order == 6 ? c_order6 : c_order8) = cmax;
  }
  CHECK(c_order6 > 0);
  CHECK(c_order8 > 0);
  // measured constant, stable under grid refinement (reported, not asserted
  // against any closed-form value)
  CHECK(c_order8 < 4.0 * c_order6);
  CHECK(c_order6 < 4.0 * c_order8);
  MESSAGE("measured gamma bound constants: order 6 -> ", c_order6, ", order 8 -> ", c_order8);
}

TEST_CASE("gamma quadratic scaling") {
  VelocityGrid g = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::hard_sphere(g);
  std::mt19937_64 rng(31);
  RealVec u = oracle::random_slice(g, rng);
  RealVec g1 = b.apply_gamma(u, u);
  RealVec g2 = b.apply_gamma(RealVec(0.5 * u), RealVec(0.5 * u));
  CHECK(g.norm(RealVec(g2 - 0.25 * g1)) < 1e-12 * std::max(1.0, g.norm(g1)));
}
