#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vpblab/mode_dynamics.hpp"

using namespace vpblab;

namespace {

RealVec kvec(int dim, double k1) {
  RealVec k = RealVec::Zero(dim);
  k[0] = k1;
  return k;
}

}  // namespace

TEST_CASE("mode operator basics") {
  VelocityGrid g = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::bgk(g);
  BasisSet basis(g);

  // at k = 0 the generator annihilates the macroscopic modes
  ModeOperator op0(kvec(3, 0.0), b);
  for (int c = 0; c < basis.count(); ++c) {
    ComplexVec e = basis.orthonormal().col(c).cast<Complex>();
    CHECK(g.norm(ComplexVec(op0.apply(e))) < 1e-12);
  }

  ModeOperator op(kvec(3, 1.5), b);
  std::mt19937_64 rng(3);
  ComplexVec u = oracle::random_complex_slice(g, rng);
  // linearity
  ComplexVec lhs = op.apply(ComplexVec(Complex(2.0, 1.0) * u));
  ComplexVec rhs = Complex(2.0, 1.0) * op.apply(u);
  CHECK(g.norm(ComplexVec(lhs - rhs)) < 1e-12 * g.norm(rhs));
  // streaming part is skew-Hermitian
  Complex q = g.inner(ComplexVec(op.apply_streaming(u)), u);
  CHECK(std::abs(q.real()) < 1e-12 * std::abs(q.imag() + 1.0));
}

TEST_CASE("step guards and conservation at k = 0") {
  VelocityGrid g = VelocityGrid::build(1, 16, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::bgk(g);
  ModeOperator op(kvec(1, 0.0), b);

  // macroscopic state at k = 0 stays frozen (streaming and field vanish,
  // L kills the kernel)
  ComplexVec u0(g.size());
  for (int i = 0; i < g.size(); ++i)
    u0[i] = Complex(1.0 + 0.5 * g.nodes()(i, 0), 0.25) * g.sqrt_maxwellian()[i];
  u0 = b.basis().project(u0);
  ModeState s{u0, 0.0, op.k()};
  for (int n = 0; n < 50; ++n) s = step(op, s, op.stability_dt());
  CHECK(g.norm(ComplexVec(s.u - u0)) < 1e-12 * g.norm(u0));

  // zero stays zero
  ModeState z{ComplexVec::Zero(g.size()), 0.0, op.k()};
  z = step(op, z, op.stability_dt());
  CHECK(g.norm(z.u) == 0.0);

  // dt guard
  CHECK_THROWS_AS(step(op, s, 10.0 * op.stability_dt()), ModeError);

  // non-microscopic source rejected with the measured norm in the message
  ComplexVec h = g.sqrt_maxwellian().cast<Complex>();
  CHECK_THROWS_WITH_AS(step(op, s, op.stability_dt(), &h), doctest::Contains("||P h||"),
                       ModeError);
}

TEST_CASE("free energy hand value") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);
  EnergyFunctionalParams p;
  p.kappa1 = 3.7;  // arbitrary; the surviving term does not carry kappa1

  // u = (1 + i xi_1) sqrt(M), k = e_1: only (b | ik (a+nc)/(1+|k|^2))
  // survives and equals 1/2
  ComplexVec u(g.size());
  for (int i = 0; i < g.size(); ++i)
    u[i] = Complex(1.0, g.nodes()(i, 0)) * g.sqrt_maxwellian()[i];
  ModeState s{u, 0.0, kvec(3, 1.0)};
  CHECK(free_energy(g, s, p) == doctest::Approx(0.5).epsilon(1e-12));

  // quadrature oracle for the surviving pairing: b1 = i <xi_1^2 M> = i,
  // a + 3c = <M> = 1, factor k/(1+|k|^2) = 1/2
  MacroState<Complex> m = macro_project(g, u);
  Complex third = m.b[0] * std::conj(Complex(0, 1) * 0.5 * m.density(3));
  CHECK(third.real() == doctest::Approx(0.5).epsilon(1e-12));

  ModeState zero{ComplexVec::Zero(g.size()), 0.0, kvec(3, 1.0)};
  CHECK(free_energy(g, zero, p) == 0.0);

  // |E_free| bounded by a moderate multiple of ||u||^2
  std::mt19937_64 rng(5);
  for (int t = 0; t < 25; ++t) {
    ComplexVec v = oracle::random_complex_slice(g, rng);
    ModeState sv{v, 0.0, kvec(3, 0.7)};
    CHECK(std::abs(free_energy(g, sv, p)) <=
          20.0 * (1.0 + p.kappa1) * std::pow(g.norm(v), 2));
  }
}

TEST_CASE("total energy") {
  VelocityGrid g = VelocityGrid::build(3, 8, GridStrategy::GaussHermiteTensor);
  EnergyFunctionalParams p;  // kappa2 = 0

  ModeState s{g.sqrt_maxwellian().cast<Complex>(), 0.0, kvec(3, 1.0)};
  CHECK(total_energy(g, s, p) == doctest::Approx(2.0).epsilon(1e-12));

  std::mt19937_64 rng(7);
  ComplexVec u = oracle::random_complex_slice(g, rng);
  ComplexVec micro = project(g, u, Projector::IMinusP);
  ModeState sm{micro, 0.0, kvec(3, 2.0)};
  CHECK(total_energy(g, sm, p) ==
        doctest::Approx(std::pow(g.norm(micro), 2)).epsilon(1e-10));

  // quadratic scaling
  ModeState s2{Complex(2.0, 0.0) * micro, 0.0, kvec(3, 2.0)};
  CHECK(total_energy(g, s2, p) == doctest::Approx(4.0 * total_energy(g, sm, p)).epsilon(1e-12));

  // whole-space k = 0 with nonzero mean is rejected
  ModeState s0{g.sqrt_maxwellian().cast<Complex>(), 0.0, kvec(3, 0.0)};
  CHECK_THROWS_AS(total_energy(g, s0, p), ModeError);
}

TEST_CASE("generator satisfies the discrete moment identities") {
  VelocityGrid g = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::bgk(g);
  const RealVec k = kvec(3, 1.3);
  ModeOperator op(k, b);
  std::mt19937_64 rng(11);
  const Complex I(0, 1);

  for (int s = 0; s < 10; ++s) {
    ComplexVec u = oracle::random_complex_slice(g, rng);
    ComplexVec du = op.apply(u);

    // continuity: d/dt(a+nc) + i k.b = 0
    MacroState<Complex> m = macro_project(g, u);
    MacroState<Complex> md = macro_project(g, du);
    Complex res = md.density(3) + I * k[0] * m.b[0];
    CHECK(std::abs(res) < 1e-10 * g.norm(u));

    // A/B moment balance with R = -i xi.k z + L z:
    //   d/dt [A_jm(z) + 2c delta_jm] + i k_j b_m + i k_m b_j = A_jm(R)
    //   d/dt B_j(z) + 2(n+2) i k_j c = B_j(R)
    // (the 2(n+2) is forced by <|xi|^4 xi_j^2> - (n+2)<|xi|^2 xi_j^2>)
    ComplexVec z = project(g, u, Projector::IMinusP);
    ComplexVec dz = project(g, du, Projector::IMinusP);
    ComplexVec R = b.apply_L(z);
    for (int i = 0; i < g.size(); ++i)
      R[i] -= I * (g.nodes().row(i).dot(k)) * z[i];
    HighMoments<Complex> hz = high_moments(g, dz);
    HighMoments<Complex> hr = high_moments(g, R);
    for (int j = 0; j < 3; ++j) {
      for (int mm = 0; mm < 3; ++mm) {
        Complex lhs = hz.A(j, mm) + I * k[j] * m.b[mm] + I * k[mm] * m.b[j] +
                      (j == mm ? Complex(2.0) * md.c : Complex(0.0));
        // diagonal entries carry the 2c term of the balance law
        CHECK(std::abs(lhs - hr.A(j, mm)) < 1e-9 * g.norm(u));
      }
      Complex lhsb = hz.B[j] + 2.0 * (3 + 2) * I * k[j] * m.c;
      CHECK(std::abs(lhsb - hr.B[j]) < 1e-9 * g.norm(u));
    }
  }
}

TEST_CASE("calibration certifies a positive decay constant") {
  VelocityGrid g = VelocityGrid::build(1, 16, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::bgk(g);
  std::vector<RealVec> ks = {kvec(1, 0.1), kvec(1, 1.0), kvec(1, 10.0)};
  EnergyFunctionalParams p = calibrate_functional(b, g, ks, 3, 99);
  CHECK(p.lambda > 0);
  CHECK(p.kappa1 >= 1.0);
  CHECK(p.kappa2 > 0);
  CHECK(p.equiv_lo > 0);
  CHECK(p.equiv_hi >= p.equiv_lo);

  // equivalence holds on fresh random states with a little slack
  std::mt19937_64 rng(123);
  for (const auto& k : ks)
    for (int s = 0; s < 34; ++s) {
      ComplexVec u = oracle::random_complex_slice(g, rng);
      ModeState st{u, 0.0, k};
      const double base =
          std::pow(g.norm(u), 2) +
          std::norm(mode_density(g, u)) / k.squaredNorm();
      const double e = total_energy(g, st, p);
      CHECK(e >= 0.5 * p.equiv_lo * base);
      CHECK(e <= 2.0 * p.equiv_hi * base);
    }

  // kappa2 = 0 degenerates to the base quadratic form
  EnergyFunctionalParams p0;
  ComplexVec u = oracle::random_complex_slice(g, rng);
  ModeState st{u, 0.0, kvec(1, 2.0)};
  const double base =
      std::pow(g.norm(u), 2) + std::norm(mode_density(g, u)) / 4.0;
  CHECK(total_energy(g, st, p0) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("lyapunov audit margins") {
  VelocityGrid g = VelocityGrid::build(1, 16, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::bgk(g);
  std::vector<RealVec> ks = {kvec(1, 0.5), kvec(1, 2.0)};
  EnergyFunctionalParams p = calibrate_functional(b, g, ks, 3, 7);

  std::mt19937_64 rng(17);
  for (const auto& k : ks) {
    ModeOperator op(k, b);
    const double dt = op.stability_dt();

    // h = 0: all margins hold
    ModeTrajectory traj = evolve_mode(op, oracle::random_complex_slice(g, rng), 3.0, dt);
    LyapunovReport rep = lyapunov_audit(b, traj, p);
    CHECK(rep.worst_free_margin >= -1e-6);
    CHECK(rep.worst_l2_margin >= -1e-6);
    CHECK(rep.worst_combined_margin >= -1e-6);

    // microscopic source: right sides use ||nu^(-1/2){I-P}h||^2
    ComplexVec h = oracle::random_complex_slice(g, rng);
    h -= b.basis().project(h);
    ModeSource src = [&h](double) { return h; };
    ModeTrajectory tsrc = evolve_mode(op, oracle::random_complex_slice(g, rng), 3.0, dt, &src);
    LyapunovReport rsrc = lyapunov_audit(b, tsrc, p);
    CHECK(rsrc.worst_free_margin >= -1e-6);
    CHECK(rsrc.worst_l2_margin >= -1e-6);
    CHECK(rsrc.worst_combined_margin >= -1e-6);

    // energy decays monotonically without source
    for (size_t n = 0; n + 1 < traj.states.size(); ++n) {
      ModeState s0{traj.states[n], traj.times[n], k};
      ModeState s1{traj.states[n + 1], traj.times[n + 1], k};
      CHECK(total_energy(g, s1, p) <= total_energy(g, s0, p) * (1.0 + 1e-12));
    }

    // Gronwall consequence, pointwise in t
    const double sk = k.squaredNorm() / (1.0 + k.squaredNorm());
    ModeState s0{traj.states[0], traj.times[0], k};
    const double e0 = total_energy(g, s0, p);
    for (size_t n = 1; n < traj.states.size(); ++n) {
      ModeState s1{traj.states[n], traj.times[n], k};
      CHECK(total_energy(g, s1, p) <=
            e0 * std::exp(-p.lambda * sk * traj.times[n]) + 1e-6 * e0);
    }
  }

  // the zero trajectory audits to exactly zero margins
  ModeOperator op(ks[0], b);
  ModeTrajectory zt = evolve_mode(op, ComplexVec(ComplexVec::Zero(g.size())), 1.0,
                                  op.stability_dt());
  LyapunovReport zr = lyapunov_audit(b, zt, p);
  CHECK(zr.worst_free_margin == 0.0);
  CHECK(zr.worst_l2_margin == 0.0);
  CHECK(zr.worst_combined_margin == 0.0);
}

TEST_CASE("spectrum diagnostics") {
  VelocityGrid g = VelocityGrid::build(1, 16, GridStrategy::GaussHermiteTensor);
  CollisionBackend b = CollisionBackend::bgk(g);

  for (double kv : {0.5, 1.0, 4.0}) {
    ModeOperator op(kvec(1, kv), b);
    auto ev = spectrum(op);
    CHECK(ev.front().real() <= 1e-8);  // sorted by descending real part

    // dissipativity oracle: Re <Op u, u> <= 0 on random states
    std::mt19937_64 rng(23);
    for (int s = 0; s < 10; ++s) {
      ComplexVec u = oracle::random_complex_slice(g, rng);
      CHECK(g.inner(ComplexVec(op.apply(u)), u).real() <= 1e-10);
    }
  }

  // k = 0: the kernel contains the n + 2 macroscopic modes
  ModeOperator op0(kvec(1, 0.0), b);
  auto ev0 = spectrum(op0);
  int zeros = 0;
  for (auto e : ev0)
    if (std::abs(e) < 1e-10) ++zeros;
  CHECK(zeros >= g.dim() + 2);

  // the multiplication part alone sits on the negative real axis
  CHECK(b.nu().minCoeff() > 0);
  Eigen::MatrixXcd diag = (-b.nu()).cast<Complex>().asDiagonal();
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(diag, false);
  for (int i = 0; i < diag.rows(); ++i) {
    CHECK(es.eigenvalues()[i].real() < 0);
    CHECK(std::abs(es.eigenvalues()[i].imag()) < 1e-14);
  }
}
