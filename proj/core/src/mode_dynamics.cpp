#include "vpblab/mode_dynamics.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace vpblab {

namespace {
const Complex kI(0.0, 1.0);

double nu_weighted_micro_norm2(const CollisionBackend& backend, const ComplexVec& h, int power) {
  const VelocityGrid& g = backend.grid();
  ComplexVec micro = h - backend.basis().project(h);
  double acc = 0;
  for (int i = 0; i < g.size(); ++i)
    acc += g.weights()[i] * std::pow(backend.nu()[i], power) * std::norm(micro[i]);
  return acc;
}

// ||P h|| for the microscopic-source precondition.
double macro_norm(const CollisionBackend& backend, const ComplexVec& h) {
  return backend.grid().norm(ComplexVec(backend.basis().project(h)));
}

}  // namespace

ModeOperator::ModeOperator(RealVec k, const CollisionBackend& backend)
    : k_(std::move(k)), backend_(&backend) {
  const VelocityGrid& g = backend.grid();
  if (k_.size() != g.dim()) throw ModeError("wavenumber dimension does not match the grid");
  k2_ = k_.squaredNorm();
  streaming_ = g.nodes() * k_;
  if (k2_ > 0)
    field_dir_ = streaming_.cwiseProduct(g.sqrt_maxwellian());
}

ComplexVec ModeOperator::apply(const ComplexVec& u) const {
  const VelocityGrid& g = grid();
  g.check_slice(u.size());
  ComplexVec out = backend_->apply_L(u);
  out -= kI * streaming_.cast<Complex>().cwiseProduct(u);
  if (k2_ > 0) {
    Complex rho = mode_density(g, u);
    out -= (kI * rho / k2_) * field_dir_.cast<Complex>();
  }
  return out;
}

ComplexVec ModeOperator::apply_streaming(const ComplexVec& u) const {
  return -kI * streaming_.cast<Complex>().cwiseProduct(u);
}

double ModeOperator::stability_dt() const {
  double smax = streaming_.size() ? streaming_.cwiseAbs().maxCoeff() : 0.0;
  return 0.5 / (smax + backend_->nu().maxCoeff());
}

ModeOperator assemble_mode_operator(const RealVec& k, const CollisionBackend& backend,
                                    const VelocityGrid& grid) {
  if (&backend.grid() != &grid) throw ModeError("backend was assembled on a different grid");
  return ModeOperator(k, backend);
}

Complex mode_density(const VelocityGrid& grid, const ComplexVec& u) {
  grid.check_slice(u.size());
  Complex acc{};
  for (int i = 0; i < grid.size(); ++i)
    acc += grid.weights()[i] * grid.sqrt_maxwellian()[i] * u[i];
  return acc;
}

Complex mode_phi(const VelocityGrid& grid, const ModeState& state) {
  const double k2 = state.k.squaredNorm();
  if (k2 == 0) throw ModeError("mode_phi undefined at k = 0");
  return -mode_density(grid, state.u) / k2;
}

namespace {

ModeState rk4(const ModeOperator& op, const ModeState& state, double dt, const ModeSource* src) {
  auto rhs = [&](double t, const ComplexVec& u) {
    ComplexVec r = op.apply(u);
    if (src) r += (*src)(t);
    return r;
  };
  const double t = state.t;
  ComplexVec k1 = rhs(t, state.u);
  ComplexVec k2 = rhs(t + dt / 2, state.u + (dt / 2) * k1);
  ComplexVec k3 = rhs(t + dt / 2, state.u + (dt / 2) * k2);
  ComplexVec k4 = rhs(t + dt, state.u + dt * k3);
  ModeState out;
  out.k = state.k;
  out.t = t + dt;
  out.u = state.u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return out;
}

void check_step(const ModeOperator& op, double dt) {
  if (dt <= 0 || dt > op.stability_dt() * (1 + 1e-12)) {
    std::ostringstream os;
    os << "dt " << dt << " violates the stability guard " << op.stability_dt();
    throw ModeError(os.str());
  }
}

void check_microscopic(const CollisionBackend& backend, const ComplexVec& h) {
  double p = macro_norm(backend, h);
  double scale = backend.grid().norm(h);
  if (p > 1e-8 * (1 + scale)) {
    std::ostringstream os;
    os << "source is not microscopic: ||P h|| = " << p;
    throw ModeError(os.str());
  }
}

}  // namespace

ModeState step(const ModeOperator& op, const ModeState& state, double dt,
               const ComplexVec* source) {
  check_step(op, dt);
  if (!source) return rk4(op, state, dt, nullptr);
  check_microscopic(op.backend(), *source);
  ComplexVec h = *source;
  ModeSource src = [&h](double) { return h; };
  return rk4(op, state, dt, &src);
}

ModeState step(const ModeOperator& op, const ModeState& state, double dt,
               const ModeSource& source) {
  check_step(op, dt);
  check_microscopic(op.backend(), source(state.t));
  return rk4(op, state, dt, &source);
}

ModeTrajectory evolve_mode(const ModeOperator& op, const ComplexVec& u0, double horizon,
                           double dt, const ModeSource* source, int store_every) {
  check_step(op, dt);
  if (source) check_microscopic(op.backend(), (*source)(0.0));
  ModeTrajectory traj;
  traj.k = op.k();
  ModeState s{u0, 0.0, op.k()};
  const int steps = static_cast<int>(std::ceil(horizon / dt - 1e-12));
  auto record = [&](const ModeState& st) {
    traj.times.push_back(st.t);
    traj.states.push_back(st.u);
    traj.source_norm2.push_back(
        source ? nu_weighted_micro_norm2(op.backend(), (*source)(st.t), -1) : 0.0);
  };
  record(s);
  for (int n = 0; n < steps; ++n) {
    s = rk4(op, s, dt, source);
    if ((n + 1) % store_every == 0 || n + 1 == steps) record(s);
  }
  return traj;
}

double free_energy(const VelocityGrid& grid, const ModeState& state,
                   const EnergyFunctionalParams& params) {
  const int n = grid.dim();
  const double k2 = state.k.squaredNorm();
  const double fac = 1.0 / (1.0 + k2);

  ComplexVec micro = project(grid, state.u, Projector::IMinusP);
  MacroState<Complex> m = macro_project(grid, state.u);
  HighMoments<Complex> hm = high_moments(grid, micro);

  // (x | y) = x conj(y)
  Complex efree{};
  for (int mm = 0; mm < n; ++mm) {
    Complex lhs{};
    for (int j = 0; j < n; ++j) lhs += kI * state.k[j] * fac * hm.A(j, mm);
    lhs += 0.5 * kI * state.k[mm] * fac * hm.A(mm, mm);
    efree += params.kappa1 * lhs * std::conj(-m.b[mm]);
  }
  for (int j = 0; j < n; ++j)
    efree += params.kappa1 * hm.B[j] * std::conj(kI * state.k[j] * fac * m.c);
  // c-b compensator: the A pairings certify no |b|^2 dissipation in one
  // dimension (the b content of d/dt A(z) cancels against the c-equation
  // feedback), while this term supplies -sigma |k.b|^2/n through d/dt c.
  // The sigma weight keeps its field feedback (c | a+nc) absorbable at
  // small k, where |c|^2 dissipation is only O(k^2).
  const double sig = k2 / (1.0 + k2);
  for (int mm = 0; mm < n; ++mm)
    efree += params.kappa1 * sig * (kI * state.k[mm] * fac * m.c) * std::conj(-m.b[mm]);
  const Complex dens = m.density(n);
  for (int mm = 0; mm < n; ++mm)
    efree += m.b[mm] * std::conj(kI * state.k[mm] * fac * dens);
  return efree.real();
}

double total_energy(const VelocityGrid& grid, const ModeState& state,
                    const EnergyFunctionalParams& params) {
  const double k2 = state.k.squaredNorm();
  const double n2 = std::pow(grid.norm(state.u), 2);
  const Complex dens = mode_density(grid, state.u);
  double field;
  if (k2 > 0) {
    field = std::norm(dens) / k2;
  } else {
    if (std::norm(dens) > 1e-20 * (1 + n2))
      throw ModeError("total_energy at k = 0 requires a zero-mean state");
    field = 0.0;
  }
  return n2 + field + params.kappa2 * free_energy(grid, state, params);
}

Eigen::MatrixXcd dense_generator(const ModeOperator& op) {
  const VelocityGrid& g = op.grid();
  const int N = g.size();
  if (N > 2500) throw ModeError("dense generator: assembly guard exceeded");
  Eigen::MatrixXcd A = (-op.backend().minus_L_dense()).cast<Complex>();
  RealVec streaming = g.nodes() * op.k();
  for (int i = 0; i < N; ++i) A(i, i) -= kI * streaming[i];
  const double k2 = op.k().squaredNorm();
  if (k2 > 0) {
    ComplexVec col = (-kI / k2) * streaming.cwiseProduct(g.sqrt_maxwellian()).cast<Complex>();
    ComplexVec row = g.weights().cwiseProduct(g.sqrt_maxwellian()).cast<Complex>();
    A.noalias() += col * row.transpose();
  }
  return A;
}

Eigen::MatrixXcd energy_form_matrix(const VelocityGrid& grid, const RealVec& k,
                                    const EnergyFunctionalParams& params) {
  const int N = grid.size();
  const int n = grid.dim();
  const double k2 = k.squaredNorm();
  const double fac = 1.0 / (1.0 + k2);
  const auto& W = grid.weights();
  const auto& sm = grid.sqrt_maxwellian();

  // Re[(p.u) conj(q.u)] = u* H u with H = (conj(q) p^T + conj(p) q^T) / 2
  auto pairing = [&](const ComplexVec& p, const ComplexVec& q) {
    return Eigen::MatrixXcd(0.5 * (q.conjugate() * p.transpose() +
                                   p.conjugate() * q.transpose()));
  };

  // moment functionals as vectors: f(u) = p^T u
  RealVec lrho(N), lc(N);
  Eigen::MatrixXd lb(N, n);
  for (int i = 0; i < N; ++i) {
    const double r2 = grid.nodes().row(i).squaredNorm();
    lrho[i] = W[i] * sm[i];
    lc[i] = W[i] * (r2 - n) / (2.0 * n) * sm[i];
    for (int d = 0; d < n; ++d) lb(i, d) = W[i] * grid.nodes()(i, d) * sm[i];
  }
  // micro projection for the high moments: v -> (I-P)^T v
  BasisSet basis(grid);
  Eigen::MatrixXd Pt = Eigen::MatrixXd::Zero(N, N);
  for (int c = 0; c < basis.count(); ++c) {
    RealVec e = basis.orthonormal().col(c);
    Pt.noalias() += (e.cwiseProduct(W)) * e.transpose();  // P^T
  }
  auto micro_functional = [&](const RealVec& w) { return RealVec(w - Pt * w); };

  std::vector<RealVec> vA(n * n), vB(n);
  for (int j = 0; j < n; ++j) {
    for (int m = 0; m < n; ++m) {
      RealVec w(N);
      for (int i = 0; i < N; ++i)
        w[i] = W[i] * (grid.nodes()(i, j) * grid.nodes()(i, m) - (j == m ? 1.0 : 0.0)) * sm[i];
      vA[j * n + m] = micro_functional(w);
    }
    RealVec w(N);
    for (int i = 0; i < N; ++i)
      w[i] = W[i] * (grid.nodes().row(i).squaredNorm() - (n + 2.0)) * grid.nodes()(i, j) * sm[i];
    vB[j] = micro_functional(w);
  }

  Eigen::MatrixXcd Q = Eigen::MatrixXcd::Zero(N, N);
  for (int i = 0; i < N; ++i) Q(i, i) = W[i];
  if (k2 > 0) Q.noalias() += (1.0 / k2) * pairing(lrho.cast<Complex>(), lrho.cast<Complex>());

  Eigen::MatrixXcd F = Eigen::MatrixXcd::Zero(N, N);
  for (int m = 0; m < n; ++m) {
    ComplexVec lhs = ComplexVec::Zero(N);
    for (int j = 0; j < n; ++j) lhs += kI * k[j] * fac * vA[j * n + m].cast<Complex>();
    lhs += 0.5 * kI * k[m] * fac * vA[m * n + m].cast<Complex>();
    F += params.kappa1 * pairing(lhs, ComplexVec(-lb.col(m).cast<Complex>()));
  }
  for (int j = 0; j < n; ++j)
    F += params.kappa1 *
         pairing(vB[j].cast<Complex>(), ComplexVec(kI * k[j] * fac * lc.cast<Complex>()));
  const double sig = k2 / (1.0 + k2);
  for (int m = 0; m < n; ++m)  // sigma-weighted c-b compensator, cf. free_energy
    F += params.kappa1 * sig * pairing(ComplexVec(kI * k[m] * fac * lc.cast<Complex>()),
                                       ComplexVec(-lb.col(m).cast<Complex>()));
  for (int m = 0; m < n; ++m)
    F += pairing(lb.col(m).cast<Complex>(),
                 ComplexVec(kI * k[m] * fac * lrho.cast<Complex>()));
  Q += params.kappa2 * F;
  return Q;
}

std::vector<Complex> spectrum(const ModeOperator& op) {
  Eigen::MatrixXcd A = dense_generator(op);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, false);
  std::vector<Complex> ev(es.eigenvalues().data(), es.eigenvalues().data() + A.rows());
  std::sort(ev.begin(), ev.end(), [](Complex a, Complex b) { return a.real() > b.real(); });
  return ev;
}

namespace {

// Per-step quantities entering the three audited inequalities.
struct StepQuantities {
  double efree, energy, micro2, nu_micro2, b2c2, dens2, base;
};

StepQuantities step_quantities(const CollisionBackend& backend, const ModeState& s,
                               const EnergyFunctionalParams& params) {
  const VelocityGrid& g = backend.grid();
  StepQuantities q;
  q.efree = free_energy(g, s, params);
  q.energy = total_energy(g, s, params);
  ComplexVec micro = project(g, s.u, Projector::IMinusP);
  q.micro2 = std::pow(g.norm(micro), 2);
  q.nu_micro2 = 0;
  for (int i = 0; i < g.size(); ++i)
    q.nu_micro2 += g.weights()[i] * backend.nu()[i] * std::norm(micro[i]);
  MacroState<Complex> m = macro_project(g, s.u);
  q.b2c2 = m.b.squaredNorm() + std::norm(m.c);
  q.dens2 = std::norm(m.density(g.dim()));
  q.base = std::pow(g.norm(s.u), 2) + (s.k.squaredNorm() > 0 ? q.dens2 / s.k.squaredNorm() : 0.0);
  return q;
}

}  // namespace

LyapunovReport lyapunov_audit(const CollisionBackend& backend, const ModeTrajectory& trajectory,
                              const EnergyFunctionalParams& params) {
  const VelocityGrid& g = backend.grid();
  LyapunovReport rep;
  if (trajectory.states.size() < 2) return rep;
  rep.worst_free_margin = rep.worst_l2_margin = rep.worst_combined_margin =
      std::numeric_limits<double>::infinity();

  const double k2 = trajectory.k.squaredNorm();
  const double sk = k2 / (1.0 + k2);
  ModeState s{trajectory.states.front(), trajectory.times.front(), trajectory.k};
  StepQuantities q0 = step_quantities(backend, s, params);
  const double scale = std::max(1.0, q0.energy);
  const double lam = params.lambda;
  const double C = params.source_c;

  for (size_t n = 0; n + 1 < trajectory.states.size(); ++n) {
    const double dt = trajectory.times[n + 1] - trajectory.times[n];
    ModeState s1{trajectory.states[n + 1], trajectory.times[n + 1], trajectory.k};
    StepQuantities q1 = step_quantities(backend, s1, params);
    const double src = trajectory.source_norm2[n];

    // lem-free: d/dt Re E_free + lam s_k (|b|^2+|c|^2) + lam |a+nc|^2
    //           <= C (||{I-P}u||^2 + ||nu^(-1/2){I-P}h||^2)
    double lhs1 = (q1.efree - q0.efree) / dt + lam * sk * q0.b2c2 + lam * q0.dens2;
    double rhs1 = C * (q0.micro2 + src);
    rep.worst_free_margin = std::min(rep.worst_free_margin, (rhs1 - lhs1) / scale);

    // lem-l2: d/dt (||u||^2 + |a+nc|^2/|k|^2) + lam ||nu^(1/2){I-P}u||^2
    //         <= C ||nu^(-1/2){I-P}h||^2
    double lhs2 = (q1.base - q0.base) / dt + lam * q0.nu_micro2;
    double rhs2 = C * src;
    rep.worst_l2_margin = std::min(rep.worst_l2_margin, (rhs2 - lhs2) / scale);

    // combined, discrete-time: E(t+dt) <= E(t)(1 - lam dt s_k) + C dt src
    double lhs3 = q1.energy;
    double rhs3 = q0.energy * (1.0 - lam * dt * sk) + C * dt * src;
    rep.worst_combined_margin = std::min(rep.worst_combined_margin, (rhs3 - lhs3) / scale);

    q0 = q1;
    ++rep.steps;
  }
  (void)g;
  return rep;
}

namespace {

// Free energy is affine in the search constants: E_free = kappa1 F1 + F2,
// E = base + kappa2 E_free. Calibration stores these per step and sweeps the
// (kappa1, kappa2) grid over scalars instead of re-evolving trajectories.
struct CalibSample {
  double f1, f2, micro2, nu_micro2, b2c2, dens2, base, src;
};

void free_energy_parts(const VelocityGrid& grid, const ModeState& state, double& f1, double& f2) {
  EnergyFunctionalParams unit;  // kappa1 = 1
  unit.kappa1 = 1.0;
  const int n = grid.dim();
  const double fac = 1.0 / (1.0 + state.k.squaredNorm());
  MacroState<Complex> m = macro_project(grid, state.u);
  Complex third{};
  const Complex dens = m.density(n);
  for (int mm = 0; mm < n; ++mm)
    third += m.b[mm] * std::conj(kI * state.k[mm] * fac * dens);
  f2 = third.real();
  f1 = free_energy(grid, state, unit) - f2;
}

CalibSample calib_sample(const CollisionBackend& backend, const ModeState& s, double src) {
  const VelocityGrid& g = backend.grid();
  CalibSample q;
  free_energy_parts(g, s, q.f1, q.f2);
  ComplexVec micro = project(g, s.u, Projector::IMinusP);
  q.micro2 = std::pow(g.norm(micro), 2);
  q.nu_micro2 = 0;
  for (int i = 0; i < g.size(); ++i)
    q.nu_micro2 += g.weights()[i] * backend.nu()[i] * std::norm(micro[i]);
  MacroState<Complex> m = macro_project(g, s.u);
  q.b2c2 = m.b.squaredNorm() + std::norm(m.c);
  q.dens2 = std::norm(m.density(g.dim()));
  q.base = std::pow(g.norm(s.u), 2) + (s.k.squaredNorm() > 0 ? q.dens2 / s.k.squaredNorm() : 0.0);
  q.src = src;
  return q;
}

struct CalibTrajectory {
  double sk = 0, dt = 0;
  bool with_source = false;
  std::vector<CalibSample> samples;
};

}  // namespace

EnergyFunctionalParams calibrate_functional(const CollisionBackend& backend,
                                            const VelocityGrid& grid,
                                            const std::vector<RealVec>& k_samples,
                                            int trajectories, std::uint64_t seed) {
  if (k_samples.empty()) throw ModeError("calibrate_functional needs at least one wavenumber");
  if (trajectories < 1) throw ModeError("calibrate_functional needs at least one trajectory");
  const int N = grid.size();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto random_state = [&]() {
    ComplexVec u(N);
    for (int i = 0; i < N; ++i) u[i] = Complex(nd(rng), nd(rng)) * grid.sqrt_maxwellian()[i];
    return ComplexVec(u / grid.norm(u));
  };
  auto random_micro = [&]() {
    ComplexVec h = random_state();
    h -= backend.basis().project(h);
    return ComplexVec(h / grid.norm(h));
  };

  // Evolve every sample trajectory once; candidates are scored on the stored
  // per-step scalars.
  const double horizon = 2.0;
  std::vector<CalibTrajectory> bank;
  for (const auto& k : k_samples) {
    const double k2 = k.squaredNorm();
    if (k2 == 0) continue;
    ModeOperator op(k, backend);
    const double dt = op.stability_dt();
    for (int s = 0; s < trajectories; ++s) {
      for (int with_src = 0; with_src <= 1; ++with_src) {
        ComplexVec hslice = random_micro();
        ModeSource src = [&hslice](double) { return hslice; };
        ModeTrajectory traj =
            evolve_mode(op, random_state(), horizon, dt, with_src ? &src : nullptr, 1);
        CalibTrajectory ct;
        ct.sk = k2 / (1.0 + k2);
        ct.dt = dt;
        ct.with_source = with_src != 0;
        ct.samples.reserve(traj.states.size());
        for (size_t n = 0; n < traj.states.size(); ++n)
          ct.samples.push_back(calib_sample(
              backend, ModeState{traj.states[n], traj.times[n], k}, traj.source_norm2[n]));
        bank.push_back(std::move(ct));
      }
    }
  }

  struct Candidate {
    double kappa1 = 0, kappa2 = 0, lambda = 0, lam_l2 = 0, equiv_lo = 0, equiv_hi = 0;
  };
  std::vector<Candidate> candidates;

  for (int e1 = 0; e1 <= 5; ++e1) {
    const double kappa1 = std::pow(2.0, e1);
    for (int e2 = 2; e2 <= 14; ++e2) {
      const double kappa2 = std::pow(2.0, -e2);
      auto efree = [&](const CalibSample& q) { return kappa1 * q.f1 + q.f2; };
      auto energy = [&](const CalibSample& q) { return q.base + kappa2 * efree(q); };

      // equivalence with the base quadratic form
      double lo = std::numeric_limits<double>::infinity(), hi = 0;
      for (const auto& ct : bank)
        for (const auto& q : ct.samples) {
          if (q.base <= 0) continue;
          const double r = energy(q) / q.base;
          lo = std::min(lo, r);
          hi = std::max(hi, r);
        }
      if (!(lo > 0.2)) continue;

      // decay certification on source-free runs
      double lam_combined = std::numeric_limits<double>::infinity();
      double lam_l2 = std::numeric_limits<double>::infinity();
      bool ok = true;
      for (const auto& ct : bank) {
        if (ct.with_source) continue;
        for (size_t n = 0; ok && n + 1 < ct.samples.size(); ++n) {
          const CalibSample& q0 = ct.samples[n];
          const CalibSample& q1 = ct.samples[n + 1];
          const double E0 = energy(q0), E1 = energy(q1);
          if (E0 > 1e-14)
            lam_combined = std::min(lam_combined, (E0 - E1) / (ct.dt * ct.sk * E0));
          if (q0.nu_micro2 > 1e-12 * std::max(1.0, q0.base))
            lam_l2 = std::min(lam_l2, -((q1.base - q0.base) / ct.dt) / q0.nu_micro2);
          else if ((q1.base - q0.base) / ct.dt > 1e-10 * std::max(1.0, q0.base))
            ok = false;
        }
        if (!ok) break;
      }
      if (!ok || !(lam_combined > 0)) continue;
      double limit = lam_combined;
      if (std::isfinite(lam_l2)) limit = std::min(limit, lam_l2);
      if (!(limit > 0)) continue;
      candidates.push_back(Candidate{kappa1, kappa2, limit,
                                     std::isfinite(lam_l2) ? lam_l2 : limit, lo, hi});
    }
  }
  if (candidates.empty())
    throw ModeError(
        "calibrate_functional: no (kappa1, kappa2) certifies lambda > 0; "
        "discretization or assembly is broken");
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.lambda > b.lambda; });

  // Exact per-step certification. Every audited quantity is a quadratic form
  // and one RK4 step is a fixed linear map Phi, so each channel reduces to a
  // Hermitian eigenvalue problem:
  //   combined: E(Phi u) <= mu E(u), mu from the pencil (Phi* Q Phi, Q),
  //             lambda_k = (1 + tau - mu)/(dt s_k);
  //   L2:       [base(Phi u)-base(u)]/dt + lambda numicro(u) <= tau ||u||^2,
  //             lambda from the (regularized) pencil against the micro form;
  //   free:     [Ef(Phi u)-Ef(u)]/dt + lambda(s_k(b^2+c^2) + rho^2)
  //             <= C_free micro(u) + tau ||u||^2.
  // tau = 2.5e-7 per channel budgets the 1e-6 audit margin. Beyond the dense
  // guard the sampled values are used unchanged.
  const double tau = 2.5e-7;

  struct ExactCert {
    double lambda = -1;
    double c_free = 0;
  };

  // per-k dense objects shared by every candidate; Q is affine in the kappas:
  // Q = Qbase + kappa2 (kappa1 FA + F3)
  struct KCache {
    double sk = 0, dt = 0;
    Eigen::MatrixXcd Phi, Qbase, FA, F3, Qbc, Qrho;
  };
  std::vector<KCache> kcache;
  Eigen::MatrixXd Zmicro, Wd;
  const bool dense_ok = N <= 2500;
  if (dense_ok) {
    BasisSet basis(grid);
    Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(N, N);
    for (int c = 0; c < basis.count(); ++c) {
      RealVec e = basis.orthonormal().col(c);
      IP.noalias() -= e * (e.cwiseProduct(grid.weights())).transpose();
    }
    Zmicro = IP.transpose() * grid.weights().asDiagonal() * IP;
    Wd = Eigen::MatrixXd(grid.weights().asDiagonal());
    for (const auto& k : k_samples) {
      const double k2 = k.squaredNorm();
      if (k2 == 0) continue;
      KCache kc;
      kc.sk = k2 / (1.0 + k2);
      ModeOperator op(k, backend);
      kc.dt = op.stability_dt();
      Eigen::MatrixXcd A = dense_generator(op);
      kc.Phi = Eigen::MatrixXcd::Identity(N, N);
      Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(N, N);
      for (int j = 1; j <= 4; ++j) {
        term = (kc.dt / j) * (A * term).eval();
        kc.Phi += term;
      }
      EnergyFunctionalParams e0, e1, e2;
      e0.kappa2 = 0.0;
      e1.kappa1 = 1.0;
      e1.kappa2 = 1.0;
      e2.kappa1 = 2.0;
      e2.kappa2 = 1.0;
      kc.Qbase = energy_form_matrix(grid, k, e0);
      Eigen::MatrixXcd Q1 = energy_form_matrix(grid, k, e1) - kc.Qbase;
      Eigen::MatrixXcd Q2 = energy_form_matrix(grid, k, e2) - kc.Qbase;
      kc.FA = Q2 - Q1;
      kc.F3 = 2.0 * Q1 - Q2;

      const int n = grid.dim();
      RealVec lrho(N), lc(N);
      Eigen::MatrixXd lb(N, n);
      for (int i = 0; i < N; ++i) {
        const double r2 = grid.nodes().row(i).squaredNorm();
        lrho[i] = grid.weights()[i] * grid.sqrt_maxwellian()[i];
        lc[i] = grid.weights()[i] * (r2 - n) / (2.0 * n) * grid.sqrt_maxwellian()[i];
        for (int d = 0; d < n; ++d)
          lb(i, d) = grid.weights()[i] * grid.nodes()(i, d) * grid.sqrt_maxwellian()[i];
      }
      kc.Qbc = Eigen::MatrixXcd::Zero(N, N);
      for (int d = 0; d < n; ++d) kc.Qbc += (lb.col(d) * lb.col(d).transpose()).cast<Complex>();
      kc.Qbc += (lc * lc.transpose()).cast<Complex>();
      kc.Qrho = (lrho * lrho.transpose()).cast<Complex>();
      kcache.push_back(std::move(kc));
    }
  }

  auto exact_decay = [&](const Candidate& cand, bool with_cfree) -> ExactCert {
    if (!dense_ok) return {cand.lambda, 0.0};
    ExactCert cert;
    cert.lambda = std::numeric_limits<double>::infinity();
    for (const auto& kc : kcache) {
      Eigen::MatrixXcd Q = kc.Qbase + cand.kappa2 * (cand.kappa1 * kc.FA + kc.F3);
      Q = 0.5 * (Q + Q.adjoint()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> qe(Q, Eigen::EigenvaluesOnly);
      if (qe.eigenvalues().minCoeff() <= 0) return {};
      Eigen::MatrixXcd M1 = kc.Phi.adjoint() * Q * kc.Phi;
      M1 = 0.5 * (M1 + M1.adjoint()).eval();
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> ges(M1, Q,
                                                                     Eigen::EigenvaluesOnly);
      cert.lambda =
          std::min(cert.lambda, (1.0 + tau - ges.eigenvalues().maxCoeff()) / (kc.dt * kc.sk));
      if (!(cert.lambda > 0)) return {};
    }
    cert.lambda = std::min(cert.lambda, cand.lam_l2);
    if (!with_cfree) return cert;

    // free channel at the settled lambda: smallest C with
    // FD(Ef) + lambda(s_k(b^2+c^2)+rho^2) <= C micro + tau ||.||^2
    for (const auto& kc : kcache) {
      Eigen::MatrixXcd F = cand.kappa1 * kc.FA + kc.F3;
      F = 0.5 * (F + F.adjoint()).eval();
      Eigen::MatrixXcd Mf = (kc.Phi.adjoint() * F * kc.Phi - F) / kc.dt +
                            cert.lambda * kc.sk * kc.Qbc + cert.lambda * kc.Qrho -
                            tau * Wd.cast<Complex>();
      Mf = 0.5 * (Mf + Mf.adjoint()).eval();
      Eigen::MatrixXcd B = Zmicro.cast<Complex>() + 1e-9 * Wd.cast<Complex>();
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> ges(Mf, B,
                                                                     Eigen::EigenvaluesOnly);
      cert.c_free = std::max(cert.c_free, ges.eigenvalues().maxCoeff());
    }
    cert.c_free = std::max(cert.c_free, 0.0);
    return cert;
  };

  // certify the strongest sampled candidates plus the conservative small-
  // kappa2 corner, keep the best exactly certified decay constant
  Candidate best;
  ExactCert best_cert;
  int tried = 0;
  for (const auto& cand : candidates) {
    const bool conservative = cand.kappa2 <= std::pow(2.0, -10);
    if (tried >= 16 && !conservative) continue;
    ++tried;
    const ExactCert cert = exact_decay(cand, false);
    if (cert.lambda > best_cert.lambda) {
      best_cert = cert;
      best = cand;
    }
  }
  if (best_cert.lambda > 0) best_cert = exact_decay(best, true);
  if (!(best_cert.lambda > 0))
    throw ModeError("calibrate_functional: exact per-step certification failed for every "
                    "sampled candidate");

  EnergyFunctionalParams p;
  p.kappa1 = best.kappa1;
  p.kappa2 = best.kappa2;
  p.lambda = 0.9 * best_cert.lambda;
  p.equiv_lo = best.equiv_lo;
  p.equiv_hi = best.equiv_hi;

  // source constant: the largest implied C over the three inequalities on the
  // whole bank, with 10% headroom
  double C = 0;
  for (const auto& ct : bank) {
    for (size_t n = 0; n + 1 < ct.samples.size(); ++n) {
      const CalibSample& q0 = ct.samples[n];
      const CalibSample& q1 = ct.samples[n + 1];
      auto efree = [&](const CalibSample& q) { return p.kappa1 * q.f1 + q.f2; };
      auto energy = [&](const CalibSample& q) { return q.base + p.kappa2 * efree(q); };
      const double lhs1 = (efree(q1) - efree(q0)) / ct.dt + p.lambda * ct.sk * q0.b2c2 +
                          p.lambda * q0.dens2;
      const double den1 = q0.micro2 + q0.src;
      if (den1 > 1e-12) C = std::max(C, lhs1 / den1);
      if (q0.src > 1e-12) {
        const double lhs2 = (q1.base - q0.base) / ct.dt + p.lambda * q0.nu_micro2;
        C = std::max(C, lhs2 / q0.src);
        const double lhs3 =
            (energy(q1) - energy(q0) * (1.0 - p.lambda * ct.dt * ct.sk)) / ct.dt;
        C = std::max(C, lhs3 / q0.src);
      }
    }
  }
  p.source_c = std::max(1.5 * std::max(C, 0.0), 1.02 * best_cert.c_free) + 1e-9;
  return p;
}

}  // namespace vpblab
