#pragma once

#include <functional>

#include "vpblab/collision.hpp"
#include "vpblab/moments.hpp"

namespace vpblab {

class ModeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Generator of the per-wavenumber linearized dynamics,
///   d/dt u = -i (xi.k) u - i (k.xi / |k|^2) (a + n c) sqrt(M) + L u,
/// with the Poisson coupling omitted at k = 0.
class ModeOperator {
 public:
  ModeOperator(RealVec k, const CollisionBackend& backend);

  const RealVec& k() const { return k_; }
  double k2() const { return k2_; }
  const VelocityGrid& grid() const { return backend_->grid(); }
  const CollisionBackend& backend() const { return *backend_; }

  ComplexVec apply(const ComplexVec& u) const;
  ComplexVec apply_streaming(const ComplexVec& u) const;

  /// Largest stable explicit step: 0.5 / (max|xi.k| + max nu).
  double stability_dt() const;

 private:
  RealVec k_;
  double k2_ = 0;
  const CollisionBackend* backend_;
  RealVec streaming_;  // xi.k
  RealVec field_dir_;  // (k.xi) sqrt(M), empty at k = 0
};

ModeOperator assemble_mode_operator(const RealVec& k, const CollisionBackend& backend,
                                    const VelocityGrid& grid);

struct ModeState {
  ComplexVec u;
  double t = 0;
  RealVec k;
};

/// a + n c = integral sqrt(M) u d(xi).
Complex mode_density(const VelocityGrid& grid, const ComplexVec& u);
/// Poisson field amplitude Phi = -(a + n c)/|k|^2 (k != 0).
Complex mode_phi(const VelocityGrid& grid, const ModeState& state);

/// Time-dependent microscopic source for the mild solution.
using ModeSource = std::function<ComplexVec(double t)>;

/// One explicit RK4 step; rejects dt beyond the stability guard and sources
/// with a macroscopic component (measured ||P h|| reported in the message).
ModeState step(const ModeOperator& op, const ModeState& state, double dt,
               const ComplexVec* source = nullptr);
ModeState step(const ModeOperator& op, const ModeState& state, double dt,
               const ModeSource& source);

struct ModeTrajectory {
  RealVec k;
  std::vector<double> times;
  std::vector<ComplexVec> states;
  std::vector<double> source_norm2;  // ||nu^(-1/2){I-P}h(t)||^2 at each stored time
};

ModeTrajectory evolve_mode(const ModeOperator& op, const ComplexVec& u0, double horizon,
                           double dt, const ModeSource* source = nullptr, int store_every = 1);

/// Certified constants of the per-mode Lyapunov functional
///   E(u) = ||u||^2 + |a+nc|^2/|k|^2 + kappa2 Re E_free(u).
struct EnergyFunctionalParams {
  double kappa1 = 1.0;
  double kappa2 = 0.0;
  double lambda = 0.0;    // certified decay constant of dE/dt + lambda s_k E <= C ...
  double source_c = 0.0;  // certified source constant
  double equiv_lo = 1.0;  // lambda_1: E >= equiv_lo * (||u||^2 + |a+nc|^2/|k|^2)
  double equiv_hi = 1.0;  // lambda_2
};

/// Re E_free: the kappa1-weighted A/B-moment pairings against b and c plus
/// the (b | i k (a+nc)/(1+|k|^2)) cross term.
double free_energy(const VelocityGrid& grid, const ModeState& state,
                   const EnergyFunctionalParams& params);

/// E = ||u||^2 + |a+nc|^2/|k|^2 + kappa2 Re E_free. At k = 0 the field term
/// requires a zero-mean state (torus convention) and otherwise throws.
double total_energy(const VelocityGrid& grid, const ModeState& state,
                    const EnergyFunctionalParams& params);

/// Searches kappa1 in powers of two up and kappa2 in powers of two down for
/// the pair certifying the largest per-step decay constant lambda > 0 on
/// h = 0 trajectories from random data, then calibrates the source constant
/// C on microscopic-source runs. Throws if nothing certifies.
EnergyFunctionalParams calibrate_functional(const CollisionBackend& backend,
                                            const VelocityGrid& grid,
                                            const std::vector<RealVec>& k_samples,
                                            int trajectories, std::uint64_t seed = 2024);

/// Dense matrix of the generator (guarded by the node count).
Eigen::MatrixXcd dense_generator(const ModeOperator& op);

/// Hermitian matrix Q of the quadratic form E(u) = u* Q u. Used by the exact
/// per-step certification: one RK4 step is a linear map Phi, so
/// E(Phi u) <= mu_max E(u) with mu_max the top eigenvalue of (Phi* Q Phi, Q).
Eigen::MatrixXcd energy_form_matrix(const VelocityGrid& grid, const RealVec& k,
                                    const EnergyFunctionalParams& params);

/// Eigenvalues of the dense generator, sorted by descending real part.
std::vector<Complex> spectrum(const ModeOperator& op);

struct LyapunovReport {
  double worst_free_margin = 0;      // lemma free-energy inequality
  double worst_l2_margin = 0;        // L^2 energy identity inequality
  double worst_combined_margin = 0;  // discrete-time combined inequality
  int steps = 0;
  bool pass(double tol = 1e-6) const {
    return worst_free_margin >= -tol && worst_l2_margin >= -tol && worst_combined_margin >= -tol;
  }
};

/// Per-step finite-difference audit of the two lemma inequalities and the
/// combined one; margins are normalized by the initial energy scale and
/// violations are reported, never thrown.
LyapunovReport lyapunov_audit(const CollisionBackend& backend, const ModeTrajectory& trajectory,
                              const EnergyFunctionalParams& params);

}  // namespace vpblab
