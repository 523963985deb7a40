#pragma once

#include "vpblab/collision.hpp"
#include "vpblab/decay.hpp"

namespace vpblab {

class NonlinearError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Periodic spectral helpers on [0, 2 pi) with dense transform matrices;
/// derivative and inverse-Laplacian share the Fourier truncation so the
/// Poisson residual closes to rounding.
class TorusGrid1D {
 public:
  explicit TorusGrid1D(int points);
  int size() const { return static_cast<int>(nodes_.size()); }
  const RealVec& nodes() const { return nodes_; }
  double cell() const { return cell_; }
  const Eigen::MatrixXd& deriv() const { return deriv_; }
  const Eigen::MatrixXd& laplacian() const { return laplacian_; }
  const Eigen::MatrixXd& grad_inv_laplacian() const { return grad_inv_lap_; }
  const Eigen::MatrixXd& inv_laplacian() const { return inv_lap_; }
  double integrate(const RealVec& f) const { return cell_ * f.sum(); }

 private:
  RealVec nodes_;
  double cell_ = 0;
  Eigen::MatrixXd deriv_, laplacian_, grad_inv_lap_, inv_lap_;
};

/// u(x_j, xi_i) on the 1D torus times a velocity grid; rows are velocity
/// slices at fixed x.
struct NonlinearState {
  const VelocityGrid* vgrid = nullptr;
  const TorusGrid1D* xgrid = nullptr;
  Eigen::MatrixXd u;  // x_points x velocity nodes
  double t = 0;
};

struct PoissonSolution {
  RealVec phi;       // mean-zero potential
  RealVec grad_phi;  // d Phi / dx
  double residual;   // max |Lap phi - (rho - mean rho)|
};

/// Spectral inversion of Lap Phi = rho - mean(rho) (mean-zero gauge).
PoissonSolution solve_poisson(const TorusGrid1D& xgrid, const RealVec& density);

RealVec density_field(const NonlinearState& state);  // integral sqrt(M) u dxi per x

/// Every term of the perturbation equation, exposed for audits:
/// d/dt u = streaming + vlasov + stretch + field_source + collision + gamma.
struct RhsTerms {
  Eigen::MatrixXd streaming;     // -xi du/dx
  Eigen::MatrixXd vlasov;        // -dPhi/dx du/dxi
  Eigen::MatrixXd stretch;       // +(1/2) xi dPhi/dx u
  Eigen::MatrixXd field_source;  // +dPhi/dx xi sqrt(M)
  Eigen::MatrixXd collision;     // L u
  Eigen::MatrixXd gamma;         // Gamma(u, u)
  Eigen::MatrixXd total;
  RealVec grad_phi;
};

RhsTerms nonlinear_rhs(const NonlinearState& state, const CollisionBackend& backend);

/// G1 = Gamma(u,u), G2 = -dPhi/dx du/dxi + (1/2) xi dPhi/dx u, and the
/// orthogonality defects ||P G1||, ||P0 G2|| (both zero analytically).
struct SourceSplit {
  Eigen::MatrixXd g1, g2;
  double pg1_norm = 0, p0g2_norm = 0;
};
SourceSplit source_split(const NonlinearState& state, const CollisionBackend& backend);

struct MicroAuditReport {
  double residual = 0;  // L2 norm of the {I-P}u evolution identity defect
  double relative = 0;
};
MicroAuditReport microscopic_rhs_audit(const NonlinearState& state,
                                       const CollisionBackend& backend);

/// Calibrated constants of the nonlinear energy functionals.
struct NonlinearParams {
  double kappa0 = 1.0;   // weight of the A/B pairings inside E_free
  double kappa3 = 0.0;   // mixed-derivative block
  double kappa4 = 0.0;   // E_free block
  double kappa5 = 1.0;   // E^h block inside the weighted functional
  double lambda = 0.0;   // certified d/dt E + lambda D <= 0
  double lambda_w = 0.0; // measured counterpart for the weighted pair (diagnostic)
  double lambda_es = 0.0, c_es = 0.0;  // zero-order microscopic estimate
  double c_hes = 0.0, c_whes = 0.0;    // high-order inequality constants (diagnostic)
};

/// Instantaneous functional values at one state.
struct FunctionalValues {
  double energy = 0;       // E
  double dissipation = 0;  // D
  double high = 0;         // E^h
  double high_w = 0;       // E^h_w
  double dissipation_w = 0;
  double efree = 0;
  double micro2 = 0;        // ||{I-P}u||^2
  double w_micro2 = 0;      // ||w^(1/2){I-P}u||^2
  double grad_macro2 = 0;   // ||dx P u||^2
  double mass = 0;          // integral sqrt(M) u dx dxi
};
FunctionalValues evaluate_functionals(const NonlinearState& state,
                                      const CollisionBackend& backend,
                                      const NonlinearParams& params, int deriv_order);

struct LedgerEntry {
  double t;
  FunctionalValues f;
  double e_inf_0, e_inf_1;  // sup (1+s)^(1/2+m) E over s <= t
  double ehw_inf;           // sup (1+s)^(2(3/4-eps)) E^h_w
};

struct EnergyLedger {
  std::vector<LedgerEntry> entries;
  double eps0 = 0, eps0_nu = 0, eps1 = 0;  // initial-data constants
  double eps_sup = 0.25;                   // epsilon in the weighted sup functional
};

struct NonlinearConfig {
  int x_points = 32;
  double amplitude = 1e-3;
  double t_end = 20;
  double out_interval = 0.25;
  int deriv_order = 2;  // N
  double eps_sup = 0.25;
  VelocityProfile chi{VelocityProfile::Kind::MaxwellianPlusTemperature};
  double cfl = 1.0;
};

/// u0(x, xi) = amplitude (cos x + sin(2x)/2) chi(xi), a smooth two-mode
/// zero-mean perturbation.
NonlinearState make_nonlinear_data(const NonlinearConfig& config, const VelocityGrid& vgrid,
                                   const TorusGrid1D& xgrid);

/// (kappa0, kappa3, kappa4, kappa5, lambda, ...) by per-step search along a
/// calibration trajectory, mirroring the per-mode calibration.
NonlinearParams calibrate_nonlinear(const NonlinearConfig& config,
                                    const CollisionBackend& backend,
                                    const TorusGrid1D& xgrid);

struct NonlinearAudits {
  double worst_energy_margin = 0;  // min over steps of E(t)-lam dt D(t)-E(t+dt), normalized
  double worst_mass_drift = 0;
  double max_pg1 = 0, max_p0g2 = 0;
  double hm1_residual = 0, hm3_residual = 0;  // L2-in-x, worst over steps
  double lem_es_margin = 0;
  double lem_hes_margin = 0;   // diagnostic
  double lem_whes_margin = 0;  // diagnostic
  bool blew_up = false;
  int steps = 0;
};

struct NonlinearResult {
  EnergyLedger ledger;
  NonlinearAudits audits;
  NonlinearParams params;
};

/// RK4 evolution with per-step audits; aborts (audits.blew_up) when the norm
/// grows past 10x its initial value.
NonlinearResult run_nonlinear(const NonlinearConfig& config, const CollisionBackend& backend,
                              const NonlinearParams& params);

}  // namespace vpblab
