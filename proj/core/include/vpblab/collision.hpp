#pragma once

#include <memory>
#include <optional>

#include "vpblab/moments.hpp"
#include "vpblab/velocity_grid.hpp"

namespace vpblab {

class CollisionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CollisionKind { HardSphere, BgkSurrogate };

/// Assembly scheme for the hard-sphere operator.
///
/// Variational integrates the collision energy (Dirichlet) form of L with the
/// product quadrature, which keeps self-adjointness, non-positivity and the
/// exact kernel N on the discrete space; unresolved Hermite modes relax at
/// rate nu. The Pointwise* forms quadrate the three-term gain integrand
/// directly and evaluate post-collision values by Hermite-spectral or
/// multilinear interpolation; their symmetrization defect is measured and
/// assembly fails above `symmetry_tolerance`.
enum class HardSphereForm { Variational, PointwiseSpectral, PointwiseMultilinear };

struct HardSphereOptions {
  int angular_order = 6;       // azimuthal count; polar Gauss points = angular_order/2
  HardSphereForm form = HardSphereForm::Variational;
  int spectral_degree = 8;     // total-degree cap of the resolved Hermite space
  double symmetry_tolerance = 1e-3;
  int max_nodes = 20000;
};

struct AssemblyDiagnostics {
  double symmetrization_defect = 0;  // relative Frobenius defect of the W-metric form
  double dropped_weight = 0;         // multilinear interpolation mass lost outside the hull
  double nu_min = 0, nu_max = 0;
  double nu_over_w_min = 0, nu_over_w_max = 0;
  double kernel_residual = 0;        // max ||L(e sqrtM)|| over the collision invariants
};

/// The linearized collision operator L = -nu + K (hard sphere) or the
/// structure-preserving relaxation surrogate L_s = -{I-P}(nu {I-P} .),
/// together with the bilinear form Gamma.
class CollisionBackend {
 public:
  static CollisionBackend bgk(const VelocityGrid& grid);
  static CollisionBackend hard_sphere(const VelocityGrid& grid, HardSphereOptions opts = {});

  CollisionKind kind() const { return kind_; }
  const VelocityGrid& grid() const { return *grid_; }
  const RealVec& nu() const { return nu_; }
  const BasisSet& basis() const { return *basis_; }
  const AssemblyDiagnostics& diagnostics() const { return diag_; }
  const HardSphereOptions& options() const { return opts_; }

  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> apply_L(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u) const;

  /// Symmetrized bilinear collision term. Hard sphere: conservative weak-form
  /// quadrature of Q (multilinear evaluation of u, v at post-collision
  /// points). Surrogate: Gamma_s(u,v) = {I-P}[rho_u nu v], a non-physical
  /// stand-in with the same bilinearity and microscopic range.
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> apply_gamma(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u,
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) const;

  /// Certified coercivity constant; set by estimate_coercivity.
  std::optional<double> coercivity() const { return coercivity_; }

  /// lambda-hat = min of -<u,Lu> / ||nu^(1/2){I-P}u||^2 over `samples` random
  /// microscopic slices, refined by the generalized eigenproblem on the
  /// microscopic subspace when a dense matrix is available. Throws if the
  /// estimate is not positive.
  double estimate_coercivity(int samples, std::uint64_t seed = 12345);

  /// Dense -L (assembled on demand for the surrogate).
  Eigen::MatrixXd minus_L_dense() const;

  /// Structured-text report: kind, nu bounds, defects, certified constants.
  std::string summary() const;

 private:
  CollisionBackend() = default;

  CollisionKind kind_ = CollisionKind::BgkSurrogate;
  const VelocityGrid* grid_ = nullptr;
  std::shared_ptr<const BasisSet> basis_;
  HardSphereOptions opts_;
  RealVec nu_;
  Eigen::MatrixXd minusL_;  // hard sphere only
  AssemblyDiagnostics diag_;
  std::optional<double> coercivity_;

  // hard-sphere Gamma machinery
  std::vector<std::array<int, 3>> midx_;  // total-degree multi-index set
  Eigen::MatrixXd transform_;             // NC x N forward Hermite transform
};

/// nu(xi_i) by product quadrature over the grid and a spherical rule.
RealVec collision_frequency(const VelocityGrid& grid, int angular_order);

/// Free-function form of CollisionBackend::estimate_coercivity.
double coercivity_estimate(CollisionBackend& backend, int samples, std::uint64_t seed = 12345);

extern template RealVec CollisionBackend::apply_L(const RealVec&) const;
extern template ComplexVec CollisionBackend::apply_L(const ComplexVec&) const;
extern template RealVec CollisionBackend::apply_gamma(const RealVec&, const RealVec&) const;
extern template ComplexVec CollisionBackend::apply_gamma(const ComplexVec&, const ComplexVec&) const;

}  // namespace vpblab
