#pragma once

#include "vpblab/velocity_grid.hpp"

namespace vpblab {

/// Macroscopic coefficients (a, b, c) of the fluid part
/// P u = {a + b.xi + c|xi|^2} sqrt(M).
template <typename Scalar>
struct MacroState {
  Scalar a{};
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b;  // length dim
  Scalar c{};

  /// a + n c, the density-like combination entering the Poisson coupling.
  Scalar density(int dim) const { return a + Real(dim) * c; }
};

/// High-order moment functions A_{jm}(u) = <(xi_j xi_m - 1) sqrt(M), u> and
/// B_j(u) = <(|xi|^2 - (n+2)) xi_j sqrt(M), u>.
template <typename Scalar>
struct HighMoments {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> A;  // dim x dim, symmetric
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> B;               // dim
};

enum class Projector { P, P0, P1, IMinusP, IMinusP1 };

/// Collision invariants on a grid: the raw spanning set
/// {sqrt(M), xi_j sqrt(M), |xi|^2 sqrt(M)} and an orthonormalized basis of
/// the same span under the discrete inner product.
class BasisSet {
 public:
  explicit BasisSet(const VelocityGrid& grid);

  const VelocityGrid& grid() const { return *grid_; }
  int count() const { return static_cast<int>(orthonormal_.cols()); }  // n + 2
  /// Orthonormal e_j sqrt(M) as columns (j = 0..n+1).
  const Eigen::MatrixXd& orthonormal() const { return orthonormal_; }
  /// Raw spanning set {sqrt(M), xi_j sqrt(M), |xi|^2 sqrt(M)} as columns.
  const Eigen::MatrixXd& spanning() const { return spanning_; }
  /// Worst deviation of the discrete Gram matrix from the identity.
  double gram_defect() const { return gram_defect_; }

  /// Exact discrete projection onto the invariant span (self-adjoint and
  /// idempotent to rounding on any grid).
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> project(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u) const {
    grid_->check_slice(u.size());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out;
    out.setZero(u.size());
    for (int c = 0; c < count(); ++c) {
      RealVec e = orthonormal_.col(c);
      Scalar coef = grid_->inner(u, e);
      out += coef * e.cast<Scalar>();
    }
    return out;
  }

 private:
  const VelocityGrid* grid_;
  Eigen::MatrixXd orthonormal_, spanning_;
  double gram_defect_ = 0;
};

/// (a, b, c) by quadrature of the closed-form moment formulas.
template <typename Scalar>
MacroState<Scalar> macro_project(const VelocityGrid& grid,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u);

/// Macro-micro projections built from macro_project coefficients.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> project(
    const VelocityGrid& grid, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u,
    Projector which);

template <typename Scalar>
HighMoments<Scalar> high_moments(const VelocityGrid& grid,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u);

/// (integral of w(xi)^power |u|^2 d(xi))^(1/2); power in {-1, 0, 1, 2}.
template <typename Scalar>
double weighted_norm(const VelocityGrid& grid,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u, int power);

/// Same with a caller-supplied weight (e.g. a backend's collision frequency).
template <typename Scalar>
double weighted_norm(const VelocityGrid& grid,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u, int power,
                     const RealVec& weight);

extern template MacroState<Real> macro_project(const VelocityGrid&, const RealVec&);
extern template MacroState<Complex> macro_project(const VelocityGrid&, const ComplexVec&);
extern template RealVec project(const VelocityGrid&, const RealVec&, Projector);
extern template ComplexVec project(const VelocityGrid&, const ComplexVec&, Projector);
extern template HighMoments<Real> high_moments(const VelocityGrid&, const RealVec&);
extern template HighMoments<Complex> high_moments(const VelocityGrid&, const ComplexVec&);
extern template double weighted_norm(const VelocityGrid&, const RealVec&, int);
extern template double weighted_norm(const VelocityGrid&, const ComplexVec&, int);
extern template double weighted_norm(const VelocityGrid&, const RealVec&, int, const RealVec&);
extern template double weighted_norm(const VelocityGrid&, const ComplexVec&, int, const RealVec&);

}  // namespace vpblab
