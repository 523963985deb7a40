#pragma once

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpblab {

using Real = double;
using Complex = std::complex<double>;
using RealVec = Eigen::VectorXd;
using ComplexVec = Eigen::VectorXcd;

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GridStrategy { GaussHermiteTensor, UniformTruncated };

std::string to_string(GridStrategy s);
GridStrategy grid_strategy_from_string(const std::string& s);

/// Velocity-space quadrature grid carrying the normalized Maxwellian.
///
/// Nodes xi_i with weights W_i approximate integrals over R^n d(xi).
/// For the Gauss-Hermite strategy the rule is exact on p(xi)*M(xi) for
/// polynomials p up to degree 2*order-1 per dimension, which makes the
/// Maxwellian moment table exact to rounding.
class VelocityGrid {
 public:
  /// dim in {1,2,3}, order >= 4 points per dimension.
  static VelocityGrid build(int dim, int order, GridStrategy strategy);

  int dim() const { return dim_; }
  int order() const { return order_; }
  GridStrategy strategy() const { return strategy_; }
  int size() const { return static_cast<int>(weights_.size()); }

  /// size() x dim() node coordinates.
  const Eigen::MatrixXd& nodes() const { return nodes_; }
  /// Quadrature weights for integration against d(xi).
  const RealVec& weights() const { return weights_; }
  /// M(xi_i), normalized n-dimensional Maxwellian.
  const RealVec& maxwellian() const { return maxwellian_; }
  const RealVec& sqrt_maxwellian() const { return sqrt_maxwellian_; }
  /// w(xi_i) = (1 + |xi_i|^2)^(1/2).
  const RealVec& velocity_weight() const { return velocity_weight_; }
  /// 1D node coordinates shared by every dimension, ascending.
  const RealVec& nodes_1d() const { return nodes1d_; }

  template <typename Scalar>
  Scalar integrate(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& f) const {
    check_slice(f.size());
    return f.dot(weights_.cast<Scalar>());
  }

  /// <f, g> = integral of f * conj(g) d(xi) on the grid.
  template <typename S1, typename S2>
  auto inner(const Eigen::Matrix<S1, Eigen::Dynamic, 1>& f,
             const Eigen::Matrix<S2, Eigen::Dynamic, 1>& g) const {
    check_slice(f.size());
    check_slice(g.size());
    using S = decltype(S1{} * S2{});
    S acc{};
    for (int i = 0; i < size(); ++i) {
      if constexpr (std::is_same_v<S2, Complex>)
        acc += weights_[i] * S(f[i]) * std::conj(S(g[i]));
      else
        acc += weights_[i] * S(f[i]) * S(g[i]);
    }
    return acc;
  }

  template <typename Scalar>
  double norm(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& f) const {
    check_slice(f.size());
    double acc = 0;
    for (int i = 0; i < size(); ++i) acc += weights_[i] * std::norm(Complex(f[i]));
    return std::sqrt(acc);
  }

  /// d/d(xi_d) of a slice: Hermite-spectral on Gauss-Hermite grids,
  /// centered differences (zero beyond the cutoff) on uniform grids.
  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xi_derivative(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& f, int d) const;

  /// Worst absolute error over the nine Maxwellian moment-table entries.
  double moment_defect() const { return moment_defect_; }

  /// One-line reproducibility description: "dim=3 order=16 strategy=gauss_hermite_tensor".
  std::string describe() const;

  void check_slice(Eigen::Index n) const {
    if (n != weights_.size()) throw GridError("slice length does not match grid node count");
  }

  /// Flat index of the tensor node (i_1, ..., i_n), last dimension fastest.
  int flat_index(const std::vector<int>& idx) const;

 private:
  VelocityGrid() = default;
  void finalize();

  int dim_ = 0;
  int order_ = 0;
  GridStrategy strategy_ = GridStrategy::GaussHermiteTensor;
  Eigen::MatrixXd nodes_;
  RealVec weights_, maxwellian_, sqrt_maxwellian_, velocity_weight_;
  RealVec nodes1d_, weights1d_;  // 1D rule (weights against the 1D Maxwellian for GH)
  Eigen::MatrixXd deriv1d_;      // 1D differentiation matrix on nodes
  double moment_defect_ = 0;
};

/// Normalized probabilists' Hermite values He_m(x)/sqrt(m!), m = 0..mmax.
void hermite_normalized(double x, int mmax, double* out);

/// Gauss-Hermite rule for the weight exp(-x^2/2)/sqrt(2*pi); weights sum to 1.
void gauss_hermite_rule(int order, RealVec& nodes, RealVec& weights);

}  // namespace vpblab
