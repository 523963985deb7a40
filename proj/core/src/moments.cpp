#include "vpblab/moments.hpp"

namespace vpblab {

BasisSet::BasisSet(const VelocityGrid& grid) : grid_(&grid) {
  const int n = grid.dim();
  const int N = grid.size();
  spanning_.resize(N, n + 2);
  spanning_.col(0) = grid.sqrt_maxwellian();
  for (int d = 0; d < n; ++d)
    spanning_.col(1 + d) = grid.nodes().col(d).cwiseProduct(grid.sqrt_maxwellian());
  spanning_.col(n + 1) = grid.nodes().rowwise().squaredNorm().cwiseProduct(grid.sqrt_maxwellian());

  // Modified Gram-Schmidt in the discrete inner product; exact structural
  // constants on any grid, including inexact quadratures.
  orthonormal_ = spanning_;
  for (int c = 0; c < n + 2; ++c) {
    for (int pass = 0; pass < 2; ++pass)
      for (int c2 = 0; c2 < c; ++c2) {
        RealVec e = orthonormal_.col(c2);
        double coef = grid.inner(RealVec(orthonormal_.col(c)), e);
        orthonormal_.col(c) -= coef * e;
      }
    orthonormal_.col(c) /= grid.norm(RealVec(orthonormal_.col(c)));
  }

  gram_defect_ = 0;
  for (int i = 0; i < n + 2; ++i)
    for (int j = 0; j < n + 2; ++j) {
      double g = grid.inner(RealVec(orthonormal_.col(i)), RealVec(orthonormal_.col(j)));
      gram_defect_ = std::max(gram_defect_, std::abs(g - (i == j ? 1.0 : 0.0)));
    }
}

template <typename Scalar>
MacroState<Scalar> macro_project(const VelocityGrid& grid,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u) {
  grid.check_slice(u.size());
  const int n = grid.dim();
  const int N = grid.size();
  const auto& W = grid.weights();
  const auto& sM = grid.sqrt_maxwellian();

  MacroState<Scalar> m;
  m.b.setZero(n);
  Scalar a{}, c{};
  for (int i = 0; i < N; ++i) {
    const double r2 = grid.nodes().row(i).squaredNorm();
    const Scalar wsu = W[i] * sM[i] * u[i];
    a += 0.5 * ((n + 2.0) - r2) * wsu;
    c += (r2 - n) / (2.0 * n) * wsu;
    for (int d = 0; d < n; ++d) m.b[d] += grid.nodes()(i, d) * wsu;
  }
  m.a = a;
  m.c = c;
  return m;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> project(
    const VelocityGrid& grid, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u,
    Projector which) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const int n = grid.dim();
  const int N = grid.size();
  MacroState<Scalar> m = macro_project(grid, u);

  Vec out(N);
  switch (which) {
    case Projector::P:
    case Projector::IMinusP:
      for (int i = 0; i < N; ++i) {
        Scalar poly = m.a + m.c * Scalar(grid.nodes().row(i).squaredNorm());
        for (int d = 0; d < n; ++d) poly += m.b[d] * grid.nodes()(i, d);
        out[i] = poly * grid.sqrt_maxwellian()[i];
      }
      if (which == Projector::IMinusP) out = u - out;
      return out;
    case Projector::P0:
      for (int i = 0; i < N; ++i)
        out[i] = m.density(n) * grid.sqrt_maxwellian()[i];
      return out;
    case Projector::P1:
      for (int i = 0; i < N; ++i) {
        Scalar poly = m.c * Scalar(grid.nodes().row(i).squaredNorm() - n);
        for (int d = 0; d < n; ++d) poly += m.b[d] * grid.nodes()(i, d);
        out[i] = poly * grid.sqrt_maxwellian()[i];
      }
      return out;
    case Projector::IMinusP1:
      return u - project(grid, u, Projector::P1);
  }
  throw GridError("unreachable projector");
}

template <typename Scalar>
HighMoments<Scalar> high_moments(const VelocityGrid& grid,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u) {
  grid.check_slice(u.size());
  const int n = grid.dim();
  const int N = grid.size();
  HighMoments<Scalar> hm;
  hm.A.setZero(n, n);
  hm.B.setZero(n);
  for (int i = 0; i < N; ++i) {
    const auto xi = grid.nodes().row(i);
    const Scalar wsu = grid.weights()[i] * grid.sqrt_maxwellian()[i] * u[i];
    const double r2 = xi.squaredNorm();
    for (int j = 0; j < n; ++j) {
      for (int m = 0; m < n; ++m)
        hm.A(j, m) += (xi[j] * xi[m] - (j == m ? 1.0 : 0.0)) * wsu;
      hm.B[j] += (r2 - (n + 2.0)) * xi[j] * wsu;
    }
  }
  return hm;
}

template <typename Scalar>
double weighted_norm(const VelocityGrid& grid,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u, int power,
                     const RealVec& weight) {
  grid.check_slice(u.size());
  if (power < -1 || power > 2) throw GridError("weighted_norm: power must be in {-1,0,1,2}");
  double acc = 0;
  for (int i = 0; i < grid.size(); ++i)
    acc += grid.weights()[i] * std::pow(weight[i], power) * std::norm(Complex(u[i]));
  return std::sqrt(acc);
}

template <typename Scalar>
double weighted_norm(const VelocityGrid& grid,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u, int power) {
  return weighted_norm(grid, u, power, grid.velocity_weight());
}

template MacroState<Real> macro_project(const VelocityGrid&, const RealVec&);
template MacroState<Complex> macro_project(const VelocityGrid&, const ComplexVec&);
template RealVec project(const VelocityGrid&, const RealVec&, Projector);
template ComplexVec project(const VelocityGrid&, const ComplexVec&, Projector);
template HighMoments<Real> high_moments(const VelocityGrid&, const RealVec&);
template HighMoments<Complex> high_moments(const VelocityGrid&, const ComplexVec&);
template double weighted_norm(const VelocityGrid&, const RealVec&, int);
template double weighted_norm(const VelocityGrid&, const ComplexVec&, int);
template double weighted_norm(const VelocityGrid&, const RealVec&, int, const RealVec&);
template double weighted_norm(const VelocityGrid&, const ComplexVec&, int, const RealVec&);

}  // namespace vpblab
