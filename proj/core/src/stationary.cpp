#include "vpblab/stationary.hpp"

#include <cmath>
#include <numbers>

namespace vpblab {

namespace {

// Thomas solve for a tridiagonal system (a: sub, b: diag, c: super).
RealVec tridiag_solve(RealVec a, RealVec b, RealVec c, RealVec d) {
  const int n = static_cast<int>(b.size());
  for (int i = 1; i < n; ++i) {
    const double m = a[i] / b[i - 1];
    b[i] -= m * c[i - 1];
    d[i] -= m * d[i - 1];
  }
  RealVec x(n);
  x[n - 1] = d[n - 1] / b[n - 1];
  for (int i = n - 2; i >= 0; --i) x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
  return x;
}

}  // namespace

StationaryProfile solve_stationary(const BackgroundSpec& rho_spec,
                                   const StationaryConfig& config,
                                   const RealVec* initial_guess) {
  if (std::abs(rho_spec.eps) > config.smallness)
    throw StationaryError("background violates the smallness threshold");
  const int M = config.points;
  if (M < 16) throw StationaryError("too few grid points");

  StationaryProfile out;
  out.geometry = config.geometry;

  const bool radial = config.geometry == StationaryGeometry::Radial3D;
  const double twopi = 2.0 * std::numbers::pi;
  const double h = radial ? config.cutoff / M : twopi / M;

  out.nodes.resize(M);
  out.rho.resize(M);
  for (int i = 0; i < M; ++i) {
    out.nodes[i] = radial ? i * h : i * h;
    double d = out.nodes[i] - rho_spec.center;
    if (!radial) {
      // periodic distance
      d = std::remainder(out.nodes[i] - rho_spec.center, twopi);
    }
    out.rho[i] = 1.0 + rho_spec.eps * std::exp(-d * d / (2.0 * rho_spec.width * rho_spec.width));
  }

  RealVec phi = RealVec::Zero(M);
  if (initial_guess) {
    if (initial_guess->size() != M) throw StationaryError("initial guess size mismatch");
    phi = *initial_guess;
  }
  auto laplacian = [&](const RealVec& p) {
    RealVec lp(M);
    if (radial) {
      // (1/r^2) d/dr (r^2 dphi/dr); phi'(0) = 0, phi(R) = 0
      lp[0] = 6.0 * (p[1] - p[0]) / (h * h);
      for (int i = 1; i < M; ++i) {
        const double r = out.nodes[i];
        const double rp = r + 0.5 * h, rm = r - 0.5 * h;
        const double up = i + 1 < M ? p[i + 1] : 0.0;  // phi(R) = 0
        lp[i] = (rp * rp * (up - p[i]) - rm * rm * (p[i] - p[i - 1])) / (r * r * h * h);
      }
    } else {
      for (int i = 0; i < M; ++i) {
        const double up = p[(i + 1) % M], dn = p[(i + M - 1) % M];
        lp[i] = (up - 2.0 * p[i] + dn) / (h * h);
      }
    }
    return lp;
  };
  auto residual_vec = [&](const RealVec& p) {
    RealVec f = laplacian(p);
    for (int i = 0; i < M; ++i) f[i] -= std::exp(p[i]) - out.rho[i];
    return f;
  };

  double res = residual_vec(phi).cwiseAbs().maxCoeff();
  out.newton_history.push_back(res);
  double prev_res = res;
  int grew = 0;
  for (int it = 0; it < config.max_iterations && res > config.tol; ++it) {
    RealVec f = residual_vec(phi);
    RealVec dphi;
    if (radial) {
      RealVec sub = RealVec::Zero(M), dia(M), sup = RealVec::Zero(M);
      dia[0] = -6.0 / (h * h) - std::exp(phi[0]);
      sup[0] = 6.0 / (h * h);
      for (int i = 1; i < M; ++i) {
        const double r = out.nodes[i];
        const double rp = r + 0.5 * h, rm = r - 0.5 * h;
        sub[i] = rm * rm / (r * r * h * h);
        dia[i] = -(rp * rp + rm * rm) / (r * r * h * h) - std::exp(phi[i]);
        if (i + 1 < M) sup[i] = rp * rp / (r * r * h * h);
      }
      dphi = tridiag_solve(sub, dia, sup, RealVec(-f));
    } else {
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(M, M);
      for (int i = 0; i < M; ++i) {
        J(i, i) = -2.0 / (h * h) - std::exp(phi[i]);
        J(i, (i + 1) % M) += 1.0 / (h * h);
        J(i, (i + M - 1) % M) += 1.0 / (h * h);
      }
      dphi = J.partialPivLu().solve(RealVec(-f));
    }
    phi += dphi;
    res = residual_vec(phi).cwiseAbs().maxCoeff();
    out.newton_history.push_back(res);
    if (!std::isfinite(res) || (res > prev_res && ++grew > 2))
      throw StationaryError("Newton diverged; last residual " + std::to_string(res));
    prev_res = res;
  }
  if (res > config.tol)
    throw StationaryError("Newton did not reach the tolerance; residual " + std::to_string(res));
  out.phi = phi;
  out.residual = res;
  return out;
}

double weighted_sup_norm(const RealVec& nodes, const RealVec& values, int m, double theta) {
  if (m < 0 || m > 2) throw StationaryError("weighted_sup_norm supports m <= 2");
  const int M = static_cast<int>(nodes.size());
  if (values.size() != M || M < 5) throw StationaryError("bad profile");
  const double h = nodes[1] - nodes[0];

  auto d1 = [&](int i) {
    if (i == 0) return (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    if (i == M - 1)
      return (3.0 * values[M - 1] - 4.0 * values[M - 2] + values[M - 3]) / (2.0 * h);
    return (values[i + 1] - values[i - 1]) / (2.0 * h);
  };
  auto d2 = [&](int i) {
    const int j = std::clamp(i, 1, M - 2);
    return (values[j + 1] - 2.0 * values[j] + values[j - 1]) / (h * h);
  };

  double sup = 0;
  for (int i = 0; i < M; ++i) {
    double sum = std::abs(values[i]);
    if (m >= 1) sum += std::abs(d1(i));
    if (m >= 2) sum += std::abs(d2(i));
    sup = std::max(sup, std::pow(1.0 + std::abs(nodes[i]), theta) * sum);
  }
  return sup;
}

}  // namespace vpblab
