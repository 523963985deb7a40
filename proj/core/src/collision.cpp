#include "vpblab/collision.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "parallel.hpp"

namespace vpblab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void gauss_legendre_01(int m, RealVec& x, RealVec& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  for (int i = 1; i < m; ++i) {
    double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(m);
  w.resize(m);
  for (int i = 0; i < m; ++i) {
    x[i] = 0.5 * (es.eigenvalues()[i] + 1.0);
    double v = es.eigenvectors()(0, i);
    w[i] = v * v;  // GL weights on [-1,1] sum to 2; interval map halves them
  }
}

// Hemisphere rule for the omega integral with polar axis along vhat. The
// three-term integrand is even in omega, so the full sphere is twice the
// hemisphere. With mu Gauss points on [0,1] the factor |v.omega| = |v| mu is
// integrated exactly.
struct SphereRule {
  RealVec mu, wmu;          // polar nodes/weights on [0,1] (weights sum to 1)
  std::vector<double> cphi, sphi;
  double wphi = 0;          // 2*pi / nphi
  int nmu = 0, nphi = 0;

  static SphereRule make(int angular_order) {
    SphereRule r;
    r.nmu = std::max(2, angular_order / 2);
    r.nphi = std::max(4, angular_order);
    gauss_legendre_01(r.nmu, r.mu, r.wmu);
    r.wphi = kTwoPi / r.nphi;
    for (int p = 0; p < r.nphi; ++p) {
      double phi = kTwoPi * (p + 0.5) / r.nphi;
      r.cphi.push_back(std::cos(phi));
      r.sphi.push_back(std::sin(phi));
    }
    return r;
  }
};

using Vector3d = Eigen::Vector3d;

void orthonormal_frame(const Vector3d& vhat, Vector3d& e1, Vector3d& e2) {
  Vector3d a = std::abs(vhat[0]) < 0.9 ? Vector3d(1, 0, 0) : Vector3d(0, 1, 0);
  e1 = vhat.cross(a).normalized();
  e2 = vhat.cross(e1);
}

std::vector<std::array<int, 3>> total_degree_set(int D) {
  std::vector<std::array<int, 3>> midx;
  for (int a = 0; a <= D; ++a)
    for (int b = 0; a + b <= D; ++b)
      for (int c = 0; a + b + c <= D; ++c) midx.push_back({a, b, c});
  return midx;
}

// Hb_l(p) for every multi-index in the set.
void tensor_eval(const std::vector<std::array<int, 3>>& midx, int D, const Vector3d& p,
                 double* buf, RealVec& out) {
  double* h1 = buf;
  double* h2 = buf + (D + 1);
  double* h3 = buf + 2 * (D + 1);
  hermite_normalized(p[0], D, h1);
  hermite_normalized(p[1], D, h2);
  hermite_normalized(p[2], D, h3);
  for (size_t l = 0; l < midx.size(); ++l)
    out[static_cast<int>(l)] = h1[midx[l][0]] * h2[midx[l][1]] * h3[midx[l][2]];
}

// Multilinear interpolation on the tensor grid; zero outside the hull.
// `vals` are nodal values indexed with the grid's flat layout.
template <typename Scalar>
Scalar interp_multilinear(const VelocityGrid& g,
                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& vals,
                          const Vector3d& p, bool* outside = nullptr) {
  const auto& n1 = g.nodes_1d();
  const int order = g.order();
  int i0[3];
  double t[3];
  for (int d = 0; d < 3; ++d) {
    if (p[d] <= n1[0] || p[d] >= n1[order - 1]) {
      if (outside) *outside = true;
      return Scalar{};
    }
    int hi = 1;
    while (n1[hi] < p[d]) ++hi;
    i0[d] = hi - 1;
    t[d] = (p[d] - n1[hi - 1]) / (n1[hi] - n1[hi - 1]);
  }
  if (outside) *outside = false;
  Scalar s{};
  for (int da = 0; da < 2; ++da)
    for (int db = 0; db < 2; ++db)
      for (int dc = 0; dc < 2; ++dc) {
        double wgt = (da ? t[0] : 1 - t[0]) * (db ? t[1] : 1 - t[1]) * (dc ? t[2] : 1 - t[2]);
        s += wgt * vals[((i0[0] + da) * order + (i0[1] + db)) * order + (i0[2] + dc)];
      }
  return s;
}

RealVec hard_sphere_nu(const VelocityGrid& g) {
  // Closed angular reduction: the hemisphere rule integrates |v.omega|
  // exactly, so the omega sum equals 2*pi*|v|.
  const int N = g.size();
  RealVec nu(N);
  detail::parallel_blocks(N, [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      double s = 0;
      for (int j = 0; j < N; ++j)
        s += g.weights()[j] * g.maxwellian()[j] * (g.nodes().row(i) - g.nodes().row(j)).norm();
      nu[i] = kTwoPi * s;
    }
  });
  return nu;
}

}  // namespace

RealVec collision_frequency(const VelocityGrid& grid, int angular_order) {
  if (grid.dim() != 3) throw CollisionError("hard-sphere collision frequency needs dim = 3");
  if (angular_order < 6) throw CollisionError("angular_order must be >= 6");
  const SphereRule sr = SphereRule::make(angular_order);
  const int N = grid.size();
  RealVec nu(N);
  detail::parallel_blocks(N, [&](int, int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const Vector3d xi = grid.nodes().row(i);
      double acc = 0;
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        const Vector3d v = xi - Vector3d(grid.nodes().row(j));
        const double vn = v.norm();
        Vector3d e1, e2;
        orthonormal_frame(v / vn, e1, e2);
        double ang = 0;
        for (int qm = 0; qm < sr.nmu; ++qm)
          ang += 2.0 * sr.wmu[qm] * sr.wphi * sr.nphi * vn * sr.mu[qm];
        acc += grid.weights()[j] * grid.maxwellian()[j] * ang;
      }
      nu[i] = acc;
    }
  });
  return nu;
}

CollisionBackend CollisionBackend::bgk(const VelocityGrid& grid) {
  CollisionBackend b;
  b.kind_ = CollisionKind::BgkSurrogate;
  b.grid_ = &grid;
  b.basis_ = std::make_shared<BasisSet>(grid);
  b.nu_ = grid.velocity_weight();
  b.diag_.nu_min = b.nu_.minCoeff();
  b.diag_.nu_max = b.nu_.maxCoeff();
  b.diag_.nu_over_w_min = 1.0;
  b.diag_.nu_over_w_max = 1.0;
  double worst = 0;
  for (int c = 0; c < b.basis_->count(); ++c) {
    RealVec e = b.basis_->orthonormal().col(c);
    worst = std::max(worst, grid.norm(RealVec(b.apply_L(e))));
  }
  b.diag_.kernel_residual = worst;
  return b;
}

CollisionBackend CollisionBackend::hard_sphere(const VelocityGrid& grid, HardSphereOptions opts) {
  if (grid.dim() != 3) throw CollisionError("hard-sphere backend needs dim = 3");
  if (grid.strategy() != GridStrategy::GaussHermiteTensor)
    throw CollisionError("hard-sphere backend needs a gauss_hermite_tensor grid");
  if (grid.size() > opts.max_nodes)
    throw CollisionError("hard-sphere backend: node count exceeds the dense-assembly guard");
  if (opts.angular_order < 6) throw CollisionError("angular_order must be >= 6");

  CollisionBackend b;
  b.kind_ = CollisionKind::HardSphere;
  b.grid_ = &grid;
  b.opts_ = opts;
  b.basis_ = std::make_shared<BasisSet>(grid);
  b.nu_ = hard_sphere_nu(grid);

  const int N = grid.size();
  const int D = std::min(opts.spectral_degree, grid.order() - 1);
  b.midx_ = total_degree_set(D);
  const int NC = static_cast<int>(b.midx_.size());
  const SphereRule sr = SphereRule::make(opts.angular_order);

  // Forward transform C(l, j) = W_j sqrtM_j Hb_l(xi_j): coefficients of
  // U = u / sqrtM in the normalized Hermite basis.
  Eigen::MatrixXd C(NC, N);
  Eigen::MatrixXd Bwd(N, NC);  // psi_l(xi_j)
  {
    std::vector<double> buf(3 * (D + 2));
    RealVec hb(NC);
    for (int j = 0; j < N; ++j) {
      tensor_eval(b.midx_, D, grid.nodes().row(j), buf.data(), hb);
      for (int l = 0; l < NC; ++l) {
        Bwd(j, l) = grid.sqrt_maxwellian()[j] * hb[l];
        C(l, j) = grid.weights()[j] * Bwd(j, l);
      }
    }
  }

  if (opts.form == HardSphereForm::Variational) {
    // Collision-energy form in coefficient space:
    //   Bc(l,l') = (1/4) sum_{pairs, omega} kappa * rho_l rho_l',
    //   rho_l = Hb_l(xi') + Hb_l(xi*') - Hb_l(xi) - Hb_l(xi*).
    // rho vanishes pointwise on collision invariants, so the kernel of the
    // assembled operator contains N exactly; symmetry and non-positivity are
    // structural.
    const int workers = detail::worker_count(N);
    std::vector<Eigen::MatrixXd> partial(workers, Eigen::MatrixXd::Zero(NC, NC));
    detail::parallel_blocks(N, [&](int tid, int begin, int end) {
      Eigen::MatrixXd& Bc = partial[tid];
      std::vector<double> buf(3 * (D + 2));
      RealVec rho(NC), si(NC), sj(NC), tmp(NC);
      for (int i = begin; i < end; ++i) {
        const Vector3d xi = grid.nodes().row(i);
        tensor_eval(b.midx_, D, xi, buf.data(), si);
        for (int j = i + 1; j < N; ++j) {
          const Vector3d xj = grid.nodes().row(j);
          tensor_eval(b.midx_, D, xj, buf.data(), sj);
          const Vector3d v = xi - xj;
          const double vn = v.norm();
          const Vector3d vhat = v / vn;
          Vector3d e1, e2;
          orthonormal_frame(vhat, e1, e2);
          // x2: the (j,i) ordered pair contributes identically
          const double wij =
              2.0 * grid.weights()[i] * grid.weights()[j] * grid.maxwellian()[i] * grid.maxwellian()[j];
          for (int qm = 0; qm < sr.nmu; ++qm) {
            const double mu = sr.mu[qm];
            const double smu = std::sqrt(std::max(0.0, 1.0 - mu * mu));
            for (int qp = 0; qp < sr.nphi; ++qp) {
              const Vector3d om = mu * vhat + smu * (sr.cphi[qp] * e1 + sr.sphi[qp] * e2);
              const Vector3d xp = xi - vn * mu * om;
              const Vector3d xsp = xj + vn * mu * om;
              const double kap = 0.25 * wij * (2.0 * sr.wmu[qm]) * sr.wphi * vn * mu;
              tensor_eval(b.midx_, D, xp, buf.data(), rho);
              tensor_eval(b.midx_, D, xsp, buf.data(), tmp);
              rho += tmp - si - sj;
              Bc.selfadjointView<Eigen::Lower>().rankUpdate(rho, kap);
            }
          }
        }
      }
    });
    Eigen::MatrixXd Bc = Eigen::MatrixXd::Zero(NC, NC);
    for (const auto& p : partial) Bc += p;
    Bc = Bc.selfadjointView<Eigen::Lower>();

    Eigen::MatrixXd Pi = Bwd * C;
    Eigen::MatrixXd IPi = Eigen::MatrixXd::Identity(N, N) - Pi;
    b.minusL_ = grid.weights().cwiseInverse().asDiagonal() * (C.transpose() * Bc * C);
    b.minusL_.noalias() += IPi * b.nu_.asDiagonal() * IPi;
    b.diag_.symmetrization_defect = 0;
  } else {
    // Literal three-term gain quadrature; post-collision values of u from the
    // Hermite interpolant or multilinear interpolation. The W-metric form is
    // symmetrized afterwards and the defect recorded.
    const bool spectral = opts.form == HardSphereForm::PointwiseSpectral;
    const int workers = detail::worker_count(N);
    std::vector<Eigen::MatrixXd> partialK(workers, Eigen::MatrixXd::Zero(N, N));
    std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> partialE;
    if (spectral)
      partialE.assign(workers, Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                             Eigen::RowMajor>::Zero(N, NC));
    std::vector<double> dropped(workers, 0.0);

    detail::parallel_blocks(N, [&](int tid, int begin, int end) {
      Eigen::MatrixXd& K = partialK[tid];
      std::vector<double> buf(3 * (D + 2));
      RealVec hb(NC);
      const auto& n1 = grid.nodes_1d();
      const int order = grid.order();
      auto scatter = [&](const Vector3d& p, double coef, int row) {
        int i0[3];
        double t[3];
        for (int d = 0; d < 3; ++d) {
          if (p[d] <= n1[0] || p[d] >= n1[order - 1]) {
            dropped[tid] += std::abs(coef);
            return;
          }
          int hi = 1;
          while (n1[hi] < p[d]) ++hi;
          i0[d] = hi - 1;
          t[d] = (p[d] - n1[hi - 1]) / (n1[hi] - n1[hi - 1]);
        }
        for (int da = 0; da < 2; ++da)
          for (int db = 0; db < 2; ++db)
            for (int dc = 0; dc < 2; ++dc) {
              double wgt =
                  (da ? t[0] : 1 - t[0]) * (db ? t[1] : 1 - t[1]) * (dc ? t[2] : 1 - t[2]);
              K(row, ((i0[0] + da) * order + (i0[1] + db)) * order + (i0[2] + dc)) += coef * wgt;
            }
      };
      for (int i = begin; i < end; ++i) {
        const Vector3d xi = grid.nodes().row(i);
        for (int j = 0; j < N; ++j) {
          if (j == i) continue;
          const Vector3d xj = grid.nodes().row(j);
          const Vector3d v = xi - xj;
          const double vn = v.norm();
          const Vector3d vhat = v / vn;
          Vector3d e1, e2;
          orthonormal_frame(vhat, e1, e2);
          const double base = grid.weights()[j] * grid.sqrt_maxwellian()[j];
          K(i, j) -= grid.sqrt_maxwellian()[i] * base * kTwoPi * vn;  // loss
          for (int qm = 0; qm < sr.nmu; ++qm) {
            const double mu = sr.mu[qm];
            const double smu = std::sqrt(std::max(0.0, 1.0 - mu * mu));
            for (int qp = 0; qp < sr.nphi; ++qp) {
              const Vector3d om = mu * vhat + smu * (sr.cphi[qp] * e1 + sr.sphi[qp] * e2);
              const Vector3d xp = xi - vn * mu * om;
              const Vector3d xsp = xj + vn * mu * om;
              const double wq = 2.0 * sr.wmu[qm] * sr.wphi * vn * mu * base;
              const double sMp = std::pow(kTwoPi, -0.75) * std::exp(-0.25 * xp.squaredNorm());
              const double sMsp = std::pow(kTwoPi, -0.75) * std::exp(-0.25 * xsp.squaredNorm());
              if (spectral) {
                // u(x) = sum_l c_l Hb_l(x) sqrtM(x); both gain terms share
                // sqrtM' sqrtM*' = sqrt(M'M*')
                auto& E = partialE[tid];
                const double common = wq * sMp * sMsp;
                tensor_eval(b.midx_, D, xp, buf.data(), hb);
                for (int l = 0; l < NC; ++l) E(i, l) += common * hb[l];
                tensor_eval(b.midx_, D, xsp, buf.data(), hb);
                for (int l = 0; l < NC; ++l) E(i, l) += common * hb[l];
              } else {
                scatter(xp, wq * sMsp, i);
                scatter(xsp, wq * sMp, i);
              }
            }
          }
        }
      }
    });
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N, N);
    for (const auto& p : partialK) K += p;
    if (spectral) {
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> E = partialE[0];
      for (int t = 1; t < workers; ++t) E += partialE[t];
      // spectral gain evaluates psi_l = Hb_l sqrtM; E carries Hb only, the
      // sqrtM' factors are already in sMp/sMsp, and u-coefficients come from C
      K.noalias() += Eigen::MatrixXd(E) * C;
    }
    for (double d : dropped) b.diag_.dropped_weight += d;

    Eigen::MatrixXd WK = grid.weights().asDiagonal() * K;
    const double defect = (WK - WK.transpose()).norm() / WK.norm();
    b.diag_.symmetrization_defect = defect;
    if (defect > opts.symmetry_tolerance) {
      std::ostringstream os;
      os << "hard-sphere pointwise assembly failed: symmetrization defect " << defect
         << " exceeds tolerance " << opts.symmetry_tolerance
         << " (use the variational form or refine the grid)";
      throw CollisionError(os.str());
    }
    WK = 0.5 * (WK + WK.transpose()).eval();
    K = grid.weights().cwiseInverse().asDiagonal() * WK;
    b.minusL_ = Eigen::MatrixXd(b.nu_.asDiagonal()) - K;
  }

  b.transform_ = std::move(C);
  b.diag_.nu_min = b.nu_.minCoeff();
  b.diag_.nu_max = b.nu_.maxCoeff();
  b.diag_.nu_over_w_min = (b.nu_.cwiseQuotient(grid.velocity_weight())).minCoeff();
  b.diag_.nu_over_w_max = (b.nu_.cwiseQuotient(grid.velocity_weight())).maxCoeff();
  double worst = 0;
  for (int c = 0; c < b.basis_->count(); ++c) {
    RealVec e = b.basis_->orthonormal().col(c);
    worst = std::max(worst, grid.norm(RealVec(b.apply_L(e))));
  }
  b.diag_.kernel_residual = worst;
  return b;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> CollisionBackend::apply_L(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u) const {
  grid_->check_slice(u.size());
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (kind_ == CollisionKind::BgkSurrogate) {
    Vec micro = u - basis_->project(u);
    Vec relaxed = nu_.cast<Scalar>().cwiseProduct(micro);
    return -(relaxed - basis_->project(relaxed));
  }
  if constexpr (std::is_same_v<Scalar, Complex>) {
    RealVec re = -(minusL_ * u.real());
    RealVec im = -(minusL_ * u.imag());
    return re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>();
  } else {
    return -(minusL_ * u);
  }
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> CollisionBackend::apply_gamma(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& u,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) const {
  grid_->check_slice(u.size());
  grid_->check_slice(v.size());
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const VelocityGrid& g = *grid_;

  if (kind_ == CollisionKind::BgkSurrogate) {
    // Gamma_s(u, v) = {I-P}[rho_u nu v]
    Scalar rho = g.inner(u, RealVec(g.sqrt_maxwellian()));
    Vec prod = rho * nu_.cast<Scalar>().cwiseProduct(v);
    return prod - basis_->project(prod);
  }

  // Conservative weak form: for a test function w with W = w / sqrtM,
  //   <Gamma(u,v), w> = -(1/8) sum kappa [U'V*' + V'U*' - U V* - V U*]
  //                                     [W' + W*' - W - W*],
  // U, V evaluated by multilinear interpolation (bounded, zero off the hull),
  // the W side through the resolved Hermite space. Collision invariants kill
  // the test bracket pointwise, so P Gamma = 0 to rounding.
  const int N = g.size();
  const int D = std::min(opts_.spectral_degree, g.order() - 1);
  const int NC = static_cast<int>(midx_.size());
  const SphereRule sr = SphereRule::make(opts_.angular_order);
  Vec U = u.cwiseQuotient(g.sqrt_maxwellian().cast<Scalar>());
  Vec V = v.cwiseQuotient(g.sqrt_maxwellian().cast<Scalar>());

  const int workers = detail::worker_count(N);
  std::vector<Vec> spikes(workers), accs(workers);
  for (int t = 0; t < workers; ++t) {
    spikes[t].setZero(N);
    accs[t].setZero(NC);
  }
  detail::parallel_blocks(N, [&](int tid, int begin, int end) {
    std::vector<double> buf(3 * (D + 2));
    RealVec sp(NC), ssp(NC);
    Vec& spike = spikes[tid];
    Vec& acc = accs[tid];
    for (int i = begin; i < end; ++i) {
      const Vector3d xi = g.nodes().row(i);
      for (int j = i + 1; j < N; ++j) {
        const Vector3d xj = g.nodes().row(j);
        const Vector3d vv = xi - xj;
        const double vn = vv.norm();
        const Vector3d vhat = vv / vn;
        Vector3d e1, e2;
        orthonormal_frame(vhat, e1, e2);
        const double wij = 2.0 * g.weights()[i] * g.weights()[j] *
                           std::sqrt(g.maxwellian()[i] * g.maxwellian()[j]);
        for (int qm = 0; qm < sr.nmu; ++qm) {
          const double mu = sr.mu[qm];
          const double smu = std::sqrt(std::max(0.0, 1.0 - mu * mu));
          for (int qp = 0; qp < sr.nphi; ++qp) {
            const Vector3d om = mu * vhat + smu * (sr.cphi[qp] * e1 + sr.sphi[qp] * e2);
            const Vector3d xp = xi - vn * mu * om;
            const Vector3d xsp = xj + vn * mu * om;
            const double kap = 0.125 * wij * (2.0 * sr.wmu[qm]) * sr.wphi * vn * mu;
            Scalar Up = interp_multilinear(g, U, xp);
            Scalar Usp = interp_multilinear(g, U, xsp);
            Scalar Vp = interp_multilinear(g, V, xp);
            Scalar Vsp = interp_multilinear(g, V, xsp);
            Scalar val = Up * Vsp + Vp * Usp - U[i] * V[j] - V[i] * U[j];
            Scalar kv = kap * val;
            spike[i] += kv / Scalar(g.sqrt_maxwellian()[i]);
            spike[j] += kv / Scalar(g.sqrt_maxwellian()[j]);
            tensor_eval(midx_, D, xp, buf.data(), sp);
            tensor_eval(midx_, D, xsp, buf.data(), ssp);
            acc -= kv * (sp + ssp).cast<Scalar>();
          }
        }
      }
    }
  });
  Vec spike = spikes[0], acc = accs[0];
  for (int t = 1; t < workers; ++t) {
    spike += spikes[t];
    acc += accs[t];
  }
  // test side: W' evaluates through psi_l = Hb_l sqrtM, whose nodal
  // transpose is transform_ / W
  Vec out = spike;
  if constexpr (std::is_same_v<Scalar, Complex>) {
    RealVec re = transform_.transpose() * acc.real();
    RealVec im = transform_.transpose() * acc.imag();
    out += re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>();
  } else {
    out += transform_.transpose() * acc;
  }
  return out.cwiseQuotient(g.weights().cast<Scalar>());
}

double CollisionBackend::estimate_coercivity(int samples, std::uint64_t seed) {
  if (samples < 10) throw CollisionError("coercivity estimate needs at least 10 samples");
  const VelocityGrid& g = *grid_;
  const int N = g.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;

  double lambda = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    RealVec u(N);
    for (int i = 0; i < N; ++i) u[i] = nd(rng) * g.sqrt_maxwellian()[i];
    RealVec micro = u - basis_->project(u);
    double num = -g.inner(micro, RealVec(apply_L(micro)));
    double den = 0;
    for (int i = 0; i < N; ++i) den += g.weights()[i] * nu_[i] * micro[i] * micro[i];
    if (den > 0) lambda = std::min(lambda, num / den);
  }

  // Generalized eigenproblem on the microscopic subspace when dense assembly
  // is affordable: exact minimum of the Rayleigh quotient.
  if (N <= 2500) {
    Eigen::MatrixXd nL = minus_L_dense();
    RealVec sw = g.weights().cwiseSqrt();
    Eigen::MatrixXd S = sw.asDiagonal() * nL * sw.cwiseInverse().asDiagonal();
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::MatrixXd Qs = sw.asDiagonal() * basis_->orthonormal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Qs);
    Eigen::MatrixXd Qfull = qr.householderQ();
    Eigen::MatrixXd V = Qfull.rightCols(N - basis_->count());
    Eigen::MatrixXd Sm = V.transpose() * S * V;
    Eigen::MatrixXd Dm = V.transpose() * nu_.asDiagonal() * V;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Sm, Dm);
    lambda = std::min(lambda, ges.eigenvalues().minCoeff());
  }

  if (!(lambda > 0))
    throw CollisionError("coercivity estimate is not positive: discretization broke coercivity");
  coercivity_ = lambda;
  return lambda;
}

Eigen::MatrixXd CollisionBackend::minus_L_dense() const {
  if (kind_ == CollisionKind::HardSphere) return minusL_;
  const int N = grid_->size();
  // -(L_s u) = {I-P}(nu {I-P} u)
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(N, N);
  for (int c = 0; c < basis_->count(); ++c) {
    RealVec e = basis_->orthonormal().col(c);
    P.noalias() += e * (e.cwiseProduct(grid_->weights())).transpose();
  }
  Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(N, N) - P;
  return IP * nu_.asDiagonal() * IP;
}

double coercivity_estimate(CollisionBackend& backend, int samples, std::uint64_t seed) {
  return backend.estimate_coercivity(samples, seed);
}

std::string CollisionBackend::summary() const {
  std::ostringstream os;
  os.precision(6);
  os << "backend kind=" << (kind_ == CollisionKind::HardSphere ? "hard_sphere" : "bgk_surrogate")
     << "\ngrid " << grid_->describe() << "\nnu = [" << diag_.nu_min << ", " << diag_.nu_max
     << "]\nnu/w = [" << diag_.nu_over_w_min << ", " << diag_.nu_over_w_max << "]"
     << "\nkernel_residual = " << diag_.kernel_residual
     << "\nsymmetrization_defect = " << diag_.symmetrization_defect
     << "\ndropped_weight = " << diag_.dropped_weight;
  if (coercivity_) os << "\ncoercivity = " << *coercivity_;
  os << "\n";
  return os.str();
}

template RealVec CollisionBackend::apply_L(const RealVec&) const;
template ComplexVec CollisionBackend::apply_L(const ComplexVec&) const;
template RealVec CollisionBackend::apply_gamma(const RealVec&, const RealVec&) const;
template ComplexVec CollisionBackend::apply_gamma(const ComplexVec&, const ComplexVec&) const;

}  // namespace vpblab
