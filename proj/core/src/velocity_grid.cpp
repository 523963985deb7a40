#include "vpblab/velocity_grid.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace vpblab {

namespace {

double maxwellian_1d(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

struct MomentEntry {
  const char* name;
  double expected;
  std::function<double(const Eigen::RowVectorXd&)> f;
};

// Maxwellian moment table; closed forms hold for any dimension n.
std::vector<MomentEntry> moment_table(int n) {
  double nn = n;
  std::vector<MomentEntry> t;
  t.push_back({"<1>", 1.0, [](const auto&) { return 1.0; }});
  t.push_back({"<xi_1^2>", 1.0, [](const auto& v) { return v[0] * v[0]; }});
  t.push_back({"<|xi|^2>", nn, [](const auto& v) { return v.squaredNorm(); }});
  t.push_back({"<xi_1^4>", 3.0, [](const auto& v) { return std::pow(v[0], 4); }});
  if (n >= 2)
    t.push_back({"<xi_1^2 xi_2^2>", 1.0,
                 [](const auto& v) { return v[0] * v[0] * v[1] * v[1]; }});
  t.push_back({"<|xi|^2 xi_1^2>", nn + 2.0,
               [](const auto& v) { return v.squaredNorm() * v[0] * v[0]; }});
  t.push_back({"<|xi|^4>", nn * (nn + 2.0),
               [](const auto& v) { return std::pow(v.squaredNorm(), 2); }});
  t.push_back({"<|xi|^4 xi_1^2>", (nn + 2.0) * (nn + 4.0),
               [](const auto& v) { return std::pow(v.squaredNorm(), 2) * v[0] * v[0]; }});
  t.push_back({"<|xi|^6>", nn * (nn + 2.0) * (nn + 4.0),
               [](const auto& v) { return std::pow(v.squaredNorm(), 3); }});
  return t;
}

}  // namespace

std::string to_string(GridStrategy s) {
  return s == GridStrategy::GaussHermiteTensor ? "gauss_hermite_tensor" : "uniform_truncated";
}

GridStrategy grid_strategy_from_string(const std::string& s) {
  if (s == "gauss_hermite_tensor") return GridStrategy::GaussHermiteTensor;
  if (s == "uniform_truncated") return GridStrategy::UniformTruncated;
  throw GridError("unknown grid strategy: " + s);
}

void hermite_normalized(double x, int mmax, double* out) {
  out[0] = 1.0;
  if (mmax >= 1) out[1] = x;
  for (int m = 1; m < mmax; ++m)
    out[m + 1] = (x * out[m] - std::sqrt(double(m)) * out[m - 1]) / std::sqrt(double(m + 1));
}

void gauss_hermite_rule(int order, RealVec& nodes, RealVec& weights) {
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite recurrence.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    double b = std::sqrt(double(i));
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights.resize(order);
  for (int i = 0; i < order; ++i) {
    double v = es.eigenvectors()(0, i);
    weights[i] = v * v;
  }
}

VelocityGrid VelocityGrid::build(int dim, int order, GridStrategy strategy) {
  if (dim < 1 || dim > 3) throw GridError("dim must be 1, 2 or 3");
  if (order < 4) throw GridError("order must be >= 4 to resolve fourth moments");

  VelocityGrid g;
  g.dim_ = dim;
  g.order_ = order;
  g.strategy_ = strategy;

  if (strategy == GridStrategy::GaussHermiteTensor) {
    gauss_hermite_rule(order, g.nodes1d_, g.weights1d_);
  } else {
    // Midpoint rule on [-R, R]; the Maxwellian tail beyond R = 8 is below 1e-20.
    const double R = 10.0;
    const double h = 2.0 * R / order;
    g.nodes1d_.resize(order);
    g.weights1d_.resize(order);
    for (int i = 0; i < order; ++i) {
      g.nodes1d_[i] = -R + (i + 0.5) * h;
      g.weights1d_[i] = h * maxwellian_1d(g.nodes1d_[i]);  // weight against M1, as for GH
    }
  }

  const int N = static_cast<int>(std::pow(order, dim));
  g.nodes_.resize(N, dim);
  g.weights_.resize(N);
  std::vector<int> idx(dim, 0);
  for (int i = 0; i < N; ++i) {
    double wm = 1.0;  // product of 1D weights against M1
    for (int d = 0; d < dim; ++d) {
      g.nodes_(i, d) = g.nodes1d_[idx[d]];
      wm *= g.weights1d_[idx[d]];
    }
    double m = 1.0;
    for (int d = 0; d < dim; ++d) m *= maxwellian_1d(g.nodes_(i, d));
    g.weights_[i] = wm / m;
    for (int d = dim - 1; d >= 0; --d) {
      if (++idx[d] < order) break;
      idx[d] = 0;
    }
  }
  g.finalize();
  return g;
}

void VelocityGrid::finalize() {
  const int N = size();
  maxwellian_.resize(N);
  sqrt_maxwellian_.resize(N);
  velocity_weight_.resize(N);
  for (int i = 0; i < N; ++i) {
    double m = 1.0;
    for (int d = 0; d < dim_; ++d) m *= maxwellian_1d(nodes_(i, d));
    maxwellian_[i] = m;
    sqrt_maxwellian_[i] = std::sqrt(m);
    velocity_weight_[i] = std::sqrt(1.0 + nodes_.row(i).squaredNorm());
  }

  moment_defect_ = 0;
  for (const auto& entry : moment_table(dim_)) {
    double acc = 0;
    for (int i = 0; i < N; ++i) acc += weights_[i] * maxwellian_[i] * entry.f(nodes_.row(i));
    moment_defect_ = std::max(moment_defect_, std::abs(acc - entry.expected));
  }

  // 1D differentiation matrix.
  deriv1d_.setZero(order_, order_);
  if (strategy_ == GridStrategy::GaussHermiteTensor) {
    // Spectral: transform to Hermite functions psi_m, differentiate with
    // psi_m' = (sqrt(m) psi_{m-1} - sqrt(m+1) psi_{m+1}) / 2, evaluate back.
    Eigen::MatrixXd psi(order_ + 1, order_);  // psi(m, j) at node j, m = 0..order
    std::vector<double> hb(order_ + 2);
    for (int j = 0; j < order_; ++j) {
      hermite_normalized(nodes1d_[j], order_, hb.data());
      double s = std::sqrt(maxwellian_1d(nodes1d_[j]));
      for (int m = 0; m <= order_; ++m) psi(m, j) = hb[m] * s;
    }
    Eigen::MatrixXd fwd(order_, order_);   // c_m = sum_j fwd(m,j) u_j
    Eigen::MatrixXd dpsi(order_, order_);  // psi_m'(x_j)
    for (int j = 0; j < order_; ++j) {
      double w_dxi = weights1d_[j] / maxwellian_1d(nodes1d_[j]);
      for (int m = 0; m < order_; ++m) {
        fwd(m, j) = w_dxi * psi(m, j);
        double lo = m > 0 ? std::sqrt(double(m)) * psi(m - 1, j) : 0.0;
        dpsi(j, m) = 0.5 * (lo - std::sqrt(double(m + 1)) * psi(m + 1, j));
      }
    }
    deriv1d_ = dpsi * fwd;
  } else {
    const double h = nodes1d_[1] - nodes1d_[0];
    for (int j = 0; j < order_; ++j) {
      if (j + 1 < order_) deriv1d_(j, j + 1) = 0.5 / h;
      if (j - 1 >= 0) deriv1d_(j, j - 1) = -0.5 / h;
      // beyond the cutoff the distribution is treated as zero
    }
  }
}

int VelocityGrid::flat_index(const std::vector<int>& idx) const {
  int flat = 0;
  for (int d = 0; d < dim_; ++d) flat = flat * order_ + idx[d];
  return flat;
}

std::string VelocityGrid::describe() const {
  return "dim=" + std::to_string(dim_) + " order=" + std::to_string(order_) +
         " strategy=" + to_string(strategy_);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> VelocityGrid::xi_derivative(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& f, int d) const {
  check_slice(f.size());
  if (d < 0 || d >= dim_) throw GridError("xi_derivative: dimension out of range");
  int stride = 1;
  for (int e = dim_ - 1; e > d; --e) stride *= order_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(size());
  for (int i = 0; i < size(); ++i) {
    const int pos = (i / stride) % order_;
    const int base = i - pos * stride;
    Scalar acc{};
    for (int m = 0; m < order_; ++m) acc += deriv1d_(pos, m) * f[base + m * stride];
    out[i] = acc;
  }
  return out;
}

template RealVec VelocityGrid::xi_derivative(const RealVec&, int) const;
template ComplexVec VelocityGrid::xi_derivative(const ComplexVec&, int) const;

}  // namespace vpblab
