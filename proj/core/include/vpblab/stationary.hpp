#pragma once

#include "vpblab/velocity_grid.hpp"

namespace vpblab {

class StationaryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StationaryGeometry { Radial3D, Torus1D };

/// Background density rho_bar = 1 + eps * exp(-(d - center)^2 / (2 width^2)),
/// d = r (radial) or the periodic distance to center (torus).
struct BackgroundSpec {
  double eps = 1e-3;
  double width = 1.0;
  double center = 2.0;
};

struct StationaryConfig {
  StationaryGeometry geometry = StationaryGeometry::Radial3D;
  int points = 400;
  double cutoff = 20.0;  // radial far-field radius R with phi(R) = 0
  double tol = 1e-11;
  int max_iterations = 40;
  double smallness = 0.2;  // admissible ||rho_bar - 1||_inf
};

struct StationaryProfile {
  StationaryGeometry geometry;
  RealVec nodes;  // r or x
  RealVec phi;
  RealVec rho;
  double residual = 0;
  std::vector<double> newton_history;  // residual after each Newton step
};

/// Newton iteration on Lap(phi) = exp(phi) - rho_bar with the geometry's
/// discrete Laplacian; quadratic convergence recorded in newton_history.
/// `initial_guess` (grid-sized) seeds the iteration; default is zero.
StationaryProfile solve_stationary(const BackgroundSpec& rho, const StationaryConfig& config,
                                   const RealVec* initial_guess = nullptr);

/// sup over the grid of (1+|x|)^theta sum_{|a| <= m} |d^a g| with
/// finite-difference derivatives; m <= 2.
double weighted_sup_norm(const RealVec& nodes, const RealVec& values, int m, double theta);

}  // namespace vpblab
