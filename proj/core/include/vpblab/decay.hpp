#pragma once

#include "vpblab/mode_dynamics.hpp"

namespace vpblab {

class DecayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Domain { WholeSpaceRadial, Torus };

/// Named spatial profile with closed-form transform and L^q norms.
/// Fourier convention: g_hat(k) = integral exp(-i k.x) g(x) dx, so
/// g_hat(0) = integral g dx and ||g||^2 = (2 pi)^-n integral |g_hat|^2 dk.
struct SpatialProfile {
  enum class Kind { Gaussian, Indicator };
  Kind kind = Kind::Gaussian;
  int dim = 3;
  double amplitude = 1.0;
  double width = 1.0;  // gaussian: scale s in exp(-|x|^2/(2 s^2)); indicator: radius

  double fourier(double k) const;  // radial transform at |k| = k
  double integral() const;
  double lq_norm(int q) const;  // q in {1, 2}
};

/// Named velocity profile evaluated on a grid.
struct VelocityProfile {
  enum class Kind {
    Maxwellian,                 // sqrt(M)
    Temperature,                // (|xi|^2 - n) sqrt(M), the P1 temperature mode
    MaxwellianPlusTemperature,  // sum of the two above
    RadialMicro,                // {I-P}(|xi|^4 sqrt(M)), normalized
    Xi1SquaredMicro             // {I-P}(xi_1^2 sqrt(M)), anisotropic, torus only
  };
  Kind kind = Kind::Maxwellian;

  RealVec values(const VelocityGrid& grid) const;
  bool isotropic() const { return kind != Kind::Xi1SquaredMicro; }
  static VelocityProfile from_string(const std::string& name);
  std::string name() const;
};

/// Separable initial data u0(x, xi) = g(x) chi(xi) with optional projection
/// flags ({I-P0} or {I-P} applied per mode).
struct DataSpec {
  SpatialProfile g;
  VelocityProfile chi;
  bool subtract_p0 = false;
  bool microscopic = false;

  /// ||u0||_{Z_q} = ||g||_{L^q_x} ||chi_eff||_{L^2_xi}   (separability)
  double zq_norm(const VelocityGrid& grid, int q) const;
  double l2_norm(const VelocityGrid& grid) const;
  RealVec effective_chi(const VelocityGrid& grid) const;
};

struct ModeEntry {
  RealVec k;
  double weight;  // k-integration weight (radial rule or lattice count)
  ComplexVec u;
};

struct SpectralField {
  Domain domain = Domain::WholeSpaceRadial;
  const VelocityGrid* grid = nullptr;
  const CollisionBackend* backend = nullptr;
  std::vector<ModeEntry> modes;
  double t = 0;
  bool zero_mean = false;  // torus: macro part of the k = 0 mode vanishes
};

struct WholeSpaceKSet {
  int radial_points = 200;
  double k_max = 8.0;
};

struct TorusKSet {
  int k_max = 16;  // integer lattice |k|_inf <= k_max, half stored by reality
};

SpectralField make_initial_data(const DataSpec& spec, const VelocityGrid& grid,
                                const CollisionBackend& backend, const WholeSpaceKSet& kset);
SpectralField make_initial_data(const DataSpec& spec, const VelocityGrid& grid,
                                const CollisionBackend& backend, const TorusKSet& kset,
                                bool enforce_zero_mean);

/// Advances every mode to time t_target (parallel over modes, each with its
/// own stable step). Optional microscopic source h(t, k) = envelope(t)
/// g_hat(k) chi_src.
struct FieldSource {
  RealVec chi;                                  // microscopic velocity profile
  SpatialProfile g;                             // spatial factor
  std::function<double(double)> envelope;       // temporal factor
};
void advance_field(SpectralField& field, double t_target, const FieldSource* source = nullptr);

/// Sum over modes of |k^(2 alpha)| (||u||^2 + [field] |a+nc|^2/|k|^2) with the
/// domain's k-measure; the whole-space radial rule applies the exact angular
/// moment of omega^(2 alpha).
double reconstruct_norm(const SpectralField& field, const std::vector<int>& alpha,
                        bool include_field_term);

enum class FitModel { Algebraic, Exponential };

struct FitResult {
  double value = 0;     // exponent (algebraic) or rate (exponential)
  double residual = 0;  // RMS residual of the linear fit in log space
};

/// Least squares of log(y) against log(1+t) (algebraic) or t (exponential).
FitResult fit_decay(const std::vector<double>& times, const std::vector<double>& values,
                    double t0, double t1, FitModel model);

/// sigma_{q,m} = n/2 (1/q - 1/2) + m/2.
double sigma_index(int n, int q, int m);

struct DecayCaseConfig {
  int dim = 3;
  int grid_order = 6;
  GridStrategy strategy = GridStrategy::GaussHermiteTensor;
  WholeSpaceKSet kset;
  DataSpec data;
  std::vector<int> alpha, alpha_prime;  // multi-indices, alpha_prime <= alpha
  int q = 1;
  double t_end = 400;
  double out_interval = 2.0;
  double fit_t0 = 20, fit_t1 = 400;
  double tolerance = 0.1;
};

struct DecaySeries {
  std::vector<double> times;
  std::vector<double> norms;        // sqrt(||.||^2 + field term)
  std::vector<double> field_norms;  // sqrt(field term alone)
};

struct DecayReport {
  DecaySeries series;
  double exponent = 0, residual = 0;
  double target_sigma = 0;
  bool decay_claimed = true;  // false when target_sigma <= 0
  bool pass = false;
  std::string note;
};

DecayReport run_linear_decay_case(const DecayCaseConfig& config, const CollisionBackend& backend);

struct DuhamelConfig {
  int dim = 3;
  Domain domain = Domain::WholeSpaceRadial;  // torus admits anisotropic sources
  WholeSpaceKSet kset;
  TorusKSet torus_kset;
  SpatialProfile g;                      // spatial factor of the source
  VelocityProfile chi;                   // microscopic velocity factor
  double envelope_rate = 1.0;            // h ~ exp(-rate s)
  int q = 1;
  double t_end = 40;
  double out_interval = 0.5;
};

struct DuhamelReport {
  std::vector<double> times, lhs2, rhs, ratio;
  double sup_ratio = 0;
  double sup_ratio_half_horizon = 0;  // sup over [0, t_end/2] for stability checks
  bool pass = false;                  // finite and stable under horizon doubling
};

DuhamelReport run_duhamel_case(const DuhamelConfig& config, const CollisionBackend& backend);

struct TorusCaseConfig {
  int dim = 1;
  TorusKSet kset;
  DataSpec data;
  bool enforce_zero_mean = true;
  double t_end = 80;
  double out_interval = 0.25;
  double fit_t0 = 30, fit_t1 = 80;
  // The norm of a hypocoercive spiral oscillates at the slowest pair's beat
  // frequency. Averaging |u|^2 over a fixed window multiplies a clean
  // exponential by a constant, so the fitted rate is untouched while the
  // oscillation cancels. 0 disables.
  double smoothing_window = 6.0;
};

/// sqrt of the sliding Hann-weighted mean of values^2; entries without a
/// full window are dropped (times shrink accordingly).
void rms_smooth(std::vector<double>& times, std::vector<double>& values, double window);

/// Exponential fit with beat-frequency suppression: a pilot fit flattens the
/// envelope, the flattened square is Hann-averaged, and the rate is refit.
FitResult fit_exponential_smoothed(std::vector<double> times, std::vector<double> values,
                                   double t0, double t1, double window);

struct TorusReport {
  DecaySeries series;
  double rate = 0, residual = 0;
  double certified_floor = 0;  // lambda |k|^2/(1+|k|^2) at |k| = 1, i.e. lambda/2
  bool pass = false;
};

TorusReport run_torus_case(const TorusCaseConfig& config, const CollisionBackend& backend,
                           const EnergyFunctionalParams& params);

}  // namespace vpblab
