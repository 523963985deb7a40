#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpblab/velocity_grid.hpp"

namespace vpblab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Validate, Modes, Decay, Duhamel, Torus, Nonlinear, Stationary };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);
std::vector<std::string> experiment_kind_names();

/// Flat-but-sectioned experiment description; every field has a default and
/// the whole object round-trips through JSON text.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Validate;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  struct Grid {
    int dim = 3;
    int order = 8;
    std::string strategy = "gauss_hermite_tensor";
  } grid;

  struct Backend {
    std::string kind = "bgk_surrogate";  // or "hard_sphere"
    int angular_order = 6;
    int spectral_degree = 8;
  } backend;

  struct Modes {
    std::vector<double> k_values = {0.05, 0.5, 1.0, 5.0, 20.0};
    int trajectories = 4;    // calibration sample trajectories per k
    int audit_states = 20;   // fresh audited states per k
    double audit_horizon = 2.0;
  } modes;

  struct Data {
    std::string spatial = "gaussian";  // or "indicator"
    double amplitude = 1.0;
    double width = 1.0;
    std::string velocity = "maxwellian";
    bool subtract_p0 = false;
    bool microscopic = false;
  } data;

  struct Decay {
    int q = 1;
    std::vector<int> alpha, alpha_prime;
    int radial_points = 200;
    double k_max = 8.0;
    double t_end = 400;
    double out_interval = 2.0;
    double fit_t0 = 20, fit_t1 = 400;
    double tolerance = 0.1;
  } decay;

  struct Duhamel {
    std::string domain = "whole_space_radial";
    double envelope_rate = 1.0;
    int q = 1;
    double t_end = 40;
    double out_interval = 0.5;
    int radial_points = 200;
    double k_max = 8.0;
    int torus_k_max = 4;
    std::string velocity = "radial_micro";
  } duhamel;

  struct Torus {
    int k_max = 16;
    bool enforce_zero_mean = true;
    double t_end = 80;
    double out_interval = 0.25;
    double fit_t0 = 30, fit_t1 = 80;
  } torus;

  struct Nonlinear {
    int x_points = 32;
    double amplitude = 1e-3;
    double t_end = 20;
    double out_interval = 0.25;
    int deriv_order = 2;
    double eps_sup = 0.25;
    std::string velocity = "maxwellian_plus_temperature";
  } nonlinear;

  struct Stationary {
    std::string geometry = "radial_3d";  // or "torus_1d"
    double eps = 1e-3;
    double width = 1.0;
    double center = 2.0;
    int points = 400;
    double cutoff = 20.0;
    double tol = 1e-11;
  } stationary;
};

/// Parses JSON text ("" and "{}" give the defaults); unknown keys are
/// rejected with their dotted location.
ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& config);

/// The sigma_{q,m} target echoed by decay configs (generic data: m-1).
double config_sigma_target(const ExperimentConfig& config);

}  // namespace vpblab
