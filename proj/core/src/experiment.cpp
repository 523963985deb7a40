#include "vpblab/experiment.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "vpblab/collision.hpp"
#include "vpblab/decay.hpp"
#include "vpblab/mode_dynamics.hpp"
#include "vpblab/nonlinear.hpp"
#include "vpblab/stationary.hpp"

namespace vpblab {

using nlohmann::json;

namespace {

std::string csv_series(const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& columns) {
  std::ostringstream os;
  os.precision(17);
  for (size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << "\n";
  const size_t rows = columns.empty() ? 0 : columns[0].size();
  for (size_t r = 0; r < rows; ++r) {
    for (size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c][r];
    os << "\n";
  }
  return os.str();
}

VelocityGrid build_grid(const ExperimentConfig& c) {
  return VelocityGrid::build(c.grid.dim, c.grid.order,
                             grid_strategy_from_string(c.grid.strategy));
}

CollisionBackend build_backend(const ExperimentConfig& c, const VelocityGrid& grid) {
  if (c.backend.kind == "hard_sphere") {
    HardSphereOptions opts;
    opts.angular_order = c.backend.angular_order;
    opts.spectral_degree = c.backend.spectral_degree;
    return CollisionBackend::hard_sphere(grid, opts);
  }
  return CollisionBackend::bgk(grid);
}

DataSpec build_data(const ExperimentConfig& c) {
  DataSpec d;
  d.g.kind = c.data.spatial == "indicator" ? SpatialProfile::Kind::Indicator
                                           : SpatialProfile::Kind::Gaussian;
  d.g.dim = c.grid.dim;
  d.g.amplitude = c.data.amplitude;
  d.g.width = c.data.width;
  d.chi = VelocityProfile::from_string(c.data.velocity);
  d.subtract_p0 = c.data.subtract_p0;
  d.microscopic = c.data.microscopic;
  return d;
}

// ---- validate: the cross-module invariant suite ----------------------------

json run_validate(const ExperimentConfig& c, bool& passed) {
  json checks = json::array();
  auto record = [&](const std::string& name, bool ok, double value) {
    checks.push_back({{"name", name}, {"pass", ok}, {"value", value}});
    passed = passed && ok;
  };
  passed = true;

  VelocityGrid grid = build_grid(c);
  record("moment_table", grid.moment_defect() < 1e-10, grid.moment_defect());

  BasisSet basis(grid);
  record("basis_gram", basis.gram_defect() < 1e-8, basis.gram_defect());

  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> nd;
  auto random_slice = [&]() {
    RealVec u(grid.size());
    for (int i = 0; i < grid.size(); ++i) u[i] = nd(rng) * grid.sqrt_maxwellian()[i];
    return u;
  };

  double idem = 0, orth = 0, split = 0, cross = 0;
  for (int s = 0; s < 100; ++s) {
    RealVec u = random_slice();
    RealVec pu = project(grid, u, Projector::P);
    idem = std::max(idem, grid.norm(RealVec(project(grid, pu, Projector::P) - pu)));
    RealVec micro = u - pu;
    for (int cc = 0; cc < basis.count(); ++cc)
      orth = std::max(orth,
                      std::abs(grid.inner(micro, RealVec(basis.orthonormal().col(cc)))));
    RealVec p0 = project(grid, u, Projector::P0);
    RealVec p1 = project(grid, u, Projector::P1);
    split = std::max(split, grid.norm(RealVec(pu - p0 - p1)));
    cross = std::max(cross, grid.norm(RealVec(project(grid, p1, Projector::P0))));
  }
  record("projection_idempotent", idem <= 1e-10, idem);
  record("projection_orthogonal", orth <= 1e-10, orth);
  record("projection_split", split <= 1e-10, split);
  record("projection_p0p1", cross <= 1e-10, cross);

  CollisionBackend backend = build_backend(c, grid);
  record("kernel_residual",
         backend.diagnostics().kernel_residual <= (backend.kind() == CollisionKind::HardSphere
                                                       ? 1e-3
                                                       : 1e-10),
         backend.diagnostics().kernel_residual);
  double lam = backend.estimate_coercivity(32, c.seed);
  record("coercivity_positive", lam > 0, lam);

  double selfadj = 0, nonpos = 0;
  for (int s = 0; s < 32; ++s) {
    RealVec u = random_slice(), v = random_slice();
    double uv = grid.inner(RealVec(backend.apply_L(u)), v) -
                grid.inner(u, RealVec(backend.apply_L(v)));
    selfadj = std::max(selfadj, std::abs(uv) / (grid.norm(u) * grid.norm(v)));
    nonpos = std::max(nonpos, grid.inner(RealVec(backend.apply_L(u)), u));
  }
  record("self_adjoint", selfadj <= 1e-8, selfadj);
  record("non_positive", nonpos <= 1e-10, nonpos);

  json out;
  out["kind"] = "validate";
  out["checks"] = checks;
  out["pass"] = passed;
  return out;
}

// ---- modes ------------------------------------------------------------------

json run_modes(const ExperimentConfig& c, bool& passed) {
  VelocityGrid grid = build_grid(c);
  CollisionBackend backend = build_backend(c, grid);
  backend.estimate_coercivity(16, c.seed);

  std::vector<RealVec> ks;
  for (double kv : c.modes.k_values) {
    RealVec k = RealVec::Zero(grid.dim());
    k[0] = kv;
    ks.push_back(k);
  }
  EnergyFunctionalParams params =
      calibrate_functional(backend, grid, ks, c.modes.trajectories, c.seed);

  // fresh audited states
  std::mt19937_64 rng(c.seed + 100);
  std::normal_distribution<double> nd;
  auto random_state = [&]() {
    ComplexVec u(grid.size());
    for (int i = 0; i < grid.size(); ++i)
      u[i] = Complex(nd(rng), nd(rng)) * grid.sqrt_maxwellian()[i];
    return ComplexVec(u / grid.norm(u));
  };
  double worst_free = std::numeric_limits<double>::infinity();
  double worst_l2 = worst_free, worst_comb = worst_free;
  for (const auto& k : ks) {
    ModeOperator op(k, backend);
    const double dt = op.stability_dt();
    for (int s = 0; s < c.modes.audit_states; ++s) {
      for (int with_src = 0; with_src <= 1; ++with_src) {
        ComplexVec h = random_state();
        h -= backend.basis().project(h);
        ModeSource src = [&h](double) { return h; };
        ModeTrajectory traj = evolve_mode(op, random_state(), c.modes.audit_horizon, dt,
                                          with_src ? &src : nullptr, 1);
        LyapunovReport rep = lyapunov_audit(backend, traj, params);
        worst_free = std::min(worst_free, rep.worst_free_margin);
        worst_l2 = std::min(worst_l2, rep.worst_l2_margin);
        worst_comb = std::min(worst_comb, rep.worst_combined_margin);
      }
    }
  }
  passed = worst_free >= -1e-6 && worst_l2 >= -1e-6 && worst_comb >= -1e-6 &&
           params.lambda > 0;

  json out;
  out["kind"] = "modes";
  out["kappa1"] = params.kappa1;
  out["kappa2"] = params.kappa2;
  out["lambda"] = params.lambda;
  out["source_c"] = params.source_c;
  out["equiv_lo"] = params.equiv_lo;
  out["equiv_hi"] = params.equiv_hi;
  out["worst_free_margin"] = worst_free;
  out["worst_l2_margin"] = worst_l2;
  out["worst_combined_margin"] = worst_comb;
  out["pass"] = passed;
  return out;
}

// ---- decay / duhamel / torus -------------------------------------------------

json run_decay(const ExperimentConfig& c, bool& passed,
               std::map<std::string, std::string>* csv) {
  VelocityGrid grid = build_grid(c);
  CollisionBackend backend = build_backend(c, grid);

  DecayCaseConfig dc;
  dc.dim = c.grid.dim;
  dc.grid_order = c.grid.order;
  dc.kset.radial_points = c.decay.radial_points;
  dc.kset.k_max = c.decay.k_max;
  dc.data = build_data(c);
  dc.alpha = c.decay.alpha;
  dc.alpha_prime = c.decay.alpha_prime;
  dc.q = c.decay.q;
  dc.t_end = c.decay.t_end;
  dc.out_interval = c.decay.out_interval;
  dc.fit_t0 = c.decay.fit_t0;
  dc.fit_t1 = c.decay.fit_t1;
  dc.tolerance = c.decay.tolerance;

  DecayReport rep = run_linear_decay_case(dc, backend);
  passed = rep.pass;
  if (csv)
    (*csv)["series.csv"] = csv_series({"t", "norm", "field_norm"},
                                      {rep.series.times, rep.series.norms,
                                       rep.series.field_norms});
  json out;
  out["kind"] = "decay";
  out["exponent"] = rep.exponent;
  out["residual"] = rep.residual;
  out["target_sigma"] = rep.target_sigma;
  out["decay_claimed"] = rep.decay_claimed;
  out["note"] = rep.note;
  out["pass"] = rep.pass;
  return out;
}

json run_duhamel(const ExperimentConfig& c, bool& passed,
                 std::map<std::string, std::string>* csv) {
  VelocityGrid grid = build_grid(c);
  CollisionBackend backend = build_backend(c, grid);

  DuhamelConfig dc;
  dc.dim = c.grid.dim;
  dc.domain = c.duhamel.domain == "torus" ? Domain::Torus : Domain::WholeSpaceRadial;
  dc.kset.radial_points = c.duhamel.radial_points;
  dc.kset.k_max = c.duhamel.k_max;
  dc.torus_kset.k_max = c.duhamel.torus_k_max;
  dc.g.dim = c.grid.dim;
  dc.g.amplitude = c.data.amplitude;
  dc.g.width = c.data.width;
  dc.chi = VelocityProfile::from_string(c.duhamel.velocity);
  dc.envelope_rate = c.duhamel.envelope_rate;
  dc.q = c.duhamel.q;
  dc.t_end = c.duhamel.t_end;
  dc.out_interval = c.duhamel.out_interval;

  DuhamelReport rep = run_duhamel_case(dc, backend);
  passed = rep.pass;
  if (csv)
    (*csv)["duhamel.csv"] =
        csv_series({"t", "lhs2", "rhs", "ratio"}, {rep.times, rep.lhs2, rep.rhs, rep.ratio});
  json out;
  out["kind"] = "duhamel";
  out["sup_ratio"] = rep.sup_ratio;
  out["sup_ratio_half_horizon"] = rep.sup_ratio_half_horizon;
  out["pass"] = rep.pass;
  return out;
}

json run_torus(const ExperimentConfig& c, bool& passed,
               std::map<std::string, std::string>* csv) {
  VelocityGrid grid = build_grid(c);
  CollisionBackend backend = build_backend(c, grid);
  backend.estimate_coercivity(16, c.seed);

  std::vector<RealVec> ks;
  for (double kv : {1.0, 2.0, 4.0}) {
    RealVec k = RealVec::Zero(grid.dim());
    k[0] = kv;
    ks.push_back(k);
  }
  EnergyFunctionalParams params = calibrate_functional(backend, grid, ks, 4, c.seed);

  TorusCaseConfig tc;
  tc.dim = c.grid.dim;
  tc.kset.k_max = c.torus.k_max;
  tc.data = build_data(c);
  tc.enforce_zero_mean = c.torus.enforce_zero_mean;
  tc.t_end = c.torus.t_end;
  tc.out_interval = c.torus.out_interval;
  tc.fit_t0 = c.torus.fit_t0;
  tc.fit_t1 = c.torus.fit_t1;

  TorusReport rep = run_torus_case(tc, backend, params);
  passed = rep.pass;
  if (csv)
    (*csv)["series.csv"] =
        csv_series({"t", "norm"}, {rep.series.times, rep.series.norms});
  json out;
  out["kind"] = "torus";
  out["rate"] = rep.rate;
  out["residual"] = rep.residual;
  out["certified_floor"] = rep.certified_floor;
  out["lambda"] = params.lambda;
  out["pass"] = rep.pass;
  return out;
}

// ---- nonlinear -----------------------------------------------------------------

json run_nonlinear_kind(const ExperimentConfig& c, bool& passed,
                        std::map<std::string, std::string>* csv) {
  VelocityGrid grid = VelocityGrid::build(1, c.grid.order,
                                          grid_strategy_from_string(c.grid.strategy));
  CollisionBackend backend = CollisionBackend::bgk(grid);
  backend.estimate_coercivity(16, c.seed);

  NonlinearConfig nc;
  nc.x_points = c.nonlinear.x_points;
  nc.amplitude = c.nonlinear.amplitude;
  nc.t_end = c.nonlinear.t_end;
  nc.out_interval = c.nonlinear.out_interval;
  nc.deriv_order = c.nonlinear.deriv_order;
  nc.eps_sup = c.nonlinear.eps_sup;
  nc.chi = VelocityProfile::from_string(c.nonlinear.velocity);

  TorusGrid1D xgrid(nc.x_points);
  NonlinearParams params = calibrate_nonlinear(nc, backend, xgrid);
  NonlinearResult res = run_nonlinear(nc, backend, params);

  const double amp2 = nc.amplitude * nc.amplitude;
  passed = !res.audits.blew_up && res.audits.worst_energy_margin >= -1e-6 &&
           res.audits.max_pg1 <= 1e-8 && res.audits.max_p0g2 <= 1e-8 &&
           res.audits.worst_mass_drift <= 1e-8 &&
           res.audits.hm1_residual <= 100 * amp2 && res.audits.hm3_residual <= 100 * amp2;

  if (csv) {
    std::vector<double> t, E, D, Eh, Ehw, Dw, Ef, mass, e0, e1, ehw;
    for (const auto& e : res.ledger.entries) {
      t.push_back(e.t);
      E.push_back(e.f.energy);
      D.push_back(e.f.dissipation);
      Eh.push_back(e.f.high);
      Ehw.push_back(e.f.high_w);
      Dw.push_back(e.f.dissipation_w);
      Ef.push_back(e.f.efree);
      mass.push_back(e.f.mass);
      e0.push_back(e.e_inf_0);
      e1.push_back(e.e_inf_1);
      ehw.push_back(e.ehw_inf);
    }
    (*csv)["ledger.csv"] = csv_series(
        {"t", "E", "D", "Eh", "Ehw", "Dw", "Efree", "mass", "Einf0", "Einf1", "Ehwinf"},
        {t, E, D, Eh, Ehw, Dw, Ef, mass, e0, e1, ehw});
  }

  json out;
  out["kind"] = "nonlinear";
  out["lambda"] = params.lambda;
  out["kappa0"] = params.kappa0;
  out["kappa3"] = params.kappa3;
  out["kappa4"] = params.kappa4;
  out["kappa5"] = params.kappa5;
  out["worst_energy_margin"] = res.audits.worst_energy_margin;
  out["worst_mass_drift"] = res.audits.worst_mass_drift;
  out["max_pg1"] = res.audits.max_pg1;
  out["max_p0g2"] = res.audits.max_p0g2;
  out["hm1_residual"] = res.audits.hm1_residual;
  out["hm3_residual"] = res.audits.hm3_residual;
  out["lem_es_margin"] = res.audits.lem_es_margin;
  out["eps0"] = res.ledger.eps0;
  out["eps0_nu"] = res.ledger.eps0_nu;
  out["eps1"] = res.ledger.eps1;
  out["blew_up"] = res.audits.blew_up;
  out["pass"] = passed;
  return out;
}

// ---- stationary ------------------------------------------------------------------

json run_stationary(const ExperimentConfig& c, bool& passed,
                    std::map<std::string, std::string>* csv) {
  StationaryConfig sc;
  sc.geometry = c.stationary.geometry == "torus_1d" ? StationaryGeometry::Torus1D
                                                    : StationaryGeometry::Radial3D;
  sc.points = c.stationary.points;
  sc.cutoff = c.stationary.cutoff;
  sc.tol = c.stationary.tol;

  BackgroundSpec bg;
  bg.eps = c.stationary.eps;
  bg.width = c.stationary.width;
  bg.center = c.stationary.center;

  StationaryProfile full = solve_stationary(bg, sc);
  BackgroundSpec half = bg;
  half.eps = 0.5 * bg.eps;
  StationaryProfile halfp = solve_stationary(half, sc);

  const double rfull = full.phi.cwiseAbs().maxCoeff();
  const double rhalf = halfp.phi.cwiseAbs().maxCoeff();
  const double ratio = rfull / rhalf;
  passed = std::abs(ratio - 2.0) <= 0.2 && full.residual <= 1e-10 && halfp.residual <= 1e-10;

  if (csv) {
    std::vector<double> r(full.nodes.data(), full.nodes.data() + full.nodes.size());
    std::vector<double> phi(full.phi.data(), full.phi.data() + full.phi.size());
    std::vector<double> rho(full.rho.data(), full.rho.data() + full.rho.size());
    (*csv)["profile.csv"] = csv_series({"x", "phi", "rho"}, {r, phi, rho});
    std::vector<double> it, res;
    for (size_t i = 0; i < full.newton_history.size(); ++i) {
      it.push_back(static_cast<double>(i));
      res.push_back(full.newton_history[i]);
    }
    (*csv)["newton.csv"] = csv_series({"iteration", "residual"}, {it, res});
  }

  json out;
  out["kind"] = "stationary";
  out["phi_max"] = rfull;
  out["phi_max_half_eps"] = rhalf;
  out["scaling_ratio"] = ratio;
  out["residual"] = full.residual;
  out["newton_iterations"] = full.newton_history.size();
  out["pass"] = passed;
  return out;
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& config,
                         std::map<std::string, std::string>* csv_bodies) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = config;
  bool passed = false;
  json summary;
  switch (config.kind) {
    case ExperimentKind::Validate: summary = run_validate(config, passed); break;
    case ExperimentKind::Modes: summary = run_modes(config, passed); break;
    case ExperimentKind::Decay: summary = run_decay(config, passed, csv_bodies); break;
    case ExperimentKind::Duhamel: summary = run_duhamel(config, passed, csv_bodies); break;
    case ExperimentKind::Torus: summary = run_torus(config, passed, csv_bodies); break;
    case ExperimentKind::Nonlinear:
      summary = run_nonlinear_kind(config, passed, csv_bodies);
      break;
    case ExperimentKind::Stationary:
      summary = run_stationary(config, passed, csv_bodies);
      break;
  }
  summary["seed"] = config.seed;
  rec.summary_json = summary.dump(2);
  rec.passed = passed;
  if (csv_bodies)
    for (const auto& [name, _] : *csv_bodies) rec.csv_files.push_back(name);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void persist(const RunRecord& record, const std::map<std::string, std::string>& csv_bodies) {
  namespace fs = std::filesystem;
  fs::create_directories(record.config.out_dir);
  const fs::path out(record.config.out_dir);
  {
    std::ofstream f(out / "summary.json");
    f << record.summary_json << "\n";
  }
  {
    json meta;
    meta["version"] = kVersion;
    meta["wall_seconds"] = record.wall_seconds;
    meta["passed"] = record.passed;
    meta["config"] = json::parse(serialize_config(record.config));
    meta["csv_files"] = record.csv_files;
    std::ofstream f(out / "record.json");
    f << meta.dump(2) << "\n";
  }
  for (const auto& [name, body] : csv_bodies) {
    std::ofstream f(out / name);
    f << body;
  }
}

namespace {

void flatten(const json& j, const std::string& prefix,
             std::map<std::string, double>& out, std::map<std::string, std::string>& strs) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out, strs);
  } else if (j.is_array()) {
    for (size_t i = 0; i < j.size(); ++i)
      flatten(j[i], prefix + "[" + std::to_string(i) + "]", out, strs);
  } else if (j.is_number()) {
    out[prefix] = j.get<double>();
  } else if (j.is_boolean()) {
    out[prefix] = j.get<bool>() ? 1.0 : 0.0;
  } else if (j.is_string()) {
    strs[prefix] = j.get<std::string>();
  }
}

}  // namespace

std::vector<DiffEntry> compare_summaries(const std::string& summary_a,
                                         const std::string& summary_b,
                                         const std::map<std::string, double>& tolerances) {
  json a = json::parse(summary_a), b = json::parse(summary_b);
  if (a.value("kind", "") != b.value("kind", ""))
    throw ConfigError("cannot compare records of different kinds: " +
                      a.value("kind", "?") + " vs " + b.value("kind", "?"));
  std::map<std::string, double> fa, fb;
  std::map<std::string, std::string> sa, sb;
  flatten(a, "", fa, sa);
  flatten(b, "", fb, sb);
  std::vector<DiffEntry> diffs;
  for (const auto& [key, va] : fa) {
    auto it = fb.find(key);
    if (it == fb.end()) continue;
    const double delta = std::abs(va - it->second);
    double tol = 0;
    if (auto t = tolerances.find(key); t != tolerances.end()) tol = t->second;
    if (delta > 0 || tol > 0) {
      DiffEntry d{key, va, it->second, delta, tol, delta <= tol};
      if (delta > 0) diffs.push_back(d);
    }
  }
  return diffs;
}

}  // namespace vpblab
