#include "vpblab/config.hpp"

#include <json.hpp>
#include <map>

#include "vpblab/decay.hpp"

namespace vpblab {

using nlohmann::json;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Validate: return "validate";
    case ExperimentKind::Modes: return "modes";
    case ExperimentKind::Decay: return "decay";
    case ExperimentKind::Duhamel: return "duhamel";
    case ExperimentKind::Torus: return "torus";
    case ExperimentKind::Nonlinear: return "nonlinear";
    case ExperimentKind::Stationary: return "stationary";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::Validate, ExperimentKind::Modes, ExperimentKind::Decay,
                 ExperimentKind::Duhamel, ExperimentKind::Torus, ExperimentKind::Nonlinear,
                 ExperimentKind::Stationary})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind: " + s);
}

std::vector<std::string> experiment_kind_names() {
  return {"validate", "modes", "decay", "duhamel", "torus", "nonlinear", "stationary"};
}

namespace {

// Pulls known keys out of a JSON object and rejects leftovers by dotted path.
class Section {
 public:
  Section(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
    if (j_.is_null()) j_ = json::object();
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
    j_.erase(it);
  }

  json sub(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return json::object();
    json v = *it;
    j_.erase(it);
    return v;
  }

  void finish() const {
    if (!j_.empty())
      throw ConfigError("unknown key '" + path_ + "." + j_.begin().key() + "'");
  }

 private:
  json j_;
  std::string path_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j;
  if (text.empty() || text.find_first_not_of(" \t\r\n") == std::string::npos) {
    j = json::object();
  } else {
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }

  ExperimentConfig c;
  Section root(j, "config");
  {
    std::string kind = to_string(c.kind);
    root.read("kind", kind);
    c.kind = experiment_kind_from_string(kind);
  }
  root.read("seed", c.seed);
  root.read("out_dir", c.out_dir);

  {
    Section s(root.sub("grid"), "grid");
    s.read("dim", c.grid.dim);
    s.read("order", c.grid.order);
    s.read("strategy", c.grid.strategy);
    grid_strategy_from_string(c.grid.strategy);  // validate
    s.finish();
  }
  {
    Section s(root.sub("backend"), "backend");
    s.read("kind", c.backend.kind);
    if (c.backend.kind != "bgk_surrogate" && c.backend.kind != "hard_sphere")
      throw ConfigError("backend.kind must be bgk_surrogate or hard_sphere");
    s.read("angular_order", c.backend.angular_order);
    s.read("spectral_degree", c.backend.spectral_degree);
    s.finish();
  }
  {
    Section s(root.sub("modes"), "modes");
    s.read("k_values", c.modes.k_values);
    s.read("trajectories", c.modes.trajectories);
    s.read("audit_states", c.modes.audit_states);
    s.read("audit_horizon", c.modes.audit_horizon);
    s.finish();
  }
  {
    Section s(root.sub("data"), "data");
    s.read("spatial", c.data.spatial);
    s.read("amplitude", c.data.amplitude);
    s.read("width", c.data.width);
    s.read("velocity", c.data.velocity);
    s.read("subtract_p0", c.data.subtract_p0);
    s.read("microscopic", c.data.microscopic);
    s.finish();
  }
  {
    Section s(root.sub("decay"), "decay");
    s.read("q", c.decay.q);
    s.read("alpha", c.decay.alpha);
    s.read("alpha_prime", c.decay.alpha_prime);
    s.read("radial_points", c.decay.radial_points);
    s.read("k_max", c.decay.k_max);
    s.read("t_end", c.decay.t_end);
    s.read("out_interval", c.decay.out_interval);
    s.read("fit_t0", c.decay.fit_t0);
    s.read("fit_t1", c.decay.fit_t1);
    s.read("tolerance", c.decay.tolerance);
    s.finish();
  }
  {
    Section s(root.sub("duhamel"), "duhamel");
    s.read("domain", c.duhamel.domain);
    s.read("envelope_rate", c.duhamel.envelope_rate);
    s.read("q", c.duhamel.q);
    s.read("t_end", c.duhamel.t_end);
    s.read("out_interval", c.duhamel.out_interval);
    s.read("radial_points", c.duhamel.radial_points);
    s.read("k_max", c.duhamel.k_max);
    s.read("torus_k_max", c.duhamel.torus_k_max);
    s.read("velocity", c.duhamel.velocity);
    s.finish();
  }
  {
    Section s(root.sub("torus"), "torus");
    s.read("k_max", c.torus.k_max);
    s.read("enforce_zero_mean", c.torus.enforce_zero_mean);
    s.read("t_end", c.torus.t_end);
    s.read("out_interval", c.torus.out_interval);
    s.read("fit_t0", c.torus.fit_t0);
    s.read("fit_t1", c.torus.fit_t1);
    s.finish();
  }
  {
    Section s(root.sub("nonlinear"), "nonlinear");
    s.read("x_points", c.nonlinear.x_points);
    s.read("amplitude", c.nonlinear.amplitude);
    s.read("t_end", c.nonlinear.t_end);
    s.read("out_interval", c.nonlinear.out_interval);
    s.read("deriv_order", c.nonlinear.deriv_order);
    s.read("eps_sup", c.nonlinear.eps_sup);
    s.read("velocity", c.nonlinear.velocity);
    s.finish();
  }
  {
    Section s(root.sub("stationary"), "stationary");
    s.read("geometry", c.stationary.geometry);
    if (c.stationary.geometry != "radial_3d" && c.stationary.geometry != "torus_1d")
      throw ConfigError("stationary.geometry must be radial_3d or torus_1d");
    s.read("eps", c.stationary.eps);
    s.read("width", c.stationary.width);
    s.read("center", c.stationary.center);
    s.read("points", c.stationary.points);
    s.read("cutoff", c.stationary.cutoff);
    s.read("tol", c.stationary.tol);
    s.finish();
  }
  root.finish();
  return c;
}

std::string serialize_config(const ExperimentConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["grid"] = {{"dim", c.grid.dim}, {"order", c.grid.order}, {"strategy", c.grid.strategy}};
  j["backend"] = {{"kind", c.backend.kind},
                  {"angular_order", c.backend.angular_order},
                  {"spectral_degree", c.backend.spectral_degree}};
  j["modes"] = {{"k_values", c.modes.k_values},
                {"trajectories", c.modes.trajectories},
                {"audit_states", c.modes.audit_states},
                {"audit_horizon", c.modes.audit_horizon}};
  j["data"] = {{"spatial", c.data.spatial},   {"amplitude", c.data.amplitude},
               {"width", c.data.width},       {"velocity", c.data.velocity},
               {"subtract_p0", c.data.subtract_p0}, {"microscopic", c.data.microscopic}};
  j["decay"] = {{"q", c.decay.q},
                {"alpha", c.decay.alpha},
                {"alpha_prime", c.decay.alpha_prime},
                {"radial_points", c.decay.radial_points},
                {"k_max", c.decay.k_max},
                {"t_end", c.decay.t_end},
                {"out_interval", c.decay.out_interval},
                {"fit_t0", c.decay.fit_t0},
                {"fit_t1", c.decay.fit_t1},
                {"tolerance", c.decay.tolerance}};
  j["duhamel"] = {{"domain", c.duhamel.domain},
                  {"envelope_rate", c.duhamel.envelope_rate},
                  {"q", c.duhamel.q},
                  {"t_end", c.duhamel.t_end},
                  {"out_interval", c.duhamel.out_interval},
                  {"radial_points", c.duhamel.radial_points},
                  {"k_max", c.duhamel.k_max},
                  {"torus_k_max", c.duhamel.torus_k_max},
                  {"velocity", c.duhamel.velocity}};
  j["torus"] = {{"k_max", c.torus.k_max},
                {"enforce_zero_mean", c.torus.enforce_zero_mean},
                {"t_end", c.torus.t_end},
                {"out_interval", c.torus.out_interval},
                {"fit_t0", c.torus.fit_t0},
                {"fit_t1", c.torus.fit_t1}};
  j["nonlinear"] = {{"x_points", c.nonlinear.x_points},
                    {"amplitude", c.nonlinear.amplitude},
                    {"t_end", c.nonlinear.t_end},
                    {"out_interval", c.nonlinear.out_interval},
                    {"deriv_order", c.nonlinear.deriv_order},
                    {"eps_sup", c.nonlinear.eps_sup},
                    {"velocity", c.nonlinear.velocity}};
  j["stationary"] = {{"geometry", c.stationary.geometry},
                     {"eps", c.stationary.eps},
                     {"width", c.stationary.width},
                     {"center", c.stationary.center},
                     {"points", c.stationary.points},
                     {"cutoff", c.stationary.cutoff},
                     {"tol", c.stationary.tol}};
  return j.dump(2);
}

double config_sigma_target(const ExperimentConfig& config) {
  int m = 0;
  for (size_t i = 0; i < config.decay.alpha.size(); ++i) m += config.decay.alpha[i];
  for (size_t i = 0; i < config.decay.alpha_prime.size(); ++i) m -= config.decay.alpha_prime[i];
  const bool projected = config.data.subtract_p0 || config.data.microscopic;
  return sigma_index(config.grid.dim, config.decay.q, projected ? m : m - 1);
}

}  // namespace vpblab
