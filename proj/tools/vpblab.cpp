// vpblab: experiment orchestration for the kinetic decay laboratory.
//
//   vpblab run --config cfg.json [--out DIR] [--seed N] [--kind NAME]
//   vpblab compare a/summary.json b/summary.json [--tol field=value ...]
//   vpblab --list-kinds
//
// Exit code 0 iff every declared check of the dispatched experiment passes.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "vpblab/experiment.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw vpblab::ConfigError("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vpblab - linearized and nonlinear kinetic decay experiments"};
  app.require_subcommand(0, 1);

  bool list_kinds = false;
  app.add_flag("--list-kinds", list_kinds, "List experiment kinds and exit");

  auto* run = app.add_subcommand("run", "Run one experiment");
  std::string config_path, out_dir, kind_override;
  std::uint64_t seed = 0;
  bool seed_set = false, out_set = false, kind_set = false;
  run->add_option("--config", config_path, "JSON config path (defaults apply when omitted)");
  run->add_option("--out", out_dir, "Output directory override")
      ->each([&](const std::string&) { out_set = true; });
  run->add_option("--seed", seed, "Seed override for randomized suites")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--kind", kind_override, "Experiment kind override")
      ->each([&](const std::string&) { kind_set = true; });

  auto* cmp = app.add_subcommand("compare", "Field-wise diff of two run summaries");
  std::string path_a, path_b;
  std::vector<std::string> tol_args;
  cmp->add_option("a", path_a, "First summary.json")->required();
  cmp->add_option("b", path_b, "Second summary.json")->required();
  cmp->add_option("--tol", tol_args, "Per-field tolerance, e.g. --tol exponent=0.05");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_kinds) {
      for (const auto& name : vpblab::experiment_kind_names()) std::cout << name << "\n";
      return 0;
    }
    if (cmp->parsed()) {
      std::map<std::string, double> tols;
      for (const auto& t : tol_args) {
        auto eq = t.find('=');
        if (eq == std::string::npos)
          throw vpblab::ConfigError("--tol expects field=value, got " + t);
        tols[t.substr(0, eq)] = std::stod(t.substr(eq + 1));
      }
      auto diffs =
          vpblab::compare_summaries(read_file(path_a), read_file(path_b), tols);
      bool all_pass = true;
      for (const auto& d : diffs) {
        std::cout << (d.pass ? "[ok]   " : "[DIFF] ") << d.field << ": " << d.a << " vs "
                  << d.b << " (delta " << d.delta << ", tol " << d.tolerance << ")\n";
        all_pass = all_pass && d.pass;
      }
      if (diffs.empty()) std::cout << "identical summaries\n";
      return all_pass ? 0 : 1;
    }
    if (run->parsed()) {
      std::string text = config_path.empty() ? "" : read_file(config_path);
      vpblab::ExperimentConfig config = vpblab::parse_config(text);
      if (kind_set) config.kind = vpblab::experiment_kind_from_string(kind_override);
      if (seed_set) config.seed = seed;
      if (out_set) config.out_dir = out_dir;

      std::map<std::string, std::string> csv;
      vpblab::RunRecord rec = vpblab::run_experiment(config, &csv);
      vpblab::persist(rec, csv);
      std::cout << rec.summary_json << "\n";
      std::cout << (rec.passed ? "PASS" : "FAIL") << " (" << rec.wall_seconds << " s, outputs in "
                << config.out_dir << ")\n";
      return rec.passed ? 0 : 1;
    }
    std::cout << app.help();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
