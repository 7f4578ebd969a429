// Command line front end: one subcommand per experiment runner.
#include "elapsed/errors.hpp"
#include "elapsed/runners.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace elapsed;

int main(int argc, char** argv) {
  CLI::App app{"Time-elapsed neuron population experiments"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path, out;
  int workers = 1;
  std::uint64_t seed = 0;

  using Runner = RunManifest (*)(const ExperimentConfig&, const RunOptions&);
  const std::pair<const char*, Runner> commands[] = {
      {"steady", run_steady_sweep},
      {"relax", run_relaxation},
      {"spectrum", run_spectrum_sweep},
      {"basin", run_basin},
      {"check", run_checks},
  };
  const char* help[] = {"steady states over an eps sweep", "relaxation trajectories and decay fits",
                        "spectrum of the linearized generator", "empirical basin of attraction",
                        "invariant suites"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* s = app.add_subcommand(commands[i].first, help[i]);
    s->add_option("--config", config_path, "experiment config (JSON, comments allowed)")->required();
    s->add_option("--out", out, "output directory (default: config 'output')");
    s->add_option("--workers", workers, "worker threads for sweep points")->check(CLI::Range(1, 256));
    s->add_option("--seed", seed, "seed overriding the config");
    subs.push_back(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const ExperimentConfig cfg = load_config(config_path);
    RunOptions opt;
    opt.out = out.empty() ? cfg.output : out;
    opt.workers = workers;
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      if (subs[i]->count("--seed")) opt.seed = seed;
      const RunManifest m = commands[i].second(cfg, opt);
      std::cout << commands[i].first << ": " << (m.ok ? "ok" : "checks failed") << ", "
                << m.files.size() << " files in " << opt.out.string() << " ("
                << m.wall_clock_s << " s)\n";
      if (!m.ok) std::cerr << m.checks.dump(2) << "\n";
      return m.exit_code;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
