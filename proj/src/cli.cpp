#include "ntkpinn/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <optional>
#include <string>

#include "ntkpinn/config.hpp"
#include "ntkpinn/error.hpp"
#include "ntkpinn/experiments.hpp"

namespace ntkpinn {

namespace {

ExperimentConfig resolve(const std::string& config_path, std::optional<std::string> experiment,
                         std::optional<std::uint64_t> seed, std::optional<std::string> out_dir) {
  ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = load_config(config_path);
    if (experiment && experiment_from_string(*experiment) != cfg.experiment) {
      throw ConfigError("config file describes '" + std::string(to_string(cfg.experiment)) + "', not '" +
                        *experiment + "'");
    }
  } else if (experiment) {
    cfg = default_config(experiment_from_string(*experiment));
  } else {
    throw ConfigError("a config file is required");
  }
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output_dir = *out_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive NTK loss weighting experiments"};
  app.require_subcommand(1);

  std::string experiment, config_path, run_out;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run an experiment and write its artifacts");
  run->add_option("experiment", experiment, "poisson-convergence, quadratic-mc or wave-pinn")->required();
  run->add_option("--config", config_path, "INI config file (defaults when omitted)");
  run->add_option("--seed", seed, "Master seed (overrides the config)");
  run->add_option("--out", run_out, "Output directory (overrides the config)");

  std::size_t step = 0;
  std::string dump_out;
  auto* dump = app.add_subcommand("dump-ntk", "Write the exact NTK after a number of training steps");
  dump->add_option("--config", config_path, "INI config file")->required();
  dump->add_option("--step", step, "Training step")->required();
  dump->add_option("--seed", seed, "Master seed (overrides the config)");
  dump->add_option("--out", dump_out, "Output CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg =
          resolve(config_path, experiment, seed, run_out.empty() ? std::nullopt : std::optional(run_out));
      run_experiment(cfg);
      out << to_string(cfg.experiment) << ": artifacts in " << cfg.output_dir.string() << " (config "
          << hex64(cfg.hash()) << ", seed " << cfg.seed << ")\n";
    } else {
      const ExperimentConfig cfg = resolve(config_path, std::nullopt, seed, std::nullopt);
      const NtkMatrix k = ntk_at_step(cfg, step);
      const std::string head = artifact_header(cfg);
      if (dump_out.empty()) {
        out << head;
        write_ntk_csv(out, k);
      } else {
        write_ntk_csv(dump_out, k, head);
      }
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DegenerateKernelError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace ntkpinn
