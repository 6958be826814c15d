#include <iostream>

#include "CLI11.hpp"
#include "mrsim/cli/commands.hpp"

namespace mrsim::cli {

int run_cli(int argc, char** argv) {
  CLI::App app{"Microring photonic accelerator simulator and noise-aware ViT trainer"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  int threads = 0;
  std::string output_dir;
  int bits = 0;
  std::string manifest;

  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry entries[] = {
      {"simulate-matmul", "Monte-Carlo error statistics of the optical matmul"},
      {"sweep-noise", "Accuracy of the four training configurations across sigma_fab"},
      {"train", "Train or resume the tiny ViT"},
      {"evaluate", "Clean and noisy accuracy of a checkpoint"},
      {"energy-report", "Energy/latency breakdown of the ViT presets and comparison tables"},
      {"fit-coeffs", "Fit per-event energy and latency coefficients"},
      {"export-lut", "Write the detuning lookup table as CSV"},
      {"export-variation-map", "Write a spatial variation map and bank statistics"},
  };
  std::vector<CLI::App*> subs;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("-c,--config", config_path, "Experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("-j,--threads", threads, "Worker threads (overrides run.threads)")
        ->check(CLI::PositiveNumber);
    sub->add_option("-o,--output-dir", output_dir, "Output directory (overrides run.output_dir)");
    if (std::string(e.name) == "export-lut") {
      sub->add_option("--bits", bits, "LUT resolution: 4 or 8 (default device.lut_bits)");
    }
    subs.push_back(sub);
  }
  CLI::App* rerun = app.add_subcommand("rerun", "Replay the run recorded in a manifest.json");
  rerun->add_option("manifest", manifest, "manifest.json of an earlier run")
      ->required()
      ->check(CLI::ExistingFile);
  rerun->add_option("-j,--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  rerun->add_option("-o,--output-dir", output_dir,
                    "Output directory (default: the manifest's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (rerun->parsed()) {
      rerun_manifest(manifest, threads, output_dir);
      return kExitOk;
    }
    for (CLI::App* sub : subs) {
      if (!sub->parsed()) {
        continue;
      }
      ExperimentConfig cfg = load_config(config_path);
      if (threads > 0) {
        cfg.threads = threads;
      }
      if (!output_dir.empty()) {
        cfg.output_dir = output_dir;
      }
      CommandArgs args;
      if (bits > 0) {
        args["bits"] = std::to_string(bits);
      }
      run_command(sub->get_name(), cfg, args);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalContractError& e) {
    std::cerr << "numerical contract violated: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

} // namespace mrsim::cli
