#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "mrsim/cli/config.hpp"

namespace mrsim::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Command-specific options, recorded in the manifest so a run can be replayed.
using CommandArgs = std::map<std::string, std::string>;

/// Runs one subcommand; writes its outputs and manifest.json into
/// cfg.output_dir. Throws ConfigError / NumericalContractError.
void run_command(const std::string& command, const ExperimentConfig& cfg,
                 const CommandArgs& args = {});

void cmd_simulate_matmul(const ExperimentConfig& cfg);
void cmd_sweep_noise(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_energy_report(const ExperimentConfig& cfg);
void cmd_fit_coeffs(const ExperimentConfig& cfg);
void cmd_export_lut(const ExperimentConfig& cfg, int bits);
void cmd_export_variation_map(const ExperimentConfig& cfg);

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const CommandArgs& args);

/// Re-runs the command recorded in a manifest with optional runtime overrides.
void rerun_manifest(const std::filesystem::path& manifest, int threads_override,
                    const std::string& output_dir_override);

/// Entry point used by the executable: parses argv, maps errors to exit codes.
int run_cli(int argc, char** argv);

} // namespace mrsim::cli
