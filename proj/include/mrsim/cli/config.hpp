#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrsim/device/photonic_device.hpp"
#include "mrsim/noise/noise_model.hpp"
#include "mrsim/optical/optical_matmul.hpp"
#include "mrsim/perf/perf_model.hpp"
#include "mrsim/training/robust_training.hpp"
#include "mrsim/vit/tiny_vit.hpp"

namespace mrsim::cli {

/// Bad configuration: unknown key, type mismatch or out-of-range value.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct VariationSettings {
  double width_mm = 10.0;
  double height_mm = 10.0;
  double cell_mm = 0.1;
  double correlation_length_mm = 1.0;
  double amplitude_nm = device::kPreTrimAmplitudeNm;
  Eigen::Index bank_rings = 15;
  Eigen::Index placements = 100;
};

struct DataSettings {
  std::string source = "synthetic"; ///< synthetic | csv
  std::string train_csv;
  std::string test_csv;
  int n_per_class = 64;
  int test_per_class = 64;
  double separation = 1.0;
  double blob_width = 3.0;
  double position_jitter = 1.5;
  double pixel_noise = 0.5;
};

struct MatmulSettings {
  Eigen::Index m = 8;
  Eigen::Index k = 40;
  Eigen::Index n = 70;
  int trials = 2000;
};

struct FinetuneSettings {
  int epochs = 8;
  double lr = 5e-4;
  /// Forward mode of the CCT runs in sweep-noise (normal fine-tuning is always noisy).
  vit::ForwardMode cct_mode = vit::ForwardMode::NoisyEmulated;
};

struct PerfSettings {
  double ridge = 1e-3;
  std::string coeffs; ///< JSON written by fit-coeffs; empty uses the shipped defaults
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  int threads = 1;

  noise::NoiseParams noise = noise::NoiseParams::sweep_point(0.4);
  device::DeviceParams device{};
  int lut_bits = 32;
  optical::CoreGeometry core{};
  VariationSettings variation{};
  vit::ViTConfig vit{};
  DataSettings data{};
  vit::TrainConfig train{};
  FinetuneSettings finetune{};
  std::string resume; ///< checkpoint directory to continue training from
  std::string checkpoint; ///< checkpoint evaluated by `evaluate`
  int eval_trials = vit::kDefaultEvalTrials;
  MatmulSettings matmul{};
  std::vector<double> sweep_sigma_fab{0.05, 0.1, 0.2, 0.4, 0.7};
  PerfSettings perf{};
  perf::EnergyCoeffs eo{}; ///< only the EO overhead fields are read

  void validate() const;
  /// Canonical text listing every key with its resolved value. Without
  /// runtime keys, run.threads and run.output_dir are left out: they never
  /// change an output byte.
  [[nodiscard]] std::string to_text(bool include_runtime = true) const;
  /// FNV-1a of to_text(false).
  [[nodiscard]] std::uint64_t hash() const;
  [[nodiscard]] optical::MatmulOptions matmul_options() const;
};

/// Parses "[section]" headers and "key = value" lines; '#' starts a comment.
/// Keys not set keep their defaults. Errors name the source and line.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every accepted "section.key".
std::vector<std::string> config_keys();

} // namespace mrsim::cli
