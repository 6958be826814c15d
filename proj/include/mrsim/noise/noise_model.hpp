#pragma once

#include <optional>

#include "mrsim/core/matrix.hpp"
#include "mrsim/core/random.hpp"

namespace mrsim::noise {

enum class TrimRegime { PreTrim, PostTrim };

/// Granularity of the laser amplitude multiplier zeta.
enum class LaserMode {
  PerChannel, ///< one zeta per wavelength channel per cycle
  Global,     ///< one zeta shared by every channel of a cycle
};

struct NoiseParams {
  double sigma_fab = 0.0;
  double sigma_thermal = 0.0;
  double sigma_laser = 0.0;
  TrimRegime regime = TrimRegime::PreTrim;
  double jitter_std_pm = 0.0;
  double jitter_bias_pm = 0.0;
  double linewidth_nm = 1.2;
  LaserMode laser_mode = LaserMode::PerChannel;

  /// Untrimmed chip: fabrication spread dominates (~1 nm shifts on a 1.2 nm line).
  static NoiseParams pre_trim(double sigma_fab = 0.8);
  /// Wafer-trimmed chip: residual detuning jitter applied in the device model.
  static NoiseParams post_trim(double jitter_std_pm = 32.0, double jitter_bias_pm = 0.0);
  /// Evaluation protocol used for the accuracy sweeps: thermal 0.1, laser 0.05.
  static NoiseParams sweep_point(double sigma_fab);

  [[nodiscard]] bool is_noiseless() const noexcept;
  [[nodiscard]] double total_variance() const noexcept;
  void validate() const;
};

/// Per-block realization of the three multiplicative sources.
struct NoiseDraw {
  Matrix eps;   ///< fabrication epsilon per weight (frozen per chip)
  Matrix eta;   ///< thermal eta per weight (per forward pass)
  Matrix zeta;  ///< laser zeta per input element (per input row / cycle)
  SeedContext provenance;
};

/// Normalized resonance spread sigma_lambda / Gamma.
double sigma_fab_from_jitter(double sigma_lambda_pm, double linewidth_nm);

/// Stream layout used by every consumer of the noise sources.
///   fab:     chip/fab                      indexed by weight position
///   thermal: chip/thermal:pass/program:p   indexed by weight position
///   jitter:  chip/jitter:pass/program:p    indexed by ring
///   laser:   chip/laser:pass               indexed by (row_offset + row, channel)
/// `program` distinguishes operands reprogrammed within one pass (such as
/// per-sample keys); `row_offset` places a block of input rows inside the pass.
struct NoiseStreams {
  SeedContext chip;
  std::uint64_t pass = 0;
  std::uint64_t program = 0;
  std::uint64_t row_offset = 0;

  [[nodiscard]] SeedContext fab() const { return chip.child("fab"); }
  [[nodiscard]] SeedContext thermal() const {
    return chip.child("thermal", pass).child("program", program);
  }
  [[nodiscard]] SeedContext jitter() const {
    return chip.child("jitter", pass).child("program", program);
  }
  [[nodiscard]] SeedContext laser() const { return chip.child("laser", pass); }
};

/// Draws eps/eta for a rows x cols weight block and zeta for an
/// in_rows x in_cols input block. With LaserMode::Global each input row
/// shares one zeta.
NoiseDraw draw_noise(const NoiseParams& params, const NoiseStreams& streams,
                     Eigen::Index w_rows, Eigen::Index w_cols, Eigen::Index in_rows,
                     Eigen::Index in_cols);

struct MacVariance {
  double variance = 0.0;
  /// sqrt(variance) / |sum x_i w_i|; empty when the clean dot product is zero.
  std::optional<double> relative_std;
};

/// Var(dY) = sum x_i^2 w_i^2 (s_laser^2 + s_fab^2 + s_thermal^2).
MacVariance mac_variance(const Vector& x, const Vector& w, const NoiseParams& params);

} // namespace mrsim::noise
