#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mrsim/core/matrix.hpp"
#include "mrsim/core/random.hpp"
#include "mrsim/noise/noise_model.hpp"

namespace mrsim::device {

inline constexpr double kDefaultLinewidthNm = 1.2;
inline constexpr double kDefaultDeltaMaxNm = 2.2;

struct DeviceParams {
  double linewidth_nm = kDefaultLinewidthNm; ///< Gamma (FWHM)
  double delta_max_nm = kDefaultDeltaMaxNm;  ///< tuning range limit

  void validate() const;
};

/// Constant-sum pair of unipolar ring transmissions encoding one signed weight.
struct DifferentialWeight {
  double w_plus = 0.5;
  double w_minus = 0.5;

  [[nodiscard]] double decode() const noexcept { return w_plus - w_minus; }
};

struct DetuningPair {
  double delta_plus_nm = 0.0;
  double delta_minus_nm = 0.0;
};

/// w+ = (w+1)/2, w- = (1-w)/2. Inputs outside [-1, 1] are clamped with a warning.
DifferentialWeight encode_signed(double w_s);

/// L(delta) = 1 / (1 + (2 delta / gamma)^2).
double lorentzian(double delta_nm, double gamma_nm);

struct DetuningResult {
  double delta_nm = 0.0;
  double achieved = 1.0; ///< transmission actually realized after clamping
  bool clamped = false;
};

/// Inverse Lorentzian delta = (gamma/2) sqrt(1/L - 1), clamped to delta_max.
DetuningResult detuning_for(double level, const DeviceParams& device = {});

/// Lowest transmission reachable inside the tuning range, L(delta_max).
double min_transmission(const DeviceParams& device = {});

/// Transmissions realized by a detuning pair, decoded to a signed weight.
double decode(const DetuningPair& pair, const DeviceParams& device = {});

/// Quantized transmission levels k / (2^bits - 1), k = 0 .. 2^bits - 1, and
/// their detunings. Entries are computed on demand so 32-bit tables need no
/// storage; the w- level of entry k is level 2^bits - 1 - k, which keeps the
/// pair exactly constant-sum.
class DetuningLut {
public:
  DetuningLut(int bits, DeviceParams device = {});

  [[nodiscard]] int bits() const noexcept { return bits_; }
  [[nodiscard]] std::uint64_t size() const noexcept { return max_index_ + 1; }
  [[nodiscard]] double step() const noexcept { return 1.0 / static_cast<double>(max_index_); }
  [[nodiscard]] const DeviceParams& device() const noexcept { return device_; }

  [[nodiscard]] double level(std::uint64_t k) const;
  /// Index of the w+ level nearest to the encoded weight.
  [[nodiscard]] std::uint64_t quantize(const DifferentialWeight& w) const;
  [[nodiscard]] DifferentialWeight quantized_weight(std::uint64_t k) const;
  [[nodiscard]] DetuningPair entry(std::uint64_t k) const;
  /// Signed weight -> LUT index -> detuning pair.
  [[nodiscard]] DetuningPair program(double w_s) const;

  /// CSV rows "level,delta_plus_nm,delta_minus_nm"; refuses tables above 2^16 rows.
  void export_csv(const std::filesystem::path& path) const;

private:
  int bits_;
  std::uint64_t max_index_;
  DeviceParams device_;
};

DetuningLut build_lut(int bits, const DeviceParams& device = {});

/// Adds independent delta_lambda ~ N(mu_r, sigma_lambda^2) to each ring of the
/// pair (post-trim regime only) and re-clamps to [0, delta_max]. Draw 2*index
/// feeds the + ring and 2*index+1 the - ring.
DetuningPair apply_jitter(const DetuningPair& pair, const noise::NoiseParams& params,
                          const RandomStream& stream, std::uint64_t index,
                          const DeviceParams& device = {});
DetuningPair apply_jitter(const DetuningPair& pair, const noise::NoiseParams& params,
                          const SeedContext& ctx, const DeviceParams& device = {});

/// Spatial map of process-induced resonance shifts.
struct VariationMap {
  Matrix grid; ///< shift in nm, rows along height, cols along width
  double cell_size_mm = 0.1;
  double correlation_length_mm = 1.0;
  double amplitude_nm = 0.0;

  void export_csv(const std::filesystem::path& path) const;
};

/// Amplitude for which shifts normalized by the default linewidth have std 0.8.
inline constexpr double kPreTrimAmplitudeNm = 0.8 * kDefaultLinewidthNm;

/// Zero-mean Gaussian random field with covariance
/// amplitude^2 exp(-r^2 / (2 l_w^2)), built by separable convolution of
/// white noise with a Gaussian kernel of std l_w / sqrt(2).
VariationMap generate_variation_map(const SeedContext& ctx, double width_mm = 10.0,
                                    double height_mm = 10.0, double cell_mm = 0.1,
                                    double l_w_mm = 1.0,
                                    double amplitude_nm = kPreTrimAmplitudeNm);

struct BankPlacement {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
};

struct BankShiftSamples {
  Matrix shifts_nm;  ///< placements x n_rings
  Vector sigma_b_nm; ///< sample std (n-1) of each placement's shifts
  std::vector<BankPlacement> placements;
};

/// Places an n_rings bank (a row of adjacent cells) at uniformly random
/// locations and reads the local shifts.
BankShiftSamples sample_bank_shifts(const VariationMap& map, const SeedContext& ctx,
                                    Eigen::Index n_rings = 15, Eigen::Index placements = 100);

/// lambda_res = n_eff * L / m, with L in micrometres and the result in nm.
double resonance_wavelength(double n_eff, double ring_length_um, int mode_order);

} // namespace mrsim::device
