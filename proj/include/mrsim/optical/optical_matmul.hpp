#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrsim/core/matrix.hpp"
#include "mrsim/device/photonic_device.hpp"
#include "mrsim/noise/noise_model.hpp"

namespace mrsim::optical {

struct CoreGeometry {
  Eigen::Index arms = 64;          ///< weight columns per tile (one BPD each)
  Eigen::Index rings_per_arm = 32;
  Eigen::Index wavelengths = 32;   ///< input elements per tile
  Eigen::Index cores = 5;

  void validate() const;
};

struct Tile {
  Eigen::Index k_begin = 0, k_end = 0; ///< weight rows (input channels)
  Eigen::Index n_begin = 0, n_end = 0; ///< weight columns (arms)
  Eigen::Index row_tile = 0;
  Eigen::Index col_tile = 0;
  Eigen::Index cycle = 0; ///< cycle offset within one input row
  Eigen::Index core = 0;
};

/// Decomposition of an (m x k) * (k x n) product onto the optical cores.
/// Tiles are enumerated column-tile major (t = col_tile * row_tiles +
/// row_tile) and dealt round-robin to min(col_tiles, cores) cores.
struct TileSchedule {
  Eigen::Index m = 0, k = 0, n = 0;
  Eigen::Index row_tiles = 0;
  Eigen::Index col_tiles = 0;
  Eigen::Index active_cores = 0;
  Eigen::Index cycles_per_row = 0;
  Eigen::Index cycles_total = 0;
  std::vector<Tile> tiles;

  [[nodiscard]] std::string to_json() const;
};

TileSchedule build_schedule(Eigen::Index m, Eigen::Index k, Eigen::Index n,
                            const CoreGeometry& geom = {});

struct MatmulOptions {
  int lut_bits = 32;
  device::DeviceParams device{};
  /// Padded channels and arms carry no optical power, so with purely
  /// multiplicative noise this flag cannot change any output. It only
  /// decides whether padded rings count as tuned in the conversion counts.
  bool noise_on_padding = false;
};

struct NoisyMatmulResult {
  Matrix y;
  TileSchedule schedule;
};

/// Cycle-level emulation of x * w. For each tile the weights are scaled into
/// the reachable transmission range, encoded as differential pairs, quantized
/// through the LUT, jittered (post-trim), multiplied by (1 + eps + eta), and
/// read out as sum(x' w+) - sum(x' w-) with x' = x (1 + zeta). Partial sums
/// are rescaled and accumulated electronically in row-tile order.
NoisyMatmulResult noisy_matmul(const Matrix& x, const Matrix& w, const noise::NoiseParams& params,
                               const noise::NoiseStreams& streams,
                               const MatmulOptions& options = {}, const CoreGeometry& geom = {});

struct ConversionCounts {
  std::uint64_t optical_cycles = 0;
  std::uint64_t dac_ops = 0;           ///< input element conversions driving the VCSELs
  std::uint64_t adc_ops = 0;           ///< arm outputs digitized, one per active arm per tile
  std::uint64_t vcsel_activations = 0; ///< one per active channel per tile
  std::uint64_t bpd_reads = 0;         ///< equals adc_ops
  std::uint64_t tuned_rings = 0;       ///< two rings per programmed weight, held across rows

  ConversionCounts& operator+=(const ConversionCounts& o);
  friend bool operator==(const ConversionCounts&, const ConversionCounts&) = default;
};

/// Event counts for running the schedule over m input rows.
ConversionCounts cycles_and_conversions(const TileSchedule& schedule, Eigen::Index m,
                                        bool count_padding = false,
                                        const CoreGeometry& geom = {});

} // namespace mrsim::optical
