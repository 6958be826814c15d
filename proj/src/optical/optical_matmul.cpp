#include "mrsim/optical/optical_matmul.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace mrsim::optical {

void CoreGeometry::validate() const {
  if (arms <= 0 || rings_per_arm <= 0 || wavelengths <= 0 || cores <= 0) {
    throw ParameterError("CoreGeometry: all sizes must be positive");
  }
  if (wavelengths > rings_per_arm) {
    throw ParameterError("CoreGeometry: wavelengths must not exceed rings_per_arm");
  }
}

namespace {

Eigen::Index ceil_div(Eigen::Index a, Eigen::Index b) {
  return (a + b - 1) / b;
}

} // namespace

TileSchedule build_schedule(Eigen::Index m, Eigen::Index k, Eigen::Index n,
                            const CoreGeometry& geom) {
  geom.validate();
  if (m <= 0 || k <= 0 || n <= 0) {
    throw ShapeError("build_schedule: dimensions must be positive");
  }
  TileSchedule s;
  s.m = m;
  s.k = k;
  s.n = n;
  s.row_tiles = ceil_div(k, geom.wavelengths);
  s.col_tiles = ceil_div(n, geom.arms);
  s.active_cores = std::min(s.col_tiles, geom.cores);
  const Eigen::Index total = s.row_tiles * s.col_tiles;
  s.cycles_per_row = ceil_div(total, s.active_cores);
  s.cycles_total = m * s.cycles_per_row;
  s.tiles.reserve(static_cast<std::size_t>(total));
  for (Eigen::Index c = 0; c < s.col_tiles; ++c) {
    for (Eigen::Index r = 0; r < s.row_tiles; ++r) {
      const Eigen::Index t = c * s.row_tiles + r;
      Tile tile;
      tile.k_begin = r * geom.wavelengths;
      tile.k_end = std::min(k, tile.k_begin + geom.wavelengths);
      tile.n_begin = c * geom.arms;
      tile.n_end = std::min(n, tile.n_begin + geom.arms);
      tile.row_tile = r;
      tile.col_tile = c;
      tile.core = t % s.active_cores;
      tile.cycle = t / s.active_cores;
      s.tiles.push_back(tile);
    }
  }
  return s;
}

std::string TileSchedule::to_json() const {
  nlohmann::json j;
  j["m"] = m;
  j["k"] = k;
  j["n"] = n;
  j["row_tiles"] = row_tiles;
  j["col_tiles"] = col_tiles;
  j["active_cores"] = active_cores;
  j["cycles_per_row"] = cycles_per_row;
  j["cycles_total"] = cycles_total;
  auto& arr = j["tiles"] = nlohmann::json::array();
  for (const Tile& t : tiles) {
    arr.push_back({{"k", {t.k_begin, t.k_end}},
                   {"n", {t.n_begin, t.n_end}},
                   {"row_tile", t.row_tile},
                   {"col_tile", t.col_tile},
                   {"cycle", t.cycle},
                   {"core", t.core}});
  }
  return j.dump(2);
}

NoisyMatmulResult noisy_matmul(const Matrix& x, const Matrix& w, const noise::NoiseParams& params,
                               const noise::NoiseStreams& streams, const MatmulOptions& options,
                               const CoreGeometry& geom) {
  if (x.cols() != w.rows()) {
    throw ShapeError("noisy_matmul: x is " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + ", w is " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()));
  }
  params.validate();
  const device::DetuningLut lut(options.lut_bits, options.device);
  const double gamma = options.device.linewidth_nm;
  // Largest |w_s| whose w+ and w- both stay at or above L(delta_max).
  const double w_range = 1.0 - 2.0 * device::min_transmission(options.device);

  const Eigen::Index M = x.rows(), K = x.cols(), N = w.cols();
  NoisyMatmulResult out;
  out.schedule = build_schedule(std::max<Eigen::Index>(M, 1), K, N, geom);
  out.y = Matrix::Zero(M, N);
  if (M == 0) {
    return out;
  }

  const RandomStream fab(streams.fab());
  const RandomStream thermal(streams.thermal());
  const RandomStream laser(streams.laser());
  const RandomStream jitter(streams.jitter());
  const bool global_laser = params.laser_mode == noise::LaserMode::Global;
  const auto n_tiles = static_cast<std::uint64_t>(out.schedule.tiles.size());

  Matrix wp, wm, xe, part_p, part_m;
  for (const Tile& tile : out.schedule.tiles) {
    const Eigen::Index kt = tile.k_end - tile.k_begin;
    const Eigen::Index nt = tile.n_end - tile.n_begin;
    const auto wblock = w.block(tile.k_begin, tile.n_begin, kt, nt);
    const double scale = wblock.cwiseAbs().maxCoeff() / w_range;
    if (scale == 0.0) {
      continue; // every pair sits at (0.5, 0.5): zero signal for any multiplier
    }

    wp.resize(kt, nt);
    wm.resize(kt, nt);
    for (Eigen::Index i = 0; i < kt; ++i) {
      const Eigen::Index gk = tile.k_begin + i;
      for (Eigen::Index j = 0; j < nt; ++j) {
        const Eigen::Index gn = tile.n_begin + j;
        const auto flat = static_cast<std::uint64_t>(gk * N + gn);
        device::DetuningPair pair = lut.program(wblock(i, j) / scale);
        pair = device::apply_jitter(pair, params, jitter, flat, options.device);
        double gain = 1.0;
        if (params.sigma_fab != 0.0) {
          gain += params.sigma_fab * fab.normal(flat);
        }
        if (params.sigma_thermal != 0.0) {
          gain += params.sigma_thermal * thermal.normal(flat);
        }
        wp(i, j) = device::lorentzian(pair.delta_plus_nm, gamma) * gain;
        wm(i, j) = device::lorentzian(pair.delta_minus_nm, gamma) * gain;
      }
    }

    xe = x.block(0, tile.k_begin, M, kt);
    if (params.sigma_laser != 0.0) {
      for (Eigen::Index r = 0; r < M; ++r) {
        const auto row = streams.row_offset + static_cast<std::uint64_t>(r);
        if (global_laser) {
          const std::uint64_t t = static_cast<std::uint64_t>(tile.col_tile) *
                                      static_cast<std::uint64_t>(out.schedule.row_tiles) +
                                  static_cast<std::uint64_t>(tile.row_tile);
          xe.row(r) *= 1.0 + params.sigma_laser * laser.normal(row * n_tiles + t);
        } else {
          for (Eigen::Index i = 0; i < kt; ++i) {
            const std::uint64_t idx =
                (row * static_cast<std::uint64_t>(out.schedule.col_tiles) +
                 static_cast<std::uint64_t>(tile.col_tile)) *
                    static_cast<std::uint64_t>(K) +
                static_cast<std::uint64_t>(tile.k_begin + i);
            xe(r, i) *= 1.0 + params.sigma_laser * laser.normal(idx);
          }
        }
      }
    }

    part_p = matmul(xe, wp);
    part_m = matmul(xe, wm);
    out.y.block(0, tile.n_begin, M, nt) += scale * (part_p - part_m);
  }
  return out;
}

ConversionCounts& ConversionCounts::operator+=(const ConversionCounts& o) {
  optical_cycles += o.optical_cycles;
  dac_ops += o.dac_ops;
  adc_ops += o.adc_ops;
  vcsel_activations += o.vcsel_activations;
  bpd_reads += o.bpd_reads;
  tuned_rings += o.tuned_rings;
  return *this;
}

ConversionCounts cycles_and_conversions(const TileSchedule& schedule, Eigen::Index m,
                                        bool count_padding, const CoreGeometry& geom) {
  if (m < 0) {
    throw ShapeError("cycles_and_conversions: m must be >= 0");
  }
  const auto rows = static_cast<std::uint64_t>(m);
  ConversionCounts c;
  c.optical_cycles = rows * static_cast<std::uint64_t>(schedule.cycles_per_row);
  for (const Tile& t : schedule.tiles) {
    const auto kt = static_cast<std::uint64_t>(t.k_end - t.k_begin);
    const auto nt = static_cast<std::uint64_t>(t.n_end - t.n_begin);
    c.vcsel_activations += rows * kt;
    c.adc_ops += rows * nt;
    const std::uint64_t ring_k = count_padding ? static_cast<std::uint64_t>(geom.wavelengths) : kt;
    const std::uint64_t ring_n = count_padding ? static_cast<std::uint64_t>(geom.arms) : nt;
    c.tuned_rings += 2 * ring_k * ring_n;
  }
  c.dac_ops = c.vcsel_activations;
  c.bpd_reads = c.adc_ops;
  return c;
}

} // namespace mrsim::optical
