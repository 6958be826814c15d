#include "mrsim/device/photonic_device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "mrsim/core/log.hpp"

namespace mrsim::device {

void DeviceParams::validate() const {
  if (!(linewidth_nm > 0.0) || !std::isfinite(linewidth_nm)) {
    throw ParameterError("device: linewidth_nm must be > 0");
  }
  if (!(delta_max_nm > 0.0) || !std::isfinite(delta_max_nm)) {
    throw ParameterError("device: delta_max_nm must be > 0");
  }
}

DifferentialWeight encode_signed(double w_s) {
  if (!std::isfinite(w_s)) {
    throw ParameterError("encode_signed: weight is not finite");
  }
  if (w_s > 1.0 || w_s < -1.0) {
    warn("encode_signed: weight " + std::to_string(w_s) + " clamped to [-1, 1]");
    w_s = std::clamp(w_s, -1.0, 1.0);
  }
  return {(w_s + 1.0) / 2.0, (1.0 - w_s) / 2.0};
}

double lorentzian(double delta_nm, double gamma_nm) {
  const double r = 2.0 * delta_nm / gamma_nm;
  return 1.0 / (1.0 + r * r);
}

double min_transmission(const DeviceParams& device) {
  return lorentzian(device.delta_max_nm, device.linewidth_nm);
}

namespace {

// Level 0 is unreachable; it pins to the tuning limit like any other clamp.
DetuningResult detune_level(double level, const DeviceParams& device) {
  DetuningResult r;
  const double floor = min_transmission(device);
  if (level <= floor) {
    r.delta_nm = device.delta_max_nm;
    r.achieved = floor;
    r.clamped = level < floor;
    return r;
  }
  r.delta_nm = 0.5 * device.linewidth_nm * std::sqrt(1.0 / level - 1.0);
  r.achieved = level;
  return r;
}

} // namespace

DetuningResult detuning_for(double level, const DeviceParams& device) {
  if (!(level > 0.0) || !(level <= 1.0)) {
    throw ParameterError("detuning_for: level must lie in (0, 1]");
  }
  const double floor = min_transmission(device);
  if (level < floor) {
    return detune_level(level, device);
  }
  DetuningResult r;
  r.delta_nm = 0.5 * device.linewidth_nm * std::sqrt(1.0 / level - 1.0);
  r.achieved = level;
  return r;
}

double decode(const DetuningPair& pair, const DeviceParams& device) {
  return lorentzian(pair.delta_plus_nm, device.linewidth_nm) -
         lorentzian(pair.delta_minus_nm, device.linewidth_nm);
}

DetuningLut::DetuningLut(int bits, DeviceParams device) : bits_(bits), device_(device) {
  if (bits != 4 && bits != 8 && bits != 32) {
    throw ParameterError("build_lut: bits must be 4, 8 or 32");
  }
  device_.validate();
  max_index_ = (std::uint64_t{1} << bits) - 1;
}

double DetuningLut::level(std::uint64_t k) const {
  if (k > max_index_) {
    throw ParameterError("DetuningLut: index out of range");
  }
  return static_cast<double>(k) / static_cast<double>(max_index_);
}

std::uint64_t DetuningLut::quantize(const DifferentialWeight& w) const {
  const double scaled = std::clamp(w.w_plus, 0.0, 1.0) * static_cast<double>(max_index_);
  return static_cast<std::uint64_t>(std::llround(scaled));
}

DifferentialWeight DetuningLut::quantized_weight(std::uint64_t k) const {
  return {level(k), level(max_index_ - k)};
}

DetuningPair DetuningLut::entry(std::uint64_t k) const {
  const DifferentialWeight q = quantized_weight(k);
  return {detune_level(q.w_plus, device_).delta_nm, detune_level(q.w_minus, device_).delta_nm};
}

DetuningPair DetuningLut::program(double w_s) const {
  return entry(quantize(encode_signed(w_s)));
}

void DetuningLut::export_csv(const std::filesystem::path& path) const {
  if (bits_ > 16) {
    throw ParameterError("DetuningLut::export_csv: table too large to export");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out.precision(17);
  out << "level,delta_plus_nm,delta_minus_nm\n";
  for (std::uint64_t k = 0; k <= max_index_; ++k) {
    const DetuningPair e = entry(k);
    out << level(k) << ',' << e.delta_plus_nm << ',' << e.delta_minus_nm << '\n';
  }
}

DetuningLut build_lut(int bits, const DeviceParams& device) {
  return DetuningLut(bits, device);
}

DetuningPair apply_jitter(const DetuningPair& pair, const noise::NoiseParams& params,
                          const RandomStream& stream, std::uint64_t index,
                          const DeviceParams& device) {
  if (params.regime != noise::TrimRegime::PostTrim ||
      (params.jitter_std_pm == 0.0 && params.jitter_bias_pm == 0.0)) {
    return pair;
  }
  const double mu = params.jitter_bias_pm * 1e-3;
  const double sd = params.jitter_std_pm * 1e-3;
  const double dp = mu + (sd == 0.0 ? 0.0 : sd * stream.normal(2 * index));
  const double dm = mu + (sd == 0.0 ? 0.0 : sd * stream.normal(2 * index + 1));
  return {std::clamp(pair.delta_plus_nm + dp, 0.0, device.delta_max_nm),
          std::clamp(pair.delta_minus_nm + dm, 0.0, device.delta_max_nm)};
}

DetuningPair apply_jitter(const DetuningPair& pair, const noise::NoiseParams& params,
                          const SeedContext& ctx, const DeviceParams& device) {
  return apply_jitter(pair, params, RandomStream(ctx), 0, device);
}

void VariationMap::export_csv(const std::filesystem::path& path) const {
  save_matrix_csv(grid, path);
}

VariationMap generate_variation_map(const SeedContext& ctx, double width_mm, double height_mm,
                                    double cell_mm, double l_w_mm, double amplitude_nm) {
  if (!(cell_mm > 0.0) || !(width_mm >= cell_mm) || !(height_mm >= cell_mm)) {
    throw ParameterError("generate_variation_map: need width, height >= cell > 0");
  }
  if (!(l_w_mm > 0.0)) {
    throw ParameterError("generate_variation_map: correlation length must be > 0");
  }
  if (!(amplitude_nm >= 0.0)) {
    throw ParameterError("generate_variation_map: amplitude must be >= 0");
  }
  VariationMap map;
  map.cell_size_mm = cell_mm;
  map.correlation_length_mm = l_w_mm;
  map.amplitude_nm = amplitude_nm;
  const auto rows = static_cast<Eigen::Index>(std::llround(height_mm / cell_mm));
  const auto cols = static_cast<Eigen::Index>(std::llround(width_mm / cell_mm));
  map.grid = Matrix::Zero(rows, cols);
  if (amplitude_nm == 0.0) {
    return map;
  }

  // Self-convolution of a Gaussian of std s has std s*sqrt(2), so s = l/sqrt(2)
  // yields the requested correlation length.
  const double s = l_w_mm / (std::sqrt(2.0) * cell_mm);
  const auto radius = static_cast<Eigen::Index>(std::ceil(4.0 * s));
  Vector kernel(2 * radius + 1);
  for (Eigen::Index i = -radius; i <= radius; ++i) {
    const double t = static_cast<double>(i) / s;
    kernel(i + radius) = std::exp(-0.5 * t * t);
  }
  kernel /= kernel.norm(); // unit energy per axis -> unit marginal variance

  const Eigen::Index pr = rows + 2 * radius;
  const Eigen::Index pc = cols + 2 * radius;
  const RandomStream stream(ctx);
  Matrix white(pr, pc);
  std::uint64_t idx = 0;
  for (Eigen::Index r = 0; r < pr; ++r) {
    for (Eigen::Index c = 0; c < pc; ++c, ++idx) {
      white(r, c) = stream.normal(idx);
    }
  }
  Matrix horiz = Matrix::Zero(pr, cols);
  for (Eigen::Index r = 0; r < pr; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < kernel.size(); ++t) {
        acc += kernel(t) * white(r, c + t);
      }
      horiz(r, c) = acc;
    }
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < kernel.size(); ++t) {
        acc += kernel(t) * horiz(r + t, c);
      }
      map.grid(r, c) = amplitude_nm * acc;
    }
  }
  return map;
}

BankShiftSamples sample_bank_shifts(const VariationMap& map, const SeedContext& ctx,
                                    Eigen::Index n_rings, Eigen::Index placements) {
  if (n_rings < 2 || placements < 1) {
    throw ParameterError("sample_bank_shifts: need n_rings >= 2 and placements >= 1");
  }
  if (map.grid.cols() < n_rings || map.grid.rows() < 1) {
    throw ShapeError("sample_bank_shifts: bank does not fit on the map");
  }
  BankShiftSamples out;
  out.shifts_nm.resize(placements, n_rings);
  out.sigma_b_nm.resize(placements);
  out.placements.reserve(static_cast<std::size_t>(placements));
  const RandomStream stream(ctx);
  const auto max_col = static_cast<std::uint64_t>(map.grid.cols() - n_rings + 1);
  for (Eigen::Index p = 0; p < placements; ++p) {
    const auto up = static_cast<std::uint64_t>(p);
    BankPlacement loc;
    loc.row = static_cast<Eigen::Index>(
        stream.below(2 * up, static_cast<std::uint64_t>(map.grid.rows())));
    loc.col = static_cast<Eigen::Index>(stream.below(2 * up + 1, max_col));
    out.shifts_nm.row(p) = map.grid.block(loc.row, loc.col, 1, n_rings);
    const double mean = out.shifts_nm.row(p).mean();
    const double ss = (out.shifts_nm.row(p).array() - mean).square().sum();
    out.sigma_b_nm(p) = std::sqrt(ss / static_cast<double>(n_rings - 1));
    out.placements.push_back(loc);
  }
  return out;
}

double resonance_wavelength(double n_eff, double ring_length_um, int mode_order) {
  if (mode_order <= 0) {
    throw ParameterError("resonance_wavelength: mode order must be positive");
  }
  return n_eff * ring_length_um * 1000.0 / static_cast<double>(mode_order);
}

} // namespace mrsim::device
