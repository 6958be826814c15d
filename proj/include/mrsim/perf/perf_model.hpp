#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mrsim/core/matrix.hpp"
#include "mrsim/optical/optical_matmul.hpp"

namespace mrsim::perf {

enum class Component : std::size_t { Tuning, Vcsel, Bpd, Adc, Dac, Memory, Electronic };
inline constexpr std::size_t kComponentCount = 7;
const char* component_name(Component c);

using PerComponent = std::array<double, kComponentCount>;

/// Events per component. Energy events are individual device operations;
/// latency events are the serialized steps that each component adds to the
/// critical path (optical components advance once per core cycle).
struct EventCounts {
  PerComponent energy{};
  PerComponent latency{};

  EventCounts& operator+=(const EventCounts& o);
  EventCounts& operator*=(double s);
};

/// Counts for one optical product of (m x k) by (k x n), plus the activation
/// memory traffic it implies (inputs read, outputs written).
EventCounts matmul_events(Eigen::Index m, Eigen::Index k, Eigen::Index n,
                          const optical::CoreGeometry& geom = {});

struct VitShape {
  std::string name;
  int image_size = 224;
  int patch_size = 16;
  int channels = 3;
  int d_model = 192;
  int n_heads = 3;
  int n_layers = 12;
  int mlp_ratio = 4;
  int n_classes = 1000;
  bool cls_token = true;

  [[nodiscard]] int n_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
  [[nodiscard]] int n_tokens() const { return n_patches() + (cls_token ? 1 : 0); }
};

/// Standard Tiny/Small/Base/Large shapes at 224x224, patch 16.
std::vector<VitShape> vit_presets();
VitShape vit_preset(const std::string& name);

struct LayerCounts {
  std::string name;
  EventCounts counts;
};

/// Per-layer schedule counts: patch embedding, each encoder block, classifier.
std::vector<LayerCounts> layer_counts(const VitShape& shape, const optical::CoreGeometry& geom = {});
EventCounts total_counts(const VitShape& shape, const optical::CoreGeometry& geom = {});

struct EnergyCoeffs {
  PerComponent energy_pj{};  ///< picojoules per energy event
  PerComponent latency_ns{}; ///< nanoseconds per latency event
  double eo_compensation_overhead = 0.20;
  int eo_period_iters = 5;
  /// false: the EO overhead scales the tuning component only; true: the full
  /// pipeline total.
  bool eo_full_pipeline = false;

  void validate() const;
  /// Fitted against the SiPh columns of the reference table (see fit_coeffs).
  static EnergyCoeffs calibrated();
  /// Plausible per-event magnitudes the fit is regularized toward.
  static EnergyCoeffs priors();
};

struct CostReport {
  PerComponent energy_pj{};
  PerComponent latency_ns{};
  double eo_energy_pj = 0.0;
  double eo_latency_ns = 0.0;
  double total_energy_pj = 0.0;
  double total_latency_ns = 0.0;

  [[nodiscard]] double energy_uj() const { return total_energy_pj * 1e-6; }
  [[nodiscard]] double latency_us() const { return total_latency_ns * 1e-3; }
};

/// Totals are the component lines plus the EO compensation line
/// overhead * (tuning or pipeline cost) / period.
CostReport cost_report(const EventCounts& counts, const EnergyCoeffs& coeffs);

/// KFPS/W = (frames/s / 1000) / W = 1 / (1000 * joules per frame).
double kfps_per_watt(double latency_s, double energy_j);

struct ModelReference {
  std::string name;
  double siph_latency_us;
  double siph_energy_uj;
  double fpga_latency_us;
  double gpu_latency_us;
  double fpga_energy_uj;
  double gpu_energy_uj;
  // Multipliers as printed, with their printed number of decimals.
  double fpga_latency_x;
  int fpga_latency_decimals;
  double gpu_latency_x;
  int gpu_latency_decimals;
  double fpga_energy_x;
  int fpga_energy_decimals;
  double gpu_energy_x;
  int gpu_energy_decimals;
};

struct EfficiencyReference {
  std::string name;
  double kfps_per_watt; ///< stored value, or ours / slower_factor for relative entries
  double slower_factor; ///< as printed relative to ours (1 for ours)
};

/// Stored reference values; never recomputed.
struct ReferenceTable {
  std::vector<ModelReference> models;
  std::vector<EfficiencyReference> efficiency; ///< in published ranking order
  double peak_kfps_per_watt = 100.4;
};
const ReferenceTable& reference_table();

struct CompareRow {
  std::string model;
  std::string column; ///< e.g. "latency/FPGA"
  double computed_ratio;
  double printed_ratio;
  int printed_decimals;
  bool within_last_digit;
};

/// Platform / SiPh ratios against the printed multipliers, plus the SiPh
/// identity rows.
std::vector<CompareRow> compare_table();
std::string format_compare_table(const std::vector<CompareRow>& rows);

/// Lawson-Hanson non-negative least squares: argmin ||A x - b|| s.t. x >= 0.
Vector nnls(const Matrix& a, const Vector& b, int max_iter = 0);

struct FitResult {
  EnergyCoeffs coeffs;
  std::vector<std::string> models;
  std::vector<double> energy_rel_residual;  ///< (fit - ref) / ref
  std::vector<double> latency_rel_residual;
};

/// Fits per-event coefficients to the SiPh totals of every reference model:
/// relative residuals plus ridge * ||coeff / prior - 1||^2, coefficients >= 0.
FitResult fit_coeffs(const EnergyCoeffs& priors = EnergyCoeffs::priors(), double ridge = 1e-3,
                     const optical::CoreGeometry& geom = {});

std::string cost_report_csv(const std::vector<std::pair<std::string, CostReport>>& rows);

} // namespace mrsim::perf
