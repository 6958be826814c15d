#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/QR>

#include "mrsim/perf/perf_model.hpp"

namespace mrsim::perf {

namespace {
constexpr std::size_t idx(Component c) { return static_cast<std::size_t>(c); }
} // namespace

const char* component_name(Component c) {
  switch (c) {
  case Component::Tuning: return "tuning";
  case Component::Vcsel: return "vcsel";
  case Component::Bpd: return "bpd";
  case Component::Adc: return "adc";
  case Component::Dac: return "dac";
  case Component::Memory: return "memory";
  case Component::Electronic: return "electronic";
  }
  return "unknown";
}

EventCounts& EventCounts::operator+=(const EventCounts& o) {
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    energy[i] += o.energy[i];
    latency[i] += o.latency[i];
  }
  return *this;
}

EventCounts& EventCounts::operator*=(double s) {
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    energy[i] *= s;
    latency[i] *= s;
  }
  return *this;
}

EventCounts matmul_events(Eigen::Index m, Eigen::Index k, Eigen::Index n,
                          const optical::CoreGeometry& geom) {
  const optical::TileSchedule s = optical::build_schedule(m, k, n, geom);
  const optical::ConversionCounts c = optical::cycles_and_conversions(s, m, false, geom);
  EventCounts e;
  e.energy[idx(Component::Tuning)] = static_cast<double>(c.tuned_rings);
  e.energy[idx(Component::Vcsel)] = static_cast<double>(c.vcsel_activations);
  e.energy[idx(Component::Bpd)] = static_cast<double>(c.bpd_reads);
  e.energy[idx(Component::Adc)] = static_cast<double>(c.adc_ops);
  e.energy[idx(Component::Dac)] = static_cast<double>(c.dac_ops);
  const double md = static_cast<double>(m), kd = static_cast<double>(k), nd = static_cast<double>(n);
  // Activation traffic. Weight fetches travel with ring programming and are
  // part of the tuning events.
  e.energy[idx(Component::Memory)] = md * kd + md * nd;
  // Partial sums of the row tiles are added electronically.
  e.energy[idx(Component::Electronic)] = md * nd * static_cast<double>(s.row_tiles - 1);

  // Programming a tile is one serialized step on its core.
  const auto tiles = static_cast<double>(s.tiles.size());
  const auto cores = static_cast<double>(std::max<Eigen::Index>(s.active_cores, 1));
  e.latency[idx(Component::Tuning)] = std::ceil(tiles / cores);
  // Sources and detectors switch once per core cycle. The converters are a
  // shared, throughput-bound pool, so their time follows the conversion count.
  e.latency[idx(Component::Vcsel)] = static_cast<double>(c.optical_cycles);
  e.latency[idx(Component::Bpd)] = static_cast<double>(c.optical_cycles);
  e.latency[idx(Component::Adc)] = static_cast<double>(c.adc_ops);
  e.latency[idx(Component::Dac)] = static_cast<double>(c.dac_ops);
  e.latency[idx(Component::Memory)] = e.energy[idx(Component::Memory)];
  e.latency[idx(Component::Electronic)] = e.energy[idx(Component::Electronic)];
  return e;
}

std::vector<VitShape> vit_presets() {
  auto make = [](const char* name, int d, int h, int l) {
    VitShape s;
    s.name = name;
    s.d_model = d;
    s.n_heads = h;
    s.n_layers = l;
    return s;
  };
  return {make("Tiny", 192, 3, 12), make("Small", 384, 6, 12), make("Base", 768, 12, 12),
          make("Large", 1024, 16, 24)};
}

VitShape vit_preset(const std::string& name) {
  for (const VitShape& s : vit_presets()) {
    if (s.name == name) {
      return s;
    }
  }
  throw ParameterError("unknown ViT preset '" + name + "' (Tiny, Small, Base, Large)");
}

namespace {

// Element-wise electronic work outside the matrix products.
EventCounts electronic_events(double count) {
  EventCounts e;
  e.energy[idx(Component::Electronic)] = count;
  e.latency[idx(Component::Electronic)] = count;
  return e;
}

} // namespace

std::vector<LayerCounts> layer_counts(const VitShape& shape, const optical::CoreGeometry& geom) {
  if (shape.image_size % shape.patch_size != 0 || shape.d_model % shape.n_heads != 0) {
    throw ParameterError("VitShape: patch grid or head split is not exact");
  }
  const Eigen::Index n = shape.n_tokens();
  const Eigen::Index d = shape.d_model;
  const Eigen::Index dk = d / shape.n_heads;
  const Eigen::Index f = static_cast<Eigen::Index>(shape.mlp_ratio) * d;
  const Eigen::Index pd = static_cast<Eigen::Index>(shape.channels) * shape.patch_size * shape.patch_size;
  const double nd = static_cast<double>(n), dd = static_cast<double>(d);

  std::vector<LayerCounts> out;
  LayerCounts embed{"patch_embed", matmul_events(shape.n_patches(), pd, d, geom)};
  embed.counts += electronic_events(nd * dd); // position add
  out.push_back(embed);

  EventCounts block;
  for (int i = 0; i < 3; ++i) {
    block += matmul_events(n, d, d, geom);
  }
  EventCounts per_head = matmul_events(n, dk, n, geom);
  per_head += matmul_events(n, n, dk, geom);
  per_head *= static_cast<double>(shape.n_heads);
  block += per_head;
  block += matmul_events(n, d, d, geom);
  block += matmul_events(n, d, f, geom);
  block += matmul_events(n, f, d, geom);
  const double softmax = static_cast<double>(shape.n_heads) * nd * nd;
  const double norms = 2.0 * nd * dd;
  const double gelu = nd * static_cast<double>(f);
  const double residual = 2.0 * nd * dd;
  block += electronic_events(softmax + norms + gelu + residual);
  for (int l = 0; l < shape.n_layers; ++l) {
    out.push_back({"block_" + std::to_string(l), block});
  }

  LayerCounts head{"head", matmul_events(1, d, shape.n_classes, geom)};
  head.counts += electronic_events(nd * dd); // final norm
  out.push_back(head);
  return out;
}

EventCounts total_counts(const VitShape& shape, const optical::CoreGeometry& geom) {
  EventCounts t;
  for (const LayerCounts& l : layer_counts(shape, geom)) {
    t += l.counts;
  }
  return t;
}

void EnergyCoeffs::validate() const {
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    if (!(energy_pj[i] >= 0.0) || !(latency_ns[i] >= 0.0) || !std::isfinite(energy_pj[i]) ||
        !std::isfinite(latency_ns[i])) {
      throw ParameterError(std::string("EnergyCoeffs: ") +
                           component_name(static_cast<Component>(i)) +
                           " coefficients must be finite and >= 0");
    }
  }
  if (!(eo_compensation_overhead >= 0.0) || eo_period_iters <= 0) {
    throw ParameterError("EnergyCoeffs: EO overhead >= 0 and period > 0 required");
  }
}

EnergyCoeffs EnergyCoeffs::priors() {
  EnergyCoeffs c;
  // pJ per event: thermal tuning hold, VCSEL pulse, photodetector read,
  // 8-bit ADC and DAC conversions, SRAM word access, digital element-wise op.
  c.energy_pj = {0.05, 0.2, 0.05, 0.8, 0.05, 1.2, 0.2};
  // ns per serialized step; converter entries are per conversion across the pool.
  c.latency_ns = {4.0, 0.05, 0.05, 0.005, 0.0003, 0.0002, 0.0005};
  return c;
}

CostReport cost_report(const EventCounts& counts, const EnergyCoeffs& coeffs) {
  coeffs.validate();
  CostReport r;
  double pipe_e = 0.0, pipe_t = 0.0;
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    r.energy_pj[i] = counts.energy[i] * coeffs.energy_pj[i];
    r.latency_ns[i] = counts.latency[i] * coeffs.latency_ns[i];
    pipe_e += r.energy_pj[i];
    pipe_t += r.latency_ns[i];
  }
  const double frac = coeffs.eo_compensation_overhead / coeffs.eo_period_iters;
  const std::size_t t = idx(Component::Tuning);
  r.eo_energy_pj = frac * (coeffs.eo_full_pipeline ? pipe_e : r.energy_pj[t]);
  r.eo_latency_ns = frac * (coeffs.eo_full_pipeline ? pipe_t : r.latency_ns[t]);
  r.total_energy_pj = pipe_e + r.eo_energy_pj;
  r.total_latency_ns = pipe_t + r.eo_latency_ns;
  return r;
}

double kfps_per_watt(double latency_s, double energy_j) {
  if (!(latency_s > 0.0) || !(energy_j > 0.0)) {
    throw ParameterError("kfps_per_watt: latency and energy must be positive");
  }
  const double fps = 1.0 / latency_s;
  const double watts = energy_j / latency_s;
  return fps / 1000.0 / watts;
}

const ReferenceTable& reference_table() {
  static const ReferenceTable t = [] {
    ReferenceTable r;
    r.models = {
        {"Tiny", 269, 61.4, 27429, 10528, 54.86, 263.19, 102, 0, 39.1, 1, 0.89, 2, 4.29, 2},
        {"Small", 963, 188, 108050, 41472, 216.1, 1036.8, 112.2, 1, 43.1, 1, 1.15, 2, 5.51, 2},
        {"Base", 3670, 637, 428880, 164610, 857.8, 4115.3, 116.9, 1, 44.8, 1, 1.35, 2, 6.46, 2},
        {"Large", 12800, 2150, 151010, 579620, 3020.3, 14490, 11.8, 1, 45.3, 1, 1.40, 2, 6.74,
         2},
    };
    const double ours = r.peak_kfps_per_watt;
    auto rel = [ours](const char* name, double slower) {
      return EfficiencyReference{name, ours / slower, slower};
    };
    r.efficiency = {
        {"Ours", ours, 1.0},       rel("Lightator", 1.6), rel("LightBulb", 1.7),
        rel("Robin", 2.2),         rel("HQNNA", 2.9),     rel("CrossLight", 9.3),
        rel("HolyLight", 30.4),    {"VCK190", 1.42, 70.6}, {"A100", 0.86, 116.7},
    };
    return r;
  }();
  return t;
}

std::vector<CompareRow> compare_table() {
  std::vector<CompareRow> rows;
  auto within = [](double computed, double printed, int decimals) {
    // Allow one unit in the last printed digit (plus float slack).
    return std::abs(computed - printed) <= std::pow(10.0, -decimals) * (1.0 + 1e-9);
  };
  for (const ModelReference& m : reference_table().models) {
    auto add = [&](const char* col, double num, double den, double printed, int dec) {
      const double ratio = num / den;
      rows.push_back({m.name, col, ratio, printed, dec, within(ratio, printed, dec)});
    };
    add("latency/FPGA", m.fpga_latency_us, m.siph_latency_us, m.fpga_latency_x,
        m.fpga_latency_decimals);
    add("latency/GPU", m.gpu_latency_us, m.siph_latency_us, m.gpu_latency_x,
        m.gpu_latency_decimals);
    add("latency/SiPh", m.siph_latency_us, m.siph_latency_us, 1.0, 0);
    add("energy/FPGA", m.fpga_energy_uj, m.siph_energy_uj, m.fpga_energy_x,
        m.fpga_energy_decimals);
    add("energy/GPU", m.gpu_energy_uj, m.siph_energy_uj, m.gpu_energy_x, m.gpu_energy_decimals);
    add("energy/SiPh", m.siph_energy_uj, m.siph_energy_uj, 1.0, 0);
  }
  return rows;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "model" << std::setw(15) << "column" << std::right
     << std::setw(12) << "computed" << std::setw(10) << "printed" << "  match\n";
  for (const CompareRow& r : rows) {
    os << std::left << std::setw(8) << r.model << std::setw(15) << r.column << std::right
       << std::fixed << std::setprecision(4) << std::setw(12) << r.computed_ratio
       << std::setprecision(r.printed_decimals) << std::setw(10) << r.printed_ratio << "  "
       << (r.within_last_digit ? "yes" : "NO") << '\n';
  }
  return os.str();
}

Vector nnls(const Matrix& a, const Vector& b, int max_iter) {
  if (a.rows() != b.size()) {
    throw ShapeError("nnls: A has " + std::to_string(a.rows()) + " rows, b has " +
                     std::to_string(b.size()));
  }
  const Eigen::Index n = a.cols();
  if (max_iter <= 0) {
    max_iter = static_cast<int>(30 * n + 30);
  }
  const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()) *
                     std::max(1.0, b.cwiseAbs().maxCoeff()) * static_cast<double>(a.rows());
  Vector x = Vector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);

  auto solve_passive = [&](Vector& z) {
    std::vector<Eigen::Index> p;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[static_cast<std::size_t>(j)]) {
        p.push_back(j);
      }
    }
    z = Vector::Zero(n);
    if (p.empty()) {
      return;
    }
    Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      ap.col(static_cast<Eigen::Index>(i)) = a.col(p[i]);
    }
    const Eigen::VectorXd zp = ap.colPivHouseholderQr().solve(b);
    for (std::size_t i = 0; i < p.size(); ++i) {
      z(p[i]) = zp(static_cast<Eigen::Index>(i));
    }
  };

  for (int it = 0; it < max_iter; ++it) {
    const Vector w = a.transpose() * (b - a * x);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) {
      return x;
    }
    passive[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner <= max_iter; ++inner) {
      Vector z;
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
          feasible = false;
        }
      }
      if (feasible) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
          alpha = std::min(alpha, x(j) / (x(j) - z(j)));
        }
      }
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x(j) <= 1e-15) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
        }
      }
    }
  }
  throw NumericalContractError("nnls: no convergence within the iteration limit");
}

namespace {

// Fits one of the two coefficient sets in units of the prior.
PerComponent fit_set(const std::vector<PerComponent>& counts, const std::vector<double>& target,
                     const PerComponent& prior, const EnergyCoeffs& settings, double ridge) {
  const auto models = static_cast<Eigen::Index>(counts.size());
  const auto nc = static_cast<Eigen::Index>(kComponentCount);
  const double frac = settings.eo_compensation_overhead / settings.eo_period_iters;
  Matrix a = Matrix::Zero(models + nc, nc);
  Vector b = Vector::Zero(models + nc);
  for (Eigen::Index m = 0; m < models; ++m) {
    for (Eigen::Index c = 0; c < nc; ++c) {
      double scale = 1.0;
      if (settings.eo_full_pipeline) {
        scale += frac;
      } else if (c == static_cast<Eigen::Index>(idx(Component::Tuning))) {
        scale += frac;
      }
      a(m, c) = scale * counts[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)] *
                prior[static_cast<std::size_t>(c)] / target[static_cast<std::size_t>(m)];
    }
    b(m) = 1.0;
  }
  const double r = std::sqrt(ridge);
  for (Eigen::Index c = 0; c < nc; ++c) {
    a(models + c, c) = prior[static_cast<std::size_t>(c)] > 0.0 ? r : 0.0;
    b(models + c) = prior[static_cast<std::size_t>(c)] > 0.0 ? r : 0.0;
  }
  const Vector u = nnls(a, b);
  PerComponent out{};
  for (std::size_t c = 0; c < kComponentCount; ++c) {
    out[c] = u(static_cast<Eigen::Index>(c)) * prior[c];
  }
  return out;
}

} // namespace

FitResult fit_coeffs(const EnergyCoeffs& priors, double ridge, const optical::CoreGeometry& geom) {
  priors.validate();
  if (!(ridge >= 0.0)) {
    throw ParameterError("fit_coeffs: ridge must be >= 0");
  }
  const ReferenceTable& ref = reference_table();
  std::vector<PerComponent> e_counts, t_counts;
  std::vector<double> e_target, t_target;
  FitResult fr;
  for (const ModelReference& m : ref.models) {
    const EventCounts c = total_counts(vit_preset(m.name), geom);
    e_counts.push_back(c.energy);
    t_counts.push_back(c.latency);
    e_target.push_back(m.siph_energy_uj * 1e6);
    t_target.push_back(m.siph_latency_us * 1e3);
    fr.models.push_back(m.name);
  }
  fr.coeffs = priors;
  fr.coeffs.energy_pj = fit_set(e_counts, e_target, priors.energy_pj, priors, ridge);
  fr.coeffs.latency_ns = fit_set(t_counts, t_target, priors.latency_ns, priors, ridge);
  for (std::size_t i = 0; i < ref.models.size(); ++i) {
    const CostReport r = cost_report(total_counts(vit_preset(ref.models[i].name), geom), fr.coeffs);
    fr.energy_rel_residual.push_back(r.total_energy_pj / e_target[i] - 1.0);
    fr.latency_rel_residual.push_back(r.total_latency_ns / t_target[i] - 1.0);
  }
  return fr;
}

EnergyCoeffs EnergyCoeffs::calibrated() {
  // Output of fit_coeffs() with the default priors, ridge and geometry
  // (regenerate with `fit-coeffs`).
  EnergyCoeffs c;
  c.energy_pj = {0.049800511580064516, 0.19483490574036069, 0.049314890880102824,
                 0.62461206530631797,  0.049677181608772554, 1.8055694931395676,
                 0.18783996390654559};
  c.latency_ns = {3.7274767845054475,     0.042242884451906375,   0.042242884451906354,
                  0.005585763731894039,   0.00030045822584395083, 0.00018587240440510211,
                  0.00051219379227868209};
  return c;
}

std::string cost_report_csv(const std::vector<std::pair<std::string, CostReport>>& rows) {
  std::ostringstream os;
  os << "model,quantity";
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    os << ',' << component_name(static_cast<Component>(i));
  }
  os << ",eo_overhead,total\n" << std::setprecision(17);
  for (const auto& [name, r] : rows) {
    os << name << ",energy_pj";
    for (double v : r.energy_pj) {
      os << ',' << v;
    }
    os << ',' << r.eo_energy_pj << ',' << r.total_energy_pj << '\n';
    os << name << ",latency_ns";
    for (double v : r.latency_ns) {
      os << ',' << v;
    }
    os << ',' << r.eo_latency_ns << ',' << r.total_latency_ns << '\n';
  }
  return os.str();
}

} // namespace mrsim::perf
