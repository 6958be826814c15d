#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mrsim/cli/commands.hpp"
#include "mrsim/core/log.hpp"

namespace mrsim::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

class CsvFile {
public:
  CsvFile(const fs::path& path, const std::string& header) : path_(path), out_(path) {
    if (!out_) {
      throw FormatError("cannot write " + path.string());
    }
    out_ << header << '\n';
  }
  template <typename... T>
  void row(const T&... cells) {
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << cell(cells)), ...);
    out_ << '\n';
    out_.flush();
  }

private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return num(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(unsigned long v) { return std::to_string(v); }
  static std::string cell(unsigned long long v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "true" : "false"; }

  fs::path path_;
  std::ofstream out_;
};

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path d(cfg.output_dir);
  fs::create_directories(d);
  return d;
}

SeedContext root(const ExperimentConfig& cfg) { return SeedContext(cfg.seed); }

struct Data {
  vit::Dataset train;
  vit::Dataset test;
};

Data load_data(const ExperimentConfig& cfg) {
  Data d;
  if (cfg.data.source == "csv") {
    d.train = vit::load_dataset_csv(cfg.data.train_csv, cfg.vit.image_size, cfg.vit.channels,
                                    cfg.vit.n_classes);
    d.test = vit::load_dataset_csv(cfg.data.test_csv, cfg.vit.image_size, cfg.vit.channels,
                                   cfg.vit.n_classes);
    return d;
  }
  if (cfg.vit.channels != 1) {
    throw ConfigError("data.source = synthetic produces single-channel images; set vit.channels = 1");
  }
  vit::SyntheticSpec spec;
  spec.n_classes = cfg.vit.n_classes;
  spec.image_size = cfg.vit.image_size;
  spec.separation = cfg.data.separation;
  spec.blob_width = cfg.data.blob_width;
  spec.position_jitter = cfg.data.position_jitter;
  spec.pixel_noise = cfg.data.pixel_noise;
  spec.n_per_class = cfg.data.n_per_class;
  d.train = vit::make_synthetic_dataset(root(cfg).child("data").child("train"), spec);
  spec.n_per_class = cfg.data.test_per_class;
  d.test = vit::make_synthetic_dataset(root(cfg).child("data").child("test"), spec);
  return d;
}

vit::EvalOptions eval_options(const ExperimentConfig& cfg) {
  vit::EvalOptions o;
  o.policy = cfg.train.policy;
  o.matmul = cfg.matmul_options();
  o.geometry = cfg.core;
  o.threads = cfg.threads;
  return o;
}

json coeffs_to_json(const perf::EnergyCoeffs& c) {
  json e = json::object(), t = json::object();
  for (std::size_t i = 0; i < perf::kComponentCount; ++i) {
    const char* name = perf::component_name(static_cast<perf::Component>(i));
    e[name] = c.energy_pj[i];
    t[name] = c.latency_ns[i];
  }
  return {{"energy_pj", e},
          {"latency_ns", t},
          {"eo_compensation_overhead", c.eo_compensation_overhead},
          {"eo_period_iters", c.eo_period_iters},
          {"eo_full_pipeline", c.eo_full_pipeline}};
}

perf::EnergyCoeffs coeffs_from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("perf.coeffs: cannot open " + path.string());
  }
  try {
    const json j = json::parse(in);
    perf::EnergyCoeffs c;
    for (std::size_t i = 0; i < perf::kComponentCount; ++i) {
      const char* name = perf::component_name(static_cast<perf::Component>(i));
      c.energy_pj[i] = j.at("energy_pj").at(name).get<double>();
      c.latency_ns[i] = j.at("latency_ns").at(name).get<double>();
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError("perf.coeffs: " + path.string() + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError("perf.coeffs: " + path.string() + ": " + e.what());
  }
}

perf::EnergyCoeffs configured_coeffs(const ExperimentConfig& cfg) {
  perf::EnergyCoeffs c =
      cfg.perf.coeffs.empty() ? perf::EnergyCoeffs::calibrated() : coeffs_from_file(cfg.perf.coeffs);
  c.eo_compensation_overhead = cfg.eo.eo_compensation_overhead;
  c.eo_period_iters = cfg.eo.eo_period_iters;
  c.eo_full_pipeline = cfg.eo.eo_full_pipeline;
  return c;
}

void write_metrics_row(CsvFile& csv, const vit::EpochMetrics& m) {
  csv.row(m.epoch, m.tau, m.mean_loss, m.mean_ce, m.mean_cct, m.clean_acc, m.noisy_mean_acc,
          m.noisy_best_acc);
}

constexpr const char* kMetricsHeader =
    "epoch,tau,mean_loss,mean_ce,mean_cct,clean_acc,noisy_mean_acc,noisy_best_acc";

} // namespace

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const CommandArgs& args) {
  json a = json::object();
  for (const auto& [k, v] : args) {
    a[k] = v;
  }
  const json m = {
      {"tool", "mrsim"},
      {"version", kVersion},
      {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
      {"command", command},
      {"args", a},
      {"seed", cfg.seed},
      {"config_hash", hex64(cfg.hash())},
      {"config", cfg.to_text(false)},
  };
  std::ofstream out(out_dir(cfg) / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) {
    throw FormatError("cannot write manifest.json");
  }
}

void cmd_simulate_matmul(const ExperimentConfig& cfg) {
  const Eigen::Index m = cfg.matmul.m, k = cfg.matmul.k, n = cfg.matmul.n;
  const SeedContext ctx = root(cfg).child("simulate_matmul");
  const Matrix x = gauss(ctx.child("x"), static_cast<std::size_t>(m * k), 0.0, 1.0)
                       .reshaped<Eigen::RowMajor>(m, k);
  const Matrix w = gauss(ctx.child("w"), static_cast<std::size_t>(k * n), 0.0, 1.0)
                       .reshaped<Eigen::RowMajor>(k, n);
  const Matrix exact = matmul(x, w);
  const int trials = cfg.matmul.trials;
  const optical::MatmulOptions mo = cfg.matmul_options();

  // errors[t] holds trial t; filled independently so the thread count cannot
  // change any value.
  std::vector<Matrix> errors(static_cast<std::size_t>(trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < trials; t = next++) {
      noise::NoiseStreams s{ctx.child("chip", static_cast<std::uint64_t>(t)), 0, 0, 0};
      errors[static_cast<std::size_t>(t)] =
          optical::noisy_matmul(x, w, cfg.noise, s, mo, cfg.core).y - exact;
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < std::min(cfg.threads, trials); ++i) {
    pool.emplace_back(worker);
  }
  worker();
  for (std::thread& th : pool) {
    th.join();
  }

  CsvFile csv(out_dir(cfg) / "matmul_errors.csv",
              "row,col,clean,mean_error,std_error,empirical_var,analytic_var,var_se,within_3sigma");
  std::size_t inside = 0;
  double max_rel = 0.0;
  const double scale = std::max(exact.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double mean = 0.0;
      for (const Matrix& e : errors) {
        mean += e(i, j);
      }
      mean /= trials;
      double m2 = 0.0, m4 = 0.0;
      for (const Matrix& e : errors) {
        const double d = e(i, j) - mean;
        m2 += d * d;
        m4 += d * d * d * d;
        max_rel = std::max(max_rel, std::abs(e(i, j)) / scale);
      }
      const double var = m2 / (trials - 1);
      const double se = std::sqrt(std::max(m4 / trials - (m2 / trials) * (m2 / trials), 0.0) / trials);
      const double analytic =
          noise::mac_variance(x.row(i).transpose(), w.col(j), cfg.noise).variance;
      const bool ok = std::abs(var - analytic) <= 3.0 * se || (var == 0.0 && analytic == 0.0);
      inside += ok ? 1 : 0;
      csv.row(static_cast<long>(i), static_cast<long>(j), exact(i, j), mean, std::sqrt(var), var,
              analytic, se, ok);
    }
  }
  std::cout << "simulate-matmul: " << m << "x" << k << " * " << k << "x" << n << ", " << trials
            << " chips; analytic variance within 3 SE for " << inside << "/" << m * n
            << " elements; max |error|/max|y| = " << max_rel << '\n';
  if (cfg.noise.is_noiseless() && cfg.lut_bits == 32 && max_rel > 1e-9) {
    throw NumericalContractError("simulate-matmul: noise is off but the optical result differs "
                                 "from the exact product by " + num(max_rel));
  }
}

void cmd_train(const ExperimentConfig& cfg) {
  const Data data = load_data(cfg);
  vit::TrainState state;
  if (!cfg.resume.empty()) {
    state = vit::load_checkpoint(cfg.resume);
    const vit::ViTConfig& c = state.model.config;
    if (c.d_model != cfg.vit.d_model || c.n_layers != cfg.vit.n_layers ||
        c.n_heads != cfg.vit.n_heads || c.image_size != cfg.vit.image_size ||
        c.patch_size != cfg.vit.patch_size || c.n_classes != cfg.vit.n_classes) {
      throw ConfigError("train.resume: checkpoint model shape differs from [vit]");
    }
    state.model.config.norm_kind = cfg.vit.norm_kind;
  } else {
    state = vit::make_train_state(vit::init_model(cfg.vit, root(cfg).child("model")),
                                  root(cfg).child("train"));
  }
  vit::TrainConfig tc = cfg.train;
  const fs::path dir = out_dir(cfg);
  CsvFile csv(dir / "metrics.csv", kMetricsHeader);
  vit::train(state, data.train, tc, [&](const vit::EpochMetrics& m, const vit::TrainState&) {
    write_metrics_row(csv, m);
    std::cout << "epoch " << m.epoch << " loss " << m.mean_loss << " clean_acc " << m.clean_acc
              << '\n';
  });
  vit::save_checkpoint(state, dir / "checkpoint");
  CsvFile fin(dir / "final.csv", "split,clean_acc");
  fin.row("train", vit::evaluate_clean(state.model, data.train));
  fin.row("test", vit::evaluate_clean(state.model, data.test));
}

void cmd_evaluate(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) {
    throw ConfigError("evaluate needs eval.checkpoint");
  }
  const vit::TrainState state = vit::load_checkpoint(cfg.checkpoint);
  const Data data = load_data(cfg);
  const vit::NoisyEvaluation ev = vit::evaluate_noisy(
      state.model, data.test, cfg.noise, cfg.eval_trials, root(cfg).child("eval"), eval_options(cfg));
  const fs::path dir = out_dir(cfg);
  CsvFile trials(dir / "eval_trials.csv", "trial,accuracy");
  for (std::size_t t = 0; t < ev.per_trial.size(); ++t) {
    trials.row(static_cast<long>(t), ev.per_trial[t]);
  }
  const double clean = vit::evaluate_clean(state.model, data.test);
  CsvFile sum(dir / "eval_summary.csv", "metric,value");
  sum.row("clean_acc", clean);
  sum.row("noisy_mean_acc", ev.mean_acc);
  sum.row("noisy_best_acc", ev.best_acc);
  sum.row("noisy_std_acc", ev.std_acc);
  sum.row("trials", static_cast<long>(cfg.eval_trials));
  std::cout << "clean " << clean << "  noisy mean " << ev.mean_acc << "  best " << ev.best_acc
            << "  std " << ev.std_acc << " over " << cfg.eval_trials << " trials\n";
}

void cmd_sweep_noise(const ExperimentConfig& cfg) {
  const Data data = load_data(cfg);
  vit::ViTConfig base_cfg = cfg.vit;
  base_cfg.norm_kind = vit::NormKind::LN;
  vit::TrainState base = vit::make_train_state(vit::init_model(base_cfg, root(cfg).child("model")),
                                               root(cfg).child("train"));
  vit::TrainConfig pre = cfg.train;
  pre.train_mode = vit::ForwardMode::Exact;
  pre.use_cct = false;
  pre.eval_trials = 0;
  vit::train(base, data.train, pre);
  const double clean = vit::evaluate_clean(base.model, data.test);
  std::cout << "baseline clean accuracy " << clean << '\n';

  const fs::path dir = out_dir(cfg);
  CsvFile csv(dir / "sweep.csv", "sigma_fab,config,mean_acc,best_acc,std_acc,clean_acc");
  std::map<std::string, std::vector<double>> by_config;
  const vit::EvalOptions eo = eval_options(cfg);
  for (std::size_t i = 0; i < cfg.sweep_sigma_fab.size(); ++i) {
    const double sigma = cfg.sweep_sigma_fab[i];
    noise::NoiseParams nz = cfg.noise;
    nz.sigma_fab = sigma;
    const SeedContext ectx = root(cfg).child("eval").child("level", i);
    csv.row(sigma, "clean", clean, clean, 0.0, clean);

    auto evaluate = [&](const std::string& name, const vit::Model& model) {
      const vit::NoisyEvaluation ev =
          vit::evaluate_noisy(model, data.test, nz, cfg.eval_trials, ectx, eo);
      const double c = vit::evaluate_clean(model, data.test);
      csv.row(sigma, name, ev.mean_acc, ev.best_acc, ev.std_acc, c);
      by_config[name].push_back(ev.mean_acc);
      std::cout << "sigma_fab " << sigma << "  " << std::left << std::setw(13) << name
                << std::right << " mean " << ev.mean_acc << "  best " << ev.best_acc << '\n';
    };
    evaluate("direct_noisy", base.model);

    auto finetune = [&](bool cct, vit::NormKind norm) {
      vit::TrainState st = base;
      st.model.config.norm_kind = norm;
      vit::TrainConfig ft = cfg.train;
      ft.epochs = cfg.finetune.epochs;
      ft.lr = cfg.finetune.lr;
      ft.train_noise = nz;
      ft.eval_trials = 0;
      ft.use_cct = cct;
      ft.train_mode = cct ? cfg.finetune.cct_mode : vit::ForwardMode::NoisyEmulated;
      vit::train(st, data.train, ft);
      return st.model;
    };
    evaluate("normal_ft", finetune(false, vit::NormKind::LN));
    evaluate("cct", finetune(true, vit::NormKind::LN));
    evaluate("cct_naln", finetune(true, vit::NormKind::NALN));
  }

  // Accuracy should not rise with the noise level.
  CsvFile trend(dir / "sweep_trend.csv", "config,monotone_nonincreasing");
  for (const auto& [name, accs] : by_config) {
    bool mono = true;
    for (std::size_t i = 1; i < accs.size(); ++i) {
      if (cfg.sweep_sigma_fab[i] > cfg.sweep_sigma_fab[i - 1] && accs[i] > accs[i - 1]) {
        mono = false;
      }
    }
    trend.row(name, mono);
    if (!mono) {
      warn("sweep-noise: mean accuracy of " + name + " is not monotone in sigma_fab");
    }
  }
}

void cmd_energy_report(const ExperimentConfig& cfg) {
  const perf::EnergyCoeffs coeffs = configured_coeffs(cfg);
  const fs::path dir = out_dir(cfg);
  std::vector<std::pair<std::string, perf::CostReport>> reports;
  CsvFile layers(dir / "energy_layers.csv", "model,layer,energy_pj,latency_ns");
  for (const perf::VitShape& shape : perf::vit_presets()) {
    for (const perf::LayerCounts& l : perf::layer_counts(shape, cfg.core)) {
      const perf::CostReport r = perf::cost_report(l.counts, coeffs);
      layers.row(shape.name, l.name, r.total_energy_pj, r.total_latency_ns);
    }
    reports.emplace_back(shape.name, perf::cost_report(perf::total_counts(shape, cfg.core), coeffs));
  }
  {
    std::ofstream out(dir / "energy_report.csv");
    out << perf::cost_report_csv(reports);
  }

  const perf::ReferenceTable& ref = perf::reference_table();
  CsvFile totals(dir / "energy_totals.csv",
                 "model,latency_us,ref_latency_us,latency_rel_err,energy_uj,ref_energy_uj,"
                 "energy_rel_err,kfps_per_watt");
  std::cout << std::fixed << std::setprecision(1);
  std::cout << "model    latency_us (ref)      energy_uj (ref)    KFPS/W\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const perf::CostReport& r = reports[i].second;
    const perf::ModelReference& m = ref.models[i];
    const double kfps = perf::kfps_per_watt(r.latency_us() * 1e-6, r.energy_uj() * 1e-6);
    totals.row(m.name, r.latency_us(), m.siph_latency_us, r.latency_us() / m.siph_latency_us - 1.0,
               r.energy_uj(), m.siph_energy_uj, r.energy_uj() / m.siph_energy_uj - 1.0, kfps);
    std::cout << std::left << std::setw(8) << m.name << std::right << std::setw(10)
              << r.latency_us() << " (" << std::setw(7) << m.siph_latency_us << ")  "
              << std::setw(10) << r.energy_uj() << " (" << std::setw(6) << m.siph_energy_uj
              << ")  " << std::setw(6) << kfps << '\n';
  }
  std::cout.unsetf(std::ios::floatfield);
  std::cout << std::setprecision(6);

  const std::vector<perf::CompareRow> rows = perf::compare_table();
  CsvFile cmp(dir / "compare_table.csv",
              "model,column,computed_ratio,printed_ratio,printed_decimals,within_last_digit");
  for (const perf::CompareRow& r : rows) {
    cmp.row(r.model, r.column, r.computed_ratio, r.printed_ratio, r.printed_decimals,
            r.within_last_digit);
  }
  std::cout << '\n' << perf::format_compare_table(rows);

  CsvFile eff(dir / "efficiency.csv", "system,kfps_per_watt,slower_factor");
  for (const perf::EfficiencyReference& e : ref.efficiency) {
    eff.row(e.name, e.kfps_per_watt, e.slower_factor);
  }
}

void cmd_fit_coeffs(const ExperimentConfig& cfg) {
  perf::EnergyCoeffs priors = perf::EnergyCoeffs::priors();
  priors.eo_compensation_overhead = cfg.eo.eo_compensation_overhead;
  priors.eo_period_iters = cfg.eo.eo_period_iters;
  priors.eo_full_pipeline = cfg.eo.eo_full_pipeline;
  const perf::FitResult fr = perf::fit_coeffs(priors, cfg.perf.ridge, cfg.core);
  const fs::path dir = out_dir(cfg);
  {
    std::ofstream out(dir / "coeffs.json");
    out << std::setprecision(17) << coeffs_to_json(fr.coeffs).dump(2) << '\n';
  }
  CsvFile res(dir / "fit_residuals.csv", "model,energy_rel_residual,latency_rel_residual");
  double worst = 0.0;
  for (std::size_t i = 0; i < fr.models.size(); ++i) {
    res.row(fr.models[i], fr.energy_rel_residual[i], fr.latency_rel_residual[i]);
    worst = std::max({worst, std::abs(fr.energy_rel_residual[i]),
                      std::abs(fr.latency_rel_residual[i])});
    std::cout << fr.models[i] << ": energy " << fr.energy_rel_residual[i] * 100 << "%, latency "
              << fr.latency_rel_residual[i] * 100 << "%\n";
  }
  if (worst > 0.10) {
    throw NumericalContractError("fit-coeffs: worst relative residual " + num(worst) +
                                 " exceeds 10%");
  }
}

void cmd_export_lut(const ExperimentConfig& cfg, int bits) {
  if (bits != 4 && bits != 8 && bits != 32) {
    throw ConfigError("export-lut: --bits must be 4, 8 or 32");
  }
  if (bits > 16) {
    throw ConfigError("export-lut: a 32-bit table has 2^32 entries; export 4 or 8 bits");
  }
  const device::DetuningLut lut(bits, cfg.device);
  lut.export_csv(out_dir(cfg) / ("lut_" + std::to_string(bits) + "bit.csv"));
}

void cmd_export_variation_map(const ExperimentConfig& cfg) {
  const VariationSettings& v = cfg.variation;
  const SeedContext ctx = root(cfg).child("variation");
  const device::VariationMap map = device::generate_variation_map(
      ctx.child("map"), v.width_mm, v.height_mm, v.cell_mm, v.correlation_length_mm,
      v.amplitude_nm);
  const fs::path dir = out_dir(cfg);
  map.export_csv(dir / "variation_map.csv");
  const device::BankShiftSamples s =
      device::sample_bank_shifts(map, ctx.child("banks"), v.bank_rings, v.placements);
  CsvFile banks(dir / "bank_shifts.csv", "placement,row,col,sigma_b_nm,sigma_b_over_linewidth");
  for (std::size_t p = 0; p < s.placements.size(); ++p) {
    const double sb = s.sigma_b_nm(static_cast<Eigen::Index>(p));
    banks.row(static_cast<long>(p), static_cast<long>(s.placements[p].row),
              static_cast<long>(s.placements[p].col), sb, sb / cfg.device.linewidth_nm);
  }
}

void run_command(const std::string& command, const ExperimentConfig& cfg,
                 const CommandArgs& args) {
  write_manifest(cfg, command, args);
  if (command == "simulate-matmul") {
    cmd_simulate_matmul(cfg);
  } else if (command == "sweep-noise") {
    cmd_sweep_noise(cfg);
  } else if (command == "train") {
    cmd_train(cfg);
  } else if (command == "evaluate") {
    cmd_evaluate(cfg);
  } else if (command == "energy-report") {
    cmd_energy_report(cfg);
  } else if (command == "fit-coeffs") {
    cmd_fit_coeffs(cfg);
  } else if (command == "export-lut") {
    auto it = args.find("bits");
    int bits = cfg.lut_bits;
    if (it != args.end()) {
      try {
        bits = std::stoi(it->second);
      } catch (const std::exception&) {
        throw ConfigError("export-lut: --bits must be an integer");
      }
    }
    cmd_export_lut(cfg, bits);
  } else if (command == "export-variation-map") {
    cmd_export_variation_map(cfg);
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
}

void rerun_manifest(const fs::path& manifest, int threads_override,
                    const std::string& output_dir_override) {
  std::ifstream in(manifest);
  if (!in) {
    throw ConfigError("cannot open manifest " + manifest.string());
  }
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("bad manifest " + manifest.string() + ": " + e.what());
  }
  if (!m.contains("config") || !m.contains("command")) {
    throw ConfigError("manifest " + manifest.string() + " lacks config or command");
  }
  ExperimentConfig cfg = parse_config(m["config"].get<std::string>(), manifest.string());
  if (m.contains("config_hash") && m["config_hash"].get<std::string>() != hex64(cfg.hash())) {
    throw ConfigError("manifest " + manifest.string() + ": config hash mismatch");
  }
  if (threads_override > 0) {
    cfg.threads = threads_override;
  }
  cfg.output_dir = output_dir_override.empty() ? manifest.parent_path().string()
                                               : output_dir_override;
  if (cfg.output_dir.empty()) {
    cfg.output_dir = ".";
  }
  CommandArgs args;
  if (m.contains("args")) {
    for (const auto& [k, v] : m["args"].items()) {
      args[k] = v.get<std::string>();
    }
  }
  run_command(m["command"].get<std::string>(), cfg, args);
}

} // namespace mrsim::cli
