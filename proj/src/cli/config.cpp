#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mrsim/cli/config.hpp"

namespace mrsim::cli {
namespace {

struct Field {
  std::string name; // section.key
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + s + "'");
  }
  return v;
}

template <typename Int>
Int to_int(const std::string& s) {
  Int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError("expected an integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") {
    return true;
  }
  if (s == "false" || s == "0" || s == "no") {
    return false;
  }
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

Field real(const char* name, double& v) {
  return {name, [&v](const std::string& s) { v = to_double(s); }, [&v] { return fmt(v); }};
}

template <typename Int>
Field integer(const char* name, Int& v) {
  return {name, [&v](const std::string& s) { v = to_int<Int>(s); },
          [&v] { return std::to_string(v); }};
}

Field boolean(const char* name, bool& v) {
  return {name, [&v](const std::string& s) { v = to_bool(s); },
          [&v] { return std::string(v ? "true" : "false"); }};
}

Field text(const char* name, std::string& v) {
  return {name, [&v](const std::string& s) { v = s; }, [&v] { return v; }};
}

template <typename E>
Field choice(const char* name, E& v, std::vector<std::pair<std::string, E>> options) {
  return {name,
          [&v, options](const std::string& s) {
            for (const auto& [label, value] : options) {
              if (label == s) {
                v = value;
                return;
              }
            }
            std::string allowed;
            for (const auto& o : options) {
              allowed += (allowed.empty() ? "" : ", ") + o.first;
            }
            throw ConfigError("expected one of {" + allowed + "}, got '" + s + "'");
          },
          [&v, options] {
            for (const auto& [label, value] : options) {
              if (value == v) {
                return label;
              }
            }
            return std::string("?");
          }};
}

Field int_set(const char* name, std::set<int>& v) {
  return {name,
          [&v](const std::string& s) {
            v.clear();
            for (const std::string& item : split_list(s)) {
              v.insert(to_int<int>(item));
            }
          },
          [&v] {
            std::string out;
            for (int i : v) {
              out += (out.empty() ? "" : ",") + std::to_string(i);
            }
            return out;
          }};
}

Field real_list(const char* name, std::vector<double>& v) {
  return {name,
          [&v](const std::string& s) {
            v.clear();
            for (const std::string& item : split_list(s)) {
              v.push_back(to_double(item));
            }
          },
          [&v] {
            std::string out;
            for (double d : v) {
              out += (out.empty() ? "" : ",") + fmt(d);
            }
            return out;
          }};
}

// Policies are compared by their flags; only the two named ones are exposed.
Field policy(const char* name, vit::NoiseInjectionPolicy& v) {
  return {name,
          [&v](const std::string& s) {
            if (s == "all_products") {
              v = vit::NoiseInjectionPolicy::all_products();
            } else if (s == "attention_split") {
              v = vit::NoiseInjectionPolicy::attention_split();
            } else {
              throw ConfigError("expected all_products or attention_split, got '" + s + "'");
            }
          },
          [&v] {
            auto same = [&v](const vit::NoiseInjectionPolicy& p) {
              for (std::size_t i = 0; i < vit::kOpCount; ++i) {
                if (p.ops[i].weight != v.ops[i].weight || p.ops[i].input != v.ops[i].input) {
                  return false;
                }
              }
              return true;
            };
            return std::string(same(vit::NoiseInjectionPolicy::attention_split())
                                   ? "attention_split"
                                   : "all_products");
          }};
}

std::vector<Field> fields(ExperimentConfig& c) {
  using noise::LaserMode;
  using noise::TrimRegime;
  return {
      integer("run.seed", c.seed),
      text("run.output_dir", c.output_dir),
      integer("run.threads", c.threads),

      real("noise.sigma_fab", c.noise.sigma_fab),
      real("noise.sigma_thermal", c.noise.sigma_thermal),
      real("noise.sigma_laser", c.noise.sigma_laser),
      choice("noise.regime", c.noise.regime,
             {{"pre_trim", TrimRegime::PreTrim}, {"post_trim", TrimRegime::PostTrim}}),
      real("noise.jitter_std_pm", c.noise.jitter_std_pm),
      real("noise.jitter_bias_pm", c.noise.jitter_bias_pm),
      choice("noise.laser_mode", c.noise.laser_mode,
             {{"per_channel", LaserMode::PerChannel}, {"global", LaserMode::Global}}),

      real("device.linewidth_nm", c.device.linewidth_nm),
      real("device.delta_max_nm", c.device.delta_max_nm),
      integer("device.lut_bits", c.lut_bits),

      integer("core.arms", c.core.arms),
      integer("core.rings_per_arm", c.core.rings_per_arm),
      integer("core.wavelengths", c.core.wavelengths),
      integer("core.cores", c.core.cores),

      real("variation.width_mm", c.variation.width_mm),
      real("variation.height_mm", c.variation.height_mm),
      real("variation.cell_mm", c.variation.cell_mm),
      real("variation.correlation_length_mm", c.variation.correlation_length_mm),
      real("variation.amplitude_nm", c.variation.amplitude_nm),
      integer("variation.bank_rings", c.variation.bank_rings),
      integer("variation.placements", c.variation.placements),

      integer("vit.image_size", c.vit.image_size),
      integer("vit.patch_size", c.vit.patch_size),
      integer("vit.channels", c.vit.channels),
      integer("vit.d_model", c.vit.d_model),
      integer("vit.n_heads", c.vit.n_heads),
      integer("vit.n_layers", c.vit.n_layers),
      integer("vit.ffn_mult", c.vit.ffn_mult),
      integer("vit.n_classes", c.vit.n_classes),
      choice("vit.norm", c.vit.norm_kind,
             {{"ln", vit::NormKind::LN}, {"naln", vit::NormKind::NALN}}),

      text("data.source", c.data.source),
      text("data.train_csv", c.data.train_csv),
      text("data.test_csv", c.data.test_csv),
      integer("data.n_per_class", c.data.n_per_class),
      integer("data.test_per_class", c.data.test_per_class),
      real("data.separation", c.data.separation),
      real("data.blob_width", c.data.blob_width),
      real("data.position_jitter", c.data.position_jitter),
      real("data.pixel_noise", c.data.pixel_noise),

      integer("train.epochs", c.train.epochs),
      integer("train.batch_size", c.train.batch_size),
      real("train.lr", c.train.lr),
      real("train.weight_decay", c.train.weight_decay),
      real("train.beta1", c.train.beta1),
      real("train.beta2", c.train.beta2),
      real("train.adam_eps", c.train.adam_eps),
      choice("train.mode", c.train.train_mode,
             {{"exact", vit::ForwardMode::Exact}, {"noisy", vit::ForwardMode::NoisyEmulated}}),
      policy("train.policy", c.train.policy),
      integer("train.eval_trials", c.train.eval_trials),
      text("train.resume", c.resume),

      integer("finetune.epochs", c.finetune.epochs),
      real("finetune.lr", c.finetune.lr),
      choice("finetune.cct_mode", c.finetune.cct_mode,
             {{"exact", vit::ForwardMode::Exact}, {"noisy", vit::ForwardMode::NoisyEmulated}}),

      boolean("cct.enabled", c.train.use_cct),
      real("cct.tau_start", c.train.cct.tau_start),
      real("cct.tau_end", c.train.cct.tau_end),
      integer("cct.anneal_epochs", c.train.cct.anneal_epochs),
      integer("cct.k", c.train.cct.K),
      real("cct.lambda", c.train.cct.lambda_cct),
      int_set("cct.layers", c.train.cct.active_layers),
      int_set("cct.heads", c.train.cct.active_heads),

      integer("eval.trials", c.eval_trials),
      text("eval.checkpoint", c.checkpoint),

      integer("matmul.m", c.matmul.m),
      integer("matmul.k", c.matmul.k),
      integer("matmul.n", c.matmul.n),
      integer("matmul.trials", c.matmul.trials),

      real_list("sweep.sigma_fab", c.sweep_sigma_fab),

      real("perf.ridge", c.perf.ridge),
      text("perf.coeffs", c.perf.coeffs),
      real("perf.eo_overhead", c.eo.eo_compensation_overhead),
      integer("perf.eo_period", c.eo.eo_period_iters),
      boolean("perf.eo_full_pipeline", c.eo.eo_full_pipeline),
  };
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) {
    throw ConfigError("invalid value for " + field + ": " + what);
  }
}

} // namespace

std::vector<std::string> config_keys() {
  ExperimentConfig c;
  std::vector<std::string> out;
  for (const Field& f : fields(c)) {
    out.push_back(f.name);
  }
  return out;
}

void ExperimentConfig::validate() const {
  require(threads >= 1, "run.threads", "must be >= 1");
  require(!output_dir.empty(), "run.output_dir", "must not be empty");
  try {
    noise.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid [noise] section: ") + e.what());
  }
  require(device.linewidth_nm > 0.0, "device.linewidth_nm", "must be > 0");
  require(device.delta_max_nm > 0.0, "device.delta_max_nm", "must be > 0");
  require(lut_bits == 4 || lut_bits == 8 || lut_bits == 32, "device.lut_bits",
          "must be 4, 8 or 32");
  require(core.arms > 0 && core.rings_per_arm > 0 && core.wavelengths > 0 && core.cores > 0,
          "core", "all sizes must be > 0");
  require(core.wavelengths <= core.rings_per_arm, "core.wavelengths",
          "must not exceed core.rings_per_arm");
  require(variation.width_mm > 0 && variation.height_mm > 0 && variation.cell_mm > 0 &&
              variation.correlation_length_mm > 0 && variation.amplitude_nm >= 0,
          "variation", "sizes must be > 0 and amplitude >= 0");
  require(variation.bank_rings > 0 && variation.placements > 0, "variation.bank_rings",
          "bank_rings and placements must be > 0");
  try {
    vit.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid [vit] section: ") + e.what());
  }
  require(data.source == "synthetic" || data.source == "csv", "data.source",
          "must be synthetic or csv");
  if (data.source == "csv") {
    require(!data.train_csv.empty() && !data.test_csv.empty(), "data.train_csv",
            "csv source needs data.train_csv and data.test_csv");
  }
  require(data.n_per_class > 0 && data.test_per_class > 0, "data.n_per_class",
          "class counts must be > 0");
  require(data.separation >= 0 && data.blob_width > 0 && data.position_jitter >= 0 &&
              data.pixel_noise >= 0,
          "data", "separation, jitter and noise >= 0, blob_width > 0");
  require(train.epochs >= 0, "train.epochs", "must be >= 0");
  require(train.batch_size > 0, "train.batch_size", "must be > 0");
  require(train.lr >= 0 && train.weight_decay >= 0, "train.lr", "lr and weight_decay >= 0");
  require(train.beta1 >= 0 && train.beta1 < 1 && train.beta2 >= 0 && train.beta2 < 1,
          "train.beta1", "betas must be in [0, 1)");
  require(train.adam_eps > 0, "train.adam_eps", "must be > 0");
  require(train.eval_trials >= 0, "train.eval_trials", "must be >= 0");
  require(finetune.epochs >= 0 && finetune.lr >= 0, "finetune", "epochs and lr >= 0");
  try {
    train.cct.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid [cct] section: ") + e.what());
  }
  for (int l : train.cct.active_layers) {
    require(l >= 0 && l < vit.n_layers, "cct.layers", "layer index outside the model");
  }
  for (int h : train.cct.active_heads) {
    require(h >= 0 && h < vit.n_heads, "cct.heads", "head index outside the model");
  }
  require(eval_trials > 0, "eval.trials", "must be > 0");
  require(matmul.m > 0 && matmul.k > 0 && matmul.n > 0, "matmul", "dimensions must be > 0");
  require(matmul.trials >= 2, "matmul.trials", "must be >= 2");
  require(!sweep_sigma_fab.empty(), "sweep.sigma_fab", "must list at least one level");
  for (double s : sweep_sigma_fab) {
    require(s >= 0.0, "sweep.sigma_fab", "levels must be >= 0");
  }
  require(perf.ridge >= 0, "perf.ridge", "must be >= 0");
  require(eo.eo_compensation_overhead >= 0 && eo.eo_period_iters > 0, "perf.eo_overhead",
          "overhead >= 0 and period > 0");
}

std::string ExperimentConfig::to_text(bool include_runtime) const {
  ExperimentConfig copy = *this;
  std::string out;
  std::string section;
  for (const Field& f : fields(copy)) {
    if (!include_runtime && (f.name == "run.threads" || f.name == "run.output_dir")) {
      continue;
    }
    const auto dot = f.name.find('.');
    const std::string sec = f.name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
      section = sec;
    }
    out += f.name.substr(dot + 1) + " = " + f.get() + "\n";
  }
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_text(false)); }

optical::MatmulOptions ExperimentConfig::matmul_options() const {
  optical::MatmulOptions o;
  o.lut_bits = lut_bits;
  o.device = device;
  return o;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig c;
  std::map<std::string, Field> table;
  for (Field& f : fields(c)) {
    table.emplace(f.name, std::move(f));
  }
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash_pos = raw.find('#');
    const std::string line = trim(hash_pos == std::string::npos ? raw : raw.substr(0, hash_pos));
    if (line.empty()) {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(where() + "malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& [name, f] : table) {
        known = known || name.rfind(section + ".", 0) == 0;
      }
      if (!known) {
        throw ConfigError(where() + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where() + "expected 'key = value', got '" + line + "'");
    }
    if (section.empty()) {
      throw ConfigError(where() + "key outside of any [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    auto it = table.find(full);
    if (it == table.end()) {
      throw ConfigError(where() + "unknown key '" + key + "' in [" + section + "]");
    }
    if (auto prev = seen.find(full); prev != seen.end()) {
      throw ConfigError(where() + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(prev->second) + ")");
    }
    seen.emplace(full, line_no);
    try {
      it->second.set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where() + full + ": " + e.what());
    }
  }
  c.train.train_noise = c.noise;
  c.train.eval_noise = c.noise;
  c.train.matmul = c.matmul_options();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

} // namespace mrsim::cli
