#include <fstream>

#include "json.hpp"
#include "mrsim/vit/tiny_vit.hpp"

namespace mrsim::vit {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kCheckpointVersion = 1;

void save_params(const Params& p, const fs::path& dir) {
  fs::create_directories(dir);
  const auto names = p.names();
  const auto t = p.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    save_matrix_binary(*t[i], dir / (names[i] + ".bin"));
  }
}

void load_params(Params& p, const fs::path& dir) {
  const auto names = p.names();
  auto t = p.tensors();
  for (std::size_t i = 0; i < t.size(); ++i) {
    Matrix m = load_matrix_binary(dir / (names[i] + ".bin"));
    if (m.rows() != t[i]->rows() || m.cols() != t[i]->cols()) {
      throw FormatError("checkpoint tensor " + names[i] + " has shape " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    *t[i] = std::move(m);
  }
}

} // namespace

void save_checkpoint(const TrainState& state, const fs::path& dir) {
  fs::create_directories(dir);
  const ViTConfig& c = state.model.config;
  json seed_path = json::array();
  for (const StreamLabel& s : state.seed.path()) {
    seed_path.push_back({{"label", s.label}, {"index", s.index}});
  }
  const NormState& ns = state.model.norms;
  json manifest = {
      {"version", kCheckpointVersion},
      {"config",
       {{"image_size", c.image_size},
        {"patch_size", c.patch_size},
        {"channels", c.channels},
        {"d_model", c.d_model},
        {"n_heads", c.n_heads},
        {"n_layers", c.n_layers},
        {"ffn_mult", c.ffn_mult},
        {"n_classes", c.n_classes},
        {"norm", c.norm_kind == NormKind::NALN ? "naln" : "ln"}}},
      {"epoch", state.epoch},
      {"cct_start", state.cct_start},
      {"seed", {{"master", state.seed.master_seed()}, {"path", seed_path}}},
      {"adam_step", state.adam.step},
      {"norms",
       {{"sigma_n_sq", ns.sigma_n_sq},
        {"momentum", ns.momentum},
        {"initialized", ns.initialized}}},
  };
  save_params(state.model.params, dir / "params");
  save_params(state.adam.m, dir / "adam_m");
  save_params(state.adam.v, dir / "adam_v");
  fs::create_directories(dir / "norms");
  for (std::size_t i = 0; i < ns.feed_second_moment.size(); ++i) {
    save_matrix_binary(Matrix(ns.feed_second_moment[i].transpose()),
                       dir / "norms" / ("feed_" + std::to_string(i) + ".bin"));
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) {
    throw FormatError("cannot write " + (dir / "manifest.json").string());
  }
}

TrainState load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) {
    throw FormatError("missing " + (dir / "manifest.json").string());
  }
  try {
    const json m = json::parse(in);
    if (m.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version");
    }
    const json& jc = m.at("config");
    ViTConfig c;
    c.image_size = jc.at("image_size");
    c.patch_size = jc.at("patch_size");
    c.channels = jc.at("channels");
    c.d_model = jc.at("d_model");
    c.n_heads = jc.at("n_heads");
    c.n_layers = jc.at("n_layers");
    c.ffn_mult = jc.at("ffn_mult");
    c.n_classes = jc.at("n_classes");
    const std::string norm = jc.at("norm");
    if (norm != "ln" && norm != "naln") {
      throw FormatError("unknown norm kind " + norm);
    }
    c.norm_kind = norm == "naln" ? NormKind::NALN : NormKind::LN;

    SeedContext seed(m.at("seed").at("master").get<std::uint64_t>());
    for (const json& s : m.at("seed").at("path")) {
      seed = seed.child(s.at("label").get<std::string>(), s.at("index").get<std::uint64_t>());
    }
    TrainState st = make_train_state(init_model(c, SeedContext{}), seed);
    st.epoch = m.at("epoch");
    st.cct_start = m.at("cct_start");
    st.adam.step = m.at("adam_step");
    load_params(st.model.params, dir / "params");
    load_params(st.adam.m, dir / "adam_m");
    load_params(st.adam.v, dir / "adam_v");
    NormState& ns = st.model.norms;
    ns.sigma_n_sq = m.at("norms").at("sigma_n_sq").get<std::vector<double>>();
    ns.momentum = m.at("norms").at("momentum");
    ns.initialized = m.at("norms").at("initialized");
    if (ns.sigma_n_sq.size() != ns.feed_second_moment.size()) {
      throw FormatError("checkpoint norm count does not match the model");
    }
    for (std::size_t i = 0; i < ns.feed_second_moment.size(); ++i) {
      const Matrix f = load_matrix_binary(dir / "norms" / ("feed_" + std::to_string(i) + ".bin"));
      if (f.rows() != 1 || f.cols() != ns.feed_second_moment[i].size()) {
        throw FormatError("checkpoint norm feed " + std::to_string(i) + " has the wrong shape");
      }
      ns.feed_second_moment[i] = f.row(0).transpose();
    }
    return st;
  } catch (const json::exception& e) {
    throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
  }
}

} // namespace mrsim::vit
