#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mrsim/vit/tiny_vit.hpp"

namespace mrsim::vit {

void ViTConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || channels <= 0 || d_model <= 0 || n_heads <= 0 ||
      n_layers <= 0 || ffn_mult <= 0 || n_classes < 2) {
    throw ParameterError("ViTConfig: sizes must be positive and n_classes >= 2");
  }
  if (d_model % n_heads != 0) {
    throw ParameterError("ViTConfig: d_model must be divisible by n_heads");
  }
  if (image_size % patch_size != 0) {
    throw ParameterError("ViTConfig: image_size must be a multiple of patch_size");
  }
}

const char* op_name(Op op) {
  switch (op) {
  case Op::PatchEmbed: return "patch_embed";
  case Op::Query: return "query";
  case Op::Key: return "key";
  case Op::Value: return "value";
  case Op::AttnLogits: return "attn_logits";
  case Op::AttnValues: return "attn_values";
  case Op::OutProj: return "out_proj";
  case Op::Ffn1: return "ffn1";
  case Op::Ffn2: return "ffn2";
  case Op::Head: return "head";
  }
  return "unknown";
}

NoiseInjectionPolicy NoiseInjectionPolicy::all_products() {
  return {};
}

NoiseInjectionPolicy NoiseInjectionPolicy::attention_split() {
  NoiseInjectionPolicy p;
  p.ops[static_cast<std::size_t>(Op::Query)] = {true, false};
  p.ops[static_cast<std::size_t>(Op::Value)] = {true, false};
  p.ops[static_cast<std::size_t>(Op::Key)] = {false, true};
  p.ops[static_cast<std::size_t>(Op::AttnLogits)] = {false, true};
  return p;
}

NoiseInjectionPolicy NoiseInjectionPolicy::none() {
  NoiseInjectionPolicy p;
  p.ops.fill({false, false});
  return p;
}

noise::NoiseParams NoiseInjectionPolicy::params_for(Op op,
                                                    const noise::NoiseParams& base) const {
  const OpNoise& o = ops[static_cast<std::size_t>(op)];
  noise::NoiseParams p = base;
  if (!o.weight) {
    p.sigma_fab = 0.0;
    p.sigma_thermal = 0.0;
    p.jitter_std_pm = 0.0;
    p.jitter_bias_pm = 0.0;
  }
  if (!o.input) {
    p.sigma_laser = 0.0;
  }
  return p;
}

std::vector<Matrix*> Params::tensors() {
  std::vector<Matrix*> t{&patch_w, &patch_b, &pos};
  for (Block& b : blocks) {
    for (Matrix* m : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo,
                      &b.bo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2}) {
      t.push_back(m);
    }
  }
  for (Matrix* m : {&lnf_g, &lnf_b, &head_w, &head_b}) {
    t.push_back(m);
  }
  return t;
}

std::vector<const Matrix*> Params::tensors() const {
  auto mut = const_cast<Params*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> Params::names() const {
  std::vector<std::string> n{"patch_w", "patch_b", "pos"};
  static const char* block_names[] = {"ln1_g", "ln1_b", "wq", "bq", "wk",    "bk",
                                      "wv",    "bv",    "wo", "bo", "ln2_g", "ln2_b",
                                      "w1",    "b1",    "w2", "b2"};
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    for (const char* name : block_names) {
      n.push_back("blocks." + std::to_string(l) + "." + name);
    }
  }
  for (const char* name : {"lnf_g", "lnf_b", "head_w", "head_b"}) {
    n.emplace_back(name);
  }
  return n;
}

std::vector<bool> Params::decay_mask() const {
  std::vector<bool> mask;
  for (const std::string& n : names()) {
    const auto dot = n.rfind('.');
    const std::string leaf = dot == std::string::npos ? n : n.substr(dot + 1);
    mask.push_back(leaf == "patch_w" || leaf == "head_w" || leaf == "wq" || leaf == "wk" ||
                   leaf == "wv" || leaf == "wo" || leaf == "w1" || leaf == "w2");
  }
  return mask;
}

Params Params::zeros_like() const {
  Params z = *this;
  for (Matrix* m : z.tensors()) {
    m->setZero();
  }
  return z;
}

void Params::add_scaled(const Params& other, double scale) {
  auto dst = tensors();
  const auto src = other.tensors();
  if (dst.size() != src.size()) {
    throw ShapeError("Params::add_scaled: structure mismatch");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *dst[i] += scale * *src[i];
  }
}

namespace {

Matrix init_normal(const SeedContext& ctx, Eigen::Index rows, Eigen::Index cols, double std) {
  const RandomStream s(ctx);
  Matrix m(rows, cols);
  std::uint64_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c, ++i) {
      m(r, c) = std * s.normal(i);
    }
  }
  return m;
}

Matrix xavier(const SeedContext& ctx, Eigen::Index fan_in, Eigen::Index fan_out) {
  return init_normal(ctx, fan_in, fan_out,
                     std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
}

} // namespace

Model init_model(const ViTConfig& cfg, const SeedContext& ctx) {
  cfg.validate();
  Model m;
  m.config = cfg;
  const Eigen::Index d = cfg.d_model, f = cfg.d_ffn(), p = cfg.patch_dim();
  Params& P = m.params;
  P.patch_w = xavier(ctx.child("patch_w"), p, d);
  P.patch_b = Matrix::Zero(1, d);
  // Unit-scale positions: with mean pooling the class often lives only in where
  // a feature sits, and a 0.02 init leaves that signal below the pixel noise.
  P.pos = init_normal(ctx.child("pos"), cfg.n_tokens(), d, 1.0);
  P.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const SeedContext lc = ctx.child("block", static_cast<std::uint64_t>(l));
    Params::Block& b = P.blocks[static_cast<std::size_t>(l)];
    b.ln1_g = Matrix::Ones(1, d);
    b.ln1_b = Matrix::Zero(1, d);
    b.wq = xavier(lc.child("wq"), d, d);
    b.bq = Matrix::Zero(1, d);
    b.wk = xavier(lc.child("wk"), d, d);
    b.bk = Matrix::Zero(1, d);
    b.wv = xavier(lc.child("wv"), d, d);
    b.bv = Matrix::Zero(1, d);
    b.wo = xavier(lc.child("wo"), d, d);
    b.bo = Matrix::Zero(1, d);
    b.ln2_g = Matrix::Ones(1, d);
    b.ln2_b = Matrix::Zero(1, d);
    b.w1 = xavier(lc.child("w1"), d, f);
    b.b1 = Matrix::Zero(1, f);
    b.w2 = xavier(lc.child("w2"), f, d);
    b.b2 = Matrix::Zero(1, d);
  }
  P.lnf_g = Matrix::Ones(1, d);
  P.lnf_b = Matrix::Zero(1, d);
  P.head_w = xavier(ctx.child("head_w"), d, cfg.n_classes);
  P.head_b = Matrix::Zero(1, cfg.n_classes);

  const auto n_norms = static_cast<std::size_t>(2 * cfg.n_layers + 1);
  m.norms.sigma_n_sq.assign(n_norms, 0.0);
  m.norms.feed_second_moment.resize(n_norms);
  m.norms.feed_second_moment[0] = Vector::Zero(p);
  for (int l = 0; l < cfg.n_layers; ++l) {
    m.norms.feed_second_moment[static_cast<std::size_t>(2 * l + 1)] = Vector::Zero(d);
    m.norms.feed_second_moment[static_cast<std::size_t>(2 * l + 2)] = Vector::Zero(f);
  }
  return m;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654; // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double t = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

Matrix softmax_rows(const Matrix& s) {
  Matrix a(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    a.row(r) = (s.row(r).array() - mx).exp();
    a.row(r) /= a.row(r).sum();
  }
  return a;
}

Matrix extract_patches(const ViTConfig& cfg, const Matrix& images) {
  if (images.cols() != cfg.pixels()) {
    throw ShapeError("extract_patches: image has " + std::to_string(images.cols()) +
                     " values, config expects " + std::to_string(cfg.pixels()));
  }
  const int g = cfg.grid(), ps = cfg.patch_size, S = cfg.image_size;
  const Eigen::Index n = cfg.n_tokens();
  Matrix out(images.rows() * n, cfg.patch_dim());
  for (Eigen::Index b = 0; b < images.rows(); ++b) {
    for (int pr = 0; pr < g; ++pr) {
      for (int pc = 0; pc < g; ++pc) {
        const Eigen::Index row = b * n + pr * g + pc;
        Eigen::Index col = 0;
        for (int ch = 0; ch < cfg.channels; ++ch) {
          for (int i = 0; i < ps; ++i) {
            for (int j = 0; j < ps; ++j, ++col) {
              const Eigen::Index pix = ch * S * S + (pr * ps + i) * S + (pc * ps + j);
              out(row, col) = images(b, pix);
            }
          }
        }
      }
    }
  }
  return out;
}

} // namespace mrsim::vit
