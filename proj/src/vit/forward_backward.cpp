#include <cmath>
#include <string>

#include "mrsim/vit/tiny_vit.hpp"

namespace mrsim::vit {
namespace {

struct OpSite {
  SeedContext chip;
  std::uint64_t program = 0;
  std::uint64_t row_offset = 0;
};

Matrix product(const Matrix& x, const Matrix& w, Op op, const ForwardOptions& o,
               const OpSite& site) {
  if (o.mode == ForwardMode::Exact) {
    return x * w;
  }
  noise::NoiseStreams streams{site.chip, o.pass, site.program, site.row_offset};
  return optical::noisy_matmul(x, w, o.policy.params_for(op, o.noise), streams, o.matmul,
                               o.geometry)
      .y;
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b, Op op, const ForwardOptions& o,
              const OpSite& site) {
  Matrix y = product(x, w, op, o, site);
  y.rowwise() += b.row(0);
  return y;
}

training::NALNConfig norm_config(const Model& m, std::size_t norm_index) {
  training::NALNConfig c;
  if (m.config.norm_kind == NormKind::NALN) {
    c.sigma_n_sq = m.norms.sigma_n_sq.at(norm_index);
  }
  return c;
}

Matrix norm_forward(const Model& m, std::size_t idx, const Matrix& x, const Matrix& g,
                    const Matrix& b, std::vector<training::NalnCache>* cache) {
  return training::naln_forward_rows(x, g.row(0).transpose(), b.row(0).transpose(),
                                     norm_config(m, idx), cache);
}

SeedContext op_chip(const ForwardOptions& o, int layer, Op op) {
  return o.chip.child("layer", static_cast<std::uint64_t>(layer)).child(op_name(op));
}

} // namespace

ForwardResult forward(const Model& model, const Matrix& images, const ForwardOptions& opts) {
  const ViTConfig& cfg = model.config;
  const Params& P = model.params;
  const Eigen::Index B = images.rows();
  const Eigen::Index n = cfg.n_tokens();
  const Eigen::Index dk = cfg.d_k();
  const int H = cfg.n_heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const int embed_layer = -1;
  const int head_layer = cfg.n_layers;

  ForwardResult out;
  ForwardCache& cache = out.cache;
  cache.batch = B;

  Matrix patches = extract_patches(cfg, images);
  Matrix x = linear(patches, P.patch_w, P.patch_b, Op::PatchEmbed, opts,
                    {op_chip(opts, embed_layer, Op::PatchEmbed), 0, 0});
  for (Eigen::Index b = 0; b < B; ++b) {
    x.middleRows(b * n, n) += P.pos;
  }
  if (opts.keep_cache) {
    cache.patches = std::move(patches);
    cache.embed = x;
    cache.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  }

  for (int l = 0; l < cfg.n_layers; ++l) {
    const Params::Block& W = P.blocks[static_cast<std::size_t>(l)];
    BlockCache local;
    BlockCache& bc = opts.keep_cache ? cache.blocks[static_cast<std::size_t>(l)] : local;
    bc.x_in = x;
    bc.h1 = norm_forward(model, static_cast<std::size_t>(2 * l), x, W.ln1_g, W.ln1_b, &bc.ln1);
    bc.q = linear(bc.h1, W.wq, W.bq, Op::Query, opts, {op_chip(opts, l, Op::Query), 0, 0});
    bc.k = linear(bc.h1, W.wk, W.bk, Op::Key, opts, {op_chip(opts, l, Op::Key), 0, 0});
    bc.v = linear(bc.h1, W.wv, W.bv, Op::Value, opts, {op_chip(opts, l, Op::Value), 0, 0});
    bc.concat = Matrix::Zero(B * n, cfg.d_model);
    bc.attn.resize(static_cast<std::size_t>(B * H));

    const bool cct_layer = opts.cct.enabled && opts.cct.config.layer_active(l, cfg.n_layers);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        const Matrix qh = bc.q.block(b * n, h * dk, n, dk);
        const Matrix kh = bc.k.block(b * n, h * dk, n, dk);
        const Matrix vh = bc.v.block(b * n, h * dk, n, dk);
        const auto program = static_cast<std::uint64_t>(b * H + h);
        const auto rows = static_cast<std::uint64_t>(b * n);
        const Matrix s =
            product(qh, kh.transpose(), Op::AttnLogits, opts,
                    {op_chip(opts, l, Op::AttnLogits).child("head", static_cast<std::uint64_t>(h)),
                     program, rows}) *
            inv_sqrt_dk;
        Matrix a = softmax_rows(s);
        bc.concat.block(b * n, h * dk, n, dk) =
            product(a, vh, Op::AttnValues, opts,
                    {op_chip(opts, l, Op::AttnValues).child("head", static_cast<std::uint64_t>(h)),
                     program, rows});
        if (cct_layer && opts.cct.config.head_active(h)) {
          const proxy::LogitVarianceMap vmap = proxy::build_variance_map(s, qh, kh, opts.cct.banks);
          training::CctTerms terms =
              training::cct_terms(s, vmap.v, opts.cct.z_tau, opts.cct.config.K);
          cache.cct_hinge_sum += terms.hinge_sum;
          cache.cct_terms += terms.term_count;
          if (opts.keep_cache) {
            cache.cct.push_back({l, h, b, std::move(terms.grad_logits),
                                 std::move(terms.grad_variances)});
          }
        }
        bc.attn[static_cast<std::size_t>(b * H + h)] = std::move(a);
      }
    }

    const Matrix attn_out =
        linear(bc.concat, W.wo, W.bo, Op::OutProj, opts, {op_chip(opts, l, Op::OutProj), 0, 0});
    bc.x_mid = x + attn_out;
    bc.h2 = norm_forward(model, static_cast<std::size_t>(2 * l + 1), bc.x_mid, W.ln2_g, W.ln2_b,
                         &bc.ln2);
    bc.z1 = linear(bc.h2, W.w1, W.b1, Op::Ffn1, opts, {op_chip(opts, l, Op::Ffn1), 0, 0});
    bc.g1 = bc.z1.unaryExpr([](double v) { return gelu(v); });
    const Matrix f =
        linear(bc.g1, W.w2, W.b2, Op::Ffn2, opts, {op_chip(opts, l, Op::Ffn2), 0, 0});
    x = bc.x_mid + f;
    bc.x_out = x;
  }

  std::vector<training::NalnCache> lnf_local;
  Matrix hf = norm_forward(model, static_cast<std::size_t>(2 * cfg.n_layers), x, P.lnf_g,
                           P.lnf_b, opts.keep_cache ? &cache.lnf : &lnf_local);
  Matrix pooled(B, cfg.d_model);
  for (Eigen::Index b = 0; b < B; ++b) {
    pooled.row(b) = hf.middleRows(b * n, n).colwise().mean();
  }
  out.logits = linear(pooled, P.head_w, P.head_b, Op::Head, opts,
                      {op_chip(opts, head_layer, Op::Head), 0, 0});
  if (opts.keep_cache) {
    cache.hf = std::move(hf);
    cache.pooled = std::move(pooled);
  }
  return out;
}

LossBreakdown loss_from(const ForwardResult& fwd, const std::vector<int>& labels,
                        double lambda_cct) {
  const Matrix& z = fwd.logits;
  if (static_cast<std::size_t>(z.rows()) != labels.size()) {
    throw ShapeError("loss_from: label count differs from batch size");
  }
  LossBreakdown L;
  for (Eigen::Index b = 0; b < z.rows(); ++b) {
    const double mx = z.row(b).maxCoeff();
    const double lse = mx + std::log((z.row(b).array() - mx).exp().sum());
    L.ce += lse - z(b, labels[static_cast<std::size_t>(b)]);
  }
  L.ce /= static_cast<double>(z.rows());
  if (fwd.cache.cct_terms > 0) {
    L.cct = fwd.cache.cct_hinge_sum / static_cast<double>(fwd.cache.cct_terms);
  }
  L.total = L.ce + lambda_cct * L.cct;
  return L;
}

Params backward(const Model& model, const ForwardResult& fwd, const std::vector<int>& labels,
                double lambda_cct, const proxy::BankStats& banks) {
  const ViTConfig& cfg = model.config;
  const Params& P = model.params;
  const ForwardCache& cache = fwd.cache;
  if (cache.blocks.empty()) {
    throw ParameterError("backward: forward was run without keep_cache");
  }
  const Eigen::Index B = cache.batch;
  const Eigen::Index n = cfg.n_tokens();
  const Eigen::Index dk = cfg.d_k();
  const int H = cfg.n_heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Params G = P.zeros_like();

  // Cross-entropy.
  Matrix dlogits = softmax_rows(fwd.logits);
  for (Eigen::Index b = 0; b < B; ++b) {
    dlogits(b, labels[static_cast<std::size_t>(b)]) -= 1.0;
  }
  dlogits /= static_cast<double>(B);

  G.head_w = cache.pooled.transpose() * dlogits;
  G.head_b = dlogits.colwise().sum();
  const Matrix dpooled = dlogits * P.head_w.transpose();
  Matrix dhf(B * n, cfg.d_model);
  for (Eigen::Index b = 0; b < B; ++b) {
    dhf.middleRows(b * n, n).rowwise() = dpooled.row(b) / static_cast<double>(n);
  }
  Vector dg = Vector::Zero(cfg.d_model), db = Vector::Zero(cfg.d_model);
  Matrix dx = training::naln_backward_rows(dhf, P.lnf_g.row(0).transpose(), cache.lnf, dg, db);
  G.lnf_g = dg.transpose();
  G.lnf_b = db.transpose();

  const double cct_scale =
      cache.cct_terms > 0 ? lambda_cct / static_cast<double>(cache.cct_terms) : 0.0;
  std::vector<const CctBlockTerms*> cct_index(
      static_cast<std::size_t>(cfg.n_layers * B * H), nullptr);
  for (const CctBlockTerms& t : cache.cct) {
    cct_index[static_cast<std::size_t>((t.layer * B + t.sample) * H + t.head)] = &t;
  }

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const Params::Block& W = P.blocks[static_cast<std::size_t>(l)];
    Params::Block& dW = G.blocks[static_cast<std::size_t>(l)];
    const BlockCache& bc = cache.blocks[static_cast<std::size_t>(l)];

    // FFN branch.
    const Matrix& df = dx;
    dW.w2 = bc.g1.transpose() * df;
    dW.b2 = df.colwise().sum();
    Matrix dz1 = df * W.w2.transpose();
    dz1.array() *= bc.z1.unaryExpr([](double v) { return gelu_grad(v); }).array();
    dW.w1 = bc.h2.transpose() * dz1;
    dW.b1 = dz1.colwise().sum();
    const Matrix dh2 = dz1 * W.w1.transpose();
    dg.setZero();
    db.setZero();
    Matrix dx_mid = dx + training::naln_backward_rows(dh2, W.ln2_g.row(0).transpose(), bc.ln2,
                                                      dg, db);
    dW.ln2_g = dg.transpose();
    dW.ln2_b = db.transpose();

    // Attention branch.
    dW.wo = bc.concat.transpose() * dx_mid;
    dW.bo = dx_mid.colwise().sum();
    const Matrix dconcat = dx_mid * W.wo.transpose();
    Matrix dq = Matrix::Zero(B * n, cfg.d_model);
    Matrix dk_m = Matrix::Zero(B * n, cfg.d_model);
    Matrix dv = Matrix::Zero(B * n, cfg.d_model);
    for (Eigen::Index b = 0; b < B; ++b) {
      for (int h = 0; h < H; ++h) {
        const Matrix& a = bc.attn[static_cast<std::size_t>(b * H + h)];
        const Matrix qh = bc.q.block(b * n, h * dk, n, dk);
        const Matrix kh = bc.k.block(b * n, h * dk, n, dk);
        const Matrix vh = bc.v.block(b * n, h * dk, n, dk);
        const Matrix dout = dconcat.block(b * n, h * dk, n, dk);
        const Matrix da = dout * vh.transpose();
        dv.block(b * n, h * dk, n, dk) += a.transpose() * dout;
        Matrix ds = a.array() * (da.colwise() - (da.cwiseProduct(a)).rowwise().sum()).array();
        const CctBlockTerms* ct = cct_index[static_cast<std::size_t>((l * B + b) * H + h)];
        Matrix dqh = Matrix::Zero(n, dk);
        Matrix dkh = Matrix::Zero(n, dk);
        if (ct != nullptr && cct_scale != 0.0) {
          ds += cct_scale * ct->grad_logits;
          for (Eigen::Index t = 0; t < n; ++t) {
            for (Eigen::Index u = 0; u < n; ++u) {
              const double up = cct_scale * ct->grad_variances(t, u);
              if (up == 0.0) {
                continue;
              }
              Vector gq = Vector::Zero(dk), gk = Vector::Zero(dk);
              proxy::logit_variance_backward(qh.row(t).transpose(), kh.row(u).transpose(), banks,
                                             dk, up, gq, gk);
              dqh.row(t) += gq.transpose();
              dkh.row(u) += gk.transpose();
            }
          }
        }
        dqh += inv_sqrt_dk * ds * kh;
        dkh += inv_sqrt_dk * ds.transpose() * qh;
        dq.block(b * n, h * dk, n, dk) += dqh;
        dk_m.block(b * n, h * dk, n, dk) += dkh;
      }
    }
    dW.wq = bc.h1.transpose() * dq;
    dW.bq = dq.colwise().sum();
    dW.wk = bc.h1.transpose() * dk_m;
    dW.bk = dk_m.colwise().sum();
    dW.wv = bc.h1.transpose() * dv;
    dW.bv = dv.colwise().sum();
    const Matrix dh1 = dq * W.wq.transpose() + dk_m * W.wk.transpose() + dv * W.wv.transpose();
    dg.setZero();
    db.setZero();
    dx = dx_mid +
         training::naln_backward_rows(dh1, W.ln1_g.row(0).transpose(), bc.ln1, dg, db);
    dW.ln1_g = dg.transpose();
    dW.ln1_b = db.transpose();
  }

  G.pos.setZero();
  for (Eigen::Index b = 0; b < B; ++b) {
    G.pos += dx.middleRows(b * n, n);
  }
  G.patch_w = cache.patches.transpose() * dx;
  G.patch_b = dx.colwise().sum();
  return G;
}

} // namespace mrsim::vit
