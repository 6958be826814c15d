#include "mrsim/training/robust_training.hpp"

#include <algorithm>
#include <cmath>

#include "mrsim/core/normal.hpp"

namespace mrsim::training {

void CCTConfig::validate() const {
  if (!(tau_start > 0.0 && tau_start <= tau_end && tau_end < 1.0)) {
    throw ParameterError("CCTConfig: need 0 < tau_start <= tau_end < 1");
  }
  if (!(lambda_cct >= 0.0)) {
    throw ParameterError("CCTConfig: lambda_cct must be >= 0");
  }
  if (anneal_epochs < 0 || K < 1) {
    throw ParameterError("CCTConfig: anneal_epochs >= 0 and K >= 1 required");
  }
}

bool CCTConfig::layer_active(int layer, int n_layers) const {
  if (active_layers.empty()) {
    return layer == 0 || layer == n_layers - 1;
  }
  return active_layers.contains(layer);
}

bool CCTConfig::head_active(int head) const {
  return active_heads.empty() || active_heads.contains(head);
}

double tau_at(const CCTConfig& cfg, int epoch) {
  if (cfg.anneal_epochs <= 0 || epoch >= cfg.anneal_epochs) {
    return cfg.tau_end;
  }
  const double frac = static_cast<double>(std::max(epoch, 0)) / cfg.anneal_epochs;
  return cfg.tau_start + (cfg.tau_end - cfg.tau_start) * frac;
}

double tau_schedule(const CCTConfig& cfg, int epoch) {
  cfg.validate();
  return std_normal_quantile(tau_at(cfg, epoch));
}

CctTerms cct_terms(const Matrix& logits, const Matrix& variances, double z_tau, Eigen::Index K) {
  if (logits.rows() != variances.rows() || logits.cols() != variances.cols()) {
    throw ShapeError("cct_terms: logits and variances differ in shape");
  }
  if (logits.cols() < 2) {
    throw ShapeError("cct_terms: need at least two keys per row");
  }
  if ((variances.array() < 0.0).any()) {
    throw ParameterError("cct_terms: variances must be >= 0");
  }
  CctTerms out;
  out.grad_logits = Matrix::Zero(logits.rows(), logits.cols());
  out.grad_variances = Matrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const Vector s = logits.row(t).transpose();
    const Vector v = variances.row(t).transpose();
    const Eigen::Index top = proxy::argmax_lowest(s);
    for (const Eigen::Index j : proxy::competitor_set(s, v, K)) {
      ++out.term_count;
      const double var = v(top) + v(j) + kCctVarianceGuard;
      const double sigma = std::sqrt(var);
      const double margin = s(top) - s(j);
      const double h = z_tau - margin / sigma;
      if (h <= 0.0) {
        continue;
      }
      out.hinge_sum += h;
      out.grad_logits(t, top) -= 1.0 / sigma;
      out.grad_logits(t, j) += 1.0 / sigma;
      const double dv = 0.5 * margin / (var * sigma);
      out.grad_variances(t, top) += dv;
      out.grad_variances(t, j) += dv;
    }
  }
  return out;
}

CctLoss cct_loss(const Matrix& logits, const proxy::LogitVarianceMap& variances,
                 const CCTConfig& cfg, int epoch) {
  const double z = tau_schedule(cfg, epoch);
  CctTerms terms = cct_terms(logits, variances.v, z, cfg.K);
  CctLoss out;
  const double norm = terms.term_count > 0 ? 1.0 / static_cast<double>(terms.term_count) : 0.0;
  out.loss = terms.hinge_sum * norm;
  out.grad_logits = terms.grad_logits * norm;
  out.grad_variances = terms.grad_variances * norm;
  return out;
}

void NALNConfig::validate() const {
  if (!(sigma_n_sq >= 0.0) || !std::isfinite(sigma_n_sq)) {
    throw ParameterError("NALNConfig: sigma_n_sq must be finite and >= 0");
  }
  if (!(eps > 0.0)) {
    throw ParameterError("NALNConfig: eps must be > 0");
  }
}

Vector naln_forward(const Vector& x, const Vector& gain, const Vector& bias,
                    const NALNConfig& cfg, NalnCache* cache) {
  const Eigen::Index d = x.size();
  if (d < 2) {
    throw ShapeError("naln_forward: need at least two channels");
  }
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("naln_forward: gain/bias length differs from input");
  }
  const double mean = x.mean();
  const Vector centered = x.array() - mean;
  const double var = centered.squaredNorm() / static_cast<double>(d);
  const double excess = var - cfg.sigma_n_sq;
  const bool clamped = !(excess > 0.0);
  const double inv_std = 1.0 / std::sqrt((clamped ? 0.0 : excess) + cfg.eps);
  Vector x_hat = centered * inv_std;
  Vector y = gain.cwiseProduct(x_hat) + bias;
  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = inv_std;
    cache->clamped = clamped;
  }
  return y;
}

NalnGrads naln_backward(const Vector& dy, const Vector& gain, const NalnCache& cache) {
  const Eigen::Index d = dy.size();
  if (cache.x_hat.size() != d || gain.size() != d) {
    throw ShapeError("naln_backward: cache does not match upstream gradient");
  }
  NalnGrads g;
  g.dbias = dy;
  g.dgain = dy.cwiseProduct(cache.x_hat);
  const Vector dxh = dy.cwiseProduct(gain);
  const double mean_dxh = dxh.mean();
  if (cache.clamped) {
    g.dx = (dxh.array() - mean_dxh) * cache.inv_std;
  } else {
    const double mean_dxh_xh = dxh.dot(cache.x_hat) / static_cast<double>(d);
    g.dx = (dxh.array() - mean_dxh - cache.x_hat.array() * mean_dxh_xh) * cache.inv_std;
  }
  return g;
}

Matrix naln_forward_rows(const Matrix& x, const Vector& gain, const Vector& bias,
                         const NALNConfig& cfg, std::vector<NalnCache>* caches) {
  Matrix y(x.rows(), x.cols());
  if (caches != nullptr) {
    caches->assign(static_cast<std::size_t>(x.rows()), NalnCache{});
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    NalnCache* c = caches != nullptr ? &(*caches)[static_cast<std::size_t>(r)] : nullptr;
    y.row(r) = naln_forward(x.row(r).transpose(), gain, bias, cfg, c).transpose();
  }
  return y;
}

Matrix naln_backward_rows(const Matrix& dy, const Vector& gain,
                          const std::vector<NalnCache>& caches, Vector& dgain, Vector& dbias) {
  if (static_cast<std::size_t>(dy.rows()) != caches.size()) {
    throw ShapeError("naln_backward_rows: cache count differs from rows");
  }
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    NalnGrads g = naln_backward(dy.row(r).transpose(), gain, caches[static_cast<std::size_t>(r)]);
    dx.row(r) = g.dx.transpose();
    dgain += g.dgain;
    dbias += g.dbias;
  }
  return dx;
}

double sigma_n_proxy_for_layer(const Vector& input_second_moment, const Matrix& weight,
                               const noise::NoiseParams& params) {
  if (input_second_moment.size() != weight.rows()) {
    throw ShapeError("sigma_n_proxy_for_layer: moment length differs from weight rows");
  }
  if (weight.cols() == 0) {
    return 0.0;
  }
  const double total = params.total_variance();
  if (total == 0.0) {
    return 0.0;
  }
  // Column n: sum_k E[x_k^2] W_kn^2.
  const Vector per_channel = weight.array().square().matrix().transpose() * input_second_moment;
  return total * per_channel.mean();
}

} // namespace mrsim::training
