#pragma once

#include <set>
#include <vector>

#include "mrsim/core/matrix.hpp"
#include "mrsim/noise/noise_model.hpp"
#include "mrsim/proxy/variance_proxy.hpp"

namespace mrsim::training {

struct CCTConfig {
  double tau_start = 0.80;
  double tau_end = 0.95;
  int anneal_epochs = 10;
  Eigen::Index K = 4;
  double lambda_cct = 1.0;
  std::set<int> active_layers;  ///< empty: first and last encoder block
  std::set<int> active_heads;   ///< empty: every head

  void validate() const;
  [[nodiscard]] bool layer_active(int layer, int n_layers) const;
  [[nodiscard]] bool head_active(int head) const;
};

/// Added under the square root of every pairwise variance.
inline constexpr double kCctVarianceGuard = 1e-12;

/// Linear tau ramp from tau_start to tau_end over anneal_epochs.
double tau_at(const CCTConfig& cfg, int epoch);
/// z_tau = Phi^{-1}(tau_at(cfg, epoch)).
double tau_schedule(const CCTConfig& cfg, int epoch);

/// Unnormalized hinge sums for one logit block; several blocks (heads,
/// layers, samples) are summed and then divided by the total term count.
struct CctTerms {
  double hinge_sum = 0.0;
  std::size_t term_count = 0;
  Matrix grad_logits;    ///< d(hinge_sum)/d(logits)
  Matrix grad_variances; ///< d(hinge_sum)/d(v)
};

/// Sum over rows t and competitors j of [z - (s_t,i* - s_t,j) / sqrt(v_t,i* + v_t,j)]_+ .
/// The top-1 index and competitor sets are treated as fixed (piecewise smooth).
CctTerms cct_terms(const Matrix& logits, const Matrix& variances, double z_tau, Eigen::Index K);

struct CctLoss {
  double loss = 0.0;
  Matrix grad_logits;
  Matrix grad_variances;
};

/// L = (1/B) * sum of hinge terms, B = number of hinge terms summed.
CctLoss cct_loss(const Matrix& logits, const proxy::LogitVarianceMap& variances,
                 const CCTConfig& cfg, int epoch);

struct NALNConfig {
  double sigma_n_sq = 0.0;
  double eps = 1e-5;

  void validate() const;
};

struct NalnCache {
  Vector x_hat;
  double inv_std = 0.0;
  bool clamped = false;
};

/// x_hat = (x - mean) / sqrt(max(var - sigma_n^2, 0) + eps), y = gain . x_hat + bias.
/// var is the biased (1/d) sample variance.
Vector naln_forward(const Vector& x, const Vector& gain, const Vector& bias,
                    const NALNConfig& cfg, NalnCache* cache = nullptr);

struct NalnGrads {
  Vector dx;
  Vector dgain;
  Vector dbias;
};

/// Chain rule through the clamped denominator. On the clamped branch the
/// subgradient of max(., 0) is 0 and the denominator is a constant sqrt(eps).
NalnGrads naln_backward(const Vector& dy, const Vector& gain, const NalnCache& cache);

/// Row-wise helpers over a tokens x channels matrix.
Matrix naln_forward_rows(const Matrix& x, const Vector& gain, const Vector& bias,
                         const NALNConfig& cfg, std::vector<NalnCache>* caches = nullptr);
Matrix naln_backward_rows(const Matrix& dy, const Vector& gain,
                          const std::vector<NalnCache>& caches, Vector& dgain, Vector& dbias);

/// Noise variance proxy for the linear layer feeding a normalization:
/// mean over output channels n of sum_k E[x_k^2] W_kn^2 (s_laser^2 + s_fab^2 + s_thermal^2),
/// with E[x_k^2] the running second moment of the layer input.
double sigma_n_proxy_for_layer(const Vector& input_second_moment, const Matrix& weight,
                               const noise::NoiseParams& params);

} // namespace mrsim::training
