#pragma once

#include <optional>
#include <vector>

#include "mrsim/core/matrix.hpp"
#include "mrsim/noise/noise_model.hpp"

namespace mrsim::proxy {

inline constexpr Eigen::Index kBankSize = 15;

/// Measured statistics of the microring banks a d_k-wide vector traverses.
/// Slice b of a vector is elements [b*bank_size, (b+1)*bank_size); the last
/// slice is zero-padded. Either per-bank variances or per-bank covariances
/// are present (covariances take precedence when both are set).
struct BankStats {
  Eigen::Index bank_size = kBankSize;
  Vector variances;             ///< sigma_b^2 per bank
  std::vector<Matrix> covariances; ///< Sigma_b per bank, bank_size x bank_size

  [[nodiscard]] Eigen::Index bank_count() const;
  [[nodiscard]] bool has_covariance() const { return !covariances.empty(); }
  void validate() const;

  /// Same sigma_b^2 for every bank covering d_k.
  static BankStats uniform(Eigen::Index d_k, double variance, Eigen::Index bank_size = kBankSize);
  /// sigma_b^2 = s_fab^2 + s_thermal^2 + s_laser^2 for every bank.
  static BankStats from_noise(Eigen::Index d_k, const noise::NoiseParams& params,
                              Eigen::Index bank_size = kBankSize);
  /// sigma_b = (measured shift std in nm) / linewidth, one entry per bank.
  static BankStats from_shift_std(const Vector& sigma_b_nm, double linewidth_nm,
                                  Eigen::Index bank_size = kBankSize);
};

Eigen::Index bank_count_for(Eigen::Index d_k, Eigen::Index bank_size = kBankSize);

/// v = (1/d_k) sum_b sigma_b^2 ||q^(b)||^2 ||k^(b)||^2.
double logit_variance_diag(const Vector& q, const Vector& k, const BankStats& stats,
                           Eigen::Index d_k);

/// v = (1/d_k) sum_b (q^(b) . k^(b))^T Sigma_b (q^(b) . k^(b)), with . elementwise.
double logit_variance_cov(const Vector& q, const Vector& k, const BankStats& stats,
                          Eigen::Index d_k);

/// Dispatches to the covariance form when covariances are present.
double logit_variance(const Vector& q, const Vector& k, const BankStats& stats, Eigen::Index d_k);

/// Adds upstream * dv/dq and upstream * dv/dk into grad_q, grad_k.
void logit_variance_backward(const Vector& q, const Vector& k, const BankStats& stats,
                             Eigen::Index d_k, double upstream, Eigen::Ref<Vector> grad_q,
                             Eigen::Ref<Vector> grad_k);

/// Per-logit variance map for one head: v(t, u) for rows q_t of Q and k_u of K.
struct LogitVarianceMap {
  Matrix v;                              ///< T x U
  std::vector<Eigen::Index> top1;        ///< argmax of each logit row, lowest index on ties

  [[nodiscard]] double pair_variance(Eigen::Index t, Eigen::Index j) const {
    return v(t, top1[static_cast<std::size_t>(t)]) + v(t, j);
  }
};

LogitVarianceMap build_variance_map(const Matrix& logits, const Matrix& q, const Matrix& k,
                                    const BankStats& stats);

/// Index of the largest entry; ties resolve to the lowest index.
Eigen::Index argmax_lowest(const Eigen::Ref<const Vector>& row);

/// Pr[noisy margin <= 0] = Phi(-margin / sigma).
double flip_probability(double margin, double sigma);

/// Competitors of the top-1 key: top ceil(K/2) by logit and top floor(K/2) by
/// variance (top-1 excluded), deduplicated, refilled by logit order up to K.
/// Ordering ties resolve to the lower index.
std::vector<Eigen::Index> competitor_set(const Eigen::Ref<const Vector>& row_logits,
                                         const Eigen::Ref<const Vector>& row_variances,
                                         Eigen::Index K);

} // namespace mrsim::proxy
