#include "mrsim/proxy/variance_proxy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "mrsim/core/normal.hpp"

namespace mrsim::proxy {

Eigen::Index bank_count_for(Eigen::Index d_k, Eigen::Index bank_size) {
  if (d_k <= 0 || bank_size <= 0) {
    throw ParameterError("bank_count_for: sizes must be positive");
  }
  return (d_k + bank_size - 1) / bank_size;
}

Eigen::Index BankStats::bank_count() const {
  return has_covariance() ? static_cast<Eigen::Index>(covariances.size()) : variances.size();
}

void BankStats::validate() const {
  if (bank_size <= 0) {
    throw ParameterError("BankStats: bank_size must be positive");
  }
  if (has_covariance()) {
    for (const Matrix& s : covariances) {
      if (s.rows() != bank_size || s.cols() != bank_size) {
        throw ShapeError("BankStats: covariance must be bank_size x bank_size");
      }
      if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw ParameterError("BankStats: covariance is not symmetric");
      }
      const Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-10) {
        throw ParameterError("BankStats: covariance is not positive semidefinite");
      }
    }
  } else if ((variances.array() < 0.0).any() || !variances.allFinite()) {
    throw ParameterError("BankStats: variances must be finite and >= 0");
  }
}

BankStats BankStats::uniform(Eigen::Index d_k, double variance, Eigen::Index bank_size) {
  if (!(variance >= 0.0)) {
    throw ParameterError("BankStats::uniform: variance must be >= 0");
  }
  BankStats s;
  s.bank_size = bank_size;
  s.variances = Vector::Constant(bank_count_for(d_k, bank_size), variance);
  return s;
}

BankStats BankStats::from_noise(Eigen::Index d_k, const noise::NoiseParams& params,
                                Eigen::Index bank_size) {
  return uniform(d_k, params.total_variance(), bank_size);
}

BankStats BankStats::from_shift_std(const Vector& sigma_b_nm, double linewidth_nm,
                                    Eigen::Index bank_size) {
  if (!(linewidth_nm > 0.0)) {
    throw ParameterError("BankStats::from_shift_std: linewidth must be > 0");
  }
  BankStats s;
  s.bank_size = bank_size;
  s.variances = (sigma_b_nm / linewidth_nm).array().square().matrix();
  s.validate();
  return s;
}

namespace {

struct Slice {
  Eigen::Index begin;
  Eigen::Index len;
};

Slice slice_of(Eigen::Index b, Eigen::Index d_k, Eigen::Index bank_size) {
  const Eigen::Index begin = b * bank_size;
  return {begin, std::min(bank_size, d_k - begin)};
}

void check_inputs(const Vector& q, const Vector& k, const BankStats& stats, Eigen::Index d_k) {
  if (q.size() != d_k || k.size() != d_k) {
    throw ShapeError("logit variance: q and k must have length d_k");
  }
  if (stats.bank_count() < bank_count_for(d_k, stats.bank_size)) {
    throw ShapeError("logit variance: fewer bank statistics than slices of d_k (" +
                     std::to_string(stats.bank_count()) + " < " +
                     std::to_string(bank_count_for(d_k, stats.bank_size)) + ")");
  }
}

} // namespace

double logit_variance_diag(const Vector& q, const Vector& k, const BankStats& stats,
                           Eigen::Index d_k) {
  check_inputs(q, k, stats, d_k);
  if (stats.variances.size() < bank_count_for(d_k, stats.bank_size)) {
    throw ShapeError("logit_variance_diag: per-bank variances required");
  }
  double acc = 0.0;
  for (Eigen::Index b = 0; b < bank_count_for(d_k, stats.bank_size); ++b) {
    const Slice s = slice_of(b, d_k, stats.bank_size);
    acc += stats.variances(b) * q.segment(s.begin, s.len).squaredNorm() *
           k.segment(s.begin, s.len).squaredNorm();
  }
  return acc / static_cast<double>(d_k);
}

double logit_variance_cov(const Vector& q, const Vector& k, const BankStats& stats,
                          Eigen::Index d_k) {
  check_inputs(q, k, stats, d_k);
  if (!stats.has_covariance()) {
    throw ShapeError("logit_variance_cov: per-bank covariances required");
  }
  double acc = 0.0;
  for (Eigen::Index b = 0; b < bank_count_for(d_k, stats.bank_size); ++b) {
    const Slice s = slice_of(b, d_k, stats.bank_size);
    const Vector u = q.segment(s.begin, s.len).cwiseProduct(k.segment(s.begin, s.len));
    const auto& cov = stats.covariances[static_cast<std::size_t>(b)];
    acc += u.dot(cov.topLeftCorner(s.len, s.len) * u);
  }
  return acc / static_cast<double>(d_k);
}

double logit_variance(const Vector& q, const Vector& k, const BankStats& stats,
                      Eigen::Index d_k) {
  return stats.has_covariance() ? logit_variance_cov(q, k, stats, d_k)
                                : logit_variance_diag(q, k, stats, d_k);
}

void logit_variance_backward(const Vector& q, const Vector& k, const BankStats& stats,
                             Eigen::Index d_k, double upstream, Eigen::Ref<Vector> grad_q,
                             Eigen::Ref<Vector> grad_k) {
  check_inputs(q, k, stats, d_k);
  const double c = upstream / static_cast<double>(d_k);
  for (Eigen::Index b = 0; b < bank_count_for(d_k, stats.bank_size); ++b) {
    const Slice s = slice_of(b, d_k, stats.bank_size);
    const auto qs = q.segment(s.begin, s.len);
    const auto ks = k.segment(s.begin, s.len);
    if (stats.has_covariance()) {
      const Vector u = qs.cwiseProduct(ks);
      const auto& cov = stats.covariances[static_cast<std::size_t>(b)];
      const Vector du = 2.0 * c * (cov.topLeftCorner(s.len, s.len) * u);
      grad_q.segment(s.begin, s.len) += du.cwiseProduct(ks);
      grad_k.segment(s.begin, s.len) += du.cwiseProduct(qs);
    } else {
      const double sb = stats.variances(b);
      grad_q.segment(s.begin, s.len) += (2.0 * c * sb * ks.squaredNorm()) * qs;
      grad_k.segment(s.begin, s.len) += (2.0 * c * sb * qs.squaredNorm()) * ks;
    }
  }
}

Eigen::Index argmax_lowest(const Eigen::Ref<const Vector>& row) {
  if (row.size() == 0) {
    throw ShapeError("argmax_lowest: empty row");
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i) {
    if (row(i) > row(best)) {
      best = i;
    }
  }
  return best;
}

LogitVarianceMap build_variance_map(const Matrix& logits, const Matrix& q, const Matrix& k,
                                    const BankStats& stats) {
  if (logits.rows() != q.rows() || logits.cols() != k.rows() || q.cols() != k.cols()) {
    throw ShapeError("build_variance_map: logits must be rows(q) x rows(k)");
  }
  const Eigen::Index d_k = q.cols();
  LogitVarianceMap map;
  map.v.resize(logits.rows(), logits.cols());
  map.top1.resize(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const Vector qt = q.row(t).transpose();
    for (Eigen::Index u = 0; u < logits.cols(); ++u) {
      map.v(t, u) = logit_variance(qt, k.row(u).transpose(), stats, d_k);
    }
    map.top1[static_cast<std::size_t>(t)] = argmax_lowest(logits.row(t).transpose());
  }
  return map;
}

double flip_probability(double margin, double sigma) {
  if (!(sigma > 0.0)) {
    throw ParameterError("flip_probability: sigma must be > 0");
  }
  return std_normal_cdf(-margin / sigma);
}

std::vector<Eigen::Index> competitor_set(const Eigen::Ref<const Vector>& row_logits,
                                         const Eigen::Ref<const Vector>& row_variances,
                                         Eigen::Index K) {
  const Eigen::Index U = row_logits.size();
  if (row_variances.size() != U) {
    throw ShapeError("competitor_set: logits and variances differ in length");
  }
  if (K < 0) {
    throw ParameterError("competitor_set: K must be >= 0");
  }
  const Eigen::Index top = argmax_lowest(row_logits);
  std::vector<Eigen::Index> others;
  others.reserve(static_cast<std::size_t>(U));
  for (Eigen::Index i = 0; i < U; ++i) {
    if (i != top) {
      others.push_back(i);
    }
  }
  auto by_logit = others;
  std::stable_sort(by_logit.begin(), by_logit.end(), [&](Eigen::Index a, Eigen::Index b) {
    return row_logits(a) > row_logits(b);
  });
  auto by_var = others;
  std::stable_sort(by_var.begin(), by_var.end(), [&](Eigen::Index a, Eigen::Index b) {
    return row_variances(a) > row_variances(b);
  });

  const auto limit = static_cast<std::size_t>(std::min<Eigen::Index>(K, U - 1));
  const auto n_logit = static_cast<std::size_t>((K + 1) / 2);
  const auto n_var = static_cast<std::size_t>(K / 2);
  std::vector<Eigen::Index> out;
  out.reserve(limit);
  auto add = [&](Eigen::Index i) {
    if (out.size() < limit && std::find(out.begin(), out.end(), i) == out.end()) {
      out.push_back(i);
    }
  };
  for (std::size_t i = 0; i < std::min(n_logit, by_logit.size()); ++i) {
    add(by_logit[i]);
  }
  for (std::size_t i = 0; i < std::min(n_var, by_var.size()); ++i) {
    add(by_var[i]);
  }
  for (const Eigen::Index i : by_logit) {
    add(i);
  }
  return out;
}

} // namespace mrsim::proxy
