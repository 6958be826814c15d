#include <doctest.h>

#include <set>

#include "mrsim/core/normal.hpp"
#include "mrsim/proxy/variance_proxy.hpp"
#include "support.hpp"

using namespace mrsim;
using namespace mrsim::proxy;

namespace {

Vector rand_vec(std::uint64_t seed, Eigen::Index n) {
  return testing::random_matrix(SeedContext(seed), 1, n).transpose();
}

// Empirical variance of the logit q.k / sqrt(d_k) when every bank mixes its
// slice through (I + E), E_ij ~ N(0, s_b^2). Row i of E k^(b) is sampled as
// one N(0, s_b^2 |k^(b)|^2) draw, which is its exact marginal.
double mc_logit_variance(const Vector& q, const Vector& k, const Vector& bank_var,
                         Eigen::Index bank_size, int trials, const SeedContext& ctx) {
  const Eigen::Index d = q.size();
  const Eigen::Index banks = bank_var.size();
  const RandomStream s(ctx);
  std::uint64_t draw = 0;
  double m1 = 0.0, m2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    double noise = 0.0;
    for (Eigen::Index b = 0; b < banks; ++b) {
      const Eigen::Index lo = b * bank_size, len = std::min(bank_size, d - lo);
      const double kn = k.segment(lo, len).norm();
      const double sd = std::sqrt(bank_var(b)) * kn;
      for (Eigen::Index i = 0; i < len; ++i) {
        noise += q(lo + i) * sd * s.normal(draw++);
      }
    }
    const double logit_noise = noise / std::sqrt(static_cast<double>(d));
    m1 += logit_noise;
    m2 += logit_noise * logit_noise;
  }
  const double mean = m1 / trials;
  return m2 / trials - mean * mean;
}

} // namespace

TEST_CASE("bank bookkeeping") {
  CHECK(bank_count_for(16) == 2);
  CHECK(bank_count_for(15) == 1);
  CHECK(bank_count_for(32) == 3);
  const BankStats b = BankStats::from_noise(32, noise::NoiseParams::sweep_point(0.4));
  CHECK(b.bank_count() == 3);
  CHECK(b.variances(0) == doctest::Approx(0.16 + 0.01 + 0.0025));
  const BankStats m = BankStats::from_shift_std(Vector::Constant(2, 0.6), 1.2);
  CHECK(m.variances(1) == doctest::Approx(0.25));
  BankStats bad = BankStats::uniform(16, 0.1);
  bad.variances(0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("logit_variance_diag: examples and homogeneity") {
  const Vector q = rand_vec(1, 20), k = rand_vec(2, 20);
  CHECK(logit_variance_diag(q, k, BankStats::uniform(20, 0.0), 20) == 0.0);

  Vector e = Vector::Zero(16);
  e(0) = 1.0;
  CHECK(logit_variance_diag(e, e, BankStats::uniform(16, 0.04), 16) ==
        doctest::Approx(0.0025).epsilon(1e-14));

  const BankStats st = BankStats::uniform(20, 0.09);
  const double v = logit_variance_diag(q, k, st, 20);
  CHECK(v > 0.0);
  CHECK(logit_variance_diag(Vector(3.0 * q), k, st, 20) == doctest::Approx(9.0 * v).epsilon(1e-13));
}

TEST_CASE("logit_variance_diag: Monte Carlo of the bank-mixing model") {
  const Eigen::Index d = 32;
  Vector var(3);
  var << 0.04, 0.09, 0.02;
  BankStats st;
  st.variances = var;
  for (std::uint64_t pair = 0; pair < 5; ++pair) {
    const Vector q = rand_vec(100 + pair, d), k = rand_vec(200 + pair, d);
    const double proxy = logit_variance_diag(q, k, st, d);
    const double mc = mc_logit_variance(q, k, var, 15, 20000, SeedContext(300).child("pair", pair));
    CAPTURE(pair);
    CHECK(mc == doctest::Approx(proxy).epsilon(0.10));
  }
}

TEST_CASE("logit_variance_cov: zero, rank one, PSD, documented mismatch with diag") {
  const Eigen::Index d = 20;
  const Vector q = rand_vec(5, d), k = rand_vec(6, d);
  BankStats zero;
  zero.covariances.assign(2, Matrix::Zero(15, 15));
  CHECK(logit_variance_cov(q, k, zero, d) == 0.0);

  const Vector u = rand_vec(7, 15);
  BankStats r1;
  r1.covariances.assign(2, u * u.transpose());
  Vector qk = Vector::Zero(30);
  qk.head(d) = q.cwiseProduct(k);
  const double want = (std::pow(qk.head(15).dot(u), 2) + std::pow(qk.tail(15).dot(u), 2)) / d;
  CHECK(logit_variance_cov(q, k, r1, d) == doctest::Approx(want).epsilon(1e-13));
  CHECK(logit_variance(q, k, r1, d) == logit_variance_cov(q, k, r1, d));

  for (std::uint64_t t = 0; t < 50; ++t) {
    const Matrix a = testing::random_matrix(SeedContext(8).child("a", t), 15, 15);
    BankStats psd;
    psd.covariances.assign(2, a * a.transpose());
    REQUIRE(logit_variance_cov(rand_vec(900 + t, d), rand_vec(950 + t, d), psd, d) >= 0.0);
  }

  // sigma^2 I in the covariance form is not the norm-product diagonal form
  BankStats iso;
  iso.covariances.assign(2, 0.04 * Matrix::Identity(15, 15));
  const double cov_form = logit_variance_cov(q, k, iso, d);
  CHECK(cov_form == doctest::Approx(0.04 * q.cwiseProduct(k).squaredNorm() / d).epsilon(1e-13));
  CHECK(cov_form != doctest::Approx(logit_variance_diag(q, k, BankStats::uniform(d, 0.04), d)));
}

TEST_CASE("logit_variance_backward matches finite differences") {
  const Eigen::Index d = 22;
  Vector q = rand_vec(11, d), k = rand_vec(12, d);
  BankStats diag = BankStats::uniform(d, 0.07);
  diag.variances(1) = 0.02;
  const Matrix a = testing::random_matrix(SeedContext(13), 15, 15);
  BankStats cov;
  cov.covariances.assign(2, a * a.transpose());
  for (const BankStats* st : {&diag, &cov}) {
    Vector gq = Vector::Zero(d), gk = Vector::Zero(d);
    logit_variance_backward(q, k, *st, d, 1.7, gq, gk);
    auto f = [&] { return 1.7 * logit_variance(q, k, *st, d); };
    for (Eigen::Index i = 0; i < d; ++i) {
      REQUIRE(testing::rel_err(gq(i), testing::central_diff(q(i), f)) < 1e-6);
      REQUIRE(testing::rel_err(gk(i), testing::central_diff(k(i), f)) < 1e-6);
    }
  }
}

TEST_CASE("flip_probability") {
  CHECK(flip_probability(0.0, 0.3) == 0.5);
  CHECK(flip_probability(1.6448536269514722, 1.0) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(flip_probability(0.4, 0.2) == doctest::Approx(flip_probability(4.0, 2.0)).epsilon(1e-15));
  CHECK(flip_probability(1.0, 0.5) < flip_probability(0.5, 0.5));
  CHECK_THROWS_AS(flip_probability(1.0, 0.0), ParameterError);

  // empirical flip rate of margin + N(0, sigma^2)
  const RandomStream s(SeedContext(17));
  const int n = 1'000'000;
  const double sigma = 0.3, z = 0.8416212335729143;
  int flips = 0;
  for (int i = 0; i < n; ++i) {
    flips += (z * sigma + sigma * s.normal(static_cast<std::uint64_t>(i))) <= 0.0 ? 1 : 0;
  }
  const double p = flip_probability(z * sigma, sigma);
  CHECK(std::abs(static_cast<double>(flips) / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("competitor_set") {
  Vector two(2), v2(2);
  two << 0.1, 0.9;
  v2 << 1.0, 1.0;
  CHECK(competitor_set(two, v2, 3) == std::vector<Eigen::Index>{0});

  // leaders by logit (after the top) and by variance are distinct
  Vector s(6), v(6);
  s << 5.0, 4.0, 3.0, 1.0, 0.5, 0.0;
  v << 0.1, 0.1, 0.1, 0.1, 0.1, 9.0;
  const auto c = competitor_set(s, v, 2);
  CHECK(std::set<Eigen::Index>(c.begin(), c.end()) == std::set<Eigen::Index>{1, 5});

  const auto all = competitor_set(s, v, 10);
  CHECK(std::set<Eigen::Index>(all.begin(), all.end()) == std::set<Eigen::Index>{1, 2, 3, 4, 5});

  // variance leader coincides with a logit leader: refilled by logit order
  Vector v3 = Vector::Constant(6, 0.1);
  v3(1) = 5.0;
  const auto r = competitor_set(s, v3, 3);
  CHECK(std::set<Eigen::Index>(r.begin(), r.end()) == std::set<Eigen::Index>{1, 2, 3});

  // ties: lower index wins
  Vector flat = Vector::Constant(5, 1.0);
  CHECK(argmax_lowest(flat) == 0);
  const auto tie = competitor_set(flat, Vector::Constant(5, 0.5), 2);
  CHECK(std::set<Eigen::Index>(tie.begin(), tie.end()) == std::set<Eigen::Index>{1, 2});
  CHECK(competitor_set(flat, Vector::Constant(5, 0.5), 2) == tie);
}

TEST_CASE("build_variance_map") {
  const Matrix q = testing::random_matrix(SeedContext(1), 4, 16);
  const Matrix k = testing::random_matrix(SeedContext(2), 5, 16);
  const Matrix logits = q * k.transpose() / 4.0;
  const BankStats st = BankStats::uniform(16, 0.05);
  const LogitVarianceMap m = build_variance_map(logits, q, k, st);
  REQUIRE(m.v.rows() == 4);
  REQUIRE(m.v.cols() == 5);
  CHECK((m.v.array() >= 0.0).all());
  for (Eigen::Index t = 0; t < 4; ++t) {
    const Eigen::Index top = m.top1[static_cast<std::size_t>(t)];
    CHECK(top == argmax_lowest(logits.row(t).transpose()));
    CHECK(m.v(t, 2) == doctest::Approx(logit_variance_diag(q.row(t).transpose(),
                                                           k.row(2).transpose(), st, 16)));
    CHECK(m.pair_variance(t, 3) == m.v(t, top) + m.v(t, 3));
  }
}
