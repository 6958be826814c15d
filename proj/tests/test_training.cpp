#include <doctest.h>

#include "mrsim/core/normal.hpp"
#include "mrsim/optical/optical_matmul.hpp"
#include "mrsim/training/robust_training.hpp"
#include "support.hpp"

using namespace mrsim;
using namespace mrsim::training;

namespace {

proxy::LogitVarianceMap make_map(const Matrix& logits, const Matrix& v) {
  proxy::LogitVarianceMap m;
  m.v = v;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    m.top1.push_back(proxy::argmax_lowest(logits.row(t).transpose()));
  }
  return m;
}

CCTConfig annealed() {
  CCTConfig c;
  c.anneal_epochs = 0; // tau already at tau_end
  return c;
}

// Plain LayerNorm written out independently of the library.
Vector plain_ln(const Vector& x, const Vector& g, const Vector& b, double eps) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return (g.array() * (x.array() - mean) / std::sqrt(var + eps) + b.array()).matrix();
}

} // namespace

TEST_CASE("tau schedule") {
  CCTConfig c;
  c.anneal_epochs = 10;
  CHECK(tau_schedule(c, 0) == doctest::Approx(0.8416).epsilon(1e-4));
  CHECK(tau_schedule(c, 10) == doctest::Approx(1.6449).epsilon(1e-4));
  CHECK(tau_schedule(c, 25) == tau_schedule(c, 10));
  CHECK(tau_at(c, 5) == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(tau_at(c, 3) < tau_at(c, 4));
  CCTConfig bad;
  bad.tau_start = 0.99;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  CHECK(c.layer_active(0, 4));
  CHECK_FALSE(c.layer_active(1, 4));
  CHECK(c.layer_active(3, 4));
}

TEST_CASE("cct_loss: scalar examples") {
  Matrix s(1, 2), v(1, 2);
  s << 2.0, 1.0;
  v << 0.01, 0.01;
  CHECK(cct_loss(s, make_map(s, v), annealed(), 0).loss == 0.0);

  s << 1.0, 0.9;
  v << 0.02, 0.02;
  const CctLoss l = cct_loss(s, make_map(s, v), annealed(), 0);
  CHECK(l.loss == doctest::Approx(1.6448536269514722 - 0.5).epsilon(1e-9));

  // noiseless limit with positive margins
  s << 1.0, 0.5;
  v << 0.0, 0.0;
  const CctLoss z = cct_loss(s, make_map(s, v), annealed(), 0);
  CHECK(z.loss == 0.0);
  CHECK(z.grad_logits.isZero(0.0));

  // all-equal row: lowest index is top-1, margin 0, hinge = z_tau
  Matrix e = Matrix::Constant(1, 3, 0.7), ev = Matrix::Constant(1, 3, 0.05);
  const CctLoss t = cct_loss(e, make_map(e, ev), annealed(), 0);
  CHECK(t.loss == doctest::Approx(1.6448536269514722).epsilon(1e-9));
}

TEST_CASE("cct_loss: gradients vs finite differences on 20 instances") {
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Matrix s = testing::random_matrix(SeedContext(50).child("s", inst), 5, 7, 0.3);
    Matrix v = testing::random_matrix(SeedContext(50).child("v", inst), 5, 7, 0.02).array().abs() + 0.005;
    CCTConfig cfg = annealed();
    cfg.K = 3;
    const CctLoss l = cct_loss(s, make_map(s, v), cfg, 0);
    auto f = [&] { return cct_loss(s, make_map(s, v), cfg, 0).loss; };
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      worst = std::max(worst, testing::rel_err(l.grad_logits.data()[i],
                                               testing::central_diff(s.data()[i], f, 1e-7)));
      worst = std::max(worst, testing::rel_err(l.grad_variances.data()[i],
                                               testing::central_diff(v.data()[i], f, 1e-9)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("cct_loss: monotone in margin, shift invariant, zero grads on inactive hinges") {
  Matrix s(1, 4), v = Matrix::Constant(1, 4, 0.02);
  s << 1.0, 0.9, 0.2, -3.0;
  CCTConfig cfg = annealed();
  cfg.K = 3;
  const CctLoss base = cct_loss(s, make_map(s, v), cfg, 0);
  double prev = base.loss;
  for (int step = 1; step <= 10; ++step) {
    Matrix wider = s;
    wider(0, 0) += 0.05 * step;
    const double l = cct_loss(wider, make_map(wider, v), cfg, 0).loss;
    REQUIRE(l <= prev);
    prev = l;
  }
  Matrix shifted = s.array() + 4.2;
  CHECK(cct_loss(shifted, make_map(shifted, v), cfg, 0).loss == doctest::Approx(base.loss).epsilon(1e-12));
  // index 3 sits 4 logits below the top: its hinge is inactive
  CHECK(base.grad_logits(0, 3) == 0.0);
  CHECK(base.grad_variances(0, 3) == 0.0);
  CHECK(base.grad_logits(0, 1) != 0.0);
}

TEST_CASE("naln_forward: reductions and clamp") {
  const Vector x = testing::random_matrix(SeedContext(1), 1, 12, 2.0).transpose();
  const Vector g = testing::random_matrix(SeedContext(2), 1, 12).transpose();
  const Vector b = testing::random_matrix(SeedContext(3), 1, 12).transpose();
  NALNConfig cfg;
  CHECK((naln_forward(x, g, b, cfg) - plain_ln(x, g, b, cfg.eps)).cwiseAbs().maxCoeff() < 1e-14);

  const Vector ones = Vector::Ones(12), zeros = Vector::Zero(12);
  const Vector pre = naln_forward(x, ones, zeros, cfg);
  CHECK(std::abs(pre.mean()) < 1e-14);
  CHECK((naln_forward(Vector(x.array() + 7.5), ones, zeros, cfg) - pre).cwiseAbs().maxCoeff() < 1e-12);

  // clamp branch
  NALNConfig big;
  big.sigma_n_sq = 1e3;
  NalnCache cache;
  const Vector c = naln_forward(x, ones, zeros, big, &cache);
  CHECK(cache.clamped);
  CHECK((c - (x.array() - x.mean()).matrix() / std::sqrt(big.eps)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(naln_forward(Vector::Ones(1), Vector::Ones(1), Vector::Zero(1), cfg), ShapeError);
}

TEST_CASE("naln_forward: subtracting the known noise variance restores the clean scale") {
  // x_tilde = x + n with var(x) = 1 over channels and noise var 0.5 per channel
  const Eigen::Index d = 4096;
  const Vector clean = gauss(SeedContext(4), static_cast<std::size_t>(d), 0.0, 1.0);
  const Vector noise = gauss(SeedContext(5), static_cast<std::size_t>(d), 0.0, std::sqrt(0.5));
  const Vector noisy = clean + noise;
  const double var_noisy = (noisy.array() - noisy.mean()).square().mean();
  const double var_clean = (clean.array() - clean.mean()).square().mean();
  NALNConfig cfg;
  cfg.sigma_n_sq = var_noisy - var_clean;
  const Vector y = naln_forward(noisy, Vector::Ones(d), Vector::Zero(d), cfg);
  const double out_var = (y.array() - y.mean()).square().mean();
  // output variance equals var_noisy / var_clean, the spread LN(x) would see if fed x_tilde
  CHECK(out_var == doctest::Approx(var_noisy / (var_clean + cfg.eps)).epsilon(1e-9));
  CHECK(out_var == doctest::Approx(1.5).epsilon(0.05));
}

TEST_CASE("naln_backward: finite differences, clamp convention, LN reduction") {
  const Eigen::Index d = 8;
  Vector x = testing::random_matrix(SeedContext(6), 1, d, 1.5).transpose();
  Vector g = testing::random_matrix(SeedContext(7), 1, d).transpose();
  Vector b = testing::random_matrix(SeedContext(8), 1, d).transpose();
  const Vector up = testing::random_matrix(SeedContext(9), 1, d).transpose();
  for (double sn : {0.0, 0.3, 50.0}) {
    NALNConfig cfg;
    cfg.sigma_n_sq = sn;
    NalnCache cache;
    (void)naln_forward(x, g, b, cfg, &cache);
    const NalnGrads gr = naln_backward(up, g, cache);
    auto f = [&] { return up.dot(naln_forward(x, g, b, cfg)); };
    double worst = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      worst = std::max(worst, testing::rel_err(gr.dx(i), testing::central_diff(x(i), f), 1e-10));
      worst = std::max(worst, testing::rel_err(gr.dgain(i), testing::central_diff(g(i), f), 1e-10));
      worst = std::max(worst, testing::rel_err(gr.dbias(i), testing::central_diff(b(i), f), 1e-10));
    }
    CAPTURE(sn);
    CHECK(worst < 1e-5);
    if (sn == 0.0) {
      // same numbers as differentiating the plain LN
      auto ln = [&] { return up.dot(plain_ln(x, g, b, cfg.eps)); };
      for (Eigen::Index i = 0; i < d; ++i) {
        REQUIRE(testing::rel_err(gr.dx(i), testing::central_diff(x(i), ln)) < 1e-5);
      }
    }
  }
}

TEST_CASE("naln row helpers agree with the vector form") {
  const Matrix x = testing::random_matrix(SeedContext(10), 3, 6);
  const Vector g = Vector::Constant(6, 1.3), b = Vector::Constant(6, -0.2);
  NALNConfig cfg;
  cfg.sigma_n_sq = 0.05;
  std::vector<NalnCache> caches;
  const Matrix y = naln_forward_rows(x, g, b, cfg, &caches);
  const Matrix up = testing::random_matrix(SeedContext(11), 3, 6);
  Vector dg = Vector::Zero(6), db = Vector::Zero(6);
  const Matrix dx = naln_backward_rows(up, g, caches, dg, db);
  Vector dg_sum = Vector::Zero(6);
  for (Eigen::Index r = 0; r < 3; ++r) {
    CHECK((y.row(r).transpose() - naln_forward(x.row(r).transpose(), g, b, cfg)).norm() == 0.0);
    const NalnGrads gr = naln_backward(up.row(r).transpose(), g, caches[static_cast<std::size_t>(r)]);
    CHECK((dx.row(r).transpose() - gr.dx).norm() < 1e-15);
    dg_sum += gr.dgain;
  }
  CHECK((dg - dg_sum).norm() < 1e-14);
}

TEST_CASE("sigma_n proxy: zero noise, single MAC, paired noisy forward") {
  const Matrix w = testing::random_matrix(SeedContext(12), 40, 24, 0.3);
  const Vector m2 = Vector::Constant(40, 0.5);
  CHECK(sigma_n_proxy_for_layer(m2, w, {}) == 0.0);

  const auto p = noise::NoiseParams::sweep_point(0.4);
  Matrix w1(1, 1);
  w1 << -0.7;
  CHECK(sigma_n_proxy_for_layer(Vector::Constant(1, 0.36), w1, p) ==
        doctest::Approx(noise::mac_variance(Vector::Constant(1, 0.6), Vector::Constant(1, -0.7), p).variance)
            .epsilon(1e-14));

  // paired clean / noisy passes through the emulated core
  const Matrix x = testing::random_matrix(SeedContext(13), 64, 40, 1.2);
  const Vector second = x.array().square().colwise().mean().transpose();
  const Matrix clean = matmul(x, w);
  double acc = 0.0;
  const int chips = 40;
  for (int c = 0; c < chips; ++c) {
    const noise::NoiseStreams st{SeedContext(14).child("chip", static_cast<std::uint64_t>(c))};
    acc += (optical::noisy_matmul(x, w, p, st).y - clean).array().square().mean();
  }
  const double empirical = acc / chips;
  CHECK(sigma_n_proxy_for_layer(second, w, p) == doctest::Approx(empirical).epsilon(0.25));
}
