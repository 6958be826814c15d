#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "mrsim/vit/tiny_vit.hpp"

namespace mrsim::vit {
namespace {

constexpr Eigen::Index kEvalChunk = 64;

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& idx, std::size_t begin,
               std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) {
    out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

Vector col_mean_sq(const Matrix& x) {
  return x.array().square().colwise().mean().transpose();
}

// Feeding layer of norm i: (input rows, weight, op).
struct Feed {
  const Matrix* input;
  const Matrix* weight;
  Op op;
};

std::vector<Feed> feeds(const Model& model, const ForwardCache* cache) {
  const auto L = static_cast<std::size_t>(model.config.n_layers);
  std::vector<Feed> f(2 * L + 1);
  f[0] = {cache ? &cache->patches : nullptr, &model.params.patch_w, Op::PatchEmbed};
  for (std::size_t l = 0; l < L; ++l) {
    const Params::Block& W = model.params.blocks[l];
    f[2 * l + 1] = {cache ? &cache->blocks[l].concat : nullptr, &W.wo, Op::OutProj};
    f[2 * l + 2] = {cache ? &cache->blocks[l].g1 : nullptr, &W.w2, Op::Ffn2};
  }
  return f;
}

void update_norm_stats(Model& model, const ForwardCache& cache) {
  NormState& ns = model.norms;
  const std::vector<Feed> f = feeds(model, &cache);
  if (!ns.initialized) {
    ns.feed_second_moment.resize(f.size());
    ns.sigma_n_sq.assign(f.size(), 0.0);
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vector m = col_mean_sq(*f[i].input);
    if (!ns.initialized) {
      ns.feed_second_moment[i] = m;
    } else {
      ns.feed_second_moment[i] =
          (1.0 - ns.momentum) * ns.feed_second_moment[i] + ns.momentum * m;
    }
  }
  ns.initialized = true;
}

void calibrate_norm_stats(Model& model, const Dataset& data) {
  ForwardOptions o;
  o.keep_cache = true;
  const Eigen::Index n = std::min<Eigen::Index>(data.size(), kEvalChunk);
  const ForwardResult r = forward(model, data.images.topRows(n), o);
  update_norm_stats(model, r.cache);
}

} // namespace

TrainState make_train_state(Model model, const SeedContext& seed) {
  TrainState s;
  s.adam.m = model.params.zeros_like();
  s.adam.v = model.params.zeros_like();
  s.model = std::move(model);
  s.seed = seed;
  return s;
}

void adamw_step(Params& params, AdamState& adam, const Params& grads, const TrainConfig& cfg) {
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  std::vector<Matrix*> p = params.tensors();
  std::vector<Matrix*> m = adam.m.tensors();
  std::vector<Matrix*> v = adam.v.tensors();
  const std::vector<const Matrix*> g = grads.tensors();
  const std::vector<bool> decay = params.decay_mask();
  if (g.size() != p.size() || m.size() != p.size()) {
    throw ShapeError("adamw_step: parameter layouts differ");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (decay[i]) {
      *p[i] *= 1.0 - cfg.lr * cfg.weight_decay;
    }
    *m[i] = cfg.beta1 * *m[i] + (1.0 - cfg.beta1) * *g[i];
    *v[i] = cfg.beta2 * *v[i] + (1.0 - cfg.beta2) * g[i]->cwiseProduct(*g[i]);
    p[i]->array() -=
        cfg.lr * (m[i]->array() / bc1) / ((v[i]->array() / bc2).sqrt() + cfg.adam_eps);
  }
}

void refresh_sigma_n(Model& model, const noise::NoiseParams& noise,
                     const NoiseInjectionPolicy& policy) {
  const std::vector<Feed> f = feeds(model, nullptr);
  NormState& ns = model.norms;
  ns.sigma_n_sq.assign(f.size(), 0.0);
  if (model.config.norm_kind != NormKind::NALN || !ns.initialized) {
    return;
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    ns.sigma_n_sq[i] = training::sigma_n_proxy_for_layer(ns.feed_second_moment[i], *f[i].weight,
                                                         policy.params_for(f[i].op, noise));
  }
}

double accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw ShapeError("accuracy: label count differs from logit rows");
  }
  if (labels.empty()) {
    return 0.0;
  }
  std::size_t hit = 0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    Eigen::Index arg = 0;
    logits.row(b).maxCoeff(&arg);
    hit += static_cast<int>(arg) == labels[static_cast<std::size_t>(b)] ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

namespace {

double chunked_accuracy(const Model& model, const Dataset& data, ForwardOptions o) {
  o.keep_cache = false;
  std::size_t hit = 0;
  const std::uint64_t base_pass = o.pass;
  for (Eigen::Index start = 0, c = 0; start < data.size(); start += kEvalChunk, ++c) {
    const Eigen::Index len = std::min(kEvalChunk, data.size() - start);
    o.pass = base_pass + static_cast<std::uint64_t>(c);
    const Matrix logits = forward(model, data.images.middleRows(start, len), o).logits;
    const std::vector<int> lab(data.labels.begin() + start, data.labels.begin() + start + len);
    hit += static_cast<std::size_t>(std::llround(accuracy(logits, lab) * static_cast<double>(len)));
  }
  return data.size() == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(data.size());
}

} // namespace

double evaluate_clean(const Model& model, const Dataset& data) {
  Model m = model;
  // Clean hardware: no noise to subtract.
  std::fill(m.norms.sigma_n_sq.begin(), m.norms.sigma_n_sq.end(), 0.0);
  return chunked_accuracy(m, data, ForwardOptions{});
}

NoisyEvaluation evaluate_noisy(const Model& model, const Dataset& data,
                               const noise::NoiseParams& noise, int trials,
                               const SeedContext& ctx, const EvalOptions& opts) {
  if (trials <= 0) {
    throw ParameterError("evaluate_noisy: trials must be positive");
  }
  noise.validate();
  Model m = model;
  if (m.config.norm_kind == NormKind::NALN && !m.norms.initialized) {
    calibrate_norm_stats(m, data);
  }
  refresh_sigma_n(m, noise, opts.policy);

  NoisyEvaluation out;
  out.per_trial.assign(static_cast<std::size_t>(trials), 0.0);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < trials; t = next++) {
      ForwardOptions o;
      o.mode = ForwardMode::NoisyEmulated;
      o.policy = opts.policy;
      o.noise = noise;
      o.chip = ctx.child("trial", static_cast<std::uint64_t>(t));
      o.matmul = opts.matmul;
      o.geometry = opts.geometry;
      out.per_trial[static_cast<std::size_t>(t)] = chunked_accuracy(m, data, o);
    }
  };
  const int n_threads = std::clamp(opts.threads, 1, trials);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) {
      pool.emplace_back(worker);
    }
    for (std::thread& th : pool) {
      th.join();
    }
  }
  double sum = 0.0;
  for (double a : out.per_trial) {
    sum += a;
  }
  out.mean_acc = sum / trials;
  out.best_acc = *std::max_element(out.per_trial.begin(), out.per_trial.end());
  double ss = 0.0;
  for (double a : out.per_trial) {
    ss += (a - out.mean_acc) * (a - out.mean_acc);
  }
  out.std_acc = std::sqrt(ss / trials);
  return out;
}

std::vector<EpochMetrics> train(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                                const EpochCallback& on_epoch) {
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || cfg.lr < 0.0 || cfg.weight_decay < 0.0) {
    throw ParameterError("TrainConfig: epochs >= 0, batch_size > 0, lr and weight_decay >= 0");
  }
  if (data.size() == 0) {
    throw ParameterError("train: empty dataset");
  }
  cfg.train_noise.validate();
  if (cfg.use_cct) {
    cfg.cct.validate();
  }
  Model& model = state.model;
  const auto N = static_cast<std::size_t>(data.size());
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const proxy::BankStats banks =
      proxy::BankStats::from_noise(model.config.d_k(), cfg.train_noise);

  std::vector<EpochMetrics> history;
  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = state.epoch;
    if (cfg.use_cct && state.cct_start < 0) {
      state.cct_start = epoch;
    }
    const SeedContext ectx = state.seed.child("epoch", static_cast<std::uint64_t>(epoch));
    const std::vector<std::size_t> order = permutation(ectx.child("shuffle"), N);

    ForwardOptions o;
    o.mode = cfg.train_mode;
    o.policy = cfg.policy;
    o.noise = cfg.train_noise;
    o.matmul = cfg.matmul;
    o.keep_cache = true;
    o.cct.enabled = cfg.use_cct;
    o.cct.config = cfg.cct;
    o.cct.banks = banks;
    EpochMetrics em;
    em.epoch = epoch;
    if (cfg.use_cct) {
      em.tau = training::tau_at(cfg.cct, epoch - state.cct_start);
      o.cct.z_tau = training::tau_schedule(cfg.cct, epoch - state.cct_start);
    }
    const double lambda = cfg.use_cct ? cfg.cct.lambda_cct : 0.0;

    std::size_t batches = 0;
    for (std::size_t start = 0; start < N; start += bs, ++batches) {
      const std::size_t end = std::min(N, start + bs);
      const Matrix x = rows_of(data.images, order, start, end);
      std::vector<int> y(end - start);
      for (std::size_t i = start; i < end; ++i) {
        y[i - start] = data.labels[order[i]];
      }
      // A fresh chip per step so the weights do not fit one noise realisation.
      o.chip = ectx.child("chip", batches);
      o.pass = batches;
      const ForwardResult fwd = forward(model, x, o);
      const LossBreakdown lb = loss_from(fwd, y, lambda);
      const Params grads = backward(model, fwd, y, lambda, banks);
      update_norm_stats(model, fwd.cache);
      adamw_step(model.params, state.adam, grads, cfg);
      refresh_sigma_n(model, cfg.train_noise, cfg.policy);
      em.mean_loss += lb.total;
      em.mean_ce += lb.ce;
      em.mean_cct += lb.cct;
    }
    em.mean_loss /= static_cast<double>(batches);
    em.mean_ce /= static_cast<double>(batches);
    em.mean_cct /= static_cast<double>(batches);
    ++state.epoch;

    em.clean_acc = evaluate_clean(model, data);
    if (cfg.eval_trials > 0) {
      EvalOptions eo;
      eo.policy = cfg.policy;
      eo.matmul = cfg.matmul;
      const NoisyEvaluation ne = evaluate_noisy(model, data, cfg.eval_noise, cfg.eval_trials,
                                                ectx.child("eval"), eo);
      em.noisy_mean_acc = ne.mean_acc;
      em.noisy_best_acc = ne.best_acc;
    }
    history.push_back(em);
    if (on_epoch) {
      on_epoch(em, state);
    }
  }
  return history;
}

} // namespace mrsim::vit
