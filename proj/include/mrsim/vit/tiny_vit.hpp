#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mrsim/core/matrix.hpp"
#include "mrsim/core/random.hpp"
#include "mrsim/noise/noise_model.hpp"
#include "mrsim/optical/optical_matmul.hpp"
#include "mrsim/proxy/variance_proxy.hpp"
#include "mrsim/training/robust_training.hpp"

namespace mrsim::vit {

enum class NormKind { LN, NALN };

struct ViTConfig {
  int image_size = 32;
  int patch_size = 8;
  int channels = 1;
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 4;
  int ffn_mult = 4;
  int n_classes = 4;
  NormKind norm_kind = NormKind::LN;

  void validate() const;
  [[nodiscard]] int d_k() const { return d_model / n_heads; }
  [[nodiscard]] int grid() const { return image_size / patch_size; }
  [[nodiscard]] int n_tokens() const { return grid() * grid(); }
  [[nodiscard]] int patch_dim() const { return channels * patch_size * patch_size; }
  [[nodiscard]] int pixels() const { return channels * image_size * image_size; }
  [[nodiscard]] int d_ffn() const { return ffn_mult * d_model; }
};

/// Matrix products of the network that can be routed through the optical core.
enum class Op : std::size_t {
  PatchEmbed,
  Query,
  Key,
  Value,
  AttnLogits, ///< Q K^T
  AttnValues, ///< A V
  OutProj,
  Ffn1,
  Ffn2,
  Head,
};
inline constexpr std::size_t kOpCount = 10;
const char* op_name(Op op);

struct OpNoise {
  bool weight = true; ///< fabrication + thermal (+ post-trim jitter) on the programmed operand
  bool input = true;  ///< laser amplitude noise on the streamed operand
};

struct NoiseInjectionPolicy {
  std::array<OpNoise, kOpCount> ops{};

  /// Every matrix product carries both weight and input noise.
  static NoiseInjectionPolicy all_products();
  /// Q and V see weight noise only; K and the attention logits see input
  /// noise only; every other product carries both.
  static NoiseInjectionPolicy attention_split();
  static NoiseInjectionPolicy none();

  [[nodiscard]] noise::NoiseParams params_for(Op op, const noise::NoiseParams& base) const;
};

/// Learnable tensors. Row vectors (1 x d) hold biases, gains and offsets.
struct Params {
  struct Block {
    Matrix ln1_g, ln1_b;
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix ln2_g, ln2_b;
    Matrix w1, b1, w2, b2;
  };
  Matrix patch_w, patch_b, pos;
  std::vector<Block> blocks;
  Matrix lnf_g, lnf_b, head_w, head_b;

  [[nodiscard]] std::vector<Matrix*> tensors();
  [[nodiscard]] std::vector<const Matrix*> tensors() const;
  [[nodiscard]] std::vector<std::string> names() const;
  /// Weight matrices get decoupled weight decay; biases, gains, offsets do not.
  [[nodiscard]] std::vector<bool> decay_mask() const;

  /// Same shapes, all zeros.
  [[nodiscard]] Params zeros_like() const;
  void add_scaled(const Params& other, double scale);
};

/// Non-learned statistics used by the noise-aware normalizations.
/// Norm index: 2*l for the pre-attention norm of block l, 2*l+1 for the
/// pre-FFN norm, 2*n_layers for the final norm.
struct NormState {
  std::vector<double> sigma_n_sq;
  /// Running E[x^2] of the input of the linear layer that feeds each norm.
  std::vector<Vector> feed_second_moment;
  double momentum = 0.1;
  bool initialized = false;
};

struct Model {
  ViTConfig config;
  Params params;
  NormState norms;
};

Model init_model(const ViTConfig& cfg, const SeedContext& ctx);

enum class ForwardMode { Exact, NoisyEmulated };

struct CctSettings {
  bool enabled = false;
  training::CCTConfig config;
  double z_tau = 0.0;
  proxy::BankStats banks;
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::Exact;
  NoiseInjectionPolicy policy = NoiseInjectionPolicy::all_products();
  noise::NoiseParams noise{};
  SeedContext chip{};    ///< fabrication identity of the emulated chip
  std::uint64_t pass = 0; ///< forward-pass index for thermal/laser/jitter redraws
  optical::MatmulOptions matmul{};
  optical::CoreGeometry geometry{};
  CctSettings cct{};
  bool keep_cache = true;
};

struct BlockCache {
  Matrix x_in;
  std::vector<training::NalnCache> ln1;
  Matrix h1, q, k, v;
  std::vector<Matrix> attn; ///< per (sample, head) softmax rows, index b * n_heads + h
  Matrix concat, x_mid;
  std::vector<training::NalnCache> ln2;
  Matrix h2, z1, g1, x_out;
};

struct CctBlockTerms {
  int layer = 0;
  int head = 0;
  Eigen::Index sample = 0;
  Matrix grad_logits;    ///< unnormalized d(hinge)/d(scaled logits)
  Matrix grad_variances; ///< unnormalized d(hinge)/d(v)
};

struct ForwardCache {
  Eigen::Index batch = 0;
  Matrix patches;
  Matrix embed;
  std::vector<BlockCache> blocks;
  std::vector<training::NalnCache> lnf;
  Matrix hf, pooled;
  std::vector<CctBlockTerms> cct;
  double cct_hinge_sum = 0.0;
  std::size_t cct_terms = 0;
};

struct ForwardResult {
  Matrix logits; ///< batch x n_classes
  ForwardCache cache;
};

/// images: batch x pixels (row-major image, channel-major if channels > 1).
ForwardResult forward(const Model& model, const Matrix& images, const ForwardOptions& opts);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double cct = 0.0;
};

/// Cross-entropy (batch mean) plus lambda * CCT from the cached forward.
LossBreakdown loss_from(const ForwardResult& fwd, const std::vector<int>& labels,
                        double lambda_cct);

/// Reverse pass for loss_from. Gradients flow through the attention logits
/// and through the variance proxies into Q and K.
Params backward(const Model& model, const ForwardResult& fwd, const std::vector<int>& labels,
                double lambda_cct, const proxy::BankStats& banks);

/// Helpers shared by forward/backward and tests.
Matrix extract_patches(const ViTConfig& cfg, const Matrix& images);
Matrix softmax_rows(const Matrix& s);
double gelu(double x);
double gelu_grad(double x);

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  Matrix images; ///< n x pixels
  std::vector<int> labels;
  int image_size = 0;
  int channels = 1;
  int n_classes = 0;

  [[nodiscard]] Eigen::Index size() const { return images.rows(); }
  [[nodiscard]] Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct SyntheticSpec {
  int n_classes = 4;
  int n_per_class = 64;
  int image_size = 32;
  double separation = 1.0;  ///< blob amplitude; 0 leaves only pixel noise
  double blob_width = 3.0;  ///< blob std in pixels
  double position_jitter = 1.5; ///< per-sample blob centre jitter in pixels
  double pixel_noise = 0.5;
};

/// Class-conditional Gaussian-blob images: class c places a blob at its own
/// centre on a ring around the image centre.
Dataset make_synthetic_dataset(const SeedContext& ctx, const SyntheticSpec& spec);

/// CSV rows "label,p0,p1,...". Values printed with 17 significant digits.
void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path, int image_size, int channels = 1,
                         int n_classes = 0);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  ForwardMode train_mode = ForwardMode::Exact;
  noise::NoiseParams train_noise{};  ///< used by noisy training and the sigma_n proxies
  NoiseInjectionPolicy policy = NoiseInjectionPolicy::all_products();
  optical::MatmulOptions matmul{};
  bool use_cct = false;
  training::CCTConfig cct{};
  noise::NoiseParams eval_noise{};
  int eval_trials = 0; ///< noisy evaluation trials logged per epoch; 0 disables
};

struct AdamState {
  Params m;
  Params v;
  std::uint64_t step = 0;
};

struct TrainState {
  Model model;
  AdamState adam;
  int epoch = 0; ///< epochs completed
  int cct_start = -1; ///< epoch of the first CCT epoch; the tau ramp counts from here
  SeedContext seed;
};

TrainState make_train_state(Model model, const SeedContext& seed);

struct EpochMetrics {
  int epoch = 0;
  double tau = 0.0;
  double mean_loss = 0.0;
  double mean_ce = 0.0;
  double mean_cct = 0.0;
  double clean_acc = 0.0;
  double noisy_mean_acc = 0.0;
  double noisy_best_acc = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&, const TrainState&)>;

/// Runs cfg.epochs more epochs from state.epoch. Deterministic given the state.
std::vector<EpochMetrics> train(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {});

/// One AdamW step with decoupled weight decay.
void adamw_step(Params& params, AdamState& adam, const Params& grads, const TrainConfig& cfg);

/// Recomputes sigma_n^2 for every noise-aware norm from the running input
/// statistics, current weights and the given noise (zero for LN models).
void refresh_sigma_n(Model& model, const noise::NoiseParams& noise,
                     const NoiseInjectionPolicy& policy);

/// Fraction of correct argmax predictions.
double accuracy(const Matrix& logits, const std::vector<int>& labels);

/// Clean accuracy in exact mode.
double evaluate_clean(const Model& model, const Dataset& data);

struct NoisyEvaluation {
  double mean_acc = 0.0;
  double best_acc = 0.0;
  double std_acc = 0.0;
  std::vector<double> per_trial;
};

inline constexpr int kDefaultEvalTrials = 10;

struct EvalOptions {
  NoiseInjectionPolicy policy = NoiseInjectionPolicy::all_products();
  optical::MatmulOptions matmul{};
  optical::CoreGeometry geometry{};
  int threads = 1;
};

/// Trial t emulates chip ctx/trial:t; sigma_n^2 of noise-aware norms is
/// recomputed for `noise` before the trials run.
NoisyEvaluation evaluate_noisy(const Model& model, const Dataset& data,
                               const noise::NoiseParams& noise, int trials,
                               const SeedContext& ctx, const EvalOptions& opts = {});

// ---------------------------------------------------------------------------
// Checkpoints: one binary matrix container per tensor plus manifest.json.

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir);

} // namespace mrsim::vit
