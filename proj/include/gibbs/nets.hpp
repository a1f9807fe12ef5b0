#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gibbs/autodiff.hpp"
#include "gibbs/exp_family.hpp"

namespace gibbs {

enum class Architecture { Ace, Vae, Classifier, AceNonGen };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

enum class LayerKind { Affine, Tanh, Sigmoid, Maxout2, BatchNorm };

struct LayerSpec {
  LayerKind kind;
  std::size_t in_dim;
  std::size_t out_dim;
};

struct LossWeights {
  double generative = 1.0;
  double reconstruction = 1.0;
  double classifier = 1.0;
  double dual = 1.0;
};

struct ModelConfig {
  Architecture arch = Architecture::Vae;
  LatentFamily family = LatentFamily::Gaussian;
  std::size_t input_dim = 784;
  std::vector<std::size_t> encoder_hidden{200};
  std::size_t latent_dim = 20;
  std::vector<std::size_t> decoder_hidden{200};
  std::vector<std::size_t> classifier_hidden{200, 200};
  std::size_t classes = 10;
  bool dual_recon = false;
  bool share_decoders = false;
  LossWeights weights;
  std::uint64_t seed = 1;

  bool has_autoencoder() const { return arch == Architecture::Ace || arch == Architecture::Vae; }
  bool has_classifier() const { return arch != Architecture::Vae; }
  /// Separate latent heads and decoders per class (ACE); a VAE has one.
  std::size_t decoder_count() const;
  bool uses_dual() const { return arch == Architecture::AceNonGen || (dual_recon && has_classifier()); }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Dense {
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]
};

/// Auto-classifier-encoder: shared tanh encoder, per-class (mu, log sigma) heads and sigmoid
/// decoders, and a separate maxout classifier with batch normalization on its first and
/// last hidden layers.
class AceModel {
 public:
  explicit AceModel(ModelConfig config, bool initialize = true);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  Parameter* find(const std::string& name);
  bool initialized() const { return initialized_; }
  void mark_initialized() { initialized_ = true; }

  /// Layer stacks of one branch, for documentation and checkpoint descriptors.
  std::vector<LayerSpec> encoder_layers() const;
  std::vector<LayerSpec> decoder_layers() const;
  std::vector<LayerSpec> classifier_layers() const;

  // Graph builders. `train` attaches parameters as gradient leaves; otherwise they are
  // referenced as constants.
  Var encode(Graph& g, Var x, bool train);
  /// (mu, log sigma) heads of class c.
  std::pair<Var, Var> latent(Graph& g, Var h, std::size_t c, bool train);
  /// Sigmoid output of decoder c.
  Var decode(Graph& g, Var z, std::size_t c, bool train);
  /// Classifier logits; `first_hidden` receives the batch-normalized first hidden layer.
  Var classifier_logits(Graph& g, Var x, bool train, Var* first_hidden = nullptr);

 private:
  Var param(Graph& g, Parameter& p, bool train);
  Var affine(Graph& g, Var x, Dense& d, bool train);
  std::size_t decoder_index(std::size_t c) const;

  ModelConfig config_;
  std::vector<Dense> encoder_;
  std::vector<Dense> mu_heads_, logsigma_heads_;
  std::vector<std::vector<Dense>> decoders_;
  std::vector<Dense> classifier_;
  bool initialized_ = false;
};

struct LossBreakdown {
  double generative = 0.0;
  double reconstruction = 0.0;
  double classifier = 0.0;
  std::optional<double> dual_reconstruction;
  double total = 0.0;

  nlohmann::json to_json() const;
};

struct LossGraph {
  Var total;
  LossBreakdown parts;
  Var logits;  // classifier logits when the model has a classifier
};

/// Batch mean of per-row sums of clamped binary cross-entropy.
double reconstruction_error(const Tensor& xhat, const Tensor& x, bool require_binary = true);

/// Per-row closed-form KL of (mu, exp(log_sigma)) against the standardized prior. [B,L] -> [B]
Var generative_error_rows(Var mu, Var log_sigma, LatentFamily family);

/// z = mu + exp(log_sigma) * e with e the standardized noise of the uniforms `u`.
Var reparameterize(Var mu, Var log_sigma, const Tensor& u, LatentFamily family);

/// Per-row bound terms of decoder c for given posterior parameters: returns (KL rows, BCE rows).
std::pair<Var, Var> bound_rows(Graph& g, AceModel& model, Var mu, Var log_sigma, const Tensor& x,
                               const Tensor& u, std::size_t c, bool train);

/// Evidence bound, one reparameterized sample per row. Multi-decoder models need labels.
LossGraph vae_bound(Graph& g, AceModel& model, const Tensor& x, const Tensor& u,
                    const std::vector<int>* labels = nullptr, bool train = true);

/// Labeled ACE objective: bound routed through each row's class + classifier term
/// (+ dual reconstruction when enabled). Also serves the classifier-only architectures.
LossGraph ace_loss(Graph& g, AceModel& model, const Tensor& x, const std::vector<int>& labels,
                   const Tensor& u, bool train = true);

/// Unlabeled test bound: classifier weights mix the per-class generative and reconstruction terms.
LossBreakdown ace_test_bound(AceModel& model, const Tensor& x, const Tensor& u);

/// (1/B) sum over observables of BCE(sigmoid(H H^T X / B), X).
Var dual_reconstruction_error(Var H, const Tensor& X);
double dual_reconstruction_error(const Tensor& H, const Tensor& X);

Tensor classify(AceModel& model, const Tensor& x);
/// Decoder c applied to latent points z [K, L]; returns [K, N] pixel probabilities.
Tensor generate(AceModel& model, std::size_t c, const Tensor& z);
/// K prior draws decoded by decoder c.
Tensor generate_samples(AceModel& model, std::size_t c, std::size_t count, Rng& rng);
/// Equally spaced points in [lo, hi] on every latent coordinate jointly (diagonal grid for L > 1).
Tensor latent_grid(std::size_t dimension, std::size_t points, double lo = -6.0, double hi = 6.0);

/// Uniform noise for reparameterized sampling, shape [rows, latent_dim].
Tensor uniform_noise(std::size_t rows, std::size_t cols, Rng& rng);

// Checkpoints: "GIBBSCKP", u32 version, u64 + JSON descriptor, u64 tensor count, then per
// tensor u32 name length, name, u32 rank, u64 dims, f64 data; all little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::string& path, const AceModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());
AceModel load_checkpoint(const std::string& path, nlohmann::json* descriptor = nullptr);

}  // namespace gibbs
