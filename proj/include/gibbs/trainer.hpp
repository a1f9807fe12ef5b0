#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gibbs/data_io.hpp"
#include "gibbs/error.hpp"
#include "gibbs/nets.hpp"

namespace gibbs {

enum class DecayLaw { Hyperbolic, Step, Exponential };

std::string to_string(DecayLaw law);
DecayLaw parse_decay_law(const std::string& name);

struct TrainConfig {
  double learning_rate = 2e-4;
  double decay_epochs = 500.0;
  DecayLaw decay = DecayLaw::Hyperbolic;
  std::size_t batch_size = 1000;
  std::size_t eval_batch_size = 1000;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Write a checkpoint every this many epochs (0: final checkpoint only).
  std::size_t checkpoint_every = 0;
  /// Directory for metrics.jsonl, timing.jsonl and checkpoints; empty disables file output.
  std::string out_dir;

  void validate() const;
  nlohmann::json to_json() const;
};

/// lr at a (0-based) epoch: hyperbolic lr*D/(D+e), step lr/2^floor(e/D), exponential lr*exp(-e/D).
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated gradient.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct EvalResult {
  LossBreakdown loss;
  std::optional<double> classification_error;
};

/// Held-out evaluation over fixed-noise batches. Multi-decoder models use the unlabeled
/// mixture bound; the classifier term uses the labels.
EvalResult evaluate(AceModel& model, const Dataset& data, std::size_t batch_size, std::uint64_t noise_seed);

struct EpochMetrics {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  EvalResult train;
  std::optional<EvalResult> test;
  double wall_seconds = 0.0;

  /// Deterministic part of the record, without wall time.
  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::vector<std::string> files;
};

/// Raised when a batch produces a non-finite loss.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, std::size_t epoch, std::size_t batch)
      : NumericError(what), epoch(epoch), batch(batch) {}
  std::size_t epoch;
  std::size_t batch;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Epoch 0 holds the metrics of the untrained model; epochs 1..E follow each pass, with the
/// train entry averaging the batch losses seen during the pass.
TrainResult train(AceModel& model, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace gibbs
