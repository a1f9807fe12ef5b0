#include "gibbs/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gibbs/error.hpp"

namespace gibbs {

std::string to_string(DecayLaw law) {
  switch (law) {
    case DecayLaw::Hyperbolic: return "hyperbolic";
    case DecayLaw::Step: return "step";
    case DecayLaw::Exponential: return "exponential";
  }
  return "?";
}

DecayLaw parse_decay_law(const std::string& name) {
  if (name == "hyperbolic") return DecayLaw::Hyperbolic;
  if (name == "step") return DecayLaw::Step;
  if (name == "exponential") return DecayLaw::Exponential;
  throw ContractError("unknown decay law '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (!(decay_epochs > 0.0)) throw ContractError("decay epochs must be positive");
  if (batch_size == 0 || eval_batch_size == 0) throw ContractError("batch size must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0))
    throw ContractError("Adam hyperparameters out of range");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"decay_epochs", decay_epochs},
          {"decay", to_string(decay)},      {"batch_size", batch_size},
          {"eval_batch_size", eval_batch_size}, {"epochs", epochs},
          {"seed", seed},                   {"beta1", beta1},
          {"beta2", beta2},                 {"adam_eps", adam_eps},
          {"checkpoint_every", checkpoint_every}};
}

double learning_rate_at(const TrainConfig& c, std::size_t epoch) {
  const double e = static_cast<double>(epoch);
  switch (c.decay) {
    case DecayLaw::Hyperbolic: return c.learning_rate * c.decay_epochs / (c.decay_epochs + e);
    case DecayLaw::Step: return c.learning_rate * std::pow(0.5, std::floor(e / c.decay_epochs));
    case DecayLaw::Exponential: return c.learning_rate * std::exp(-e / c.decay_epochs);
  }
  return c.learning_rate;
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw ContractError("Adam state does not match the parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.grad.same_shape(p.value)) throw DimensionError("gradient shape differs from " + p.name);
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

namespace {

constexpr std::uint64_t kEvalStream = 0xE7A1ULL;

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void add_scaled(LossBreakdown& acc, const LossBreakdown& x, double w) {
  acc.generative += w * x.generative;
  acc.reconstruction += w * x.reconstruction;
  acc.classifier += w * x.classifier;
  acc.total += w * x.total;
  if (x.dual_reconstruction) acc.dual_reconstruction = acc.dual_reconstruction.value_or(0.0) + w * *x.dual_reconstruction;
}

nlohmann::json eval_json(const EvalResult& r) {
  nlohmann::json j = r.loss.to_json();
  j["classification_error"] = r.classification_error ? nlohmann::json(*r.classification_error) : nlohmann::json();
  return j;
}

}  // namespace

EvalResult evaluate(AceModel& model, const Dataset& data, std::size_t batch_size, std::uint64_t noise_seed) {
  const auto& cfg = model.config();
  if (data.size() == 0) throw ContractError("cannot evaluate an empty dataset");
  EvalResult out;
  std::size_t wrong = 0;
  Rng noise(noise_seed);
  // Batch normalization needs two rows, so a one-row remainder joins the previous batch.
  std::vector<std::vector<std::size_t>> chunks;
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(data.size(), b + batch_size); ++i) idx.push_back(i);
    if (idx.size() < 2 && !chunks.empty()) chunks.back().insert(chunks.back().end(), idx.begin(), idx.end());
    else chunks.push_back(std::move(idx));
  }
  for (const auto& idx : chunks) {
    const Batch batch = make_batch(data, idx);
    const double w = static_cast<double>(idx.size()) / static_cast<double>(data.size());
    LossBreakdown part;
    if (cfg.has_autoencoder()) {
      const Tensor u = uniform_noise(idx.size(), cfg.latent_dim, noise);
      part = ace_test_bound(model, batch.images, u);
    }
    if (cfg.has_classifier()) {
      Graph g;
      Var first;
      Var logits = model.classifier_logits(g, g.constant_ref(batch.images), false, &first);
      part.classifier = mean(softmax_xent_rows(logits, batch.labels)).value().item();
      part.total += cfg.weights.classifier * part.classifier;
      if (cfg.uses_dual()) {
        part.dual_reconstruction = dual_reconstruction_error(first.value(), batch.images);
        part.total += cfg.weights.dual * *part.dual_reconstruction;
      }
      const Tensor& lv = logits.value();
      for (std::size_t i = 0; i < idx.size(); ++i)
        wrong += static_cast<int>(argmax(lv.row(i))) != batch.labels[i];
    }
    add_scaled(out.loss, part, w);
  }
  if (cfg.has_classifier()) out.classification_error = static_cast<double>(wrong) / static_cast<double>(data.size());
  return out;
}

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::json j = {{"epoch", epoch}, {"lr", learning_rate}, {"train", eval_json(train)}};
  j["test"] = test ? eval_json(*test) : nlohmann::json();
  return j;
}

TrainResult train(AceModel& model, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  namespace fs = std::filesystem;
  const auto& cfg = model.config();
  TrainResult result;
  std::ofstream metrics, timing;
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    const std::string mp = (fs::path(config.out_dir) / "metrics.jsonl").string();
    const std::string tp = (fs::path(config.out_dir) / "timing.jsonl").string();
    metrics.open(mp);
    timing.open(tp);
    if (!metrics || !timing) throw std::runtime_error("cannot write metrics into " + config.out_dir);
    result.files.push_back(mp);
    result.files.push_back(tp);
  }
  const std::uint64_t eval_seed = mix64(config.seed ^ kEvalStream);
  const auto start = std::chrono::steady_clock::now();

  auto record = [&](EpochMetrics m) {
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (metrics.is_open()) {
      metrics << m.to_json().dump() << '\n' << std::flush;
      timing << nlohmann::json{{"epoch", m.epoch}, {"wall_seconds", m.wall_seconds}}.dump() << '\n' << std::flush;
    }
    if (on_epoch) on_epoch(m);
    result.history.push_back(std::move(m));
  };
  auto checkpoint = [&](const std::string& name, std::size_t epoch) {
    if (config.out_dir.empty()) return;
    const std::string p = (fs::path(config.out_dir) / name).string();
    save_checkpoint(p, model, {{"epoch", epoch}, {"train", config.to_json()}});
    result.files.push_back(p);
  };

  EpochMetrics initial;
  initial.learning_rate = learning_rate_at(config, 0);
  initial.train = evaluate(model, train_data, config.eval_batch_size, eval_seed);
  if (test_data) initial.test = evaluate(model, *test_data, config.eval_batch_size, eval_seed);
  record(std::move(initial));

  const auto params = model.parameters();
  AdamState adam;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    const auto plan = batch_indices(train_data.size(), config.batch_size, config.seed, epoch);
    EpochMetrics em;
    em.epoch = epoch + 1;
    em.learning_rate = lr;
    std::size_t wrong = 0;
    for (std::size_t bi = 0; bi < plan.size(); ++bi) {
      // A one-row remainder cannot be batch-normalized.
      if (plan[bi].size() < 2 && cfg.has_classifier()) continue;
      const Batch batch = make_batch(train_data, plan[bi]);
      Rng noise = Rng(config.seed).fork(mix64((static_cast<std::uint64_t>(epoch) << 32) ^ bi));
      const Tensor u = cfg.has_autoencoder() ? uniform_noise(plan[bi].size(), cfg.latent_dim, noise) : Tensor();
      for (auto* p : params) p->zero_grad();
      Graph g;
      LossGraph loss = ace_loss(g, model, batch.images, batch.labels, u, true);
      if (!std::isfinite(loss.parts.total)) {
        if (!config.out_dir.empty()) {
          std::ofstream dump(fs::path(config.out_dir) / "abort.json");
          dump << nlohmann::json{{"epoch", epoch + 1}, {"batch", bi}, {"indices", plan[bi]},
                                 {"loss", loss.parts.to_json()}}.dump(2) << '\n';
        }
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(bi),
                              epoch + 1, bi);
      }
      g.backward(loss.total);
      adam_step(params, adam, lr, config.beta1, config.beta2, config.adam_eps);
      add_scaled(em.train.loss, loss.parts,
                 static_cast<double>(plan[bi].size()) / static_cast<double>(train_data.size()));
      if (cfg.has_classifier()) {
        const Tensor& lv = loss.logits.value();
        for (std::size_t i = 0; i < plan[bi].size(); ++i)
          wrong += static_cast<int>(argmax(lv.row(i))) != batch.labels[i];
      }
    }
    if (cfg.has_classifier()) em.train.classification_error = static_cast<double>(wrong) / static_cast<double>(train_data.size());
    if (test_data) em.test = evaluate(model, *test_data, config.eval_batch_size, eval_seed);
    record(std::move(em));
    if (config.checkpoint_every && (epoch + 1) % config.checkpoint_every == 0 && epoch + 1 < config.epochs)
      checkpoint("checkpoint_epoch" + std::to_string(epoch + 1) + ".ckpt", epoch + 1);
  }
  checkpoint("model.ckpt", config.epochs);
  return result;
}

}  // namespace gibbs
