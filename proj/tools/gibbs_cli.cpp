// gibbs: train, evaluate, sample and analyze exponential-family auto-encoders.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "gibbs/data_io.hpp"
#include "gibbs/entropy.hpp"
#include "gibbs/error.hpp"
#include "gibbs/nets.hpp"
#include "gibbs/symmetry.hpp"
#include "gibbs/trainer.hpp"
#include "gibbs/variational.hpp"

#ifndef GIBBS_BUILD_ID
#define GIBBS_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gibbs;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Declares outputs up front, then records what was written.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir, json config, std::uint64_t seed)
      : out_dir_(std::move(out_dir)) {
    fs::create_directories(out_dir_);
    doc_ = {{"command", std::move(command)}, {"config", std::move(config)},  {"seed", seed},
            {"build_id", GIBBS_BUILD_ID},    {"output_dir", out_dir_.string()}, {"started", now_iso()},
            {"outputs", json::array()},      {"status", "running"}};
    write();
  }

  std::string path(const std::string& name) {
    const std::string p = (out_dir_ / name).string();
    add(p);
    return p;
  }

  void add(const std::string& p) {
    const std::string rel = fs::path(p).lexically_relative(out_dir_).string();
    for (const auto& o : doc_["outputs"])
      if (o == rel) return;
    doc_["outputs"].push_back(rel);
    write();
  }

  void finish(const std::string& status) {
    doc_["status"] = status;
    doc_["finished"] = now_iso();
    write();
  }

 private:
  void write() {
    std::ofstream out(out_dir_ / "manifest.json");
    out << doc_.dump(2) << '\n';
  }

  fs::path out_dir_;
  json doc_;
};

// ---- flat key=value configuration ----

const std::vector<std::string> kConfigKeys = {
    "arch", "latent_family", "input_dim", "encoder_hidden", "latent_dim", "decoder_hidden",
    "classifier_hidden", "classes", "dual_recon", "share_decoders", "weight_generative",
    "weight_reconstruction", "weight_classifier", "weight_dual", "lr", "decay_epochs", "decay",
    "batch_size", "eval_batch_size", "epochs", "seed", "beta1", "beta2", "adam_eps",
    "checkpoint_every", "binarization", "train_limit", "test_limit", "data_dir"};

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + v + "' is not a number");
  }
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d < 0 || d != std::floor(d)) throw ConfigError("config key " + key + ": expected a non-negative integer");
  return static_cast<std::size_t>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": expected on|off");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(to_size(key, item));
  }
  return out;
}

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::optional<Binarization> binarization;  // nullopt: keep gray levels
  std::optional<std::size_t> train_limit, test_limit;
  std::string data_dir;
};

RunConfig build_run_config(const std::map<std::string, std::string>& kv) {
  RunConfig rc;
  rc.model.encoder_hidden = {700};
  rc.model.latent_dim = 400;
  rc.model.decoder_hidden = {700};
  rc.model.classifier_hidden = {700, 700, 700};
  rc.train.learning_rate = 2e-4;
  rc.train.decay_epochs = 500;
  rc.train.batch_size = 1000;
  rc.train.epochs = 10;
  bool binarization_set = false;
  try {
    for (const auto& [k, v] : kv) {
      if (k == "arch") rc.model.arch = parse_architecture(v);
      else if (k == "latent_family") rc.model.family = parse_latent_family(v);
      else if (k == "input_dim") rc.model.input_dim = to_size(k, v);
      else if (k == "encoder_hidden") rc.model.encoder_hidden = to_sizes(k, v);
      else if (k == "latent_dim") rc.model.latent_dim = to_size(k, v);
      else if (k == "decoder_hidden") rc.model.decoder_hidden = to_sizes(k, v);
      else if (k == "classifier_hidden") rc.model.classifier_hidden = to_sizes(k, v);
      else if (k == "classes") rc.model.classes = to_size(k, v);
      else if (k == "dual_recon") rc.model.dual_recon = to_bool(k, v);
      else if (k == "share_decoders") rc.model.share_decoders = to_bool(k, v);
      else if (k == "weight_generative") rc.model.weights.generative = to_double(k, v);
      else if (k == "weight_reconstruction") rc.model.weights.reconstruction = to_double(k, v);
      else if (k == "weight_classifier") rc.model.weights.classifier = to_double(k, v);
      else if (k == "weight_dual") rc.model.weights.dual = to_double(k, v);
      else if (k == "lr") rc.train.learning_rate = to_double(k, v);
      else if (k == "decay_epochs") rc.train.decay_epochs = to_double(k, v);
      else if (k == "decay") rc.train.decay = parse_decay_law(v);
      else if (k == "batch_size") rc.train.batch_size = to_size(k, v);
      else if (k == "eval_batch_size") rc.train.eval_batch_size = to_size(k, v);
      else if (k == "epochs") rc.train.epochs = to_size(k, v);
      else if (k == "seed") rc.train.seed = to_size(k, v);
      else if (k == "beta1") rc.train.beta1 = to_double(k, v);
      else if (k == "beta2") rc.train.beta2 = to_double(k, v);
      else if (k == "adam_eps") rc.train.adam_eps = to_double(k, v);
      else if (k == "checkpoint_every") rc.train.checkpoint_every = to_size(k, v);
      else if (k == "binarization") {
        binarization_set = true;
        if (v != "none") rc.binarization = parse_binarization(v);
      } else if (k == "train_limit") rc.train_limit = to_size(k, v);
      else if (k == "test_limit") rc.test_limit = to_size(k, v);
      else if (k == "data_dir") rc.data_dir = v;
      else throw ConfigError("unknown key '" + k + "'");
    }
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  rc.model.seed = rc.train.seed;
  if (!binarization_set)
    rc.binarization = rc.model.has_autoencoder() ? Binarization::Stochastic : Binarization::Threshold;
  try {
    rc.train.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

json run_config_json(const RunConfig& rc) {
  return {{"model", rc.model.to_json()},
          {"train", rc.train.to_json()},
          {"binarization", rc.binarization ? to_string(*rc.binarization) : "none"},
          {"train_limit", rc.train_limit ? json(*rc.train_limit) : json()},
          {"test_limit", rc.test_limit ? json(*rc.test_limit) : json()},
          {"data_dir", rc.data_dir}};
}

std::string resolve_data_dir(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("GIBBS_DATA_DIR")) return env;
  throw ConfigError("no data directory: pass --data-dir or set GIBBS_DATA_DIR");
}

Dataset load_split(const std::string& dir, const std::string& split, std::optional<std::size_t> limit) {
  try {
    return load_mnist(dir, split, limit);
  } catch (const ParseError& e) {
    throw DataError(e.what());
  }
}

void prepare(Dataset& d, const std::optional<Binarization>& mode, std::uint64_t seed) {
  if (mode) d.images = binarize(d.images, *mode, seed);
}

// ---- commands ----

struct TrainArgs {
  std::string config, data_dir, out_dir;
  std::map<std::string, std::string> overrides;
};

int cmd_train(const TrainArgs& a) {
  auto kv = a.config.empty() ? std::map<std::string, std::string>{} : read_config_file(a.config);
  for (const auto& [k, v] : a.overrides) kv[k] = v;
  RunConfig rc = build_run_config(kv);
  rc.data_dir = resolve_data_dir(a.data_dir.empty() ? rc.data_dir : a.data_dir);
  rc.train.out_dir = a.out_dir;
  Manifest manifest("train", a.out_dir, run_config_json(rc), rc.train.seed);
  for (const char* f : {"metrics.jsonl", "timing.jsonl", "model.ckpt"}) manifest.path(f);

  Dataset tr = load_split(rc.data_dir, "train", rc.train_limit);
  Dataset te = load_split(rc.data_dir, "test", rc.test_limit);
  prepare(tr, rc.binarization, mix64(rc.train.seed ^ 0xB1AULL));
  prepare(te, rc.binarization, mix64(rc.train.seed ^ 0xB1BULL));
  rc.model.input_dim = tr.images.cols();
  AceModel model(rc.model);
  std::cerr << "model: " << to_string(rc.model.arch) << ", " << model.parameter_count()
            << " parameters, " << tr.size() << " train / " << te.size() << " test observations\n";
  try {
    const auto res = train(model, tr, &te, rc.train, [](const EpochMetrics& m) {
      std::cerr << "epoch " << m.epoch << " lr " << m.learning_rate << " train " << m.train.loss.total;
      if (m.test) {
        std::cerr << " test " << m.test->loss.total;
        if (m.test->classification_error) std::cerr << " test_error " << *m.test->classification_error;
      }
      std::cerr << '\n';
    });
    for (const auto& f : res.files) manifest.add(f);
  } catch (const TrainingAborted&) {
    manifest.add((fs::path(a.out_dir) / "abort.json").string());
    manifest.finish("aborted");
    throw;
  }
  manifest.finish("ok");
  return kOk;
}

AceModel open_checkpoint(const std::string& path, json* desc) {
  try {
    return load_checkpoint(path, desc);
  } catch (const ParseError& e) {
    throw DataError(e.what());
  }
}

int cmd_eval(const std::string& ckpt, const std::string& split, const std::string& data_dir,
             const std::string& out_dir, std::optional<std::size_t> limit, std::size_t dvar_rows,
             std::size_t dvar_samples) {
  json desc;
  AceModel model = open_checkpoint(ckpt, &desc);
  const std::uint64_t seed = model.config().seed;
  Manifest manifest("eval", out_dir, {{"checkpoint", ckpt}, {"split", split}, {"descriptor", desc}}, seed);
  const std::string report = manifest.path("eval.json");
  const std::string csv = dvar_rows ? manifest.path("cross_entropy.csv") : "";
  Dataset d = load_split(resolve_data_dir(data_dir), split, limit);
  prepare(d, model.config().has_autoencoder() ? Binarization::Stochastic : Binarization::Threshold,
          mix64(seed ^ (split == "train" ? 0xB1AULL : 0xB1BULL)));
  const EvalResult r = evaluate(model, d, 1000, mix64(seed ^ 0xE7A1ULL));
  json j = {{"split", split}, {"observations", d.size()}, {"loss", r.loss.to_json()}};
  j["classification_error"] = r.classification_error ? json(*r.classification_error) : json();
  if (dvar_rows && model.config().has_autoencoder()) {
    Rng rng(mix64(seed ^ 0xD7A2ULL));
    std::vector<CrossEntropyRow> rows;
    const std::size_t n = std::min(dvar_rows, d.size());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = model.config().decoder_count() > 1 ? static_cast<std::size_t>(d.labels[i]) : 0;
      AceLatentModel lm(model, c);
      const auto e = estimate_dvar(lm, d.images.row(i), dvar_samples, rng);
      rows.push_back({i, e.bound, e.dvar, e.bound - e.dvar, e.standard_error});
    }
    write_cross_entropy_csv(rows, csv);
    double mean_dvar = 0.0;
    for (const auto& row : rows) mean_dvar += row.dvar / static_cast<double>(rows.size());
    j["mean_dvar"] = mean_dvar;
  }
  std::ofstream(report) << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  manifest.finish("ok");
  return kOk;
}

int cmd_generate(const std::string& ckpt, const std::string& out_dir, std::optional<std::size_t> only_class,
                 std::size_t grid, std::size_t samples, std::uint64_t seed) {
  json desc;
  AceModel model = open_checkpoint(ckpt, &desc);
  const auto& cfg = model.config();
  if (!cfg.has_autoencoder()) throw ConfigError("checkpoint has no decoder to generate from");
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(cfg.input_dim))));
  if (side * side != cfg.input_dim) throw ConfigError("input dimension is not a square image");
  Manifest manifest("generate", out_dir,
                    {{"checkpoint", ckpt}, {"grid", grid}, {"samples", samples},
                     {"class", only_class ? json(*only_class) : json()}},
                    seed);
  const std::string pgm = manifest.path(grid ? "grid.pgm" : "samples.pgm");
  std::vector<std::size_t> classes;
  if (only_class) {
    if (*only_class >= cfg.decoder_count()) throw ConfigError("class out of range for this checkpoint");
    classes.push_back(*only_class);
  } else {
    for (std::size_t c = 0; c < cfg.decoder_count(); ++c) classes.push_back(c);
  }
  const std::size_t per = grid ? grid : samples;
  if (per == 0) throw ConfigError("pass --grid N or --samples K");
  Tensor all({classes.size() * per, cfg.input_dim});
  Rng rng(seed);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const Tensor imgs = grid ? generate(model, classes[k], latent_grid(cfg.latent_dim, grid))
                             : generate_samples(model, classes[k], samples, rng);
    std::copy(imgs.data().begin(), imgs.data().end(), all.row(k * per).begin());
  }
  write_pgm_grid(pgm, all, side, per);
  manifest.finish("ok");
  return kOk;
}

int cmd_analyze(const std::string& what, const std::string& data_dir, const std::string& split,
                const std::string& out_dir, std::optional<std::size_t> limit, int cls, std::size_t k,
                std::optional<double> ridge) {
  if (what != "entropy" && what != "intricates" && what != "qq" && what != "kurtosis")
    throw ConfigError("analysis must be one of entropy|intricates|qq|kurtosis");
  Manifest manifest("analyze", out_dir,
                    {{"analysis", what}, {"split", split}, {"limit", limit ? json(*limit) : json()},
                     {"class", cls}, {"k", k}, {"ridge", ridge ? json(*ridge) : json()}},
                    0);
  std::vector<std::string> outputs;
  if (what == "entropy") outputs = {"entropy.csv"};
  if (what == "intricates") outputs = {"intricates.csv", "intricates.pgm", "conjugates.pgm"};
  if (what == "qq") outputs = {"qq.csv"};
  if (what == "kurtosis") outputs = {"kurtosis.json"};
  for (auto& o : outputs) o = manifest.path(o);

  const Dataset d = load_split(resolve_data_dir(data_dir), split, limit);
  const EntropyReport rep = einstein_entropy(d.images, ridge);
  if (what == "entropy") {
    std::ofstream out(outputs[0]);
    out.precision(12);
    out << "observation,label,neg_log_lik,entropy_rank\n";
    std::vector<std::size_t> rank(d.size());
    for (std::size_t r = 0; r < rep.ranking.size(); ++r) rank[rep.ranking[r]] = r;
    for (std::size_t i = 0; i < d.size(); ++i)
      out << i << ',' << d.labels[i] << ',' << rep.neg_log_lik[i] << ',' << rank[i] << '\n';
  } else if (what == "intricates") {
    const auto idx = intricates(rep, d.labels, cls, k);
    std::ofstream out(outputs[0]);
    out.precision(12);
    out << "observation,neg_log_lik\n";
    for (auto i : idx) out << i << ',' << rep.neg_log_lik[i] << '\n';
    Tensor imgs({idx.size(), d.images.cols()});
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::copy(d.images.row(idx[r]).begin(), d.images.row(idx[r]).end(), imgs.row(r).begin());
    write_pgm_grid(outputs[1], imgs, d.side, 10);
    // Signed unit conjugates are mapped to gray levels around 0.5.
    Tensor conj = unit_conjugates(d.images, rep, idx);
    for (std::size_t r = 0; r < conj.rows(); ++r) {
      double mx = 0.0;
      for (double v : conj.row(r)) mx = std::max(mx, std::abs(v));
      for (auto& v : conj.row(r)) v = mx > 0 ? 0.5 + 0.5 * v / mx : 0.5;
    }
    write_pgm_grid(outputs[2], conj, d.side, 10);
  } else if (what == "qq") {
    qq_export(rep.neg_log_lik, outputs[0]);
    const auto pts = qq_points(rep.neg_log_lik);
    double tail = -1e300;
    for (const auto& p : pts) tail = std::max(tail, p.empirical_quantile - p.gaussian_quantile);
    std::cout << "max empirical minus Gaussian quantile: " << tail << '\n';
  } else {
    const double n = static_cast<double>(d.images.cols());
    json j = {{"kurtosis", rep.kurtosis}, {"gaussian_reference", n * (n + 2.0)}, {"ridge", rep.ridge}};
    std::ofstream(outputs[0]) << j.dump(2) << '\n';
    std::cout << j.dump(2) << '\n';
  }
  manifest.finish("ok");
  return kOk;
}

int cmd_canonicalize(const std::string& data_dir, const std::string& split, const std::string& out_dir,
                     std::size_t limit, std::optional<double> scale_constant, double r_min) {
  Manifest manifest("canonicalize", out_dir,
                    {{"split", split}, {"limit", limit}, {"scale_constant", scale_constant ? json(*scale_constant) : json()},
                     {"r_min", r_min}},
                    0);
  const std::string csv = manifest.path("symmetry_stats.csv");
  const std::string orig = manifest.path("original.pgm");
  const std::string canon = manifest.path("canonical.pgm");
  const std::string back = manifest.path("restored.pgm");
  const Dataset d = load_split(resolve_data_dir(data_dir), split, limit);
  const std::size_t m = default_half_width(d.side);
  const double c = scale_constant.value_or(default_scale_constant(d.side));
  const std::size_t frame = 2 * m + 1;
  std::ofstream out(csv);
  out.precision(12);
  out << "observation,label,h,v,r,phi,recovered_mass\n";
  Tensor originals({d.size(), d.side * d.side}), canonicals({d.size(), frame * frame}),
      restored({d.size(), d.side * d.side});
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Tensor img({d.side, d.side}, std::vector<double>(d.images.row(i).begin(), d.images.row(i).end()));
    std::copy(img.data().begin(), img.data().end(), originals.row(i).begin());
    SymmetryStats s;
    try {
      s = symmetry_stats(img);
      const CanonicalMap map = build_canonical_map(d.side, s, c, m, r_min);
      const Tensor can = canonicalize(img, map);
      const Tensor inv = inverse_canonicalize(can, map);
      std::copy(can.data().begin(), can.data().end(), canonicals.row(i).begin());
      std::copy(inv.data().begin(), inv.data().end(), restored.row(i).begin());
      out << i << ',' << d.labels[i] << ',' << s.h << ',' << s.v << ',' << s.r << ',' << s.phi << ','
          << recovered_mass(inv, img) << '\n';
    } catch (const DomainError& e) {
      out << i << ',' << d.labels[i] << ",,,,,\n";
    }
  }
  write_pgm_grid(orig, originals, d.side, 10);
  write_pgm_grid(canon, canonicals, frame, 10);
  write_pgm_grid(back, restored, d.side, 10);
  manifest.finish("ok");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gibbs: exponential-family auto-encoders, ACE classifiers and entropy analytics"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model and log per-epoch metrics");
  train_cmd->add_option("-c,--config", ta.config, "flat key=value config file");
  train_cmd->add_option("--data-dir", ta.data_dir, "MNIST directory (default: $GIBBS_DATA_DIR)");
  train_cmd->add_option("-o,--out", ta.out_dir, "output directory")->required();
  std::map<std::string, std::string> flag_values;
  const std::vector<std::pair<std::string, std::string>> train_flags = {
      {"--lr", "lr"},           {"--batch-size", "batch_size"}, {"--latent-family", "latent_family"},
      {"--arch", "arch"},       {"--epochs", "epochs"},         {"--seed", "seed"},
      {"--decay-epochs", "decay_epochs"}, {"--dual-recon", "dual_recon"},
      {"--latent-dim", "latent_dim"},     {"--train-limit", "train_limit"},
      {"--test-limit", "test_limit"},     {"--binarization", "binarization"}};
  for (const auto& [flag, key] : train_flags)
    train_cmd->add_option(flag, flag_values[key], "overrides config key " + key);

  std::string ckpt, split = "test", data_dir, out_dir;
  std::size_t limit = 0, dvar_rows = 0, dvar_samples = kDefaultVarSamples;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a data split");
  eval_cmd->add_option("--checkpoint", ckpt)->required();
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--data-dir", data_dir);
  eval_cmd->add_option("-o,--out", out_dir)->required();
  eval_cmd->add_option("--limit", limit, "first observations only (0: all)");
  eval_cmd->add_option("--dvar-rows", dvar_rows, "estimate the variational error on this many observations");
  eval_cmd->add_option("--dvar-samples", dvar_samples);

  std::size_t gen_class = 0, grid = 0, samples = 0;
  std::uint64_t gen_seed = 1;
  auto* gen_cmd = app.add_subcommand("generate", "decode prior samples or a latent grid");
  gen_cmd->add_option("--checkpoint", ckpt)->required();
  gen_cmd->add_option("-o,--out", out_dir)->required();
  auto* class_opt = gen_cmd->add_option("--class", gen_class, "single class (default: all)");
  gen_cmd->add_option("--grid", grid, "points of the deterministic grid on [-6, 6]");
  gen_cmd->add_option("--samples", samples, "prior samples per class");
  gen_cmd->add_option("--seed", gen_seed);

  std::string what, analyze_split = "train";
  int cls = 8;
  std::size_t k = 30;
  double ridge_value = 0.0;
  auto* an_cmd = app.add_subcommand("analyze", "observation entropy analytics");
  an_cmd->add_option("analysis", what, "entropy|intricates|qq|kurtosis")->required();
  an_cmd->add_option("--data-dir", data_dir);
  an_cmd->add_option("--split", analyze_split)->check(CLI::IsMember({"train", "test"}));
  an_cmd->add_option("-o,--out", out_dir)->required();
  an_cmd->add_option("--limit", limit);
  an_cmd->add_option("--class", cls);
  an_cmd->add_option("-k", k);
  auto* ridge_opt = an_cmd->add_option("--ridge", ridge_value, "covariance ridge (default 1e-6 trace/N)");

  double scale_constant = 0.0, r_min = kDefaultMinScale;
  std::size_t canon_limit = 100;
  auto* can_cmd = app.add_subcommand("canonicalize", "symmetry statistics and canonical images");
  can_cmd->add_option("--data-dir", data_dir);
  can_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));
  can_cmd->add_option("-o,--out", out_dir)->required();
  can_cmd->add_option("--limit", canon_limit);
  auto* c_opt = can_cmd->add_option("--scale-constant", scale_constant);
  can_cmd->add_option("--r-min", r_min);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  const auto opt_limit = [&]() -> std::optional<std::size_t> {
    return limit ? std::optional<std::size_t>(limit) : std::nullopt;
  };
  try {
    if (*train_cmd) {
      for (const auto& [key, v] : flag_values)
        if (!v.empty()) ta.overrides[key] = v;
      return cmd_train(ta);
    }
    if (*eval_cmd) return cmd_eval(ckpt, split, data_dir, out_dir, opt_limit(), dvar_rows, dvar_samples);
    if (*gen_cmd)
      return cmd_generate(ckpt, out_dir, class_opt->count() ? std::optional<std::size_t>(gen_class) : std::nullopt,
                          grid, samples, gen_seed);
    if (*an_cmd)
      return cmd_analyze(what, data_dir, analyze_split, out_dir, opt_limit(), cls, k,
                         ridge_opt->count() ? std::optional<double>(ridge_value) : std::nullopt);
    if (*can_cmd)
      return cmd_canonicalize(data_dir, split, out_dir, canon_limit,
                              c_opt->count() ? std::optional<double>(scale_constant) : std::nullopt, r_min);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
