#include "gibbs/nets.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "gibbs/error.hpp"

namespace gibbs {

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::Ace: return "ace";
    case Architecture::Vae: return "vae";
    case Architecture::Classifier: return "classifier";
    case Architecture::AceNonGen: return "ace-nongen";
  }
  return "?";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "ace") return Architecture::Ace;
  if (name == "vae") return Architecture::Vae;
  if (name == "classifier") return Architecture::Classifier;
  if (name == "ace-nongen") return Architecture::AceNonGen;
  throw ContractError("unknown architecture '" + name + "'");
}

std::size_t ModelConfig::decoder_count() const {
  switch (arch) {
    case Architecture::Ace: return classes;
    case Architecture::Vae: return 1;
    default: return 0;
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"arch", to_string(arch)},
          {"latent_family", to_string(family)},
          {"input_dim", input_dim},
          {"encoder_hidden", encoder_hidden},
          {"latent_dim", latent_dim},
          {"decoder_hidden", decoder_hidden},
          {"classifier_hidden", classifier_hidden},
          {"classes", classes},
          {"dual_recon", dual_recon},
          {"share_decoders", share_decoders},
          {"weights",
           {{"generative", weights.generative},
            {"reconstruction", weights.reconstruction},
            {"classifier", weights.classifier},
            {"dual", weights.dual}}},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.arch = parse_architecture(j.at("arch").get<std::string>());
  c.family = parse_latent_family(j.at("latent_family").get<std::string>());
  c.input_dim = j.at("input_dim");
  c.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
  c.latent_dim = j.at("latent_dim");
  c.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
  c.classifier_hidden = j.at("classifier_hidden").get<std::vector<std::size_t>>();
  c.classes = j.at("classes");
  c.dual_recon = j.at("dual_recon");
  c.share_decoders = j.at("share_decoders");
  const auto& w = j.at("weights");
  c.weights = {w.at("generative"), w.at("reconstruction"), w.at("classifier"), w.at("dual")};
  c.seed = j.at("seed");
  return c;
}

namespace {

Dense make_dense(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed,
                 bool initialize) {
  Dense d;
  d.weight = Parameter(name + ".weight", initialize ? init_weights(in, out, seed) : Tensor({in, out}));
  d.bias = Parameter(name + ".bias", Tensor({out}));
  return d;
}

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t w = t.cols();
  Tensor out({rows.size(), w});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = t.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

AceModel::AceModel(ModelConfig config, bool initialize) : config_(std::move(config)) {
  const auto& c = config_;
  if (c.input_dim == 0 || (c.has_autoencoder() && c.latent_dim == 0))
    throw ContractError("model dimensions must be positive");
  if (c.has_classifier() && (c.classes < 2 && c.arch != Architecture::Ace))
    throw ContractError("a classifier needs at least two classes");
  if (c.classes == 0) throw ContractError("class count must be positive");
  std::uint64_t layer = 0;
  auto next_seed = [&] { return mix64(c.seed + 0x9E3779B97F4A7C15ULL * ++layer); };

  if (c.has_autoencoder()) {
    std::size_t prev = c.input_dim;
    for (std::size_t i = 0; i < c.encoder_hidden.size(); ++i) {
      encoder_.push_back(make_dense("encoder." + std::to_string(i), prev, c.encoder_hidden[i],
                                    next_seed(), initialize));
      prev = c.encoder_hidden[i];
    }
    const std::size_t heads = c.decoder_count();
    for (std::size_t k = 0; k < heads; ++k) {
      const std::string base = "head." + std::to_string(k);
      mu_heads_.push_back(make_dense(base + ".mu", prev, c.latent_dim, next_seed(), initialize));
      logsigma_heads_.push_back(
          make_dense(base + ".logsigma", prev, c.latent_dim, next_seed(), initialize));
    }
    const std::size_t decoders = c.share_decoders ? 1 : heads;
    for (std::size_t k = 0; k < decoders; ++k) {
      std::vector<Dense> stack;
      std::size_t in = c.latent_dim;
      for (std::size_t i = 0; i <= c.decoder_hidden.size(); ++i) {
        const std::size_t out = i < c.decoder_hidden.size() ? c.decoder_hidden[i] : c.input_dim;
        stack.push_back(make_dense("decoder." + std::to_string(k) + "." + std::to_string(i), in,
                                   out, next_seed(), initialize));
        in = out;
      }
      decoders_.push_back(std::move(stack));
    }
  }
  if (c.has_classifier()) {
    std::size_t prev = c.input_dim;
    for (std::size_t i = 0; i < c.classifier_hidden.size(); ++i) {
      classifier_.push_back(make_dense("classifier." + std::to_string(i), prev,
                                       2 * c.classifier_hidden[i], next_seed(), initialize));
      prev = c.classifier_hidden[i];
    }
    classifier_.push_back(make_dense("classifier." + std::to_string(c.classifier_hidden.size()),
                                     prev, c.classes, next_seed(), initialize));
  }
  initialized_ = initialize;
}

std::vector<Parameter*> AceModel::parameters() {
  std::vector<Parameter*> out;
  auto add = [&](std::vector<Dense>& v) {
    for (auto& d : v) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
  };
  add(encoder_);
  for (std::size_t k = 0; k < mu_heads_.size(); ++k) {
    out.push_back(&mu_heads_[k].weight);
    out.push_back(&mu_heads_[k].bias);
    out.push_back(&logsigma_heads_[k].weight);
    out.push_back(&logsigma_heads_[k].bias);
  }
  for (auto& d : decoders_) add(d);
  add(classifier_);
  return out;
}

std::vector<const Parameter*> AceModel::parameters() const {
  auto ps = const_cast<AceModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t AceModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

Parameter* AceModel::find(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

std::vector<LayerSpec> AceModel::encoder_layers() const {
  std::vector<LayerSpec> out;
  std::size_t prev = config_.input_dim;
  for (std::size_t h : config_.encoder_hidden) {
    out.push_back({LayerKind::Affine, prev, h});
    out.push_back({LayerKind::Tanh, h, h});
    prev = h;
  }
  out.push_back({LayerKind::Affine, prev, 2 * config_.latent_dim});
  return out;
}

std::vector<LayerSpec> AceModel::decoder_layers() const {
  std::vector<LayerSpec> out;
  std::size_t prev = config_.latent_dim;
  for (std::size_t h : config_.decoder_hidden) {
    out.push_back({LayerKind::Affine, prev, h});
    out.push_back({LayerKind::Tanh, h, h});
    prev = h;
  }
  out.push_back({LayerKind::Affine, prev, config_.input_dim});
  out.push_back({LayerKind::Sigmoid, config_.input_dim, config_.input_dim});
  return out;
}

std::vector<LayerSpec> AceModel::classifier_layers() const {
  std::vector<LayerSpec> out;
  std::size_t prev = config_.input_dim;
  const auto& hidden = config_.classifier_hidden;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    out.push_back({LayerKind::Affine, prev, 2 * hidden[i]});
    out.push_back({LayerKind::Maxout2, 2 * hidden[i], hidden[i]});
    if (i == 0 || i + 1 == hidden.size()) out.push_back({LayerKind::BatchNorm, hidden[i], hidden[i]});
    prev = hidden[i];
  }
  out.push_back({LayerKind::Affine, prev, config_.classes});
  return out;
}

Var AceModel::param(Graph& g, Parameter& p, bool train) {
  return train ? g.parameter(p) : g.constant_ref(p.value);
}

Var AceModel::affine(Graph& g, Var x, Dense& d, bool train) {
  return add_bias(matmul(x, param(g, d.weight, train)), param(g, d.bias, train));
}

std::size_t AceModel::decoder_index(std::size_t c) const {
  if (c >= config_.decoder_count())
    throw ContractError("class " + std::to_string(c) + " has no decoder");
  return config_.share_decoders ? 0 : c;
}

Var AceModel::encode(Graph& g, Var x, bool train) {
  if (!config_.has_autoencoder()) throw ContractError("architecture has no encoder");
  Var h = x;
  for (auto& d : encoder_) h = tanh(affine(g, h, d, train));
  return h;
}

std::pair<Var, Var> AceModel::latent(Graph& g, Var h, std::size_t c, bool train) {
  if (c >= mu_heads_.size()) throw ContractError("class " + std::to_string(c) + " has no latent head");
  return {affine(g, h, mu_heads_[c], train), affine(g, h, logsigma_heads_[c], train)};
}

Var AceModel::decode(Graph& g, Var z, std::size_t c, bool train) {
  auto& stack = decoders_[decoder_index(c)];
  Var h = z;
  for (std::size_t i = 0; i + 1 < stack.size(); ++i) h = tanh(affine(g, h, stack[i], train));
  return sigmoid(affine(g, h, stack.back(), train));
}

Var AceModel::classifier_logits(Graph& g, Var x, bool train, Var* first_hidden) {
  if (!config_.has_classifier()) throw ContractError("architecture has no classifier");
  const std::size_t hidden = config_.classifier_hidden.size();
  Var h = x;
  for (std::size_t i = 0; i < hidden; ++i) {
    h = maxout2(affine(g, h, classifier_[i], train));
    if (i == 0 || i + 1 == hidden) h = batchnorm(h);
    if (i == 0 && first_hidden) *first_hidden = h;
  }
  if (hidden == 0 && first_hidden) *first_hidden = x;
  return affine(g, h, classifier_.back(), train);
}

nlohmann::json LossBreakdown::to_json() const {
  nlohmann::json j = {{"generative", generative},
                      {"reconstruction", reconstruction},
                      {"classifier", classifier},
                      {"total", total}};
  j["dual_reconstruction"] = dual_reconstruction ? nlohmann::json(*dual_reconstruction) : nlohmann::json();
  return j;
}

double reconstruction_error(const Tensor& xhat, const Tensor& x, bool require_binary) {
  if (require_binary)
    for (double v : x.data())
      if (v != 0.0 && v != 1.0) throw ContractError("reconstruction target is not binary");
  Graph g;
  const Var rows = bce_rows(g.constant_ref(xhat), x);
  double s = 0.0;
  for (double v : rows.value().data()) s += v;
  return s / static_cast<double>(x.rows());
}

Var generative_error_rows(Var mu, Var log_sigma, LatentFamily family) {
  const Tensor& m = mu.value();
  const Tensor& ls = log_sigma.value();
  if (!m.same_shape(ls) || m.rank() != 2) throw DimensionError("generative_error_rows: shape mismatch");
  const std::size_t r = m.rows(), c = m.cols();
  Tensor out({r});
  Tensor dm({r, c}), dls({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const KlTerm t = standardized_kl(family, m.at(i, j), ls.at(i, j));
      s += t.value;
      dm.at(i, j) = t.d_mean;
      dls.at(i, j) = t.d_log_scale;
    }
    out[i] = s;
  }
  const std::size_t im = mu.id(), il = log_sigma.id();
  return mu.graph()->make(std::move(out), {mu, log_sigma},
                          [im, il, r, c, dm = std::move(dm), dls = std::move(dls)](Graph& g,
                                                                                   std::size_t self) {
                            const Tensor& go = g.grad(self);
                            if (g.requires_grad(im)) {
                              Tensor& gm = g.grad(im);
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j) gm.at(i, j) += go[i] * dm.at(i, j);
                            }
                            if (g.requires_grad(il)) {
                              Tensor& gl = g.grad(il);
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j) gl.at(i, j) += go[i] * dls.at(i, j);
                            }
                          });
}

Var reparameterize(Var mu, Var log_sigma, const Tensor& u, LatentFamily family) {
  if (!mu.value().same_shape(u)) throw DimensionError("reparameterize: noise shape mismatch");
  Tensor e(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) e[i] = standard_noise(family, u[i]);
  return add(mu, mul(exp(log_sigma), mu.graph()->constant(std::move(e))));
}

std::pair<Var, Var> bound_rows(Graph& g, AceModel& model, Var mu, Var log_sigma, const Tensor& x,
                               const Tensor& u, std::size_t c, bool train) {
  const LatentFamily fam = model.config().family;
  Var kl = generative_error_rows(mu, log_sigma, fam);
  Var z = reparameterize(mu, log_sigma, u, fam);
  Var rec = bce_rows(model.decode(g, z, c, train), x);
  return {kl, rec};
}

namespace {

std::vector<std::vector<std::size_t>> rows_by_class(const std::vector<int>& labels, std::size_t classes) {
  std::vector<std::vector<std::size_t>> groups(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
      throw ContractError("label " + std::to_string(labels[i]) + " out of range");
    groups[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return groups;
}

void check_batch(const AceModel& model, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != model.config().input_dim)
    throw DimensionError("batch " + shape_str(x.shape()) + " does not match input dimension " +
                         std::to_string(model.config().input_dim));
}

Var weighted(Var v, double w) { return w == 1.0 ? v : scale(v, w); }

void accumulate(std::optional<Var>& acc, Var term) { acc = acc ? add(*acc, term) : term; }

}  // namespace

LossGraph vae_bound(Graph& g, AceModel& model, const Tensor& x, const Tensor& u,
                    const std::vector<int>* labels, bool train) {
  check_batch(model, x);
  const auto& cfg = model.config();
  if (!cfg.has_autoencoder()) throw ContractError("architecture has no auto-encoder branch");
  if (u.rank() != 2 || u.rows() != x.rows() || u.cols() != cfg.latent_dim)
    throw DimensionError("noise must be [B, latent_dim]");
  const double b = static_cast<double>(x.rows());
  Var h = model.encode(g, g.constant_ref(x), train);
  std::optional<Var> gen_sum, rec_sum;
  if (cfg.decoder_count() == 1) {
    auto [mu, ls] = model.latent(g, h, 0, train);
    auto [kl, rec] = bound_rows(g, model, mu, ls, x, u, 0, train);
    gen_sum = sum(kl);
    rec_sum = sum(rec);
  } else {
    if (!labels) throw ContractError("multi-decoder bound needs labels");
    if (labels->size() != x.rows()) throw DimensionError("one label per observation required");
    const auto groups = rows_by_class(*labels, cfg.decoder_count());
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (groups[c].empty()) continue;
      Var hc = gather_rows(h, groups[c]);
      auto [mu, ls] = model.latent(g, hc, c, train);
      auto [kl, rec] = bound_rows(g, model, mu, ls, take_rows(x, groups[c]), take_rows(u, groups[c]),
                                  c, train);
      accumulate(gen_sum, sum(kl));
      accumulate(rec_sum, sum(rec));
    }
  }
  Var gen = scale(*gen_sum, 1.0 / b);
  Var rec = scale(*rec_sum, 1.0 / b);
  LossGraph out;
  out.total = add(weighted(gen, cfg.weights.generative), weighted(rec, cfg.weights.reconstruction));
  out.parts.generative = gen.value().item();
  out.parts.reconstruction = rec.value().item();
  out.parts.total = out.total.value().item();
  return out;
}

LossGraph ace_loss(Graph& g, AceModel& model, const Tensor& x, const std::vector<int>& labels,
                   const Tensor& u, bool train) {
  check_batch(model, x);
  const auto& cfg = model.config();
  LossGraph out;
  std::optional<Var> total;
  if (cfg.has_autoencoder()) {
    LossGraph ae = vae_bound(g, model, x, u, &labels, train);
    out.parts = ae.parts;
    accumulate(total, ae.total);
  }
  if (cfg.has_classifier()) {
    Var first_hidden;
    Var logits = model.classifier_logits(g, g.constant_ref(x), train, &first_hidden);
    out.logits = logits;
    Var cls = mean(softmax_xent_rows(logits, labels));
    out.parts.classifier = cls.value().item();
    accumulate(total, weighted(cls, cfg.weights.classifier));
    if (cfg.uses_dual()) {
      Var dual = dual_reconstruction_error(first_hidden, x);
      out.parts.dual_reconstruction = dual.value().item();
      accumulate(total, weighted(dual, cfg.weights.dual));
    }
  }
  out.total = *total;
  out.parts.total = total->value().item();
  return out;
}

LossBreakdown ace_test_bound(AceModel& model, const Tensor& x, const Tensor& u) {
  check_batch(model, x);
  const auto& cfg = model.config();
  if (!cfg.has_autoencoder()) throw ContractError("architecture has no auto-encoder branch");
  if (cfg.decoder_count() == 1) {
    Graph g;
    return vae_bound(g, model, x, u, nullptr, false).parts;
  }
  const std::size_t b = x.rows(), classes = cfg.decoder_count();
  const Tensor omega = classify(model, x);
  Graph g;
  Var h = model.encode(g, g.constant_ref(x), false);
  std::vector<std::vector<ExpFamilyDensity>> posts(b), priors(b);
  std::vector<double> rec(b, 0.0);
  const auto prior = ExpFamilyDensity::standard(cfg.family, cfg.latent_dim);
  for (std::size_t c = 0; c < classes; ++c) {
    auto [mu, ls] = model.latent(g, h, c, false);
    auto [kl, rc] = bound_rows(g, model, mu, ls, x, u, c, false);
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> m(cfg.latent_dim), s(cfg.latent_dim);
      for (std::size_t j = 0; j < cfg.latent_dim; ++j) {
        m[j] = mu.value().at(i, j);
        s[j] = std::exp(ls.value().at(i, j));
      }
      posts[i].push_back(cfg.family == LatentFamily::Laplacian ? ExpFamilyDensity::laplacian(m, s)
                                                               : ExpFamilyDensity::gaussian(m, s));
      priors[i].push_back(prior);
      rec[i] += omega.at(i, c) * rc.value()[i];
    }
  }
  LossBreakdown out;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> w(omega.row(i).begin(), omega.row(i).end());
    // Re-normalize against rounding.
    double tot = 0.0;
    for (double v : w) tot += v;
    for (auto& v : w) v /= tot;
    const MixtureDensity post(w, std::move(posts[i])), pri(w, std::move(priors[i]));
    out.generative += mixture_generative_error_bound(post, pri);
    out.reconstruction += rec[i];
  }
  out.generative /= static_cast<double>(b);
  out.reconstruction /= static_cast<double>(b);
  out.total = cfg.weights.generative * out.generative + cfg.weights.reconstruction * out.reconstruction;
  return out;
}

Var dual_reconstruction_error(Var H, const Tensor& X) {
  const Tensor& hv = H.value();
  if (hv.rank() != 2 || X.rank() != 2 || hv.rows() != X.rows())
    throw DimensionError("dual reconstruction: H " + shape_str(hv.shape()) + " vs X " +
                         shape_str(X.shape()));
  Graph& g = *H.graph();
  const double b = static_cast<double>(X.rows());
  Var gram = matmul_nt(H, H);
  Var recon = sigmoid(scale(matmul(gram, g.constant_ref(X)), 1.0 / b));
  return scale(sum(bce_rows(recon, X)), 1.0 / b);
}

double dual_reconstruction_error(const Tensor& H, const Tensor& X) {
  Graph g;
  return dual_reconstruction_error(g.constant_ref(H), X).value().item();
}

Tensor classify(AceModel& model, const Tensor& x) {
  if (!model.initialized()) throw ContractError("model parameters are not initialized");
  check_batch(model, x);
  Graph g;
  return softmax_rows(model.classifier_logits(g, g.constant_ref(x), false).value());
}

Tensor generate(AceModel& model, std::size_t c, const Tensor& z) {
  if (!model.initialized()) throw ContractError("model parameters are not initialized");
  if (z.rank() != 2 || z.cols() != model.config().latent_dim)
    throw DimensionError("latent points must be [K, latent_dim]");
  Graph g;
  return model.decode(g, g.constant_ref(z), c, false).value();
}

Tensor generate_samples(AceModel& model, std::size_t c, std::size_t count, Rng& rng) {
  const std::size_t l = model.config().latent_dim;
  Tensor z({count, l});
  for (auto& v : z.data()) v = standard_noise(model.config().family, rng.uniform());
  return generate(model, c, z);
}

Tensor latent_grid(std::size_t dimension, std::size_t points, double lo, double hi) {
  if (points < 2) throw ContractError("grid needs at least two points");
  Tensor z({points, dimension});
  for (std::size_t k = 0; k < points; ++k) {
    const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
    for (std::size_t j = 0; j < dimension; ++j) z.at(k, j) = t;
  }
  return z;
}

Tensor uniform_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor u({rows, cols});
  for (auto& v : u.data()) v = rng.uniform();
  return u;
}

namespace {

constexpr char kMagic[8] = {'G', 'I', 'B', 'B', 'S', 'C', 'K', 'P'};

template <class T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <class T>
  T le() {
    unsigned char buf[sizeof(T)];
    bytes(reinterpret_cast<char*>(buf), sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ParseError(path_ + ": truncated checkpoint at byte " + std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::string path_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const AceModel& model, const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  nlohmann::json desc = {{"config", model.config().to_json()}, {"extra", extra}};
  const std::string text = desc.dump();
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto params = model.parameters();
  put_le<std::uint64_t>(out, params.size());
  for (const Parameter* p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put_le<std::uint64_t>(out, d);
    for (double v : p->value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

AceModel load_checkpoint(const std::string& path, nlohmann::json* descriptor) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  Reader r(in, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw ParseError(path + ": bad checkpoint magic at byte 0");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto len = r.le<std::uint64_t>();
  if (len > (1ULL << 30)) throw ParseError(path + ": implausible descriptor length at byte 12");
  std::string text(len, '\0');
  r.bytes(text.data(), len);
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad descriptor: " + e.what());
  }
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(desc.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad model config: " + e.what());
  }
  AceModel model(cfg, false);
  const auto count = r.le<std::uint64_t>();
  std::map<std::string, bool> seen;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::size_t at = r.offset();
    const auto nlen = r.le<std::uint32_t>();
    std::string name(nlen, '\0');
    r.bytes(name.data(), nlen);
    Parameter* p = model.find(name);
    if (!p) throw ParseError(path + ": unknown tensor '" + name + "' at byte " + std::to_string(at));
    const auto rank = r.le<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint64_t>();
    if (shape != p->value.shape())
      throw ParseError(path + ": tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                       shape_str(p->value.shape()));
    for (auto& v : p->value.data()) v = std::bit_cast<double>(r.le<std::uint64_t>());
    seen[name] = true;
  }
  for (const auto* p : model.parameters())
    if (!seen.count(p->name)) throw ParseError(path + ": missing tensor '" + p->name + "'");
  model.mark_initialized();
  if (descriptor) *descriptor = desc;
  return model;
}

}  // namespace gibbs
