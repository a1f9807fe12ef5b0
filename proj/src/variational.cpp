#include "gibbs/variational.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>

#include "gibbs/error.hpp"

namespace gibbs {

std::vector<double> sufficient_statistics(const ExpFamilyDensity& d, std::span<const double> z) {
  std::vector<double> m;
  m.reserve(2 * z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    m.push_back(z[j]);
    m.push_back(d.family() == LatentFamily::Laplacian ? std::abs(z[j] - d.mean()[j]) : z[j] * z[j]);
  }
  return m;
}

namespace {

double log_mean_exp(const std::vector<double>& v) {
  double m = v.front();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

}  // namespace

VarErrorEstimate estimate_dvar(const LatentConditionalModel& model, std::span<const double> x,
                               std::size_t samples, Rng& rng, DvarMethod method, ResidualBasis basis) {
  if (samples < 50) throw ContractError("estimate_dvar needs at least 50 samples");
  const ExpFamilyDensity post = model.posterior(x);
  const ExpFamilyDensity prior = model.prior();
  if (post.family() == LatentFamily::DiscreteTabular)
    throw ContractError("estimate_dvar supports continuous latents");
  const std::size_t l = post.dimension();

  Tensor z({samples, l});
  std::vector<double> u(l);
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto& v : u) v = rng.uniform();
    const auto zs = sample_reparam(post, u);
    std::copy(zs.begin(), zs.end(), z.row(s).begin());
  }
  const std::vector<double> lrec = model.log_reconstruction(x, z);
  if (lrec.size() != samples) throw DimensionError("log_reconstruction returned the wrong count");

  VarErrorEstimate est;
  est.method = method;
  double mean_lrec = 0.0;
  for (double v : lrec) mean_lrec += v;
  mean_lrec /= static_cast<double>(samples);
  est.bound = generative_error(post, prior).value - mean_lrec;

  std::vector<double> eps(samples);
  double offset = 0.0;
  if (basis == ResidualBasis::Posterior) {
    for (std::size_t s = 0; s < samples; ++s)
      eps[s] = lrec[s] + log_density(prior, z.row(s)) - log_density(post, z.row(s));
  } else {
    const std::size_t k = 1 + 2 * l;
    Eigen::MatrixXd a(samples, k);
    Eigen::VectorXd y(samples);
    for (std::size_t s = 0; s < samples; ++s) {
      a(s, 0) = 1.0;
      const auto m = sufficient_statistics(post, z.row(s));
      for (std::size_t j = 0; j < m.size(); ++j) a(s, 1 + j) = m[j];
      y[s] = lrec[s];
    }
    Eigen::MatrixXd normal = a.transpose() * a;
    normal.diagonal().array() += 1e-10;
    const Eigen::VectorXd beta = normal.ldlt().solve(a.transpose() * y);
    offset = beta[0];
    est.coefficients.assign(beta.data() + 1, beta.data() + k);
    const Eigen::VectorXd r = y - a * beta;
    for (std::size_t s = 0; s < samples; ++s) eps[s] = r[s];
  }
  double mean = 0.0;
  for (double e : eps) mean += e;
  mean /= static_cast<double>(samples);
  est.intercept = offset + mean;
  for (auto& e : eps) e -= mean;

  // Delta-method error of log mean e^eps.
  double w_mean = 0.0, w_var = 0.0, e_var = 0.0;
  for (double e : eps) w_mean += std::exp(e);
  w_mean /= static_cast<double>(samples);
  for (double e : eps) {
    w_var += (std::exp(e) - w_mean) * (std::exp(e) - w_mean);
    e_var += e * e;
  }
  w_var /= static_cast<double>(samples - 1);
  e_var /= static_cast<double>(samples - 1);
  est.standard_error = std::sqrt(w_var) / (std::sqrt(static_cast<double>(samples)) * w_mean);

  est.dvar = method == DvarMethod::GaussianClosedForm ? 0.5 * e_var : log_mean_exp(eps);
  est.residuals = std::move(eps);
  return est;
}

std::vector<CrossEntropyRow> full_cross_entropy(const LatentConditionalModel& model, const Tensor& X,
                                                std::size_t samples, Rng& rng, DvarMethod method,
                                                ResidualBasis basis) {
  std::vector<CrossEntropyRow> rows;
  rows.reserve(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto e = estimate_dvar(model, X.row(i), samples, rng, method, basis);
    rows.push_back({i, e.bound, e.dvar, e.bound - e.dvar, e.standard_error});
  }
  return rows;
}

void write_cross_entropy_csv(const std::vector<CrossEntropyRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(10);
  out << "observation,bound,dvar,neg_log_q,standard_error\n";
  for (const auto& r : rows)
    out << r.observation << ',' << r.bound << ',' << r.dvar << ',' << r.neg_log_q << ','
        << r.standard_error << '\n';
}

ExpFamilyDensity AceLatentModel::posterior(std::span<const double> x) const {
  Tensor row({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  Graph g;
  auto [mu, ls] = model_.latent(g, model_.encode(g, g.constant_ref(row), false), class_, false);
  const std::size_t l = model_.config().latent_dim;
  std::vector<double> m(l), s(l);
  for (std::size_t j = 0; j < l; ++j) {
    m[j] = mu.value()[j];
    s[j] = std::exp(ls.value()[j]);
  }
  return model_.config().family == LatentFamily::Laplacian ? ExpFamilyDensity::laplacian(m, s)
                                                           : ExpFamilyDensity::gaussian(m, s);
}

ExpFamilyDensity AceLatentModel::prior() const {
  return ExpFamilyDensity::standard(model_.config().family, model_.config().latent_dim);
}

std::vector<double> AceLatentModel::log_reconstruction(std::span<const double> x, const Tensor& z) const {
  const Tensor xhat = generate(model_, class_, z);
  Tensor target({z.rows(), x.size()});
  for (std::size_t s = 0; s < z.rows(); ++s) std::copy(x.begin(), x.end(), target.row(s).begin());
  Graph g;
  const Var rows = bce_rows(g.constant_ref(xhat), target);
  std::vector<double> out(z.rows());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = -rows.value()[s];
  return out;
}

}  // namespace gibbs
