#include "gibbs/exp_family.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gibbs/error.hpp"

namespace gibbs {

std::string to_string(LatentFamily family) {
  switch (family) {
    case LatentFamily::Gaussian: return "gaussian";
    case LatentFamily::Laplacian: return "laplacian";
    case LatentFamily::DiscreteTabular: return "tabular";
  }
  return "?";
}

LatentFamily parse_latent_family(const std::string& name) {
  if (name == "gaussian") return LatentFamily::Gaussian;
  if (name == "laplacian") return LatentFamily::Laplacian;
  if (name == "tabular") return LatentFamily::DiscreteTabular;
  throw ContractError("unknown latent family '" + name + "'");
}

namespace {

void check_location_scale(const std::vector<double>& mean, const std::vector<double>& scale) {
  if (mean.size() != scale.size())
    throw DimensionError("mean and scale lengths differ");
  for (double s : scale)
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("scale must be positive and finite");
}

}  // namespace

ExpFamilyDensity ExpFamilyDensity::gaussian(std::vector<double> mean, std::vector<double> scale) {
  check_location_scale(mean, scale);
  ExpFamilyDensity d;
  d.family_ = LatentFamily::Gaussian;
  d.mean_ = std::move(mean);
  d.scale_ = std::move(scale);
  return d;
}

ExpFamilyDensity ExpFamilyDensity::laplacian(std::vector<double> mean, std::vector<double> scale) {
  check_location_scale(mean, scale);
  ExpFamilyDensity d;
  d.family_ = LatentFamily::Laplacian;
  d.mean_ = std::move(mean);
  d.scale_ = std::move(scale);
  return d;
}

ExpFamilyDensity ExpFamilyDensity::tabular(std::vector<double> probs) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw DomainError("tabular probabilities must be non-negative");
    total += p;
  }
  if (probs.empty() || std::abs(total - 1.0) > 1e-10)
    throw DomainError("tabular probabilities must sum to 1");
  ExpFamilyDensity d;
  d.family_ = LatentFamily::DiscreteTabular;
  d.probs_ = std::move(probs);
  return d;
}

ExpFamilyDensity ExpFamilyDensity::standard(LatentFamily family, std::size_t dimension) {
  switch (family) {
    case LatentFamily::Gaussian:
      return gaussian(std::vector<double>(dimension, 0.0), std::vector<double>(dimension, 1.0));
    case LatentFamily::Laplacian:
      return laplacian(std::vector<double>(dimension, 0.0), std::vector<double>(dimension, 1.0));
    case LatentFamily::DiscreteTabular:
      return tabular(std::vector<double>(dimension, 1.0 / static_cast<double>(dimension)));
  }
  throw ContractError("unknown family");
}

std::size_t ExpFamilyDensity::dimension() const {
  return family_ == LatentFamily::DiscreteTabular ? 1 : mean_.size();
}

std::vector<double> ExpFamilyDensity::natural_params() const {
  if (family_ != LatentFamily::Gaussian)
    throw ContractError("natural_params is defined for the Gaussian family only");
  std::vector<double> lambda(2 * mean_.size());
  for (std::size_t j = 0; j < mean_.size(); ++j) {
    const double prec = 1.0 / (scale_[j] * scale_[j]);
    lambda[2 * j] = -mean_[j] * prec;
    lambda[2 * j + 1] = 0.5 * (prec - 1.0);
  }
  return lambda;
}

ExpFamilyDensity ExpFamilyDensity::gaussian_from_natural(std::span<const double> lambda) {
  if (lambda.size() % 2 != 0) throw DimensionError("Gaussian natural parameters come in pairs");
  const std::size_t n = lambda.size() / 2;
  std::vector<double> mean(n), scale(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double prec = 1.0 + 2.0 * lambda[2 * j + 1];
    if (!(prec > 0.0)) throw DomainError("Gaussian natural parameters are not normalizable");
    mean[j] = -lambda[2 * j] / prec;
    scale[j] = 1.0 / std::sqrt(prec);
  }
  return gaussian(std::move(mean), std::move(scale));
}

std::string ExpFamilyDensity::describe() const {
  std::ostringstream os;
  os << to_string(family_) << "(dim=" << dimension() << ")";
  return os.str();
}

double log_density(const ExpFamilyDensity& d, std::span<const double> z) {
  if (z.size() != d.dimension())
    throw DimensionError("log_density: point has " + std::to_string(z.size()) +
                         " coordinates, density has " + std::to_string(d.dimension()));
  double lp = 0.0;
  switch (d.family()) {
    case LatentFamily::Gaussian:
      for (std::size_t j = 0; j < z.size(); ++j) {
        const double s = d.scale()[j];
        const double t = (z[j] - d.mean()[j]) / s;
        lp += -0.5 * t * t - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
      }
      return lp;
    case LatentFamily::Laplacian:
      for (std::size_t j = 0; j < z.size(); ++j) {
        const double b = d.laplace_b(j);
        lp += -std::abs(z[j] - d.mean()[j]) / b - std::log(2.0 * b);
      }
      return lp;
    case LatentFamily::DiscreteTabular: {
      const auto k = static_cast<std::size_t>(z[0]);
      if (z[0] < 0 || static_cast<double>(k) != z[0] || k >= d.probs().size())
        throw DomainError("tabular state out of range");
      return std::log(d.probs()[k]);
    }
  }
  return lp;
}

double standard_noise(LatentFamily family, double u) {
  if (!(u > 0.0 && u < 1.0)) throw ContractError("reparameterization noise must lie in (0,1)");
  switch (family) {
    case LatentFamily::Gaussian: return normal_quantile(u);
    case LatentFamily::Laplacian: {
      const double c = u - 0.5;
      const double sign = c > 0 ? 1.0 : (c < 0 ? -1.0 : 0.0);
      return -kLaplaceScale * sign * std::log1p(-2.0 * std::abs(c));
    }
    case LatentFamily::DiscreteTabular: break;
  }
  throw ContractError("standard_noise is defined for continuous families");
}

std::vector<double> sample_reparam(const ExpFamilyDensity& d, std::span<const double> u) {
  if (d.family() == LatentFamily::DiscreteTabular) {
    if (u.size() != 1) throw DimensionError("tabular sampling takes one uniform");
    if (!(u[0] > 0.0 && u[0] < 1.0)) throw ContractError("noise must lie in (0,1)");
    double acc = 0.0;
    const auto probs = d.probs();
    for (std::size_t k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u[0] < acc) return {static_cast<double>(k)};
    }
    return {static_cast<double>(probs.size() - 1)};
  }
  if (u.size() != d.dimension()) throw DimensionError("sample_reparam: noise length mismatch");
  std::vector<double> z(u.size());
  for (std::size_t j = 0; j < u.size(); ++j)
    z[j] = d.mean()[j] + d.scale()[j] * standard_noise(d.family(), u[j]);
  return z;
}

GenerativeErrorResult generative_error(const ExpFamilyDensity& posterior,
                                       const ExpFamilyDensity& prior) {
  if (posterior.family() != prior.family())
    throw ContractError("generative_error: unsupported pair " + to_string(posterior.family()) +
                        " vs " + to_string(prior.family()));
  GenerativeErrorResult r;
  if (posterior.family() == LatentFamily::DiscreteTabular) {
    r.value = discrete_kl(posterior.probs(), prior.probs());
    r.per_coordinate = {r.value};
    return r;
  }
  if (posterior.dimension() != prior.dimension())
    throw DimensionError("generative_error: dimension mismatch");
  r.per_coordinate.resize(posterior.dimension());
  for (std::size_t j = 0; j < posterior.dimension(); ++j) {
    const double dm = posterior.mean()[j] - prior.mean()[j];
    double kl;
    if (posterior.family() == LatentFamily::Gaussian) {
      const double s1 = posterior.scale()[j], s2 = prior.scale()[j];
      kl = std::log(s2 / s1) + (s1 * s1 + dm * dm) / (2.0 * s2 * s2) - 0.5;
    } else {
      const double b1 = posterior.laplace_b(j), b2 = prior.laplace_b(j);
      const double a = std::abs(dm);
      kl = std::log(b2 / b1) + a / b2 + (b1 / b2) * std::exp(-a / b1) - 1.0;
    }
    // Rounding can leave -1e-17 at the minimum.
    r.per_coordinate[j] = std::max(kl, 0.0);
    r.value += r.per_coordinate[j];
  }
  return r;
}

KlTerm standardized_kl(LatentFamily family, double mean, double log_scale) {
  const double s = std::exp(log_scale);
  if (family == LatentFamily::Gaussian) {
    return {0.5 * (mean * mean + s * s - 1.0) - log_scale, mean, s * s - 1.0};
  }
  if (family == LatentFamily::Laplacian) {
    constexpr double k = std::numbers::sqrt2;  // 1 / sqrt(0.5)
    const double a = std::abs(mean);
    const double t = std::exp(-k * a / s);
    const double sign = mean > 0 ? 1.0 : (mean < 0 ? -1.0 : 0.0);
    return {-log_scale + k * a + s * t - 1.0, sign * k * (1.0 - t), -1.0 + t * (s + k * a)};
  }
  throw ContractError("standardized_kl is defined for continuous families");
}

MixtureDensity::MixtureDensity(std::vector<double> weights, std::vector<ExpFamilyDensity> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (weights_.size() != components_.size() || weights_.empty())
    throw DimensionError("mixture needs one weight per component");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw DomainError("mixture weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights must sum to 1");
  for (const auto& c : components_)
    if (c.dimension() != components_.front().dimension())
      throw DimensionError("mixture components differ in dimension");
}

double MixtureDensity::log_density(std::span<const double> z) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(components_.size());
  for (std::size_t s = 0; s < components_.size(); ++s) {
    terms[s] = weights_[s] > 0 ? std::log(weights_[s]) + gibbs::log_density(components_[s], z)
                               : -std::numeric_limits<double>::infinity();
    best = std::max(best, terms[s]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

std::vector<double> MixtureDensity::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t pick = components_.size() - 1;
  for (std::size_t s = 0; s < weights_.size(); ++s) {
    acc += weights_[s];
    if (u < acc) {
      pick = s;
      break;
    }
  }
  const auto& c = components_[pick];
  std::vector<double> noise(c.family() == LatentFamily::DiscreteTabular ? 1 : c.dimension());
  for (auto& v : noise) v = rng.uniform();
  return sample_reparam(c, noise);
}

double mixture_generative_error_bound(const MixtureDensity& posterior, const MixtureDensity& prior) {
  const auto wp = posterior.weights();
  const auto wq = prior.weights();
  if (wp.size() != wq.size()) throw ContractError("mixture bound needs equal component counts");
  for (std::size_t s = 0; s < wp.size(); ++s)
    if (std::abs(wp[s] - wq[s]) > 1e-12)
      throw ContractError("mixture bound needs identical weight vectors");
  double bound = 0.0;
  for (std::size_t s = 0; s < wp.size(); ++s) {
    if (wp[s] == 0.0) continue;
    bound += wp[s] * generative_error(posterior.components()[s], prior.components()[s]).value;
  }
  return bound;
}

// ---------------------------------------------------------------------------

TabularFamily indicator_family(std::vector<double> base) {
  TabularFamily f;
  const std::size_t k = base.size();
  f.base = std::move(base);
  for (std::size_t s = 0; s + 1 < k; ++s) {
    std::vector<double> row(k, 0.0);
    row[s + 1] = 1.0;
    f.statistics.push_back(std::move(row));
  }
  return f;
}

namespace {

void check_lambda(const Family& family, std::span<const double> lambda) {
  if (lambda.size() != statistic_count(family))
    throw DimensionError("natural parameter vector has wrong length");
}

// Unnormalized log weights log base_k - lambda . M(k); -inf on zero-mass states.
std::vector<double> tabular_log_weights(const TabularFamily& f, std::span<const double> lambda) {
  const std::size_t k = f.base.size();
  std::vector<double> lw(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (f.base[i] <= 0.0) {
      lw[i] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double e = 0.0;
    for (std::size_t s = 0; s < lambda.size(); ++s) e += lambda[s] * f.statistics[s][i];
    lw[i] = std::log(f.base[i]) - e;
  }
  return lw;
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

}  // namespace

std::size_t statistic_count(const Family& family) {
  if (const auto* g = std::get_if<GaussianFamily>(&family)) return 2 * g->dimension;
  return std::get<TabularFamily>(family).statistics.size();
}

std::vector<double> tabular_probs(const TabularFamily& family, std::span<const double> lambda) {
  auto lw = tabular_log_weights(family, lambda);
  const double lz = log_sum_exp(lw);
  for (auto& v : lw) v = std::exp(v - lz);
  return lw;
}

double free_energy(const Family& family, std::span<const double> lambda) {
  check_lambda(family, lambda);
  if (std::holds_alternative<GaussianFamily>(family)) {
    double f = 0.0;
    for (std::size_t j = 0; j < lambda.size() / 2; ++j) {
      const double prec = 1.0 + 2.0 * lambda[2 * j + 1];
      if (!(prec > 0.0)) throw DomainError("free_energy: lambda outside the normalizable domain");
      const double l1 = lambda[2 * j];
      f += 0.5 * std::log(prec) - l1 * l1 / (2.0 * prec);
    }
    return f;
  }
  return -log_sum_exp(tabular_log_weights(std::get<TabularFamily>(family), lambda));
}

std::vector<double> moments(const Family& family, std::span<const double> lambda) {
  check_lambda(family, lambda);
  if (std::holds_alternative<GaussianFamily>(family)) {
    const auto d = ExpFamilyDensity::gaussian_from_natural(lambda);
    std::vector<double> m(lambda.size());
    for (std::size_t j = 0; j < d.dimension(); ++j) {
      const double mu = d.mean()[j], s = d.scale()[j];
      m[2 * j] = mu;
      m[2 * j + 1] = mu * mu + s * s;
    }
    return m;
  }
  const auto& f = std::get<TabularFamily>(family);
  const auto p = tabular_probs(f, lambda);
  std::vector<double> m(lambda.size(), 0.0);
  for (std::size_t s = 0; s < m.size(); ++s)
    for (std::size_t k = 0; k < p.size(); ++k) m[s] += p[k] * f.statistics[s][k];
  return m;
}

std::vector<double> statistic_covariance(const Family& family, std::span<const double> lambda) {
  check_lambda(family, lambda);
  const std::size_t n = lambda.size();
  std::vector<double> cov(n * n, 0.0);
  if (std::holds_alternative<GaussianFamily>(family)) {
    const auto d = ExpFamilyDensity::gaussian_from_natural(lambda);
    for (std::size_t j = 0; j < d.dimension(); ++j) {
      const double mu = d.mean()[j], v = d.scale()[j] * d.scale()[j];
      const std::size_t a = 2 * j, b = 2 * j + 1;
      cov[a * n + a] = v;
      cov[a * n + b] = cov[b * n + a] = 2.0 * mu * v;
      cov[b * n + b] = 2.0 * v * v + 4.0 * mu * mu * v;
    }
    return cov;
  }
  const auto& f = std::get<TabularFamily>(family);
  const auto p = tabular_probs(f, lambda);
  const auto m = moments(family, lambda);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k)
        acc += p[k] * (f.statistics[s][k] - m[s]) * (f.statistics[t][k] - m[t]);
      cov[s * n + t] = acc;
    }
  return cov;
}

double divergence_from_base(const Family& family, std::span<const double> lambda) {
  const double f = free_energy(family, lambda);
  const auto m = moments(family, lambda);
  double lm = 0.0;
  for (std::size_t s = 0; s < m.size(); ++s) lm += lambda[s] * m[s];
  return f - lm;
}

namespace {

bool in_domain(const Family& family, const std::vector<double>& lambda) {
  if (std::holds_alternative<GaussianFamily>(family)) {
    for (std::size_t j = 0; j < lambda.size() / 2; ++j)
      if (!(1.0 + 2.0 * lambda[2 * j + 1] > 0.0)) return false;
  }
  for (double l : lambda)
    if (!std::isfinite(l)) return false;
  return true;
}

struct LegendreSolve {
  std::vector<double> lambda;
  double divergence;
  double gradient_norm;
  int iterations;
};

// Convex objective g(lambda) = lambda.m - F(lambda); its minimum is -D^gen(m).
LegendreSolve solve_legendre(const Family& family, std::span<const double> m) {
  const std::size_t n = statistic_count(family);
  if (m.size() != n) throw DimensionError("legendre: moment vector has wrong length");
  if (std::holds_alternative<GaussianFamily>(family)) {
    for (std::size_t j = 0; j < n / 2; ++j)
      if (!(m[2 * j + 1] - m[2 * j] * m[2 * j] > 0.0))
        throw NumericError("legendre: moments are not attainable (variance must be positive)");
  }
  auto objective = [&](const std::vector<double>& lambda) {
    double lm = 0.0;
    for (std::size_t s = 0; s < n; ++s) lm += lambda[s] * m[s];
    return lm - free_energy(family, lambda);
  };

  std::vector<double> lambda(n, 0.0);
  double g = objective(lambda);
  double gnorm = 0.0;
  constexpr int kMaxIter = 500;
  int it = 0;
  for (; it < kMaxIter; ++it) {
    const auto mm = moments(family, lambda);
    Eigen::VectorXd grad(n);
    for (std::size_t s = 0; s < n; ++s) grad[s] = m[s] - mm[s];
    gnorm = grad.norm();
    if (gnorm < 1e-10) break;
    const auto cov = statistic_covariance(family, lambda);
    Eigen::MatrixXd h(n, n);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = 0; t < n; ++t) h(s, t) = cov[s * n + t];
    h.diagonal().array() += 1e-14 * (1.0 + h.trace());
    const Eigen::VectorXd step = -h.ldlt().solve(grad);
    const double slope = grad.dot(step);

    double t = 1.0;
    bool accepted = false;
    std::vector<double> trial(n);
    while (t > 1e-14) {
      for (std::size_t s = 0; s < n; ++s) trial[s] = lambda[s] + t * step[s];
      if (in_domain(family, trial)) {
        const double gt = objective(trial);
        if (gt <= g + 1e-4 * t * slope + 1e-15 * (1.0 + std::abs(g))) {
          lambda = trial;
          g = gt;
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) break;
    double lnorm = 0.0;
    for (double l : lambda) lnorm = std::max(lnorm, std::abs(l));
    if (lnorm > 1e8)
      throw NumericError("legendre: natural parameters diverge, moments are not attainable");
  }
  if (gnorm >= 1e-10) {
    std::ostringstream os;
    os << "legendre: Newton did not converge, gradient residual " << gnorm << " after " << it
       << " iterations";
    throw NumericError(os.str());
  }
  return {lambda, -g, gnorm, it};
}

}  // namespace

LegendreResult legendre_check(const Family& family, std::span<const double> m) {
  const auto solved = solve_legendre(family, m);
  LegendreResult r;
  r.lambda = solved.lambda;
  r.divergence = solved.divergence;
  r.gradient_norm = solved.gradient_norm;
  r.iterations = solved.iterations;

  std::vector<double> mp(m.begin(), m.end());
  for (std::size_t j = 0; j < mp.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(m[j]));
    mp[j] = m[j] + h;
    const double up = solve_legendre(family, mp).divergence;
    mp[j] = m[j] - h;
    const double down = solve_legendre(family, mp).divergence;
    mp[j] = m[j];
    const double dd = (up - down) / (2.0 * h);
    r.dual_residual = std::max(r.dual_residual, std::abs(-dd - r.lambda[j]));
  }
  return r;
}

double discrete_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("discrete_kl: length mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    if (q[k] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[k] * std::log(p[k] / q[k]);
  }
  return kl;
}

PythagoreanResult pythagorean_check(std::span<const double> f, const TabularFamily& family) {
  const std::size_t k = family.base.size();
  if (f.size() != k) throw DimensionError("pythagorean_check: f and base differ in size");
  if (k > 64) throw ContractError("pythagorean_check supports at most 64 states");
  std::vector<double> m(family.statistics.size(), 0.0);
  for (std::size_t s = 0; s < m.size(); ++s)
    for (std::size_t i = 0; i < k; ++i) m[s] += f[i] * family.statistics[s][i];

  const Family fam = family;
  const auto solved = solve_legendre(fam, m);
  PythagoreanResult r;
  r.lambda = solved.lambda;
  r.projection = tabular_probs(family, solved.lambda);
  r.f_to_base = discrete_kl(f, family.base);
  r.f_to_projection = discrete_kl(f, r.projection);
  r.projection_to_base = discrete_kl(r.projection, family.base);
  return r;
}

}  // namespace gibbs
