#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gibbs/tensor.hpp"

namespace gibbs {

enum class LatentFamily { Gaussian, Laplacian, DiscreteTabular };

std::string to_string(LatentFamily family);
LatentFamily parse_latent_family(const std::string& name);

/// Laplacian posteriors are Lap(mu, sigma * sqrt(0.5)) so that the standardized member
/// (mu, sigma) = (0, 1) has unit variance.
inline constexpr double kLaplaceScale = 0.70710678118654752440;

/// Product density with independent coordinates (Gaussian, Laplacian) or a single
/// categorical variable (DiscreteTabular). Immutable once built.
class ExpFamilyDensity {
 public:
  static ExpFamilyDensity gaussian(std::vector<double> mean, std::vector<double> scale);
  /// Laplacian with per-coordinate Laplace scale b = scale * sqrt(0.5).
  static ExpFamilyDensity laplacian(std::vector<double> mean, std::vector<double> scale);
  static ExpFamilyDensity tabular(std::vector<double> probs);
  /// The prior: mean 0, scale 1 in every coordinate.
  static ExpFamilyDensity standard(LatentFamily family, std::size_t dimension);

  LatentFamily family() const { return family_; }
  std::size_t dimension() const;
  std::span<const double> mean() const { return mean_; }
  std::span<const double> scale() const { return scale_; }
  std::span<const double> probs() const { return probs_; }
  double laplace_b(std::size_t j) const { return scale_[j] * kLaplaceScale; }

  /// Gaussian: natural parameters relative to the N(0,1) base with statistics (z, z^2),
  /// laid out as (lambda1_j, lambda2_j) per coordinate. Other families throw.
  std::vector<double> natural_params() const;
  static ExpFamilyDensity gaussian_from_natural(std::span<const double> lambda);

  std::string describe() const;

 private:
  LatentFamily family_ = LatentFamily::Gaussian;
  std::vector<double> mean_, scale_, probs_;
};

double log_density(const ExpFamilyDensity& d, std::span<const double> z);

/// Standardized noise e with z = mean + scale * e for the continuous families.
double standard_noise(LatentFamily family, double u);

/// Deterministic transform of uniforms in (0,1) into a draw from `d`.
std::vector<double> sample_reparam(const ExpFamilyDensity& d, std::span<const double> u);

struct GenerativeErrorResult {
  double value = 0.0;
  std::vector<double> per_coordinate;
};

/// Closed-form KL(posterior || prior) for matching families.
GenerativeErrorResult generative_error(const ExpFamilyDensity& posterior,
                                       const ExpFamilyDensity& prior);

/// KL of one standardized-prior coordinate and its partials, in terms of (mean, log scale).
struct KlTerm {
  double value;
  double d_mean;
  double d_log_scale;
};
KlTerm standardized_kl(LatentFamily family, double mean, double log_scale);

class MixtureDensity {
 public:
  MixtureDensity(std::vector<double> weights, std::vector<ExpFamilyDensity> components);

  std::span<const double> weights() const { return weights_; }
  const std::vector<ExpFamilyDensity>& components() const { return components_; }
  double log_density(std::span<const double> z) const;
  std::vector<double> sample(Rng& rng) const;

 private:
  std::vector<double> weights_;
  std::vector<ExpFamilyDensity> components_;
};

/// Log-sum inequality bound sum_s w_s KL(post_s || prior_s); needs identical weights.
double mixture_generative_error_bound(const MixtureDensity& posterior, const MixtureDensity& prior);

// ---- Legendre duality on families with closed-form free energy ----

/// N(0,1) base per coordinate, statistics (z, z^2); lambda has 2 entries per coordinate.
struct GaussianFamily {
  std::size_t dimension = 1;
};

/// Finite state space with base probabilities and statistics[s][k] = M_s(state k).
struct TabularFamily {
  std::vector<double> base;
  std::vector<std::vector<double>> statistics;
};

/// Indicator statistics M_s(k) = [k == s+1], s = 0..K-2.
TabularFamily indicator_family(std::vector<double> base);

using Family = std::variant<GaussianFamily, TabularFamily>;

std::size_t statistic_count(const Family& family);
/// F(lambda) = -log Z(lambda). Throws DomainError outside the normalizable domain.
double free_energy(const Family& family, std::span<const double> lambda);
/// m(lambda) = E[M] = dF/dlambda.
std::vector<double> moments(const Family& family, std::span<const double> lambda);
/// Cov(M) under p_lambda, row-major S x S; equals -d^2F/dlambda^2.
std::vector<double> statistic_covariance(const Family& family, std::span<const double> lambda);
/// D(p_lambda || base) = F(lambda) - lambda . m(lambda).
double divergence_from_base(const Family& family, std::span<const double> lambda);
std::vector<double> tabular_probs(const TabularFamily& family, std::span<const double> lambda);

struct LegendreResult {
  std::vector<double> lambda;
  double divergence = 0.0;  // D^gen(m)
  double gradient_norm = 0.0;
  /// max_j | -dD/dm_j (central differences) - lambda_j |
  double dual_residual = 0.0;
  int iterations = 0;
};

/// Solves -D(m) = min_lambda { lambda.m - F(lambda) } by damped Newton.
LegendreResult legendre_check(const Family& family, std::span<const double> m);

struct PythagoreanResult {
  double f_to_base = 0.0;        // D(f || p)
  double f_to_projection = 0.0;  // D(f || p_lambda)
  double projection_to_base = 0.0;  // D(p_lambda || p)
  std::vector<double> lambda;
  std::vector<double> projection;
};

/// Projects f onto the exponential family over `family.base` that matches E_f[M].
PythagoreanResult pythagorean_check(std::span<const double> f, const TabularFamily& family);

double discrete_kl(std::span<const double> p, std::span<const double> q);

}  // namespace gibbs
