#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gibbs/exp_family.hpp"
#include "gibbs/nets.hpp"

namespace gibbs {

/// What the estimator needs from a latent-variable model with posterior p(z|x), prior p(z)
/// and decoder likelihood p^rec(x|z).
class LatentConditionalModel {
 public:
  virtual ~LatentConditionalModel() = default;
  virtual ExpFamilyDensity posterior(std::span<const double> x) const = 0;
  virtual ExpFamilyDensity prior() const = 0;
  /// log p^rec(x | z_s) for every row z_s of z.
  virtual std::vector<double> log_reconstruction(std::span<const double> x, const Tensor& z) const = 0;
};

enum class DvarMethod { MonteCarloLogMeanExp, GaussianClosedForm };

/// How the regression on sufficient statistics is carried out.
///  Posterior: the posterior's own natural parameters, eps = log p^rec + log p(z) - log p(z|x) - alpha.
///  LeastSquares: ordinary least squares on (1, M(z)) with a 1e-10 ridge.
enum class ResidualBasis { Posterior, LeastSquares };

struct VarErrorEstimate {
  double intercept = 0.0;
  std::vector<double> coefficients;  // LeastSquares only
  std::vector<double> residuals;     // centered to zero mean
  double dvar = 0.0;
  double standard_error = 0.0;
  DvarMethod method = DvarMethod::MonteCarloLogMeanExp;
  /// Closed-form generative error minus the Monte-Carlo mean of log p^rec.
  double bound = 0.0;
};

inline constexpr std::size_t kDefaultVarSamples = 500;

VarErrorEstimate estimate_dvar(const LatentConditionalModel& model, std::span<const double> x,
                               std::size_t samples, Rng& rng,
                               DvarMethod method = DvarMethod::MonteCarloLogMeanExp,
                               ResidualBasis basis = ResidualBasis::Posterior);

/// Sufficient statistics per latent coordinate: Gaussian (z, z^2), Laplacian (z, |z - mu|).
std::vector<double> sufficient_statistics(const ExpFamilyDensity& d, std::span<const double> z);

struct CrossEntropyRow {
  std::size_t observation;
  double bound;
  double dvar;
  double neg_log_q;
  double standard_error;
};

std::vector<CrossEntropyRow> full_cross_entropy(const LatentConditionalModel& model, const Tensor& X,
                                                std::size_t samples, Rng& rng,
                                                DvarMethod method = DvarMethod::MonteCarloLogMeanExp,
                                                ResidualBasis basis = ResidualBasis::Posterior);
void write_cross_entropy_csv(const std::vector<CrossEntropyRow>& rows, const std::string& path);

/// One class branch of a trained model seen as a latent-variable model.
class AceLatentModel : public LatentConditionalModel {
 public:
  AceLatentModel(AceModel& model, std::size_t c) : model_(model), class_(c) {}
  ExpFamilyDensity posterior(std::span<const double> x) const override;
  ExpFamilyDensity prior() const override;
  std::vector<double> log_reconstruction(std::span<const double> x, const Tensor& z) const override;

 private:
  AceModel& model_;
  std::size_t class_;
};

}  // namespace gibbs
