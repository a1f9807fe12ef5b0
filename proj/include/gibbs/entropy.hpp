#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gibbs/tensor.hpp"

namespace gibbs {

struct EntropyReport {
  /// -log p^G(x_mu) with p^G the fitted Gaussian, per observation.
  std::vector<double> neg_log_lik;
  /// (x_mu - mean) C^-1 (x_mu - mean)^T
  std::vector<double> mahalanobis;
  /// Observation indices by descending neg_log_lik, i.e. ascending entropy.
  std::vector<std::size_t> ranking;
  double kurtosis = 0.0;
  Tensor covariance;  // C + ridge * I
  std::vector<double> mean;
  double ridge = 0.0;
  double log_det = 0.0;  // log det C (ridged)
};

/// Ridge used when none is given: 1e-6 * trace(C) / N.
double default_ridge(const Tensor& covariance);

/// Mean-centered covariance X^T X / P of the rows of X.
Tensor covariance_matrix(const Tensor& X, std::vector<double>* mean_out = nullptr);

/// Gaussian negative log-likelihood of every row under the fitted mean and covariance.
/// `regularizer` nullopt picks default_ridge; an explicit 0 with singular C throws NumericError.
EntropyReport einstein_entropy(const Tensor& X, std::optional<double> regularizer = std::nullopt);

/// Row i of X times C^-1.
std::vector<double> conjugate(const Tensor& X, const Tensor& C, std::size_t i);

/// Conjugates of the mean-centered rows `indices`, each scaled to unit Euclidean norm.
Tensor unit_conjugates(const Tensor& X, const EntropyReport& report,
                       const std::vector<std::size_t>& indices);

/// The k lowest-entropy members of class c, lowest first.
std::vector<std::size_t> intricates(const EntropyReport& report, const std::vector<int>& labels,
                                    int c, std::size_t k);

/// Mardia-style scalar: mean over rows of the squared Mahalanobis norm squared.
double multivariate_kurtosis(const Tensor& X, std::optional<double> regularizer = std::nullopt);

/// Mean-centered X = V Lambda W^T (thin SVD); returns P * diag(V V^T).
std::vector<double> svd_leverage(const Tensor& X);

struct QQPoint {
  double gaussian_quantile;
  double empirical_quantile;
};

/// Standardized order statistics against Phi^-1((i - 1/2)/n).
std::vector<QQPoint> qq_points(const std::vector<double>& values);
void qq_export(const std::vector<double>& values, const std::string& path);

}  // namespace gibbs
