#include "gibbs/entropy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "gibbs/error.hpp"

namespace gibbs {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_eigen(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

RowMatrix centered(const Tensor& X, Eigen::RowVectorXd& mean) {
  const auto x = as_eigen(X);
  mean = x.colwise().mean();
  return x.rowwise() - mean;
}

// Cholesky of C; throws when C is numerically singular.
Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& c) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw NumericError("covariance is singular; pass a positive ridge regularizer");
  const auto d = llt.matrixLLT().diagonal();
  const double lo = d.minCoeff(), hi = d.maxCoeff();
  if (!(lo > 0.0) || lo * lo < 1e-13 * hi * hi)
    throw NumericError("covariance is singular; pass a positive ridge regularizer");
  return llt;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

void check_observations(const Tensor& X) {
  if (X.rank() != 2) throw DimensionError("expected an observation matrix [P x N]");
  if (X.rows() < 2) throw ContractError("need at least two observations");
}

}  // namespace

double default_ridge(const Tensor& covariance) {
  double trace = 0.0;
  for (std::size_t i = 0; i < covariance.rows(); ++i) trace += covariance.at(i, i);
  return 1e-6 * trace / static_cast<double>(covariance.rows());
}

Tensor covariance_matrix(const Tensor& X, std::vector<double>* mean_out) {
  check_observations(X);
  Eigen::RowVectorXd mean;
  const RowMatrix xc = centered(X, mean);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(xc.cols(), xc.cols());
  c.selfadjointView<Eigen::Lower>().rankUpdate(xc.transpose());
  c = c.selfadjointView<Eigen::Lower>();
  c /= static_cast<double>(X.rows());
  if (mean_out) mean_out->assign(mean.data(), mean.data() + mean.size());
  return to_tensor(c);
}

EntropyReport einstein_entropy(const Tensor& X, std::optional<double> regularizer) {
  check_observations(X);
  EntropyReport r;
  Tensor cov = covariance_matrix(X, &r.mean);
  r.ridge = regularizer ? *regularizer : default_ridge(cov);
  if (r.ridge < 0.0) throw ContractError("ridge regularizer must be non-negative");
  const std::size_t n = cov.rows();
  for (std::size_t i = 0; i < n; ++i) cov.at(i, i) += r.ridge;

  Eigen::MatrixXd c = as_eigen(cov);
  const auto llt = factor(c);
  const Eigen::Map<const Eigen::RowVectorXd> mean(r.mean.data(), n);
  RowMatrix xc = as_eigen(X).rowwise() - mean;
  // Rows of L^-1 xc^T give squared norms equal to the Mahalanobis forms.
  const Eigen::MatrixXd w = llt.matrixL().solve(xc.transpose());
  const Eigen::VectorXd maha = w.colwise().squaredNorm();

  r.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double half_log_det = 0.5 * (r.log_det + n * std::log(2.0 * std::numbers::pi));
  const std::size_t p = X.rows();
  r.mahalanobis.assign(maha.data(), maha.data() + p);
  r.neg_log_lik.resize(p);
  double k = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    r.neg_log_lik[i] = 0.5 * r.mahalanobis[i] + half_log_det;
    k += r.mahalanobis[i] * r.mahalanobis[i];
  }
  r.kurtosis = k / static_cast<double>(p);
  r.ranking.resize(p);
  std::iota(r.ranking.begin(), r.ranking.end(), 0);
  std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](std::size_t a, std::size_t b) {
    return r.neg_log_lik[a] > r.neg_log_lik[b];
  });
  r.covariance = std::move(cov);
  return r;
}

std::vector<double> conjugate(const Tensor& X, const Tensor& C, std::size_t i) {
  if (C.rank() != 2 || C.rows() != C.cols() || X.cols() != C.rows())
    throw DimensionError("conjugate: covariance must be N x N with N = columns of X");
  if (i >= X.rows()) throw DimensionError("conjugate: observation index out of range");
  const auto llt = factor(as_eigen(C));
  const Eigen::VectorXd x = as_eigen(X).row(i).transpose();
  const Eigen::VectorXd y = llt.solve(x);
  return {y.data(), y.data() + y.size()};
}

Tensor unit_conjugates(const Tensor& X, const EntropyReport& report,
                       const std::vector<std::size_t>& indices) {
  const std::size_t n = X.cols();
  const auto llt = factor(as_eigen(report.covariance));
  Tensor out({indices.size(), n});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    Eigen::VectorXd x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = X.at(indices[k], j) - report.mean[j];
    Eigen::VectorXd y = llt.solve(x);
    const double norm = y.norm();
    if (norm > 0) y /= norm;
    for (std::size_t j = 0; j < n; ++j) out.at(k, j) = y[j];
  }
  return out;
}

std::vector<std::size_t> intricates(const EntropyReport& report, const std::vector<int>& labels,
                                    int c, std::size_t k) {
  if (labels.size() != report.neg_log_lik.size())
    throw DimensionError("intricates: one label per observation required");
  std::vector<std::size_t> out;
  std::size_t population = 0;
  for (int l : labels) population += (l == c);
  if (population == 0) throw ContractError("intricates: class " + std::to_string(c) + " is empty");
  if (k > population) throw ContractError("intricates: k exceeds the class population");
  for (std::size_t idx : report.ranking) {
    if (out.size() == k) break;
    if (labels[idx] == c) out.push_back(idx);
  }
  return out;
}

double multivariate_kurtosis(const Tensor& X, std::optional<double> regularizer) {
  return einstein_entropy(X, regularizer).kurtosis;
}

std::vector<double> svd_leverage(const Tensor& X) {
  check_observations(X);
  Eigen::RowVectorXd mean;
  const Eigen::MatrixXd xc = centered(X, mean);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinU);
  const double tol = svd.singularValues().size() ? svd.singularValues()[0] * 1e-12 *
                                                       static_cast<double>(xc.rows())
                                                 : 0.0;
  const Eigen::Index rank = (svd.singularValues().array() > tol).count();
  const Eigen::MatrixXd v = svd.matrixU().leftCols(rank);
  std::vector<double> lev(X.rows());
  for (std::size_t i = 0; i < lev.size(); ++i)
    lev[i] = static_cast<double>(X.rows()) * v.row(i).squaredNorm();
  return lev;
}

std::vector<QQPoint> qq_points(const std::vector<double>& values) {
  if (values.size() < 10) throw ContractError("qq: need at least 10 values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<QQPoint> pts(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    pts[i].gaussian_quantile = normal_quantile((static_cast<double>(i) + 0.5) / n);
    pts[i].empirical_quantile = sd > 0.0 ? (sorted[i] - mean) / sd : 0.0;
  }
  return pts;
}

void qq_export(const std::vector<double>& values, const std::string& path) {
  const auto pts = qq_points(values);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "gaussian_quantile,empirical_quantile\n";
  for (const auto& p : pts) out << p.gaussian_quantile << ',' << p.empirical_quantile << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace gibbs
