#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "gibbs/entropy.hpp"
#include "gibbs/error.hpp"
#include "support/oracles.hpp"

using namespace gibbs;

namespace {

Tensor gaussian_rows(std::size_t p, std::size_t n, Rng& rng) {
  Tensor X({p, n});
  for (auto& v : X.data()) v = rng.normal();
  return X;
}

Eigen::MatrixXd centered(const Tensor& X) {
  Eigen::MatrixXd m(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) m(i, j) = X.at(i, j);
  return m.rowwise() - m.colwise().mean();
}

}  // namespace

TEST_CASE("one-dimensional entropy is the Gaussian formula") {
  const Tensor X({5, 1}, {1.0, 2.0, 4.0, 7.0, 11.0});
  const auto r = einstein_entropy(X, 0.0);
  const double mean = 5.0;
  double var = 0.0;
  for (double v : X.data()) var += (v - mean) * (v - mean);
  var /= 5.0;
  for (std::size_t i = 0; i < 5; ++i) {
    const double d = X[i] - mean;
    CHECK(r.mahalanobis[i] == doctest::Approx(d * d / var).epsilon(1e-12));
    CHECK(r.neg_log_lik[i] == doctest::Approx(0.5 * d * d / var + 0.5 * std::log(2 * std::numbers::pi * var)).epsilon(1e-12));
  }
  CHECK(r.ranking.front() == 4);
  CHECK(r.ranking.back() == 2);
}

TEST_CASE("duplicated rows share their entropy") {
  Rng rng(2);
  Tensor X = gaussian_rows(20, 3, rng);
  for (std::size_t j = 0; j < 3; ++j) X.at(7, j) = X.at(3, j);
  const auto r = einstein_entropy(X);
  CHECK(r.neg_log_lik[7] == r.neg_log_lik[3]);
}

TEST_CASE("SVD identities") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor X = gaussian_rows(50, 5, rng);
    const Eigen::MatrixXd Xc = centered(X);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinU);
    const Eigen::MatrixXd V = svd.matrixU();
    CHECK((V * V.transpose() * Xc - Xc).cwiseAbs().maxCoeff() < 1e-8);

    const auto r = einstein_entropy(X, 0.0);
    const auto lev = svd_leverage(X);
    for (std::size_t i = 0; i < 50; ++i) CHECK(std::abs(r.mahalanobis[i] - lev[i]) < 1e-8);
    CHECK(std::abs(std::accumulate(lev.begin(), lev.end(), 0.0) - 50.0 * 5.0) < 1e-8);
  }
}

TEST_CASE("entropy ranking is invariant under invertible affine maps") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    Rng rng(seed);
    Tensor X = gaussian_rows(50, 5, rng);
    Tensor A = oracle::random_tensor({5, 5}, rng);
    for (std::size_t j = 0; j < 5; ++j) A.at(j, j) += 2.0;
    Tensor Y = matmul(X, A);
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t j = 0; j < 5; ++j) Y.at(i, j) += 3.0 * (j + 1);
    const auto rx = einstein_entropy(X, 0.0), ry = einstein_entropy(Y, 0.0);
    CHECK(rx.ranking == ry.ranking);
    for (std::size_t i = 0; i < 50; ++i) CHECK(std::abs(rx.mahalanobis[i] - ry.mahalanobis[i]) < 1e-8);
  }
}

TEST_CASE("singular covariance needs a ridge") {
  Tensor X({6, 2});
  for (std::size_t i = 0; i < 6; ++i) X.at(i, 0) = X.at(i, 1) = double(i);
  CHECK_THROWS_AS(einstein_entropy(X, 0.0), NumericError);
  const auto r = einstein_entropy(X);
  CHECK(r.ridge > 0.0);
  for (double v : r.neg_log_lik) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(einstein_entropy(X, -1.0), ContractError);
  CHECK_THROWS_AS(einstein_entropy(Tensor({1, 3})), ContractError);
}

TEST_CASE("conjugates") {
  const Tensor X = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor I = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(conjugate(X, I, 1) == std::vector<double>{3, 4});
  const Tensor D = Tensor::matrix({{2, 0}, {0, 4}});
  const auto cd = conjugate(X, D, 0);
  CHECK(cd[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(cd[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_AS(conjugate(X, D, 2), DimensionError);

  Rng rng(5);
  Tensor Y = gaussian_rows(30, 4, rng);
  const auto r = einstein_entropy(Y);
  const Tensor U = unit_conjugates(Y, r, {0, 5, 9});
  for (std::size_t k = 0; k < 3; ++k) {
    double n2 = 0.0;
    for (double v : U.row(k)) n2 += v * v;
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("intricates are the lowest-entropy class members") {
  Rng rng(8);
  Tensor X = gaussian_rows(60, 3, rng);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = static_cast<int>(i % 3);
  const auto r = einstein_entropy(X);
  const auto got = intricates(r, labels, 1, 5);
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < 60; ++i)
    if (labels[i] == 1) members.push_back(i);
  std::sort(members.begin(), members.end(),
            [&](std::size_t a, std::size_t b) { return r.neg_log_lik[a] > r.neg_log_lik[b]; });
  members.resize(5);
  CHECK(got == members);
  CHECK_THROWS_AS(intricates(r, labels, 7, 1), ContractError);
  CHECK_THROWS_AS(intricates(r, labels, 1, 21), ContractError);
}

TEST_CASE("Q-Q points") {
  Rng rng(3);
  std::vector<double> g(20000);
  for (auto& v : g) v = 4.0 + 2.0 * rng.normal();
  const auto pts = qq_points(g);
  double worst = 0.0;
  for (std::size_t i = 100; i + 100 < pts.size(); ++i)
    worst = std::max(worst, std::abs(pts[i].empirical_quantile - pts[i].gaussian_quantile));
  CHECK(worst < 0.1);

  const auto flat = qq_points(std::vector<double>(12, 3.0));
  for (const auto& p : flat) CHECK(p.empirical_quantile == 0.0);
  CHECK_THROWS_AS(qq_points(std::vector<double>(9, 1.0)), ContractError);

  std::vector<double> chi(20000);
  for (auto& v : chi) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double z = rng.normal();
      s += z * z;
    }
    v = s;
  }
  const auto cp = qq_points(chi);
  CHECK(cp.back().empirical_quantile - cp.back().gaussian_quantile > 1.0);

  const auto path = std::filesystem::temp_directory_path() / "gibbs_qq_test.csv";
  qq_export(g, path.string());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "gaussian_quantile,empirical_quantile");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == g.size());
  std::filesystem::remove(path);
}

TEST_CASE("multivariate kurtosis") {
  Rng rng(6);
  const Tensor X = gaussian_rows(20000, 2, rng);
  CHECK(std::abs(multivariate_kurtosis(X) - 8.0) < 0.3);
  Tensor T({20000, 2});
  for (auto& v : T.data()) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double z = rng.normal();
      s += z * z;
    }
    v = rng.normal() / std::sqrt(s / 3.0);
  }
  CHECK(multivariate_kurtosis(T) > 10.0);
}
