#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gibbs/error.hpp"
#include "gibbs/exp_family.hpp"
#include "support/oracles.hpp"

using namespace gibbs;
using boost::math::quadrature::gauss_kronrod;

namespace {

double integrate(const std::function<double(double)>& f, double a, double m, double b) {
  double err = 0.0;
  return gauss_kronrod<double, 61>::integrate(f, a, m, 15, 1e-15, &err) +
         gauss_kronrod<double, 61>::integrate(f, m, b, 15, 1e-15, &err);
}

}  // namespace

TEST_CASE("log density at the mode") {
  const double z0[] = {0.0};
  CHECK(log_density(ExpFamilyDensity::standard(LatentFamily::Gaussian, 1), z0) ==
        doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(log_density(ExpFamilyDensity::standard(LatentFamily::Laplacian, 1), z0) ==
        doctest::Approx(-std::log(2 * std::sqrt(0.5))).epsilon(1e-14));
  CHECK(log_density(ExpFamilyDensity::standard(LatentFamily::Laplacian, 1), z0) == doctest::Approx(-0.3466).epsilon(1e-4));
  const double z2[] = {0.0, 1.0};
  CHECK_THROWS_AS(log_density(ExpFamilyDensity::standard(LatentFamily::Gaussian, 1), z2), DimensionError);
}

TEST_CASE("densities are normalized") {
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const double mu = -3 + 6 * rng.uniform(), s = 0.1 + 3.9 * rng.uniform();
    const auto g = ExpFamilyDensity::gaussian({mu}, {s});
    const auto l = ExpFamilyDensity::laplacian({mu}, {s});
    auto pg = [&](double z) { return std::exp(log_density(g, std::span<const double>(&z, 1))); };
    auto pl = [&](double z) { return std::exp(log_density(l, std::span<const double>(&z, 1))); };
    CHECK(std::abs(integrate(pg, mu - 12 * s, mu, mu + 12 * s) - 1.0) < 1e-8);
    // The Laplacian keeps exp(-12 sqrt 2) of its mass beyond 12 scales.
    CHECK(std::abs(integrate(pl, mu - 12 * s, mu, mu + 12 * s) - (1.0 - std::exp(-12 * std::sqrt(2.0)))) < 1e-10);
    // Against the numerically normalized density at a random point.
    const double norm = integrate(pl, mu - 60 * s, mu, mu + 60 * s);
    const double z = mu + s * (rng.uniform() - 0.5) * 6;
    CHECK(std::abs(log_density(l, std::span<const double>(&z, 1)) - (std::log(pl(z)) - std::log(norm))) < 1e-10);
  }
}

TEST_CASE("reparameterized sampling medians and rejection of endpoints") {
  const double half[] = {0.5};
  CHECK(sample_reparam(ExpFamilyDensity::gaussian({1.7}, {2.0}), half)[0] == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(sample_reparam(ExpFamilyDensity::laplacian({-0.3}, {2.0}), half)[0] == -0.3);
  const double zero[] = {0.0}, one[] = {1.0};
  CHECK_THROWS_AS(sample_reparam(ExpFamilyDensity::gaussian({0}, {1}), zero), ContractError);
  CHECK_THROWS_AS(sample_reparam(ExpFamilyDensity::laplacian({0}, {1}), one), ContractError);
}

TEST_CASE("Laplacian Monte-Carlo moments") {
  Rng rng(17);
  const auto d = ExpFamilyDensity::laplacian({1.0}, {1.3});
  const double b = d.laplace_b(0);
  const int n = 1000000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u[] = {rng.uniform()};
    const double z = sample_reparam(d, u)[0];
    m += z;
    m2 += z * z;
  }
  m /= n;
  const double var = m2 / n - m * m;
  CHECK(std::abs(m - 1.0) < 0.01);
  CHECK(std::abs(var / (2 * b * b) - 1.0) < 0.02);
}

TEST_CASE("reparameterized samples pass a Kolmogorov-Smirnov check") {
  for (auto fam : {LatentFamily::Gaussian, LatentFamily::Laplacian}) {
    Rng rng(fam == LatentFamily::Gaussian ? 1 : 2);
    const double mu = 0.4, s = 1.7;
    const auto d = fam == LatentFamily::Gaussian ? ExpFamilyDensity::gaussian({mu}, {s}) : ExpFamilyDensity::laplacian({mu}, {s});
    const int n = 100000;
    std::vector<double> z(n);
    for (auto& v : z) {
      const double u[] = {rng.uniform()};
      v = sample_reparam(d, u)[0];
    }
    std::sort(z.begin(), z.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      double cdf;
      if (fam == LatentFamily::Gaussian) cdf = normal_cdf((z[i] - mu) / s);
      else {
        const double b = d.laplace_b(0), t = z[i] - mu;
        cdf = t < 0 ? 0.5 * std::exp(t / b) : 1 - 0.5 * std::exp(-t / b);
      }
      ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
    }
    CHECK(ks < 0.006);
  }
}

TEST_CASE("generative error examples") {
  for (auto fam : {LatentFamily::Gaussian, LatentFamily::Laplacian}) {
    const auto prior = ExpFamilyDensity::standard(fam, 3);
    CHECK(generative_error(prior, prior).value == 0.0);
  }
  const auto post = ExpFamilyDensity::laplacian({1.0}, {1.0});
  const double expected = 1 / std::sqrt(0.5) + std::exp(-1 / std::sqrt(0.5)) - 1;
  CHECK(generative_error(post, ExpFamilyDensity::standard(LatentFamily::Laplacian, 1)).value ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::abs(expected - oracle::quadrature_standardized_kl(LatentFamily::Laplacian, 1.0, 1.0)) < 1e-9);
  CHECK_THROWS_AS(generative_error(post, ExpFamilyDensity::standard(LatentFamily::Gaussian, 1)), ContractError);

  const auto g = ExpFamilyDensity::gaussian({0.5, -1.0}, {2.0, 0.5});
  const auto r = generative_error(g, ExpFamilyDensity::standard(LatentFamily::Gaussian, 2));
  CHECK(r.per_coordinate.size() == 2);
  CHECK(r.value == doctest::Approx(r.per_coordinate[0] + r.per_coordinate[1]));
  CHECK(r.per_coordinate[0] == doctest::Approx((0.25 + 4 - 1) / 2 - std::log(2.0)));
}

TEST_CASE("closed-form generative error matches quadrature on a grid") {
  for (auto fam : {LatentFamily::Gaussian, LatentFamily::Laplacian}) {
    double worst = 0.0;
    for (int i = 0; i < 13; ++i)
      for (int j = 0; j < 8; ++j) {
        const double mu = -3 + 0.5 * i, s = 0.1 + (4.0 - 0.1) * j / 7.0;
        const auto post = fam == LatentFamily::Gaussian ? ExpFamilyDensity::gaussian({mu}, {s}) : ExpFamilyDensity::laplacian({mu}, {s});
        const double closed = generative_error(post, ExpFamilyDensity::standard(fam, 1)).value;
        CHECK(closed >= 0.0);
        worst = std::max(worst, std::abs(closed - oracle::quadrature_standardized_kl(fam, mu, s)));
      }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("standardized KL partials match finite differences") {
  for (auto fam : {LatentFamily::Gaussian, LatentFamily::Laplacian})
    for (double mu : {-1.3, 0.2, 2.0})
      for (double ls : {-0.7, 0.0, 0.9}) {
        const KlTerm t = standardized_kl(fam, mu, ls);
        const double h = 1e-6;
        const double dm = (standardized_kl(fam, mu + h, ls).value - standardized_kl(fam, mu - h, ls).value) / (2 * h);
        const double dl = (standardized_kl(fam, mu, ls + h).value - standardized_kl(fam, mu, ls - h).value) / (2 * h);
        CHECK(oracle::rel_err(t.d_mean, dm, 1.0) < 1e-6);
        CHECK(oracle::rel_err(t.d_log_scale, dl, 1.0) < 1e-6);
        const auto post = fam == LatentFamily::Gaussian ? ExpFamilyDensity::gaussian({mu}, {std::exp(ls)})
                                                        : ExpFamilyDensity::laplacian({mu}, {std::exp(ls)});
        CHECK(t.value == doctest::Approx(generative_error(post, ExpFamilyDensity::standard(fam, 1)).value).epsilon(1e-12));
      }
}

TEST_CASE("generative error vanishes only at the prior") {
  Rng rng(9);
  for (int k = 0; k < 200; ++k) {
    const double mu = (rng.uniform() - 0.5) * 4, s = 0.2 + 2 * rng.uniform();
    for (auto fam : {LatentFamily::Gaussian, LatentFamily::Laplacian}) {
      const auto post = fam == LatentFamily::Gaussian ? ExpFamilyDensity::gaussian({mu}, {s}) : ExpFamilyDensity::laplacian({mu}, {s});
      CHECK(generative_error(post, ExpFamilyDensity::standard(fam, 1)).value > 1e-12);
    }
  }
}

TEST_CASE("mixture bound") {
  const auto prior = ExpFamilyDensity::standard(LatentFamily::Laplacian, 1);
  const auto post = ExpFamilyDensity::laplacian({0.7}, {0.6});
  CHECK(mixture_generative_error_bound(MixtureDensity({1.0}, {post}), MixtureDensity({1.0}, {prior})) ==
        generative_error(post, prior).value);
  CHECK(mixture_generative_error_bound(MixtureDensity({0.3, 0.7}, {prior, prior}),
                                       MixtureDensity({0.3, 0.7}, {prior, prior})) == 0.0);
  CHECK_THROWS_AS(mixture_generative_error_bound(MixtureDensity({0.3, 0.7}, {prior, prior}),
                                                 MixtureDensity({0.4, 0.6}, {prior, prior})),
                  ContractError);
  CHECK_THROWS_AS(MixtureDensity({0.3, 0.6}, {prior, prior}), DomainError);
}

TEST_CASE("mixture bound dominates the Monte-Carlo mixture KL") {
  const std::vector<double> w = {0.2, 0.5, 0.3};
  const MixtureDensity post(w, {ExpFamilyDensity::laplacian({-1.5}, {0.5}), ExpFamilyDensity::laplacian({0.3}, {0.8}),
                                ExpFamilyDensity::laplacian({2.0}, {1.2})});
  const MixtureDensity prior(w, {ExpFamilyDensity::laplacian({-0.5}, {1.0}), ExpFamilyDensity::laplacian({0.0}, {1.0}),
                                 ExpFamilyDensity::laplacian({0.5}, {1.5})});
  const double bound = mixture_generative_error_bound(post, prior);
  Rng rng(12);
  const int n = 1000000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto z = post.sample(rng);
    const double r = post.log_density(z) - prior.log_density(z);
    m += r;
    m2 += r * r;
  }
  m /= n;
  const double se = std::sqrt((m2 / n - m * m) / n);
  CHECK(bound - m >= -3 * se);
}

TEST_CASE("free energy and moments") {
  const Family two = indicator_family({0.5, 0.5});
  const double l0[] = {0.0};
  CHECK(free_energy(two, l0) == doctest::Approx(0.0));
  CHECK(moments(two, l0)[0] == doctest::Approx(0.5));

  const auto d = ExpFamilyDensity::gaussian({0.8, -1.1}, {0.6, 1.9});
  const auto lam = d.natural_params();
  const auto m = moments(GaussianFamily{2}, lam);
  CHECK(std::abs(m[0] - 0.8) < 1e-10);
  CHECK(std::abs(m[1] - (0.64 + 0.36)) < 1e-10);
  CHECK(std::abs(m[3] - (1.21 + 3.61)) < 1e-10);
  const auto back = ExpFamilyDensity::gaussian_from_natural(lam);
  CHECK(std::abs(back.scale()[1] - 1.9) < 1e-12);

  const double bad[] = {0.0, -0.5};
  CHECK_THROWS_AS(free_energy(GaussianFamily{1}, bad), DomainError);
}

TEST_CASE("dF/dlambda equals the moments") {
  Rng rng(31);
  TabularFamily tab;
  tab.base = {0.1, 0.2, 0.3, 0.15, 0.25};
  tab.statistics = {{0, 1, 2, 3, 4}, {1, 0, 1, 0, 2}};
  const std::vector<Family> fams = {GaussianFamily{2}, tab};
  for (const auto& fam : fams)
    for (int k = 0; k < 10; ++k) {
      std::vector<double> lam(statistic_count(fam));
      for (std::size_t s = 0; s < lam.size(); ++s) lam[s] = (rng.uniform() - 0.5) * (s % 2 ? 0.8 : 2.0);
      const auto m = moments(fam, lam);
      for (std::size_t s = 0; s < lam.size(); ++s) {
        auto up = lam, down = lam;
        const double h = 1e-5;
        up[s] += h;
        down[s] -= h;
        const double fd = (free_energy(fam, up) - free_energy(fam, down)) / (2 * h);
        CHECK(oracle::rel_err(fd, m[s], 1e-6) < 1e-5);
      }
    }
}

TEST_CASE("divergence gradient in lambda is Cov(M) lambda") {
  Rng rng(33);
  TabularFamily tab;
  tab.base = {0.1, 0.2, 0.3, 0.15, 0.25};
  tab.statistics = {{0, 1, 2, 3, 4}, {1, 0, 1, 0, 2}};
  const std::vector<Family> fams = {GaussianFamily{1}, tab};
  for (const auto& fam : fams)
    for (int k = 0; k < 10; ++k) {
      std::vector<double> lam(statistic_count(fam));
      for (auto& l : lam) l = (rng.uniform() - 0.5) * 0.8;
      const std::size_t n = lam.size();
      const auto cov = statistic_covariance(fam, lam);
      for (std::size_t s = 0; s < n; ++s) {
        double expected = 0.0;
        for (std::size_t t = 0; t < n; ++t) expected += cov[s * n + t] * lam[t];
        auto up = lam, down = lam;
        const double h = 1e-5;
        up[s] += h;
        down[s] -= h;
        const double fd = (divergence_from_base(fam, up) - divergence_from_base(fam, down)) / (2 * h);
        CHECK(oracle::rel_err(fd, expected, 1e-6) < 1e-4);
      }
    }
}

TEST_CASE("Legendre program") {
  const double prior_m[] = {0.0, 1.0};
  const auto at_prior = legendre_check(GaussianFamily{1}, prior_m);
  CHECK(std::abs(at_prior.lambda[0]) < 1e-10);
  CHECK(std::abs(at_prior.lambda[1]) < 1e-10);
  CHECK(std::abs(at_prior.divergence) < 1e-12);

  TabularFamily four = indicator_family({0.1, 0.2, 0.3, 0.4});
  const double m4[] = {0.25, 0.25, 0.25};
  const auto r4 = legendre_check(four, m4);
  const auto p = tabular_probs(four, r4.lambda);
  CHECK(std::abs(r4.divergence - discrete_kl(p, four.base)) < 1e-8);
  CHECK(std::abs(p[0] - 0.25) < 1e-9);
  CHECK(r4.dual_residual < 1e-5);

  for (double mu : {-2.0, -0.5, 0.0, 1.0, 2.5})
    for (double s : {0.3, 1.0, 2.2}) {
      const double m[] = {mu, mu * mu + s * s};
      const auto r = legendre_check(GaussianFamily{1}, m);
      const double f = free_energy(GaussianFamily{1}, r.lambda);
      CHECK(std::abs(f - (r.lambda[0] * m[0] + r.lambda[1] * m[1] + r.divergence)) < 1e-8);
      CHECK(std::abs(r.divergence - ((mu * mu + s * s - 1) / 2 - std::log(s))) < 1e-8);
      CHECK(r.dual_residual < 1e-4 * std::max(1.0, std::abs(r.lambda[0]) + std::abs(r.lambda[1])));
    }

  const double bad[] = {1.0, 0.5};
  CHECK_THROWS_AS(legendre_check(GaussianFamily{1}, bad), NumericError);
  const double outside[] = {0.7, 0.7, 0.7};
  CHECK_THROWS_AS(legendre_check(four, outside), NumericError);
}

TEST_CASE("variational Pythagorean theorem") {
  TabularFamily fam;
  fam.base = {0.05, 0.1, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05};
  fam.statistics = {{0, 1, 2, 3, 4, 5, 6, 7}};

  const auto same = pythagorean_check(fam.base, fam);
  CHECK(std::abs(same.f_to_base) < 1e-12);
  CHECK(std::abs(same.f_to_projection) < 1e-12);
  CHECK(std::abs(same.projection_to_base) < 1e-12);

  const double lam[] = {0.3};
  const auto inside = tabular_probs(fam, lam);
  const auto r_in = pythagorean_check(inside, fam);
  CHECK(std::abs(r_in.f_to_projection) < 1e-10);
  CHECK(std::abs(r_in.f_to_base - r_in.projection_to_base) < 1e-10);

  Rng rng(77);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> f(8);
    double tot = 0.0;
    for (auto& v : f) tot += (v = rng.uniform());
    for (auto& v : f) v /= tot;
    const auto r = pythagorean_check(f, fam);
    CHECK(std::abs(r.f_to_base - (r.f_to_projection + r.projection_to_base)) < 1e-8);
  }
}
