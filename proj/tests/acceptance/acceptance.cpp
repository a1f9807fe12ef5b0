// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "gibbs/data_io.hpp"
#include "gibbs/entropy.hpp"
#include "gibbs/exp_family.hpp"
#include "gibbs/symmetry.hpp"
#include "gibbs/trainer.hpp"
#include "gibbs/variational.hpp"
#include "support/gradcheck.hpp"
#include "support/images.hpp"
#include "support/oracles.hpp"

using namespace gibbs;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Outcome closed_form_divergences() {
  double worst = 0.0;
  for (auto fam : {LatentFamily::Gaussian, LatentFamily::Laplacian})
    for (int i = 0; i < 13; ++i)
      for (int j = 0; j < 8; ++j) {
        const double mu = -3 + 0.5 * i, s = 0.1 + (4.0 - 0.1) * j / 7.0;
        const auto post = fam == LatentFamily::Gaussian ? ExpFamilyDensity::gaussian({mu}, {s})
                                                        : ExpFamilyDensity::laplacian({mu}, {s});
        const double closed = generative_error(post, ExpFamilyDensity::standard(fam, 1)).value;
        worst = std::max(worst, std::abs(closed - oracle::quadrature_standardized_kl(fam, mu, s)));
      }
  return {worst < 1e-6, fmt("max |closed form - quadrature| = %.2e", worst)};
}

Outcome pythagorean_legendre() {
  Rng rng(2024);
  double add = 0, ident = 0, dfdl = 0, dddl = 0;
  for (int inst = 0; inst < 200; ++inst) {
    TabularFamily fam;
    fam.base.resize(8);
    double tot = 0;
    for (auto& b : fam.base) tot += (b = 0.05 + rng.uniform());
    for (auto& b : fam.base) b /= tot;
    fam.statistics.assign(2, std::vector<double>(8));
    for (auto& row : fam.statistics)
      for (auto& v : row) v = 2 * rng.uniform() - 1;

    std::vector<double> f(8);
    tot = 0;
    for (auto& v : f) tot += (v = rng.uniform());
    for (auto& v : f) v /= tot;
    const auto py = pythagorean_check(f, fam);
    add = std::max(add, std::abs(py.f_to_base - (py.f_to_projection + py.projection_to_base)));

    const std::vector<double> lam0 = {2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
    const auto m = moments(fam, lam0);
    const auto lg = legendre_check(fam, m);
    const double kl = discrete_kl(tabular_probs(fam, lg.lambda), fam.base);
    const double fl = free_energy(fam, lg.lambda);
    ident = std::max(ident, std::abs(fl - (lg.lambda[0] * m[0] + lg.lambda[1] * m[1] + kl)));

    const auto cov = statistic_covariance(fam, lam0);
    for (std::size_t s = 0; s < 2; ++s) {
      auto up = lam0, down = lam0;
      const double h = 1e-5;
      up[s] += h;
      down[s] -= h;
      const double fd_f = (free_energy(fam, up) - free_energy(fam, down)) / (2 * h);
      dfdl = std::max(dfdl, oracle::rel_err(fd_f, m[s], 1e-6));
      const double fd_d = (divergence_from_base(fam, up) - divergence_from_base(fam, down)) / (2 * h);
      dddl = std::max(dddl, oracle::rel_err(fd_d, cov[s * 2] * lam0[0] + cov[s * 2 + 1] * lam0[1], 1e-6));
    }
  }
  return {add < 1e-8 && ident < 1e-8 && dfdl < 1e-4 && dddl < 1e-4,
          fmt("additivity %.1e, F = lambda.m + D %.1e, dF/dlambda %.1e, dD/dlambda %.1e", add, ident, dfdl, dddl)};
}

Outcome gradients() {
  double ops = 0, ace = 0;
  std::string worst_op;
  for (const auto& [name, err] : gradcheck::all_op_errors())
    if (err >= ops) ops = err, worst_op = name;
  for (auto fam : {LatentFamily::Gaussian, LatentFamily::Laplacian})
    for (const auto& [name, err] : gradcheck::tiny_ace_errors(fam)) ace = std::max(ace, err);
  return {ops < 1e-3 && ace < 1e-3, fmt("worst op rel. err %.1e (", ops) + worst_op + fmt("), tiny ACE %.1e", ace)};
}

Outcome symmetry() {
  constexpr std::size_t side = 28;
  Rng rng(77);
  double centroid = 0, scale = 0, angle = 0, mass = 1;
  for (int k = 0; k < 100; ++k) {
    const double ch = 13.5 + 2 * rng.uniform(), cv = 13.5 + 2 * rng.uniform();
    const double base = (rng.uniform() - 0.5) * 0.6, theta = (rng.uniform() - 0.5) * 0.6;
    Tensor img = images::render(side, images::three_blobs(ch, cv, 4.0, base, 1.2));
    // Compact support so translation never clips mass.
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t q = 0; q < side; ++q)
        if (r < 4 || q < 4 || r + 4 >= side || q + 4 >= side) img.at(r, q) = 0.0;

    const long dh = static_cast<long>(rng.below(7)) - 3, dv = static_cast<long>(rng.below(7)) - 3;
    const auto c0 = center_of_mass(img), c1 = center_of_mass(images::translate(img, dh, dv));
    centroid = std::max({centroid, std::abs(c1[0] - c0[0] - dh), std::abs(c1[1] - c0[1] - dv)});

    const auto s0 = symmetry_stats(img);
    const auto s2 = symmetry_stats(images::render(side, images::three_blobs(ch, cv, 4.0, base, 1.2, 2.0)));
    scale = std::max(scale, std::abs(s2.r / s0.r - 2.0) / 2.0);
    const auto a0 = symmetry_stats(images::render(side, images::three_blobs(ch, cv, 5.0, base, 1.2)));
    const auto a1 = symmetry_stats(images::render(side, images::three_blobs(ch, cv, 5.0, base + theta, 1.2)));
    angle = std::max(angle, std::abs(a1.phi - a0.phi - theta));

    const auto map = build_canonical_map(side, s0, default_scale_constant(side), default_half_width(side));
    mass = std::min(mass, recovered_mass(inverse_canonicalize(canonicalize(img, map), map), img));
  }
  return {centroid < 1e-12 && scale <= 0.05 && angle <= 0.05 && mass >= 0.95,
          fmt("centroid %.1e, scale %.3f, angle %.3f rad, min recovered mass %.3f", centroid, scale, angle, mass)};
}

Outcome svd_entropy() {
  double vvx = 0, lev = 0;
  bool same_rank = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Tensor X({50, 5});
    for (auto& v : X.data()) v = rng.normal();
    Eigen::MatrixXd m(50, 5);
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t j = 0; j < 5; ++j) m(i, j) = X.at(i, j);
    const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU);
    const Eigen::MatrixXd V = svd.matrixU();
    vvx = std::max(vvx, (V * V.transpose() * c - c).cwiseAbs().maxCoeff());
    const auto rep = einstein_entropy(X, 0.0);
    const auto l = svd_leverage(X);
    for (std::size_t i = 0; i < 50; ++i) lev = std::max(lev, std::abs(rep.mahalanobis[i] - l[i]));

    Tensor A = oracle::random_tensor({5, 5}, rng);
    for (std::size_t j = 0; j < 5; ++j) A.at(j, j) += 2.0;
    same_rank = same_rank && einstein_entropy(matmul(X, A), 0.0).ranking == rep.ranking;
  }
  return {vvx < 1e-8 && lev < 1e-8 && same_rank,
          fmt("VV^T X %.1e, Mahalanobis vs leverage %.1e, rankings ", vvx, lev) + (same_rank ? "identical" : "differ")};
}

Outcome variational() {
  const oracle::LinearGaussian model(2.0, 0.5, 1.0, 0.3, 1.2);
  const double x[] = {0.4};
  const double exact = model.exact_dvar(0.4);
  int inside = 0;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto e = estimate_dvar(model, x, kDefaultVarSamples, rng);
    const double z = std::abs(e.dvar - exact) / e.standard_error;
    worst = std::max(worst, z);
    inside += z <= 3.0;
  }
  return {inside == 20, fmt("exact %.4f, %g/20 seeds within 3 SE (worst %.2f SE)", exact, inside, worst)};
}

bool have_mnist() { return mnist_available(GIBBS_MNIST_DIR); }

Dataset mnist(const std::string& split, std::size_t n, bool binary) {
  Dataset d = load_mnist(GIBBS_MNIST_DIR, split, n);
  if (binary) d.images = binarize(d.images, Binarization::Threshold);
  return d;
}

double vae_test_bound(LatentFamily family, const Dataset& train_set, const Dataset& test_set) {
  ModelConfig c;
  c.arch = Architecture::Vae;
  c.family = family;
  AceModel m(c);
  TrainConfig t;
  t.learning_rate = 2e-3;
  t.batch_size = 100;
  t.epochs = 20;
  const auto r = train(m, train_set, &test_set, t);
  return r.history.back().test->loss.total;
}

Outcome desk_vae() {
  if (!have_mnist()) return {false, std::string("MNIST not found in ") + GIBBS_MNIST_DIR};
  const Dataset tr = mnist("train", 10000, true), te = mnist("test", 10000, true);
  const double lap = vae_test_bound(LatentFamily::Laplacian, tr, te);
  const double gau = vae_test_bound(LatentFamily::Gaussian, tr, te);
  return {lap < 115.0 && lap <= gau - 1.0,
          fmt("test bound Laplacian %.2f, Gaussian %.2f nats (need < 115 and Laplacian <= Gaussian - 1)", lap, gau)};
}

Outcome desk_classifier() {
  if (!have_mnist()) return {false, std::string("MNIST not found in ") + GIBBS_MNIST_DIR};
  const Dataset tr = mnist("train", 10000, true), te = mnist("test", 10000, true);
  ModelConfig c;
  c.arch = Architecture::Classifier;
  c.classifier_hidden = {200, 200};
  AceModel m(c);
  TrainConfig t;
  t.learning_rate = 1.5e-3;
  t.batch_size = 100;
  t.epochs = 10;
  const auto r = train(m, tr, &te, t);
  const double err = *r.history.back().test->classification_error;
  return {err < 0.05, fmt("test error %.2f%%", 100 * err)};
}

Outcome qq_tail() {
  if (!have_mnist()) return {false, std::string("MNIST not found in ") + GIBBS_MNIST_DIR};
  const Dataset tr = mnist("train", 60000, false);
  const auto rep = einstein_entropy(tr.images);
  double tail = -1e300;
  for (const auto& p : qq_points(rep.neg_log_lik)) tail = std::max(tail, p.empirical_quantile - p.gaussian_quantile);
  return {tail > 3.0, fmt("max empirical - Gaussian quantile %.2f on %g observations", tail, double(tr.size()))};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion numbers select a subset.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  struct Criterion {
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"closed-form divergence suite", 10, closed_form_divergences},
      {"Pythagorean/Legendre suite", 60, pythagorean_legendre},
      {"gradient suite", 60, gradients},
      {"symmetry suite", 30, symmetry},
      {"SVD/entropy suite", 10, svd_entropy},
      {"variational-estimator oracle", 60, variational},
      {"desk-scale VAE proxy", 1800, desk_vae},
      {"classifier proxy", 600, desk_classifier},
      {"Q-Q tail of MNIST log-likelihoods", 1e9, qq_tail},
  };
  int failures = 0, index = 0;
  for (const auto& c : criteria) {
    ++index;
    if (!only.empty() && std::find(only.begin(), only.end(), index) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("[%s] %d %s: %s; %.1f s%s\n", pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str(), secs,
                in_time ? "" : " (over time budget)");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
