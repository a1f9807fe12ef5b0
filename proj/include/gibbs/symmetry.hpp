#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "gibbs/exp_family.hpp"
#include "gibbs/tensor.hpp"

namespace gibbs {

/// Centroid (h, v) in 1-based pixel coordinates (h = column, v = row), mean radius r and
/// raw intensity-weighted angle phi = mean of atan2(v - v_c, h - h_c).
struct SymmetryStats {
  double h = 0.0;
  double v = 0.0;
  double r = 0.0;
  double phi = 0.0;
};

std::array<double, 2> center_of_mass(const Tensor& image);
std::array<double, 2> scale_angle(const Tensor& image, double h, double v);
SymmetryStats symmetry_stats(const Tensor& image);

/// Half-width M with 2M+1 the smallest odd number >= side.
std::size_t default_half_width(std::size_t side);
/// side / 4: pixels at the mean radius land halfway to the frame edge.
double default_scale_constant(std::size_t side);
inline constexpr double kDefaultMinScale = 2.0;

/// Source pixel -> target cell of the (2M+1)^2 canonical frame, or -1 when clipped.
struct CanonicalMap {
  std::size_t side = 0;
  std::size_t half_width = 0;
  double scale_constant = 0.0;
  std::vector<long> target;
  std::vector<int> multiplicity;  // source pixels per target cell

  std::size_t frame() const { return 2 * half_width + 1; }
};

CanonicalMap build_canonical_map(std::size_t side, const SymmetryStats& stats, double C,
                                 std::size_t M, double r_min = kDefaultMinScale);

/// Un-translate, un-scale and un-rotate; colliding pixels are summed. Result is [2M+1, 2M+1].
Tensor canonicalize(const Tensor& image, const SymmetryStats& stats, double C, std::size_t M,
                    double r_min = kDefaultMinScale);
Tensor canonicalize(const Tensor& image, const CanonicalMap& map);

/// Pulls each source pixel back from its target cell, dividing by the cell's multiplicity.
Tensor inverse_canonicalize(const Tensor& canonical, std::size_t side, const SymmetryStats& stats,
                            double C, std::size_t M, double r_min = kDefaultMinScale);
Tensor inverse_canonicalize(const Tensor& canonical, const CanonicalMap& map);

/// Fraction sum(min(a, b)) / sum(b) of the mass of b that a recovers.
double recovered_mass(const Tensor& a, const Tensor& b);

struct SymmetryLatent {
  ExpFamilyDensity density;       // Laplacian block over (h, v, r, phi)
  std::array<double, 4> momenta;  // inverted scales
};

SymmetryLatent symmetry_latent_density(const SymmetryStats& stats, const std::array<double, 4>& scales);

}  // namespace gibbs
