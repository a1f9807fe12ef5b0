#include "gibbs/symmetry.hpp"

#include <algorithm>
#include <cmath>

#include "gibbs/error.hpp"

namespace gibbs {

namespace {

std::size_t square_side(const Tensor& image) {
  if (image.rank() != 2 || image.rows() != image.cols())
    throw DimensionError("expected a square image, got " + shape_str(image.shape()));
  return image.rows();
}

double total_mass(const Tensor& image) {
  double s = 0.0;
  for (double x : image.data()) {
    if (x < 0.0) throw DomainError("symmetry statistics need non-negative pixels");
    s += x;
  }
  if (!(s > 0.0)) throw DomainError("centroid undefined for an all-zero image");
  return s;
}

}  // namespace

std::array<double, 2> center_of_mass(const Tensor& image) {
  const std::size_t n = square_side(image);
  const double mass = total_mass(image);
  double h = 0.0, v = 0.0;
  for (std::size_t row = 0; row < n; ++row)
    for (std::size_t col = 0; col < n; ++col) {
      const double x = image.at(row, col);
      h += x * static_cast<double>(col + 1);
      v += x * static_cast<double>(row + 1);
    }
  return {h / mass, v / mass};
}

std::array<double, 2> scale_angle(const Tensor& image, double h, double v) {
  const std::size_t n = square_side(image);
  const double mass = total_mass(image);
  double r = 0.0, phi = 0.0;
  for (std::size_t row = 0; row < n; ++row)
    for (std::size_t col = 0; col < n; ++col) {
      const double x = image.at(row, col);
      if (x == 0.0) continue;
      const double dh = static_cast<double>(col + 1) - h;
      const double dv = static_cast<double>(row + 1) - v;
      r += x * std::hypot(dh, dv);
      phi += x * std::atan2(dv, dh);
    }
  r /= mass;
  if (!(r > 0.0)) throw DomainError("scale is zero: all mass sits on the centroid");
  return {r, phi / mass};
}

SymmetryStats symmetry_stats(const Tensor& image) {
  const auto [h, v] = center_of_mass(image);
  const auto [r, phi] = scale_angle(image, h, v);
  return {h, v, r, phi};
}

std::size_t default_half_width(std::size_t side) { return side / 2; }

double default_scale_constant(std::size_t side) { return static_cast<double>(side) / 4.0; }

CanonicalMap build_canonical_map(std::size_t side, const SymmetryStats& stats, double C,
                                 std::size_t M, double r_min) {
  if (!(stats.r >= r_min))
    throw DomainError("scale r = " + std::to_string(stats.r) + " is below the minimum " +
                      std::to_string(r_min));
  if (!(C > 0.0)) throw ContractError("scale constant must be positive");
  CanonicalMap map;
  map.side = side;
  map.half_width = M;
  map.scale_constant = C;
  const long frame = static_cast<long>(2 * M + 1);
  map.target.assign(side * side, -1);
  map.multiplicity.assign(static_cast<std::size_t>(frame * frame), 0);
  const double k = C / stats.r;
  const double c = std::cos(stats.phi), s = std::sin(stats.phi);
  for (std::size_t row = 0; row < side; ++row)
    for (std::size_t col = 0; col < side; ++col) {
      const double dh = static_cast<double>(col + 1) - stats.h;
      const double dv = static_cast<double>(row + 1) - stats.v;
      const double th = k * (dh * c + dv * s);
      const double tv = k * (-dh * s + dv * c);
      // std::round rounds halves away from zero.
      const long hh = static_cast<long>(std::round(th)) + static_cast<long>(M) + 1;
      const long vv = static_cast<long>(std::round(tv)) + static_cast<long>(M) + 1;
      if (hh < 1 || hh > frame || vv < 1 || vv > frame) continue;
      const long t = (hh - 1) + (vv - 1) * frame;
      map.target[row * side + col] = t;
      ++map.multiplicity[static_cast<std::size_t>(t)];
    }
  return map;
}

Tensor canonicalize(const Tensor& image, const CanonicalMap& map) {
  if (square_side(image) != map.side) throw DimensionError("image side differs from the map");
  Tensor out({map.frame(), map.frame()});
  for (std::size_t i = 0; i < map.target.size(); ++i)
    if (map.target[i] >= 0) out[static_cast<std::size_t>(map.target[i])] += image[i];
  return out;
}

Tensor canonicalize(const Tensor& image, const SymmetryStats& stats, double C, std::size_t M,
                    double r_min) {
  return canonicalize(image, build_canonical_map(square_side(image), stats, C, M, r_min));
}

Tensor inverse_canonicalize(const Tensor& canonical, const CanonicalMap& map) {
  if (canonical.size() != map.frame() * map.frame())
    throw DimensionError("canonical image does not match the (2M+1)^2 frame");
  Tensor out({map.side, map.side});
  for (std::size_t i = 0; i < map.target.size(); ++i) {
    const long t = map.target[i];
    if (t < 0) continue;
    const auto ti = static_cast<std::size_t>(t);
    out[i] = canonical[ti] / map.multiplicity[ti];
  }
  return out;
}

Tensor inverse_canonicalize(const Tensor& canonical, std::size_t side, const SymmetryStats& stats,
                            double C, std::size_t M, double r_min) {
  return inverse_canonicalize(canonical, build_canonical_map(side, stats, C, M, r_min));
}

double recovered_mass(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("recovered_mass: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::min(a[i], b[i]);
    den += b[i];
  }
  return den > 0.0 ? num / den : 1.0;
}

SymmetryLatent symmetry_latent_density(const SymmetryStats& stats,
                                       const std::array<double, 4>& scales) {
  for (double s : scales)
    if (!(s > 0.0)) throw DomainError("symmetry scales must be positive");
  SymmetryLatent out{ExpFamilyDensity::laplacian({stats.h, stats.v, stats.r, stats.phi},
                                                 {scales.begin(), scales.end()}),
                     {}};
  for (std::size_t j = 0; j < 4; ++j) out.momenta[j] = 1.0 / scales[j];
  return out;
}

}  // namespace gibbs
