#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "s2/grid.hpp"
#include "s2/operators.hpp"
#include "s2/rng.hpp"

namespace s2 {

/// Raised when a density calibration target cannot be met within the
/// admissible offset range.
struct InfeasibleTargetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Binary k-space sampling mask. `dims` is the storage grid the flat
/// `indices` address (for measurement masks that is the modulation grid). A
/// phase-encode-plane mask selects (k_y, k_x) locations of a 2D plane that
/// are implicitly repeated over every readout frequency; expand it before
/// handing it to a 3D operator.
struct SamplingMask {
  enum class Mode : std::uint8_t { kFullGrid = 0, kPhaseEncodePlane = 1 };

  Mode mode = Mode::kFullGrid;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> indices;  // sorted, unique
  // generation metadata; p < 0 marks a uniform draw
  double p = -1.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t target_m = 0;
  std::uint64_t actual_m = 0;
};

/// Variable-density profile f(k) = (1 - |k|/k_max)^p + beta, evaluated on
/// |k|^2 = k_x^2 + k_y^2 and clamped to [0, 1] before use.
struct VdsProfile {
  double p = 0.0;
  double beta = 0.0;
  double k_max = 0.0;
};

inline double vds_profile_value(const VdsProfile& prof, const std::vector<double>& k) {
  if (!(prof.k_max > 0.0)) throw std::invalid_argument("vds_profile_value: k_max must be positive");
  double k2 = 0.0;
  for (double c : k) k2 += c * c;
  const double t = 1.0 - std::sqrt(k2) / prof.k_max;
  const double v = std::pow(std::max(t, 0.0), prof.p) + prof.beta;
  return std::clamp(v, 0.0, 1.0);
}

namespace detail {

/// Candidate selection sites of a variable-density draw: the base frequency
/// block {-n/2 .. n/2-1} per axis in physical units k = f / L. Returns the
/// |k| of every candidate in a fixed row-major (outer axis first) order.
inline std::vector<double> vds_candidate_radii(const std::vector<std::size_t>& base_n,
                                               const FieldOfView& fov) {
  const std::size_t d = base_n.size();
  if (d < 1 || d > 2)
    throw std::invalid_argument("vds: profiles are radial over at most two axes");
  if (fov.dim() != d) throw std::invalid_argument("vds: fov dimensionality mismatch");
  std::vector<std::vector<double>> axis_k(d);
  for (std::size_t a = 0; a < d; ++a) {
    axis_k[a].resize(base_n[a]);
    for (std::size_t i = 0; i < base_n[a]; ++i) {
      const long long f =
          static_cast<long long>(i) - static_cast<long long>(base_n[a]) / 2;
      axis_k[a][i] = static_cast<double>(f) / fov.lengths[a];
    }
  }
  std::vector<double> radii;
  radii.reserve(total_size(base_n));
  if (d == 1) {
    for (double kx : axis_k[0]) radii.push_back(std::fabs(kx));
  } else {
    for (double ky : axis_k[0])
      for (double kx : axis_k[1]) radii.push_back(std::sqrt(kx * kx + ky * ky));
  }
  return radii;
}

/// Largest candidate radius: the corner of the frequency block, which equals
/// the Euclidean norm of the per-axis band limits N/(2L).
inline double vds_k_max(const std::vector<std::size_t>& base_n, const FieldOfView& fov) {
  double s = 0.0;
  for (std::size_t a = 0; a < base_n.size(); ++a) {
    const double b = static_cast<double>(base_n[a]) / (2.0 * fov.lengths[a]);
    s += b * b;
  }
  return std::sqrt(s);
}

inline double clamped_sum(const std::vector<double>& radii, double p, double beta,
                          double k_max) {
  double sum = 0.0;
  for (double r : radii) {
    const double t = 1.0 - r / k_max;
    sum += std::clamp(std::pow(std::max(t, 0.0), p) + beta, 0.0, 1.0);
  }
  return sum;
}

}  // namespace detail

/// Expected selected count of a profile over the candidate block.
inline double vds_expected_count(const VdsProfile& prof, const std::vector<std::size_t>& base_n,
                                 const FieldOfView& fov) {
  return detail::clamped_sum(detail::vds_candidate_radii(base_n, fov), prof.p, prof.beta,
                             prof.k_max);
}

/// Finds beta in [-1, 1] such that the expected selected count over the
/// candidate block hits `target_m` within +-0.5. The clamped sum is
/// continuous and nondecreasing in beta, so plain bisection suffices;
/// bisection stops at width 1e-6.
inline double calibrate_beta(double p, std::size_t target_m,
                             const std::vector<std::size_t>& base_n, const FieldOfView& fov) {
  const auto radii = detail::vds_candidate_radii(base_n, fov);
  const double k_max = detail::vds_k_max(base_n, fov);
  if (target_m < 1 || target_m > radii.size())
    throw std::invalid_argument("calibrate_beta: target M out of range");
  const double m = static_cast<double>(target_m);

  double lo = -1.0, hi = 1.0;
  if (detail::clamped_sum(radii, p, hi, k_max) < m - 0.5 ||
      detail::clamped_sum(radii, p, lo, k_max) > m + 0.5)
    throw InfeasibleTargetError("calibrate_beta: target outside reachable range");
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (detail::clamped_sum(radii, p, mid, k_max) < m)
      lo = mid;
    else
      hi = mid;
  }
  // Return the endpoint whose expected count is >= m. The sum is Lipschitz
  // in beta with constant <= #candidates, so the overshoot is bounded by
  // #candidates * 1e-6 and exact roots (like beta = 0 at full coverage) are
  // hit exactly instead of from below.
  const double beta = hi;
  if (std::fabs(detail::clamped_sum(radii, p, beta, k_max) - m) > 0.5)
    throw InfeasibleTargetError("calibrate_beta: no beta meets the count tolerance");
  return beta;
}

/// Walks p through {0, 0.5, 1, ...} and returns the first (p, beta) whose
/// calibrated beta is nonnegative, i.e. the flattest profile that does not
/// need mass removed anywhere.
inline std::pair<double, double> find_p_m(std::size_t target_m,
                                          const std::vector<std::size_t>& base_n,
                                          const FieldOfView& fov) {
  for (double p = 0.0;; p += 0.5) {
    const double beta = calibrate_beta(p, target_m, base_n, fov);
    if (beta >= 0.0) return {p, beta};
    if (p > 1000.0)
      throw InfeasibleTargetError("find_p_m: no admissible p found");  // unreachable for valid M
  }
}

/// Profile with k_max fixed by the candidate block geometry.
inline VdsProfile make_vds_profile(double p, double beta, const std::vector<std::size_t>& base_n,
                                   const FieldOfView& fov) {
  VdsProfile prof;
  prof.p = p;
  prof.beta = beta;
  prof.k_max = detail::vds_k_max(base_n, fov);
  return prof;
}

/// One independent Bernoulli draw per candidate location of the base block,
/// embedded into the (possibly larger) storage grid `grid_dims` by frequency.
/// Candidates are visited in a fixed frequency order, so a seed fully
/// determines the mask.
inline SamplingMask draw_vds_mask(const VdsProfile& prof, const std::vector<std::size_t>& base_n,
                                  const std::vector<std::size_t>& grid_dims,
                                  const FieldOfView& fov, std::uint64_t seed,
                                  std::uint64_t target_m = 0) {
  const std::size_t d = base_n.size();
  if (grid_dims.size() != d)
    throw std::invalid_argument("draw_vds_mask: grid dimensionality mismatch");
  for (std::size_t a = 0; a < d; ++a)
    if (grid_dims[a] < base_n[a])
      throw std::invalid_argument("draw_vds_mask: storage grid smaller than base block");
  const auto radii = detail::vds_candidate_radii(base_n, fov);

  Rng rng(seed);
  SamplingMask mask;
  mask.mode = SamplingMask::Mode::kFullGrid;
  mask.dims = grid_dims;
  mask.p = prof.p;
  mask.beta = prof.beta;
  mask.seed = seed;
  mask.target_m = target_m;

  // row-major over the base block, same order as vds_candidate_radii
  const std::size_t count = radii.size();
  for (std::size_t c = 0; c < count; ++c) {
    const double t = 1.0 - radii[c] / prof.k_max;
    const double prob = std::clamp(std::pow(std::max(t, 0.0), prof.p) + prof.beta, 0.0, 1.0);
    if (!rng.bernoulli(prob)) continue;
    // decompose candidate c into per-axis base indices, then re-embed by
    // frequency into the storage grid
    std::size_t rem = c, flat = 0;
    for (std::size_t a = 0; a < d; ++a) {
      std::size_t block = 1;
      for (std::size_t b = a + 1; b < d; ++b) block *= base_n[b];
      const std::size_t i = rem / block;
      rem %= block;
      const long long f =
          static_cast<long long>(i) - static_cast<long long>(base_n[a]) / 2;
      std::size_t stride = 1;
      for (std::size_t b = a + 1; b < d; ++b) stride *= grid_dims[b];
      flat += index_of_freq(f, grid_dims[a]) * stride;
    }
    mask.indices.push_back(flat);
  }
  std::sort(mask.indices.begin(), mask.indices.end());
  mask.actual_m = mask.indices.size();
  return mask;
}

/// M distinct indices drawn uniformly from the whole grid.
inline SamplingMask draw_uniform_mask(std::size_t m, const std::vector<std::size_t>& grid_dims,
                                      std::uint64_t seed) {
  const std::size_t total = total_size(grid_dims);
  if (m < 1 || m > total) throw std::invalid_argument("draw_uniform_mask: M out of range");
  Rng rng(seed);
  const auto picks = sample_without_replacement(total, m, rng);
  SamplingMask mask;
  mask.mode = SamplingMask::Mode::kFullGrid;
  mask.dims = grid_dims;
  mask.indices.assign(picks.begin(), picks.end());
  mask.p = -1.0;
  mask.beta = 0.0;
  mask.seed = seed;
  mask.target_m = m;
  mask.actual_m = m;
  return mask;
}

/// Replicates a (k_y, k_x) plane selection across every readout frequency,
/// yielding a full-grid 3D mask with N_z times the indices.
inline SamplingMask expand_phase_encode_mask(const SamplingMask& plane, std::size_t n_z) {
  if (plane.dims.size() != 2)
    throw std::invalid_argument("expand_phase_encode_mask: plane mask must be 2D");
  if (n_z < 1) throw std::invalid_argument("expand_phase_encode_mask: N_z must be >= 1");
  SamplingMask out;
  out.mode = SamplingMask::Mode::kFullGrid;
  out.dims = {n_z, plane.dims[0], plane.dims[1]};
  const std::size_t plane_size = plane.dims[0] * plane.dims[1];
  out.indices.reserve(plane.indices.size() * n_z);
  for (std::size_t z = 0; z < n_z; ++z)
    for (std::size_t i : plane.indices) out.indices.push_back(z * plane_size + i);
  std::sort(out.indices.begin(), out.indices.end());
  out.p = plane.p;
  out.beta = plane.beta;
  out.seed = plane.seed;
  out.target_m = plane.target_m * n_z;
  out.actual_m = plane.actual_m * n_z;
  return out;
}

}  // namespace s2
