#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace s2 {

/// Physical extent of the imaging volume. Lengths are stored slowest-axis
/// first, matching image storage order: a 3D volume is (L_z, L_y, L_x) and a
/// 2D image is (L_y, L_x).
struct FieldOfView {
  std::vector<double> lengths;

  FieldOfView() = default;
  explicit FieldOfView(std::vector<double> l) : lengths(std::move(l)) {
    if (lengths.empty() || lengths.size() > 3)
      throw std::invalid_argument("FieldOfView: dimensionality must be 1, 2 or 3");
    for (double v : lengths)
      if (!(v > 0.0)) throw std::invalid_argument("FieldOfView: lengths must be positive");
  }

  std::size_t dim() const { return lengths.size(); }
  /// Length along the fastest (x) axis.
  double x() const { return lengths.back(); }
  /// Length along the second-fastest (y) axis; requires d >= 2.
  double y() const { return lengths[lengths.size() - 2]; }
};

/// Converts a physical chirp rate to the dimensionless discrete rate
/// w_bar = w * L^2 / N.
inline double discrete_chirp_rate(double w, double L, long long N) {
  if (!(L > 0.0)) throw std::invalid_argument("discrete_chirp_rate: L must be positive");
  if (N < 1) throw std::invalid_argument("discrete_chirp_rate: N must be >= 1");
  return w * L * L / static_cast<double>(N);
}

/// Inverse of discrete_chirp_rate: w = w_bar * N / L^2.
inline double physical_chirp_rate(double w_bar, double L, long long N) {
  if (!(L > 0.0)) throw std::invalid_argument("physical_chirp_rate: L must be positive");
  if (N < 1) throw std::invalid_argument("physical_chirp_rate: N must be >= 1");
  return w_bar * static_cast<double>(N) / (L * L);
}

/// Discrete chirp rates for the two chirped (phase-encode) axes. `x` is the
/// fastest storage axis, `y` the second-fastest; for 1D problems only `x`
/// applies.
struct ChirpRates {
  double x = 0.0;
  double y = 0.0;
};

enum class ChirpMode { kConstant, kReadoutVarying };

/// Chirp description. Constant mode uses one rate pair for the whole volume;
/// readout-varying mode carries one pair per readout-frequency plane. The
/// schedule is indexed by the k_z *storage* plane: entry i modulates the
/// plane holding frequency f = i for i < N_z/2 and f = i - N_z otherwise.
struct ChirpSpec {
  ChirpMode mode = ChirpMode::kConstant;
  ChirpRates constant;
  std::vector<ChirpRates> schedule;

  static ChirpSpec Constant(double w_bar_x, double w_bar_y = 0.0) {
    ChirpSpec c;
    c.mode = ChirpMode::kConstant;
    c.constant = ChirpRates{w_bar_x, w_bar_y};
    return c;
  }

  static ChirpSpec ReadoutVarying(std::vector<ChirpRates> per_plane) {
    if (per_plane.empty())
      throw std::invalid_argument("ChirpSpec: empty readout schedule");
    ChirpSpec c;
    c.mode = ChirpMode::kReadoutVarying;
    c.schedule = std::move(per_plane);
    return c;
  }

  /// Maximum absolute rate per chirped axis over the whole schedule; this is
  /// what decides the grid extension.
  ChirpRates max_abs() const {
    if (mode == ChirpMode::kConstant)
      return ChirpRates{std::fabs(constant.x), std::fabs(constant.y)};
    ChirpRates m;
    for (const ChirpRates& r : schedule) {
      m.x = std::max(m.x, std::fabs(r.x));
      m.y = std::max(m.y, std::fabs(r.y));
    }
    return m;
  }
};

/// The three grids induced by a chirp rate: base sizes n, reconstruction
/// sizes n_rec and modulation sizes n_mod, all slowest-axis first, plus the
/// field of view and the per-axis band limit B = N/(2L).
struct GridSpec {
  std::vector<std::size_t> n;
  std::vector<std::size_t> n_rec;
  std::vector<std::size_t> n_mod;
  FieldOfView fov;
  std::vector<double> band_limit;
};

namespace detail {

/// ceil(factor * n) rounded up to the next even integer. The tiny epsilon
/// keeps exact integer products (e.g. 1.5 * 256) from spilling over due to
/// floating-point noise.
inline std::size_t extended_size(std::size_t n, double factor) {
  const double v = factor * static_cast<double>(n);
  auto m = static_cast<long long>(std::ceil(v - 1e-9));
  if (m % 2 != 0) ++m;
  return static_cast<std::size_t>(m);
}

}  // namespace detail

/// Builds the grid triple for base sizes `n` under `chirp`. Per chirped axis
/// the reconstruction grid grows by (1+|w_bar|) and the modulation grid by
/// (1+2|w_bar|), each rounded up to even; the readout axis (axis 0 when d=3)
/// and unchirped axes are left untouched.
inline GridSpec make_grids(const std::vector<std::size_t>& n, const FieldOfView& fov,
                           const ChirpSpec& chirp) {
  const std::size_t d = n.size();
  if (d == 0 || d > 3) throw std::invalid_argument("make_grids: dimensionality must be 1, 2 or 3");
  if (fov.dim() != d) throw std::invalid_argument("make_grids: fov dimensionality mismatch");
  for (std::size_t s : n)
    if (s < 1) throw std::invalid_argument("make_grids: sizes must be >= 1");
  if (chirp.mode == ChirpMode::kReadoutVarying) {
    if (d != 3) throw std::invalid_argument("make_grids: readout-varying chirp requires d=3");
    if (chirp.schedule.size() != n[0])
      throw std::invalid_argument("make_grids: schedule length must equal N_z");
  }

  const ChirpRates m = chirp.max_abs();
  std::vector<double> rate(d, 0.0);
  rate[d - 1] = m.x;
  if (d >= 2) rate[d - 2] = m.y;
  if (d == 3) rate[0] = 0.0;  // readout axis is never chirped

  GridSpec g;
  g.n = n;
  g.n_rec = n;
  g.n_mod = n;
  g.fov = fov;
  g.band_limit.resize(d);
  for (std::size_t a = 0; a < d; ++a) {
    g.band_limit[a] =
        static_cast<double>(n[a]) / (2.0 * fov.lengths[a]);
    if (rate[a] > 0.0) {
      g.n_rec[a] = detail::extended_size(n[a], 1.0 + rate[a]);
      g.n_mod[a] = detail::extended_size(n[a], 1.0 + 2.0 * rate[a]);
    }
  }
  return g;
}

/// Centered sample coordinate x_i = (i - n/2) * L / n.
inline double grid_coordinate(std::size_t i, std::size_t n, double L) {
  return (static_cast<double>(i) - static_cast<double>(n) / 2.0) * L /
         static_cast<double>(n);
}

}  // namespace s2
