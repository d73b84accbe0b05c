#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "s2/fft.hpp"
#include "s2/grid.hpp"
#include "s2/image.hpp"

namespace s2 {

// ---------------------------------------------------------------------------
// Frequency bookkeeping. Storage index i on an axis of size n holds the
// integer frequency f = i for i < (n+1)/2 and f = i - n otherwise, so the
// frequency set is {-floor(n/2), ..., ceil(n/2)-1}: for even n the Nyquist
// component sits on the negative side and is never split.
// ---------------------------------------------------------------------------

inline long long freq_of_index(std::size_t i, std::size_t n) {
  const auto ii = static_cast<long long>(i);
  const auto nn = static_cast<long long>(n);
  return ii < (nn + 1) / 2 ? ii : ii - nn;
}

inline std::size_t index_of_freq(long long f, std::size_t n) {
  const auto nn = static_cast<long long>(n);
  return static_cast<std::size_t>((f % nn + nn) % nn);
}

namespace detail {

inline std::vector<std::size_t> strides_of(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t a = dims.size(); a-- > 1;) s[a - 1] = s[a] * dims[a];
  return s;
}

/// Per-axis map from source storage index to destination storage index that
/// preserves the integer frequency. Requires dst >= src on the axis.
inline std::vector<std::size_t> freq_embed_map(std::size_t n_src, std::size_t n_dst) {
  std::vector<std::size_t> map(n_src);
  for (std::size_t i = 0; i < n_src; ++i)
    map[i] = index_of_freq(freq_of_index(i, n_src), n_dst);
  return map;
}

}  // namespace detail

/// Zero-pads a frequency-domain array onto a larger grid, keeping each
/// integer frequency in place. Works axis by axis; equal sizes pass through.
inline ComplexImage embed_spectrum(const ComplexImage& in,
                                   const std::vector<std::size_t>& dst_dims) {
  const std::size_t d = in.dims.size();
  if (dst_dims.size() != d)
    throw std::invalid_argument("embed_spectrum: dimensionality mismatch");
  for (std::size_t a = 0; a < d; ++a)
    if (dst_dims[a] < in.dims[a])
      throw std::invalid_argument("embed_spectrum: destination smaller than source");

  ComplexImage out(dst_dims);
  std::vector<std::vector<std::size_t>> maps(d);
  for (std::size_t a = 0; a < d; ++a) maps[a] = detail::freq_embed_map(in.dims[a], dst_dims[a]);
  const auto sstr = detail::strides_of(in.dims);
  const auto dstr = detail::strides_of(dst_dims);
  for (std::size_t i = 0; i < in.size(); ++i) {
    std::size_t rem = i, j = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t idx = rem / sstr[a];
      rem %= sstr[a];
      j += maps[a][idx] * dstr[a];
    }
    out[j] = in[i];
  }
  return out;
}

/// Adjoint of embed_spectrum: gathers the central frequency block of a larger
/// grid down to dst_dims.
inline ComplexImage crop_spectrum(const ComplexImage& in,
                                  const std::vector<std::size_t>& dst_dims) {
  const std::size_t d = in.dims.size();
  if (dst_dims.size() != d)
    throw std::invalid_argument("crop_spectrum: dimensionality mismatch");
  for (std::size_t a = 0; a < d; ++a)
    if (dst_dims[a] > in.dims[a])
      throw std::invalid_argument("crop_spectrum: destination larger than source");

  ComplexImage out(dst_dims);
  std::vector<std::vector<std::size_t>> maps(d);
  for (std::size_t a = 0; a < d; ++a) maps[a] = detail::freq_embed_map(dst_dims[a], in.dims[a]);
  const auto sstr = detail::strides_of(in.dims);
  const auto dstr = detail::strides_of(dst_dims);
  for (std::size_t j = 0; j < out.size(); ++j) {
    std::size_t rem = j, i = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t idx = rem / dstr[a];
      rem %= dstr[a];
      i += maps[a][idx] * sstr[a];
    }
    out[j] = in[i];
  }
  return out;
}

/// U: sinc-interpolates onto a finer grid of the same field of view by
/// zero-padding in frequency space. Isometric: ||U x|| = ||x||.
inline ComplexImage upsample(const ComplexImage& img,
                             const std::vector<std::size_t>& dst_dims) {
  for (std::size_t a = 0; a < img.dims.size(); ++a)
    if (a >= dst_dims.size() || dst_dims[a] < img.dims[a])
      throw std::invalid_argument("upsample: target must be at least source size");
  if (img.dims == dst_dims) return img;
  ComplexImage spec = fourier_forward(img);
  spec = embed_spectrum(spec, dst_dims);
  fft_inplace(spec.data, spec.dims, all_axes(spec.dims.size()), FFTW_BACKWARD);
  return spec;
}

/// U*: adjoint of upsample; band-limits to the central frequency block. Also
/// the left inverse: downsample(upsample(x)) == x.
inline ComplexImage downsample(const ComplexImage& img,
                               const std::vector<std::size_t>& dst_dims) {
  for (std::size_t a = 0; a < img.dims.size(); ++a)
    if (a >= dst_dims.size() || dst_dims[a] > img.dims[a])
      throw std::invalid_argument("downsample: target must be at most source size");
  if (img.dims == dst_dims) return img;
  ComplexImage spec = fourier_forward(img);
  spec = crop_spectrum(spec, dst_dims);
  fft_inplace(spec.data, spec.dims, all_axes(spec.dims.size()), FFTW_BACKWARD);
  return spec;
}

namespace detail {

/// Phase table e^{i pi w x^2} along one axis. The physical rate is recovered
/// from the discrete rate via w = w_bar * N_base / L^2, and the coordinate is
/// x_i = (i - n/2) L / n, so L cancels:
///   phase(i) = pi * w_bar * N_base * (i - n/2)^2 / n^2.
inline std::vector<Complex> chirp_phase_axis(double w_bar, std::size_t n_base,
                                             std::size_t n, bool conjugate) {
  std::vector<Complex> t(n);
  const double pi = 3.14159265358979323846;
  const double sgn = conjugate ? -1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(i) - static_cast<double>(n) / 2.0;
    const double phase =
        sgn * pi * w_bar * static_cast<double>(n_base) * c * c /
        (static_cast<double>(n) * static_cast<double>(n));
    t[i] = Complex{std::cos(phase), std::sin(phase)};
  }
  return t;
}

/// Multiplies a separable chirp e^{i pi (w_x x^2 + w_y y^2)} into the last
/// one or two axes of `img`, restricted to the axis-0 slab [plane_begin,
/// plane_end) so the readout-varying chain can modulate one k_z plane at a
/// time.
inline void chirp_apply_slab(ComplexImage& img, const ChirpRates& rates,
                             const std::vector<std::size_t>& base_n, bool conjugate,
                             std::size_t plane_begin, std::size_t plane_end) {
  const std::size_t d = img.dims.size();
  const std::size_t nx = img.dims[d - 1];
  const auto tx = chirp_phase_axis(rates.x, base_n[d - 1], nx, conjugate);
  std::vector<Complex> ty{Complex{1.0, 0.0}};
  std::size_t ny = 1;
  if (d >= 2) {
    ny = img.dims[d - 2];
    ty = chirp_phase_axis(rates.y, base_n[d - 2], ny, conjugate);
  }
  const std::size_t row = nx;
  const std::size_t plane = ny * nx;
  for (std::size_t p = plane_begin; p < plane_end; ++p)
    for (std::size_t y = 0; y < ny; ++y) {
      Complex* line = img.data.data() + p * plane + y * row;
      const Complex fy = ty[y];
      for (std::size_t x = 0; x < nx; ++x) line[x] *= fy * tx[x];
    }
}

}  // namespace detail

/// C: pointwise multiplication by the quadratic-phase chirp, centered on the
/// field of view. `base_n` are the base grid sizes (used to recover physical
/// rates from discrete ones); `img` may live on any of the three grids. For
/// readout-varying chirps entry i of the schedule modulates axis-0 plane i,
/// which the sensing chain arranges to be the k_z plane of frequency
/// freq_of_index(i, N_z).
inline ComplexImage chirp_modulate(const ComplexImage& img,
                                   const std::vector<std::size_t>& base_n,
                                   const ChirpSpec& chirp, bool conjugate = false) {
  const std::size_t d = img.dims.size();
  if (base_n.size() != d)
    throw std::invalid_argument("chirp_modulate: base grid dimensionality mismatch");
  ComplexImage out = img;
  if (chirp.mode == ChirpMode::kConstant) {
    const std::size_t planes = d == 3 ? img.dims[0] : 1;
    detail::chirp_apply_slab(out, chirp.constant, base_n, conjugate, 0, planes);
  } else {
    if (d != 3)
      throw std::invalid_argument("chirp_modulate: readout-varying chirp requires d=3");
    if (chirp.schedule.size() != img.dims[0])
      throw std::invalid_argument("chirp_modulate: schedule length != number of planes");
    for (std::size_t p = 0; p < img.dims[0]; ++p)
      detail::chirp_apply_slab(out, chirp.schedule[p], base_n, conjugate, p, p + 1);
  }
  return out;
}

/// M: gathers the k-space coefficients selected by `indices` (flat row-major
/// positions in `kspace`), in index order.
inline KSpaceData apply_mask(const ComplexImage& kspace,
                             const std::vector<std::size_t>& indices) {
  KSpaceData out;
  out.grid_dims = kspace.dims;
  out.indices = indices;
  out.values.resize(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= kspace.size())
      throw std::invalid_argument("apply_mask: index out of range");
    out.values[b] = kspace[indices[b]];
  }
  return out;
}

/// M*: scatters measurements back onto the full k-space grid, zero elsewhere.
inline ComplexImage adjoint_mask(const KSpaceData& data) {
  ComplexImage out(data.grid_dims);
  if (data.values.size() != data.indices.size())
    throw std::invalid_argument("adjoint_mask: value/index length mismatch");
  for (std::size_t b = 0; b < data.indices.size(); ++b) {
    if (data.indices[b] >= out.size())
      throw std::invalid_argument("adjoint_mask: index out of range");
    out[data.indices[b]] = data.values[b];
  }
  return out;
}

// ---------------------------------------------------------------------------
// The composed sensing chain. One implementation serves both uses:
//   * coherence / phase-transition analysis: source grid N, modulation grid
//     N_c (the (1+|w|)-extended grid);
//   * measurement simulation and reconstruction: source grid N_c, modulation
//     grid N_u (the (1+2|w|)-extended grid).
// Forward: gather_mask . F . C . U ; adjoint is the reverse chain of
// adjoints. With a readout-varying chirp the Fourier transform is split
// around the modulation: F_xy . C(k_z) . F_z.
// ---------------------------------------------------------------------------
class SpreadSpectrumOperator {
 public:
  SpreadSpectrumOperator(std::vector<std::size_t> base_n, std::vector<std::size_t> src_dims,
                         std::vector<std::size_t> mod_dims, ChirpSpec chirp,
                         std::vector<std::size_t> mask_indices)
      : base_n_(std::move(base_n)),
        src_(std::move(src_dims)),
        mod_(std::move(mod_dims)),
        chirp_(std::move(chirp)),
        indices_(std::move(mask_indices)) {
    const std::size_t d = src_.size();
    if (base_n_.size() != d || mod_.size() != d)
      throw std::invalid_argument("SpreadSpectrumOperator: grid dimensionality mismatch");
    if (chirp_.mode == ChirpMode::kReadoutVarying) {
      if (d != 3)
        throw std::invalid_argument("SpreadSpectrumOperator: varying chirp requires d=3");
      if (chirp_.schedule.size() != mod_[0])
        throw std::invalid_argument("SpreadSpectrumOperator: schedule length != N_z");
    }
    const std::size_t total = total_size(mod_);
    if (indices_.empty())
      throw std::invalid_argument("SpreadSpectrumOperator: empty mask");
    for (std::size_t idx : indices_)
      if (idx >= total)
        throw std::invalid_argument("SpreadSpectrumOperator: mask index out of range");
  }

  std::size_t domain_size() const { return total_size(src_); }
  std::size_t range_size() const { return indices_.size(); }
  const std::vector<std::size_t>& source_dims() const { return src_; }
  const std::vector<std::size_t>& modulation_dims() const { return mod_; }
  const std::vector<std::size_t>& mask_indices() const { return indices_; }
  const ChirpSpec& chirp() const { return chirp_; }

  /// Full modulated spectrum on the modulation grid (the chain without the
  /// mask); useful for building measurements and diagnostics.
  ComplexImage modulated_spectrum(const ComplexImage& rho) const {
    if (rho.dims != src_)
      throw std::invalid_argument("SpreadSpectrumOperator: wrong source grid");
    if (chirp_.mode == ChirpMode::kConstant) {
      ComplexImage u = upsample(rho, mod_);
      u = chirp_modulate(u, base_n_, chirp_, false);
      fft_inplace(u.data, u.dims, all_axes(u.dims.size()), FFTW_FORWARD);
      return u;
    }
    // Readout-varying: F_xy . C(k_z) . F_z . U. The z-transform of the
    // upsample cancels against F_z, leaving F_xy . C . IF_xy . embed . F.
    ComplexImage u = fourier_forward(rho);
    u = embed_spectrum(u, mod_);
    fft_inplace(u.data, u.dims, 0b110u, FFTW_BACKWARD);
    u = chirp_modulate(u, base_n_, chirp_, false);
    fft_inplace(u.data, u.dims, 0b110u, FFTW_FORWARD);
    return u;
  }

  KSpaceData forward(const ComplexImage& rho) const {
    return apply_mask(modulated_spectrum(rho), indices_);
  }

  ComplexImage adjoint(const KSpaceData& data) const {
    if (data.grid_dims != mod_)
      throw std::invalid_argument("SpreadSpectrumOperator: wrong measurement grid");
    ComplexImage full = adjoint_mask(data);
    if (chirp_.mode == ChirpMode::kConstant) {
      fft_inplace(full.data, full.dims, all_axes(full.dims.size()), FFTW_BACKWARD);
      full = chirp_modulate(full, base_n_, chirp_, true);
    } else {
      // Mirror of the fused forward chain: IF . crop . F_xy . C* . IF_xy.
      fft_inplace(full.data, full.dims, 0b110u, FFTW_BACKWARD);
      full = chirp_modulate(full, base_n_, chirp_, true);
      fft_inplace(full.data, full.dims, 0b110u, FFTW_FORWARD);
      full = crop_spectrum(full, src_);
      fft_inplace(full.data, full.dims, all_axes(full.dims.size()), FFTW_BACKWARD);
      return full;
    }
    return downsample(full, src_);
  }

  /// Vector-in/vector-out wrappers for solvers.
  std::vector<Complex> forward_vec(const std::vector<Complex>& x) const {
    ComplexImage img(src_);
    if (x.size() != img.size())
      throw std::invalid_argument("SpreadSpectrumOperator: wrong domain size");
    img.data = x;
    return forward(img).values;
  }

  std::vector<Complex> adjoint_vec(const std::vector<Complex>& y) const {
    if (y.size() != indices_.size())
      throw std::invalid_argument("SpreadSpectrumOperator: wrong range size");
    KSpaceData data;
    data.values = y;
    data.indices = indices_;
    data.grid_dims = mod_;
    return adjoint(data).data;
  }

 private:
  std::vector<std::size_t> base_n_;
  std::vector<std::size_t> src_;
  std::vector<std::size_t> mod_;
  ChirpSpec chirp_;
  std::vector<std::size_t> indices_;
};

/// Measurement chain of the constant-rate model: source on the
/// reconstruction grid, modulation on the anti-aliasing grid.
inline SpreadSpectrumOperator make_sensing_operator(const GridSpec& grids,
                                                    const ChirpSpec& chirp,
                                                    std::vector<std::size_t> mask_indices) {
  return SpreadSpectrumOperator(grids.n, grids.n_rec, grids.n_mod, chirp,
                                std::move(mask_indices));
}

inline KSpaceData sensing_forward(const ComplexImage& rho, const GridSpec& grids,
                                  const ChirpSpec& chirp,
                                  const std::vector<std::size_t>& mask_indices) {
  return make_sensing_operator(grids, chirp, mask_indices).forward(rho);
}

inline ComplexImage sensing_adjoint(const KSpaceData& data, const GridSpec& grids,
                                    const ChirpSpec& chirp) {
  return make_sensing_operator(grids, chirp, data.indices).adjoint(data);
}

/// Readout-varying chain (one chirp rate pair per k_z plane).
inline KSpaceData sensing_forward_varying(const ComplexImage& rho, const GridSpec& grids,
                                          const ChirpSpec& schedule,
                                          const std::vector<std::size_t>& mask_indices) {
  if (schedule.mode != ChirpMode::kReadoutVarying)
    throw std::invalid_argument("sensing_forward_varying: need a readout-varying ChirpSpec");
  return make_sensing_operator(grids, schedule, mask_indices).forward(rho);
}

inline ComplexImage sensing_adjoint_varying(const KSpaceData& data, const GridSpec& grids,
                                            const ChirpSpec& schedule) {
  if (schedule.mode != ChirpMode::kReadoutVarying)
    throw std::invalid_argument("sensing_adjoint_varying: need a readout-varying ChirpSpec");
  return make_sensing_operator(grids, schedule, data.indices).adjoint(data);
}

/// Chirp rate schedule of a quadratic-field acquisition. During one readout
/// of duration dt centered on the echo time TE, sample m (of N_z) is taken at
///   t_m = TE - dt/2 + (m + 1/2) dt / N_z
/// and sees the physical rate w(t_m) = gamma kappa t_m / pi applied as
/// (w_x, w_y) = (+w, -w). The readout sweeps k_z monotonically, so sample m
/// measures frequency f = m - N_z/2; the returned schedule stores each rate
/// pair at the storage plane of its frequency.
inline ChirpSpec chirp_rate_schedule(double kappa, double echo_time, double readout_duration,
                                     double gamma, const FieldOfView& fov,
                                     const std::vector<std::size_t>& n) {
  if (!(readout_duration > 0.0))
    throw std::invalid_argument("chirp_rate_schedule: readout duration must be positive");
  if (n.size() != 3 || fov.dim() != 3)
    throw std::invalid_argument("chirp_rate_schedule: needs a 3D grid");
  const std::size_t n_z = n[0];
  if (n_z < 1) throw std::invalid_argument("chirp_rate_schedule: N_z must be >= 1");

  const double pi = 3.14159265358979323846;
  std::vector<ChirpRates> schedule(n_z);
  for (std::size_t m = 0; m < n_z; ++m) {
    const double t = echo_time - readout_duration / 2.0 +
                     (static_cast<double>(m) + 0.5) * readout_duration /
                         static_cast<double>(n_z);
    const double w = gamma * kappa * t / pi;
    const long long f = static_cast<long long>(m) - static_cast<long long>(n_z) / 2;
    ChirpRates r;
    r.x = discrete_chirp_rate(w, fov.x(), static_cast<long long>(n[2]));
    r.y = discrete_chirp_rate(-w, fov.y(), static_cast<long long>(n[1]));
    schedule[index_of_freq(f, n_z)] = r;
  }
  return ChirpSpec::ReadoutVarying(std::move(schedule));
}

}  // namespace s2
