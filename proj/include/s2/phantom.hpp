#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "s2/image.hpp"
#include "s2/rng.hpp"

namespace s2 {

/// One ellipse (2D) or ellipsoid (3D): centers and semi-axes are in
/// normalized coordinates (the field of view spans [-1, 1) per axis),
/// `rotation` rotates the x-y cross-section in radians, and the complex
/// amplitude adds on top of any overlapping shapes.
struct Ellipse {
  double center_x = 0.0;
  double center_y = 0.0;
  double center_z = 0.0;
  double semi_x = 0.0;
  double semi_y = 0.0;
  double semi_z = 0.0;
  double rotation = 0.0;
  Complex amplitude{0.0, 0.0};
};

/// Synthetic complex phantom: piecewise-constant ellipse superposition times
/// a unimodular smooth phase e^{i phi(x,y)} with
///   phi = c0 + cx x + cy y + cxx x^2 + cyy y^2 + cxy x y
/// in normalized coordinates. Optional seeded texture adds white noise of the
/// given amplitude inside the support (amplitude 0 disables it).
struct PhantomSpec {
  std::vector<std::size_t> dims;  // slowest-first, 1 to 3 axes
  std::vector<Ellipse> ellipses;
  double phase_c0 = 0.0, phase_cx = 0.0, phase_cy = 0.0;
  double phase_cxx = 0.0, phase_cyy = 0.0, phase_cxy = 0.0;
  double texture_amplitude = 0.0;
  std::uint64_t texture_seed = 0;
};

namespace detail {

inline double normalized_coordinate(std::size_t i, std::size_t n) {
  return (2.0 * static_cast<double>(i) - static_cast<double>(n)) / static_cast<double>(n);
}

}  // namespace detail

inline ComplexImage make_phantom(const PhantomSpec& spec) {
  const std::size_t d = spec.dims.size();
  if (d < 1 || d > 3) throw std::invalid_argument("make_phantom: need 1 to 3 dims");
  for (std::size_t n : spec.dims)
    if (n < 1) throw std::invalid_argument("make_phantom: sizes must be >= 1");
  for (const auto& e : spec.ellipses) {
    if (!(std::isfinite(e.amplitude.real()) && std::isfinite(e.amplitude.imag())))
      throw std::invalid_argument("make_phantom: amplitude must be finite");
    if (std::abs(e.center_x) > 1.0 || std::abs(e.center_y) > 1.0 || std::abs(e.center_z) > 1.0)
      throw std::invalid_argument("make_phantom: ellipse center outside the field of view");
    if (e.semi_x < 0.0 || e.semi_y < 0.0 || e.semi_z < 0.0)
      throw std::invalid_argument("make_phantom: semi-axes must be >= 0");
  }

  const std::size_t nx = spec.dims[d - 1];
  const std::size_t ny = d >= 2 ? spec.dims[d - 2] : 1;
  const std::size_t nz = d >= 3 ? spec.dims[0] : 1;
  ComplexImage img(spec.dims);

  for (std::size_t iz = 0; iz < nz; ++iz) {
    const double z = d >= 3 ? detail::normalized_coordinate(iz, nz) : 0.0;
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const double y = d >= 2 ? detail::normalized_coordinate(iy, ny) : 0.0;
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double x = detail::normalized_coordinate(ix, nx);
        Complex value{0.0, 0.0};
        for (const auto& e : spec.ellipses) {
          const double dx = x - e.center_x;
          const double dy = y - e.center_y;
          const double dz = z - e.center_z;
          const double c = std::cos(e.rotation), s = std::sin(e.rotation);
          const double xr = c * dx + s * dy;
          const double yr = -s * dx + c * dy;
          double q = 0.0;
          if (e.semi_x > 0.0) {
            q += (xr / e.semi_x) * (xr / e.semi_x);
          } else if (xr != 0.0) {
            continue;
          }
          if (d >= 2) {
            if (e.semi_y > 0.0) {
              q += (yr / e.semi_y) * (yr / e.semi_y);
            } else if (yr != 0.0) {
              continue;
            }
          }
          if (d >= 3) {
            if (e.semi_z > 0.0) {
              q += (dz / e.semi_z) * (dz / e.semi_z);
            } else if (dz != 0.0) {
              continue;
            }
          }
          if (q <= 1.0) value += e.amplitude;
        }
        const double phi = spec.phase_c0 + spec.phase_cx * x + spec.phase_cy * y +
                           spec.phase_cxx * x * x + spec.phase_cyy * y * y +
                           spec.phase_cxy * x * y;
        img[(iz * ny + iy) * nx + ix] = value * Complex{std::cos(phi), std::sin(phi)};
      }
    }
  }

  if (spec.texture_amplitude > 0.0) {
    Rng rng(spec.texture_seed);
    for (std::size_t j = 0; j < img.size(); ++j) {
      // texture only where the phantom has support, so the background stays 0
      const Complex t{rng.gaussian(), rng.gaussian()};
      if (std::abs(img[j]) > 0.0) img[j] += spec.texture_amplitude * t;
    }
  }
  return img;
}

/// Extracts one row (fastest axis) of a 2D image as a 1D signal.
inline std::vector<Complex> make_test_line(const ComplexImage& img, std::size_t row) {
  if (img.dims.size() != 2) throw std::invalid_argument("make_test_line: need a 2D image");
  const std::size_t ny = img.dims[0], nx = img.dims[1];
  if (row >= ny) throw std::invalid_argument("make_test_line: row out of range");
  std::vector<Complex> line(nx);
  for (std::size_t i = 0; i < nx; ++i) line[i] = img[row * nx + i];
  return line;
}

namespace detail {

/// Standard head-phantom ellipse table (high-contrast variant), plus the
/// fourth semi-axis and z offsets used by the 3D version.
struct PhantomRow {
  double amp, sx, sy, sz, cx, cy, cz, deg;
};

inline const std::vector<PhantomRow>& phantom_rows() {
  static const std::vector<PhantomRow> rows = {
      {1.0, 0.69, 0.92, 0.81, 0.0, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.874, 0.78, 0.0, -0.0184, 0.0, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.22, 0.0, 0.0, -18.0},
      {-0.2, 0.16, 0.41, 0.28, -0.22, 0.0, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.41, 0.0, 0.35, -0.15, 0.0},
      {0.1, 0.046, 0.046, 0.05, 0.0, 0.1, 0.25, 0.0},
      {0.1, 0.046, 0.046, 0.05, 0.0, -0.1, 0.25, 0.0},
      {0.1, 0.046, 0.023, 0.05, -0.08, -0.605, 0.0, 0.0},
      {0.1, 0.023, 0.023, 0.02, 0.0, -0.606, 0.0, 0.0},
      {0.1, 0.023, 0.046, 0.02, 0.06, -0.605, 0.0, 0.0},
  };
  return rows;
}

inline PhantomSpec head_phantom_spec(std::vector<std::size_t> dims) {
  const double pi = 4.0 * std::atan(1.0);
  PhantomSpec spec;
  spec.dims = std::move(dims);
  const bool is3d = spec.dims.size() == 3;
  for (const auto& r : phantom_rows()) {
    Ellipse e;
    e.amplitude = Complex{r.amp, 0.0};
    e.semi_x = r.sx;
    e.semi_y = r.sy;
    e.semi_z = is3d ? r.sz : 0.0;
    e.center_x = r.cx;
    e.center_y = r.cy;
    e.center_z = is3d ? r.cz : 0.0;
    e.rotation = r.deg * pi / 180.0;
    spec.ellipses.push_back(e);
  }
  // smooth quadratic phase standing in for field inhomogeneity
  spec.phase_c0 = 0.1;
  spec.phase_cx = 0.3;
  spec.phase_cy = -0.2;
  spec.phase_cxx = 2.0;
  spec.phase_cyy = -1.5;
  spec.phase_cxy = 0.8;
  return spec;
}

}  // namespace detail

/// 2D head phantom, complex-valued via the quadratic phase map.
inline ComplexImage shepp2d(std::size_t n) {
  return make_phantom(detail::head_phantom_spec({n, n}));
}

/// 3D head phantom (z, y, x storage order).
inline ComplexImage shepp3d(std::size_t n) {
  return make_phantom(detail::head_phantom_spec({n, n, n}));
}

/// Fixed 1D test signal: row at 55% height of the n-by-n 2D phantom, which
/// crosses the two tilted interior ellipses.
inline std::vector<Complex> test_line(std::size_t n) {
  return make_test_line(shepp2d(n), (n * 55) / 100);
}

}  // namespace s2
