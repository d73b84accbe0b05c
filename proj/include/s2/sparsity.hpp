#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "s2/fft.hpp"
#include "s2/image.hpp"

namespace s2 {

enum class BasisKind { kDirac, kHaar, kFourier };

/// Orthonormal sparsity basis over a rectangular grid. Haar is the periodic
/// full-depth decomposition (each axis size must be a power of two, depth
/// log2 n); in several dimensions both Haar and Fourier act separably.
struct SparsityBasis {
  BasisKind kind = BasisKind::kDirac;
  std::vector<std::size_t> dims;

  SparsityBasis(BasisKind k, std::vector<std::size_t> d) : kind(k), dims(std::move(d)) {
    if (dims.empty()) throw std::invalid_argument("SparsityBasis: empty grid");
    if (kind == BasisKind::kHaar)
      for (std::size_t n : dims)
        if (n == 0 || (n & (n - 1)) != 0)
          throw std::invalid_argument("SparsityBasis: haar requires power-of-two sizes");
  }

  std::size_t size() const { return total_size(dims); }
};

namespace detail {

/// One full-depth forward Haar cascade along a contiguous line of length n
/// (stride handled by caller through gather/scatter into `line`).
inline void haar_line_forward(std::vector<Complex>& line) {
  const std::size_t n = line.size();
  const double inv_sqrt2 = 0.70710678118654752440;
  std::vector<Complex> tmp(n);
  for (std::size_t len = n; len >= 2; len /= 2) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      tmp[k] = (line[2 * k] + line[2 * k + 1]) * inv_sqrt2;
      tmp[half + k] = (line[2 * k] - line[2 * k + 1]) * inv_sqrt2;
    }
    std::copy(tmp.begin(), tmp.begin() + len, line.begin());
  }
}

/// Inverse of haar_line_forward.
inline void haar_line_inverse(std::vector<Complex>& line) {
  const std::size_t n = line.size();
  const double inv_sqrt2 = 0.70710678118654752440;
  std::vector<Complex> tmp(n);
  for (std::size_t len = 2; len <= n; len *= 2) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      tmp[2 * k] = (line[k] + line[half + k]) * inv_sqrt2;
      tmp[2 * k + 1] = (line[k] - line[half + k]) * inv_sqrt2;
    }
    std::copy(tmp.begin(), tmp.begin() + len, line.begin());
  }
}

inline void haar_transform(std::vector<Complex>& data, const std::vector<std::size_t>& dims,
                           bool inverse) {
  std::vector<std::size_t> stride(dims.size(), 1);
  for (std::size_t a = dims.size(); a-- > 1;) stride[a - 1] = stride[a] * dims[a];
  const std::size_t total = data.size();
  std::vector<Complex> line;
  for (std::size_t a = 0; a < dims.size(); ++a) {
    const std::size_t n = dims[a];
    if (n == 1) continue;
    line.resize(n);
    for (std::size_t base = 0; base < total; ++base) {
      if ((base / stride[a]) % n != 0) continue;
      for (std::size_t k = 0; k < n; ++k) line[k] = data[base + k * stride[a]];
      if (inverse)
        haar_line_inverse(line);
      else
        haar_line_forward(line);
      for (std::size_t k = 0; k < n; ++k) data[base + k * stride[a]] = line[k];
    }
  }
}

}  // namespace detail

/// Psi: coefficient vector -> signal.
inline std::vector<Complex> synthesize(const SparsityBasis& basis,
                                       const std::vector<Complex>& coeffs) {
  if (coeffs.size() != basis.size())
    throw std::invalid_argument("synthesize: coefficient length mismatch");
  std::vector<Complex> out = coeffs;
  switch (basis.kind) {
    case BasisKind::kDirac:
      break;
    case BasisKind::kHaar:
      detail::haar_transform(out, basis.dims, /*inverse=*/true);
      break;
    case BasisKind::kFourier:
      fft_inplace(out, basis.dims, all_axes(basis.dims.size()), FFTW_BACKWARD);
      break;
  }
  return out;
}

/// Psi*: signal -> coefficient vector. Inverse (and adjoint) of synthesize.
inline std::vector<Complex> analyze(const SparsityBasis& basis,
                                    const std::vector<Complex>& signal) {
  if (signal.size() != basis.size())
    throw std::invalid_argument("analyze: signal length mismatch");
  std::vector<Complex> out = signal;
  switch (basis.kind) {
    case BasisKind::kDirac:
      break;
    case BasisKind::kHaar:
      detail::haar_transform(out, basis.dims, /*inverse=*/false);
      break;
    case BasisKind::kFourier:
      fft_inplace(out, basis.dims, all_axes(basis.dims.size()), FFTW_FORWARD);
      break;
  }
  return out;
}

/// Keeps the K largest-magnitude coefficients and zeroes the rest. Ties are
/// broken toward the lower index.
inline std::vector<Complex> hard_threshold(const std::vector<Complex>& coeffs,
                                           std::size_t k) {
  if (k < 1 || k > coeffs.size())
    throw std::invalid_argument("hard_threshold: K out of range");
  std::vector<std::size_t> order(coeffs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::norm(coeffs[a]) > std::norm(coeffs[b]);
  });
  std::vector<Complex> out(coeffs.size(), Complex{0.0, 0.0});
  for (std::size_t i = 0; i < k; ++i) out[order[i]] = coeffs[order[i]];
  return out;
}

// ---------------------------------------------------------------------------
// Discrete gradient / total variation. Forward differences with a Neumann
// boundary (the last difference along each axis is zero), so constants have
// exactly zero gradient. divergence is the negative adjoint:
// <grad u, v> = -<u, div v>.
// ---------------------------------------------------------------------------

/// One gradient component per axis, each the same shape as the input.
inline std::vector<std::vector<Complex>> gradient(const ComplexImage& img) {
  const std::size_t d = img.dims.size();
  std::vector<std::size_t> stride(d, 1);
  for (std::size_t a = d; a-- > 1;) stride[a - 1] = stride[a] * img.dims[a];
  std::vector<std::vector<Complex>> g(d, std::vector<Complex>(img.size(), Complex{0.0, 0.0}));
  for (std::size_t a = 0; a < d; ++a) {
    const std::size_t n = img.dims[a];
    for (std::size_t j = 0; j < img.size(); ++j) {
      const std::size_t coord = (j / stride[a]) % n;
      if (coord + 1 < n) g[a][j] = img[j + stride[a]] - img[j];
    }
  }
  return g;
}

inline ComplexImage divergence(const std::vector<std::vector<Complex>>& field,
                               const std::vector<std::size_t>& dims) {
  const std::size_t d = dims.size();
  if (field.size() != d) throw std::invalid_argument("divergence: component count mismatch");
  std::vector<std::size_t> stride(d, 1);
  for (std::size_t a = d; a-- > 1;) stride[a - 1] = stride[a] * dims[a];
  ComplexImage out(dims);
  for (std::size_t a = 0; a < d; ++a) {
    if (field[a].size() != out.size())
      throw std::invalid_argument("divergence: component size mismatch");
    const std::size_t n = dims[a];
    for (std::size_t j = 0; j < out.size(); ++j) {
      const std::size_t coord = (j / stride[a]) % n;
      Complex v{0.0, 0.0};
      if (coord + 1 < n) v += field[a][j];
      if (coord > 0) v -= field[a][j - stride[a]];
      out[j] += v;
    }
  }
  return out;
}

/// Isotropic total variation: sum over pixels of the Euclidean norm of the
/// complex gradient vector (complex modulus per component).
inline double tv_norm(const ComplexImage& img) {
  const auto g = gradient(img);
  double sum = 0.0;
  for (std::size_t j = 0; j < img.size(); ++j) {
    double s = 0.0;
    for (const auto& comp : g) s += std::norm(comp[j]);
    sum += std::sqrt(s);
  }
  return sum;
}

}  // namespace s2
