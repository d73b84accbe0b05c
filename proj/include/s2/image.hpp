#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace s2 {

using Complex = std::complex<double>;

inline std::size_t total_size(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

/// Dense complex array over a d-dimensional grid. Storage is row-major with
/// the *slowest* axis first, so a 3D volume is laid out (z, y, x) and the x
/// axis is contiguous.
struct ComplexImage {
  std::vector<std::size_t> dims;
  std::vector<Complex> data;

  ComplexImage() = default;
  explicit ComplexImage(std::vector<std::size_t> d)
      : dims(std::move(d)), data(total_size(dims), Complex{0.0, 0.0}) {}

  std::size_t size() const { return data.size(); }

  Complex& operator[](std::size_t i) { return data[i]; }
  const Complex& operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const ComplexImage& other) const { return dims == other.dims; }
};

inline double norm2_sq(const ComplexImage& x) {
  double s = 0.0;
  for (const Complex& v : x.data) s += std::norm(v);
  return s;
}

inline double norm2(const ComplexImage& x) { return std::sqrt(norm2_sq(x)); }

inline Complex dot(const ComplexImage& a, const ComplexImage& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  Complex s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a.data[i]) * b.data[i];
  return s;
}

inline double norm2_sq(const std::vector<Complex>& x) {
  double s = 0.0;
  for (const Complex& v : x) s += std::norm(v);
  return s;
}

inline double norm2(const std::vector<Complex>& x) { return std::sqrt(norm2_sq(x)); }

inline Complex dot(const std::vector<Complex>& a, const std::vector<Complex>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  Complex s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

/// Measured k-space samples together with the flat indices they were taken
/// from. Index i refers to the row-major position inside the modulation grid
/// whose dims are recorded alongside.
struct KSpaceData {
  std::vector<Complex> values;
  std::vector<std::size_t> indices;   // sorted, row-major into `grid_dims`
  std::vector<std::size_t> grid_dims; // grid the indices address
};

}  // namespace s2
