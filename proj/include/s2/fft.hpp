#pragma once

#include <fftw3.h>

#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "s2/image.hpp"

namespace s2 {
namespace detail {

/// One cached FFTW plan: a fixed shape, a fixed set of transformed axes and a
/// fixed sign. The plan owns an aligned scratch buffer; callers' data is
/// copied through it, which keeps planning independent of caller alignment
/// and lets FFTW_ESTIMATE plans stay deterministic.
class FftPlan {
 public:
  FftPlan(std::vector<std::size_t> dims, unsigned axes_mask, int sign)
      : dims_(std::move(dims)), axes_mask_(axes_mask), sign_(sign) {
    total_ = 1;
    for (std::size_t s : dims_) total_ *= s;
    buf_ = fftw_alloc_complex(total_);
    if (!buf_) throw std::bad_alloc();

    // Row-major strides, fastest axis last.
    const std::size_t d = dims_.size();
    std::vector<std::ptrdiff_t> stride(d, 1);
    for (std::size_t a = d; a-- > 1;)
      stride[a - 1] = stride[a] * static_cast<std::ptrdiff_t>(dims_[a]);

    std::vector<fftw_iodim64> tdims, ldims;
    double count = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      fftw_iodim64 io{static_cast<std::ptrdiff_t>(dims_[a]), stride[a], stride[a]};
      if (axes_mask_ & (1u << a)) {
        tdims.push_back(io);
        count *= static_cast<double>(dims_[a]);
      } else {
        ldims.push_back(io);
      }
    }
    scale_ = 1.0 / std::sqrt(count);

    // The FFTW planner is not thread-safe; serialize plan creation globally.
    static std::mutex planner_mutex;
    std::lock_guard<std::mutex> lock(planner_mutex);
    plan_ = fftw_plan_guru64_dft(static_cast<int>(tdims.size()), tdims.data(),
                                 static_cast<int>(ldims.size()), ldims.data(),
                                 buf_, buf_, sign_, FFTW_ESTIMATE);
    if (!plan_) {
      fftw_free(buf_);
      throw std::runtime_error("fft: planner failed");
    }
  }

  ~FftPlan() {
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  bool matches(const std::vector<std::size_t>& dims, unsigned axes_mask, int sign) const {
    return sign == sign_ && axes_mask == axes_mask_ && dims == dims_;
  }

  void execute(Complex* data) const {
    auto* b = reinterpret_cast<Complex*>(buf_);
    for (std::size_t i = 0; i < total_; ++i) b[i] = data[i];
    fftw_execute(plan_);
    for (std::size_t i = 0; i < total_; ++i) data[i] = b[i] * scale_;
  }

 private:
  std::vector<std::size_t> dims_;
  unsigned axes_mask_;
  int sign_;
  std::size_t total_ = 0;
  double scale_ = 1.0;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

inline const FftPlan& fft_plan_for(const std::vector<std::size_t>& dims,
                                   unsigned axes_mask, int sign) {
  thread_local std::vector<std::unique_ptr<FftPlan>> cache;
  for (const auto& p : cache)
    if (p->matches(dims, axes_mask, sign)) return *p;
  cache.push_back(std::make_unique<FftPlan>(dims, axes_mask, sign));
  return *cache.back();
}

}  // namespace detail

/// In-place unitary DFT along the axes selected by `axes_mask` (bit a set =
/// transform axis a; axis 0 is the slowest). `sign` is FFTW_FORWARD or
/// FFTW_BACKWARD; both directions carry the 1/sqrt(n) factor so each is the
/// other's inverse and adjoint.
inline void fft_inplace(std::vector<Complex>& data, const std::vector<std::size_t>& dims,
                        unsigned axes_mask, int sign) {
  if (dims.empty() || dims.size() > 3)
    throw std::invalid_argument("fft_inplace: dimensionality must be 1, 2 or 3");
  if (data.size() != total_size(dims))
    throw std::invalid_argument("fft_inplace: data size does not match dims");
  if (axes_mask == 0) return;
  if (axes_mask >= (1u << dims.size()))
    throw std::invalid_argument("fft_inplace: axes mask out of range");
  detail::fft_plan_for(dims, axes_mask, sign).execute(data.data());
}

inline unsigned all_axes(std::size_t d) { return (1u << d) - 1u; }

/// Unitary multi-dimensional DFT over all axes.
inline ComplexImage fourier_forward(const ComplexImage& img) {
  ComplexImage out = img;
  fft_inplace(out.data, out.dims, all_axes(out.dims.size()), FFTW_FORWARD);
  return out;
}

/// Inverse (= adjoint) of fourier_forward.
inline ComplexImage fourier_inverse(const ComplexImage& img) {
  ComplexImage out = img;
  fft_inplace(out.data, out.dims, all_axes(out.dims.size()), FFTW_BACKWARD);
  return out;
}

}  // namespace s2
