#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "s2/image.hpp"
#include "s2/rng.hpp"

namespace s2 {

/// I.i.d. complex Gaussian measurement noise: sigma is the standard
/// deviation of each real and each imaginary part, identical across
/// measurements.
struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Data-fidelity radius: eps^2 is a high percentile of the chi-square
/// distribution with 2M' degrees of freedom (M' = measurement count).
struct FidelityBound {
  std::size_t m = 0;
  double percentile = 0.99;
  double eps_sq = 0.0;
};

/// sigma = mean(|rho_i|) / snr.
inline double sigma_from_snr(const ComplexImage& rho, double snr) {
  if (!(snr > 0.0)) throw std::invalid_argument("sigma_from_snr: snr must be positive");
  double mean = 0.0;
  for (const Complex& v : rho.data) mean += std::abs(v);
  mean /= static_cast<double>(rho.size());
  if (mean == 0.0) throw std::invalid_argument("sigma_from_snr: zero signal");
  return mean / snr;
}

/// Adds N(0, sigma^2) independently to the real and imaginary part of every
/// measurement. sigma = 0 returns the input untouched.
inline KSpaceData add_noise(const KSpaceData& nu, const NoiseModel& model) {
  if (model.sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be >= 0");
  if (model.sigma == 0.0) return nu;
  KSpaceData out = nu;
  Rng rng(model.seed);
  for (Complex& v : out.values)
    v += Complex{model.sigma * rng.gaussian(), model.sigma * rng.gaussian()};
  return out;
}

/// chi^2 statistic of a residual: sum_b |r_b|^2 / sigma^2. Under the noise
/// model this follows a chi-square law with 2M degrees of freedom.
inline double chi2(const std::vector<Complex>& residual, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("chi2: sigma must be positive");
  double s = 0.0;
  for (const Complex& v : residual) s += std::norm(v);
  return s / (sigma * sigma);
}

inline double chi2(const KSpaceData& residual, double sigma) {
  return chi2(residual.values, sigma);
}

namespace detail {

/// Acklam's rational approximation to the standard normal quantile
/// (relative error ~1.2e-9 over (0,1)).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// `percentile` quantile of the chi-square distribution with 2M' degrees of
/// freedom, by the Wilson-Hilferty cube approximation
///   chi2_q(k) ~ k (1 - 2/(9k) + z_q sqrt(2/(9k)))^3.
inline double epsilon_squared(std::size_t m_prime, double percentile = 0.99) {
  if (m_prime < 1) throw std::invalid_argument("epsilon_squared: M' must be >= 1");
  const double k = 2.0 * static_cast<double>(m_prime);
  const double z = detail::normal_quantile(percentile);
  const double a = 2.0 / (9.0 * k);
  const double t = 1.0 - a + z * std::sqrt(a);
  return k * t * t * t;
}

inline FidelityBound make_fidelity_bound(std::size_t m_prime, double percentile = 0.99) {
  FidelityBound b;
  b.m = m_prime;
  b.percentile = percentile;
  b.eps_sq = epsilon_squared(m_prime, percentile);
  return b;
}

/// ||rho - rho_star||_2 / ||rho||_2.
inline double relative_error(const ComplexImage& rho, const ComplexImage& rho_star) {
  if (!rho.same_shape(rho_star)) throw std::invalid_argument("relative_error: shape mismatch");
  const double ref = norm2(rho);
  if (ref == 0.0) throw std::invalid_argument("relative_error: zero reference");
  double diff = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) diff += std::norm(rho[i] - rho_star[i]);
  return std::sqrt(diff) / ref;
}

/// Recovery criterion ||rho - rho_star||_2 <= 1e-3 ||rho||_2, inclusive; the
/// tiny slack keeps the boundary case (a uniform 1e-3 perturbation) on the
/// recovered side under round-off.
inline bool is_recovered(const ComplexImage& rho, const ComplexImage& rho_star) {
  return relative_error(rho, rho_star) <= 1e-3 * (1.0 + 1e-12);
}

}  // namespace s2
