#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "s2/coherence.hpp"

TEST_CASE("zero-rate chain is an orthonormal change of basis") {
  // dirac vs fourier is maximally incoherent: mu = 1/sqrt(N), product 1
  for (std::size_t n : {16u, 64u, 256u}) {
    const auto r = s2::mutual_coherence(0.0, s2::BasisKind::kDirac, n);
    CHECK(r.n_c == n);
    CHECK(r.mu == doctest::Approx(1.0 / std::sqrt(static_cast<double>(n))).epsilon(1e-12));
    CHECK(r.product == doctest::Approx(1.0).epsilon(1e-12));
  }
  // fourier vs fourier is maximally coherent: mu = 1, product N
  const auto f = s2::mutual_coherence(0.0, s2::BasisKind::kFourier, 256);
  CHECK(f.mu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.product == doctest::Approx(256.0).epsilon(1e-10));
  // haar's worst column is the finest wavelet, also mu = 1 up to DFT modulus
  const auto h = s2::mutual_coherence(0.0, s2::BasisKind::kHaar, 256);
  CHECK(h.product == doctest::Approx(256.0).epsilon(0.02));

  // orthonormal bounds N^{-1/2} <= mu <= 1 hold exactly at zero rate
  for (auto kind : {s2::BasisKind::kDirac, s2::BasisKind::kHaar, s2::BasisKind::kFourier}) {
    const auto r = s2::mutual_coherence(0.0, kind, 64);
    CHECK(r.mu >= 1.0 / 8.0 - 1e-12);
    CHECK(r.mu <= 1.0 + 1e-12);
  }
}

TEST_CASE("chirp modulation lowers haar/fourier coherence products") {
  // the whole point of the spread-spectrum chain: at N=256 the product
  // N_c mu^2 drops sharply for bases that start out coherent
  const auto h0 = s2::mutual_coherence(0.0, s2::BasisKind::kHaar, 256);
  const auto h3 = s2::mutual_coherence(0.3, s2::BasisKind::kHaar, 256);
  CHECK(h3.product < 0.2 * h0.product);
  const auto f0 = s2::mutual_coherence(0.0, s2::BasisKind::kFourier, 256);
  const auto f3 = s2::mutual_coherence(0.3, s2::BasisKind::kFourier, 256);
  CHECK(f3.product < 0.2 * f0.product);
  // while dirac (already incoherent) pays only a mild penalty
  const auto d3 = s2::mutual_coherence(0.3, s2::BasisKind::kDirac, 256);
  CHECK(d3.product > 1.0);
  CHECK(d3.product < 5.0);
}

TEST_CASE("matches the explicitly assembled N_c x N matrix at N=16") {
  const std::size_t n = 16;
  const double w = 0.3;
  const auto grids =
      s2::make_grids({n}, s2::FieldOfView({1.0}), s2::ChirpSpec::Constant(w));
  const std::size_t n_c = grids.n_rec[0];
  std::vector<std::size_t> all(n_c);
  std::iota(all.begin(), all.end(), 0);

  const auto haar = oracle::haar_matrix(n);
  for (auto kind : {s2::BasisKind::kDirac, s2::BasisKind::kHaar, s2::BasisKind::kFourier}) {
    double mu_sq = 0.0;
    std::vector<oracle::Complex> col(n);
    for (std::size_t j = 0; j < n; ++j) {
      // synthesize basis column j with test-local constructions
      std::vector<oracle::Complex> unit(n, oracle::Complex{0.0, 0.0});
      unit[j] = 1.0;
      if (kind == s2::BasisKind::kDirac) {
        col = unit;
      } else if (kind == s2::BasisKind::kHaar) {
        for (std::size_t i = 0; i < n; ++i) col[i] = haar[j * n + i];
      } else {
        col = oracle::naive_dft(unit, {n}, 0b1u, +1);
      }
      // a global phase on the basis must not change mu
      const oracle::Complex phase{std::cos(0.7), std::sin(0.7)};
      for (auto& v : col) v *= phase;
      const auto meas = oracle::sensing_apply(col, {n}, {n}, {n_c}, w, 0.0, all);
      for (const auto& v : meas) mu_sq = std::max(mu_sq, std::norm(v));
    }
    const auto lib = s2::mutual_coherence(w, kind, n);
    CHECK(lib.mu == doctest::Approx(std::sqrt(mu_sq)).epsilon(1e-12));
    CHECK(lib.n_c == n_c);
    CHECK(lib.product ==
          doctest::Approx(static_cast<double>(n_c) * mu_sq).epsilon(1e-12));
  }
}

TEST_CASE("coherence argument validation") {
  CHECK_THROWS_AS(s2::mutual_coherence(0.1, s2::BasisKind::kHaar, 20),
                  std::invalid_argument);  // haar needs a power of two
  CHECK_THROWS_AS(s2::mutual_coherence(0.1, s2::BasisKind::kDirac, 0),
                  std::invalid_argument);
}
