#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2/grid.hpp"
#include "s2/operators.hpp"
#include "s2/sparsity.hpp"

namespace s2 {

struct CoherenceReport {
  BasisKind basis = BasisKind::kDirac;
  double w_bar = 0.0;
  std::size_t n = 0;
  std::size_t n_c = 0;
  double mu = 0.0;
  double product = 0.0;  // N_c * mu^2
};

inline const char* basis_name(BasisKind k) {
  switch (k) {
    case BasisKind::kDirac:
      return "dirac";
    case BasisKind::kHaar:
      return "haar";
    case BasisKind::kFourier:
      return "fourier";
  }
  return "?";
}

/// Mutual coherence of the chirped Fourier sensing chain against a sparsity
/// basis (1D analysis setting): mu is the largest modulus among the unitary
/// Fourier coefficients of C U psi_i over all basis vectors psi_i, where U
/// up-samples from the base grid N onto the chirp-extended grid N_c. The
/// recovery-governing figure is the product N_c * mu^2.
inline CoherenceReport mutual_coherence(double w_bar, BasisKind basis, std::size_t n) {
  if (n < 1) throw std::invalid_argument("mutual_coherence: N must be >= 1");
  const SparsityBasis psi(basis, {n});  // validates haar power-of-two

  const auto chirp = ChirpSpec::Constant(w_bar);
  const auto grids = make_grids({n}, FieldOfView({1.0}), chirp);
  const std::size_t n_c = grids.n_rec[0];

  // Chain with source on the base grid and modulation on the extended grid;
  // the mask plays no role here (we scan the full spectrum).
  SpreadSpectrumOperator op({n}, {n}, {n_c}, chirp, {0});

  double mu_sq = 0.0;
  std::vector<Complex> unit(n, Complex{0.0, 0.0});
  ComplexImage col({n});
  for (std::size_t i = 0; i < n; ++i) {
    unit[i] = 1.0;
    col.data = synthesize(psi, unit);
    unit[i] = 0.0;
    const ComplexImage spectrum = op.modulated_spectrum(col);
    for (const Complex& v : spectrum.data) mu_sq = std::max(mu_sq, std::norm(v));
  }

  CoherenceReport r;
  r.basis = basis;
  r.w_bar = w_bar;
  r.n = n;
  r.n_c = n_c;
  r.mu = std::sqrt(mu_sq);
  r.product = static_cast<double>(n_c) * mu_sq;
  return r;
}

}  // namespace s2
