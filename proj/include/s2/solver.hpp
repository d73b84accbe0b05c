#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "s2/image.hpp"
#include "s2/sparsity.hpp"

namespace s2 {

/// Forward/adjoint pair handed to the solver. Wrap any concrete operator
/// (e.g. SpreadSpectrumOperator::forward_vec / adjoint_vec) in these.
struct LinearMap {
  std::size_t domain = 0;
  std::size_t range = 0;
  std::function<std::vector<Complex>(const std::vector<Complex>&)> forward;
  std::function<std::vector<Complex>(const std::vector<Complex>&)> adjoint;
};

struct SolverOptions {
  std::size_t max_iterations = 500;   // 3000 for phase-transition runs
  double tolerance = 1e-6;            // 1e-8 for phase-transition runs
  double gamma = 1.0;                 // DR proximal step
  double lambda = 1.0;                // DR relaxation, in (0, 2)
  double cg_tolerance = 1e-6;
  std::size_t cg_max_iterations = 100;
  std::size_t tv_prox_iterations = 50;
};

struct SolveReport {
  std::vector<Complex> solution;  // primal variable: alpha (l1) or rho (tv)
  std::size_t iterations = 0;
  double residual_sq = 0.0;  // ||nu - A(solution)||^2 of the reported solution
  double objective = 0.0;    // ||.||_1 or TV of the reported solution
  bool converged = false;
  std::vector<double> rel_change_trace;
};

enum class Problem { kL1Synthesis, kTv };

/// Proximity operator of tau ||.||_1 on complex vectors: shrink each modulus
/// by tau, keep the phase.
inline std::vector<Complex> soft_threshold(const std::vector<Complex>& x, double tau) {
  if (tau < 0.0) throw std::invalid_argument("soft_threshold: tau must be >= 0");
  std::vector<Complex> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mag = std::abs(x[i]);
    out[i] = mag > tau ? x[i] * ((mag - tau) / mag) : Complex{0.0, 0.0};
  }
  return out;
}

/// Projection onto the l2 ball of radius eps centered at nu.
inline std::vector<Complex> project_l2_ball(const std::vector<Complex>& r,
                                            const std::vector<Complex>& nu, double eps) {
  if (eps < 0.0) throw std::invalid_argument("project_l2_ball: eps must be >= 0");
  if (r.size() != nu.size()) throw std::invalid_argument("project_l2_ball: size mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) d2 += std::norm(r[i] - nu[i]);
  const double dist = std::sqrt(d2);
  if (dist <= eps) return r;
  std::vector<Complex> out(r.size());
  const double scale = eps > 0.0 ? eps / dist : 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = nu[i] + (r[i] - nu[i]) * scale;
  return out;
}

/// Proximity operator of lambda * TV by projected gradient on the dual
/// (Chambolle-style): with u(p) = x + lambda div p,
///   p <- project_pairwise(p + grad(u(p)) / (4 d lambda)),
/// where project_pairwise rescales the d-vector at each pixel onto the unit
/// ball. Returns the iterate with the lowest primal energy seen, which makes
/// the result non-increasing in `iterations` by construction.
inline ComplexImage prox_tv(const ComplexImage& x, double lambda, std::size_t iterations) {
  if (lambda < 0.0) throw std::invalid_argument("prox_tv: lambda must be >= 0");
  if (lambda == 0.0 || iterations == 0) return x;
  const std::size_t d = x.dims.size();
  const double step = 1.0 / (4.0 * static_cast<double>(d) * lambda);

  std::vector<std::vector<Complex>> p(d, std::vector<Complex>(x.size(), Complex{0.0, 0.0}));
  ComplexImage u = x;
  ComplexImage best = x;
  double best_energy = lambda * tv_norm(x);  // energy of u = x (zero quadratic term)

  for (std::size_t it = 0; it < iterations; ++it) {
    const auto g = gradient(u);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t j = 0; j < x.size(); ++j) p[a][j] += step * g[a][j];
    // pointwise projection of the cross-axis pair vector onto the unit ball
    for (std::size_t j = 0; j < x.size(); ++j) {
      double m2 = 0.0;
      for (std::size_t a = 0; a < d; ++a) m2 += std::norm(p[a][j]);
      if (m2 > 1.0) {
        const double inv = 1.0 / std::sqrt(m2);
        for (std::size_t a = 0; a < d; ++a) p[a][j] *= inv;
      }
    }
    const ComplexImage div = divergence(p, x.dims);
    for (std::size_t j = 0; j < x.size(); ++j) u[j] = x[j] + lambda * div[j];

    double quad = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) quad += std::norm(u[j] - x[j]);
    const double energy = 0.5 * quad + lambda * tv_norm(u);
    if (energy < best_energy) {
      best_energy = energy;
      best = u;
    }
  }
  return best;
}

namespace detail {

/// Solves (I + B'B) w = rhs by conjugate gradients. The system matrix has
/// spectrum inside [1, 2] whenever B is a masked isometry, so a handful of
/// iterations reaches fine tolerances; `w` doubles as the warm start.
inline void cg_normal(const LinearMap& op, const std::vector<Complex>& rhs,
                      std::vector<Complex>& w, double tol, std::size_t max_iter) {
  auto apply = [&](const std::vector<Complex>& v) {
    auto out = op.adjoint(op.forward(v));
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
    return out;
  };
  std::vector<Complex> r = rhs;
  {
    const auto aw = apply(w);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= aw[i];
  }
  const double target = tol * norm2(rhs);
  double rr = norm2_sq(r);
  if (std::sqrt(rr) <= target) return;
  std::vector<Complex> p = r;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const auto ap = apply(p);
    Complex pap{0.0, 0.0};
    for (std::size_t i = 0; i < p.size(); ++i) pap += std::conj(p[i]) * ap[i];
    const double alpha = rr / pap.real();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = norm2_sq(r);
    if (std::sqrt(rr_new) <= target) return;
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
  }
}

}  // namespace detail

/// Constrained basis pursuit by Douglas-Rachford splitting on the product
/// space (x, r):   min reg(x)  s.t.  ||nu - B x||_2 <= eps,
/// where reg is ||.||_1 of synthesis coefficients (x = alpha, B = A Psi) or
/// the TV norm of the image (x = rho, B = A). One proximal block applies the
/// regularizer prox to x and projects r onto the eps-ball around nu; the
/// other projects onto the coupling set {r = B x} by solving
/// (I + B'B) w = x_refl + B' r_refl with warm-started conjugate gradients.
///
/// The report carries the best feasible iterate (lowest objective among
/// candidates with ||nu - B x||^2 <= eps^2 (1 + 1e-6)); if no iterate was
/// feasible, the lowest-residual candidate is returned and converged stays
/// false. An eps of 0 is handled honestly: exact equality is unreachable in
/// floating point, so such solves report converged=false while still
/// returning the most consistent iterate.
inline SolveReport solve_bp(Problem kind, const LinearMap& op, const SparsityBasis* basis,
                            const std::vector<Complex>& nu, double eps,
                            const std::vector<std::size_t>& primal_dims,
                            const SolverOptions& opts = {}) {
  if (eps < 0.0) throw std::invalid_argument("solve_bp: eps must be >= 0");
  if (nu.size() != op.range) throw std::invalid_argument("solve_bp: measurement size mismatch");
  if (kind == Problem::kL1Synthesis && basis == nullptr)
    throw std::invalid_argument("solve_bp: l1-synthesis needs a basis");
  if (kind == Problem::kTv && total_size(primal_dims) != op.domain)
    throw std::invalid_argument("solve_bp: primal grid does not match operator domain");
  if (!(opts.lambda > 0.0 && opts.lambda < 2.0))
    throw std::invalid_argument("solve_bp: relaxation must lie in (0, 2)");
  if (opts.max_iterations == 0)
    throw std::invalid_argument("solve_bp: need at least one iteration");

  // B includes the synthesis step for l1 problems so the primal variable is
  // always the regularized one.
  LinearMap b;
  if (kind == Problem::kL1Synthesis) {
    if (basis->size() != op.domain)
      throw std::invalid_argument("solve_bp: basis size does not match operator domain");
    b.domain = basis->size();
    b.range = op.range;
    b.forward = [&op, basis](const std::vector<Complex>& a) {
      return op.forward(synthesize(*basis, a));
    };
    b.adjoint = [&op, basis](const std::vector<Complex>& y) {
      return analyze(*basis, op.adjoint(y));
    };
  } else {
    b = op;
  }

  auto prox_reg = [&](const std::vector<Complex>& v) {
    if (kind == Problem::kL1Synthesis) return soft_threshold(v, opts.gamma);
    ComplexImage img(primal_dims);
    img.data = v;
    return prox_tv(img, opts.gamma, opts.tv_prox_iterations).data;
  };
  auto objective_of = [&](const std::vector<Complex>& v) {
    if (kind == Problem::kL1Synthesis) {
      double s = 0.0;
      for (const auto& c : v) s += std::abs(c);
      return s;
    }
    ComplexImage img(primal_dims);
    img.data = v;
    return tv_norm(img);
  };

  const double feas_sq = eps * eps * (1.0 + 1e-6);

  // init: x0 = B' nu, r0 = nu
  std::vector<Complex> z_x = b.adjoint(nu);
  std::vector<Complex> z_r = nu;
  std::vector<Complex> w_x = z_x;  // CG warm start and previous candidate
  std::vector<Complex> prev_candidate = z_x;

  SolveReport report;
  bool have_feasible = false;
  double best_objective = 0.0;
  double fallback_residual_sq = -1.0;
  bool stopped_by_tolerance = false;

  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    // first block: regularizer on x, fidelity ball on r
    const auto y_x = prox_reg(z_x);
    const auto y_r = project_l2_ball(z_r, nu, eps);

    // second block: project the reflection onto the graph {r = Bx}
    std::vector<Complex> refl_x(z_x.size()), refl_r(z_r.size());
    for (std::size_t i = 0; i < z_x.size(); ++i) refl_x[i] = 2.0 * y_x[i] - z_x[i];
    for (std::size_t i = 0; i < z_r.size(); ++i) refl_r[i] = 2.0 * y_r[i] - z_r[i];
    auto rhs = b.adjoint(refl_r);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += refl_x[i];
    detail::cg_normal(b, rhs, w_x, opts.cg_tolerance, opts.cg_max_iterations);
    const auto w_r = b.forward(w_x);

    for (std::size_t i = 0; i < z_x.size(); ++i) z_x[i] += opts.lambda * (w_x[i] - y_x[i]);
    for (std::size_t i = 0; i < z_r.size(); ++i) z_r[i] += opts.lambda * (w_r[i] - y_r[i]);

    // candidate bookkeeping
    double resid_sq = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i) resid_sq += std::norm(nu[i] - w_r[i]);
    if (!std::isfinite(resid_sq)) throw std::runtime_error("solve_bp: numeric failure (NaN)");

    const bool feasible = resid_sq <= feas_sq;
    if (feasible) {
      const double obj = objective_of(w_x);
      if (!have_feasible || obj < best_objective) {
        have_feasible = true;
        best_objective = obj;
        report.solution = w_x;
        report.residual_sq = resid_sq;
        report.objective = obj;
      }
    } else if (!have_feasible &&
               (fallback_residual_sq < 0.0 || resid_sq < fallback_residual_sq)) {
      fallback_residual_sq = resid_sq;
      report.solution = w_x;
      report.residual_sq = resid_sq;
    }

    double diff_sq = 0.0, prev_sq = 0.0;
    for (std::size_t i = 0; i < w_x.size(); ++i) {
      diff_sq += std::norm(w_x[i] - prev_candidate[i]);
      prev_sq += std::norm(prev_candidate[i]);
    }
    const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(prev_sq), 1e-12);
    report.rel_change_trace.push_back(rel);
    prev_candidate = w_x;
    report.iterations = it;
    if (rel < opts.tolerance) {
      stopped_by_tolerance = true;
      break;
    }
  }

  if (!have_feasible) report.objective = objective_of(report.solution);
  report.converged = stopped_by_tolerance && have_feasible;
  return report;
}

}  // namespace s2
