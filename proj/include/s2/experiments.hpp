#pragma once

// Experiment drivers: phase-transition curves, model-mismatch error curves,
// readout-varying chirp validation, and a high-resolution reconstruction
// demo. Every driver is a pure function of its config: per-trial seeds are
// derived from the config seed with derive_seed and written into the
// records, so any row can be regenerated in isolation, and the worker pool
// only changes wall time, never output bytes.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "coherence.hpp"
#include "grid.hpp"
#include "image.hpp"
#include "noise.hpp"
#include "operators.hpp"
#include "phantom.hpp"
#include "rng.hpp"
#include "sampling.hpp"
#include "solver.hpp"
#include "sparsity.hpp"

namespace s2 {

namespace detail {

// Seed-stream tags so masks, noise and texture never share a stream.
inline constexpr std::uint64_t kMaskStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;
inline constexpr std::uint64_t kTextureStream = 9;

/// Worker count: `requested` (0 = one per hardware thread), capped by the
/// S2_THREADS environment variable when it is set to a positive integer.
inline std::size_t resolve_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
  }
  if (const char* env = std::getenv("S2_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0)
      n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(n, 1);
}

/// Runs fn(0..count-1) on a self-scheduling worker pool. Tasks must write
/// only to their own output slot; the first exception wins and is rethrown
/// on the caller after the pool drains.
template <typename Fn>
inline void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto work = [&] {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Identity of each masked sample as a flat index into the *base* grid,
/// independent of which storage grid the mask addresses. Throws if a sample
/// sits outside the central base-frequency block.
inline std::vector<std::size_t> mask_frequency_keys(const SamplingMask& mask,
                                                    const std::vector<std::size_t>& base_n) {
  const std::size_t d = base_n.size();
  if (mask.dims.size() != d)
    throw std::invalid_argument("mask_frequency_keys: dimensionality mismatch");
  const auto gstr = strides_of(mask.dims);
  const auto bstr = strides_of(base_n);
  std::vector<std::size_t> keys;
  keys.reserve(mask.indices.size());
  for (std::size_t idx : mask.indices) {
    std::size_t rem = idx, key = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t i = rem / gstr[a];
      rem %= gstr[a];
      const long long f = freq_of_index(i, mask.dims[a]);
      const long long half = static_cast<long long>(base_n[a]) / 2;
      if (f < -half || f >= (static_cast<long long>(base_n[a]) + 1) / 2)
        throw std::invalid_argument("mask_frequency_keys: frequency outside the base block");
      key += index_of_freq(f, base_n[a]) * bstr[a];
    }
    keys.push_back(key);
  }
  return keys;
}

/// Reorders `values` (aligned with keys_from) into the order of keys_to.
/// Both key lists must cover exactly the same frequency set.
inline std::vector<Complex> align_measurements(const std::vector<Complex>& values,
                                               const std::vector<std::size_t>& keys_from,
                                               const std::vector<std::size_t>& keys_to) {
  if (values.size() != keys_from.size() || keys_from.size() != keys_to.size())
    throw std::invalid_argument("align_measurements: size mismatch");
  std::vector<std::pair<std::size_t, std::size_t>> from(keys_from.size());
  for (std::size_t i = 0; i < keys_from.size(); ++i) from[i] = {keys_from[i], i};
  std::sort(from.begin(), from.end());
  std::vector<Complex> out(values.size());
  for (std::size_t j = 0; j < keys_to.size(); ++j) {
    const auto it = std::lower_bound(from.begin(), from.end(),
                                     std::make_pair(keys_to[j], std::size_t{0}));
    if (it == from.end() || it->first != keys_to[j])
      throw std::invalid_argument("align_measurements: frequency sets differ");
    out[j] = values[it->second];
  }
  return out;
}

/// Adds i.i.d. complex Gaussian noise, consuming the Gaussian stream in
/// frequency-rank order. Two masks that select the same frequencies on
/// different storage grids therefore receive identical noise per frequency.
inline void add_noise_by_frequency(std::vector<Complex>& values,
                                   const std::vector<std::size_t>& keys, double sigma,
                                   std::uint64_t seed) {
  if (values.size() != keys.size())
    throw std::invalid_argument("add_noise_by_frequency: size mismatch");
  if (sigma < 0.0) throw std::invalid_argument("add_noise_by_frequency: sigma must be >= 0");
  if (sigma == 0.0) return;
  std::vector<std::size_t> order(keys.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  Rng rng(seed);
  for (std::size_t r : order) {
    const double g1 = rng.gaussian();
    const double g2 = rng.gaussian();
    values[r] += Complex{sigma * g1, sigma * g2};
  }
}

/// Every base-grid frequency embedded into `grid_dims`, sorted: the
/// full-coverage mask used by the high-resolution demo.
inline std::vector<std::size_t> full_base_block(const std::vector<std::size_t>& base_n,
                                                const std::vector<std::size_t>& grid_dims) {
  const std::size_t d = base_n.size();
  if (grid_dims.size() != d)
    throw std::invalid_argument("full_base_block: dimensionality mismatch");
  const auto bstr = strides_of(base_n);
  const auto gstr = strides_of(grid_dims);
  std::vector<std::size_t> out;
  out.reserve(total_size(base_n));
  for (std::size_t c = 0; c < total_size(base_n); ++c) {
    std::size_t rem = c, flat = 0;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t i = rem / bstr[a];
      rem %= bstr[a];
      const long long f =
          static_cast<long long>(i) - static_cast<long long>(base_n[a]) / 2;
      flat += index_of_freq(f, grid_dims[a]) * gstr[a];
    }
    out.push_back(flat);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline BasisKind basis_from_name(const std::string& name) {
  if (name == "dirac") return BasisKind::kDirac;
  if (name == "haar") return BasisKind::kHaar;
  if (name == "fourier") return BasisKind::kFourier;
  throw std::invalid_argument("unknown basis: " + name);
}

// ---------------------------------------------------------------------------
// Phase-transition curves (1D)
//
// A fixed K-sparse signal is built once per basis by hard-thresholding the
// analysis coefficients of the standard test line. For each chirp rate the
// sensing chain uses the source grid N and the modulation grid N_c, with a
// uniform random mask over the whole modulation grid, and each trial solves
// noiseless l1-synthesis basis pursuit (eps = 0). A trial counts as
// recovered when the synthesized solution is within 1e-3 relative error of
// the true signal.
// ---------------------------------------------------------------------------

inline SolverOptions phase_transition_solver_defaults() {
  SolverOptions opts;
  opts.max_iterations = 3000;
  opts.tolerance = 1e-8;
  return opts;
}

struct PhaseTransitionConfig {
  std::size_t n = 256;
  std::size_t sparsity = 25;
  std::vector<BasisKind> bases{BasisKind::kDirac, BasisKind::kHaar, BasisKind::kFourier};
  std::vector<double> w_bars{0.0, 0.1, 0.3, 0.5};
  std::vector<std::size_t> m_values{};  // empty -> default_phase_transition_m(n)
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  double solver_gamma = 0.0;  // <= 0: 0.1 * max |sparse coefficient|
  SolverOptions solver = phase_transition_solver_defaults();
  std::size_t threads = 0;  // 0 = auto; S2_THREADS caps either way
};

struct PhaseTransitionRecord {
  BasisKind basis = BasisKind::kDirac;
  double w_bar = 0.0;
  std::size_t m = 0;
  std::size_t trials = 0;
  std::size_t recovered = 0;
  double probability = 0.0;
  std::uint64_t cell_seed = 0;  // trial t's mask seed is derive_seed(cell_seed, t)
};

/// Twelve measurement counts between n/8 and n, scaled from the reference
/// 256-point ladder.
inline std::vector<std::size_t> default_phase_transition_m(std::size_t n) {
  static constexpr std::size_t ladder[12] = {32,  48,  64,  80,  96,  112,
                                             128, 144, 160, 192, 224, 256};
  std::vector<std::size_t> out;
  out.reserve(12);
  for (std::size_t v : ladder) {
    std::size_t m = (v * n + 128) / 256;
    out.push_back(std::max<std::size_t>(m, 1));
  }
  return out;
}

inline std::vector<PhaseTransitionRecord> run_phase_transition(const PhaseTransitionConfig& cfg) {
  if (cfg.n < 2) throw std::invalid_argument("run_phase_transition: grid too small");
  if (cfg.sparsity < 1 || cfg.sparsity > cfg.n)
    throw std::invalid_argument("run_phase_transition: sparsity out of range");
  if (cfg.trials < 1) throw std::invalid_argument("run_phase_transition: need >= 1 trial");
  if (cfg.bases.empty() || cfg.w_bars.empty())
    throw std::invalid_argument("run_phase_transition: empty sweep");
  for (double w : cfg.w_bars)
    if (!(w >= 0.0)) throw std::invalid_argument("run_phase_transition: w_bar must be >= 0");

  const std::vector<std::size_t> m_values =
      cfg.m_values.empty() ? default_phase_transition_m(cfg.n) : cfg.m_values;
  for (std::size_t m : m_values)
    if (m < 1) throw std::invalid_argument("run_phase_transition: M must be >= 1");

  const FieldOfView fov({1.0});
  struct Arm {
    double w_bar;
    std::size_t n_c;
  };
  std::vector<Arm> arms;
  for (double w : cfg.w_bars) {
    const GridSpec g = make_grids({cfg.n}, fov, ChirpSpec::Constant(w));
    arms.push_back({w, g.n_rec[0]});
    for (std::size_t m : m_values)
      if (m > g.n_rec[0])
        throw std::invalid_argument("run_phase_transition: M exceeds the modulation grid");
  }

  // Fixed sparse signal per basis.
  ComplexImage line({cfg.n});
  line.data = test_line(cfg.n);
  struct Target {
    SparsityBasis basis;
    ComplexImage signal;
    double gamma;
  };
  std::vector<Target> targets;
  for (BasisKind kind : cfg.bases) {
    SparsityBasis basis(kind, {cfg.n});
    const auto coeffs = hard_threshold(analyze(basis, line.data), cfg.sparsity);
    ComplexImage sig({cfg.n});
    sig.data = synthesize(basis, coeffs);
    double scale = 0.0;
    for (const Complex& c : coeffs) scale = std::max(scale, std::abs(c));
    const double gamma = cfg.solver_gamma > 0.0 ? cfg.solver_gamma : 0.1 * scale;
    targets.push_back({std::move(basis), std::move(sig), gamma});
  }

  const std::size_t cells = targets.size() * arms.size() * m_values.size();
  std::vector<PhaseTransitionRecord> records(cells);
  const std::size_t tasks = cells * cfg.trials;
  std::vector<std::uint8_t> hits(tasks, 0);

  detail::parallel_for(tasks, detail::resolve_threads(cfg.threads), [&](std::size_t task) {
    const std::size_t trial = task % cfg.trials;
    std::size_t cell = task / cfg.trials;
    const std::size_t m_idx = cell % m_values.size();
    cell /= m_values.size();
    const std::size_t a_idx = cell % arms.size();
    const std::size_t b_idx = cell / arms.size();

    const Target& tgt = targets[b_idx];
    const Arm& arm = arms[a_idx];
    const std::size_t m = m_values[m_idx];
    // The mask stream depends only on M, so every basis and chirp arm sees
    // the same random masks at a given sweep point.
    const std::uint64_t cell_seed = derive_seed(cfg.seed, m_idx, detail::kMaskStream);
    const SamplingMask mask = draw_uniform_mask(m, {arm.n_c}, derive_seed(cell_seed, trial));

    const SpreadSpectrumOperator op({cfg.n}, {cfg.n}, {arm.n_c},
                                    ChirpSpec::Constant(arm.w_bar), mask.indices);
    LinearMap lm;
    lm.domain = op.domain_size();
    lm.range = op.range_size();
    lm.forward = [&op](const std::vector<Complex>& x) { return op.forward_vec(x); };
    lm.adjoint = [&op](const std::vector<Complex>& y) { return op.adjoint_vec(y); };

    const std::vector<Complex> nu = op.forward_vec(tgt.signal.data);
    SolverOptions opts = cfg.solver;
    opts.gamma = tgt.gamma;
    const SolveReport rep = solve_bp(Problem::kL1Synthesis, lm, &tgt.basis, nu, 0.0,
                                     {cfg.n}, opts);
    ComplexImage rec({cfg.n});
    rec.data = synthesize(tgt.basis, rep.solution);
    hits[task] = is_recovered(rec, tgt.signal) ? 1 : 0;
  });

  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::size_t m_idx = cell % m_values.size();
    const std::size_t a_idx = (cell / m_values.size()) % arms.size();
    const std::size_t b_idx = cell / (m_values.size() * arms.size());
    PhaseTransitionRecord& r = records[cell];
    r.basis = targets[b_idx].basis.kind;
    r.w_bar = arms[a_idx].w_bar;
    r.m = m_values[m_idx];
    r.trials = cfg.trials;
    r.cell_seed = derive_seed(cfg.seed, m_idx, detail::kMaskStream);
    std::size_t count = 0;
    for (std::size_t t = 0; t < cfg.trials; ++t) count += hits[cell * cfg.trials + t];
    r.recovered = count;
    r.probability = static_cast<double>(count) / static_cast<double>(cfg.trials);
  }
  return records;
}

inline std::string phase_transition_csv(const std::vector<PhaseTransitionRecord>& records) {
  std::string out = "basis,w_bar,m,trials,recovered_count,probability,cell_seed\n";
  for (const PhaseTransitionRecord& r : records) {
    out += basis_name(r.basis);
    out += ',';
    out += detail::fmt_short(r.w_bar);
    out += ',';
    out += std::to_string(r.m);
    out += ',';
    out += std::to_string(r.trials);
    out += ',';
    out += std::to_string(r.recovered);
    out += ',';
    out += detail::fmt_double(r.probability);
    out += ',';
    out += std::to_string(r.cell_seed);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model-mismatch error curves (2D)
//
// Measurements are simulated on a fine grid (fine_factor * n per axis) with
// the physically equivalent chirp (same w * L^2, so the discrete rate is
// w_bar / fine_factor), then reconstructed with the coarse sensing model on
// the (1+|w_bar|) grid. The reference is the spectral downsample of the fine
// phantom, which is exactly what the coarse model can represent. Masks are
// variable-density draws calibrated to the coverage target; the same seed is
// used for the fine and coarse draws so both select the same frequency set,
// and noise is attached per frequency, so every chirp arm of a trial sees
// identical data apart from the chirp itself.
// ---------------------------------------------------------------------------

struct ErrorCurveConfig {
  std::size_t n = 128;          // base grid, n x n
  std::size_t fine_factor = 2;  // measurement grid is (fine_factor*n)^2
  std::vector<double> coverages{0.2};
  std::vector<double> snrs{32.0};
  std::vector<double> w_bars{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t trials = 10;
  std::uint64_t seed = 1;
  double texture_amplitude = 0.0;  // support-only phantom texture
  double solver_gamma = 0.0;       // <= 0: 0.05 * max |reference|
  SolverOptions solver{};
  std::size_t threads = 0;
};

struct ErrorTrialRecord {
  double coverage = 0.0;
  double snr = 0.0;
  double w_bar = 0.0;
  std::size_t trial = 0;
  std::uint64_t mask_seed = 0;
  std::uint64_t noise_seed = 0;
  std::size_t m = 0;
  double relative_err = 0.0;
  double chi2 = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct ErrorCellSummary {
  double coverage = 0.0;
  double snr = 0.0;
  double w_bar = 0.0;
  std::size_t trials = 0;
  double mean_error = 0.0;
  double std_error = 0.0;  // sample standard deviation (n-1)
  double w_bar_opt = 0.0;  // arg-min mean error within the (coverage, snr) group
  std::uint64_t seed = 0;  // config master seed
};

struct ErrorCurveResult {
  std::vector<ErrorTrialRecord> trials;
  std::vector<ErrorCellSummary> summary;
};

namespace detail {

struct MismatchArm {
  double w_bar_label = 0.0;  // value reported in records
  GridSpec grids;            // coarse reconstruction grids
  ChirpSpec chirp;           // coarse chirp
  std::vector<std::size_t> fine_dims;
  std::vector<std::size_t> fine_mod;
  ChirpSpec fine_chirp;
};

struct MismatchOutcome {
  std::size_t m = 0;
  double relative_err = 0.0;
  double chi2 = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// One measurement + TV reconstruction pass shared by the 2D and 3D error
/// experiments. `mask` addresses the coarse modulation grid, `fine_mask` the
/// fine one; both must select the same base frequencies.
inline MismatchOutcome mismatch_trial(const MismatchArm& arm, const ComplexImage& rho_fine,
                                      const ComplexImage& rho_ref, const SamplingMask& mask,
                                      const SamplingMask& fine_mask, double sigma,
                                      std::uint64_t noise_seed, const SolverOptions& opts) {
  const std::vector<std::size_t>& base = arm.grids.n;
  if (mask.actual_m != fine_mask.actual_m)
    throw std::logic_error("mismatch_trial: paired masks differ in size");

  const SpreadSpectrumOperator fine_op(arm.fine_dims, arm.fine_dims, arm.fine_mod,
                                       arm.fine_chirp, fine_mask.indices);
  const std::vector<Complex> nu_fine = fine_op.forward_vec(rho_fine.data);
  const auto keys_fine = mask_frequency_keys(fine_mask, base);
  const auto keys = mask_frequency_keys(mask, base);
  std::vector<Complex> nu = align_measurements(nu_fine, keys_fine, keys);
  add_noise_by_frequency(nu, keys, sigma, noise_seed);

  const std::size_t m = nu.size();
  const double eps_sq = sigma > 0.0 ? sigma * sigma * epsilon_squared(m) : 0.0;

  const SpreadSpectrumOperator op = make_sensing_operator(arm.grids, arm.chirp, mask.indices);
  LinearMap lm;
  lm.domain = op.domain_size();
  lm.range = op.range_size();
  lm.forward = [&op](const std::vector<Complex>& x) { return op.forward_vec(x); };
  lm.adjoint = [&op](const std::vector<Complex>& y) { return op.adjoint_vec(y); };

  const SolveReport rep =
      solve_bp(Problem::kTv, lm, nullptr, nu, std::sqrt(eps_sq), arm.grids.n_rec, opts);

  ComplexImage recon(arm.grids.n_rec);
  recon.data = rep.solution;
  const ComplexImage recon_base = downsample(recon, base);

  MismatchOutcome out;
  out.m = m;
  out.relative_err = relative_error(recon_base, rho_ref);
  out.chi2 = sigma > 0.0 ? rep.residual_sq / (sigma * sigma) : rep.residual_sq;
  out.iterations = rep.iterations;
  out.converged = rep.converged;
  return out;
}

/// Fills mean/std/w_bar_opt summaries from trial records laid out as
/// cells x trials in canonical order.
inline std::vector<ErrorCellSummary> summarize_error_trials(
    const std::vector<ErrorTrialRecord>& trials, std::size_t n_cov, std::size_t n_snr,
    std::size_t n_arms, std::size_t n_trials, std::uint64_t seed) {
  std::vector<ErrorCellSummary> summary(n_cov * n_snr * n_arms);
  for (std::size_t cell = 0; cell < summary.size(); ++cell) {
    const ErrorTrialRecord& first = trials[cell * n_trials];
    ErrorCellSummary& s = summary[cell];
    s.coverage = first.coverage;
    s.snr = first.snr;
    s.w_bar = first.w_bar;
    s.trials = n_trials;
    s.seed = seed;
    double sum = 0.0;
    for (std::size_t t = 0; t < n_trials; ++t)
      sum += trials[cell * n_trials + t].relative_err;
    s.mean_error = sum / static_cast<double>(n_trials);
    double ss = 0.0;
    for (std::size_t t = 0; t < n_trials; ++t) {
      const double d = trials[cell * n_trials + t].relative_err - s.mean_error;
      ss += d * d;
    }
    s.std_error = n_trials > 1 ? std::sqrt(ss / static_cast<double>(n_trials - 1)) : 0.0;
  }
  for (std::size_t group = 0; group < n_cov * n_snr; ++group) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < n_arms; ++a)
      if (summary[group * n_arms + a].mean_error < summary[group * n_arms + best].mean_error)
        best = a;
    for (std::size_t a = 0; a < n_arms; ++a)
      summary[group * n_arms + a].w_bar_opt = summary[group * n_arms + best].w_bar;
  }
  return summary;
}

}  // namespace detail

inline ErrorCurveResult run_error_vs_snr(const ErrorCurveConfig& cfg) {
  if (cfg.n < 4 || cfg.n % 2 != 0)
    throw std::invalid_argument("run_error_vs_snr: base grid must be even and >= 4");
  if (cfg.fine_factor < 1) throw std::invalid_argument("run_error_vs_snr: fine_factor >= 1");
  if (cfg.trials < 1) throw std::invalid_argument("run_error_vs_snr: need >= 1 trial");
  if (cfg.coverages.empty() || cfg.snrs.empty() || cfg.w_bars.empty())
    throw std::invalid_argument("run_error_vs_snr: empty sweep");
  for (double c : cfg.coverages)
    if (!(c > 0.0 && c <= 1.0))
      throw std::invalid_argument("run_error_vs_snr: coverage must lie in (0, 1]");
  for (double s : cfg.snrs)
    if (!(s > 0.0)) throw std::invalid_argument("run_error_vs_snr: snr must be positive");
  for (double w : cfg.w_bars)
    if (!(w >= 0.0)) throw std::invalid_argument("run_error_vs_snr: w_bar must be >= 0");

  const std::vector<std::size_t> base{cfg.n, cfg.n};
  const FieldOfView fov({1.0, 1.0});
  const std::size_t nf = cfg.fine_factor * cfg.n;
  const double ff = static_cast<double>(cfg.fine_factor);

  PhantomSpec pspec = detail::head_phantom_spec({nf, nf});
  pspec.texture_amplitude = cfg.texture_amplitude;
  pspec.texture_seed = derive_seed(cfg.seed, 0, detail::kTextureStream);
  const ComplexImage rho_fine = make_phantom(pspec);
  const ComplexImage rho_ref = downsample(rho_fine, base);

  double ref_peak = 0.0;
  for (const Complex& v : rho_ref.data) ref_peak = std::max(ref_peak, std::abs(v));
  SolverOptions opts = cfg.solver;
  opts.gamma = cfg.solver_gamma > 0.0 ? cfg.solver_gamma : 0.05 * ref_peak;

  std::vector<detail::MismatchArm> arms;
  for (double w : cfg.w_bars) {
    detail::MismatchArm arm;
    arm.w_bar_label = w;
    arm.chirp = ChirpSpec::Constant(w, -w);
    arm.grids = make_grids(base, fov, arm.chirp);
    arm.fine_dims = {nf, nf};
    arm.fine_chirp = ChirpSpec::Constant(w / ff, -w / ff);
    arm.fine_mod = {detail::extended_size(nf, 1.0 + w / ff),
                    detail::extended_size(nf, 1.0 + w / ff)};
    if (w == 0.0) arm.fine_mod = {nf, nf};
    arms.push_back(std::move(arm));
  }

  struct Coverage {
    std::size_t target_m;
    VdsProfile profile;
  };
  std::vector<Coverage> coverages;
  for (double c : cfg.coverages) {
    const auto target =
        static_cast<std::size_t>(std::llround(c * static_cast<double>(cfg.n * cfg.n)));
    const auto [p, beta] = find_p_m(target, base, fov);
    coverages.push_back({target, make_vds_profile(p, beta, base, fov)});
  }
  std::vector<double> sigmas;
  for (double snr : cfg.snrs) sigmas.push_back(sigma_from_snr(rho_ref, snr));

  const std::size_t n_cov = coverages.size(), n_snr = sigmas.size(), n_arms = arms.size();
  const std::size_t tasks = n_cov * n_snr * n_arms * cfg.trials;
  std::vector<ErrorTrialRecord> records(tasks);

  detail::parallel_for(tasks, detail::resolve_threads(cfg.threads), [&](std::size_t task) {
    const std::size_t trial = task % cfg.trials;
    std::size_t cell = task / cfg.trials;
    const std::size_t a_idx = cell % n_arms;
    cell /= n_arms;
    const std::size_t s_idx = cell % n_snr;
    const std::size_t c_idx = cell / n_snr;

    const detail::MismatchArm& arm = arms[a_idx];
    const Coverage& cov = coverages[c_idx];
    // mask/noise seeds are shared across chirp arms: pairing by trial
    const std::uint64_t pair_id = (c_idx * n_snr + s_idx) * cfg.trials + trial;
    const std::uint64_t mask_seed = derive_seed(cfg.seed, pair_id, detail::kMaskStream);
    const std::uint64_t noise_seed = derive_seed(cfg.seed, pair_id, detail::kNoiseStream);

    const SamplingMask mask =
        draw_vds_mask(cov.profile, base, arm.grids.n_mod, fov, mask_seed, cov.target_m);
    const SamplingMask fine_mask =
        draw_vds_mask(cov.profile, base, arm.fine_mod, fov, mask_seed, cov.target_m);

    const detail::MismatchOutcome out = detail::mismatch_trial(
        arm, rho_fine, rho_ref, mask, fine_mask, sigmas[s_idx], noise_seed, opts);

    ErrorTrialRecord& r = records[task];
    r.coverage = cfg.coverages[c_idx];
    r.snr = cfg.snrs[s_idx];
    r.w_bar = arm.w_bar_label;
    r.trial = trial;
    r.mask_seed = mask_seed;
    r.noise_seed = noise_seed;
    r.m = out.m;
    r.relative_err = out.relative_err;
    r.chi2 = out.chi2;
    r.iterations = out.iterations;
    r.converged = out.converged;
  });

  ErrorCurveResult result;
  result.trials = std::move(records);
  result.summary = detail::summarize_error_trials(result.trials, n_cov, n_snr, n_arms,
                                                  cfg.trials, cfg.seed);
  return result;
}

inline std::string error_trials_csv(const std::vector<ErrorTrialRecord>& records) {
  std::string out =
      "coverage,snr,w_bar,trial,mask_seed,noise_seed,m,relative_error,chi2,iterations,"
      "converged\n";
  for (const ErrorTrialRecord& r : records) {
    out += detail::fmt_short(r.coverage);
    out += ',';
    out += detail::fmt_short(r.snr);
    out += ',';
    out += detail::fmt_short(r.w_bar);
    out += ',';
    out += std::to_string(r.trial);
    out += ',';
    out += std::to_string(r.mask_seed);
    out += ',';
    out += std::to_string(r.noise_seed);
    out += ',';
    out += std::to_string(r.m);
    out += ',';
    out += detail::fmt_double(r.relative_err);
    out += ',';
    out += detail::fmt_double(r.chi2);
    out += ',';
    out += std::to_string(r.iterations);
    out += ',';
    out += (r.converged ? "1" : "0");
    out += '\n';
  }
  return out;
}

inline std::string error_summary_csv(const std::vector<ErrorCellSummary>& records) {
  std::string out = "coverage,snr,w_bar,trials,mean_error,std_error,w_bar_opt,seed\n";
  for (const ErrorCellSummary& r : records) {
    out += detail::fmt_short(r.coverage);
    out += ',';
    out += detail::fmt_short(r.snr);
    out += ',';
    out += detail::fmt_short(r.w_bar);
    out += ',';
    out += std::to_string(r.trials);
    out += ',';
    out += detail::fmt_double(r.mean_error);
    out += ',';
    out += detail::fmt_double(r.std_error);
    out += ',';
    out += detail::fmt_short(r.w_bar_opt);
    out += ',';
    out += std::to_string(r.seed);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Readout-varying chirp validation (3D)
//
// Same measurement/reconstruction protocol as the 2D error curves, but on a
// 3D volume whose chirp rate varies linearly over the readout: plane k_z = f
// is acquired at t = TE + (f + 1/2) dt / N_z and sees the physical rate
// w(t), applied as (+w, -w) on the two phase-encode axes. Undersampling is a
// variable-density draw in the phase-encode plane replicated across the
// fully sampled readout. The chirped arm is compared against an unchirped
// arm with identical masks and noise.
// ---------------------------------------------------------------------------

struct VaryingChirpConfig {
  std::size_t n = 64;  // base grid, n^3
  std::size_t fine_factor = 2;
  std::vector<double> coverages{0.15, 0.25, 0.5};
  std::vector<double> snrs{32.0};
  std::size_t trials = 5;
  std::uint64_t seed = 1;
  double kappa = 1.0;
  double echo_time = 0.03;         // seconds
  double readout_duration = 0.02;  // seconds
  double w_bar_at_echo = 0.1;      // discrete rate at t = TE on the base grid
  double texture_amplitude = 0.0;
  double solver_gamma = 0.0;
  SolverOptions solver{};
  std::size_t threads = 0;
};

namespace detail {

/// The base readout trajectory resampled onto a fine grid: plane f of the
/// fine grid gets the physical rate of its acquisition time when |f| lies in
/// the base block, and zero (never measured) outside it.
inline ChirpSpec fine_varying_schedule(double kappa, double gamma, double echo_time,
                                       double readout_duration, const FieldOfView& fov,
                                       std::size_t base_nz,
                                       const std::vector<std::size_t>& fine_n) {
  std::vector<ChirpRates> schedule(fine_n[0]);
  const auto half = static_cast<long long>(base_nz) / 2;
  for (long long f = -half; f < half; ++f) {
    const double t = echo_time + (static_cast<double>(f) + 0.5) * readout_duration /
                                     static_cast<double>(base_nz);
    const double w = gamma * kappa * t / std::numbers::pi;
    ChirpRates r;
    r.x = discrete_chirp_rate(w, fov.x(), static_cast<long long>(fine_n[2]));
    r.y = discrete_chirp_rate(-w, fov.y(), static_cast<long long>(fine_n[1]));
    schedule[index_of_freq(f, fine_n[0])] = r;
  }
  return ChirpSpec::ReadoutVarying(std::move(schedule));
}

/// Phase-encode plane mask replicated across the base readout frequencies of
/// a (possibly finer) grid with readout size grid_nz >= base_nz.
inline SamplingMask expand_plane_to_base_readout(const SamplingMask& plane, std::size_t base_nz,
                                                 std::size_t grid_nz) {
  if (plane.dims.size() != 2)
    throw std::invalid_argument("expand_plane_to_base_readout: plane mask must be 2D");
  if (grid_nz < base_nz)
    throw std::invalid_argument("expand_plane_to_base_readout: readout grid too small");
  SamplingMask out;
  out.mode = SamplingMask::Mode::kFullGrid;
  out.dims = {grid_nz, plane.dims[0], plane.dims[1]};
  const std::size_t plane_size = plane.dims[0] * plane.dims[1];
  const auto half = static_cast<long long>(base_nz) / 2;
  out.indices.reserve(plane.indices.size() * base_nz);
  for (long long f = -half; f < half; ++f) {
    const std::size_t z = index_of_freq(f, grid_nz);
    for (std::size_t i : plane.indices) out.indices.push_back(z * plane_size + i);
  }
  std::sort(out.indices.begin(), out.indices.end());
  out.p = plane.p;
  out.beta = plane.beta;
  out.seed = plane.seed;
  out.target_m = plane.target_m * base_nz;
  out.actual_m = plane.actual_m * base_nz;
  return out;
}

}  // namespace detail

inline ErrorCurveResult run_varying_chirp_validation(const VaryingChirpConfig& cfg) {
  if (cfg.n < 4 || cfg.n % 2 != 0)
    throw std::invalid_argument("run_varying_chirp_validation: base grid must be even and >= 4");
  if (cfg.fine_factor < 1)
    throw std::invalid_argument("run_varying_chirp_validation: fine_factor >= 1");
  if (cfg.trials < 1) throw std::invalid_argument("run_varying_chirp_validation: need >= 1 trial");
  if (cfg.coverages.empty() || cfg.snrs.empty())
    throw std::invalid_argument("run_varying_chirp_validation: empty sweep");
  for (double c : cfg.coverages)
    if (!(c > 0.0 && c <= 1.0))
      throw std::invalid_argument("run_varying_chirp_validation: coverage must lie in (0, 1]");
  for (double s : cfg.snrs)
    if (!(s > 0.0))
      throw std::invalid_argument("run_varying_chirp_validation: snr must be positive");
  if (!(cfg.echo_time > 0.0) || !(cfg.readout_duration > 0.0) || !(cfg.kappa > 0.0))
    throw std::invalid_argument("run_varying_chirp_validation: timing must be positive");
  if (!(cfg.w_bar_at_echo >= 0.0))
    throw std::invalid_argument("run_varying_chirp_validation: w_bar_at_echo must be >= 0");

  const std::vector<std::size_t> base{cfg.n, cfg.n, cfg.n};
  const std::vector<std::size_t> plane_base{cfg.n, cfg.n};
  const FieldOfView fov({1.0, 1.0, 1.0});
  const FieldOfView plane_fov({1.0, 1.0});
  const std::size_t nf = cfg.fine_factor * cfg.n;
  const std::vector<std::size_t> fine{nf, nf, nf};

  // w_bar(TE) = gamma kappa TE / pi * L^2 / n  =>  gamma below.
  const double gamma_rate = cfg.w_bar_at_echo * std::numbers::pi * static_cast<double>(cfg.n) /
                            (cfg.kappa * cfg.echo_time);

  PhantomSpec pspec = detail::head_phantom_spec(fine);
  pspec.texture_amplitude = cfg.texture_amplitude;
  pspec.texture_seed = derive_seed(cfg.seed, 0, detail::kTextureStream);
  const ComplexImage rho_fine = make_phantom(pspec);
  const ComplexImage rho_ref = downsample(rho_fine, base);

  double ref_peak = 0.0;
  for (const Complex& v : rho_ref.data) ref_peak = std::max(ref_peak, std::abs(v));
  SolverOptions opts = cfg.solver;
  opts.gamma = cfg.solver_gamma > 0.0 ? cfg.solver_gamma : 0.05 * ref_peak;

  // arm 0: unchirped; arm 1: readout-varying chirp
  std::vector<detail::MismatchArm> arms(2);
  arms[0].w_bar_label = 0.0;
  arms[0].chirp = ChirpSpec::Constant(0.0, 0.0);
  arms[0].grids = make_grids(base, fov, arms[0].chirp);
  arms[0].fine_dims = fine;
  arms[0].fine_mod = fine;
  arms[0].fine_chirp = ChirpSpec::Constant(0.0, 0.0);

  arms[1].chirp = chirp_rate_schedule(cfg.kappa, cfg.echo_time, cfg.readout_duration,
                                      gamma_rate, fov, base);
  arms[1].w_bar_label = arms[1].chirp.max_abs().x;
  arms[1].grids = make_grids(base, fov, arms[1].chirp);
  arms[1].fine_dims = fine;
  arms[1].fine_chirp = detail::fine_varying_schedule(cfg.kappa, gamma_rate, cfg.echo_time,
                                                     cfg.readout_duration, fov, cfg.n, fine);
  {
    const ChirpRates mx = arms[1].fine_chirp.max_abs();
    arms[1].fine_mod = {nf, detail::extended_size(nf, 1.0 + mx.y),
                        detail::extended_size(nf, 1.0 + mx.x)};
  }

  struct Coverage {
    std::size_t target_plane_m;
    VdsProfile profile;
  };
  std::vector<Coverage> coverages;
  for (double c : cfg.coverages) {
    const auto target =
        static_cast<std::size_t>(std::llround(c * static_cast<double>(cfg.n * cfg.n)));
    const auto [p, beta] = find_p_m(target, plane_base, plane_fov);
    coverages.push_back({target, make_vds_profile(p, beta, plane_base, plane_fov)});
  }
  std::vector<double> sigmas;
  for (double snr : cfg.snrs) sigmas.push_back(sigma_from_snr(rho_ref, snr));

  const std::size_t n_cov = coverages.size(), n_snr = sigmas.size(), n_arms = arms.size();
  const std::size_t tasks = n_cov * n_snr * n_arms * cfg.trials;
  std::vector<ErrorTrialRecord> records(tasks);

  detail::parallel_for(tasks, detail::resolve_threads(cfg.threads), [&](std::size_t task) {
    const std::size_t trial = task % cfg.trials;
    std::size_t cell = task / cfg.trials;
    const std::size_t a_idx = cell % n_arms;
    cell /= n_arms;
    const std::size_t s_idx = cell % n_snr;
    const std::size_t c_idx = cell / n_snr;

    const detail::MismatchArm& arm = arms[a_idx];
    const Coverage& cov = coverages[c_idx];
    const std::uint64_t pair_id = (c_idx * n_snr + s_idx) * cfg.trials + trial;
    const std::uint64_t mask_seed = derive_seed(cfg.seed, pair_id, detail::kMaskStream);
    const std::uint64_t noise_seed = derive_seed(cfg.seed, pair_id, detail::kNoiseStream);

    const SamplingMask plane =
        draw_vds_mask(cov.profile, plane_base, {arm.grids.n_mod[1], arm.grids.n_mod[2]},
                      plane_fov, mask_seed, cov.target_plane_m);
    const SamplingMask mask = expand_phase_encode_mask(plane, arm.grids.n_mod[0]);
    const SamplingMask fine_plane =
        draw_vds_mask(cov.profile, plane_base, {arm.fine_mod[1], arm.fine_mod[2]}, plane_fov,
                      mask_seed, cov.target_plane_m);
    const SamplingMask fine_mask =
        detail::expand_plane_to_base_readout(fine_plane, cfg.n, arm.fine_mod[0]);

    const detail::MismatchOutcome out = detail::mismatch_trial(
        arm, rho_fine, rho_ref, mask, fine_mask, sigmas[s_idx], noise_seed, opts);

    ErrorTrialRecord& r = records[task];
    r.coverage = cfg.coverages[c_idx];
    r.snr = cfg.snrs[s_idx];
    r.w_bar = arm.w_bar_label;
    r.trial = trial;
    r.mask_seed = mask_seed;
    r.noise_seed = noise_seed;
    r.m = out.m;
    r.relative_err = out.relative_err;
    r.chi2 = out.chi2;
    r.iterations = out.iterations;
    r.converged = out.converged;
  });

  ErrorCurveResult result;
  result.trials = std::move(records);
  result.summary = detail::summarize_error_trials(result.trials, n_cov, n_snr, n_arms,
                                                  cfg.trials, cfg.seed);
  return result;
}

// ---------------------------------------------------------------------------
// High-resolution demo (2D)
//
// Fully sampled base-block measurements of the fine phantom through the
// chirped chain, reconstructed on the (1+|w_bar|) grid. With a chirp, the
// reconstruction grid is genuinely larger than the base grid; with w_bar = 0
// both outputs coincide.
// ---------------------------------------------------------------------------

struct HighResDemoConfig {
  std::size_t n = 256;
  double w_bar = 0.3;
  std::size_t fine_factor = 2;
  double snr = 32.0;  // 0 = noiseless
  std::uint64_t seed = 1;
  double solver_gamma = 0.0;
  SolverOptions solver{};
};

struct HighResDemoResult {
  ComplexImage recon_rec;   // on the reconstruction grid n_rec
  ComplexImage recon_base;  // spectral downsample to the base grid
  double relative_err = 0.0;
  double chi2 = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t m = 0;
  double sigma = 0.0;
};

inline HighResDemoResult run_high_resolution_demo(const HighResDemoConfig& cfg) {
  if (cfg.n < 4 || cfg.n % 2 != 0)
    throw std::invalid_argument("run_high_resolution_demo: base grid must be even and >= 4");
  if (cfg.fine_factor < 1)
    throw std::invalid_argument("run_high_resolution_demo: fine_factor >= 1");
  if (!(cfg.w_bar >= 0.0))
    throw std::invalid_argument("run_high_resolution_demo: w_bar must be >= 0");
  if (cfg.snr < 0.0) throw std::invalid_argument("run_high_resolution_demo: snr must be >= 0");

  const std::vector<std::size_t> base{cfg.n, cfg.n};
  const FieldOfView fov({1.0, 1.0});
  const std::size_t nf = cfg.fine_factor * cfg.n;
  const double ff = static_cast<double>(cfg.fine_factor);

  const ComplexImage rho_fine = shepp2d(nf);
  const ComplexImage rho_ref = downsample(rho_fine, base);

  detail::MismatchArm arm;
  arm.w_bar_label = cfg.w_bar;
  arm.chirp = ChirpSpec::Constant(cfg.w_bar, -cfg.w_bar);
  arm.grids = make_grids(base, fov, arm.chirp);
  arm.fine_dims = {nf, nf};
  arm.fine_chirp = ChirpSpec::Constant(cfg.w_bar / ff, -cfg.w_bar / ff);
  arm.fine_mod = cfg.w_bar == 0.0
                     ? std::vector<std::size_t>{nf, nf}
                     : std::vector<std::size_t>{detail::extended_size(nf, 1.0 + cfg.w_bar / ff),
                                                detail::extended_size(nf, 1.0 + cfg.w_bar / ff)};

  const SpreadSpectrumOperator fine_op(arm.fine_dims, arm.fine_dims, arm.fine_mod,
                                       arm.fine_chirp, detail::full_base_block(base, arm.fine_mod));
  std::vector<Complex> nu = fine_op.forward_vec(rho_fine.data);
  const auto mask_indices = detail::full_base_block(base, arm.grids.n_mod);

  SamplingMask fine_mask;
  fine_mask.dims = arm.fine_mod;
  fine_mask.indices = fine_op.mask_indices();
  SamplingMask mask;
  mask.dims = arm.grids.n_mod;
  mask.indices = mask_indices;
  nu = detail::align_measurements(nu, detail::mask_frequency_keys(fine_mask, base),
                                  detail::mask_frequency_keys(mask, base));

  const double sigma = cfg.snr > 0.0 ? sigma_from_snr(rho_ref, cfg.snr) : 0.0;
  detail::add_noise_by_frequency(nu, detail::mask_frequency_keys(mask, base), sigma,
                                 derive_seed(cfg.seed, 0, detail::kNoiseStream));
  const double eps_sq = sigma > 0.0 ? sigma * sigma * epsilon_squared(nu.size()) : 0.0;

  double ref_peak = 0.0;
  for (const Complex& v : rho_ref.data) ref_peak = std::max(ref_peak, std::abs(v));
  SolverOptions opts = cfg.solver;
  opts.gamma = cfg.solver_gamma > 0.0 ? cfg.solver_gamma : 0.05 * ref_peak;

  const SpreadSpectrumOperator op = make_sensing_operator(arm.grids, arm.chirp, mask_indices);
  LinearMap lm;
  lm.domain = op.domain_size();
  lm.range = op.range_size();
  lm.forward = [&op](const std::vector<Complex>& x) { return op.forward_vec(x); };
  lm.adjoint = [&op](const std::vector<Complex>& y) { return op.adjoint_vec(y); };
  const SolveReport rep =
      solve_bp(Problem::kTv, lm, nullptr, nu, std::sqrt(eps_sq), arm.grids.n_rec, opts);

  HighResDemoResult out;
  out.recon_rec = ComplexImage(arm.grids.n_rec);
  out.recon_rec.data = rep.solution;
  out.recon_base = downsample(out.recon_rec, base);
  out.relative_err = relative_error(out.recon_base, rho_ref);
  out.chi2 = sigma > 0.0 ? rep.residual_sq / (sigma * sigma) : rep.residual_sq;
  out.iterations = rep.iterations;
  out.converged = rep.converged;
  out.m = nu.size();
  out.sigma = sigma;
  return out;
}

}  // namespace s2
