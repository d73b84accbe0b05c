// s2sim: command-line driver for the spread-spectrum sensing toolkit.
//
// Subcommands: phantom, mask, coherence-table, reconstruct, phase-transition,
// error-curves, varying-chirp, highres-demo. Exit codes: 0 success, 1 usage
// error, 2 runtime failure. Every subcommand that consumes randomness takes
// (or defaults) --seed and prints the value it used.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "s2/experiments.hpp"
#include "s2/io.hpp"
#include "s2/version.hpp"

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// flag parsing
// ---------------------------------------------------------------------------

struct Flags {
  std::map<std::string, std::string> kv;
  bool help = false;

  bool has(const std::string& name) const { return kv.count(name) > 0; }

  const std::string& get(const std::string& name) const {
    auto it = kv.find(name);
    if (it == kv.end()) throw UsageError("missing required flag --" + name);
    return it->second;
  }

  std::string get_or(const std::string& name, const std::string& fallback) const {
    auto it = kv.find(name);
    return it == kv.end() ? fallback : it->second;
  }
};

Flags parse_flags(int argc, char** argv, int start, const std::set<std::string>& allowed) {
  Flags flags;
  for (int i = start; i < argc; ++i) {
    std::string tok = argv[i];
    if (tok == "--help" || tok == "-h") {
      flags.help = true;
      continue;
    }
    if (tok.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + tok + "'");
    tok = tok.substr(2);
    std::string value;
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      value = tok.substr(eq + 1);
      tok = tok.substr(0, eq);
    } else {
      if (i + 1 >= argc) throw UsageError("flag --" + tok + " needs a value");
      value = argv[++i];
    }
    if (allowed.count(tok) == 0) throw UsageError("unknown flag --" + tok);
    if (flags.kv.count(tok)) throw UsageError("duplicate flag --" + tok);
    flags.kv[tok] = value;
  }
  return flags;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream in(s);
  while (std::getline(in, token, sep)) out.push_back(token);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("cannot parse " + what + " '" + s + "' as a number");
  }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("cannot parse " + what + " '" + s + "' as an unsigned integer");
  }
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  return static_cast<std::size_t>(parse_u64(s, what));
}

std::vector<std::size_t> parse_grid(const std::string& s) {
  std::vector<std::size_t> dims;
  for (const std::string& part : split(s, 'x')) dims.push_back(parse_size(part, "grid size"));
  if (dims.empty() || dims.size() > 3)
    throw UsageError("--grid must list 1 to 3 sizes, e.g. 256 or 128x128");
  return dims;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const std::string& part : split(s, ',')) out.push_back(parse_double(part, what));
  if (out.empty()) throw UsageError(what + " list is empty");
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const std::string& part : split(s, ',')) out.push_back(parse_size(part, what));
  if (out.empty()) throw UsageError(what + " list is empty");
  return out;
}

std::string fmt(double v) { return s2::detail::fmt_double(v); }

std::string dims_str(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(dims[i]);
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// usage text
// ---------------------------------------------------------------------------

const char* kGlobalUsage =
    "usage: s2sim <subcommand> [flags]\n"
    "\n"
    "subcommands:\n"
    "  phantom           generate a phantom image (S2CX file)\n"
    "  mask              draw a sampling mask (S2MK file)\n"
    "  coherence-table   mutual-coherence table (CSV)\n"
    "  reconstruct       solve a basis-pursuit reconstruction\n"
    "  phase-transition  sparse-recovery probability sweep (CSV + manifest)\n"
    "  error-curves      chirp-vs-error study on a 2D phantom (CSV + manifest)\n"
    "  varying-chirp     readout-varying chirp study on a 3D phantom (CSV + manifest)\n"
    "  highres-demo      full-coverage chirped reconstruction demo\n"
    "\n"
    "run 's2sim <subcommand> --help' for flags. Worker count is capped by the\n"
    "S2_THREADS environment variable (0 or unset = auto).\n";

const std::map<std::string, std::string>& usage_texts() {
  static const std::map<std::string, std::string> texts = {
      {"phantom",
       "usage: s2sim phantom --preset {shepp2d|shepp3d|line256} --out FILE [--grid N[xN[xN]]]\n"
       "\n"
       "  --preset   shepp2d: 2D head phantom; shepp3d: 3D version; line256: the\n"
       "             fixed 1D test line (256 samples, --grid ignored)\n"
       "  --grid     sizes, e.g. 256 or 256x256 (default 256 per axis)\n"
       "  --out      output S2CX path\n"},
      {"mask",
       "usage: s2sim mask --grid DIMS (--coverage F | --m COUNT) [--profile {uniform|vds}]\n"
       "                  [--p {auto|VALUE}] [--seed N] --out FILE\n"
       "\n"
       "  --grid      storage grid, e.g. 256x256\n"
       "  --coverage  target fraction of the grid (alternative to --m)\n"
       "  --m         target measurement count\n"
       "  --profile   uniform: M distinct indices; vds: variable-density draw\n"
       "              calibrated so the mean count hits the target (default vds)\n"
       "  --p         vds decay power; auto picks the minimal p with beta >= 0\n"
       "  --seed      RNG seed (default 1, printed)\n"
       "  --out       output S2MK path\n"},
      {"coherence-table",
       "usage: s2sim coherence-table [--n N] [--w-bars LIST] [--bases LIST] [--out FILE]\n"
       "\n"
       "  --n       base grid size (default 256)\n"
       "  --w-bars  comma list of discrete chirp rates (default 0,0.1,0.3,0.5)\n"
       "  --bases   comma list from {dirac,haar,fourier} (default all)\n"
       "  --out     CSV path; '-' or omitted prints to stdout\n"
       "\n"
       "columns: basis,w_bar,N,N_c,mu,Nc_mu2\n"},
      {"reconstruct",
       "usage: s2sim reconstruct (--data FILE | --simulate FILE) --mask FILE --problem {l1|tv}\n"
       "                         [--chirp W[,WY]] [--basis NAME] [--eps {auto|VALUE}]\n"
       "                         [--sigma V] [--snr V] [--seed N] [--max-iter K] [--tol T]\n"
       "                         [--gamma G] [--dump-data FILE] --out FILE\n"
       "\n"
       "  --data       S2CX vector of measurements, ordered like the mask indices\n"
       "  --simulate   S2CX image on the mask's base grid; measurements are generated\n"
       "               through the chirped chain (optionally with --snr noise)\n"
       "  --mask       S2MK full-grid mask; its dims define the base grid\n"
       "  --chirp      discrete rate(s); one value W on a 2D grid means (W, -W)\n"
       "  --problem    l1: synthesis basis pursuit on the base grid (needs --basis);\n"
       "               tv: total variation on the (1+|w|)-extended grid\n"
       "  --eps        fidelity radius; auto = sigma * sqrt(chi-square 99% bound)\n"
       "  --sigma      per-component noise std for --eps auto with --data\n"
       "  --snr        with --simulate: adds complex Gaussian noise at this input snr\n"
       "  --seed       noise seed (default 1, printed when noise is drawn)\n"
       "  --gamma      solver proximal step (default 0.1 * max |B' nu|)\n"
       "  --dump-data  write the (noisy) measurement vector as S2CX\n"
       "  --out        reconstruction image, S2CX\n"},
      {"phase-transition",
       "usage: s2sim phase-transition --out-dir DIR [--config FILE] [--seed N]\n"
       "\n"
       "config keys: n, sparsity, bases, w_bars, m_values, trials, seed, threads,\n"
       "             solver_gamma, solver_max_iterations, solver_tolerance,\n"
       "             solver_cg_tolerance, solver_cg_max_iterations\n"
       "outputs: phase_transition.csv, manifest.txt\n"},
      {"error-curves",
       "usage: s2sim error-curves --out-dir DIR [--config FILE] [--seed N]\n"
       "\n"
       "config keys: n, fine_factor, coverages, snrs, w_bars, trials, seed, threads,\n"
       "             texture_amplitude, solver_gamma, solver_max_iterations,\n"
       "             solver_tolerance, solver_cg_tolerance, solver_cg_max_iterations,\n"
       "             solver_tv_prox_iterations\n"
       "outputs: error_trials.csv, error_summary.csv, manifest.txt\n"},
      {"varying-chirp",
       "usage: s2sim varying-chirp --out-dir DIR [--config FILE] [--seed N]\n"
       "\n"
       "config keys: n, fine_factor, coverages, snrs, trials, seed, threads, kappa,\n"
       "             echo_time, readout_duration, w_bar_at_echo, texture_amplitude,\n"
       "             solver_gamma, solver_max_iterations, solver_tolerance,\n"
       "             solver_cg_tolerance, solver_cg_max_iterations,\n"
       "             solver_tv_prox_iterations\n"
       "outputs: varying_trials.csv, varying_summary.csv, manifest.txt\n"},
      {"highres-demo",
       "usage: s2sim highres-demo --out-dir DIR [--config FILE] [--seed N]\n"
       "\n"
       "config keys: n, w_bar, fine_factor, snr, seed, solver_gamma,\n"
       "             solver_max_iterations, solver_tolerance, solver_cg_tolerance,\n"
       "             solver_cg_max_iterations, solver_tv_prox_iterations\n"
       "outputs: recon_rec.s2cx, recon_base.s2cx, manifest.txt\n"}};
  return texts;
}

// ---------------------------------------------------------------------------
// simple subcommands
// ---------------------------------------------------------------------------

int cmd_phantom(const Flags& flags) {
  const std::string preset = flags.get("preset");
  const std::string out = flags.get("out");
  s2::ComplexImage img;
  if (preset == "line256") {
    img = s2::ComplexImage({256});
    img.data = s2::test_line(256);
  } else if (preset == "shepp2d" || preset == "shepp3d") {
    const std::size_t d = preset == "shepp2d" ? 2 : 3;
    std::vector<std::size_t> dims = parse_grid(flags.get_or("grid", "256"));
    if (dims.size() == 1) dims.assign(d, dims[0]);
    if (dims.size() != d)
      throw UsageError("--grid for " + preset + " needs " + std::to_string(d) + " sizes");
    img = s2::make_phantom(s2::detail::head_phantom_spec(dims));
  } else {
    throw UsageError("unknown preset '" + preset + "'");
  }
  s2::write_complex_image(out, img);
  std::cout << "wrote " << out << " dims=" << dims_str(img.dims) << "\n";
  return 0;
}

int cmd_mask(const Flags& flags) {
  const std::vector<std::size_t> grid = parse_grid(flags.get("grid"));
  const std::string profile = flags.get_or("profile", "vds");
  const std::uint64_t seed = parse_u64(flags.get_or("seed", "1"), "--seed");
  const std::string out = flags.get("out");

  const std::size_t total = s2::total_size(grid);
  std::size_t target = 0;
  if (flags.has("m")) {
    target = parse_size(flags.get("m"), "--m");
  } else if (flags.has("coverage")) {
    const double c = parse_double(flags.get("coverage"), "--coverage");
    if (!(c > 0.0 && c <= 1.0)) throw UsageError("--coverage must lie in (0, 1]");
    target = static_cast<std::size_t>(std::llround(c * static_cast<double>(total)));
  } else {
    throw UsageError("need --coverage or --m");
  }
  if (target < 1) throw UsageError("target measurement count is zero");

  std::cout << "seed: " << seed << "\n";
  s2::SamplingMask mask;
  if (profile == "uniform") {
    mask = s2::draw_uniform_mask(target, grid, seed);
  } else if (profile == "vds") {
    std::vector<double> lengths(grid.size(), 1.0);
    const s2::FieldOfView fov(lengths);
    double p = 0.0, beta = 0.0;
    const std::string p_flag = flags.get_or("p", "auto");
    if (p_flag == "auto") {
      std::tie(p, beta) = s2::find_p_m(target, grid, fov);
    } else {
      p = parse_double(p_flag, "--p");
      if (p < 0.0) throw UsageError("--p must be >= 0");
      beta = s2::calibrate_beta(p, target, grid, fov);
    }
    const auto prof = s2::make_vds_profile(p, beta, grid, fov);
    mask = s2::draw_vds_mask(prof, grid, grid, fov, seed, target);
    std::cout << "p: " << fmt(p) << "\nbeta: " << fmt(beta) << "\n";
  } else {
    throw UsageError("unknown profile '" + profile + "'");
  }
  s2::write_mask(out, mask);
  std::cout << "target_m: " << mask.target_m << "\nactual_m: " << mask.actual_m << "\nwrote "
            << out << "\n";
  return 0;
}

int cmd_coherence_table(const Flags& flags) {
  const std::size_t n = parse_size(flags.get_or("n", "256"), "--n");
  const auto w_bars = parse_double_list(flags.get_or("w-bars", "0,0.1,0.3,0.5"), "--w-bars");
  std::vector<s2::BasisKind> bases;
  for (const std::string& name : split(flags.get_or("bases", "dirac,haar,fourier"), ','))
    bases.push_back(s2::basis_from_name(name));
  if (bases.empty()) throw UsageError("--bases list is empty");

  std::string csv = "basis,w_bar,N,N_c,mu,Nc_mu2\n";
  for (const s2::BasisKind basis : bases)
    for (const double w : w_bars) {
      const s2::CoherenceReport rep = s2::mutual_coherence(w, basis, n);
      csv += std::string(s2::basis_name(basis)) + ',' + s2::detail::fmt_short(w) + ',' +
             std::to_string(rep.n) + ',' + std::to_string(rep.n_c) + ',' + fmt(rep.mu) + ',' +
             fmt(rep.product) + '\n';
    }
  const std::string out = flags.get_or("out", "-");
  if (out == "-") {
    std::cout << csv;
  } else {
    write_text_file(out, csv);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

int cmd_reconstruct(const Flags& flags) {
  const s2::SamplingMask mask = s2::read_mask(flags.get("mask"));
  if (mask.mode != s2::SamplingMask::Mode::kFullGrid)
    throw UsageError("reconstruct needs a full-grid mask; expand phase-encode masks first");
  if (mask.indices.empty()) throw UsageError("mask selects no measurements");
  const std::vector<std::size_t> base = mask.dims;
  const std::size_t d = base.size();

  // chirp rates: one value on a d>=2 grid means (w, -w)
  const auto chirp_vals = parse_double_list(flags.get_or("chirp", "0"), "--chirp");
  if (chirp_vals.size() > 2 || (d == 1 && chirp_vals.size() != 1))
    throw UsageError("--chirp takes one rate, or two on a 2D/3D grid");
  const double wx = chirp_vals[0];
  const double wy = chirp_vals.size() == 2 ? chirp_vals[1] : (d >= 2 ? -wx : 0.0);
  const s2::ChirpSpec chirp = s2::ChirpSpec::Constant(wx, wy);

  std::vector<double> lengths(d, 1.0);
  const s2::FieldOfView fov(lengths);
  const s2::GridSpec grids = s2::make_grids(base, fov, chirp);

  // l1 solves for a sparse signal on the base grid through the (1+|w|)
  // modulation chain; tv solves on the (1+|w|) grid through the (1+2|w|)
  // imaging chain.
  const std::string problem = flags.get("problem");
  if (problem != "l1" && problem != "tv") throw UsageError("unknown problem '" + problem + "'");
  const std::vector<std::size_t>& mod_dims = problem == "l1" ? grids.n_rec : grids.n_mod;

  // embed the base-grid mask into the modulation grid by frequency
  s2::SamplingMask mod_mask;
  mod_mask.dims = mod_dims;
  mod_mask.indices = mask.indices;
  if (base != mod_dims) {
    std::vector<std::size_t> embedded;
    embedded.reserve(mask.indices.size());
    const auto bstr = s2::detail::strides_of(base);
    const auto gstr = s2::detail::strides_of(mod_dims);
    for (std::size_t idx : mask.indices) {
      std::size_t rem = idx, flat = 0;
      for (std::size_t a = 0; a < d; ++a) {
        const std::size_t i = rem / bstr[a];
        rem %= bstr[a];
        flat += s2::index_of_freq(s2::freq_of_index(i, base[a]), mod_dims[a]) * gstr[a];
      }
      embedded.push_back(flat);
    }
    std::sort(embedded.begin(), embedded.end());
    mod_mask.indices = std::move(embedded);
  }
  const auto keys_file = s2::detail::mask_frequency_keys(mask, base);
  const auto keys_op = s2::detail::mask_frequency_keys(mod_mask, base);

  const s2::SpreadSpectrumOperator op =
      problem == "l1"
          ? s2::SpreadSpectrumOperator(base, base, mod_dims, chirp, mod_mask.indices)
          : s2::make_sensing_operator(grids, chirp, mod_mask.indices);

  const bool simulate = flags.has("simulate");
  if (simulate == flags.has("data")) throw UsageError("need exactly one of --data or --simulate");

  double sigma = 0.0;
  std::vector<s2::Complex> nu;
  s2::ComplexImage truth;
  if (simulate) {
    truth = s2::read_complex_image(flags.get("simulate"));
    if (truth.dims != base)
      throw UsageError("--simulate image dims " + dims_str(truth.dims) +
                       " do not match the mask grid " + dims_str(base));
    const s2::ComplexImage src_img =
        problem == "l1" ? truth : s2::upsample(truth, grids.n_rec);
    nu = op.forward_vec(src_img.data);
    if (flags.has("snr")) {
      const double snr = parse_double(flags.get("snr"), "--snr");
      if (snr > 0.0) {
        sigma = s2::sigma_from_snr(truth, snr);
        const std::uint64_t seed = parse_u64(flags.get_or("seed", "1"), "--seed");
        std::cout << "seed: " << seed << "\n";
        s2::detail::add_noise_by_frequency(nu, keys_op, sigma, seed);
      }
    }
  } else {
    const s2::ComplexImage data = s2::read_complex_image(flags.get("data"));
    if (data.size() != mask.indices.size())
      throw UsageError("--data holds " + std::to_string(data.size()) + " values but the mask has " +
                       std::to_string(mask.indices.size()) + " indices");
    nu = s2::detail::align_measurements(data.data, keys_file, keys_op);
  }
  if (flags.has("sigma")) sigma = parse_double(flags.get("sigma"), "--sigma");

  const std::string eps_flag = flags.get_or("eps", "auto");
  double eps = 0.0;
  if (eps_flag == "auto") {
    eps = sigma > 0.0 ? sigma * std::sqrt(s2::epsilon_squared(nu.size())) : 0.0;
  } else {
    eps = parse_double(eps_flag, "--eps");
    if (eps < 0.0) throw UsageError("--eps must be >= 0");
  }

  s2::LinearMap lm;
  lm.domain = op.domain_size();
  lm.range = op.range_size();
  lm.forward = [&op](const std::vector<s2::Complex>& x) { return op.forward_vec(x); };
  lm.adjoint = [&op](const std::vector<s2::Complex>& y) { return op.adjoint_vec(y); };

  s2::SolverOptions opts;
  opts.max_iterations = parse_size(flags.get_or("max-iter", "500"), "--max-iter");
  opts.tolerance = parse_double(flags.get_or("tol", "1e-6"), "--tol");

  s2::SolveReport rep;
  s2::ComplexImage recon(problem == "l1" ? base : grids.n_rec);
  if (problem == "l1") {
    const s2::SparsityBasis basis(s2::basis_from_name(flags.get("basis")), base);
    double scale = 0.0;
    for (const s2::Complex& c : s2::analyze(basis, op.adjoint_vec(nu)))
      scale = std::max(scale, std::abs(c));
    opts.gamma = flags.has("gamma") ? parse_double(flags.get("gamma"), "--gamma") : 0.1 * scale;
    rep = s2::solve_bp(s2::Problem::kL1Synthesis, lm, &basis, nu, eps, base, opts);
    recon.data = s2::synthesize(basis, rep.solution);
  } else {
    double scale = 0.0;
    for (const s2::Complex& c : op.adjoint_vec(nu)) scale = std::max(scale, std::abs(c));
    opts.gamma = flags.has("gamma") ? parse_double(flags.get("gamma"), "--gamma") : 0.1 * scale;
    rep = s2::solve_bp(s2::Problem::kTv, lm, nullptr, nu, eps, grids.n_rec, opts);
    recon.data = rep.solution;
  }

  if (flags.has("dump-data")) {
    s2::ComplexImage data_img({nu.size()});
    data_img.data = s2::detail::align_measurements(nu, keys_op, keys_file);
    s2::write_complex_image(flags.get("dump-data"), data_img);
  }
  s2::write_complex_image(flags.get("out"), recon);

  std::cout << "m: " << nu.size() << "\neps: " << fmt(eps) << "\niterations: " << rep.iterations
            << "\nconverged: " << (rep.converged ? 1 : 0)
            << "\nresidual_sq: " << fmt(rep.residual_sq) << "\nobjective: " << fmt(rep.objective)
            << "\n";
  if (simulate) {
    const s2::ComplexImage recon_base = recon.dims == base ? recon : s2::downsample(recon, base);
    std::cout << "relative_error_vs_input: " << fmt(s2::relative_error(recon_base, truth)) << "\n";
  }
  std::cout << "wrote " << flags.get("out") << " dims=" << dims_str(recon.dims) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// experiment subcommands: config plumbing
// ---------------------------------------------------------------------------

using ConfigMap = std::map<std::string, std::string>;

ConfigMap load_config(const Flags& flags) {
  ConfigMap cfg;
  if (flags.has("config")) cfg = s2::parse_config_file(flags.get("config"));
  if (flags.has("seed")) cfg["seed"] = flags.get("seed");
  return cfg;
}

/// Pulls `key` out of the map (erasing it) and applies `apply`; leftover keys
/// are reported as usage errors by finish_config.
template <typename Fn>
void take(ConfigMap& cfg, const std::string& key, Fn&& apply) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return;
  apply(it->second);
  cfg.erase(it);
}

void apply_solver_keys(ConfigMap& cfg, s2::SolverOptions& opts) {
  take(cfg, "solver_max_iterations",
       [&](const std::string& v) { opts.max_iterations = parse_size(v, "solver_max_iterations"); });
  take(cfg, "solver_tolerance",
       [&](const std::string& v) { opts.tolerance = parse_double(v, "solver_tolerance"); });
  take(cfg, "solver_cg_tolerance",
       [&](const std::string& v) { opts.cg_tolerance = parse_double(v, "solver_cg_tolerance"); });
  take(cfg, "solver_cg_max_iterations", [&](const std::string& v) {
    opts.cg_max_iterations = parse_size(v, "solver_cg_max_iterations");
  });
  take(cfg, "solver_tv_prox_iterations", [&](const std::string& v) {
    opts.tv_prox_iterations = parse_size(v, "solver_tv_prox_iterations");
  });
}

void finish_config(const ConfigMap& cfg) {
  if (cfg.empty()) return;
  std::string keys;
  for (const auto& [k, v] : cfg) {
    if (!keys.empty()) keys += ", ";
    keys += k;
  }
  throw UsageError("unknown config keys: " + keys);
}

void solver_manifest(std::vector<std::pair<std::string, std::string>>& kv,
                     const s2::SolverOptions& opts) {
  kv.emplace_back("solver_max_iterations", std::to_string(opts.max_iterations));
  kv.emplace_back("solver_tolerance", fmt(opts.tolerance));
  kv.emplace_back("solver_cg_tolerance", fmt(opts.cg_tolerance));
  kv.emplace_back("solver_cg_max_iterations", std::to_string(opts.cg_max_iterations));
  kv.emplace_back("solver_tv_prox_iterations", std::to_string(opts.tv_prox_iterations));
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += s2::detail::fmt_short(v[i]);
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::filesystem::path prepare_out_dir(const Flags& flags) {
  const std::filesystem::path dir = flags.get("out-dir");
  std::filesystem::create_directories(dir);
  return dir;
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  long long ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
  }
};

int cmd_phase_transition(const Flags& flags) {
  const auto dir = prepare_out_dir(flags);
  ConfigMap raw = load_config(flags);
  s2::PhaseTransitionConfig cfg;
  take(raw, "n", [&](const std::string& v) { cfg.n = parse_size(v, "n"); });
  take(raw, "sparsity", [&](const std::string& v) { cfg.sparsity = parse_size(v, "sparsity"); });
  take(raw, "bases", [&](const std::string& v) {
    cfg.bases.clear();
    for (const std::string& name : split(v, ',')) cfg.bases.push_back(s2::basis_from_name(name));
  });
  take(raw, "w_bars", [&](const std::string& v) { cfg.w_bars = parse_double_list(v, "w_bars"); });
  take(raw, "m_values",
       [&](const std::string& v) { cfg.m_values = parse_size_list(v, "m_values"); });
  take(raw, "trials", [&](const std::string& v) { cfg.trials = parse_size(v, "trials"); });
  take(raw, "seed", [&](const std::string& v) { cfg.seed = parse_u64(v, "seed"); });
  take(raw, "threads", [&](const std::string& v) { cfg.threads = parse_size(v, "threads"); });
  take(raw, "solver_gamma",
       [&](const std::string& v) { cfg.solver_gamma = parse_double(v, "solver_gamma"); });
  apply_solver_keys(raw, cfg.solver);
  finish_config(raw);

  std::cout << "seed: " << cfg.seed << "\n";
  Stopwatch watch;
  const auto records = s2::run_phase_transition(cfg);
  const std::string csv_path = (dir / "phase_transition.csv").string();
  write_text_file(csv_path, s2::phase_transition_csv(records));

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("command", "phase-transition");
  kv.emplace_back("version", s2::kVersion);
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("n", std::to_string(cfg.n));
  kv.emplace_back("sparsity", std::to_string(cfg.sparsity));
  {
    std::string names;
    for (const auto b : cfg.bases) {
      if (!names.empty()) names += ',';
      names += s2::basis_name(b);
    }
    kv.emplace_back("bases", names);
  }
  kv.emplace_back("w_bars", join_doubles(cfg.w_bars));
  kv.emplace_back("m_values", join_sizes(cfg.m_values.empty()
                                             ? s2::default_phase_transition_m(cfg.n)
                                             : cfg.m_values));
  kv.emplace_back("trials", std::to_string(cfg.trials));
  kv.emplace_back("threads", std::to_string(cfg.threads));
  kv.emplace_back("solver_gamma", fmt(cfg.solver_gamma));
  solver_manifest(kv, cfg.solver);
  kv.emplace_back("output_csv", csv_path);
  kv.emplace_back("wall_ms", std::to_string(watch.ms()));
  s2::write_manifest((dir / "manifest.txt").string(), kv);
  std::cout << "wrote " << csv_path << "\nwrote " << (dir / "manifest.txt").string() << "\n";
  return 0;
}

int cmd_error_curves(const Flags& flags) {
  const auto dir = prepare_out_dir(flags);
  ConfigMap raw = load_config(flags);
  s2::ErrorCurveConfig cfg;
  take(raw, "n", [&](const std::string& v) { cfg.n = parse_size(v, "n"); });
  take(raw, "fine_factor",
       [&](const std::string& v) { cfg.fine_factor = parse_size(v, "fine_factor"); });
  take(raw, "coverages",
       [&](const std::string& v) { cfg.coverages = parse_double_list(v, "coverages"); });
  take(raw, "snrs", [&](const std::string& v) { cfg.snrs = parse_double_list(v, "snrs"); });
  take(raw, "w_bars", [&](const std::string& v) { cfg.w_bars = parse_double_list(v, "w_bars"); });
  take(raw, "trials", [&](const std::string& v) { cfg.trials = parse_size(v, "trials"); });
  take(raw, "seed", [&](const std::string& v) { cfg.seed = parse_u64(v, "seed"); });
  take(raw, "threads", [&](const std::string& v) { cfg.threads = parse_size(v, "threads"); });
  take(raw, "texture_amplitude",
       [&](const std::string& v) { cfg.texture_amplitude = parse_double(v, "texture_amplitude"); });
  take(raw, "solver_gamma",
       [&](const std::string& v) { cfg.solver_gamma = parse_double(v, "solver_gamma"); });
  apply_solver_keys(raw, cfg.solver);
  finish_config(raw);

  std::cout << "seed: " << cfg.seed << "\n";
  Stopwatch watch;
  const auto result = s2::run_error_vs_snr(cfg);
  const std::string trials_path = (dir / "error_trials.csv").string();
  const std::string summary_path = (dir / "error_summary.csv").string();
  write_text_file(trials_path, s2::error_trials_csv(result.trials));
  write_text_file(summary_path, s2::error_summary_csv(result.summary));

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("command", "error-curves");
  kv.emplace_back("version", s2::kVersion);
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("n", std::to_string(cfg.n));
  kv.emplace_back("fine_factor", std::to_string(cfg.fine_factor));
  kv.emplace_back("coverages", join_doubles(cfg.coverages));
  kv.emplace_back("snrs", join_doubles(cfg.snrs));
  kv.emplace_back("w_bars", join_doubles(cfg.w_bars));
  kv.emplace_back("trials", std::to_string(cfg.trials));
  kv.emplace_back("threads", std::to_string(cfg.threads));
  kv.emplace_back("texture_amplitude", fmt(cfg.texture_amplitude));
  kv.emplace_back("solver_gamma", fmt(cfg.solver_gamma));
  solver_manifest(kv, cfg.solver);
  kv.emplace_back("output_trials_csv", trials_path);
  kv.emplace_back("output_summary_csv", summary_path);
  kv.emplace_back("wall_ms", std::to_string(watch.ms()));
  s2::write_manifest((dir / "manifest.txt").string(), kv);
  std::cout << "wrote " << trials_path << "\nwrote " << summary_path << "\nwrote "
            << (dir / "manifest.txt").string() << "\n";
  return 0;
}

int cmd_varying_chirp(const Flags& flags) {
  const auto dir = prepare_out_dir(flags);
  ConfigMap raw = load_config(flags);
  s2::VaryingChirpConfig cfg;
  take(raw, "n", [&](const std::string& v) { cfg.n = parse_size(v, "n"); });
  take(raw, "fine_factor",
       [&](const std::string& v) { cfg.fine_factor = parse_size(v, "fine_factor"); });
  take(raw, "coverages",
       [&](const std::string& v) { cfg.coverages = parse_double_list(v, "coverages"); });
  take(raw, "snrs", [&](const std::string& v) { cfg.snrs = parse_double_list(v, "snrs"); });
  take(raw, "trials", [&](const std::string& v) { cfg.trials = parse_size(v, "trials"); });
  take(raw, "seed", [&](const std::string& v) { cfg.seed = parse_u64(v, "seed"); });
  take(raw, "threads", [&](const std::string& v) { cfg.threads = parse_size(v, "threads"); });
  take(raw, "kappa", [&](const std::string& v) { cfg.kappa = parse_double(v, "kappa"); });
  take(raw, "echo_time",
       [&](const std::string& v) { cfg.echo_time = parse_double(v, "echo_time"); });
  take(raw, "readout_duration",
       [&](const std::string& v) { cfg.readout_duration = parse_double(v, "readout_duration"); });
  take(raw, "w_bar_at_echo",
       [&](const std::string& v) { cfg.w_bar_at_echo = parse_double(v, "w_bar_at_echo"); });
  take(raw, "texture_amplitude",
       [&](const std::string& v) { cfg.texture_amplitude = parse_double(v, "texture_amplitude"); });
  take(raw, "solver_gamma",
       [&](const std::string& v) { cfg.solver_gamma = parse_double(v, "solver_gamma"); });
  apply_solver_keys(raw, cfg.solver);
  finish_config(raw);

  std::cout << "seed: " << cfg.seed << "\n";
  Stopwatch watch;
  const auto result = s2::run_varying_chirp_validation(cfg);
  const std::string trials_path = (dir / "varying_trials.csv").string();
  const std::string summary_path = (dir / "varying_summary.csv").string();
  write_text_file(trials_path, s2::error_trials_csv(result.trials));
  write_text_file(summary_path, s2::error_summary_csv(result.summary));

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("command", "varying-chirp");
  kv.emplace_back("version", s2::kVersion);
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("n", std::to_string(cfg.n));
  kv.emplace_back("fine_factor", std::to_string(cfg.fine_factor));
  kv.emplace_back("coverages", join_doubles(cfg.coverages));
  kv.emplace_back("snrs", join_doubles(cfg.snrs));
  kv.emplace_back("trials", std::to_string(cfg.trials));
  kv.emplace_back("threads", std::to_string(cfg.threads));
  kv.emplace_back("kappa", fmt(cfg.kappa));
  kv.emplace_back("echo_time", fmt(cfg.echo_time));
  kv.emplace_back("readout_duration", fmt(cfg.readout_duration));
  kv.emplace_back("w_bar_at_echo", fmt(cfg.w_bar_at_echo));
  kv.emplace_back("texture_amplitude", fmt(cfg.texture_amplitude));
  kv.emplace_back("solver_gamma", fmt(cfg.solver_gamma));
  solver_manifest(kv, cfg.solver);
  kv.emplace_back("output_trials_csv", trials_path);
  kv.emplace_back("output_summary_csv", summary_path);
  kv.emplace_back("wall_ms", std::to_string(watch.ms()));
  s2::write_manifest((dir / "manifest.txt").string(), kv);
  std::cout << "wrote " << trials_path << "\nwrote " << summary_path << "\nwrote "
            << (dir / "manifest.txt").string() << "\n";
  return 0;
}

int cmd_highres_demo(const Flags& flags) {
  const auto dir = prepare_out_dir(flags);
  ConfigMap raw = load_config(flags);
  s2::HighResDemoConfig cfg;
  take(raw, "n", [&](const std::string& v) { cfg.n = parse_size(v, "n"); });
  take(raw, "w_bar", [&](const std::string& v) { cfg.w_bar = parse_double(v, "w_bar"); });
  take(raw, "fine_factor",
       [&](const std::string& v) { cfg.fine_factor = parse_size(v, "fine_factor"); });
  take(raw, "snr", [&](const std::string& v) { cfg.snr = parse_double(v, "snr"); });
  take(raw, "seed", [&](const std::string& v) { cfg.seed = parse_u64(v, "seed"); });
  take(raw, "solver_gamma",
       [&](const std::string& v) { cfg.solver_gamma = parse_double(v, "solver_gamma"); });
  apply_solver_keys(raw, cfg.solver);
  finish_config(raw);

  std::cout << "seed: " << cfg.seed << "\n";
  Stopwatch watch;
  const auto result = s2::run_high_resolution_demo(cfg);
  const std::string rec_path = (dir / "recon_rec.s2cx").string();
  const std::string base_path = (dir / "recon_base.s2cx").string();
  s2::write_complex_image(rec_path, result.recon_rec);
  s2::write_complex_image(base_path, result.recon_base);

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("command", "highres-demo");
  kv.emplace_back("version", s2::kVersion);
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("n", std::to_string(cfg.n));
  kv.emplace_back("w_bar", fmt(cfg.w_bar));
  kv.emplace_back("fine_factor", std::to_string(cfg.fine_factor));
  kv.emplace_back("snr", fmt(cfg.snr));
  kv.emplace_back("solver_gamma", fmt(cfg.solver_gamma));
  solver_manifest(kv, cfg.solver);
  kv.emplace_back("m", std::to_string(result.m));
  kv.emplace_back("sigma", fmt(result.sigma));
  kv.emplace_back("relative_error", fmt(result.relative_err));
  kv.emplace_back("chi2", fmt(result.chi2));
  kv.emplace_back("iterations", std::to_string(result.iterations));
  kv.emplace_back("converged", result.converged ? "1" : "0");
  kv.emplace_back("output_recon_rec", rec_path);
  kv.emplace_back("output_recon_base", base_path);
  kv.emplace_back("wall_ms", std::to_string(watch.ms()));
  s2::write_manifest((dir / "manifest.txt").string(), kv);
  std::cout << "relative_error: " << fmt(result.relative_err) << "\nwrote " << rec_path
            << " dims=" << dims_str(result.recon_rec.dims) << "\nwrote " << base_path
            << " dims=" << dims_str(result.recon_base.dims) << "\nwrote "
            << (dir / "manifest.txt").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

struct Subcommand {
  std::set<std::string> flags;
  int (*run)(const Flags&);
};

const std::map<std::string, Subcommand>& subcommands() {
  static const std::map<std::string, Subcommand> table = {
      {"phantom", {{"grid", "preset", "out"}, cmd_phantom}},
      {"mask", {{"grid", "coverage", "m", "profile", "p", "seed", "out"}, cmd_mask}},
      {"coherence-table", {{"n", "w-bars", "bases", "out"}, cmd_coherence_table}},
      {"reconstruct",
       {{"data", "simulate", "mask", "chirp", "problem", "basis", "eps", "sigma", "snr", "seed",
         "max-iter", "tol", "gamma", "dump-data", "out"},
        cmd_reconstruct}},
      {"phase-transition", {{"config", "out-dir", "seed"}, cmd_phase_transition}},
      {"error-curves", {{"config", "out-dir", "seed"}, cmd_error_curves}},
      {"varying-chirp", {{"config", "out-dir", "seed"}, cmd_varying_chirp}},
      {"highres-demo", {{"config", "out-dir", "seed"}, cmd_highres_demo}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kGlobalUsage;
    return 1;
  }
  const std::string name = argv[1];
  if (name == "--help" || name == "-h") {
    std::cout << kGlobalUsage;
    return 0;
  }
  const auto it = subcommands().find(name);
  if (it == subcommands().end()) {
    std::cerr << "error: unknown subcommand '" << name << "'\n\n" << kGlobalUsage;
    return 1;
  }
  try {
    const Flags flags = parse_flags(argc, argv, 2, it->second.flags);
    if (flags.help) {
      std::cout << usage_texts().at(name);
      return 0;
    }
    return it->second.run(flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << usage_texts().at(name);
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
