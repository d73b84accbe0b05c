// End-to-end checks of the s2sim binary: exit codes, file round trips, seed
// printing, and determinism. The binary path is injected by CMake.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "s2/io.hpp"

#ifndef S2SIM_BINARY
#error "S2SIM_BINARY must be defined to the s2sim executable path"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr interleaved
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(S2SIM_BINARY) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  RunResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr)
    res.output += buf.data();
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

/// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("s2sim_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli: global help and dispatch exit codes") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("").exit_code == 1);
  CHECK(run_cli("definitely-not-a-subcommand").exit_code == 1);
  for (const char* sub : {"phantom", "mask", "coherence-table", "reconstruct", "phase-transition",
                          "error-curves", "varying-chirp", "highres-demo"}) {
    const RunResult r = run_cli(std::string(sub) + " --help");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("usage: s2sim ") != std::string::npos);
  }
  // unknown flag and missing value are usage errors
  CHECK(run_cli("phantom --no-such-flag 1").exit_code == 1);
  CHECK(run_cli("mask --grid").exit_code == 1);
}

TEST_CASE("cli: phantom presets and file round trip") {
  TempDir dir("phantom");
  const std::string out = dir.file("line.s2cx");
  const RunResult r = run_cli("phantom --preset line256 --out " + out);
  REQUIRE(r.exit_code == 0);
  const s2::ComplexImage img = s2::read_complex_image(out);
  CHECK(img.dims == std::vector<std::size_t>{256});
  CHECK(img.size() == 256);

  const std::string out2d = dir.file("head.s2cx");
  REQUIRE(run_cli("phantom --preset shepp2d --grid 24 --out " + out2d).exit_code == 0);
  const s2::ComplexImage head = s2::read_complex_image(out2d);
  CHECK(head.dims == std::vector<std::size_t>{24, 24});

  CHECK(run_cli("phantom --preset nope --out " + dir.file("x.s2cx")).exit_code == 1);
  CHECK(run_cli("phantom --out " + dir.file("x.s2cx")).exit_code == 1);  // missing --preset
}

TEST_CASE("cli: mask draws are seeded, reported, and reproducible") {
  TempDir dir("mask");
  const std::string a = dir.file("a.s2mk");
  const std::string b = dir.file("b.s2mk");
  const RunResult ra = run_cli("mask --grid 16x16 --coverage 0.25 --profile vds --seed 11 --out " + a);
  REQUIRE(ra.exit_code == 0);
  CHECK(ra.output.find("seed: 11") != std::string::npos);
  CHECK(ra.output.find("p: ") != std::string::npos);
  CHECK(ra.output.find("beta: ") != std::string::npos);
  REQUIRE(run_cli("mask --grid 16x16 --coverage 0.25 --profile vds --seed 11 --out " + b)
              .exit_code == 0);
  CHECK(slurp(a) == slurp(b));  // same seed, bitwise-identical mask file

  const s2::SamplingMask mask = s2::read_mask(a);
  CHECK(mask.dims == std::vector<std::size_t>{16, 16});
  CHECK(mask.seed == 11);
  CHECK(mask.target_m == 64);
  CHECK(mask.actual_m == mask.indices.size());

  // uniform profile hits the target count exactly
  const std::string u = dir.file("u.s2mk");
  REQUIRE(run_cli("mask --grid 16x16 --m 40 --profile uniform --seed 3 --out " + u).exit_code == 0);
  CHECK(s2::read_mask(u).indices.size() == 40);

  CHECK(run_cli("mask --grid 16x16 --coverage 1.5 --out " + dir.file("x.s2mk")).exit_code == 1);
  CHECK(run_cli("mask --grid 16x16 --out " + dir.file("x.s2mk")).exit_code == 1);
}

TEST_CASE("cli: coherence-table emits the pinned header and sane values") {
  TempDir dir("coh");
  const std::string out = dir.file("table.csv");
  REQUIRE(run_cli("coherence-table --n 32 --w-bars 0,0.5 --bases fourier,dirac --out " + out)
              .exit_code == 0);
  const std::string csv = slurp(out);
  CHECK(csv.rfind("basis,w_bar,N,N_c,mu,Nc_mu2\n", 0) == 0);
  // w_bar = 0 fourier row: mu = 1, N_c = N, product = N
  const auto row = csv.find("fourier,0,32,32,");
  REQUIRE(row != std::string::npos);
  std::istringstream rest(csv.substr(row + 16));
  double mu = 0.0, product = 0.0;
  char comma = 0;
  rest >> mu >> comma >> product;
  CHECK(mu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(product == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(csv.find("dirac,0,32,32,") != std::string::npos);

  const RunResult stdout_run = run_cli("coherence-table --n 16 --w-bars 0 --bases dirac");
  CHECK(stdout_run.exit_code == 0);
  CHECK(stdout_run.output.rfind("basis,w_bar,N,N_c,mu,Nc_mu2\n", 0) == 0);
  CHECK(run_cli("coherence-table --bases klingon").exit_code == 1);
}

TEST_CASE("cli: reconstruct simulate path is exact at full coverage, zero noise") {
  TempDir dir("recfull");
  const std::string ph = dir.file("ph.s2cx");
  const std::string mk = dir.file("m.s2mk");
  const std::string rec = dir.file("rec.s2cx");
  REQUIRE(run_cli("phantom --preset shepp2d --grid 16 --out " + ph).exit_code == 0);
  REQUIRE(run_cli("mask --grid 16x16 --m 256 --profile uniform --seed 1 --out " + mk).exit_code == 0);
  const RunResult r = run_cli("reconstruct --simulate " + ph + " --mask " + mk +
                              " --chirp 0 --problem tv --max-iter 200 --out " + rec);
  REQUIRE(r.exit_code == 0);
  // full sampling, no noise, no chirp: solver must reproduce the input
  const auto pos = r.output.find("relative_error_vs_input: ");
  REQUIRE(pos != std::string::npos);
  const double rel = std::stod(r.output.substr(pos + 25));
  CHECK(rel < 1e-3);
  CHECK(s2::read_complex_image(rec).dims == std::vector<std::size_t>{16, 16});
}

TEST_CASE("cli: reconstruct --data path matches --simulate --dump-data") {
  TempDir dir("recdata");
  const std::string ph = dir.file("ph.s2cx");
  const std::string mk = dir.file("m.s2mk");
  REQUIRE(run_cli("phantom --preset shepp2d --grid 16 --out " + ph).exit_code == 0);
  REQUIRE(run_cli("mask --grid 16x16 --coverage 0.5 --profile vds --seed 4 --out " + mk)
              .exit_code == 0);

  const std::string rec_a = dir.file("a.s2cx");
  const std::string rec_b = dir.file("b.s2cx");
  const std::string data = dir.file("data.s2cx");
  const RunResult sim = run_cli("reconstruct --simulate " + ph + " --mask " + mk +
                                " --chirp 0.25 --problem tv --snr 20 --seed 9 --max-iter 80" +
                                " --dump-data " + data + " --out " + rec_a);
  REQUIRE(sim.exit_code == 0);
  CHECK(sim.output.find("seed: 9") != std::string::npos);

  // feeding the dumped measurements back reproduces the reconstruction exactly
  const RunResult rerun = run_cli("reconstruct --data " + data + " --mask " + mk +
                                  " --chirp 0.25 --problem tv --eps " +
                                  sim.output.substr(sim.output.find("eps: ") + 5,
                                                    sim.output.find('\n', sim.output.find("eps: ")) -
                                                        sim.output.find("eps: ") - 5) +
                                  " --max-iter 80 --out " + rec_b);
  REQUIRE(rerun.exit_code == 0);
  CHECK(slurp(rec_a) == slurp(rec_b));

  // chirp widens the tv reconstruction grid: 16 -> 20 at |w| = 0.25
  CHECK(s2::read_complex_image(rec_a).dims == std::vector<std::size_t>{20, 20});

  CHECK(run_cli("reconstruct --mask " + mk + " --problem tv --out " + rec_b).exit_code == 1);
  CHECK(run_cli("reconstruct --data " + data + " --simulate " + ph + " --mask " + mk +
                " --problem tv --out " + rec_b)
            .exit_code == 1);
  CHECK(run_cli("reconstruct --data " + data + " --mask " + mk + " --problem l1 --out " + rec_b)
            .exit_code == 1);  // l1 without --basis
  // runtime failure (unreadable input) exits 2
  CHECK(run_cli("reconstruct --data " + dir.file("missing.s2cx") + " --mask " + mk +
                " --problem tv --out " + rec_b)
            .exit_code == 2);
}

TEST_CASE("cli: reconstruct l1 on the test line recovers it") {
  TempDir dir("recl1");
  const std::string ph = dir.file("line.s2cx");
  const std::string mk = dir.file("m.s2mk");
  const std::string rec = dir.file("rec.s2cx");
  REQUIRE(run_cli("phantom --preset line256 --out " + ph).exit_code == 0);
  REQUIRE(run_cli("mask --grid 256 --m 128 --profile uniform --seed 6 --out " + mk).exit_code == 0);
  const RunResult r = run_cli("reconstruct --simulate " + ph + " --mask " + mk +
                              " --chirp 0.3 --problem l1 --basis haar --max-iter 400 --out " + rec);
  REQUIRE(r.exit_code == 0);
  // the line is compressible (not exactly sparse) in haar, so at half
  // coverage basis pursuit recovers it only approximately
  const auto pos = r.output.find("relative_error_vs_input: ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.output.substr(pos + 25)) < 0.05);
  CHECK(s2::read_complex_image(rec).dims == std::vector<std::size_t>{256});
}

TEST_CASE("cli: phase-transition writes csv + manifest and is reproducible") {
  TempDir dir("pt");
  const std::string cfg = dir.file("pt.cfg");
  {
    std::ofstream out(cfg);
    out << "n = 16\nsparsity = 2\nbases = dirac\nw_bars = 0,0.5\nm_values = 8,16\ntrials = 2\n";
  }
  const std::string out_a = dir.file("a");
  const std::string out_b = dir.file("b");
  const RunResult ra =
      run_cli("phase-transition --config " + cfg + " --seed 5 --out-dir " + out_a);
  REQUIRE(ra.exit_code == 0);
  CHECK(ra.output.find("seed: 5") != std::string::npos);
  REQUIRE(run_cli("phase-transition --config " + cfg + " --seed 5 --out-dir " + out_b)
              .exit_code == 0);

  const std::string csv = slurp(out_a + "/phase_transition.csv");
  CHECK(csv.rfind("basis,w_bar,m,trials,recovered_count,probability,cell_seed\n", 0) == 0);
  CHECK(csv == slurp(out_b + "/phase_transition.csv"));

  const std::string manifest = slurp(out_a + "/manifest.txt");
  CHECK(manifest.find("command=phase-transition\n") != std::string::npos);
  CHECK(manifest.find("version=") != std::string::npos);
  CHECK(manifest.find("seed=5\n") != std::string::npos);
  CHECK(manifest.find("wall_ms=") != std::string::npos);

  // unknown config keys are rejected as usage errors
  {
    std::ofstream out(cfg, std::ios::app);
    out << "mystery_knob = 3\n";
  }
  CHECK(run_cli("phase-transition --config " + cfg + " --out-dir " + dir.file("c")).exit_code == 1);
}

TEST_CASE("cli: error-curves runs a tiny config end to end") {
  TempDir dir("ec");
  const std::string cfg = dir.file("ec.cfg");
  {
    std::ofstream out(cfg);
    out << "n = 8\nfine_factor = 2\ncoverages = 0.6\nsnrs = 10\nw_bars = 0,0.25\ntrials = 1\n"
        << "solver_max_iterations = 60\nsolver_tv_prox_iterations = 10\n"
        << "solver_cg_max_iterations = 30\n";
  }
  const std::string out_dir = dir.file("run");
  const RunResult r = run_cli("error-curves --config " + cfg + " --seed 2 --out-dir " + out_dir);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("seed: 2") != std::string::npos);
  const std::string summary = slurp(out_dir + "/error_summary.csv");
  CHECK(summary.rfind("coverage,snr,w_bar,trials,mean_error,std_error,w_bar_opt,seed\n", 0) == 0);
  const std::string trials = slurp(out_dir + "/error_trials.csv");
  CHECK(trials.rfind("coverage,snr,w_bar,trial,mask_seed,noise_seed,m,relative_error,chi2,"
                     "iterations,converged\n",
                     0) == 0);
  CHECK(slurp(out_dir + "/manifest.txt").find("command=error-curves\n") != std::string::npos);
}

TEST_CASE("cli: highres-demo emits both grids and the manifest") {
  TempDir dir("hr");
  const std::string cfg = dir.file("hr.cfg");
  {
    std::ofstream out(cfg);
    out << "n = 16\nw_bar = 0.25\nfine_factor = 2\nsnr = 0\nsolver_max_iterations = 60\n"
        << "solver_tv_prox_iterations = 10\nsolver_cg_max_iterations = 30\n";
  }
  const std::string out_dir = dir.file("run");
  const RunResult r = run_cli("highres-demo --config " + cfg + " --out-dir " + out_dir);
  REQUIRE(r.exit_code == 0);
  CHECK(s2::read_complex_image(out_dir + "/recon_rec.s2cx").dims ==
        std::vector<std::size_t>{20, 20});
  CHECK(s2::read_complex_image(out_dir + "/recon_base.s2cx").dims ==
        std::vector<std::size_t>{16, 16});
  CHECK(slurp(out_dir + "/manifest.txt").find("command=highres-demo\n") != std::string::npos);
}
