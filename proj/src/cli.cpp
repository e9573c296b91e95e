#include "pamenc/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pamenc/harness.hpp"

namespace pamenc {
namespace {

namespace fs = std::filesystem;

class MissingFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidCombination : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested.store(true); }

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw MissingFile(what + " not found: " + path);
}

std::string default_out_dir() {
  const char* env = std::getenv("PAMENC_OUT_DIR");
  return env && *env ? env : ".";
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  if (!p.empty()) fs::create_directories(p);
  return p;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

PamParams load_pam(const std::string& path) {
  if (path.empty()) return default_pam_params();
  require_file(path, "PAM parameter file");
  return pam_params_from(KeyValues::load(path));
}

SurrogatePlantParams load_plant(const std::string& path) {
  if (path.empty()) return default_plant_params();
  require_file(path, "plant parameter file");
  return plant_params_from(KeyValues::load(path));
}

Gains load_gains(const std::string& spec) {
  if (spec == "sim") return gains_sim();
  if (spec == "table2") return gains_table2();
  require_file(spec, "gains file");
  return gains_from(KeyValues::load(spec));
}

PolyCoeffs load_or_fit_coeffs(const std::string& path, const PamParams& pam) {
  if (path.empty()) return fitted_coeffs(pam);
  require_file(path, "coefficient file");
  return to_poly_coeffs(read_coefficients_csv(path));
}

std::vector<MetricWindow> parse_windows(const std::string& spec) {
  if (spec == "canonical") return canonical_windows();
  std::vector<MetricWindow> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--windows", "expected canonical or k0:k1[,k0:k1...]");
    try {
      out.push_back({std::stoul(item.substr(0, colon)), std::stoul(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw CLI::ValidationError("--windows", "bad window '" + item + "'");
    }
  }
  if (out.empty()) throw CLI::ValidationError("--windows", "no windows given");
  return out;
}

std::string profile_tag(const std::string& profile) {
  if (profile == "ref1" || profile == "ref2") return profile;
  return fs::path(profile).stem().string();
}

// ---------------------------------------------------------------- keygen

struct KeygenArgs {
  int bits = 64;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string name = "elgamal";
};

void run_keygen(const KeygenArgs& a, std::ostream& out) {
  const auto keys = a.seed ? keygen(a.bits, *a.seed) : [&] {
    auto rng = RandomSource::from_os();
    return keygen(a.bits, rng);
  }();
  const auto dir = ensure_dir(a.out_dir);
  const auto sec = dir / (a.name + ".key");
  const auto pub = dir / (a.name + ".pub");
  save_secret_key(sec, keys);
  save_public_key(pub, keys.public_key());
  out << "wrote " << sec.string() << " and " << pub.string() << " (" << a.bits << "-bit safe prime)\n";
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  double lambda = kDefaultLambda;
  int grid = 21;
  double prune_threshold = kDefaultPruneThreshold;
  std::string pam;
  std::string out;
};

void run_fit(const FitArgs& a, std::ostream& out) {
  const auto pam = load_pam(a.pam);
  const auto spec = default_feature_spec(a.grid);
  const auto fit = fit_rational_terms(spec, pam, a.lambda, a.prune_threshold);
  const fs::path path = a.out.empty() ? fs::path(default_out_dir()) / "coeffs.csv" : fs::path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_coefficients_csv(path, fit.table);
  out << "wrote " << path.string() << "\n";
  for (const auto& d : fit.dropped) {
    out << "pruned " << target_name(d.target) << ":" << d.term.monomial.name() << " (" << fmt("%.3g", d.term.value)
        << ")\n";
  }
  try {
    const auto coeffs = to_poly_coeffs(fit.table);
    for (std::size_t t = 0; t < kTargetCount; ++t) {
      const auto target = static_cast<Target>(t);
      out << target_name(target) << " max relative error "
          << fmt("%.4g", approximation_error(target, coeffs, spec.box, pam)) << "\n";
    }
  } catch (const FitError& e) {
    out << "fitted terms do not match the controller supports: " << e.what() << "\n";
  }
}

// ---------------------------------------------------------------- build-phi

struct BuildPhiArgs {
  std::string coeffs;
  std::string pam;
  std::string gains = "table2";
  std::string out;
  std::string public_key;
  std::string enc_out;
  std::uint64_t seed = 1;
  double delta_xi = 1e8;
  double delta_phi = 1e8;
};

void run_build_phi(const BuildPhiArgs& a, std::ostream& out) {
  if (!a.enc_out.empty() && a.public_key.empty()) {
    throw InvalidCombination("--enc-out needs --public-key");
  }
  const auto pam = load_pam(a.pam);
  const auto gains = load_gains(a.gains);
  const auto coeffs = load_or_fit_coeffs(a.coeffs, pam);
  const auto phi = build_phi(coeffs, pam, gains);
  const fs::path path = a.out.empty() ? fs::path(default_out_dir()) / "phi.csv" : fs::path(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_phi_csv(path, phi);
  out << "wrote " << path.string() << "\n";
  if (a.public_key.empty()) return;

  require_file(a.public_key, "public key file");
  const auto key = load_public_key(a.public_key);
  const EncodingParams enc{a.delta_xi, a.delta_phi};
  const auto guard = make_overflow_guard(phi, enc, key.p);
  RandomSource rng(a.seed);
  const auto enc_phi = enc_matrix(phi, enc, key, rng);
  const fs::path enc_path = a.enc_out.empty() ? fs::path(default_out_dir()) / "phi.enc" : fs::path(a.enc_out);
  if (enc_path.has_parent_path()) fs::create_directories(enc_path.parent_path());
  save_encrypted_phi(enc_path, enc_phi);
  out << "wrote " << enc_path.string() << " (largest decodable product " << fmt("%.6g", guard.max_product) << ")\n";
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string mode = "original";
  std::string profile = "ref2";
  std::string keys;
  std::string pam;
  std::string plant;
  std::string gains;
  std::string coeffs;
  std::uint64_t seed = 1;
  double load_mass = 0.0;
  std::string out_dir;
  std::string out;
  bool timing = false;
  bool verbose = false;
  double noise_theta_deg = 0.0;
  double noise_pressure_kpa = 0.0;
  std::uint64_t noise_seed = 7;
  std::string host;
  int port = 0;
  int timeout_ms = static_cast<int>(kDefaultProtocolTimeout.count());
};

void run_simulate(const SimulateArgs& a, std::ostream& out) {
  LoopConfig cfg;
  try {
    cfg.mode = parse_mode(a.mode);
  } catch (const HarnessError& e) {
    throw CLI::ValidationError("--mode", e.what());
  }
  const bool remote = !a.host.empty() || a.port != 0;
  if (cfg.mode == Mode::encrypted && a.keys.empty()) {
    throw InvalidCombination("--mode encrypted requires --keys <secret key file>");
  }
  if (cfg.mode != Mode::encrypted && !a.keys.empty()) throw InvalidCombination("--keys is only used by --mode encrypted");
  if (cfg.mode != Mode::encrypted && remote) throw InvalidCombination("--host/--port need --mode encrypted");
  if (cfg.mode == Mode::original && !a.coeffs.empty()) throw InvalidCombination("--coeffs has no effect in original mode");
  if (remote && a.port <= 0) throw InvalidCombination("remote evaluation needs --port");
  if (a.port < 0 || a.port > 65535) throw CLI::ValidationError("--port", "must be in 0..65535");

  if (a.profile != "ref1" && a.profile != "ref2") require_file(a.profile, "profile file");
  cfg.profile = ReferenceProfile::resolve(a.profile);
  cfg.pam = load_pam(a.pam);
  cfg.plant = load_plant(a.plant);
  if (a.load_mass != 0.0) cfg.plant.load_torque = load_torque_for_mass(a.load_mass, cfg.pam);
  cfg.gains = load_gains(a.gains.empty() ? (cfg.mode == Mode::original ? "sim" : "table2") : a.gains);
  if (cfg.mode != Mode::original) cfg.coeffs = load_or_fit_coeffs(a.coeffs, cfg.pam);
  if (!a.keys.empty()) {
    require_file(a.keys, "secret key file");
    cfg.keys = load_secret_key(a.keys);
  }
  cfg.nonce_seed = a.seed;
  cfg.noise = {a.noise_theta_deg, a.noise_pressure_kpa, a.noise_seed};
  if (remote) {
    cfg.transport = Transport::remote;
    cfg.host = a.host.empty() ? "127.0.0.1" : a.host;
    cfg.port = static_cast<std::uint16_t>(a.port);
    cfg.timeout = std::chrono::milliseconds(a.timeout_ms);
  }

  const auto trace = run_closed_loop(cfg);

  fs::path path;
  if (!a.out.empty()) {
    path = a.out;
  } else {
    const auto dir = ensure_dir(a.out_dir.empty() ? default_out_dir() : a.out_dir);
    path = dir / ("trace_" + std::string(mode_name(cfg.mode)) + "_" + profile_tag(a.profile) + "_s" +
                  std::to_string(a.seed) + ".csv");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_trace_csv(path, trace, a.verbose);
  out << "wrote " << path.string() << " (" << trace.rows.size() << " steps)\n";
  if (a.timing) {
    auto timing_path = path;
    timing_path.replace_extension(".timing.csv");
    write_timing_csv(timing_path, trace);
    out << "wrote " << timing_path.string() << "; worst controller step "
        << fmt("%.3f", trace.worst_compute_time() * 1e3) << " ms, " << trace.deadline_overruns()
        << " steps over Ts\n";
  }
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string public_key;
  std::string enc_phi;
  std::string bind = "127.0.0.1";
  int port = 0;
  int timeout_ms = static_cast<int>(kDefaultProtocolTimeout.count());
};

void run_serve(const ServeArgs& a, std::ostream& out) {
  if (a.port < 0 || a.port > 65535) throw CLI::ValidationError("--port", "must be in 0..65535");
  require_file(a.public_key, "public key file");
  require_file(a.enc_phi, "encrypted controller file");
  const auto key = load_public_key(a.public_key);
  auto enc_phi = load_encrypted_phi(a.enc_phi, key.p);
  ServiceOptions opts;
  opts.bind_address = a.bind;
  opts.port = static_cast<std::uint16_t>(a.port);
  opts.timeout = std::chrono::milliseconds(a.timeout_ms);
  ControllerService service(std::move(enc_phi), key, opts);
  service.start();
  out << "listening on " << a.bind << ":" << service.port() << std::endl;

  g_stop_requested.store(false);
  std::signal(SIGINT, on_stop_signal);
  std::signal(SIGTERM, on_stop_signal);
  service.wait(g_stop_requested);
  service.stop();
  const auto st = service.stats();
  out << "stopped after " << st.sessions << " sessions, " << st.evaluations << " evaluations, " << st.errors
      << " errors\n";
}

// ---------------------------------------------------------------- evaluate / compare

struct EvaluateArgs {
  std::string trace;
  std::string windows = "canonical";
};

void run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto windows = parse_windows(a.windows);
  require_file(a.trace, "trace file");
  const auto trace = read_trace_csv(a.trace);
  auto th = trace.column(&TraceRow::theta);
  auto thr = trace.column(&TraceRow::theta_ref);
  for (auto& v : th) v = rad_to_deg(v);
  for (auto& v : thr) v = rad_to_deg(v);
  const auto kp = trace.column(&TraceRow::K_P);
  const auto kr = trace.column(&TraceRow::Kp_ref);
  out << "k0,k1,gamma_theta_deg,gamma_Kp\n";
  for (const auto& w : windows) {
    out << w.k0 << ',' << w.k1 << ',' << fmt("%.17g", l2_score(th, thr, w)) << ','
        << fmt("%.17g", l2_score(kp, kr, w)) << '\n';
  }
}

struct CompareArgs {
  std::vector<std::string> traces;
  std::string windows = "canonical";
  std::string csv;
};

void run_compare(const CompareArgs& a, std::ostream& out) {
  const auto windows = parse_windows(a.windows);
  std::vector<LabeledTrace> traces;
  for (const auto& spec : a.traces) {
    const auto eq = spec.find('=');
    const std::string label = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    require_file(path, "trace file");
    traces.push_back({label, read_trace_csv(path)});
  }
  const auto report = compare_report(traces, windows);
  out << report.text();
  if (!a.csv.empty()) {
    std::ofstream f(a.csv, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + a.csv);
    f << report.csv();
    out << "wrote " << a.csv << "\n";
  }
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Encrypted angle and stiffness control of an antagonistic PAM joint", "pamenc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  KeygenArgs kg;
  kg.out_dir = default_out_dir();
  auto* keygen_cmd = app.add_subcommand("keygen", "Generate an ElGamal key pair over a safe prime");
  keygen_cmd->add_option("--bits", kg.bits, "Modulus width")->check(CLI::Range(kMinKeyBits, kMaxKeyBits));
  keygen_cmd->add_option("--seed", kg.seed, "Deterministic seed (default: OS randomness)");
  keygen_cmd->add_option("--out-dir", kg.out_dir, "Output directory")->envname("PAMENC_OUT_DIR");
  keygen_cmd->add_option("--name", kg.name, "File stem for <name>.key and <name>.pub");

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit polynomial surrogates of the rational controller terms");
  fit_cmd->add_option("--lambda", fa.lambda, "L1 penalty")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--grid", fa.grid, "Grid points per axis")->check(CLI::Range(2, 1000));
  fit_cmd->add_option("--prune", fa.prune_threshold, "Relative pruning threshold")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--pam", fa.pam, "PAM parameter file");
  fit_cmd->add_option("--out", fa.out, "Coefficient CSV (default $PAMENC_OUT_DIR/coeffs.csv)");

  BuildPhiArgs ba;
  auto* phi_cmd = app.add_subcommand("build-phi", "Build the 5x18 controller matrix, optionally encrypted");
  phi_cmd->add_option("--coeffs", ba.coeffs, "Coefficient CSV (default: fit now)");
  phi_cmd->add_option("--pam", ba.pam, "PAM parameter file");
  phi_cmd->add_option("--gains", ba.gains, "sim, table2 or a gains file");
  phi_cmd->add_option("--out", ba.out, "Plain matrix CSV (default $PAMENC_OUT_DIR/phi.csv)");
  phi_cmd->add_option("--public-key", ba.public_key, "Encrypt the matrix under this key");
  phi_cmd->add_option("--enc-out", ba.enc_out, "Encrypted matrix file (default $PAMENC_OUT_DIR/phi.enc)");
  phi_cmd->add_option("--seed", ba.seed, "Nonce seed for the matrix encryption");
  phi_cmd->add_option("--delta-xi", ba.delta_xi, "Input scaling")->check(CLI::PositiveNumber);
  phi_cmd->add_option("--delta-phi", ba.delta_phi, "Matrix scaling")->check(CLI::PositiveNumber);

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the closed loop on the surrogate plant and write a trace");
  sim_cmd->add_option("--mode", sa.mode, "original, approx or encrypted")
      ->check(CLI::IsMember({"original", "approx", "encrypted"}));
  sim_cmd->add_option("--profile", sa.profile, "ref1, ref2 or a segment CSV");
  sim_cmd->add_option("--keys", sa.keys, "Secret key file (encrypted mode)");
  sim_cmd->add_option("--pam", sa.pam, "PAM parameter file");
  sim_cmd->add_option("--plant", sa.plant, "Surrogate plant parameter file");
  sim_cmd->add_option("--gains", sa.gains, "sim, table2 or a gains file (default: sim for original, else table2)");
  sim_cmd->add_option("--coeffs", sa.coeffs, "Coefficient CSV (default: fit now)");
  sim_cmd->add_option("--seed", sa.seed, "Nonce seed");
  sim_cmd->add_option("--load-mass", sa.load_mass, "Hanging mass in kg")->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--out-dir", sa.out_dir, "Output directory")->envname("PAMENC_OUT_DIR");
  sim_cmd->add_option("--out", sa.out, "Trace CSV path (overrides --out-dir)");
  sim_cmd->add_flag("--timing", sa.timing, "Also write per-step controller timing");
  sim_cmd->add_flag("--verbose", sa.verbose, "Add xi and psi columns to the trace");
  sim_cmd->add_option("--noise-theta-deg", sa.noise_theta_deg, "Angle sensor noise std")
      ->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--noise-pressure-kpa", sa.noise_pressure_kpa, "Pressure sensor noise std")
      ->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--noise-seed", sa.noise_seed, "Sensor noise seed");
  sim_cmd->add_option("--host", sa.host, "Evaluate on a remote controller service")->envname("PAMENC_HOST");
  sim_cmd->add_option("--port", sa.port, "Remote controller service port")->envname("PAMENC_PORT");
  sim_cmd->add_option("--timeout-ms", sa.timeout_ms, "Per-frame protocol timeout")->check(CLI::PositiveNumber);

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "Serve encrypted controller evaluations over TCP");
  serve_cmd->add_option("--public-key", sv.public_key, "Public key file")->required();
  serve_cmd->add_option("--enc-phi", sv.enc_phi, "Encrypted matrix file")->required();
  serve_cmd->add_option("--bind", sv.bind, "IPv4 bind address");
  serve_cmd->add_option("--port", sv.port, "Listen port (0 picks one)")->envname("PAMENC_PORT");
  serve_cmd->add_option("--timeout-ms", sv.timeout_ms, "Per-frame protocol timeout")->check(CLI::PositiveNumber);

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute l2 tracking scores of a trace");
  eval_cmd->add_option("--trace", ea.trace, "Trace CSV")->required();
  eval_cmd->add_option("--windows", ea.windows, "canonical or k0:k1[,k0:k1...]");

  CompareArgs ca;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare controllers over repeated runs");
  cmp_cmd->add_option("--trace", ca.traces, "label=path; repeat a label for repeated runs")->required();
  cmp_cmd->add_option("--windows", ca.windows, "canonical or k0:k1[,k0:k1...]");
  cmp_cmd->add_option("--csv", ca.csv, "Also write the report as CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "pamenc: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (keygen_cmd->parsed()) run_keygen(kg, out);
    else if (fit_cmd->parsed()) run_fit(fa, out);
    else if (phi_cmd->parsed()) run_build_phi(ba, out);
    else if (sim_cmd->parsed()) run_simulate(sa, out);
    else if (serve_cmd->parsed()) run_serve(sv, out);
    else if (eval_cmd->parsed()) run_evaluate(ea, out);
    else if (cmp_cmd->parsed()) run_compare(ca, out);
    return kExitOk;
  } catch (const CLI::ValidationError& e) {
    err << "pamenc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MissingFile& e) {
    err << "pamenc: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const InvalidCombination& e) {
    err << "pamenc: usage: " << e.what() << "\n";
    return kExitInvalidCombination;
  } catch (const ProtocolError& e) {
    err << "pamenc: protocol error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
    return kExitProtocol;
  } catch (const std::exception& e) {
    err << "pamenc: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace pamenc
