#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pamenc/controller_poly.hpp"
#include "pamenc/crypto.hpp"
#include "pamenc/net.hpp"

namespace pamenc {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Segment {
  double t0 = 0.0;             // s
  double t1 = 0.0;             // s
  double theta_ref_deg = 0.0;  // degrees; converted to radians by ReferenceProfile::at()
  double Kp_ref = 0.0;         // N m / rad
};

struct ReferenceProfile {
  std::string name;
  std::vector<Segment> segments;

  static ReferenceProfile ref1();
  static ReferenceProfile ref2();
  // "ref1", "ref2", or a CSV path with header t0,t1,theta_ref_deg,Kp_ref.
  static ReferenceProfile resolve(const std::string& name_or_path);
  static ReferenceProfile from_csv(const std::filesystem::path& path);

  // Throws HarnessError unless segments start at 0 and are contiguous with t0 < t1.
  void validate() const;
  double horizon() const;
  std::size_t steps(double Ts) const;

  struct Sample {
    double theta_ref = 0.0;  // rad
    double Kp_ref = 0.0;
  };
  Sample at(double t) const;
};

struct MetricWindow {
  std::size_t k0 = 0;  // inclusive
  std::size_t k1 = 0;  // inclusive
};

// The last 5 s of each 15 s segment at Ts = 20 ms.
std::vector<MetricWindow> canonical_windows();
// The last `tail_s` seconds of every segment of `profile`.
std::vector<MetricWindow> segment_tail_windows(const ReferenceProfile& profile, double Ts, double tail_s = 5.0);

// sqrt(sum_{k=k0}^{k1} (z_k - zref_k)^2)
double l2_score(const std::vector<double>& z, const std::vector<double>& z_ref, const MetricWindow& w);

enum class Mode { original, approx, encrypted };
enum class Transport { in_process, remote };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view s);

struct TraceRow {
  std::size_t k = 0;
  double t = 0.0;
  double theta_ref = 0.0;  // rad
  double Kp_ref = 0.0;
  double theta = 0.0;  // rad, as measured
  double K_P = 0.0;
  double u1 = 0.0;
  double u2 = 0.0;
  double P1 = 0.0;
  double P2 = 0.0;
  bool clamp_u1 = false;
  bool clamp_u2 = false;
  bool clamp_pressure = false;
  bool clamp_angle = false;
  double compute_time = 0.0;  // s, controller side only
  // [x_theta+, x_F1+, x_F2+, u1, u2] before clamping.
  Psi psi{};
  // Encrypted mode: max |psi - Phi xi| against the plaintext product.
  double psi_plain_gap = 0.0;
  XiVector xi{};

  double e_theta() const { return theta_ref - theta; }
  double e_Kp() const { return Kp_ref - K_P; }
};

struct SimTrace {
  Mode mode = Mode::original;
  std::string profile;
  double Ts = 0.02;
  std::vector<TraceRow> rows;

  std::vector<double> column(double TraceRow::*field) const;
  double worst_compute_time() const;
  std::size_t deadline_overruns() const;
};

struct SensorNoise {
  double theta_deg = 0.0;  // standard deviation
  double pressure_kpa = 0.0;
  std::uint64_t seed = 7;
};

struct LoopConfig {
  Mode mode = Mode::original;
  ReferenceProfile profile = ReferenceProfile::ref2();
  PamParams pam = default_pam_params();
  SurrogatePlantParams plant = default_plant_params();
  Gains gains = gains_table2();
  std::optional<PolyCoeffs> coeffs;  // approx/encrypted; fitted from `pam` when unset
  std::optional<ElGamalKeys> keys;   // encrypted mode
  EncodingParams encoding{};
  XiBounds bounds{};
  std::uint64_t nonce_seed = 1;
  double warmup_s = 10.0;
  double warmup_voltage = 5.5;
  SensorNoise noise{};
  std::optional<double> horizon_s;  // defaults to the profile horizon
  Transport transport = Transport::in_process;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::chrono::milliseconds timeout = kDefaultProtocolTimeout;
};

// Coefficients from the default fitting pipeline for `pam`.
PolyCoeffs fitted_coeffs(const PamParams& pam);

struct EncryptedController {
  PhiMatrix phi;
  EncryptedPhi enc_phi;
  OverflowGuard guard;
};

// Builds Phi, checks the overflow guard and encrypts Phi with nonces drawn
// from a stream seeded by `seed`.
EncryptedController prepare_encrypted(const PolyCoeffs& coeffs, const PamParams& pam, const Gains& gains,
                                      const ElGamalKeys& keys, const EncodingParams& encoding,
                                      const XiBounds& bounds, std::uint64_t seed);

// Nonce stream for xi encryption, kept separate from the one used for Phi.
std::uint64_t xi_nonce_seed(std::uint64_t seed);

SimTrace run_closed_loop(const LoopConfig& cfg);

// Trace CSV: angles in degrees, %.12g. Timing lives in a separate file so
// traces stay byte-identical across runs.
void write_trace_csv(const std::filesystem::path& path, const SimTrace& trace, bool verbose = false);
std::string trace_csv(const SimTrace& trace, bool verbose = false);
SimTrace read_trace_csv(const std::filesystem::path& path);
void write_timing_csv(const std::filesystem::path& path, const SimTrace& trace);

struct LabeledTrace {
  std::string label;
  SimTrace trace;
};

struct ScoreStats {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
};

struct WindowScores {
  MetricWindow window;
  ScoreStats theta;  // gamma in degrees
  ScoreStats Kp;     // gamma in N m / rad
  // Mean tracked value over the reference, in percent, farthest from 100 across runs.
  double worst_theta_ratio = 100.0;
  double worst_Kp_ratio = 100.0;
};

struct LabelReport {
  std::string label;
  std::size_t runs = 0;
  std::vector<WindowScores> windows;
};

struct CompareReport {
  std::vector<LabelReport> labels;

  std::string text() const;
  std::string csv() const;
};

// Traces sharing a label are repeated runs. All traces must share profile and Ts.
CompareReport compare_report(const std::vector<LabeledTrace>& traces, const std::vector<MetricWindow>& windows);

}  // namespace pamenc
