// Acceptance gates. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pamenc/controller_original.hpp"
#include "pamenc/controller_poly.hpp"
#include "pamenc/crypto.hpp"
#include "pamenc/harness.hpp"
#include "pamenc/net.hpp"
#include "pamenc/poly_approx.hpp"
#include "pamenc/wire.hpp"

using namespace pamenc;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); }

ControllerInput random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> th(-kAngleLimit, kAngleLimit), P(kPressureMin, kPressureMax), K(4.0, 9.0);
  ControllerInput z;
  z.P1 = P(rng);
  z.P2 = P(rng);
  z.theta_ref = th(rng);
  z.theta = th(rng);
  z.Kp_ref = K(rng);
  return z;
}

ControllerState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> xt(-5.0, 5.0), xf(-400.0, 400.0);
  return {xt(rng), xf(rng), xf(rng)};
}

const PolyCoeffs& coeffs() {
  static const PolyCoeffs c = fitted_coeffs(default_pam_params());
  return c;
}

const ElGamalKeys& keys64() {
  static const ElGamalKeys k = keygen(64, RandomSource::from_os().next_u64());
  return k;
}

LoopConfig config(Mode m, const ReferenceProfile& profile, const Gains& gains, double load_kg = 0.0) {
  LoopConfig cfg;
  cfg.mode = m;
  cfg.profile = profile;
  cfg.gains = gains;
  cfg.plant.load_torque = load_torque_for_mass(load_kg, cfg.pam);
  if (m != Mode::original) cfg.coeffs = coeffs();
  if (m == Mode::encrypted) cfg.keys = keys64();
  return cfg;
}

std::vector<double> degrees(const std::vector<double>& rad) {
  std::vector<double> out;
  out.reserve(rad.size());
  for (double v : rad) out.push_back(rad_to_deg(v));
  return out;
}

struct Gammas {
  std::vector<double> theta;
  std::vector<double> Kp;
};

Gammas gammas(const SimTrace& t) {
  Gammas g;
  const auto th = degrees(t.column(&TraceRow::theta)), thr = degrees(t.column(&TraceRow::theta_ref));
  const auto K = t.column(&TraceRow::K_P), Kr = t.column(&TraceRow::Kp_ref);
  for (const auto& w : canonical_windows()) {
    g.theta.push_back(l2_score(th, thr, w));
    g.Kp.push_back(l2_score(K, Kr, w));
  }
  return g;
}

Verdict homomorphic_correctness() {
  const auto& k = keys64();
  RandomSource rng = RandomSource::from_os();
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const u64 a = rng.uniform(1, k.p - 1), b = rng.uniform(1, k.p - 1);
    const auto pk = k.public_key();
    if (decrypt(hom_mul(encrypt(a, pk, rng), encrypt(b, pk, rng), k.p), k) != mulmod(a, b, k.p)) ++failures;
  }
  return {failures == 0, "1000 pairs, " + std::to_string(failures) + " failures, p has " +
                             std::to_string(64 - __builtin_clzll(k.p)) + " bits"};
}

Verdict matrix_form_equivalence() {
  const auto pam = default_pam_params();
  std::mt19937_64 rng(20);
  double worst = 0.0;
  for (const auto& g : {gains_sim(), gains_table2()}) {
    const auto phi = build_phi(coeffs(), pam, g);
    for (int i = 0; i < 5000; ++i) {
      const auto x = random_state(rng);
      const auto z = random_input(rng);
      const auto a = approx_step(x, z, coeffs(), pam, g);
      const auto psi = poly_step(phi, build_xi(z, x));
      worst = std::max({worst, rel(a.next.x_theta, psi[0]), rel(a.next.x_F1, psi[1]), rel(a.next.x_F2, psi[2]),
                        rel(a.u_raw[0], psi[3]), rel(a.u_raw[1], psi[4])});
    }
  }
  return {worst <= 1e-12, "10^4 points, worst relative gap " + fmt("%.3g", worst)};
}

Verdict encryption_transparency() {
  const auto ref2 = ReferenceProfile::ref2();
  const auto approx = run_closed_loop(config(Mode::approx, ref2, gains_table2()));
  const auto enc = run_closed_loop(config(Mode::encrypted, ref2, gains_table2()));
  double gap = 0.0, du = 0.0;
  for (std::size_t k = 0; k < enc.rows.size(); ++k) {
    gap = std::max(gap, enc.rows[k].psi_plain_gap);
    du = std::max({du, std::abs(enc.rows[k].u1 - approx.rows[k].u1), std::abs(enc.rows[k].u2 - approx.rows[k].u2)});
  }
  return {gap <= 1e-4 && du <= 1e-4 && enc.rows.size() == approx.rows.size(),
          "psi vs plaintext product " + fmt("%.3g", gap) + ", paired valve commands " + fmt("%.3g", du) +
              " (bound 1e-4)"};
}

Verdict closed_form_equivalence() {
  const auto pam = default_pam_params();
  std::mt19937_64 rng(40);
  double worst = 0.0;
  for (const auto& g : {gains_sim(), gains_table2()}) {
    for (int i = 0; i < 5000; ++i) {
      const auto x = random_state(rng);
      const auto z = random_input(rng);
      const auto a = original_step(x, z, g, pam);
      const auto b = original_step_state_space(x, z, g, pam);
      worst = std::max({worst, rel(a.next.x_theta, b.next.x_theta), rel(a.next.x_F1, b.next.x_F1),
                        rel(a.next.x_F2, b.next.x_F2), rel(a.u_raw[0], b.u_raw[0]), rel(a.u_raw[1], b.u_raw[1])});
    }
  }
  return {worst <= 1e-10, "10^4 points, worst relative gap " + fmt("%.3g", worst)};
}

Verdict steady_state_tracking() {
  // Shipped default: original controller with the simulation gains.
  double worst_th = 0.0, worst_K = 0.0;
  for (const auto& profile : {ReferenceProfile::ref1(), ReferenceProfile::ref2()}) {
    for (double load : {0.0, 1.5}) {
      const auto t = run_closed_loop(config(Mode::original, profile, gains_sim(), load));
      for (const auto& w : segment_tail_windows(profile, t.Ts)) {
        double e_th = 0.0, e_K = 0.0;
        for (std::size_t k = w.k0; k <= w.k1; ++k) {
          e_th += std::abs(t.rows[k].e_theta());
          e_K += std::abs(t.rows[k].e_Kp());
        }
        const double n = static_cast<double>(w.k1 - w.k0 + 1);
        const double r_th = e_th / n / std::abs(t.rows[w.k1].theta_ref);
        const double r_K = e_K / n / std::abs(t.rows[w.k1].Kp_ref);
        worst_th = std::max(worst_th, r_th);
        worst_K = std::max(worst_K, r_K);
      }
    }
  }
  return {worst_th <= 0.027 && worst_K <= 0.027, "worst mean |error| / reference: angle " +
                                                      fmt("%.2f%%", 100 * worst_th) + ", stiffness " +
                                                      fmt("%.2f%%", 100 * worst_K) + " (bound 2.7%)"};
}

Verdict approximation_fidelity() {
  double worst_approx_th = 0.0, worst_approx_K = 0.0, worst_enc = 0.0;
  for (const auto& profile : {ReferenceProfile::ref1(), ReferenceProfile::ref2()}) {
    const auto o = gammas(run_closed_loop(config(Mode::original, profile, gains_table2())));
    const auto a = gammas(run_closed_loop(config(Mode::approx, profile, gains_table2())));
    const auto e = gammas(run_closed_loop(config(Mode::encrypted, profile, gains_table2())));
    for (std::size_t i = 0; i < o.theta.size(); ++i) {
      worst_approx_th = std::max(worst_approx_th, std::abs(a.theta[i] - o.theta[i]) / o.theta[i]);
      worst_approx_K = std::max(worst_approx_K, std::abs(a.Kp[i] - o.Kp[i]) / o.Kp[i]);
      worst_enc = std::max({worst_enc, std::abs(e.theta[i] - a.theta[i]) / a.theta[i],
                            std::abs(e.Kp[i] - a.Kp[i]) / a.Kp[i]});
    }
  }
  return {worst_approx_th <= 0.10 && worst_approx_K <= 0.10 && worst_enc <= 0.01,
          "approx vs original: angle " + fmt("%.1f%%", 100 * worst_approx_th) + ", stiffness " +
              fmt("%.1f%%", 100 * worst_approx_K) + " (bound 10%); encrypted vs approx " +
              fmt("%.4f%%", 100 * worst_enc) + " (bound 1%)"};
}

Verdict deadline() {
  const auto t = run_closed_loop(config(Mode::encrypted, ReferenceProfile::ref2(), gains_table2()));
  const double worst = t.worst_compute_time();
  return {worst < 0.020 && t.rows.size() == 2250,
          std::to_string(t.rows.size()) + " encrypted steps, worst " + fmt("%.3f ms", 1e3 * worst) + ", " +
              std::to_string(t.deadline_overruns()) + " over Ts"};
}

Verdict lasso_engine() {
  const auto pam = default_pam_params();
  std::ostringstream detail;
  bool pass = true;

  // Least squares with an intercept, solved directly.
  const auto data = sample_grid(Target::f1, SamplingBox{}, pam);
  const auto spec = default_feature_spec();
  const auto& cand = spec.candidates[static_cast<std::size_t>(Target::f1)];
  std::vector<std::vector<double>> X;
  for (const auto& m : cand) {
    if (m.is_constant()) continue;
    std::vector<double> col;
    for (const auto& p : data.inputs) col.push_back(m.eval(p));
    X.push_back(std::move(col));
  }
  const auto n = static_cast<Eigen::Index>(data.y.size());
  Eigen::MatrixXd A(n, static_cast<Eigen::Index>(X.size() + 1));
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    for (std::size_t j = 0; j < X.size(); ++j) A(i, static_cast<Eigen::Index>(j + 1)) = X[j][static_cast<std::size_t>(i)];
    y(i) = data.y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd ls = (A.transpose() * A).ldlt().solve(A.transpose() * y);
  const auto lasso = lasso_fit(X, data.y, 0.0);
  double oracle_gap = rel(lasso.intercept, ls(0));
  for (std::size_t j = 0; j < X.size(); ++j)
    oracle_gap = std::max(oracle_gap, rel(lasso.weights[j], ls(static_cast<Eigen::Index>(j + 1))));
  pass = pass && oracle_gap <= 1e-8;
  detail << "lambda=0 vs normal equations " << fmt("%.2g", oracle_gap) << "; fit error";

  for (std::size_t t = 0; t < kTargetCount; ++t) {
    const auto target = static_cast<Target>(t);
    const double err = approximation_error(target, coeffs(), SamplingBox{}, pam);
    const double bound = target == Target::f5 ? 0.02 : 0.05;
    if (err > bound) pass = false;
    detail << " " << target_name(target) << " " << fmt("%.2f%%", 100 * err) << (err > bound ? "(!)" : "");
  }

  auto table = fit_rational_terms(default_feature_spec(), pam).table;
  auto& f5 = table.terms[static_cast<std::size_t>(Target::f5)];
  double max_w = 0.0;
  for (const auto& term : f5)
    if (!term.monomial.is_constant()) max_w = std::max(max_w, std::abs(term.value));
  f5.push_back({Monomial::parse("theta^4"), 1e-6 * max_w});
  const auto pruned = prune(table, kDefaultPruneThreshold);
  const bool planted_gone =
      std::any_of(pruned.dropped.begin(), pruned.dropped.end(),
                  [](const DroppedTerm& d) { return d.target == Target::f5 && d.term.monomial.name() == "theta^4"; });
  pass = pass && planted_gone && pruned.dropped.size() == 1;
  detail << "; planted 1e-6 term " << (planted_gone ? "pruned" : "kept");
  return {pass, detail.str()};
}

Verdict metric_oracle() {
  std::mt19937_64 rng(90);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<std::size_t> pick(0, 2249);
  std::vector<double> z(2250), r(2250);
  for (auto& v : z) v = nd(rng);
  for (auto& v : r) v = nd(rng);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    auto k0 = pick(rng), k1 = pick(rng);
    if (k0 > k1) std::swap(k0, k1);
    double s = 0.0;
    for (std::size_t k = k0; k <= k1; ++k) s += (z[k] - r[k]) * (z[k] - r[k]);
    if (l2_score(z, r, {k0, k1}) != std::sqrt(s)) ++mismatches;
  }
  bool structure = canonical_windows().size() == 3;
  for (std::size_t i = 0; i < canonical_windows().size(); ++i) {
    const auto w = canonical_windows()[i];
    structure = structure && w.k1 - w.k0 + 1 == 250 && w.k1 + 1 == 750 * (i + 1);
  }
  return {mismatches == 0 && structure, "1000 random windows, " + std::to_string(mismatches) +
                                            " mismatches; canonical windows " +
                                            (structure ? "are" : "are not") + " the last 250 of each 750"};
}

std::size_t open_fds() {
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator("/proc/self/fd")) ++n;
  return n;
}

ErrorCode raw_exchange(std::uint16_t port, const std::vector<std::uint8_t>& bytes) {
  Fd s(::socket(AF_INET, SOCK_STREAM, 0));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(s.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) return ErrorCode::io_error;
  send_bytes(s.get(), bytes);
  try {
    raise_error_frame(receive_frame(s.get(), std::chrono::milliseconds{2000}));
  } catch (const ProtocolError& e) {
    return e.code();
  }
  return ErrorCode::io_error;
}

Verdict wire_protocol() {
  const std::size_t fds_before = open_fds();
  bool bytes_equal = true, coded = true;
  std::size_t steps = 0;
  {
    auto cfg = config(Mode::encrypted, ReferenceProfile::ref2(), gains_table2());
    cfg.horizon_s = 5.0;
    cfg.nonce_seed = 17;
    const auto enc = prepare_encrypted(coeffs(), cfg.pam, cfg.gains, *cfg.keys, cfg.encoding, cfg.bounds, 17);
    ControllerService svc(enc.enc_phi, cfg.keys->public_key());
    svc.start();

    // Per-message bytes for a fixed nonce stream.
    {
      auto session = DeviceSession::connect("127.0.0.1", svc.port(), cfg.keys->public_key(),
                                            std::chrono::milliseconds{1000});
      RandomSource rng(17);
      std::mt19937_64 gen(17);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int i = 0; i < 50; ++i) {
        XiVector xi;
        for (auto& v : xi.v) v = u(gen);
        const auto exi = encrypt_xi(xi, cfg.encoding, cfg.keys->public_key(), rng);
        bytes_equal = bytes_equal && encode_frame(eval_response_frame(session.evaluate(exi))) ==
                                         encode_frame(eval_response_frame(enc_eval(enc.enc_phi, exi, cfg.keys->p)));
      }
      session.close();
    }

    // Whole closed loop, remote against in-process.
    const auto local = run_closed_loop(cfg);
    cfg.transport = Transport::remote;
    cfg.port = svc.port();
    cfg.timeout = std::chrono::milliseconds{1000};
    const auto remote = run_closed_loop(cfg);
    bytes_equal = bytes_equal && trace_csv(local, true) == trace_csv(remote, true);
    steps = remote.rows.size();

    const std::vector<std::uint8_t> short_len{0, 0, 0, 1, 1};
    auto bad_version = encode_frame(hello_frame(cfg.keys->public_key()));
    bad_version[6] = 9;
    const std::vector<std::uint8_t> huge{0x7F, 0, 0, 0};
    coded = raw_exchange(svc.port(), short_len) == ErrorCode::malformed_frame &&
            raw_exchange(svc.port(), bad_version) == ErrorCode::version_mismatch &&
            raw_exchange(svc.port(), huge) == ErrorCode::frame_too_large &&
            raw_exchange(svc.port(), encode_frame(bye_frame())) == ErrorCode::unexpected_message;
    svc.stop();
  }
  const std::size_t fds_after = open_fds();
  return {bytes_equal && coded && fds_after == fds_before,
          "50 requests and a " + std::to_string(steps) + "-step loop " + (bytes_equal ? "byte-identical" : "DIFFER") +
              "; coded errors " + (coded ? "ok" : "wrong") + "; descriptors " + std::to_string(fds_before) + " -> " +
              std::to_string(fds_after)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"homomorphic correctness", homomorphic_correctness},
      {"matrix form equivalence", matrix_form_equivalence},
      {"encryption transparency", encryption_transparency},
      {"closed form equivalence", closed_form_equivalence},
      {"steady-state tracking", steady_state_tracking},
      {"approximation fidelity", approximation_fidelity},
      {"encrypted step deadline", deadline},
      {"lasso engine", lasso_engine},
      {"metric oracle", metric_oracle},
      {"wire protocol", wire_protocol},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
