#include "pamenc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace pamenc {
namespace {

using Clock = std::chrono::steady_clock;

std::string g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = line.find(',');
    auto cell = line.substr(0, comma);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    out.push_back(cell);
    if (comma == std::string_view::npos) return out;
    line = line.substr(comma + 1);
  }
}

double parse_number(std::string_view cell, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw HarnessError(where + ": bad number '" + std::string(cell) + "'");
  }
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HarnessError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw HarnessError("cannot write " + path.string());
  out << text;
  if (!out) throw HarnessError("write failed for " + path.string());
}

ReferenceProfile canonical(std::string name, std::initializer_list<std::pair<double, double>> levels) {
  ReferenceProfile p;
  p.name = std::move(name);
  double t = 0.0;
  for (const auto& [deg, K] : levels) {
    p.segments.push_back({t, t + 15.0, deg, K});
    t += 15.0;
  }
  return p;
}

ScoreStats stats_of(const std::vector<double>& v) {
  ScoreStats s;
  if (v.empty()) return s;
  s.max = *std::max_element(v.begin(), v.end());
  s.min = *std::min_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

double mean_ratio(const std::vector<double>& z, const std::vector<double>& ref, const MetricWindow& w) {
  double sz = 0.0, sr = 0.0;
  for (std::size_t k = w.k0; k <= w.k1; ++k) {
    sz += z[k];
    sr += ref[k];
  }
  return sr == 0.0 ? 0.0 : 100.0 * sz / sr;
}

}  // namespace

ReferenceProfile ReferenceProfile::ref1() { return canonical("ref1", {{10.0, 8.0}, {10.0, 6.0}, {10.0, 4.0}}); }
ReferenceProfile ReferenceProfile::ref2() { return canonical("ref2", {{5.0, 9.0}, {15.0, 6.0}, {10.0, 7.0}}); }

ReferenceProfile ReferenceProfile::resolve(const std::string& name_or_path) {
  if (name_or_path == "ref1") return ref1();
  if (name_or_path == "ref2") return ref2();
  return from_csv(name_or_path);
}

ReferenceProfile ReferenceProfile::from_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  ReferenceProfile p;
  p.name = path.string();
  bool header = true;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto where = path.string() + ":" + std::to_string(i + 1);
    const auto cells = split_csv(lines[i]);
    if (header) {
      if (cells != std::vector<std::string_view>{"t0", "t1", "theta_ref_deg", "Kp_ref"}) {
        throw HarnessError(where + ": expected header t0,t1,theta_ref_deg,Kp_ref");
      }
      header = false;
      continue;
    }
    if (cells.size() != 4) throw HarnessError(where + ": expected 4 columns");
    p.segments.push_back({parse_number(cells[0], where), parse_number(cells[1], where), parse_number(cells[2], where),
                          parse_number(cells[3], where)});
  }
  p.validate();
  return p;
}

void ReferenceProfile::validate() const {
  if (segments.empty()) throw HarnessError("profile " + name + " has no segments");
  double t = 0.0;
  for (const auto& s : segments) {
    if (std::abs(s.t0 - t) > 1e-9 || !(s.t1 > s.t0)) {
      throw HarnessError("profile " + name + ": segments must start at 0 and be contiguous with t0 < t1");
    }
    if (std::abs(s.theta_ref_deg) > kAngleLimitDeg) throw HarnessError("profile " + name + ": angle beyond 25 deg");
    t = s.t1;
  }
}

double ReferenceProfile::horizon() const { return segments.empty() ? 0.0 : segments.back().t1; }

std::size_t ReferenceProfile::steps(double Ts) const {
  return static_cast<std::size_t>(std::llround(horizon() / Ts));
}

ReferenceProfile::Sample ReferenceProfile::at(double t) const {
  // Small tolerance so k*Ts landing a rounding error short of t1 stays in its segment.
  for (const auto& s : segments) {
    if (t < s.t1 - 1e-9) return {deg_to_rad(s.theta_ref_deg), s.Kp_ref};
  }
  const auto& last = segments.back();
  return {deg_to_rad(last.theta_ref_deg), last.Kp_ref};
}

std::vector<MetricWindow> canonical_windows() { return {{500, 749}, {1250, 1499}, {2000, 2249}}; }

std::vector<MetricWindow> segment_tail_windows(const ReferenceProfile& profile, double Ts, double tail_s) {
  std::vector<MetricWindow> out;
  for (const auto& s : profile.segments) {
    const auto k_end = static_cast<std::size_t>(std::llround(s.t1 / Ts));
    const auto n = static_cast<std::size_t>(std::llround(tail_s / Ts));
    out.push_back({k_end - n, k_end - 1});
  }
  return out;
}

double l2_score(const std::vector<double>& z, const std::vector<double>& z_ref, const MetricWindow& w) {
  if (w.k0 > w.k1 || w.k1 >= z.size() || w.k1 >= z_ref.size()) {
    throw HarnessError("metric window [" + std::to_string(w.k0) + "," + std::to_string(w.k1) +
                       "] outside the sequence");
  }
  double sum = 0.0;
  for (std::size_t k = w.k0; k <= w.k1; ++k) sum += (z[k] - z_ref[k]) * (z[k] - z_ref[k]);
  return std::sqrt(sum);
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::original: return "original";
    case Mode::approx: return "approx";
    case Mode::encrypted: return "encrypted";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "original") return Mode::original;
  if (s == "approx") return Mode::approx;
  if (s == "encrypted") return Mode::encrypted;
  throw HarnessError("unknown mode '" + std::string(s) + "'");
}

std::vector<double> SimTrace::column(double TraceRow::*field) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

double SimTrace::worst_compute_time() const {
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.compute_time);
  return worst;
}

std::size_t SimTrace::deadline_overruns() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [&](const TraceRow& r) { return r.compute_time > Ts; }));
}

PolyCoeffs fitted_coeffs(const PamParams& pam) {
  const auto fit = fit_rational_terms(default_feature_spec(), pam);
  auto coeffs = to_poly_coeffs(fit.table);
  for (const auto& d : fit.dropped) {
    coeffs.pruned.push_back(std::string(target_name(d.target)) + ":" + d.term.monomial.name());
  }
  return coeffs;
}

EncryptedController prepare_encrypted(const PolyCoeffs& coeffs, const PamParams& pam, const Gains& gains,
                                      const ElGamalKeys& keys, const EncodingParams& encoding,
                                      const XiBounds& bounds, std::uint64_t seed) {
  EncryptedController ec;
  ec.phi = build_phi(coeffs, pam, gains);
  ec.guard = make_overflow_guard(ec.phi, encoding, keys.p, bounds);
  RandomSource rng(seed);
  ec.enc_phi = enc_matrix(ec.phi, encoding, keys.public_key(), rng);
  return ec;
}

std::uint64_t xi_nonce_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

SimTrace run_closed_loop(const LoopConfig& cfg) {
  cfg.profile.validate();
  cfg.gains.validate();
  cfg.plant.validate();
  cfg.pam.validate();
  const double Ts = cfg.gains.Ts;
  const std::size_t steps =
      cfg.horizon_s ? static_cast<std::size_t>(std::llround(*cfg.horizon_s / Ts)) : cfg.profile.steps(Ts);

  SimTrace trace;
  trace.mode = cfg.mode;
  trace.profile = cfg.profile.name;
  trace.Ts = Ts;

  PolyCoeffs coeffs;
  if (cfg.mode != Mode::original) coeffs = cfg.coeffs ? *cfg.coeffs : fitted_coeffs(cfg.pam);

  std::optional<EncryptedController> enc;
  std::optional<DeviceSession> remote;
  std::optional<RandomSource> xi_rng;
  if (cfg.mode == Mode::encrypted) {
    if (!cfg.keys) throw HarnessError("encrypted mode needs a key pair");
    enc = prepare_encrypted(coeffs, cfg.pam, cfg.gains, *cfg.keys, cfg.encoding, cfg.bounds, cfg.nonce_seed);
    xi_rng.emplace(xi_nonce_seed(cfg.nonce_seed));
    if (cfg.transport == Transport::remote) {
      remote.emplace(DeviceSession::connect(cfg.host, cfg.port, cfg.keys->public_key(), cfg.timeout));
    }
  }

  std::mt19937_64 noise_rng(cfg.noise.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const bool noisy = cfg.noise.theta_deg > 0.0 || cfg.noise.pressure_kpa > 0.0;

  PlantState plant{};
  const auto warm_steps = static_cast<std::size_t>(std::llround(cfg.warmup_s / Ts));
  for (std::size_t k = 0; k < warm_steps; ++k) {
    plant = advance_plant(plant, cfg.warmup_voltage, cfg.warmup_voltage, cfg.plant, cfg.pam, Ts).state;
  }

  ControllerState x{};
  trace.rows.reserve(steps);
  bool pressure_clamped = false;
  bool angle_clamped = false;
  for (std::size_t k = 0; k < steps; ++k) {
    TraceRow row;
    row.k = k;
    row.t = static_cast<double>(k) * Ts;
    const auto ref = cfg.profile.at(row.t);
    row.theta_ref = ref.theta_ref;
    row.Kp_ref = ref.Kp_ref;
    row.theta = plant.theta;
    row.P1 = plant.P1;
    row.P2 = plant.P2;
    if (noisy) {
      row.theta += deg_to_rad(cfg.noise.theta_deg) * unit(noise_rng);
      row.P1 += cfg.noise.pressure_kpa * unit(noise_rng);
      row.P2 += cfg.noise.pressure_kpa * unit(noise_rng);
    }
    row.K_P = plant_stiffness(row.theta, row.P1, row.P2, cfg.pam);
    row.clamp_pressure = pressure_clamped;
    row.clamp_angle = angle_clamped;

    const ControllerInput zin{row.P1, row.P2, row.theta, row.theta_ref, row.Kp_ref};
    ControllerOutput out;
    const auto start = Clock::now();
    switch (cfg.mode) {
      case Mode::original:
        out = original_step(x, zin, cfg.gains, cfg.pam);
        break;
      case Mode::approx:
        out = approx_step(x, zin, coeffs, cfg.pam, cfg.gains);
        break;
      case Mode::encrypted: {
        row.xi = build_xi(zin, x);
        enc->guard.check_xi(row.xi);
        const auto enc_xi = encrypt_xi(row.xi, cfg.encoding, cfg.keys->public_key(), *xi_rng);
        const auto products = remote ? remote->evaluate(enc_xi) : enc_eval(enc->enc_phi, enc_xi, cfg.keys->p);
        const auto zeros = known_zeros(enc->phi, row.xi);
        const auto psi = dec_plus(products, cfg.encoding, *cfg.keys, &enc->guard, &zeros);
        out = output_from_psi(x, psi, cfg.gains);
        break;
      }
    }
    row.compute_time = std::chrono::duration<double>(Clock::now() - start).count();

    if (cfg.mode == Mode::encrypted) {
      const auto plain = poly_step(enc->phi, row.xi);
      const Psi got{out.next.x_theta, out.next.x_F1, out.next.x_F2, out.u_raw[0], out.u_raw[1]};
      for (std::size_t i = 0; i < kPsiSize; ++i) {
        row.psi_plain_gap = std::max(row.psi_plain_gap, std::abs(got[i] - plain[i]));
      }
    } else {
      row.xi = build_xi(zin, x);
    }
    row.psi = {out.next.x_theta, out.next.x_F1, out.next.x_F2, out.u_raw[0], out.u_raw[1]};
    row.u1 = out.u[0];
    row.u2 = out.u[1];
    row.clamp_u1 = out.clamped[0];
    row.clamp_u2 = out.clamped[1];
    x = out.next;

    const auto step = advance_plant(plant, row.u1, row.u2, cfg.plant, cfg.pam, Ts);
    plant = step.state;
    pressure_clamped = step.pressure_clamped;
    angle_clamped = step.angle_clamped;
    trace.rows.push_back(row);
  }
  if (remote) remote->close();
  return trace;
}

std::string trace_csv(const SimTrace& trace, bool verbose) {
  std::string out =
      "k,t,theta_ref_deg,Kp_ref,theta_deg,K_P,u1,u2,P1,P2,e_theta_deg,e_Kp,clamp_u1,clamp_u2,clamp_pressure,"
      "clamp_angle";
  if (verbose) {
    for (std::size_t i = 1; i <= kXiSize; ++i) out += ",xi" + std::to_string(i);
    for (std::size_t i = 1; i <= kPsiSize; ++i) out += ",psi" + std::to_string(i);
  }
  out += '\n';
  for (const auto& r : trace.rows) {
    out += std::to_string(r.k) + ',' + g12(r.t) + ',' + g12(rad_to_deg(r.theta_ref)) + ',' + g12(r.Kp_ref) + ',' +
           g12(rad_to_deg(r.theta)) + ',' + g12(r.K_P) + ',' + g12(r.u1) + ',' + g12(r.u2) + ',' + g12(r.P1) + ',' +
           g12(r.P2) + ',' + g12(rad_to_deg(r.e_theta())) + ',' + g12(r.e_Kp()) + ',' + (r.clamp_u1 ? '1' : '0') +
           ',' + (r.clamp_u2 ? '1' : '0') + ',' + (r.clamp_pressure ? '1' : '0') + ',' + (r.clamp_angle ? '1' : '0');
    if (verbose) {
      for (double v : r.xi.v) out += ',' + g12(v);
      for (double v : r.psi) out += ',' + g12(v);
    }
    out += '\n';
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const SimTrace& trace, bool verbose) {
  write_text(path, trace_csv(trace, verbose));
}

SimTrace read_trace_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw HarnessError(path.string() + ": empty trace");
  const auto header = split_csv(lines[0]);
  std::map<std::string, std::size_t, std::less<>> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(header[i]), i);
  const auto need = [&](std::string_view name) {
    const auto it = col.find(name);
    if (it == col.end()) throw HarnessError(path.string() + ": trace lacks column " + std::string(name));
    return it->second;
  };
  const auto ck = need("k"), ct = need("t"), cref = need("theta_ref_deg"), cK = need("Kp_ref"),
             cth = need("theta_deg"), cKP = need("K_P"), cu1 = need("u1"), cu2 = need("u2"), cP1 = need("P1"),
             cP2 = need("P2");

  SimTrace trace;
  trace.profile = path.string();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto where = path.string() + ":" + std::to_string(i + 1);
    const auto cells = split_csv(lines[i]);
    if (cells.size() != header.size()) throw HarnessError(where + ": column count differs from header");
    TraceRow r;
    r.k = static_cast<std::size_t>(parse_number(cells[ck], where));
    r.t = parse_number(cells[ct], where);
    r.theta_ref = deg_to_rad(parse_number(cells[cref], where));
    r.Kp_ref = parse_number(cells[cK], where);
    r.theta = deg_to_rad(parse_number(cells[cth], where));
    r.K_P = parse_number(cells[cKP], where);
    r.u1 = parse_number(cells[cu1], where);
    r.u2 = parse_number(cells[cu2], where);
    r.P1 = parse_number(cells[cP1], where);
    r.P2 = parse_number(cells[cP2], where);
    trace.rows.push_back(r);
  }
  if (trace.rows.size() >= 2) trace.Ts = trace.rows[1].t - trace.rows[0].t;
  return trace;
}

void write_timing_csv(const std::filesystem::path& path, const SimTrace& trace) {
  std::string out = "k,compute_time_s,overrun\n";
  for (const auto& r : trace.rows) {
    out += std::to_string(r.k) + ',' + g12(r.compute_time) + ',' + (r.compute_time > trace.Ts ? '1' : '0') + '\n';
  }
  write_text(path, out);
}

CompareReport compare_report(const std::vector<LabeledTrace>& traces, const std::vector<MetricWindow>& windows) {
  if (traces.empty()) throw HarnessError("compare_report: no traces");
  const auto& first = traces.front().trace;
  for (const auto& lt : traces) {
    if (std::abs(lt.trace.Ts - first.Ts) > 1e-12 || lt.trace.rows.size() != first.rows.size()) {
      throw HarnessError("compare_report: trace '" + lt.label + "' does not share Ts and length");
    }
    for (std::size_t k = 0; k < first.rows.size(); ++k) {
      if (lt.trace.rows[k].theta_ref != first.rows[k].theta_ref || lt.trace.rows[k].Kp_ref != first.rows[k].Kp_ref) {
        throw HarnessError("compare_report: trace '" + lt.label + "' follows a different reference profile");
      }
    }
  }

  CompareReport report;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SimTrace*>> by_label;
  for (const auto& lt : traces) {
    if (!by_label.contains(lt.label)) order.push_back(lt.label);
    by_label[lt.label].push_back(&lt.trace);
  }
  for (const auto& label : order) {
    LabelReport lr;
    lr.label = label;
    lr.runs = by_label[label].size();
    for (const auto& w : windows) {
      WindowScores ws;
      ws.window = w;
      std::vector<double> gt, gk;
      double worst_t = 100.0, worst_k = 100.0;
      for (const auto* tr : by_label[label]) {
        auto th = tr->column(&TraceRow::theta);
        auto thr = tr->column(&TraceRow::theta_ref);
        for (auto& v : th) v = rad_to_deg(v);
        for (auto& v : thr) v = rad_to_deg(v);
        const auto kp = tr->column(&TraceRow::K_P);
        const auto kr = tr->column(&TraceRow::Kp_ref);
        gt.push_back(l2_score(th, thr, w));
        gk.push_back(l2_score(kp, kr, w));
        const double rt = mean_ratio(th, thr, w);
        const double rk = mean_ratio(kp, kr, w);
        if (std::abs(rt - 100.0) > std::abs(worst_t - 100.0)) worst_t = rt;
        if (std::abs(rk - 100.0) > std::abs(worst_k - 100.0)) worst_k = rk;
      }
      ws.theta = stats_of(gt);
      ws.Kp = stats_of(gk);
      ws.worst_theta_ratio = worst_t;
      ws.worst_Kp_ratio = worst_k;
      lr.windows.push_back(ws);
    }
    report.labels.push_back(std::move(lr));
  }
  return report;
}

std::string CompareReport::text() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %-13s %4s %12s %12s %12s %12s %12s %12s %9s %9s\n", "label", "window", "runs",
                "g_theta_mean", "g_theta_min", "g_theta_max", "g_Kp_mean", "g_Kp_min", "g_Kp_max", "theta_%", "Kp_%");
  out += buf;
  for (const auto& l : labels) {
    for (const auto& w : l.windows) {
      const auto win = "[" + std::to_string(w.window.k0) + "," + std::to_string(w.window.k1) + "]";
      std::snprintf(buf, sizeof buf, "%-12s %-13s %4zu %12.6g %12.6g %12.6g %12.6g %12.6g %12.6g %9.3f %9.3f\n",
                    l.label.c_str(), win.c_str(), l.runs, w.theta.mean, w.theta.min, w.theta.max, w.Kp.mean, w.Kp.min,
                    w.Kp.max, w.worst_theta_ratio, w.worst_Kp_ratio);
      out += buf;
    }
  }
  return out;
}

std::string CompareReport::csv() const {
  std::string out =
      "label,k0,k1,runs,gamma_theta_mean,gamma_theta_min,gamma_theta_max,gamma_Kp_mean,gamma_Kp_min,gamma_Kp_max,"
      "worst_theta_ratio_pct,worst_Kp_ratio_pct\n";
  for (const auto& l : labels) {
    for (const auto& w : l.windows) {
      out += l.label + ',' + std::to_string(w.window.k0) + ',' + std::to_string(w.window.k1) + ',' +
             std::to_string(l.runs) + ',' + g12(w.theta.mean) + ',' + g12(w.theta.min) + ',' + g12(w.theta.max) + ',' +
             g12(w.Kp.mean) + ',' + g12(w.Kp.min) + ',' + g12(w.Kp.max) + ',' + g12(w.worst_theta_ratio) + ',' +
             g12(w.worst_Kp_ratio) + '\n';
    }
  }
  return out;
}

}  // namespace pamenc
