#include "pamenc/controller_original.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pamenc {
namespace {

constexpr double kPerDegree = 180.0 / std::numbers::pi;

Gains published(double gp_deg, double gi_deg, double gp_f, double gi_f) {
  Gains g;
  g.Gp_theta = gp_deg * kPerDegree;
  g.Gi_theta = gi_deg * kPerDegree;
  g.Gp_F = gp_f;
  g.Gi_F = gi_f;
  return g;
}

double checked_cos(double theta) {
  const double c = std::cos(theta);
  if (std::abs(c) < 1e-9) throw DomainError("joint angle too close to +-pi/2");
  return c;
}

}  // namespace

void Gains::validate() const {
  if (!(Ts > 0.0) || !std::isfinite(Ts)) throw ParameterError("gains: Ts must be positive");
  for (double v : {Gp_theta, Gi_theta, Gp_F, Gi_F, beta1, beta2}) {
    if (!std::isfinite(v)) throw ParameterError("gains: all gains must be finite");
  }
}

Gains gains_sim() { return published(0.25, 0.13, 0.088, 0.08); }
Gains gains_table2() { return published(1.3, 0.243, 0.088, 0.025); }

Gains gains_from(const KeyValues& kv, Gains base) {
  kv.reject_unknown({"Gp_theta", "Gi_theta", "Gp_F", "Gi_F", "beta1", "beta2", "Ts", "anti_windup",
                     "angle_gain_unit"});
  double scale = 1.0;
  if (kv.contains("angle_gain_unit")) {
    const auto& unit = kv.raw("angle_gain_unit");
    if (unit == "deg") {
      scale = kPerDegree;
    } else if (unit != "rad") {
      throw ParameterError(kv.origin() + ": angle_gain_unit must be deg or rad");
    }
  }
  if (kv.contains("Gp_theta")) base.Gp_theta = kv.number("Gp_theta") * scale;
  if (kv.contains("Gi_theta")) base.Gi_theta = kv.number("Gi_theta") * scale;
  kv.maybe("Gp_F", base.Gp_F);
  kv.maybe("Gi_F", base.Gi_F);
  kv.maybe("beta1", base.beta1);
  kv.maybe("beta2", base.beta2);
  kv.maybe("Ts", base.Ts);
  kv.maybe("anti_windup", base.anti_windup);
  base.validate();
  return base;
}

KeyValues to_key_values(const Gains& g) {
  KeyValues kv;
  kv.set("angle_gain_unit", "rad");
  kv.set("Gp_theta", format_double(g.Gp_theta));
  kv.set("Gi_theta", format_double(g.Gi_theta));
  kv.set("Gp_F", format_double(g.Gp_F));
  kv.set("Gi_F", format_double(g.Gi_F));
  kv.set("beta1", format_double(g.beta1));
  kv.set("beta2", format_double(g.beta2));
  kv.set("Ts", format_double(g.Ts));
  kv.set("anti_windup", g.anti_windup ? "true" : "false");
  return kv;
}

AngleStep pi_angle_step(double x_theta, double e_theta, const Gains& gains) {
  return {x_theta + gains.Ts * e_theta, gains.Gi_theta * x_theta + gains.Gp_theta * e_theta};
}

ForcePair reference_forces(double theta, double tau_c, double Kp_ref, double P1, double P2,
                           const PamParams& params) {
  const double c = checked_cos(theta);
  const auto l = pam_lengths(theta, params);
  const double r = params.r;
  const double sum = l.l1 + l.l2;
  const double a1 = alpha(P1, Muscle::first, params);
  const double a2 = alpha(P2, Muscle::second, params);
  const double F1 = l.l1 * l.l2 / (sum * r * r * c * c) * (Kp_ref + (r * c / l.l2 - std::tan(theta)) * tau_c) +
                    (a1 * l.l2 + a2 * l.l1) / sum;
  return {F1, F1 - tau_c / (r * c)};
}

ForceStep pi_force_step(double x_F, double e_F, double beta, const Gains& gains) {
  return {x_F + gains.Ts * e_F, gains.Gi_F * x_F + gains.Gp_F * e_F + beta};
}

RationalTerms rational_terms(double theta, double P1, double P2, double Kp_ref, const PamParams& params) {
  const double c = checked_cos(theta);
  const auto l = pam_lengths(theta, params);
  const double r = params.r;
  const double sum = l.l1 + l.l2;
  const double common = l.l1 * l.l2 / (r * r * sum * c * c);
  return {
      .f1 = common * Kp_ref,
      .f2 = common * (r * c / l.l2 - std::tan(theta)),
      .f3 = alpha(P1, Muscle::first, params) * l.l2 / sum,
      .f4 = alpha(P2, Muscle::second, params) * l.l1 / sum,
      .f5 = -1.0 / (r * c),
  };
}

StateSpaceTerms original_state_space(const ControllerInput& zin, const Gains& gains, const PamParams& params) {
  const auto f = rational_terms(zin.theta, zin.P1, zin.P2, zin.Kp_ref, params);
  const double e = zin.theta_ref - zin.theta;
  const double Fhat1 = estimate_force(zin.theta, zin.P1, Muscle::first, params);
  const double Fhat2 = estimate_force(zin.theta, zin.P2, Muscle::second, params);
  const double base = f.f1 + f.f3 + f.f4;
  const double h1 = base + gains.Gp_theta * f.f2 * e - Fhat1;
  const double h2 = base + gains.Gp_theta * (f.f2 + f.f5) * e - Fhat2;
  const double Ts = gains.Ts;

  StateSpaceTerms s;
  s.A = {{{1.0, 0.0, 0.0},
          {Ts * gains.Gi_theta * f.f2, 1.0, 0.0},
          {Ts * gains.Gi_theta * (f.f2 + f.f5), 0.0, 1.0}}};
  s.C = {{{gains.Gp_F * gains.Gi_theta * f.f2, gains.Gi_F, 0.0},
          {gains.Gp_F * gains.Gi_theta * (f.f2 + f.f5), 0.0, gains.Gi_F}}};
  s.g = {Ts * e, Ts * h1, Ts * h2};
  s.h = {gains.Gp_F * h1 + gains.beta1, gains.Gp_F * h2 + gains.beta2};
  return s;
}

ControllerOutput finish_step(const ControllerState& prev, ControllerState next, std::array<double, 2> u_raw,
                             const Gains& gains) {
  ControllerOutput out;
  out.u_raw = u_raw;
  if (gains.anti_windup) {
    // Hold an integrator whose update would push its saturated output further out.
    const auto hold = [&](double u, double x_prev, double& x_next) {
      const double push = gains.Gi_F * (x_next - x_prev);
      if ((u > kVoltageMax && push > 0) || (u < kVoltageMin && push < 0)) x_next = x_prev;
    };
    hold(u_raw[0], prev.x_F1, next.x_F1);
    hold(u_raw[1], prev.x_F2, next.x_F2);
  }
  out.next = next;
  for (std::size_t i = 0; i < 2; ++i) {
    out.u[i] = std::clamp(u_raw[i], kVoltageMin, kVoltageMax);
    out.clamped[i] = out.u[i] != u_raw[i];
  }
  return out;
}

ControllerOutput original_step(const ControllerState& state, const ControllerInput& zin, const Gains& gains,
                               const PamParams& params) {
  const double e = zin.theta_ref - zin.theta;
  const auto angle = pi_angle_step(state.x_theta, e, gains);
  const auto ref = reference_forces(zin.theta, angle.tau_c, zin.Kp_ref, zin.P1, zin.P2, params);
  const double e1 = ref.F1 - estimate_force(zin.theta, zin.P1, Muscle::first, params);
  const double e2 = ref.F2 - estimate_force(zin.theta, zin.P2, Muscle::second, params);
  const auto m1 = pi_force_step(state.x_F1, e1, gains.beta1, gains);
  const auto m2 = pi_force_step(state.x_F2, e2, gains.beta2, gains);
  return finish_step(state, {angle.x_next, m1.x_next, m2.x_next}, {m1.u, m2.u}, gains);
}

ControllerOutput original_step_state_space(const ControllerState& state, const ControllerInput& zin,
                                           const Gains& gains, const PamParams& params) {
  const auto s = original_state_space(zin, gains, params);
  const std::array<double, 3> x{state.x_theta, state.x_F1, state.x_F2};
  std::array<double, 3> xn{};
  for (std::size_t i = 0; i < 3; ++i) {
    xn[i] = s.g[i];
    for (std::size_t j = 0; j < 3; ++j) xn[i] += s.A[i][j] * x[j];
  }
  std::array<double, 2> u{};
  for (std::size_t i = 0; i < 2; ++i) {
    u[i] = s.h[i];
    for (std::size_t j = 0; j < 3; ++j) u[i] += s.C[i][j] * x[j];
  }
  return finish_step(state, {xn[0], xn[1], xn[2]}, u, gains);
}

}  // namespace pamenc
