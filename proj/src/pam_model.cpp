#include "pamenc/pam_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pamenc {
namespace {

// Pressure coefficients of the reference force model assume Pa;
// everything here runs in kPa.
constexpr double kPaPerKPa = 1000.0;

constexpr MuscleForceCoeffs kTableMuscle1{7.05e-3, -1.02e-4, -5.57e2, 72.86};
constexpr MuscleForceCoeffs kTableMuscle2{6.42e3, -9.18e-4, -1.98e2, 15.75};
constexpr MuscleEstimatorCoeffs kTableEstimator1{-2.55e-4, 1.45e-4, 20.14, -19.01};
constexpr MuscleEstimatorCoeffs kTableEstimator2{2.18e-4, 1.45e-4, 1.35, -18.67};

double muscle_sign(Muscle m) { return m == Muscle::first ? -1.0 : 1.0; }

void check_lengths(const MuscleLengths& l) {
  if (!(l.l1 > 0.0) || !(l.l2 > 0.0)) {
    throw DomainError("muscle length is not positive (l1=" + std::to_string(l.l1) +
                      ", l2=" + std::to_string(l.l2) + ")");
  }
}

}  // namespace

void PamParams::validate() const {
  if (!(r > 0.0) || !(L0 > 0.0) || !(r < L0)) {
    throw DomainError("PAM geometry requires 0 < r < L0");
  }
}

MuscleEstimatorCoeffs project_estimator(const MuscleForceCoeffs& f, double r, double L0, Muscle m,
                                        double theta_max) {
  // argmin_k int_0^a (sin t - k t)^2 dt
  const double a = theta_max;
  const double kappa = 3.0 * (std::sin(a) - a * std::cos(a)) / (a * a * a);
  const double dl = muscle_sign(m) * r * kappa;  // l(theta) ~ L0 + dl * theta
  return MuscleEstimatorCoeffs{
      .p_ahat1 = f.p_a1 * dl,
      .p_ahat2 = f.p_a1 * L0 + f.p_a2,
      .p_bhat1 = f.p_b1 * dl,
      .p_bhat2 = f.p_b1 * L0 + f.p_b2,
  };
}

PamParams default_pam_params() {
  PamParams p;
  p.r = 0.037;
  p.L0 = 0.170;
  const MuscleForceCoeffs muscle{
      .p_a1 = kTableMuscle1.p_a1 * kPaPerKPa,
      .p_a2 = kTableMuscle1.p_a2 * kPaPerKPa,
      .p_b1 = kTableMuscle1.p_b1,
      .p_b2 = kTableMuscle1.p_b2,
  };
  p.force = {muscle, muscle};
  p.estimator = {project_estimator(muscle, p.r, p.L0, Muscle::first),
                 project_estimator(muscle, p.r, p.L0, Muscle::second)};
  return p;
}

PamParams table2_pam_params() {
  PamParams p;
  p.r = 0.030;
  p.L0 = 0.170;
  p.force = {kTableMuscle1, kTableMuscle2};
  p.estimator = {kTableEstimator1, kTableEstimator2};
  return p;
}

PamParams pam_params_from(const KeyValues& kv, PamParams base) {
  kv.reject_unknown({"r", "L0",
                     "muscle1.p_a1", "muscle1.p_a2", "muscle1.p_b1", "muscle1.p_b2",
                     "muscle2.p_a1", "muscle2.p_a2", "muscle2.p_b1", "muscle2.p_b2",
                     "muscle1.p_ahat1", "muscle1.p_ahat2", "muscle1.p_bhat1", "muscle1.p_bhat2",
                     "muscle2.p_ahat1", "muscle2.p_ahat2", "muscle2.p_bhat1", "muscle2.p_bhat2"});
  kv.maybe("r", base.r);
  kv.maybe("L0", base.L0);
  for (int i = 0; i < 2; ++i) {
    const std::string m = "muscle" + std::to_string(i + 1) + ".";
    auto& f = base.force[i];
    auto& e = base.estimator[i];
    kv.maybe(m + "p_a1", f.p_a1);
    kv.maybe(m + "p_a2", f.p_a2);
    kv.maybe(m + "p_b1", f.p_b1);
    kv.maybe(m + "p_b2", f.p_b2);
    kv.maybe(m + "p_ahat1", e.p_ahat1);
    kv.maybe(m + "p_ahat2", e.p_ahat2);
    kv.maybe(m + "p_bhat1", e.p_bhat1);
    kv.maybe(m + "p_bhat2", e.p_bhat2);
  }
  base.validate();
  return base;
}

KeyValues to_key_values(const PamParams& p) {
  KeyValues kv;
  kv.set("r", format_double(p.r));
  kv.set("L0", format_double(p.L0));
  for (int i = 0; i < 2; ++i) {
    const std::string m = "muscle" + std::to_string(i + 1) + ".";
    kv.set(m + "p_a1", format_double(p.force[i].p_a1));
    kv.set(m + "p_a2", format_double(p.force[i].p_a2));
    kv.set(m + "p_b1", format_double(p.force[i].p_b1));
    kv.set(m + "p_b2", format_double(p.force[i].p_b2));
    kv.set(m + "p_ahat1", format_double(p.estimator[i].p_ahat1));
    kv.set(m + "p_ahat2", format_double(p.estimator[i].p_ahat2));
    kv.set(m + "p_bhat1", format_double(p.estimator[i].p_bhat1));
    kv.set(m + "p_bhat2", format_double(p.estimator[i].p_bhat2));
  }
  return kv;
}

MuscleLengths pam_lengths(double theta, const PamParams& params) {
  const double dl = params.r * std::sin(theta);
  const MuscleLengths l{params.L0 - dl, params.L0 + dl};
  check_lengths(l);
  return l;
}

double contraction_force(double length, double pressure, Muscle m, const PamParams& params) {
  const auto& c = params.force_of(m);
  return (c.p_a1 * length + c.p_a2) * pressure + (c.p_b1 * length + c.p_b2);
}

double alpha(double pressure, Muscle m, const PamParams& params) {
  const auto& c = params.force_of(m);
  return c.p_a2 * pressure + c.p_b2;
}

double joint_torque(double theta, double F1, double F2, const PamParams& params) {
  return params.r * std::cos(theta) * (F1 - F2);
}

double joint_stiffness(double theta, double F1, double F2, double P1, double P2, const PamParams& params) {
  const auto l = pam_lengths(theta, params);
  const double r = params.r;
  const double c = std::cos(theta);
  const double a1 = alpha(P1, Muscle::first, params);
  const double a2 = alpha(P2, Muscle::second, params);
  return r * std::sin(theta) * (F1 - F2) + r * r * c * c * ((F1 - a1) / l.l1 + (F2 - a2) / l.l2);
}

double estimate_force(double theta, double pressure, Muscle m, const PamParams& params) {
  const auto& e = params.estimator_of(m);
  return (e.p_ahat1 * theta + e.p_ahat2) * pressure + (e.p_bhat1 * theta + e.p_bhat2);
}

double plant_stiffness(double theta, double P1, double P2, const PamParams& params) {
  const auto l = pam_lengths(theta, params);
  const double F1 = contraction_force(l.l1, P1, Muscle::first, params);
  const double F2 = contraction_force(l.l2, P2, Muscle::second, params);
  return joint_stiffness(theta, F1, F2, P1, P2, params);
}

void SurrogatePlantParams::validate() const {
  if (!(J > 0.0)) throw DomainError("surrogate plant requires J > 0");
  if (!(valve_tau > 0.0)) throw DomainError("surrogate plant requires valve_tau > 0");
  if (substeps < 1) throw DomainError("surrogate plant requires substeps >= 1");
  if (!(c_damp >= 0.0)) throw DomainError("surrogate plant requires c_damp >= 0");
  const double lo = valve(kVoltageMin);
  const double hi = valve(kVoltageMax);
  if (!(valve.slope > 0.0) || lo < kPressureMin || hi > kPressureMax) {
    throw DomainError("valve map must send [0,10] V monotonically into [200,750] kPa");
  }
}

SurrogatePlantParams default_plant_params() { return SurrogatePlantParams{}; }

SurrogatePlantParams plant_params_from(const KeyValues& kv, SurrogatePlantParams base) {
  kv.reject_unknown({"J", "c_damp", "valve_tau", "valve_offset", "valve_slope", "load_torque", "substeps"});
  kv.maybe("J", base.J);
  kv.maybe("c_damp", base.c_damp);
  kv.maybe("valve_tau", base.valve_tau);
  kv.maybe("valve_offset", base.valve.offset);
  kv.maybe("valve_slope", base.valve.slope);
  kv.maybe("load_torque", base.load_torque);
  kv.maybe("substeps", base.substeps);
  base.validate();
  return base;
}

KeyValues to_key_values(const SurrogatePlantParams& p) {
  KeyValues kv;
  kv.set("J", format_double(p.J));
  kv.set("c_damp", format_double(p.c_damp));
  kv.set("valve_tau", format_double(p.valve_tau));
  kv.set("valve_offset", format_double(p.valve.offset));
  kv.set("valve_slope", format_double(p.valve.slope));
  kv.set("load_torque", format_double(p.load_torque));
  kv.set("substeps", std::to_string(p.substeps));
  return kv;
}

double load_torque_for_mass(double mass_kg, const PamParams& params) { return mass_kg * kGravity * params.r; }

PlantStep plant_step(const PlantState& state, double u1, double u2, const SurrogatePlantParams& sp,
                     const PamParams& pp, double dt) {
  PlantStep out;
  PlantState next = state;

  const auto relax = [&](double P, double u) {
    const double raw = P + dt / sp.valve_tau * (sp.valve(u) - P);
    const double clamped = std::clamp(raw, kPressureMin, kPressureMax);
    out.pressure_clamped = out.pressure_clamped || clamped != raw;
    return clamped;
  };
  next.P1 = relax(state.P1, u1);
  next.P2 = relax(state.P2, u2);

  const auto l = pam_lengths(state.theta, pp);
  const double F1 = contraction_force(l.l1, next.P1, Muscle::first, pp);
  const double F2 = contraction_force(l.l2, next.P2, Muscle::second, pp);
  const double tau = joint_torque(state.theta, F1, F2, pp);
  const double accel = (tau - sp.c_damp * state.theta_dot - sp.load_torque) / sp.J;

  next.theta_dot = state.theta_dot + dt * accel;
  next.theta = state.theta + dt * next.theta_dot;
  if (std::abs(next.theta) > kAngleLimit) {
    next.theta = std::copysign(kAngleLimit, next.theta);
    next.theta_dot = 0.0;
    out.angle_clamped = true;
  }
  out.state = next;
  return out;
}

PlantStep advance_plant(const PlantState& state, double u1, double u2, const SurrogatePlantParams& sp,
                        const PamParams& pp, double Ts) {
  PlantStep acc{state, false, false};
  const double dt = Ts / sp.substeps;
  for (int i = 0; i < sp.substeps; ++i) {
    const auto s = plant_step(acc.state, u1, u2, sp, pp, dt);
    acc.state = s.state;
    acc.pressure_clamped = acc.pressure_clamped || s.pressure_clamped;
    acc.angle_clamped = acc.angle_clamped || s.angle_clamped;
  }
  return acc;
}

}  // namespace pamenc
