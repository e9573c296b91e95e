#pragma once

#include <array>

#include "pamenc/key_values.hpp"
#include "pamenc/pam_model.hpp"

namespace pamenc {

// Angle gains act on radians internally. Published presets quote them per
// degree; gains_from() converts when `angle_gain_unit = deg`.
struct Gains {
  double Gp_theta = 0.0;  // N m / rad
  double Gi_theta = 0.0;  // N m / (rad s)
  double Gp_F = 0.0;      // V / N
  double Gi_F = 0.0;      // V / (N s)
  double beta1 = 5.0;     // V
  double beta2 = 5.0;     // V
  double Ts = 0.02;       // s
  bool anti_windup = false;

  void validate() const;
};

// Published gain sets, angle gains converted from per-degree to per-radian.
Gains gains_sim();
Gains gains_table2();

Gains gains_from(const KeyValues& kv, Gains base = gains_table2());
KeyValues to_key_values(const Gains& g);

struct ControllerState {
  double x_theta = 0.0;
  double x_F1 = 0.0;
  double x_F2 = 0.0;

  bool operator==(const ControllerState&) const = default;
};

struct ControllerInput {
  double P1 = 0.0;         // kPa
  double P2 = 0.0;         // kPa
  double theta = 0.0;      // rad
  double theta_ref = 0.0;  // rad
  double Kp_ref = 0.0;     // N m / rad
};

struct ControllerOutput {
  ControllerState next;
  std::array<double, 2> u_raw{};
  std::array<double, 2> u{};
  std::array<bool, 2> clamped{};
};

struct AngleStep {
  double x_next = 0.0;
  double tau_c = 0.0;
};

struct ForceStep {
  double x_next = 0.0;
  double u = 0.0;
};

struct ForcePair {
  double F1 = 0.0;
  double F2 = 0.0;
};

struct RationalTerms {
  double f1 = 0.0;
  double f2 = 0.0;
  double f3 = 0.0;
  double f4 = 0.0;
  double f5 = 0.0;
};

AngleStep pi_angle_step(double x_theta, double e_theta, const Gains& gains);

// Force references realising torque tau_c and stiffness Kp_ref at theta.
ForcePair reference_forces(double theta, double tau_c, double Kp_ref, double P1, double P2,
                           const PamParams& params);

ForceStep pi_force_step(double x_F, double e_F, double beta, const Gains& gains);

// F1_ref = f1 + f2 tau_c + f3 + f4 and F2_ref = F1_ref + f5 tau_c.
RationalTerms rational_terms(double theta, double P1, double P2, double Kp_ref, const PamParams& params);

// x+ = A x + g, u = C x + h, all coefficients evaluated at the current input.
struct StateSpaceTerms {
  std::array<std::array<double, 3>, 3> A{};
  std::array<std::array<double, 3>, 2> C{};
  std::array<double, 3> g{};
  std::array<double, 2> h{};
};

StateSpaceTerms original_state_space(const ControllerInput& zin, const Gains& gains, const PamParams& params);

// Angle PI -> reference forces -> force estimate -> force PIs, then clamp.
ControllerOutput original_step(const ControllerState& state, const ControllerInput& zin, const Gains& gains,
                               const PamParams& params);

// Same step evaluated through original_state_space().
ControllerOutput original_step_state_space(const ControllerState& state, const ControllerInput& zin,
                                           const Gains& gains, const PamParams& params);

// Clamps u_raw to the valve range and, with anti_windup set, holds any force
// integrator that would push a saturated output further out of range.
ControllerOutput finish_step(const ControllerState& prev, ControllerState next, std::array<double, 2> u_raw,
                             const Gains& gains);

}  // namespace pamenc
