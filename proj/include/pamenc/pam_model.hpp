#pragma once

#include <array>
#include <cstddef>
#include <numbers>
#include <stdexcept>

#include "pamenc/key_values.hpp"

namespace pamenc {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kGravity = 9.81;
inline constexpr double kPressureMin = 200.0;  // kPa
inline constexpr double kPressureMax = 750.0;  // kPa
inline constexpr double kVoltageMin = 0.0;
inline constexpr double kVoltageMax = 10.0;
inline constexpr double kAngleLimitDeg = 25.0;

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline constexpr double kAngleLimit = deg_to_rad(kAngleLimitDeg);

enum class Muscle : std::size_t { first = 0, second = 1 };

// F = (p_a1 l + p_a2) P + (p_b1 l + p_b2), P in kPa, l in m.
struct MuscleForceCoeffs {
  double p_a1 = 0.0;
  double p_a2 = 0.0;
  double p_b1 = 0.0;
  double p_b2 = 0.0;
};

// Angle-dependent estimate: F^ = (p_ahat1 theta + p_ahat2) P + (p_bhat1 theta + p_bhat2).
struct MuscleEstimatorCoeffs {
  double p_ahat1 = 0.0;
  double p_ahat2 = 0.0;
  double p_bhat1 = 0.0;
  double p_bhat2 = 0.0;
};

struct PamParams {
  double r = 0.0;   // joint radius, m
  double L0 = 0.0;  // muscle length at the horizontal joint position, m
  std::array<MuscleForceCoeffs, 2> force{};
  std::array<MuscleEstimatorCoeffs, 2> estimator{};

  const MuscleForceCoeffs& force_of(Muscle m) const { return force[static_cast<std::size_t>(m)]; }
  const MuscleEstimatorCoeffs& estimator_of(Muscle m) const {
    return estimator[static_cast<std::size_t>(m)];
  }

  // Throws DomainError unless 0 < r < L0.
  void validate() const;
};

// Default actuator: the reference muscle-1 force model
// (pressure coefficients rescaled from Pa to kPa) used for both muscles, r = 37 mm,
// and estimator coefficients from project_estimator().
PamParams default_pam_params();

// The reference parameter table verbatim (including the muscle-2 p_a1 = 6.42e3 entry).
// Only meaningful for arithmetic checks; loaded from data/pam_table2.params.
PamParams table2_pam_params();

// Least-squares projection of the length-based force model onto the angle-linear
// estimator form over |theta| <= theta_max, using sin(theta) ~ kappa * theta.
MuscleEstimatorCoeffs project_estimator(const MuscleForceCoeffs& f, double r, double L0, Muscle m,
                                        double theta_max = kAngleLimit);

PamParams pam_params_from(const KeyValues& kv, PamParams base = default_pam_params());
KeyValues to_key_values(const PamParams& p);

struct MuscleLengths {
  double l1 = 0.0;
  double l2 = 0.0;
};

MuscleLengths pam_lengths(double theta, const PamParams& params);
double contraction_force(double length, double pressure, Muscle m, const PamParams& params);
double alpha(double pressure, Muscle m, const PamParams& params);
double joint_torque(double theta, double F1, double F2, const PamParams& params);
double joint_stiffness(double theta, double F1, double F2, double P1, double P2, const PamParams& params);
double estimate_force(double theta, double pressure, Muscle m, const PamParams& params);

// Stiffness computed from the plant's own force model at (theta, P1, P2).
double plant_stiffness(double theta, double P1, double P2, const PamParams& params);

struct PlantState {
  double theta = 0.0;      // rad
  double theta_dot = 0.0;  // rad/s
  double P1 = kPressureMin;
  double P2 = kPressureMin;
};

// Affine valve voltage -> commanded pressure map.
struct ValveMap {
  double offset = 200.0;  // kPa at 0 V
  double slope = 55.0;    // kPa per V
  double operator()(double u) const { return offset + slope * u; }
};

struct SurrogatePlantParams {
  double J = 5e-3;         // kg m^2
  double c_damp = 2.0;     // N m s / rad
  double valve_tau = 0.15; // s
  ValveMap valve{};
  double load_torque = 0.0;  // N m
  int substeps = 10;

  // Throws DomainError on J <= 0, valve_tau <= 0, substeps < 1, or a valve
  // map that does not send [0, 10] V monotonically into [200, 750] kPa.
  void validate() const;
};

SurrogatePlantParams default_plant_params();
SurrogatePlantParams plant_params_from(const KeyValues& kv, SurrogatePlantParams base = default_plant_params());
KeyValues to_key_values(const SurrogatePlantParams& p);

// Hanging mass on the joint radius.
double load_torque_for_mass(double mass_kg, const PamParams& params);

struct PlantStep {
  PlantState state;
  bool pressure_clamped = false;
  bool angle_clamped = false;
};

// One semi-implicit Euler step of length dt.
PlantStep plant_step(const PlantState& state, double u1, double u2, const SurrogatePlantParams& sp,
                     const PamParams& pp, double dt);

// Advances one control period Ts using sp.substeps plant_step calls.
PlantStep advance_plant(const PlantState& state, double u1, double u2, const SurrogatePlantParams& sp,
                        const PamParams& pp, double Ts);

}  // namespace pamenc
