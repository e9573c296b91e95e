#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pamenc/pam_model.hpp"
#include "test_util.hpp"

using namespace pamenc;

namespace {

PamParams table_params() { return table2_pam_params(); }

}  // namespace

TEST(PamLengths, HorizontalJointGivesRestLength) {
  auto p = default_pam_params();
  p.L0 = 0.170;
  const auto l = pam_lengths(0.0, p);
  EXPECT_DOUBLE_EQ(l.l1, 0.170);
  EXPECT_DOUBLE_EQ(l.l2, 0.170);
}

TEST(PamLengths, SumIsConserved) {
  const auto p = default_pam_params();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> th(-kAngleLimit, kAngleLimit);
  for (int i = 0; i < 100; ++i) {
    const auto l = pam_lengths(th(rng), p);
    EXPECT_NEAR(l.l1 + l.l2, 2.0 * p.L0, 1e-15);
  }
}

TEST(PamLengths, AtAngleLimit) {
  const auto l = pam_lengths(deg_to_rad(25.0), table_params());
  EXPECT_NEAR(l.l1, 0.15732, 5e-6);
  EXPECT_NEAR(l.l2, 0.18268, 5e-6);
  EXPECT_NEAR(l.l1, 0.170 - 0.030 * std::sin(deg_to_rad(25.0)), 1e-15);
}

TEST(PamLengths, NonPositiveLengthIsDomainError) {
  auto p = default_pam_params();
  p.r = 0.2;  // r > L0 is rejected by validate() but pam_lengths checks on its own
  EXPECT_THROW(pam_lengths(std::numbers::pi / 2, p), DomainError);
}

TEST(PamParams, ValidateGeometry) {
  auto p = default_pam_params();
  EXPECT_NO_THROW(p.validate());
  p.r = p.L0;
  EXPECT_THROW(p.validate(), DomainError);
  p.r = -0.01;
  EXPECT_THROW(p.validate(), DomainError);
}

TEST(ContractionForce, ZeroPressureLeavesElasticTerm) {
  const auto p = table_params();
  EXPECT_DOUBLE_EQ(contraction_force(0.16, 0.0, Muscle::first, p), -557.0 * 0.16 + 72.86);
}

TEST(ContractionForce, TableCoefficientsArithmetic) {
  const auto p = table_params();
  const double expected = (7.05e-3 * 0.170 - 1.02e-4) * 500.0 + (-557.0 * 0.170 + 72.86);
  EXPECT_NEAR(contraction_force(0.170, 500.0, Muscle::first, p), expected, 1e-12);
}

TEST(ContractionForce, AffineInPressure) {
  const auto p = default_pam_params();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> P(200, 750), l(0.15, 0.19);
  for (int i = 0; i < 50; ++i) {
    const double L = l(rng), a = P(rng), b = P(rng);
    const double lhs = contraction_force(L, a + b, Muscle::second, p) - contraction_force(L, b, Muscle::second, p);
    const double rhs = contraction_force(L, a, Muscle::second, p) - contraction_force(L, 0.0, Muscle::second, p);
    EXPECT_NEAR(lhs, rhs, 1e-9);
  }
}

TEST(Alpha, Values) {
  const auto p = table_params();
  EXPECT_DOUBLE_EQ(alpha(0.0, Muscle::first, p), 72.86);
  EXPECT_NEAR(alpha(500.0, Muscle::first, p), 72.809, 1e-12);
  EXPECT_NEAR(alpha(510.0, Muscle::first, p) - alpha(500.0, Muscle::first, p), -1.02e-4 * 10.0, 1e-12);
}

TEST(JointTorque, Values) {
  const auto p = table_params();
  EXPECT_EQ(joint_torque(0.3, 120.0, 120.0, p), 0.0);
  EXPECT_NEAR(joint_torque(std::numbers::pi / 2, 500.0, 100.0, p), 0.0, 1e-12);
  EXPECT_NEAR(joint_torque(0.1, 200.0, 100.0, p), 0.030 * std::cos(0.1) * 100.0, 1e-14);
}

TEST(JointStiffness, HorizontalJointReduces) {
  const auto p = default_pam_params();
  const double F1 = 300, F2 = 250, P1 = 500, P2 = 400;
  const double a1 = alpha(P1, Muscle::first, p), a2 = alpha(P2, Muscle::second, p);
  EXPECT_NEAR(joint_stiffness(0.0, F1, F2, P1, P2, p), p.r * p.r * ((F1 - a1) + (F2 - a2)) / p.L0, 1e-12);
  EXPECT_NEAR(joint_stiffness(0.0, a1, a2, P1, P2, p), 0.0, 1e-12);
}

TEST(JointStiffness, MatchesDirectEvaluation) {
  const auto p = default_pam_params();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(-kAngleLimit, kAngleLimit), F(0, 1000), P(200, 750);
  for (int i = 0; i < 200; ++i) {
    const double t = th(rng), F1 = F(rng), F2 = F(rng), P1 = P(rng), P2 = P(rng);
    const double l1 = p.L0 - p.r * std::sin(t), l2 = p.L0 + p.r * std::sin(t);
    const double a1 = p.force[0].p_a2 * P1 + p.force[0].p_b2;
    const double a2 = p.force[1].p_a2 * P2 + p.force[1].p_b2;
    const double oracle = p.r * std::sin(t) * (F1 - F2) +
                          p.r * p.r * std::cos(t) * std::cos(t) * ((F1 - a1) / l1 + (F2 - a2) / l2);
    EXPECT_REL_NEAR(joint_stiffness(t, F1, F2, P1, P2, p), oracle, 1e-12);
  }
}

TEST(JointStiffness, SymmetricUnderMuscleSwapAtZero) {
  const auto p = default_pam_params();  // both muscles share coefficients
  EXPECT_NEAR(joint_stiffness(0.0, 310, 220, 540, 410, p), joint_stiffness(0.0, 220, 310, 410, 540, p), 1e-12);
}

TEST(EstimateForce, Values) {
  const auto p = table_params();
  EXPECT_DOUBLE_EQ(estimate_force(0.0, 400.0, Muscle::first, p), 1.45e-4 * 400.0 - 19.01);
  const double expected = (-2.55e-4 * 0.1 + 1.45e-4) * 400.0 + (20.14 * 0.1 - 19.01);
  EXPECT_NEAR(estimate_force(0.1, 400.0, Muscle::first, p), expected, 1e-12);
  // Bilinear: second mixed difference in (theta, P) is constant.
  const auto d = [&](double t, double P) { return estimate_force(t, P, Muscle::second, p); };
  EXPECT_NEAR(d(0.2, 500) - d(0.2, 400) - d(0.1, 500) + d(0.1, 400),
              d(0.3, 600) - d(0.3, 500) - d(0.2, 600) + d(0.2, 500), 1e-9);
}

TEST(EstimateForce, ProjectionTracksLengthModel) {
  // The default estimator is a projection of the length-based model; it
  // should stay within a couple of percent over the working range.
  const auto p = default_pam_params();
  for (double deg : {-20.0, -10.0, 0.0, 10.0, 20.0}) {
    const double t = deg_to_rad(deg);
    const auto l = pam_lengths(t, p);
    for (double P : {300.0, 500.0, 700.0}) {
      const double exact = contraction_force(l.l1, P, Muscle::first, p);
      EXPECT_LE(std::abs(estimate_force(t, P, Muscle::first, p) - exact), 0.02 * std::abs(exact) + 1.0);
    }
  }
}

TEST(ParamsFile, RoundTripAndUnknownKeys) {
  const auto p = default_pam_params();
  const auto back = pam_params_from(KeyValues::parse(to_key_values(p).to_string()));
  EXPECT_EQ(back.r, p.r);
  EXPECT_EQ(back.force[1].p_b1, p.force[1].p_b1);
  EXPECT_EQ(back.estimator[0].p_ahat1, p.estimator[0].p_ahat1);
  EXPECT_THROW(pam_params_from(KeyValues::parse("r = 0.03\nradius = 2\n")), ParameterError);
  EXPECT_THROW(plant_params_from(KeyValues::parse("Jx = 1\n")), ParameterError);
}

TEST(ParamsFile, ShippedTableMatchesBuiltIn) {
  const auto file = pam_params_from(KeyValues::load(std::string(PAMENC_DATA_DIR) + "/pam_table2.params"));
  const auto built = table2_pam_params();
  EXPECT_EQ(file.r, built.r);
  EXPECT_EQ(file.force[1].p_a1, 6.42e3);
  EXPECT_EQ(file.estimator[1].p_bhat2, built.estimator[1].p_bhat2);
}

TEST(SurrogatePlant, ValidateRejectsBadConfigs) {
  auto sp = default_plant_params();
  EXPECT_NO_THROW(sp.validate());
  sp.J = 0.0;
  EXPECT_THROW(sp.validate(), DomainError);
  sp = default_plant_params();
  sp.valve.slope = 60.0;  // 10 V -> 800 kPa
  EXPECT_THROW(sp.validate(), DomainError);
  sp = default_plant_params();
  sp.valve_tau = 0.0;
  EXPECT_THROW(sp.validate(), DomainError);
}

TEST(SurrogatePlant, SymmetricBiasIsFixedPoint) {
  const auto pp = default_pam_params();
  const auto sp = default_plant_params();
  PlantState s{0.0, 0.0, sp.valve(5.5), sp.valve(5.5)};
  for (int k = 0; k < 100; ++k) s = advance_plant(s, 5.5, 5.5, sp, pp, 0.02).state;
  EXPECT_EQ(s.theta, 0.0);
  EXPECT_EQ(s.theta_dot, 0.0);
}

TEST(SurrogatePlant, SlowValveKeepsPressure) {
  const auto pp = default_pam_params();
  auto sp = default_plant_params();
  sp.valve_tau = 1e300;
  const PlantState s{0.05, 0.0, 400.0, 300.0};
  const auto n = plant_step(s, 10.0, 0.0, sp, pp, 0.002).state;
  EXPECT_DOUBLE_EQ(n.P1, 400.0);
  EXPECT_DOUBLE_EQ(n.P2, 300.0);
}

TEST(SurrogatePlant, MatchesHandRolledEuler) {
  const auto pp = default_pam_params();
  auto sp = default_plant_params();
  sp.load_torque = 0.3;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> th(-0.4, 0.4), w(-1, 1), P(200, 750), u(0, 10);
  for (int i = 0; i < 100; ++i) {
    const PlantState s{th(rng), w(rng), P(rng), P(rng)};
    const double u1 = u(rng), u2 = u(rng), dt = 0.002;
    const auto got = plant_step(s, u1, u2, sp, pp, dt).state;

    double P1 = s.P1 + dt / sp.valve_tau * (200.0 + 55.0 * u1 - s.P1);
    double P2 = s.P2 + dt / sp.valve_tau * (200.0 + 55.0 * u2 - s.P2);
    P1 = std::min(750.0, std::max(200.0, P1));
    P2 = std::min(750.0, std::max(200.0, P2));
    const double l1 = pp.L0 - pp.r * std::sin(s.theta), l2 = pp.L0 + pp.r * std::sin(s.theta);
    const auto& c = pp.force[0];
    const double F1 = (c.p_a1 * l1 + c.p_a2) * P1 + c.p_b1 * l1 + c.p_b2;
    const double F2 = (c.p_a1 * l2 + c.p_a2) * P2 + c.p_b1 * l2 + c.p_b2;
    const double acc = (pp.r * std::cos(s.theta) * (F1 - F2) - sp.c_damp * s.theta_dot - sp.load_torque) / sp.J;
    double wd = s.theta_dot + dt * acc;
    double t = s.theta + dt * wd;
    if (std::abs(t) > kAngleLimit) {
      t = std::copysign(kAngleLimit, t);
      wd = 0.0;
    }
    EXPECT_REL_NEAR(got.P1, P1, 1e-12);
    EXPECT_REL_NEAR(got.P2, P2, 1e-12);
    EXPECT_REL_NEAR(got.theta_dot, wd, 1e-12);
    EXPECT_REL_NEAR(got.theta, t, 1e-12);
  }
}

TEST(SurrogatePlant, ClampingInvariant) {
  const auto pp = default_pam_params();
  const auto sp = default_plant_params();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  PlantState s{};
  bool saw_angle_clamp = false;
  for (int k = 0; k < 3000; ++k) {
    const double u1 = k % 400 < 200 ? 10.0 : u(rng);
    const double u2 = k % 400 < 200 ? 0.0 : u(rng);
    const auto step = advance_plant(s, u1, u2, sp, pp, 0.02);
    s = step.state;
    saw_angle_clamp = saw_angle_clamp || step.angle_clamped;
    ASSERT_GE(s.P1, kPressureMin);
    ASSERT_LE(s.P1, kPressureMax);
    ASSERT_GE(s.P2, kPressureMin);
    ASSERT_LE(s.P2, kPressureMax);
    ASSERT_LE(std::abs(s.theta), kAngleLimit);
  }
  EXPECT_TRUE(saw_angle_clamp);
}

TEST(SurrogatePlant, PressureConvergesMonotonically) {
  const auto pp = default_pam_params();
  const auto sp = default_plant_params();
  PlantState s{0.0, 0.0, 250.0, 700.0};
  double prev1 = s.P1, prev2 = s.P2;
  for (int k = 0; k < 200; ++k) {
    s = advance_plant(s, 6.0, 6.0, sp, pp, 0.02).state;
    EXPECT_GE(s.P1, prev1);
    EXPECT_LE(s.P2, prev2);
    prev1 = s.P1;
    prev2 = s.P2;
  }
  EXPECT_NEAR(s.P1, sp.valve(6.0), 1e-6);
  EXPECT_NEAR(s.P2, sp.valve(6.0), 1e-6);
}

TEST(SurrogatePlant, LoadTorqueForMass) {
  const auto pp = default_pam_params();
  EXPECT_DOUBLE_EQ(load_torque_for_mass(1.5, pp), 1.5 * 9.81 * pp.r);
}
