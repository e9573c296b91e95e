#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pamenc/pam_model.hpp"

namespace pamenc {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input variables of the rational terms, in this order everywhere.
enum class Variable : std::size_t { theta = 0, Kref = 1, P1 = 2, P2 = 3 };
inline constexpr std::size_t kVariableCount = 4;
using Point = std::array<double, kVariableCount>;

struct Monomial {
  std::array<int, kVariableCount> exponent{};

  static Monomial one() { return {}; }
  // Text form "1", "theta", "theta^2*Kref", "theta*P1^2".
  static Monomial parse(std::string_view text);
  std::string name() const;
  double eval(const Point& x) const;
  bool is_constant() const;

  bool operator==(const Monomial&) const = default;
};

enum class Target : std::size_t { f1 = 0, f2 = 1, f3 = 2, f4 = 3, f5 = 4 };
inline constexpr std::size_t kTargetCount = 5;
std::string_view target_name(Target t);
Target parse_target(std::string_view name);
double target_value(Target t, const Point& x, const PamParams& params);

struct Axis {
  double lo = 0.0;
  double hi = 0.0;
  int points = 21;
};

struct SamplingBox {
  std::array<Axis, kVariableCount> axes{{
      {-kAngleLimit, kAngleLimit, 21},
      {4.0, 9.0, 21},
      {kPressureMin, kPressureMax, 21},
      {kPressureMin, kPressureMax, 21},
  }};

  static SamplingBox with_density(int points);
};

struct FeatureSpec {
  SamplingBox box{};
  std::array<std::vector<Monomial>, kTargetCount> candidates;
};

// Candidate monomials: the fixed approximation supports, plus theta*P1^2 for
// f3 so the pruning step has something to remove.
FeatureSpec default_feature_spec(int density = 21);

// Variables each target actually depends on.
std::vector<Variable> relevant_variables(Target t);

struct Dataset {
  std::vector<Point> inputs;
  std::vector<double> y;
};

// Tensor grid over the target's relevant axes; other axes sit at their midpoint.
// An axis with lo == hi contributes one point regardless of its density.
Dataset sample_grid(Target t, const SamplingBox& box, const PamParams& params);

struct LassoResult {
  std::vector<double> weights;
  double intercept = 0.0;
  long sweeps = 0;
  bool converged = false;
};

struct LassoOptions {
  double tolerance = 1e-10;
  long max_sweeps = 100000;
};

// Coordinate descent on (1/2n)|y - b - Xw|^2 + lambda |w|_1 with standardized
// columns and an unpenalized intercept. Columns are given column-major
// (X[j] is feature j). Zero-variance columns get weight 0.
LassoResult lasso_fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y, double lambda,
                      const LassoOptions& options = {});

struct Term {
  Monomial monomial;
  double value = 0.0;
};

struct DroppedTerm {
  Target target = Target::f1;
  Term term;
};

struct CoefficientTable {
  std::array<std::vector<Term>, kTargetCount> terms;

  double eval(Target t, const Point& x) const;
};

struct PruneResult {
  CoefficientTable table;
  std::vector<DroppedTerm> dropped;
};

// Removes non-constant terms with |w| < threshold * max|w| over the non-constant
// terms of the same target. Constant terms always survive.
PruneResult prune(const CoefficientTable& table, double threshold = 1e-3);

struct TargetFit {
  LassoResult lasso;
  std::size_t rows = 0;
};

struct FitOutcome {
  CoefficientTable table;
  std::vector<DroppedTerm> dropped;
  std::array<TargetFit, kTargetCount> fits;
};

inline constexpr double kDefaultLambda = 1e-3;
inline constexpr double kDefaultPruneThreshold = 1e-3;

// Fit every target, prune, then refit each target on its surviving terms.
FitOutcome fit_rational_terms(const FeatureSpec& spec, const PamParams& params, double lambda = kDefaultLambda,
                              double prune_threshold = kDefaultPruneThreshold);

// w1..w14 of the fixed supports:
//   f1 = w1 K + w2 theta^2 K + w3       f2 = w4 theta + w5 theta^2 + w6
//   f3 = w7 P1 + w8 theta P1 + w9        f4 = w10 P2 + w11 theta P2 + w12
//   f5 = w13 theta^2 + w14
struct PolyCoeffs {
  std::array<double, 14> w{};
  std::vector<std::string> pruned;

  double operator()(int i) const { return w.at(static_cast<std::size_t>(i - 1)); }
  double& operator()(int i) { return w.at(static_cast<std::size_t>(i - 1)); }
};

struct SupportSlot {
  int index;  // 1-based w index
  Target target;
  Monomial monomial;
};
const std::vector<SupportSlot>& support_slots();

// Throws FitError naming the missing w_i, or a surviving term outside the support.
PolyCoeffs to_poly_coeffs(const CoefficientTable& table);
CoefficientTable to_table(const PolyCoeffs& coeffs);

// Reference coefficients as printed, indexed by the supports above. The
// printed values were fitted with theta in degrees and a different term
// order for f2 and f5, so they are only fit for arithmetic checks.
PolyCoeffs table2_poly_coeffs();

double eval_fhat(int which, const PolyCoeffs& c, double theta, double Kp_ref, double P1, double P2);

// max |fhat - f| / max |f| over grid points strictly inside the box.
double approximation_error(Target t, const PolyCoeffs& c, const SamplingBox& box, const PamParams& params);

// CSV with header `target,monomial,value`.
void write_coefficients_csv(const std::filesystem::path& path, const CoefficientTable& table);
CoefficientTable read_coefficients_csv(const std::filesystem::path& path);
std::string coefficients_csv(const CoefficientTable& table);
CoefficientTable parse_coefficients_csv(std::string_view text, const std::string& origin = "<string>");

}  // namespace pamenc
